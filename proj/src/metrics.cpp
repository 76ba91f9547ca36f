#include "pcmar/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace pcmar {

double rmse(const Tensor& a, const Tensor& b, const Tensor* include) {
  if (a.shape() != b.shape()) throw ShapeError("rmse: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  if (include && include->shape() != a.shape()) throw ShapeError("rmse: include mask shape mismatch");
  double acc = 0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (include && (*include)[i] == 0.0f) continue;
    const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    acc += d * d;
    ++n;
  }
  return n ? std::sqrt(acc / static_cast<double>(n)) : 0.0;
}

double ssim(const Tensor& a, const Tensor& b, double dynamic_range, const Tensor* include) {
  if (a.ndim() != 2 || a.shape() != b.shape()) throw ShapeError("ssim expects matching 2D images");
  if (include && include->shape() != a.shape()) throw ShapeError("ssim: include mask shape mismatch");
  if (!(dynamic_range > 0)) throw ValueError("ssim: dynamic range must be positive");
  const std::size_t H = a.dim(0), W = a.dim(1), r = kSsimWindow / 2;
  if (H < kSsimWindow || W < kSsimWindow) throw ShapeError("ssim: image smaller than the window");
  const double c1 = std::pow(0.01 * dynamic_range, 2), c2 = std::pow(0.03 * dynamic_range, 2);
  const double np = static_cast<double>(kSsimWindow * kSsimWindow);
  double total = 0;
  std::size_t count = 0;
  for (std::size_t y = r; y + r < H; ++y)
    for (std::size_t x = r; x + r < W; ++x) {
      if (include && include->at(y, x) == 0.0f) continue;
      double sa = 0, sb = 0, saa = 0, sbb = 0, sab = 0;
      for (std::size_t dy = 0; dy < kSsimWindow; ++dy)
        for (std::size_t dx = 0; dx < kSsimWindow; ++dx) {
          const double va = a.at(y + dy - r, x + dx - r), vb = b.at(y + dy - r, x + dx - r);
          sa += va;
          sb += vb;
          saa += va * va;
          sbb += vb * vb;
          sab += va * vb;
        }
      const double ma = sa / np, mb = sb / np;
      const double va = saa / np - ma * ma, vb = sbb / np - mb * mb;
      const double cov = sab / np - ma * mb;
      total += ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
      ++count;
    }
  return count ? total / static_cast<double>(count) : 1.0;
}

double mean(const std::vector<double>& v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const auto n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace pcmar
