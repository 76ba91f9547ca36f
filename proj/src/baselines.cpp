#include "pcmar/baselines.hpp"

namespace pcmar {

InterpolationResult linear_interp_inpaint_detailed(const Tensor& sino, const Tensor& mask, Exec exec) {
  if (sino.ndim() != 2 || mask.shape() != sino.shape()) {
    throw ShapeError("linear_interp_inpaint: sinogram " + shape_str(sino.shape()) + " and mask " + shape_str(mask.shape()) +
                     " must be matching 2D tensors");
  }
  require_binary_mask(mask, "linear_interp_inpaint");
  const auto rows = sino.dim(0), cols = sino.dim(1);
  for (std::size_t r = 0; r < rows; ++r) {
    bool any = false;
    for (std::size_t c = 0; c < cols && !any; ++c) any = mask.at(r, c) != 0.0f;
    if (!any) throw ValueError("linear_interp_inpaint: angle " + std::to_string(r) + " has no valid detector");
  }

  InterpolationResult result{sino, {}};
  std::vector<std::vector<HoleInterval>> per_row(rows);
  const auto n_rows = static_cast<std::ptrdiff_t>(rows);
#pragma omp parallel for schedule(static) if (exec == Exec::parallel)
  for (std::ptrdiff_t ri = 0; ri < n_rows; ++ri) {
    const auto r = static_cast<std::size_t>(ri);
    std::size_t c = 0;
    while (c < cols) {
      if (mask.at(r, c) != 0.0f) {
        ++c;
        continue;
      }
      const std::size_t begin = c;
      while (c < cols && mask.at(r, c) == 0.0f) ++c;
      const std::size_t end = c;
      per_row[r].push_back({r, begin, end});
      if (begin == 0) {
        const float v = sino.at(r, end);
        for (std::size_t k = begin; k < end; ++k) result.inpainted.at(r, k) = v;
      } else if (end == cols) {
        const float v = sino.at(r, begin - 1);
        for (std::size_t k = begin; k < end; ++k) result.inpainted.at(r, k) = v;
      } else {
        const double left = sino.at(r, begin - 1), right = sino.at(r, end);
        const double span = static_cast<double>(end - begin + 1);
        for (std::size_t k = begin; k < end; ++k) {
          const double t = static_cast<double>(k - begin + 1) / span;
          result.inpainted.at(r, k) = static_cast<float>(left + t * (right - left));
        }
      }
    }
  }
  for (auto& row : per_row) result.holes.insert(result.holes.end(), row.begin(), row.end());
  return result;
}

UNetSpec conventional_spec(UNetSpec spec) {
  spec.variant = UNetVariant::conventional;
  return spec;
}

}  // namespace pcmar
