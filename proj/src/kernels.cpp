#include "pcmar/kernels.hpp"

#include <algorithm>
#include <vector>

namespace pcmar {

ConvGeometry conv_geometry(const Shape& x, const Shape& w, std::size_t stride, std::size_t pad) {
  if (x.size() != 4) throw ShapeError("conv2d input must be [N,C,H,W], got " + shape_str(x));
  if (w.size() != 4) throw ShapeError("conv2d weight must be [F,C,k,k], got " + shape_str(w));
  if (w[1] != x[1]) {
    throw ShapeError("conv2d channel mismatch: input C=" + std::to_string(x[1]) + ", weight C=" + std::to_string(w[1]));
  }
  if (w[2] != w[3]) throw ShapeError("conv2d kernel must be square, got " + shape_str(w));
  if (w[2] % 2 == 0) throw ShapeError("conv2d kernel size must be odd, got k=" + std::to_string(w[2]));
  if (stride < 1) throw ShapeError("conv2d stride must be >= 1");
  ConvGeometry g;
  g.batch = x[0];
  g.in_channels = x[1];
  g.height = x[2];
  g.width = x[3];
  g.filters = w[0];
  g.kernel = w[2];
  g.stride = stride;
  g.pad = pad;
  if (g.height + 2 * pad < g.kernel) throw ShapeError("conv2d height H=" + std::to_string(g.height) + " too small for kernel");
  if (g.width + 2 * pad < g.kernel) throw ShapeError("conv2d width W=" + std::to_string(g.width) + " too small for kernel");
  g.out_height = (g.height + 2 * pad - g.kernel) / stride + 1;
  g.out_width = (g.width + 2 * pad - g.kernel) / stride + 1;
  return g;
}

namespace kernels {

namespace reference {

template <typename T>
void conv2d_forward(const ConvGeometry& g, const T* x, const T* w, const T* bias, T* out) {
  const auto k = g.kernel;
  for (std::size_t n = 0; n < g.batch; ++n)
    for (std::size_t f = 0; f < g.filters; ++f)
      for (std::size_t oy = 0; oy < g.out_height; ++oy)
        for (std::size_t ox = 0; ox < g.out_width; ++ox) {
          T acc = 0;
          for (std::size_t c = 0; c < g.in_channels; ++c)
            for (std::size_t ky = 0; ky < k; ++ky)
              for (std::size_t kx = 0; kx < k; ++kx) {
                const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) - static_cast<std::ptrdiff_t>(g.pad);
                const auto ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) - static_cast<std::ptrdiff_t>(g.pad);
                if (iy < 0 || ix < 0 || iy >= static_cast<std::ptrdiff_t>(g.height) ||
                    ix >= static_cast<std::ptrdiff_t>(g.width))
                  continue;
                acc += w[((f * g.in_channels + c) * k + ky) * k + kx] *
                       x[((n * g.in_channels + c) * g.height + iy) * g.width + ix];
              }
          if (bias) acc += bias[f];
          out[((n * g.filters + f) * g.out_height + oy) * g.out_width + ox] = acc;
        }
}

template <typename T>
void conv2d_backward_input(const ConvGeometry& g, const T* dout, const T* w, T* dx) {
  const auto k = g.kernel;
  std::fill(dx, dx + g.batch * g.in_channels * g.in_pixels(), T{0});
  for (std::size_t n = 0; n < g.batch; ++n)
    for (std::size_t f = 0; f < g.filters; ++f)
      for (std::size_t oy = 0; oy < g.out_height; ++oy)
        for (std::size_t ox = 0; ox < g.out_width; ++ox) {
          const T d = dout[((n * g.filters + f) * g.out_height + oy) * g.out_width + ox];
          for (std::size_t c = 0; c < g.in_channels; ++c)
            for (std::size_t ky = 0; ky < k; ++ky)
              for (std::size_t kx = 0; kx < k; ++kx) {
                const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) - static_cast<std::ptrdiff_t>(g.pad);
                const auto ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) - static_cast<std::ptrdiff_t>(g.pad);
                if (iy < 0 || ix < 0 || iy >= static_cast<std::ptrdiff_t>(g.height) ||
                    ix >= static_cast<std::ptrdiff_t>(g.width))
                  continue;
                dx[((n * g.in_channels + c) * g.height + iy) * g.width + ix] +=
                    d * w[((f * g.in_channels + c) * k + ky) * k + kx];
              }
        }
}

template <typename T>
void conv2d_backward_weight(const ConvGeometry& g, const T* dout, const T* x, T* dw) {
  const auto k = g.kernel;
  std::fill(dw, dw + g.filters * g.col_rows(), T{0});
  for (std::size_t n = 0; n < g.batch; ++n)
    for (std::size_t f = 0; f < g.filters; ++f)
      for (std::size_t oy = 0; oy < g.out_height; ++oy)
        for (std::size_t ox = 0; ox < g.out_width; ++ox) {
          const T d = dout[((n * g.filters + f) * g.out_height + oy) * g.out_width + ox];
          for (std::size_t c = 0; c < g.in_channels; ++c)
            for (std::size_t ky = 0; ky < k; ++ky)
              for (std::size_t kx = 0; kx < k; ++kx) {
                const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) - static_cast<std::ptrdiff_t>(g.pad);
                const auto ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) - static_cast<std::ptrdiff_t>(g.pad);
                if (iy < 0 || ix < 0 || iy >= static_cast<std::ptrdiff_t>(g.height) ||
                    ix >= static_cast<std::ptrdiff_t>(g.width))
                  continue;
                dw[((f * g.in_channels + c) * k + ky) * k + kx] +=
                    d * x[((n * g.in_channels + c) * g.height + iy) * g.width + ix];
              }
        }
}

template <typename T>
void conv2d_backward_bias(const ConvGeometry& g, const T* dout, T* db) {
  std::fill(db, db + g.filters, T{0});
  for (std::size_t n = 0; n < g.batch; ++n)
    for (std::size_t f = 0; f < g.filters; ++f)
      for (std::size_t p = 0; p < g.out_pixels(); ++p) db[f] += dout[(n * g.filters + f) * g.out_pixels() + p];
}

}  // namespace reference

namespace parallel {

template <typename T>
void im2col(const ConvGeometry& g, const T* image, T* col) {
  const auto k = g.kernel;
  const auto rows = g.col_rows();
  const auto ow = g.out_width;
#pragma omp parallel for schedule(static) if (rows * g.out_pixels() > 32768)
  for (std::size_t r = 0; r < rows; ++r) {
    const auto c = r / (k * k);
    const auto ky = (r / k) % k;
    const auto kx = r % k;
    T* dst = col + r * g.out_pixels();
    const T* src = image + c * g.in_pixels();
    for (std::size_t oy = 0; oy < g.out_height; ++oy) {
      const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) - static_cast<std::ptrdiff_t>(g.pad);
      T* d = dst + oy * ow;
      if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.height)) {
        std::fill(d, d + ow, T{0});
        continue;
      }
      const T* s = src + static_cast<std::size_t>(iy) * g.width;
      for (std::size_t ox = 0; ox < ow; ++ox) {
        const auto ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) - static_cast<std::ptrdiff_t>(g.pad);
        d[ox] = (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.width)) ? T{0} : s[ix];
      }
    }
  }
}

template <typename T>
void col2im(const ConvGeometry& g, const T* col, T* image) {
  const auto k = g.kernel;
  const auto ow = g.out_width;
#pragma omp parallel for schedule(static) if (g.in_channels > 1)
  for (std::size_t c = 0; c < g.in_channels; ++c) {
    T* dst = image + c * g.in_pixels();
    std::fill(dst, dst + g.in_pixels(), T{0});
    for (std::size_t ky = 0; ky < k; ++ky)
      for (std::size_t kx = 0; kx < k; ++kx) {
        const T* src = col + ((c * k + ky) * k + kx) * g.out_pixels();
        for (std::size_t oy = 0; oy < g.out_height; ++oy) {
          const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) - static_cast<std::ptrdiff_t>(g.pad);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.height)) continue;
          T* d = dst + static_cast<std::size_t>(iy) * g.width;
          const T* s = src + oy * ow;
          for (std::size_t ox = 0; ox < ow; ++ox) {
            const auto ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) - static_cast<std::ptrdiff_t>(g.pad);
            if (ix >= 0 && ix < static_cast<std::ptrdiff_t>(g.width)) d[ix] += s[ox];
          }
        }
      }
  }
}

namespace {

// out[r, :] = sum_j a[r, j] * b[j, :] for rows r in [0, m), with a row-major
// (m x inner, leading dim lda) and b (inner x n). Rows are processed in blocks
// of four so each b row is loaded once per block; accumulation over j is in
// ascending order for every output element.
template <typename T>
void rows_times_matrix(std::size_t m, std::size_t inner, std::size_t n, const T* a, std::size_t lda,
                       std::size_t a_col_stride, const T* b, T* out) {
  const std::size_t blocks = (m + 3) / 4;
#pragma omp parallel for schedule(static) if (m * inner * n > 65536)
  for (std::size_t blk = 0; blk < blocks; ++blk) {
    const std::size_t r0 = blk * 4;
    const std::size_t rn = std::min<std::size_t>(4, m - r0);
    T* o0 = out + r0 * n;
    std::fill(o0, o0 + rn * n, T{0});
    if (rn == 4) {
      T* o1 = o0 + n;
      T* o2 = o1 + n;
      T* o3 = o2 + n;
      for (std::size_t j = 0; j < inner; ++j) {
        const T w0 = a[(r0 + 0) * lda + j * a_col_stride];
        const T w1 = a[(r0 + 1) * lda + j * a_col_stride];
        const T w2 = a[(r0 + 2) * lda + j * a_col_stride];
        const T w3 = a[(r0 + 3) * lda + j * a_col_stride];
        const T* bj = b + j * n;
#pragma omp simd
        for (std::size_t p = 0; p < n; ++p) {
          const T v = bj[p];
          o0[p] += w0 * v;
          o1[p] += w1 * v;
          o2[p] += w2 * v;
          o3[p] += w3 * v;
        }
      }
    } else {
      for (std::size_t r = 0; r < rn; ++r) {
        T* o = o0 + r * n;
        for (std::size_t j = 0; j < inner; ++j) {
          const T wv = a[(r0 + r) * lda + j * a_col_stride];
          const T* bj = b + j * n;
#pragma omp simd
          for (std::size_t p = 0; p < n; ++p) o[p] += wv * bj[p];
        }
      }
    }
  }
}

// Fixed-shape dot product: 16 interleaved partial sums, combined pairwise.
template <typename T>
T dot(const T* a, const T* b, std::size_t n) {
  constexpr std::size_t L = 16;
  T acc[L] = {};
  std::size_t p = 0;
  for (; p + L <= n; p += L) {
#pragma omp simd
    for (std::size_t j = 0; j < L; ++j) acc[j] += a[p + j] * b[p + j];
  }
  for (std::size_t j = 0; p < n; ++p, ++j) acc[j] += a[p] * b[p];
  for (std::size_t w = L / 2; w > 0; w /= 2)
    for (std::size_t j = 0; j < w; ++j) acc[j] += acc[j + w];
  return acc[0];
}

}  // namespace

template <typename T>
void conv2d_forward(const ConvGeometry& g, const T* x, const T* w, const T* bias, T* out) {
  const auto rows = g.col_rows();
  const auto P = g.out_pixels();
  std::vector<T> col(rows * P);
  for (std::size_t n = 0; n < g.batch; ++n) {
    im2col(g, x + n * g.in_channels * g.in_pixels(), col.data());
    T* o = out + n * g.filters * P;
    rows_times_matrix(g.filters, rows, P, w, rows, 1, col.data(), o);
    if (bias) {
      for (std::size_t f = 0; f < g.filters; ++f)
        for (std::size_t p = 0; p < P; ++p) o[f * P + p] += bias[f];
    }
  }
}

template <typename T>
void conv2d_backward_input(const ConvGeometry& g, const T* dout, const T* w, T* dx) {
  const auto rows = g.col_rows();
  const auto P = g.out_pixels();
  std::vector<T> col(rows * P);
  for (std::size_t n = 0; n < g.batch; ++n) {
    // col[r, p] = sum_f w[f, r] * dout[f, p]  (w read transposed)
    rows_times_matrix(rows, g.filters, P, w, 1, rows, dout + n * g.filters * P, col.data());
    col2im(g, col.data(), dx + n * g.in_channels * g.in_pixels());
  }
}

template <typename T>
void conv2d_backward_weight(const ConvGeometry& g, const T* dout, const T* x, T* dw) {
  const auto rows = g.col_rows();
  const auto P = g.out_pixels();
  std::fill(dw, dw + g.filters * rows, T{0});
  std::vector<T> col(rows * P);
  for (std::size_t n = 0; n < g.batch; ++n) {
    im2col(g, x + n * g.in_channels * g.in_pixels(), col.data());
    const T* d = dout + n * g.filters * P;
#pragma omp parallel for schedule(static) if (g.filters * rows * P > 65536)
    for (std::size_t f = 0; f < g.filters; ++f)
      for (std::size_t r = 0; r < rows; ++r) dw[f * rows + r] += dot(d + f * P, col.data() + r * P, P);
  }
}

template <typename T>
void conv2d_backward_bias(const ConvGeometry& g, const T* dout, T* db) {
  const auto P = g.out_pixels();
  std::fill(db, db + g.filters, T{0});
  for (std::size_t n = 0; n < g.batch; ++n)
    for (std::size_t f = 0; f < g.filters; ++f) {
      const T* d = dout + (n * g.filters + f) * P;
      T s = 0;
      for (std::size_t p = 0; p < P; ++p) s += d[p];
      db[f] += s;
    }
}

}  // namespace parallel

template <typename T>
BasicTensor<T> window_sum(const BasicTensor<T>& mask, std::size_t kernel, std::size_t stride, std::size_t pad,
                          T pad_value) {
  if (mask.ndim() != 4 || mask.dim(1) != 1) throw ShapeError("mask must be [N,1,H,W], got " + shape_str(mask.shape()));
  const auto H = mask.dim(2), W = mask.dim(3);
  if (H + 2 * pad < kernel || W + 2 * pad < kernel) throw ShapeError("mask smaller than window");
  const auto OH = (H + 2 * pad - kernel) / stride + 1;
  const auto OW = (W + 2 * pad - kernel) / stride + 1;
  BasicTensor<T> out({mask.dim(0), 1, OH, OW});
  for (std::size_t n = 0; n < mask.dim(0); ++n)
    for (std::size_t oy = 0; oy < OH; ++oy)
      for (std::size_t ox = 0; ox < OW; ++ox) {
        T s = 0;
        for (std::size_t ky = 0; ky < kernel; ++ky)
          for (std::size_t kx = 0; kx < kernel; ++kx) {
            const auto iy = static_cast<std::ptrdiff_t>(oy * stride + ky) - static_cast<std::ptrdiff_t>(pad);
            const auto ix = static_cast<std::ptrdiff_t>(ox * stride + kx) - static_cast<std::ptrdiff_t>(pad);
            const bool inside = iy >= 0 && ix >= 0 && iy < static_cast<std::ptrdiff_t>(H) &&
                                ix < static_cast<std::ptrdiff_t>(W);
            s += inside ? mask.at(n, 0, static_cast<std::size_t>(iy), static_cast<std::size_t>(ix)) : pad_value;
          }
        out.at(n, 0, oy, ox) = s;
      }
  return out;
}

#define PCMAR_INSTANTIATE(T)                                                                          \
  template void reference::conv2d_forward<T>(const ConvGeometry&, const T*, const T*, const T*, T*); \
  template void reference::conv2d_backward_input<T>(const ConvGeometry&, const T*, const T*, T*);    \
  template void reference::conv2d_backward_weight<T>(const ConvGeometry&, const T*, const T*, T*);   \
  template void reference::conv2d_backward_bias<T>(const ConvGeometry&, const T*, T*);               \
  template void parallel::conv2d_forward<T>(const ConvGeometry&, const T*, const T*, const T*, T*);  \
  template void parallel::conv2d_backward_input<T>(const ConvGeometry&, const T*, const T*, T*);     \
  template void parallel::conv2d_backward_weight<T>(const ConvGeometry&, const T*, const T*, T*);    \
  template void parallel::conv2d_backward_bias<T>(const ConvGeometry&, const T*, T*);                \
  template void parallel::im2col<T>(const ConvGeometry&, const T*, T*);                              \
  template void parallel::col2im<T>(const ConvGeometry&, const T*, T*);                              \
  template BasicTensor<T> window_sum<T>(const BasicTensor<T>&, std::size_t, std::size_t, std::size_t, T);

PCMAR_INSTANTIATE(float)
PCMAR_INSTANTIATE(double)
#undef PCMAR_INSTANTIATE

}  // namespace kernels
}  // namespace pcmar
