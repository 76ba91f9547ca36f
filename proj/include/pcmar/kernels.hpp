#pragma once

#include <cstddef>

#include "pcmar/tensor.hpp"

namespace pcmar {

/// Resolved sizes of one 2D cross-correlation with zero padding.
struct ConvGeometry {
  std::size_t batch = 0, in_channels = 0, height = 0, width = 0;
  std::size_t filters = 0, kernel = 0, stride = 1, pad = 0;
  std::size_t out_height = 0, out_width = 0;

  std::size_t col_rows() const noexcept { return in_channels * kernel * kernel; }
  std::size_t out_pixels() const noexcept { return out_height * out_width; }
  std::size_t in_pixels() const noexcept { return height * width; }
};

/// Validates x:[N,C,H,W] against w:[F,C,k,k]. Throws ShapeError naming the
/// offending dimension.
ConvGeometry conv_geometry(const Shape& x, const Shape& w, std::size_t stride, std::size_t pad);

/// Convolution kernels. Every kernel overwrites its output buffer. Bias may
/// be null. Sums run in the same fixed order regardless of thread count, so
/// results are bit-reproducible.
namespace kernels {

/// Direct nested loops, single-threaded. Kept as the test oracle and the
/// benchmark baseline.
namespace reference {
template <typename T>
void conv2d_forward(const ConvGeometry& g, const T* x, const T* w, const T* bias, T* out);
template <typename T>
void conv2d_backward_input(const ConvGeometry& g, const T* dout, const T* w, T* dx);
template <typename T>
void conv2d_backward_weight(const ConvGeometry& g, const T* dout, const T* x, T* dw);
template <typename T>
void conv2d_backward_bias(const ConvGeometry& g, const T* dout, T* db);
}  // namespace reference

/// im2col + register-blocked multiply, parallelized with OpenMP over output
/// rows of each product. No cross-thread reductions.
namespace parallel {
template <typename T>
void conv2d_forward(const ConvGeometry& g, const T* x, const T* w, const T* bias, T* out);
template <typename T>
void conv2d_backward_input(const ConvGeometry& g, const T* dout, const T* w, T* dx);
template <typename T>
void conv2d_backward_weight(const ConvGeometry& g, const T* dout, const T* x, T* dw);
template <typename T>
void conv2d_backward_bias(const ConvGeometry& g, const T* dout, T* db);

/// Unrolls one image [C,H,W] into columns [C*k*k, OH*OW].
template <typename T>
void im2col(const ConvGeometry& g, const T* image, T* col);
/// Scatter-adds columns back into an image [C,H,W] (which is overwritten).
template <typename T>
void col2im(const ConvGeometry& g, const T* col, T* image);
}  // namespace parallel

/// Sum of a single-channel mask [N,1,H,W] over every k x k window, with the
/// border padded by `pad_value`. Output is [N,1,OH,OW].
template <typename T>
BasicTensor<T> window_sum(const BasicTensor<T>& mask, std::size_t kernel, std::size_t stride, std::size_t pad,
                          T pad_value);

}  // namespace kernels
}  // namespace pcmar
