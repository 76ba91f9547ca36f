#pragma once

#include <vector>

#include "pcmar/tensor.hpp"

namespace pcmar {

/// sqrt(mean((a-b)^2)) over pixels where `include` is non-zero (all pixels
/// when include is null). Returns 0 for an empty selection.
double rmse(const Tensor& a, const Tensor& b, const Tensor* include = nullptr);

/// Mean SSIM with a uniform 7x7 window, K1 = 0.01, K2 = 0.03 and the given
/// dynamic range. The map is evaluated at every pixel whose window fits in
/// the image and averaged over the centers where `include` is non-zero.
double ssim(const Tensor& a, const Tensor& b, double dynamic_range, const Tensor* include = nullptr);

inline constexpr std::size_t kSsimWindow = 7;

double mean(const std::vector<double>& v);
double median(std::vector<double> v);

}  // namespace pcmar
