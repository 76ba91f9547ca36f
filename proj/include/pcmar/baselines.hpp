#pragma once

#include <cstdint>
#include <vector>

#include "pcmar/ct_sim.hpp"
#include "pcmar/pconv_net.hpp"

namespace pcmar {

struct HoleInterval {
  std::size_t angle = 0;
  std::size_t begin = 0;  // first hole detector
  std::size_t end = 0;    // one past the last hole detector
};

struct InterpolationResult {
  Tensor inpainted;
  std::vector<HoleInterval> holes;
};

/// Row-wise linear interpolation across every maximal run of holes. Runs that
/// touch either end of the detector row take the nearest valid value.
/// Throws ValueError naming the angle if a row has no valid pixel.
InterpolationResult linear_interp_inpaint_detailed(const Tensor& sino, const Tensor& mask, Exec exec = Exec::parallel);

inline Tensor linear_interp_inpaint(const Tensor& sino, const Tensor& mask, Exec exec = Exec::parallel) {
  return linear_interp_inpaint_detailed(sino, mask, exec).inpainted;
}

/// Conventional-convolution counterpart of a partial U-Net spec: same layout,
/// plain convolutions, mask fed as an extra input channel.
UNetSpec conventional_spec(UNetSpec spec);

template <typename T>
UNet<T> conventional_unet(const UNetSpec& spec, std::uint64_t seed) {
  return UNet<T>(conventional_spec(spec), seed);
}

}  // namespace pcmar
