#pragma once

#include <string>
#include <vector>

#include "pcmar/keyvalue.hpp"
#include "pcmar/rng.hpp"
#include "pcmar/tensor.hpp"

namespace pcmar {

/// Execution policy for data-parallel kernels. Both policies run the same
/// arithmetic per output element and give bit-identical results.
enum class Exec { serial, parallel };

/// Ellipse in the [-1,1]^2 field of view; `angle` in radians,
/// counter-clockwise. The value is an attenuation coefficient.
struct Ellipse {
  double cx = 0, cy = 0;
  double a = 0, b = 0;
  double angle = 0;
  double value = 0;

  bool contains(double x, double y) const noexcept;
  /// Largest distance from the origin to the ellipse boundary.
  double max_radius() const;
};

struct PhantomSpec {
  std::vector<Ellipse> body;
  std::vector<Ellipse> metal;
  double metal_threshold = 5.0;

  /// Every ellipse inside the unit disk, positive semi-axes, tissue strictly
  /// below and metal strictly above the threshold.
  void validate() const;

  std::string to_text() const;
  static PhantomSpec from_text(const std::string& text);

  /// Modified Shepp-Logan head (maximum value 1).
  static PhantomSpec shepp_logan();
};

/// Parallel-beam geometry over [0, pi). Detector j sits at signed offset
/// (j - (n_detectors-1)/2) * detector_spacing; the image spans [-1,1]^2.
struct Geometry {
  std::size_t n_angles = 180;
  std::size_t n_detectors = 192;
  double detector_spacing = 2.0 / 128.0;
  std::size_t image_size = 128;

  double pixel_size() const noexcept { return 2.0 / static_cast<double>(image_size); }
  double angle(std::size_t i) const noexcept;
  double detector_offset(std::size_t j) const noexcept;
  /// Requires n_detectors * spacing >= sqrt(2) * field of view.
  void validate() const;

  KeyValue to_keyvalue() const;
  static Geometry from_keyvalue(const KeyValue& kv);
};

struct SinogramSet {
  Tensor clean;       // [n_angles, n_detectors]
  Tensor corrupted;   // same, metal included
  Tensor trace_mask;  // 1 = valid, 0 = metal trace
  Geometry geometry;
};

inline constexpr double kTraceEpsilon = 1e-6;

/// Pixel value = sum of attenuations of ellipses containing the pixel center.
/// With supersample = s > 1 the value is the mean over an s x s grid of
/// sub-pixel centers instead (an area-averaged, less aliased render).
Tensor render_phantom(const PhantomSpec& spec, std::size_t size, bool include_metal, std::size_t supersample = 1);
/// Metal ellipses only.
Tensor render_metal(const PhantomSpec& spec, std::size_t size);

/// Ray-driven projector: bilinear samples every half pixel along each ray.
Tensor radon_forward(const Tensor& image, const Geometry& geo, Exec exec = Exec::parallel);

/// 1 where the metal-only sinogram is <= kTraceEpsilon, 0 elsewhere.
Tensor metal_trace(const PhantomSpec& spec, const Geometry& geo, Exec exec = Exec::parallel);

struct FbpOptions {
  bool hann = false;
};

/// Spatial-domain Ram-Lak kernel h[-n..n]; index n holds h[0].
std::vector<double> ramlak_kernel(std::size_t n, double spacing, bool hann = false);

/// Row-wise ramp filtering (convolution with the Ram-Lak kernel times the
/// detector spacing).
Tensor ramp_filter(const Tensor& sino, const Geometry& geo, const FbpOptions& opts = {}, Exec exec = Exec::parallel);

/// Ramp filter followed by pixel-driven linear-interpolation backprojection
/// scaled by pi / n_angles.
Tensor fbp_reconstruct(const Tensor& sino, const Geometry& geo, const FbpOptions& opts = {},
                       Exec exec = Exec::parallel);

/// Ranges for procedural phantoms.
struct SampleConfig {
  double body_value_min = 0.2, body_value_max = 0.4;
  std::size_t organs_min = 2, organs_max = 6;
  double organ_axis_min = 0.04, organ_axis_max = 0.25;
  double organ_value_min = 0.05, organ_value_max = 0.6;
  std::size_t metals_min = 1, metals_max = 3;
  double metal_radius_min = 0.02, metal_radius_max = 0.06;
  double metal_value_min = 8.0, metal_value_max = 16.0;
  double metal_threshold = 5.0;

  void validate() const;
  void write(KeyValue& kv) const;
  static SampleConfig read(const KeyValue& kv);
};

struct Sample {
  PhantomSpec spec;
  SinogramSet sinograms;
  Tensor phantom;  // metal-free ground truth slice
};

/// Draws a phantom and simulates its sinograms. Each ellipse is redrawn until
/// it fits in the unit disk; more than 100 failed draws is an error.
Sample make_sample(Rng& rng, const SampleConfig& config, const Geometry& geo);

}  // namespace pcmar
