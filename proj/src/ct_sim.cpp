#include "pcmar/ct_sim.hpp"

#include <cmath>
#include <iomanip>
#include <numbers>
#include <sstream>

namespace pcmar {
namespace {

constexpr double kPi = std::numbers::pi;

void check_ellipse(const Ellipse& e, const char* kind) {
  if (!(e.a > 0) || !(e.b > 0)) throw ValueError(std::string(kind) + " ellipse has non-positive semi-axis");
  if (!std::isfinite(e.cx) || !std::isfinite(e.cy) || !std::isfinite(e.angle) || !std::isfinite(e.value)) {
    throw ValueError(std::string(kind) + " ellipse has non-finite parameters");
  }
  if (e.max_radius() > 1.0) {
    std::ostringstream os;
    os << kind << " ellipse centered at (" << e.cx << ", " << e.cy << ") leaves the unit disk";
    throw ValueError(os.str());
  }
}

// Bilinear sample of a row-major image at continuous pixel coordinates
// (row, col) measured from pixel centers; zero outside.
inline double bilinear(const float* img, std::ptrdiff_t n, double row, double col) {
  const double fr = std::floor(row), fc = std::floor(col);
  const auto r0 = static_cast<std::ptrdiff_t>(fr), c0 = static_cast<std::ptrdiff_t>(fc);
  const double wr = row - fr, wc = col - fc;
  auto px = [&](std::ptrdiff_t r, std::ptrdiff_t c) -> double {
    return (r < 0 || c < 0 || r >= n || c >= n) ? 0.0 : static_cast<double>(img[r * n + c]);
  };
  return (1 - wr) * ((1 - wc) * px(r0, c0) + wc * px(r0, c0 + 1)) + wr * ((1 - wc) * px(r0 + 1, c0) + wc * px(r0 + 1, c0 + 1));
}

void require_sinogram(const Tensor& sino, const Geometry& geo, const char* where) {
  if (sino.ndim() != 2 || sino.dim(0) != geo.n_angles || sino.dim(1) != geo.n_detectors) {
    throw ShapeError(std::string(where) + ": sinogram " + shape_str(sino.shape()) + " does not match geometry [" +
                     std::to_string(geo.n_angles) + "," + std::to_string(geo.n_detectors) + "]");
  }
}

}  // namespace

bool Ellipse::contains(double x, double y) const noexcept {
  const double dx = x - cx, dy = y - cy;
  const double c = std::cos(angle), s = std::sin(angle);
  const double u = (dx * c + dy * s) / a;
  const double v = (-dx * s + dy * c) / b;
  return u * u + v * v <= 1.0;
}

double Ellipse::max_radius() const {
  constexpr int kSamples = 4096;
  const double c = std::cos(angle), s = std::sin(angle);
  double best = 0;
  for (int i = 0; i < kSamples; ++i) {
    const double t = 2 * kPi * i / kSamples;
    const double u = a * std::cos(t), v = b * std::sin(t);
    const double x = cx + u * c - v * s, y = cy + u * s + v * c;
    best = std::max(best, std::hypot(x, y));
  }
  return best;
}

void PhantomSpec::validate() const {
  for (const auto& e : body) {
    check_ellipse(e, "body");
    if (!(e.value < metal_threshold)) throw ValueError("body ellipse attenuation must be below the metal threshold");
  }
  for (const auto& e : metal) {
    check_ellipse(e, "metal");
    if (!(e.value > metal_threshold)) throw ValueError("metal ellipse attenuation must exceed the metal threshold");
  }
}

std::string PhantomSpec::to_text() const {
  std::ostringstream os;
  os << std::setprecision(17);
  os << "# kind cx cy a b angle value\n";
  os << "metal_threshold " << metal_threshold << '\n';
  for (const auto& e : body) os << "body " << e.cx << ' ' << e.cy << ' ' << e.a << ' ' << e.b << ' ' << e.angle << ' ' << e.value << '\n';
  for (const auto& e : metal) os << "metal " << e.cx << ' ' << e.cy << ' ' << e.a << ' ' << e.b << ' ' << e.angle << ' ' << e.value << '\n';
  return os.str();
}

PhantomSpec PhantomSpec::from_text(const std::string& text) {
  PhantomSpec spec;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string kind;
    ls >> kind;
    if (kind == "metal_threshold") {
      if (!(ls >> spec.metal_threshold)) throw FormatError("bad metal_threshold line: " + line);
      continue;
    }
    Ellipse e;
    if (!(ls >> e.cx >> e.cy >> e.a >> e.b >> e.angle >> e.value)) throw FormatError("bad ellipse line: " + line);
    if (kind == "body") {
      spec.body.push_back(e);
    } else if (kind == "metal") {
      spec.metal.push_back(e);
    } else {
      throw FormatError("unknown ellipse kind '" + kind + "'");
    }
  }
  spec.validate();
  return spec;
}

PhantomSpec PhantomSpec::shepp_logan() {
  auto deg = [](double d) { return d * kPi / 180.0; };
  PhantomSpec s;
  s.body = {
      {0, 0, 0.69, 0.92, 0, 1.0},
      {0, -0.0184, 0.6624, 0.874, 0, -0.8},
      {0.22, 0, 0.11, 0.31, deg(-18), -0.2},
      {-0.22, 0, 0.16, 0.41, deg(18), -0.2},
      {0, 0.35, 0.21, 0.25, 0, 0.1},
      {0, 0.1, 0.046, 0.046, 0, 0.1},
      {0, -0.1, 0.046, 0.046, 0, 0.1},
      {-0.08, -0.605, 0.046, 0.023, 0, 0.1},
      {0, -0.606, 0.023, 0.023, 0, 0.1},
      {0.06, -0.605, 0.023, 0.046, 0, 0.1},
  };
  return s;
}

double Geometry::angle(std::size_t i) const noexcept { return kPi * static_cast<double>(i) / static_cast<double>(n_angles); }

double Geometry::detector_offset(std::size_t j) const noexcept {
  return (static_cast<double>(j) - 0.5 * static_cast<double>(n_detectors - 1)) * detector_spacing;
}

void Geometry::validate() const {
  if (n_angles < 1 || n_detectors < 1 || image_size < 1) throw ValueError("geometry sizes must be >= 1");
  if (!(detector_spacing > 0)) throw ValueError("detector spacing must be positive");
  if (static_cast<double>(n_detectors) * detector_spacing < std::sqrt(2.0) * 2.0) {
    throw ValueError("detector array (" + std::to_string(n_detectors) + " x " + format_double(detector_spacing) +
                     ") is narrower than sqrt(2) * field of view; projections would be truncated");
  }
}

KeyValue Geometry::to_keyvalue() const {
  KeyValue kv;
  kv.set("n_angles", static_cast<std::uint64_t>(n_angles));
  kv.set("n_detectors", static_cast<std::uint64_t>(n_detectors));
  kv.set("detector_spacing", detector_spacing);
  kv.set("image_size", static_cast<std::uint64_t>(image_size));
  return kv;
}

Geometry Geometry::from_keyvalue(const KeyValue& kv) {
  Geometry g;
  g.image_size = static_cast<std::size_t>(kv.get_int("image_size", 128));
  g.n_angles = static_cast<std::size_t>(kv.get_int("n_angles", 180));
  g.n_detectors = static_cast<std::size_t>(kv.get_int("n_detectors", 192));
  g.detector_spacing = kv.get_double("detector_spacing", 2.0 / static_cast<double>(g.image_size));
  g.validate();
  return g;
}

Tensor render_phantom(const PhantomSpec& spec, std::size_t size, bool include_metal, std::size_t supersample) {
  spec.validate();
  if (supersample < 1) throw ValueError("supersample must be >= 1");
  Tensor img({size, size});
  const double px = 2.0 / static_cast<double>(size);
  const auto sub = static_cast<int>(supersample);
  for (std::size_t r = 0; r < size; ++r) {
    for (std::size_t c = 0; c < size; ++c) {
      double v = 0;
      for (int a = 0; a < sub; ++a) {
        const double y = 1.0 - (static_cast<double>(r) + (a + 0.5) / sub) * px;
        for (int b = 0; b < sub; ++b) {
          const double x = -1.0 + (static_cast<double>(c) + (b + 0.5) / sub) * px;
          for (const auto& e : spec.body)
            if (e.contains(x, y)) v += e.value;
          if (include_metal)
            for (const auto& e : spec.metal)
              if (e.contains(x, y)) v += e.value;
        }
      }
      img.at(r, c) = static_cast<float>(v / (sub * sub));
    }
  }
  return img;
}

Tensor render_metal(const PhantomSpec& spec, std::size_t size) {
  PhantomSpec only = spec;
  only.body.clear();
  return render_phantom(only, size, true);
}

Tensor radon_forward(const Tensor& image, const Geometry& geo, Exec exec) {
  if (image.ndim() != 2 || image.dim(0) != image.dim(1)) throw ShapeError("radon_forward expects a square 2D image, got " + shape_str(image.shape()));
  const auto n = static_cast<std::ptrdiff_t>(image.dim(0));
  const double px = 2.0 / static_cast<double>(n);
  const double dt = 0.5 * px;
  const double half_len = std::sqrt(2.0) + px;
  const auto steps = static_cast<std::size_t>(std::ceil(2 * half_len / dt));
  Tensor sino({geo.n_angles, geo.n_detectors});
  const float* img = image.ptr();
  const auto n_angles = static_cast<std::ptrdiff_t>(geo.n_angles);
#pragma omp parallel for schedule(static) if (exec == Exec::parallel)
  for (std::ptrdiff_t i = 0; i < n_angles; ++i) {
    const double th = geo.angle(static_cast<std::size_t>(i));
    const double c = std::cos(th), s = std::sin(th);
    for (std::size_t j = 0; j < geo.n_detectors; ++j) {
      const double off = geo.detector_offset(j);
      double acc = 0;
      for (std::size_t k = 0; k < steps; ++k) {
        const double t = (static_cast<double>(k) - 0.5 * static_cast<double>(steps - 1)) * dt;
        const double x = off * c - t * s;
        const double y = off * s + t * c;
        if (x < -1 - px || x > 1 + px || y < -1 - px || y > 1 + px) continue;
        acc += bilinear(img, n, (1.0 - y) / px - 0.5, (x + 1.0) / px - 0.5);
      }
      sino.at(static_cast<std::size_t>(i), j) = static_cast<float>(acc * dt);
    }
  }
  return sino;
}

Tensor metal_trace(const PhantomSpec& spec, const Geometry& geo, Exec exec) {
  const Tensor metal_sino = radon_forward(render_metal(spec, geo.image_size), geo, exec);
  Tensor mask(metal_sino.shape(), 1.0f);
  for (std::size_t i = 0; i < mask.size(); ++i)
    if (metal_sino[i] > kTraceEpsilon) mask[i] = 0.0f;
  return mask;
}

std::vector<double> ramlak_kernel(std::size_t n, double spacing, bool hann) {
  // Index n holds h[0]; the kernel spans offsets -n..n.
  std::vector<double> h(2 * n + 1, 0.0);
  for (std::size_t i = 0; i < h.size(); ++i) {
    const auto k = static_cast<std::ptrdiff_t>(i) - static_cast<std::ptrdiff_t>(n);
    if (k == 0) {
      h[i] = 1.0 / (4.0 * spacing * spacing);
    } else if (k % 2 != 0) {
      const double d = static_cast<double>(k) * kPi * spacing;
      h[i] = -1.0 / (d * d);
    }
  }
  if (!hann) return h;
  // Raised-cosine apodization in frequency = [1/4, 1/2, 1/4] smoothing in space.
  std::vector<double> out(h.size(), 0.0);
  for (std::size_t i = 0; i < h.size(); ++i) {
    out[i] = 0.5 * h[i];
    if (i > 0) out[i] += 0.25 * h[i - 1];
    if (i + 1 < h.size()) out[i] += 0.25 * h[i + 1];
  }
  return out;
}

Tensor ramp_filter(const Tensor& sino, const Geometry& geo, const FbpOptions& opts, Exec exec) {
  require_sinogram(sino, geo, "ramp_filter");
  const auto nd = geo.n_detectors;
  const auto kernel = ramlak_kernel(nd - 1, geo.detector_spacing, opts.hann);
  const auto center = static_cast<std::ptrdiff_t>(nd - 1);
  Tensor out(sino.shape());
  const auto n_angles = static_cast<std::ptrdiff_t>(geo.n_angles);
#pragma omp parallel for schedule(static) if (exec == Exec::parallel)
  for (std::ptrdiff_t i = 0; i < n_angles; ++i) {
    const float* row = sino.ptr() + static_cast<std::size_t>(i) * nd;
    for (std::size_t j = 0; j < nd; ++j) {
      double acc = 0;
      for (std::size_t k = 0; k < nd; ++k) {
        acc += static_cast<double>(row[k]) * kernel[static_cast<std::size_t>(center + static_cast<std::ptrdiff_t>(j) - static_cast<std::ptrdiff_t>(k))];
      }
      out.at(static_cast<std::size_t>(i), j) = static_cast<float>(acc * geo.detector_spacing);
    }
  }
  return out;
}

Tensor fbp_reconstruct(const Tensor& sino, const Geometry& geo, const FbpOptions& opts, Exec exec) {
  require_sinogram(sino, geo, "fbp_reconstruct");
  const Tensor q = ramp_filter(sino, geo, opts, exec);
  const auto n = geo.image_size;
  const double px = geo.pixel_size();
  std::vector<double> cs(geo.n_angles), sn(geo.n_angles);
  for (std::size_t i = 0; i < geo.n_angles; ++i) {
    cs[i] = std::cos(geo.angle(i));
    sn[i] = std::sin(geo.angle(i));
  }
  const double center = 0.5 * static_cast<double>(geo.n_detectors - 1);
  const double scale = kPi / static_cast<double>(geo.n_angles);
  const auto nd = static_cast<std::ptrdiff_t>(geo.n_detectors);
  Tensor img({n, n});
  const auto rows = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for schedule(static) if (exec == Exec::parallel)
  for (std::ptrdiff_t r = 0; r < rows; ++r) {
    const double y = 1.0 - (static_cast<double>(r) + 0.5) * px;
    for (std::size_t c = 0; c < n; ++c) {
      const double x = -1.0 + (static_cast<double>(c) + 0.5) * px;
      double acc = 0;
      for (std::size_t i = 0; i < geo.n_angles; ++i) {
        const double u = (x * cs[i] + y * sn[i]) / geo.detector_spacing + center;
        const double fu = std::floor(u);
        const auto j0 = static_cast<std::ptrdiff_t>(fu);
        const double w = u - fu;
        const float* row = q.ptr() + i * geo.n_detectors;
        const double v0 = (j0 >= 0 && j0 < nd) ? row[j0] : 0.0;
        const double v1 = (j0 + 1 >= 0 && j0 + 1 < nd) ? row[j0 + 1] : 0.0;
        acc += (1 - w) * v0 + w * v1;
      }
      img.at(static_cast<std::size_t>(r), c) = static_cast<float>(acc * scale);
    }
  }
  return img;
}

void SampleConfig::validate() const {
  if (organs_min > organs_max || metals_min > metals_max) throw ValueError("sample config: count range inverted");
  if (metals_min < 1) throw ValueError("sample config: at least one metal insert is required");
  if (!(metal_value_min > metal_threshold)) throw ValueError("sample config: metal attenuation must exceed the threshold");
  if (!(organ_value_max < metal_threshold) || !(body_value_max < metal_threshold)) {
    throw ValueError("sample config: tissue attenuation must stay below the threshold");
  }
  if (!(metal_radius_min > 0) || metal_radius_min > metal_radius_max) throw ValueError("sample config: bad metal radius range");
  if (!(organ_axis_min > 0) || organ_axis_min > organ_axis_max) throw ValueError("sample config: bad organ axis range");
}

void SampleConfig::write(KeyValue& kv) const {
  kv.set("body_value_min", body_value_min);
  kv.set("body_value_max", body_value_max);
  kv.set("organs_min", static_cast<std::uint64_t>(organs_min));
  kv.set("organs_max", static_cast<std::uint64_t>(organs_max));
  kv.set("organ_axis_min", organ_axis_min);
  kv.set("organ_axis_max", organ_axis_max);
  kv.set("organ_value_min", organ_value_min);
  kv.set("organ_value_max", organ_value_max);
  kv.set("metals_min", static_cast<std::uint64_t>(metals_min));
  kv.set("metals_max", static_cast<std::uint64_t>(metals_max));
  kv.set("metal_radius_min", metal_radius_min);
  kv.set("metal_radius_max", metal_radius_max);
  kv.set("metal_value_min", metal_value_min);
  kv.set("metal_value_max", metal_value_max);
  kv.set("metal_threshold", metal_threshold);
}

SampleConfig SampleConfig::read(const KeyValue& kv) {
  SampleConfig c;
  c.body_value_min = kv.get_double("body_value_min", c.body_value_min);
  c.body_value_max = kv.get_double("body_value_max", c.body_value_max);
  c.organs_min = static_cast<std::size_t>(kv.get_int("organs_min", static_cast<std::int64_t>(c.organs_min)));
  c.organs_max = static_cast<std::size_t>(kv.get_int("organs_max", static_cast<std::int64_t>(c.organs_max)));
  c.organ_axis_min = kv.get_double("organ_axis_min", c.organ_axis_min);
  c.organ_axis_max = kv.get_double("organ_axis_max", c.organ_axis_max);
  c.organ_value_min = kv.get_double("organ_value_min", c.organ_value_min);
  c.organ_value_max = kv.get_double("organ_value_max", c.organ_value_max);
  c.metals_min = static_cast<std::size_t>(kv.get_int("metals_min", static_cast<std::int64_t>(c.metals_min)));
  c.metals_max = static_cast<std::size_t>(kv.get_int("metals_max", static_cast<std::int64_t>(c.metals_max)));
  c.metal_radius_min = kv.get_double("metal_radius_min", c.metal_radius_min);
  c.metal_radius_max = kv.get_double("metal_radius_max", c.metal_radius_max);
  c.metal_value_min = kv.get_double("metal_value_min", c.metal_value_min);
  c.metal_value_max = kv.get_double("metal_value_max", c.metal_value_max);
  c.metal_threshold = kv.get_double("metal_threshold", c.metal_threshold);
  c.validate();
  return c;
}

Sample make_sample(Rng& rng, const SampleConfig& config, const Geometry& geo) {
  config.validate();
  geo.validate();
  constexpr int kMaxRetries = 100;

  auto draw = [&](auto&& make) {
    for (int attempt = 0; attempt <= kMaxRetries; ++attempt) {
      Ellipse e = make();
      if (e.max_radius() <= 1.0) return e;
    }
    throw ValueError("make_sample: could not place an ellipse inside the unit disk after 100 retries");
  };

  // Point drawn uniformly inside an ellipse, shrunk by `fill`.
  auto inside = [&](const Ellipse& outer, double fill) {
    const double r = fill * std::sqrt(rng.uniform());
    const double t = rng.uniform(0, 2 * kPi);
    const double u = outer.a * r * std::cos(t), v = outer.b * r * std::sin(t);
    const double c = std::cos(outer.angle), s = std::sin(outer.angle);
    return std::pair{outer.cx + u * c - v * s, outer.cy + u * s + v * c};
  };

  Sample sample;
  auto& spec = sample.spec;
  spec.metal_threshold = config.metal_threshold;
  const Ellipse outer = draw([&] {
    return Ellipse{rng.uniform(-0.05, 0.05), rng.uniform(-0.05, 0.05), rng.uniform(0.6, 0.85), rng.uniform(0.5, 0.8),
                   rng.uniform(0, kPi), rng.uniform(config.body_value_min, config.body_value_max)};
  });
  spec.body.push_back(outer);

  const auto organs = static_cast<std::size_t>(rng.uniform_int(static_cast<std::int64_t>(config.organs_min), static_cast<std::int64_t>(config.organs_max)));
  for (std::size_t i = 0; i < organs; ++i) {
    spec.body.push_back(draw([&] {
      auto [x, y] = inside(outer, 0.7);
      return Ellipse{x, y, rng.uniform(config.organ_axis_min, config.organ_axis_max),
                     rng.uniform(config.organ_axis_min, config.organ_axis_max), rng.uniform(0, kPi),
                     rng.uniform(config.organ_value_min, config.organ_value_max)};
    }));
  }

  const auto metals = static_cast<std::size_t>(rng.uniform_int(static_cast<std::int64_t>(config.metals_min), static_cast<std::int64_t>(config.metals_max)));
  for (std::size_t i = 0; i < metals; ++i) {
    spec.metal.push_back(draw([&] {
      auto [x, y] = inside(outer, 0.75);
      return Ellipse{x, y, rng.uniform(config.metal_radius_min, config.metal_radius_max),
                     rng.uniform(config.metal_radius_min, config.metal_radius_max), rng.uniform(0, kPi),
                     rng.uniform(config.metal_value_min, config.metal_value_max)};
    }));
  }
  spec.validate();

  sample.phantom = render_phantom(spec, geo.image_size, false);
  auto& s = sample.sinograms;
  s.geometry = geo;
  s.clean = radon_forward(sample.phantom, geo);
  // radon(body + metal) via linearity, so rays that miss the metal carry the
  // clean value bit for bit.
  const Tensor metal_sino = radon_forward(render_metal(spec, geo.image_size), geo);
  s.corrupted = s.clean;
  s.trace_mask = Tensor(metal_sino.shape(), 1.0f);
  for (std::size_t i = 0; i < metal_sino.size(); ++i) {
    s.corrupted[i] += metal_sino[i];
    if (metal_sino[i] > kTraceEpsilon) s.trace_mask[i] = 0.0f;
  }
  return sample;
}

}  // namespace pcmar
