#include <doctest.h>

#include <cmath>
#include <numbers>

#include "pcmar/ct_sim.hpp"
#include "pcmar/error.hpp"
#include "pcmar/metrics.hpp"
#include "support/oracles.hpp"

using namespace pcmar;

namespace {

Ellipse disk(double cx, double cy, double r, double v) { return Ellipse{cx, cy, r, r, 0.0, v}; }

double image_integral(const Tensor& img) {
  double s = 0;
  for (float v : img.data()) s += v;
  const double px = 2.0 / static_cast<double>(img.dim(0));
  return s * px * px;
}

}  // namespace

TEST_SUITE("phantom") {
  TEST_CASE("rendering follows pixel-centre membership and adds overlaps") {
    PhantomSpec empty;
    const auto blank = render_phantom(empty, 16, true);
    for (float v : blank.data()) CHECK(v == 0.0f);

    PhantomSpec one;
    one.body = {disk(0, 0, 0.5, 1.0)};
    const auto img = render_phantom(one, 100, true);
    CHECK(img.at(49, 49) == 1.0f);
    // pixel centre at x = -1 + 20.5 * 0.02 = -0.59, y ~ 0.01: radius ~0.59
    CHECK(img.at(49, 20) == 0.0f);

    PhantomSpec two;
    two.body = {disk(0, 0, 0.5, 0.3), disk(0.1, 0, 0.5, 0.4)};
    CHECK(render_phantom(two, 100, true).at(49, 52) == doctest::Approx(0.7f));
  }

  TEST_CASE("metal is drawn only on request") {
    PhantomSpec s;
    s.body = {disk(0, 0, 0.8, 0.3)};
    s.metal = {disk(0.2, 0.1, 0.05, 10.0)};
    const auto without = render_phantom(s, 64, false), with = render_phantom(s, 64, true), metal = render_metal(s, 64);
    for (std::size_t i = 0; i < with.size(); ++i) CHECK(with[i] == doctest::Approx(without[i] + metal[i]));
  }

  TEST_CASE("validation") {
    PhantomSpec s;
    s.body = {disk(0.7, 0, 0.5, 0.3)};
    CHECK_THROWS_AS(s.validate(), ValueError);
    CHECK_THROWS_AS(render_phantom(s, 8, true), ValueError);
    s.body = {disk(0, 0, 0.5, 6.0)};
    CHECK_THROWS_AS(s.validate(), ValueError);
    s.body = {};
    s.metal = {disk(0, 0, 0.1, 4.0)};
    CHECK_THROWS_AS(s.validate(), ValueError);
  }

  TEST_CASE("spec text round trip") {
    Rng rng(4);
    const auto s = make_sample(rng, SampleConfig{}, Geometry{}).spec;
    const auto back = PhantomSpec::from_text(s.to_text());
    CHECK(back.to_text() == s.to_text());
    REQUIRE(back.body.size() == s.body.size());
    CHECK(back.body[0].a == s.body[0].a);
    CHECK_THROWS_AS(PhantomSpec::from_text("blob 0 0 1 1 0 1\n"), FormatError);
  }
}

TEST_SUITE("radon") {
  TEST_CASE("zero in, zero out") {
    Geometry g;
    const auto sino = radon_forward(Tensor({128, 128}), g);
    const auto img = fbp_reconstruct(Tensor({g.n_angles, g.n_detectors}), g);
    for (float v : sino.data()) CHECK(v == 0.0f);
    for (float v : img.data()) CHECK(v == 0.0f);
  }

  TEST_CASE("centred disk projects to its chord length") {
    Geometry g;
    g.n_detectors = 193;  // odd count puts a detector at s = 0
    PhantomSpec s;
    s.body = {disk(0, 0, 0.6, 1.0)};
    const auto sino = radon_forward(render_phantom(s, 128, false), g);
    for (std::size_t a = 0; a < g.n_angles; ++a) {
      CHECK(sino.at(a, 96) == doctest::Approx(1.2).epsilon(0.02));
      // Off-centre chord, looser: pixelation of the rim.
      const double off = g.detector_offset(96 + 19);
      CHECK(sino.at(a, 96 + 19) == doctest::Approx(2 * std::sqrt(0.36 - off * off)).epsilon(0.05));
    }
  }

  TEST_CASE("linearity of projection and reconstruction") {
    Geometry g;
    Rng rng(2);
    auto a = oracle::random_tensor<float>(rng, {128, 128}, 0, 1);
    auto b = oracle::random_tensor<float>(rng, {128, 128}, 0, 1);
    Tensor combo(a.shape());
    for (std::size_t i = 0; i < a.size(); ++i) combo[i] = 2.5f * a[i] + b[i];
    const auto ra = radon_forward(a, g), rb = radon_forward(b, g), rc = radon_forward(combo, g);
    double worst = 0;
    for (std::size_t i = 0; i < rc.size(); ++i) worst = std::max(worst, std::abs(rc[i] - (2.5 * ra[i] + rb[i])) / (1 + std::abs(rc[i])));
    CHECK(worst < 1e-4);
    const auto fa = fbp_reconstruct(ra, g), fb = fbp_reconstruct(rb, g), fc = fbp_reconstruct(rc, g);
    worst = 0;
    for (std::size_t i = 0; i < fc.size(); ++i) worst = std::max(worst, std::abs(fc[i] - (2.5 * fa[i] + fb[i])) / (1 + std::abs(fc[i])));
    CHECK(worst < 1e-4);
  }

  TEST_CASE("every projection carries the image mass") {
    Geometry g;
    Rng rng(6);
    const auto sample = make_sample(rng, SampleConfig{}, g);
    const double mass = image_integral(sample.phantom);
    for (std::size_t a = 0; a < g.n_angles; ++a) {
      double s = 0;
      for (std::size_t j = 0; j < g.n_detectors; ++j) s += sample.sinograms.clean.at(a, j);
      CHECK(s * g.detector_spacing == doctest::Approx(mass).epsilon(0.01));
    }
  }

  TEST_CASE("serial and parallel execution agree bit for bit") {
    Geometry g;
    Rng rng(8);
    const auto s = make_sample(rng, SampleConfig{}, g);
    const auto img = render_phantom(s.spec, g.image_size, true);
    const auto a = radon_forward(img, g, Exec::serial), b = radon_forward(img, g, Exec::parallel);
    CHECK(bit_equal(a, b));
    CHECK(bit_equal(fbp_reconstruct(a, g, {}, Exec::serial), fbp_reconstruct(a, g, {}, Exec::parallel)));
    CHECK(bit_equal(metal_trace(s.spec, g, Exec::serial), metal_trace(s.spec, g, Exec::parallel)));
  }
}

TEST_SUITE("metal_trace") {
  TEST_CASE("no metal means no trace") {
    PhantomSpec s;
    s.body = {disk(0, 0, 0.5, 0.5)};
    const auto m = metal_trace(s, Geometry{});
    for (float v : m.data()) CHECK(v == 1.0f);
  }

  TEST_CASE("a central disk leaves one centred run per angle") {
    Geometry g;
    PhantomSpec s;
    s.metal = {disk(0, 0, 0.05, 10.0)};
    const auto m = metal_trace(s, g);
    const double centre = 0.5 * static_cast<double>(g.n_detectors - 1);
    for (std::size_t a = 0; a < g.n_angles; ++a) {
      std::size_t first = g.n_detectors, last = 0, zeros = 0;
      for (std::size_t j = 0; j < g.n_detectors; ++j) {
        const float v = m.at(a, j);
        REQUIRE((v == 0.0f || v == 1.0f));
        if (v == 0.0f) {
          first = std::min(first, j);
          last = j;
          ++zeros;
        }
      }
      REQUIRE(zeros > 0);
      CHECK(last - first + 1 == zeros);
      CHECK(std::abs(0.5 * static_cast<double>(first + last) - centre) <= 0.5);
      // The run must cover the disk's shadow |s| < r.
      CHECK(static_cast<double>(zeros) * g.detector_spacing >= 0.1 - g.detector_spacing);
    }
  }

  TEST_CASE("trace ignores body ellipses and matches the metal sinogram") {
    Geometry g;
    PhantomSpec s;
    s.metal = {disk(0.3, -0.2, 0.04, 9.0)};
    const auto bare = metal_trace(s, g);
    s.body = {disk(0, 0, 0.8, 0.4), disk(0.3, -0.2, 0.2, 0.3)};
    CHECK(bit_equal(bare, metal_trace(s, g)));
    const auto metal_sino = radon_forward(render_metal(s, g.image_size), g);
    for (std::size_t i = 0; i < bare.size(); ++i) CHECK(bare[i] == (metal_sino[i] > kTraceEpsilon ? 0.0f : 1.0f));
  }
}

TEST_SUITE("fbp") {
  TEST_CASE("ram-lak taps") {
    const double d = 0.5;
    const auto h = ramlak_kernel(4, d);
    REQUIRE(h.size() == 9);
    CHECK(h[4] == doctest::Approx(1.0 / (4 * d * d)));
    CHECK(h[5] == doctest::Approx(-1.0 / std::pow(std::numbers::pi * d, 2)));
    CHECK(h[7] == doctest::Approx(-1.0 / std::pow(3 * std::numbers::pi * d, 2)));
    CHECK(h[6] == 0.0);
    CHECK(h[3] == h[5]);
  }

  TEST_CASE("shepp-logan round trip") {
    Geometry g;
    const auto spec = PhantomSpec::shepp_logan();
    for (std::size_t ss : {1, 4}) {
      const auto ph = render_phantom(spec, 128, false, ss);
      const auto rec = fbp_reconstruct(radon_forward(ph, g), g);
      Tensor inside(ph.shape());
      for (std::size_t r = 0; r < 128; ++r)
        for (std::size_t c = 0; c < 128; ++c) {
          const double x = -1 + (c + 0.5) / 64, y = 1 - (r + 0.5) / 64;
          inside.at(r, c) = x * x + y * y <= 0.81 ? 1.0f : 0.0f;
        }
      const double err = rmse(rec, ph, &inside);
      CAPTURE(ss);
      // Centre-sampled edges alias; the area-averaged render is the smooth case.
      CHECK(err < (ss == 1 ? 0.07 : 0.05));
    }
  }

  TEST_CASE("hann apodization smooths") {
    Geometry g;
    PhantomSpec s;
    s.body = {disk(0, 0, 0.5, 1.0)};
    const auto sino = radon_forward(render_phantom(s, 128, false), g);
    const auto plain = ramp_filter(sino, g), smooth = ramp_filter(sino, g, FbpOptions{true});
    double tv_plain = 0, tv_smooth = 0;
    for (std::size_t j = 1; j < g.n_detectors; ++j) {
      tv_plain += std::abs(plain.at(0, j) - plain.at(0, j - 1));
      tv_smooth += std::abs(smooth.at(0, j) - smooth.at(0, j - 1));
    }
    CHECK(tv_smooth < tv_plain);
  }

  TEST_CASE("geometry guards against truncation") {
    Geometry g;
    g.n_detectors = 150;
    CHECK_THROWS_AS(g.validate(), ValueError);
    Geometry ok;
    CHECK(Geometry::from_keyvalue(ok.to_keyvalue()).to_keyvalue().str() == ok.to_keyvalue().str());
    CHECK_THROWS_AS(fbp_reconstruct(Tensor({10, 10}), ok), ShapeError);
  }
}

TEST_SUITE("make_sample") {
  TEST_CASE("same seed, same sample") {
    Geometry g;
    Rng a(12), b(12);
    const auto x = make_sample(a, SampleConfig{}, g), y = make_sample(b, SampleConfig{}, g);
    CHECK(x.spec.to_text() == y.spec.to_text());
    CHECK(bit_equal(x.sinograms.corrupted, y.sinograms.corrupted));
    CHECK(bit_equal(x.sinograms.trace_mask, y.sinograms.trace_mask));
    CHECK(bit_equal(x.phantom, y.phantom));
  }

  TEST_CASE("sample invariants over 100 draws") {
    Geometry g;
    SampleConfig cfg;
    Rng rng(2024);
    double lo = 1, hi = 0;
    for (int i = 0; i < 100; ++i) {
      const auto s = make_sample(rng, cfg, g);
      const auto& sg = s.sinograms;
      const auto metal_sino = radon_forward(render_metal(s.spec, g.image_size), g);
      std::size_t zeros = 0;
      for (std::size_t k = 0; k < sg.clean.size(); ++k) {
        REQUIRE(sg.corrupted[k] - sg.clean[k] >= 0.0f);
        if (sg.trace_mask[k] == 1.0f) {
          if (metal_sino[k] == 0.0f) REQUIRE(sg.corrupted[k] == sg.clean[k]);
          REQUIRE(sg.corrupted[k] - sg.clean[k] <= 2 * kTraceEpsilon);
        } else {
          ++zeros;
        }
      }
      const double frac = static_cast<double>(zeros) / static_cast<double>(sg.clean.size());
      lo = std::min(lo, frac);
      hi = std::max(hi, frac);
      REQUIRE(s.spec.metal.size() >= cfg.metals_min);
      REQUIRE(s.spec.metal.size() <= cfg.metals_max);
      for (const auto& e : s.spec.metal) {
        REQUIRE(e.value > s.spec.metal_threshold);
        REQUIRE(e.max_radius() <= 1.0);
      }
      for (const auto& e : s.spec.body) REQUIRE(e.max_radius() <= 1.0);
    }
    MESSAGE("trace fraction range " << lo << " .. " << hi);
    CHECK(lo >= 0.001);
    CHECK(hi <= 0.20);
  }

  TEST_CASE("configs that cannot fit give up") {
    SampleConfig cfg;
    cfg.metal_radius_min = 1.5;
    cfg.metal_radius_max = 1.6;
    Rng rng(1);
    CHECK_THROWS_AS(make_sample(rng, cfg, Geometry{}), ValueError);
  }
}
