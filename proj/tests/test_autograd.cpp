#include <doctest.h>

#include <cmath>

#include "pcmar/autograd.hpp"
#include "pcmar/error.hpp"
#include "support/oracles.hpp"

using namespace pcmar;
using ag::Var;
using Leaves = std::vector<Var<double>>;

namespace {

constexpr int kInstances = 20;
constexpr double kTol = 1e-5;

// Random projection so every output element matters to the scalar.
Var<double> project(const Var<double>& y, Rng& rng) {
  auto r = oracle::random_tensor<double>(rng, y->value.shape());
  return ag::sum(ag::mul(y, ag::constant(r)));
}

// Values kept away from the kink at zero.
TensorD away_from_zero(Rng& rng, Shape s) {
  TensorD t(std::move(s));
  for (auto& v : t.data()) v = (rng.uniform() < 0.5 ? -1 : 1) * rng.uniform(0.05, 1.0);
  return t;
}

Shape small_shape(Rng& rng, std::size_t channels = 0) {
  return {static_cast<std::size_t>(rng.uniform_int(1, 2)),
          channels ? channels : static_cast<std::size_t>(rng.uniform_int(1, 3)),
          static_cast<std::size_t>(rng.uniform_int(2, 6)), static_cast<std::size_t>(rng.uniform_int(2, 6))};
}

template <typename Build>
void check_unary(std::uint64_t seed, bool kinked, Build build) {
  for (int i = 0; i < kInstances; ++i) {
    Rng rng(seed + static_cast<std::uint64_t>(i));
    const auto s = small_shape(rng);
    TensorD x = kinked ? away_from_zero(rng, s) : oracle::random_tensor<double>(rng, s);
    const std::uint64_t proj_seed = rng.next_u64();
    const double err = oracle::check_inputs({x}, [&](const Leaves& l) {
      Rng pr(proj_seed);
      return project(build(l[0]), pr);
    });
    CAPTURE(i);
    CHECK(err < kTol);
  }
}

template <typename Build>
void check_binary(std::uint64_t seed, Build build) {
  for (int i = 0; i < kInstances; ++i) {
    Rng rng(seed + static_cast<std::uint64_t>(i));
    const auto s = small_shape(rng);
    TensorD a = oracle::random_tensor<double>(rng, s), b = oracle::random_tensor<double>(rng, s);
    const std::uint64_t proj_seed = rng.next_u64();
    const double err = oracle::check_inputs({a, b}, [&](const Leaves& l) {
      Rng pr(proj_seed);
      return project(build(l[0], l[1]), pr);
    });
    CAPTURE(i);
    CHECK(err < kTol);
  }
}

}  // namespace

TEST_SUITE("autograd") {
  TEST_CASE("conv2d gradient wrt input, weight and bias") {
    for (int i = 0; i < kInstances; ++i) {
      Rng rng(1000 + static_cast<std::uint64_t>(i));
      const std::size_t k = 1 + 2 * static_cast<std::size_t>(rng.uniform_int(0, 2));
      const auto stride = static_cast<std::size_t>(rng.uniform_int(1, 2));
      const auto pad = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(k / 2)));
      const auto C = static_cast<std::size_t>(rng.uniform_int(1, 3));
      const auto F = static_cast<std::size_t>(rng.uniform_int(1, 3));
      Shape xs{static_cast<std::size_t>(rng.uniform_int(1, 2)), C, static_cast<std::size_t>(rng.uniform_int(static_cast<std::int64_t>(k), 7)),
               static_cast<std::size_t>(rng.uniform_int(static_cast<std::int64_t>(k), 7))};
      auto x = oracle::random_tensor<double>(rng, xs);
      auto w = oracle::random_tensor<double>(rng, {F, C, k, k});
      auto b = oracle::random_tensor<double>(rng, {F});
      const std::uint64_t proj_seed = rng.next_u64();
      const double err = oracle::check_inputs({x, w, b}, [&](const Leaves& l) {
        Rng pr(proj_seed);
        return project(ag::conv2d(l[0], l[1], l[2], stride, pad), pr);
      });
      CAPTURE(i);
      CHECK(err < kTol);
    }
  }

  TEST_CASE("conv2d parameter overload accumulates into param_grad") {
    Rng rng(55);
    auto x = oracle::random_tensor<double>(rng, {1, 2, 5, 5});
    ag::Parameter<double> w("w", oracle::random_tensor<double>(rng, {3, 2, 3, 3}));
    ag::Parameter<double> b("b", oracle::random_tensor<double>(rng, {3}));
    auto loss = ag::sum(ag::conv2d(ag::constant(x), w, &b, 1, 1));
    ag::backward(loss);
    const auto once = w.grad();
    ag::backward(loss);
    for (std::size_t i = 0; i < once.size(); ++i) CHECK(w.grad()[i] == 2 * once[i]);
    w.zero_grad();
    CHECK(max_abs_diff(w.grad(), TensorD(w.value().shape())) == 0);
    for (std::size_t f = 0; f < 3; ++f) CHECK(b.grad()[f] == doctest::Approx(2 * 25.0));
  }

  TEST_CASE("relu") {
    check_unary(2000, true, [](const Var<double>& x) { return ag::relu(x); });
  }
  TEST_CASE("leaky_relu") {
    check_unary(3000, true, [](const Var<double>& x) { return ag::leaky_relu(x, 0.2); });
  }
  TEST_CASE("upsample_nearest2x") {
    check_unary(4000, false, [](const Var<double>& x) { return ag::upsample_nearest2x(x); });
  }
  TEST_CASE("scale") {
    check_unary(5000, false, [](const Var<double>& x) { return ag::scale(x, -1.7); });
  }
  TEST_CASE("abs") {
    check_unary(6000, true, [](const Var<double>& x) { return ag::abs(x); });
  }
  TEST_CASE("sum") {
    check_unary(7000, false, [](const Var<double>& x) { return ag::scale(ag::sum(x), 3.0); });
  }
  TEST_CASE("add") {
    check_binary(8000, [](const Var<double>& a, const Var<double>& b) { return ag::add(a, b); });
  }
  TEST_CASE("sub") {
    check_binary(9000, [](const Var<double>& a, const Var<double>& b) { return ag::sub(a, b); });
  }
  TEST_CASE("mul") {
    check_binary(10000, [](const Var<double>& a, const Var<double>& b) { return ag::mul(a, b); });
  }

  TEST_CASE("concat_channels") {
    for (int i = 0; i < kInstances; ++i) {
      Rng rng(11000 + static_cast<std::uint64_t>(i));
      auto s = small_shape(rng);
      auto s2 = s;
      s2[1] = static_cast<std::size_t>(rng.uniform_int(1, 3));
      auto a = oracle::random_tensor<double>(rng, s), b = oracle::random_tensor<double>(rng, s2);
      const std::uint64_t ps = rng.next_u64();
      const double err = oracle::check_inputs({a, b}, [&](const Leaves& l) {
        Rng pr(ps);
        return project(ag::concat_channels(l[0], l[1]), pr);
      });
      CHECK(err < kTol);
    }
  }

  TEST_CASE("mask_multiply") {
    for (int i = 0; i < kInstances; ++i) {
      Rng rng(12000 + static_cast<std::uint64_t>(i));
      auto s = small_shape(rng);
      auto x = oracle::random_tensor<double>(rng, s);
      auto m = oracle::random_mask<double>(rng, {s[0], 1, s[2], s[3]}, 0.5);
      const std::uint64_t ps = rng.next_u64();
      const double err = oracle::check_inputs({x}, [&](const Leaves& l) {
        Rng pr(ps);
        return project(ag::mask_multiply(l[0], m), pr);
      });
      CHECK(err < kTol);
    }
  }

  TEST_CASE("renorm_bias") {
    for (int i = 0; i < kInstances; ++i) {
      Rng rng(13000 + static_cast<std::uint64_t>(i));
      auto s = small_shape(rng);
      auto raw = oracle::random_tensor<double>(rng, s);
      auto bias = oracle::random_tensor<double>(rng, {s[1]});
      TensorD ratio({s[0], 1, s[2], s[3]});
      for (auto& v : ratio.data()) v = rng.uniform() < 0.3 ? 0.0 : rng.uniform(1.0, 9.0);
      const std::uint64_t ps = rng.next_u64();
      const double err = oracle::check_inputs({raw, bias}, [&](const Leaves& l) {
        Rng pr(ps);
        return project(ag::renorm_bias(l[0], ratio, l[1]), pr);
      });
      CHECK(err < kTol);
    }
  }

  TEST_CASE("total_variation") {
    for (int i = 0; i < kInstances; ++i) {
      Rng rng(14000 + static_cast<std::uint64_t>(i));
      auto s = small_shape(rng, 1);
      // Neighbour differences kept away from zero: a monotone ramp plus noise.
      TensorD x(s);
      for (std::size_t n = 0; n < s[0]; ++n)
        for (std::size_t y = 0; y < s[2]; ++y)
          for (std::size_t z = 0; z < s[3]; ++z) x.at(n, 0, y, z) = 0.3 * static_cast<double>(y + 2 * z) + rng.uniform(-0.05, 0.05);
      auto region = oracle::random_mask<double>(rng, {s[0], 1, s[2], s[3]}, 0.7);
      const double err = oracle::check_inputs({x}, [&](const Leaves& l) { return ag::total_variation(l[0], region); });
      CHECK(err < kTol);
    }
  }

  TEST_CASE("total_variation value matches a direct sum") {
    TensorD x({1, 1, 2, 3}, std::vector<double>{0, 1, 3, 2, 2, 2});
    TensorD all({1, 1, 2, 3}, 1.0);
    // horizontal: 1 + 2 + 0 + 0, vertical: 2 + 1 + 1
    CHECK(ag::total_variation(ag::constant(x), all)->value[0] == doctest::Approx(7.0));
    TensorD part({1, 1, 2, 3}, std::vector<double>{1, 1, 0, 0, 0, 0});
    CHECK(ag::total_variation(ag::constant(x), part)->value[0] == doctest::Approx(1.0));
  }

  TEST_CASE("shared subexpressions accumulate") {
    Rng rng(15);
    auto x = oracle::random_tensor<double>(rng, {1, 1, 3, 3});
    const double err = oracle::check_inputs({x}, [](const Leaves& l) {
      auto y = ag::mul(l[0], l[0]);
      return ag::sum(ag::add(y, ag::mul(y, l[0])));
    });
    CHECK(err < kTol);
  }

  TEST_CASE("forward rejects non-finite values and shape mismatches") {
    TensorD bad({1, 1, 1, 2});
    bad[0] = std::nan("");
    CHECK_THROWS_AS(ag::relu(ag::constant(bad)), ValueError);
    CHECK_THROWS_AS(ag::add(ag::constant(TensorD({2})), ag::constant(TensorD({3}))), ShapeError);
    CHECK_THROWS_AS(ag::backward(ag::constant(TensorD({2}))), ShapeError);
  }

  TEST_CASE("adam first step moves each weight by about lr against its gradient") {
    ag::Parameter<float> p("p", Tensor({3}, std::vector<float>{1, 2, 3}));
    p.grad() = Tensor({3}, std::vector<float>{0.5f, -2.0f, 0.0f});
    std::vector<ag::Parameter<float>*> ps{&p};
    auto st = ag::adam_init(ps);
    ag::AdamConfig cfg;
    cfg.lr = 0.1;
    ag::adam_step(ps, st, cfg);
    CHECK(p.value()[0] == doctest::Approx(0.9).epsilon(1e-5));
    CHECK(p.value()[1] == doctest::Approx(2.1).epsilon(1e-5));
    CHECK(p.value()[2] == 3.0f);
  }
}
