// Serial reference vs OpenMP kernels at the sizes the pipeline uses.

#include <benchmark/benchmark.h>

#include <vector>

#include "pcmar/baselines.hpp"
#include "pcmar/ct_sim.hpp"
#include "pcmar/kernels.hpp"
#include "pcmar/rng.hpp"

using namespace pcmar;

namespace {

std::vector<float> noise(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<float> v(n);
  for (auto& x : v) x = static_cast<float>(rng.uniform(-1, 1));
  return v;
}

// Args: channels in, channels out, spatial size, kernel, stride.
ConvGeometry geometry(const benchmark::State& st) {
  const auto C = static_cast<std::size_t>(st.range(0)), F = static_cast<std::size_t>(st.range(1));
  const auto H = static_cast<std::size_t>(st.range(2)), k = static_cast<std::size_t>(st.range(3));
  return conv_geometry({2, C, H, H}, {F, C, k, k}, static_cast<std::size_t>(st.range(4)), k / 2);
}

template <void (*Conv)(const ConvGeometry&, const float*, const float*, const float*, float*)>
void conv_forward(benchmark::State& st) {
  const auto g = geometry(st);
  const auto x = noise(g.batch * g.in_channels * g.in_pixels(), 1);
  const auto w = noise(g.filters * g.col_rows(), 2);
  const auto b = noise(g.filters, 3);
  std::vector<float> out(g.batch * g.filters * g.out_pixels());
  for (auto _ : st) {
    Conv(g, x.data(), w.data(), b.data(), out.data());
    benchmark::DoNotOptimize(out.data());
  }
  st.SetItemsProcessed(st.iterations() * static_cast<std::int64_t>(g.batch * g.filters * g.out_pixels() * g.col_rows()));
}

template <void (*Conv)(const ConvGeometry&, const float*, const float*, float*)>
void conv_backward_input(benchmark::State& st) {
  const auto g = geometry(st);
  const auto dout = noise(g.batch * g.filters * g.out_pixels(), 1);
  const auto w = noise(g.filters * g.col_rows(), 2);
  std::vector<float> dx(g.batch * g.in_channels * g.in_pixels());
  for (auto _ : st) {
    Conv(g, dout.data(), w.data(), dx.data());
    benchmark::DoNotOptimize(dx.data());
  }
}

void conv_args(benchmark::internal::Benchmark* b) {
  b->Args({1, 16, 192, 7, 2})->Args({32, 64, 48, 3, 2})->Args({192, 64, 24, 3, 1})->Args({17, 1, 192, 3, 1});
  b->Unit(benchmark::kMillisecond);
}

BENCHMARK(conv_forward<kernels::reference::conv2d_forward<float>>)->Name("conv_forward/reference")->Apply(conv_args);
BENCHMARK(conv_forward<kernels::parallel::conv2d_forward<float>>)->Name("conv_forward/parallel")->Apply(conv_args);
BENCHMARK(conv_backward_input<kernels::reference::conv2d_backward_input<float>>)
    ->Name("conv_backward_input/reference")
    ->Apply(conv_args);
BENCHMARK(conv_backward_input<kernels::parallel::conv2d_backward_input<float>>)
    ->Name("conv_backward_input/parallel")
    ->Apply(conv_args);

Exec exec_of(const benchmark::State& st) { return st.range(0) ? Exec::parallel : Exec::serial; }

void radon(benchmark::State& st) {
  const Geometry geo;
  const auto img = render_phantom(PhantomSpec::shepp_logan(), geo.image_size, false);
  for (auto _ : st) benchmark::DoNotOptimize(radon_forward(img, geo, exec_of(st)));
}
BENCHMARK(radon)->ArgName("parallel")->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void fbp(benchmark::State& st) {
  const Geometry geo;
  const auto sino = radon_forward(render_phantom(PhantomSpec::shepp_logan(), geo.image_size, false), geo);
  for (auto _ : st) benchmark::DoNotOptimize(fbp_reconstruct(sino, geo, {}, exec_of(st)));
}
BENCHMARK(fbp)->ArgName("parallel")->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void linear_interp(benchmark::State& st) {
  const Geometry geo;
  Rng rng(5);
  const auto s = make_sample(rng, SampleConfig{}, geo);
  for (auto _ : st)
    benchmark::DoNotOptimize(linear_interp_inpaint(s.sinograms.corrupted, s.sinograms.trace_mask, exec_of(st)));
}
BENCHMARK(linear_interp)->ArgName("parallel")->Arg(0)->Arg(1)->Unit(benchmark::kMicrosecond);

}  // namespace

BENCHMARK_MAIN();
