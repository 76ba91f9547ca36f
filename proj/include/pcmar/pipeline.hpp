#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "pcmar/autograd.hpp"
#include "pcmar/ct_sim.hpp"
#include "pcmar/pconv_net.hpp"

namespace pcmar {

namespace fs = std::filesystem;

struct TrainConfig {
  ag::AdamConfig adam;
  std::size_t epochs = 20;
  std::size_t batch_size = 2;
  std::size_t max_steps = 0;  // 0 = no limit
};

/// Everything a run needs. Serialized as key=value; unknown keys are errors.
struct RunConfig {
  std::uint64_t seed = 0;
  std::size_t train_count = 200;
  std::size_t val_count = 20;
  std::size_t test_count = 20;
  Geometry geometry;
  SampleConfig sample;
  UNetSpec unet = UNetSpec::desk_default(UNetVariant::partial);
  TrainConfig train;
  double recon_window_lo = 0.0;
  double recon_window_hi = 1.5;
  bool fbp_hann = false;

  void validate() const;
  KeyValue to_keyvalue() const;
  static RunConfig from_keyvalue(const KeyValue& kv);
  static RunConfig load(const fs::path& path);
};

enum class Split { train, val, test };

const char* split_name(Split s);
Split parse_split(const std::string& name);
std::size_t split_count(const RunConfig& cfg, Split s);

/// Per-sample seed: splitmix64(run_seed XOR (split_id << 32 | index)), with
/// split ids 1, 2, 3 for train, val, test. Distinct (split, index) pairs map
/// to distinct seeds because splitmix64 is a bijection.
std::uint64_t sample_seed(std::uint64_t run_seed, Split split, std::size_t index);

/// Seeds of the network initialization and of the batch shuffle. Both
/// variants use the same pair.
std::uint64_t network_init_seed(std::uint64_t run_seed);
std::uint64_t shuffle_seed(std::uint64_t run_seed);

/// Standard directory layout under one run root.
struct RunLayout {
  fs::path root;

  fs::path data_dir() const { return root / "data"; }
  fs::path split_dir(Split s) const { return data_dir() / split_name(s); }
  fs::path sample_dir(Split s, std::size_t i) const;
  fs::path model_dir(UNetVariant v) const { return root / "models" / variant_name(v); }
  fs::path inpaint_dir(const std::string& method, Split s) const { return root / "inpaint" / method / split_name(s); }
  fs::path recon_dir(const std::string& source, Split s) const { return root / "recon" / source / split_name(s); }
  fs::path eval_dir(Split s) const { return root / "eval" / split_name(s); }
};

struct StoredSample {
  Tensor clean, corrupted, mask, phantom;
  PhantomSpec spec;
};

void write_sample(const Sample& s, const fs::path& dir);
StoredSample read_sample(const fs::path& dir);

/// The sinogram padded to a network-compatible canvas. Extra angle rows
/// continue the sinogram over [pi, 2 pi) using p(theta + pi, s) = p(theta, -s);
/// extra detector columns are zero-valued and valid (outside the object).
struct CanvasLayout {
  std::size_t angles = 0, detectors = 0;
  std::size_t rows = 0, cols = 0;
  std::size_t left = 0;  // zero columns before detector 0
};

CanvasLayout canvas_layout(std::size_t angles, std::size_t detectors, std::size_t multiple);
/// [angles, detectors] -> [1,1,rows,cols].
Tensor to_canvas(const Tensor& sino, const CanvasLayout& layout, float detector_fill);
/// [1,1,rows,cols] -> [angles, detectors].
Tensor from_canvas(const Tensor& canvas, const CanvasLayout& layout);

/// Network inpainting of one sinogram: composite of the prediction over the
/// metal trace, valid pixels passed through.
Tensor network_inpaint(UNet<float>& net, const Tensor& corrupted, const Tensor& mask);

struct TrainLogRow {
  std::size_t step;
  double total, valid, hole, tv;
};

struct TrainSummary {
  std::vector<TrainLogRow> log;
  std::vector<double> val_hole_rmse;  // one per epoch
  std::size_t best_epoch = 0;
};

/// Methods understood by inpaint/reconstruct/evaluate.
bool is_network_method(const std::string& method);
void require_known_method(const std::string& method);

void cmd_generate(const RunConfig& cfg, const fs::path& root);
TrainSummary cmd_train(const RunConfig& cfg, const fs::path& root, UNetVariant variant);
/// method: partial | conventional | linear
void cmd_inpaint(const RunConfig& cfg, const fs::path& root, Split split, const std::string& method);
/// source: clean | corrupted | partial | conventional | linear
void cmd_reconstruct(const RunConfig& cfg, const fs::path& root, Split split, const std::string& source);

struct MetricsRow {
  std::size_t sample = 0;
  std::string method;
  double hole_rmse = 0;   // sinogram, metal trace only
  double sino_rmse = 0;   // sinogram, all pixels
  double recon_rmse = 0;  // reconstruction, metal pixels excluded
  double recon_ssim = 0;  // reconstruction, metal pixels excluded
};

struct MetricsReport {
  std::vector<std::string> methods;
  std::vector<MetricsRow> rows;

  std::vector<double> column(const std::string& method, double MetricsRow::*field) const;
  /// Fraction of samples where method a's metric is <= method b's.
  double win_rate(const std::string& a, const std::string& b, double MetricsRow::*field) const;
  std::string csv() const;
  std::string summary() const;
};

MetricsReport cmd_evaluate(const RunConfig& cfg, const fs::path& root, Split split, const std::vector<std::string>& methods);

/// generate -> train (both variants) -> inpaint -> reconstruct -> evaluate on
/// the test split. `progress` receives one line per stage.
MetricsReport run_pipeline(const RunConfig& cfg, const fs::path& root,
                           const std::function<void(const std::string&)>& progress = {});

}  // namespace pcmar
