#include "pcmar/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>

#include "pcmar/baselines.hpp"
#include "pcmar/checkpoint.hpp"
#include "pcmar/metrics.hpp"
#include "pcmar/tensor_io.hpp"

namespace pcmar {
namespace {

constexpr std::uint64_t kInitSalt = 0x1D2C3B4A59687766ull;
constexpr std::uint64_t kShuffleSalt = 0x5EEDF00DCAFEBABEull;

const std::set<std::string> kUnetKeys = {"in_channels",      "encoder_kernels", "encoder_strides", "encoder_channels",
                                         "decoder_channels", "decoder_kernel",  "leaky_slope",     "mask_padding"};

void make_dirs(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed: " + path.string());
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

Tensor hole_mask_of(const Tensor& mask) {
  Tensor holes = mask;
  for (auto& v : holes.data()) v = 1.0f - v;
  return holes;
}

Tensor stack_batch(const std::vector<const Tensor*>& items) {
  const auto& s = items.front()->shape();
  Tensor out({items.size(), s[1], s[2], s[3]});
  const auto per = items.front()->size();
  for (std::size_t i = 0; i < items.size(); ++i) std::copy_n(items[i]->ptr(), per, out.ptr() + i * per);
  return out;
}

std::vector<StoredSample> read_split(const RunConfig& cfg, const RunLayout& layout, Split split) {
  std::vector<StoredSample> out;
  const auto n = split_count(cfg, split);
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto dir = layout.sample_dir(split, i);
    if (!fs::exists(dir)) throw IoError("dataset missing sample " + dir.string() + " (run generate first)");
    out.push_back(read_sample(dir));
  }
  return out;
}

UNetSpec spec_for(const RunConfig& cfg, UNetVariant variant) {
  UNetSpec spec = cfg.unet;
  spec.variant = variant;
  return spec;
}

UNet<float> load_network(const RunConfig& cfg, const RunLayout& layout, UNetVariant variant) {
  const auto spec = spec_for(cfg, variant);
  const auto dir = layout.model_dir(variant);
  const auto cfg_path = dir / "unet.cfg";
  if (!fs::exists(cfg_path)) throw IoError("no trained model at " + dir.string() + " (run train first)");
  const auto stored = UNetSpec::from_keyvalue(KeyValue::load(cfg_path));
  if (stored.to_keyvalue().str() != spec.to_keyvalue().str()) {
    throw ValueError("network spec in " + cfg_path.string() + " does not match the run configuration");
  }
  UNet<float> net(spec, 0);
  load_checkpoint(net.parameters(), dir / "checkpoint_best");
  return net;
}

double mean_hole_rmse(UNet<float>& net, const std::vector<StoredSample>& samples) {
  std::vector<double> v;
  for (const auto& s : samples) {
    const Tensor holes = hole_mask_of(s.mask);
    v.push_back(rmse(network_inpaint(net, s.corrupted, s.mask), s.clean, &holes));
  }
  return mean(v);
}

}  // namespace

// ---------------------------------------------------------------- config

void RunConfig::validate() const {
  if (train_count < 1 || val_count < 1 || test_count < 1) throw ValueError("sample counts must be >= 1");
  if (train.batch_size < 1) throw ValueError("batch_size must be >= 1");
  if (train.epochs < 1) throw ValueError("epochs must be >= 1");
  if (!(recon_window_hi > recon_window_lo)) throw ValueError("recon_window_hi must exceed recon_window_lo");
  geometry.validate();
  sample.validate();
  unet.validate();
}

KeyValue RunConfig::to_keyvalue() const {
  KeyValue kv;
  kv.set("seed", seed);
  kv.set("train_count", static_cast<std::uint64_t>(train_count));
  kv.set("val_count", static_cast<std::uint64_t>(val_count));
  kv.set("test_count", static_cast<std::uint64_t>(test_count));
  const auto geo_kv = geometry.to_keyvalue();
  for (const auto& [k, v] : geo_kv.items()) kv.set(k, v);
  sample.write(kv);
  const auto unet_kv = unet.to_keyvalue();
  for (const auto& [k, v] : unet_kv.items())
    if (kUnetKeys.count(k)) kv.set(k, v);
  kv.set("lr", train.adam.lr);
  kv.set("beta1", train.adam.beta1);
  kv.set("beta2", train.adam.beta2);
  kv.set("eps", train.adam.eps);
  kv.set("epochs", static_cast<std::uint64_t>(train.epochs));
  kv.set("batch_size", static_cast<std::uint64_t>(train.batch_size));
  kv.set("max_steps", static_cast<std::uint64_t>(train.max_steps));
  kv.set("recon_window_lo", recon_window_lo);
  kv.set("recon_window_hi", recon_window_hi);
  kv.set("fbp_hann", fbp_hann ? 1 : 0);
  return kv;
}

RunConfig RunConfig::from_keyvalue(const KeyValue& kv) {
  const RunConfig defaults;
  const auto known = defaults.to_keyvalue();
  for (const auto& [k, v] : kv.items()) {
    if (!known.has(k)) throw ValueError("unknown configuration key '" + k + "'");
  }
  RunConfig c;
  c.seed = kv.get_u64("seed", 0);
  c.train_count = static_cast<std::size_t>(kv.get_int("train_count", 200));
  c.val_count = static_cast<std::size_t>(kv.get_int("val_count", 20));
  c.test_count = static_cast<std::size_t>(kv.get_int("test_count", 20));
  c.geometry = Geometry::from_keyvalue(kv);
  c.sample = SampleConfig::read(kv);
  KeyValue unet_kv;
  for (const auto& [k, v] : kv.items())
    if (kUnetKeys.count(k)) unet_kv.set(k, v);
  c.unet = UNetSpec::from_keyvalue(unet_kv);
  c.train.adam.lr = kv.get_double("lr", c.train.adam.lr);
  c.train.adam.beta1 = kv.get_double("beta1", c.train.adam.beta1);
  c.train.adam.beta2 = kv.get_double("beta2", c.train.adam.beta2);
  c.train.adam.eps = kv.get_double("eps", c.train.adam.eps);
  c.train.epochs = static_cast<std::size_t>(kv.get_int("epochs", 20));
  c.train.batch_size = static_cast<std::size_t>(kv.get_int("batch_size", 2));
  c.train.max_steps = static_cast<std::size_t>(kv.get_int("max_steps", 0));
  c.recon_window_lo = kv.get_double("recon_window_lo", c.recon_window_lo);
  c.recon_window_hi = kv.get_double("recon_window_hi", c.recon_window_hi);
  c.fbp_hann = kv.get_int("fbp_hann", 0) != 0;
  c.validate();
  return c;
}

RunConfig RunConfig::load(const fs::path& path) { return from_keyvalue(KeyValue::load(path)); }

const char* split_name(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "?";
}

Split parse_split(const std::string& name) {
  if (name == "train") return Split::train;
  if (name == "val") return Split::val;
  if (name == "test") return Split::test;
  throw ValueError("unknown split '" + name + "' (expected train|val|test)");
}

std::size_t split_count(const RunConfig& cfg, Split s) {
  switch (s) {
    case Split::train: return cfg.train_count;
    case Split::val: return cfg.val_count;
    case Split::test: return cfg.test_count;
  }
  return 0;
}

std::uint64_t sample_seed(std::uint64_t run_seed, Split split, std::size_t index) {
  const std::uint64_t id = static_cast<std::uint64_t>(split) + 1;
  return splitmix64(run_seed ^ ((id << 32) | static_cast<std::uint64_t>(index)));
}

std::uint64_t network_init_seed(std::uint64_t run_seed) { return splitmix64(run_seed ^ kInitSalt); }
std::uint64_t shuffle_seed(std::uint64_t run_seed) { return splitmix64(run_seed ^ kShuffleSalt); }

fs::path RunLayout::sample_dir(Split s, std::size_t i) const {
  char name[32];
  std::snprintf(name, sizeof name, "sample_%04zu", i);
  return split_dir(s) / name;
}

// ---------------------------------------------------------------- samples

void write_sample(const Sample& s, const fs::path& dir) {
  make_dirs(dir);
  tensor_write(s.sinograms.clean, dir / "clean.tnsr");
  tensor_write(s.sinograms.corrupted, dir / "corrupted.tnsr");
  tensor_write(s.sinograms.trace_mask, dir / "mask.tnsr");
  tensor_write(s.phantom, dir / "phantom.tnsr");
  write_text(dir / "spec.txt", s.spec.to_text());
}

StoredSample read_sample(const fs::path& dir) {
  StoredSample s;
  s.clean = tensor_read(dir / "clean.tnsr");
  s.corrupted = tensor_read(dir / "corrupted.tnsr");
  s.mask = tensor_read(dir / "mask.tnsr");
  s.phantom = tensor_read(dir / "phantom.tnsr");
  s.spec = PhantomSpec::from_text(read_text(dir / "spec.txt"));
  if (s.clean.shape() != s.corrupted.shape() || s.clean.shape() != s.mask.shape()) {
    throw FormatError("inconsistent sinogram shapes in " + dir.string());
  }
  return s;
}

// ---------------------------------------------------------------- canvas

CanvasLayout canvas_layout(std::size_t angles, std::size_t detectors, std::size_t multiple) {
  CanvasLayout l;
  l.angles = angles;
  l.detectors = detectors;
  l.rows = (angles + multiple - 1) / multiple * multiple;
  l.cols = (detectors + multiple - 1) / multiple * multiple;
  l.left = (l.cols - detectors) / 2;
  if (l.rows - angles > angles) throw ValueError("canvas padding would exceed one half-turn of angles");
  return l;
}

Tensor to_canvas(const Tensor& sino, const CanvasLayout& l, float detector_fill) {
  if (sino.ndim() != 2 || sino.dim(0) != l.angles || sino.dim(1) != l.detectors) {
    throw ShapeError("to_canvas: sinogram " + shape_str(sino.shape()) + " does not match layout");
  }
  Tensor out({1, 1, l.rows, l.cols}, detector_fill);
  for (std::size_t r = 0; r < l.rows; ++r)
    for (std::size_t j = 0; j < l.detectors; ++j) {
      out.at(0, 0, r, l.left + j) = r < l.angles ? sino.at(r, j) : sino.at(r - l.angles, l.detectors - 1 - j);
    }
  return out;
}

Tensor from_canvas(const Tensor& canvas, const CanvasLayout& l) {
  if (canvas.ndim() != 4 || canvas.dim(2) != l.rows || canvas.dim(3) != l.cols) {
    throw ShapeError("from_canvas: canvas " + shape_str(canvas.shape()) + " does not match layout");
  }
  Tensor out({l.angles, l.detectors});
  for (std::size_t r = 0; r < l.angles; ++r)
    for (std::size_t j = 0; j < l.detectors; ++j) out.at(r, j) = canvas.at(0, 0, r, l.left + j);
  return out;
}

Tensor network_inpaint(UNet<float>& net, const Tensor& corrupted, const Tensor& mask) {
  const auto l = canvas_layout(corrupted.dim(0), corrupted.dim(1), net.spec().resolution_multiple());
  Tensor input = corrupted;
  for (std::size_t i = 0; i < input.size(); ++i) input[i] *= mask[i];
  MaskedImage x{to_canvas(input, l, 0.0f), to_canvas(mask, l, 1.0f)};
  auto out = net.forward(x.data, x.mask);
  // Valid pixels come from the measured sinogram, not the zero-filled input.
  Tensor composite = from_canvas(composite_output(out.prediction->value, x), l);
  for (std::size_t i = 0; i < composite.size(); ++i)
    if (mask[i] != 0.0f) composite[i] = corrupted[i];
  composite.require_finite("network_inpaint");
  return composite;
}

// ---------------------------------------------------------------- commands

bool is_network_method(const std::string& method) { return method == "partial" || method == "conventional"; }

void require_known_method(const std::string& method) {
  static const std::set<std::string> known = {"clean", "corrupted", "linear", "partial", "conventional"};
  if (!known.count(method)) throw ValueError("unknown method '" + method + "'");
}

void cmd_generate(const RunConfig& cfg, const fs::path& root) {
  cfg.validate();
  const RunLayout layout{root};
  make_dirs(layout.data_dir());
  cfg.to_keyvalue().save(layout.data_dir() / "config.txt");
  cfg.geometry.to_keyvalue().save(layout.data_dir() / "geometry.txt");
  std::string manifest;
  for (Split split : {Split::train, Split::val, Split::test}) {
    for (std::size_t i = 0; i < split_count(cfg, split); ++i) {
      const auto seed = sample_seed(cfg.seed, split, i);
      Rng rng(seed);
      const Sample s = make_sample(rng, cfg.sample, cfg.geometry);
      const auto dir = layout.sample_dir(split, i);
      write_sample(s, dir);
      manifest += std::string(split_name(split)) + " " + std::to_string(i) + " " +
                  fs::relative(dir, layout.data_dir()).generic_string() + " " + std::to_string(seed) + "\n";
    }
  }
  write_text(layout.data_dir() / "manifest.txt", manifest);
}

TrainSummary cmd_train(const RunConfig& cfg, const fs::path& root, UNetVariant variant) {
  cfg.validate();
  const RunLayout layout{root};
  const auto out_dir = layout.model_dir(variant);
  make_dirs(out_dir);
  cfg.to_keyvalue().save(out_dir / "config.txt");
  const auto spec = spec_for(cfg, variant);
  spec.to_keyvalue().save(out_dir / "unet.cfg");

  const auto train = read_split(cfg, layout, Split::train);
  const auto val = read_split(cfg, layout, Split::val);
  const auto l = canvas_layout(cfg.geometry.n_angles, cfg.geometry.n_detectors, spec.resolution_multiple());

  std::vector<Tensor> inputs, masks, targets;
  for (const auto& s : train) {
    if (s.clean.dim(0) != l.angles || s.clean.dim(1) != l.detectors) {
      throw FormatError("dataset sinogram shape " + shape_str(s.clean.shape()) + " does not match the configured geometry");
    }
    Tensor input = s.corrupted;
    for (std::size_t i = 0; i < input.size(); ++i) input[i] *= s.mask[i];
    inputs.push_back(to_canvas(input, l, 0.0f));
    masks.push_back(to_canvas(s.mask, l, 1.0f));
    targets.push_back(to_canvas(s.clean, l, 0.0f));
  }

  UNet<float> net(spec, network_init_seed(cfg.seed));
  auto params = net.parameters();
  auto adam = ag::adam_init(params);
  Rng order_rng(shuffle_seed(cfg.seed));

  std::ofstream log(out_dir / "loss.csv", std::ios::trunc);
  if (!log) throw IoError("cannot write " + (out_dir / "loss.csv").string());
  log << "step,total,valid,hole,tv\n";
  std::ofstream val_log(out_dir / "val.csv", std::ios::trunc);
  val_log << "epoch,hole_rmse\n";

  TrainSummary summary;
  double best = std::numeric_limits<double>::infinity();
  std::size_t step = 0;
  std::vector<std::size_t> order(train.size());
  bool stop = false;
  for (std::size_t epoch = 0; epoch < cfg.train.epochs && !stop; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t i = order.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(order_rng.uniform_int(0, static_cast<std::int64_t>(i - 1)));
      std::swap(order[i - 1], order[j]);
    }
    for (std::size_t b0 = 0; b0 < order.size(); b0 += cfg.train.batch_size) {
      if (cfg.train.max_steps && step >= cfg.train.max_steps) {
        stop = true;
        break;
      }
      std::vector<const Tensor*> bi, bm, bt;
      for (std::size_t k = b0; k < std::min(order.size(), b0 + cfg.train.batch_size); ++k) {
        bi.push_back(&inputs[order[k]]);
        bm.push_back(&masks[order[k]]);
        bt.push_back(&targets[order[k]]);
      }
      const Tensor data = stack_batch(bi), mask = stack_batch(bm), target = stack_batch(bt);
      for (auto* p : params) p->zero_grad();
      LossTerms<float> terms;
      try {
        auto out = net.forward(data, mask);
        terms = inpainting_loss(out.prediction, target, mask);
        if (!std::isfinite(terms.total->value[0])) throw ValueError("loss is not finite");
        ag::backward(terms.total);
      } catch (const ValueError& e) {
        throw Error("training diverged at step " + std::to_string(step) + ": " + e.what());
      }
      const double total = terms.total->value[0];
      ag::adam_step(params, adam, cfg.train.adam);
      summary.log.push_back({step, total, terms.valid, terms.hole, terms.tv});
      log << step << ',' << fmt(total) << ',' << fmt(terms.valid) << ',' << fmt(terms.hole) << ',' << fmt(terms.tv) << '\n';
      ++step;
    }
    log.flush();
    const double v = mean_hole_rmse(net, val);
    summary.val_hole_rmse.push_back(v);
    val_log << epoch << ',' << fmt(v) << '\n' << std::flush;
    save_checkpoint(params, out_dir / "checkpoint_last");
    if (v < best) {
      best = v;
      summary.best_epoch = epoch;
      save_checkpoint(params, out_dir / "checkpoint_best");
    }
  }
  if (!log) throw IoError("write failed: " + (out_dir / "loss.csv").string());
  return summary;
}

void cmd_inpaint(const RunConfig& cfg, const fs::path& root, Split split, const std::string& method) {
  cfg.validate();
  require_known_method(method);
  if (method != "linear" && !is_network_method(method)) throw ValueError("inpaint method must be partial|conventional|linear");
  const RunLayout layout{root};
  const auto out_dir = layout.inpaint_dir(method, split);
  make_dirs(out_dir);
  cfg.to_keyvalue().save(out_dir / "config.txt");

  std::optional<UNet<float>> net;
  if (is_network_method(method)) net.emplace(load_network(cfg, layout, parse_variant(method)));
  for (std::size_t i = 0; i < split_count(cfg, split); ++i) {
    const auto s = read_sample(layout.sample_dir(split, i));
    const Tensor inpainted = net ? network_inpaint(*net, s.corrupted, s.mask) : linear_interp_inpaint(s.corrupted, s.mask);
    const auto dir = out_dir / layout.sample_dir(split, i).filename();
    make_dirs(dir);
    tensor_write(inpainted, dir / "inpainted.tnsr");
  }
}

void cmd_reconstruct(const RunConfig& cfg, const fs::path& root, Split split, const std::string& source) {
  cfg.validate();
  require_known_method(source);
  const RunLayout layout{root};
  const auto out_dir = layout.recon_dir(source, split);
  make_dirs(out_dir);
  cfg.to_keyvalue().save(out_dir / "config.txt");
  FbpOptions opts;
  opts.hann = cfg.fbp_hann;
  for (std::size_t i = 0; i < split_count(cfg, split); ++i) {
    const auto name = layout.sample_dir(split, i).filename();
    Tensor sino;
    if (source == "clean" || source == "corrupted") {
      sino = tensor_read(layout.sample_dir(split, i) / (source + ".tnsr"));
    } else {
      const auto path = layout.inpaint_dir(source, split) / name / "inpainted.tnsr";
      if (!fs::exists(path)) throw IoError("missing sinogram " + path.string() + " (run inpaint first)");
      sino = tensor_read(path);
    }
    const Tensor recon = fbp_reconstruct(sino, cfg.geometry, opts);
    const auto dir = out_dir / name;
    make_dirs(dir);
    tensor_write(recon, dir / "recon.tnsr");
    pgm_export(recon, dir / "recon.pgm", static_cast<float>(cfg.recon_window_lo), static_cast<float>(cfg.recon_window_hi));
  }
}

std::vector<double> MetricsReport::column(const std::string& method, double MetricsRow::*field) const {
  std::vector<double> out;
  for (const auto& r : rows)
    if (r.method == method) out.push_back(r.*field);
  return out;
}

double MetricsReport::win_rate(const std::string& a, const std::string& b, double MetricsRow::*field) const {
  const auto va = column(a, field), vb = column(b, field);
  if (va.size() != vb.size() || va.empty()) return 0.0;
  std::size_t wins = 0;
  for (std::size_t i = 0; i < va.size(); ++i) wins += va[i] <= vb[i];
  return static_cast<double>(wins) / static_cast<double>(va.size());
}

std::string MetricsReport::csv() const {
  std::string out = "sample,method,hole_rmse,sino_rmse,recon_rmse,recon_ssim\n";
  for (const auto& r : rows) {
    out += std::to_string(r.sample) + "," + r.method + "," + fmt(r.hole_rmse) + "," + fmt(r.sino_rmse) + "," +
           fmt(r.recon_rmse) + "," + fmt(r.recon_ssim) + "\n";
  }
  return out;
}

std::string MetricsReport::summary() const {
  std::ostringstream os;
  os << "method        metric        mean          median\n";
  const std::pair<const char*, double MetricsRow::*> fields[] = {{"hole_rmse", &MetricsRow::hole_rmse},
                                                                 {"sino_rmse", &MetricsRow::sino_rmse},
                                                                 {"recon_rmse", &MetricsRow::recon_rmse},
                                                                 {"recon_ssim", &MetricsRow::recon_ssim}};
  for (const auto& m : methods)
    for (const auto& [name, field] : fields) {
      const auto col = column(m, field);
      char line[160];
      std::snprintf(line, sizeof line, "%-13s %-13s %-13s %s\n", m.c_str(), name, fmt(mean(col)).c_str(),
                    fmt(median(col)).c_str());
      os << line;
    }
  auto has = [&](const char* m) { return std::find(methods.begin(), methods.end(), m) != methods.end(); };
  if (has("partial") && has("conventional")) {
    os << "win_rate partial<=conventional hole_rmse " << fmt(win_rate("partial", "conventional", &MetricsRow::hole_rmse)) << '\n';
    os << "win_rate partial<=conventional recon_rmse " << fmt(win_rate("partial", "conventional", &MetricsRow::recon_rmse)) << '\n';
  }
  for (const char* net : {"partial", "conventional"})
    if (has(net) && has("linear")) {
      os << "win_rate " << net << "<=linear hole_rmse " << fmt(win_rate(net, "linear", &MetricsRow::hole_rmse)) << '\n';
    }
  return os.str();
}

MetricsReport cmd_evaluate(const RunConfig& cfg, const fs::path& root, Split split, const std::vector<std::string>& methods) {
  cfg.validate();
  if (methods.empty()) throw ValueError("evaluate needs at least one method");
  for (const auto& m : methods) require_known_method(m);
  const RunLayout layout{root};
  const auto out_dir = layout.eval_dir(split);
  make_dirs(out_dir);
  cfg.to_keyvalue().save(out_dir / "config.txt");

  MetricsReport report;
  report.methods = methods;
  for (std::size_t i = 0; i < split_count(cfg, split); ++i) {
    const auto s = read_sample(layout.sample_dir(split, i));
    const auto name = layout.sample_dir(split, i).filename();
    const Tensor holes = hole_mask_of(s.mask);
    const Tensor metal = render_metal(s.spec, cfg.geometry.image_size);
    Tensor tissue(metal.shape());
    for (std::size_t k = 0; k < metal.size(); ++k) tissue[k] = metal[k] > 0.0f ? 0.0f : 1.0f;
    double range = 0;
    for (float v : s.phantom.data()) range = std::max(range, static_cast<double>(v));
    if (!(range > 0)) range = 1.0;

    for (const auto& m : methods) {
      Tensor sino;
      if (m == "clean" || m == "corrupted") {
        sino = m == "clean" ? s.clean : s.corrupted;
      } else {
        const auto path = layout.inpaint_dir(m, split) / name / "inpainted.tnsr";
        if (!fs::exists(path)) throw IoError("missing inpainted sinogram for method " + m + ": " + path.string());
        sino = tensor_read(path);
      }
      const auto recon_path = layout.recon_dir(m, split) / name / "recon.tnsr";
      if (!fs::exists(recon_path)) throw IoError("missing reconstruction for method " + m + ": " + recon_path.string());
      const Tensor recon = tensor_read(recon_path);
      MetricsRow row;
      row.sample = i;
      row.method = m;
      row.hole_rmse = rmse(sino, s.clean, &holes);
      row.sino_rmse = rmse(sino, s.clean);
      row.recon_rmse = rmse(recon, s.phantom, &tissue);
      row.recon_ssim = ssim(recon, s.phantom, range, &tissue);
      report.rows.push_back(row);
    }
  }
  write_text(out_dir / "metrics.csv", report.csv());
  write_text(out_dir / "summary.txt", report.summary());
  return report;
}

MetricsReport run_pipeline(const RunConfig& cfg, const fs::path& root, const std::function<void(const std::string&)>& progress) {
  auto say = [&](const std::string& s) {
    if (progress) progress(s);
  };
  cfg.validate();
  make_dirs(root);
  cfg.to_keyvalue().save(root / "config.txt");
  say("generate");
  cmd_generate(cfg, root);
  for (auto v : {UNetVariant::partial, UNetVariant::conventional}) {
    say(std::string("train ") + variant_name(v));
    cmd_train(cfg, root, v);
  }
  const std::vector<std::string> methods = {"corrupted", "linear", "conventional", "partial"};
  for (const char* m : {"linear", "conventional", "partial"}) {
    say(std::string("inpaint ") + m);
    cmd_inpaint(cfg, root, Split::test, m);
  }
  for (const auto& m : methods) {
    say("reconstruct " + m);
    cmd_reconstruct(cfg, root, Split::test, m);
  }
  say("evaluate");
  return cmd_evaluate(cfg, root, Split::test, methods);
}

}  // namespace pcmar
