#include <CLI11.hpp>

#include <cstdio>
#include <iostream>

#include "pcmar/error.hpp"
#include "pcmar/pipeline.hpp"

using namespace pcmar;

namespace {

struct Common {
  std::string config;
  std::string out = "run";
  std::int64_t seed = -1;
  int threads = 0;
};

RunConfig load_config(const Common& c) {
  RunConfig cfg = c.config.empty() ? RunConfig{} : RunConfig::load(c.config);
  if (c.seed >= 0) cfg.seed = static_cast<std::uint64_t>(c.seed);
  cfg.validate();
  return cfg;
}

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("--config", c.config, "key=value run configuration file")->check(CLI::ExistingFile);
  sub->add_option("--seed", c.seed, "override the configured seed");
  sub->add_option("--out", c.out, "run directory");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sinogram inpainting for metal artifact reduction"};
  app.require_subcommand(1);
  Common common;
  std::string variant = "partial", split = "test", method = "partial";
  std::vector<std::string> methods = {"corrupted", "linear", "conventional", "partial"};

  auto* gen = app.add_subcommand("generate", "simulate phantoms and sinograms for all splits");
  add_common(gen, common);

  auto* train = app.add_subcommand("train", "train one network variant");
  add_common(train, common);
  train->add_option("--variant", variant, "partial | conventional")->check(CLI::IsMember({"partial", "conventional"}));

  auto* inpaint = app.add_subcommand("inpaint", "fill the metal trace of every sinogram in a split");
  add_common(inpaint, common);
  inpaint->add_option("--split", split)->check(CLI::IsMember({"train", "val", "test"}));
  inpaint->add_option("--method", method, "partial | conventional | linear")
      ->check(CLI::IsMember({"partial", "conventional", "linear"}));

  auto* recon = app.add_subcommand("reconstruct", "filtered backprojection of a sinogram source");
  add_common(recon, common);
  recon->add_option("--split", split)->check(CLI::IsMember({"train", "val", "test"}));
  recon->add_option("--source", method, "clean | corrupted | partial | conventional | linear")
      ->check(CLI::IsMember({"clean", "corrupted", "partial", "conventional", "linear"}));

  auto* eval = app.add_subcommand("evaluate", "metrics table and summary for a split");
  add_common(eval, common);
  eval->add_option("--split", split)->check(CLI::IsMember({"train", "val", "test"}));
  eval->add_option("--methods", methods)->delimiter(',');

  auto* run = app.add_subcommand("run", "generate, train both variants, inpaint, reconstruct and evaluate");
  add_common(run, common);

  auto* dump = app.add_subcommand("config", "print the effective configuration");
  add_common(dump, common);

  CLI11_PARSE(app, argc, argv);

  try {
    const RunConfig cfg = load_config(common);
    const fs::path root = common.out;
    if (*gen) {
      cmd_generate(cfg, root);
    } else if (*train) {
      const auto summary = cmd_train(cfg, root, parse_variant(variant));
      if (!summary.log.empty()) {
        std::printf("steps %zu  final loss %.6g  best epoch %zu  val hole rmse %.6g\n", summary.log.size(),
                    summary.log.back().total, summary.best_epoch, summary.val_hole_rmse[summary.best_epoch]);
      }
    } else if (*inpaint) {
      cmd_inpaint(cfg, root, parse_split(split), method);
    } else if (*recon) {
      cmd_reconstruct(cfg, root, parse_split(split), method);
    } else if (*eval) {
      std::cout << cmd_evaluate(cfg, root, parse_split(split), methods).summary();
    } else if (*run) {
      const auto report = run_pipeline(cfg, root, [](const std::string& s) { std::cerr << "[" << s << "]\n"; });
      std::cout << report.summary();
    } else if (*dump) {
      std::cout << cfg.to_keyvalue().str();
    }
  } catch (const std::exception& e) {
    std::cerr << "pconv_mar: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
