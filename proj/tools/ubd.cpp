// ubd: unsupervised bias discovery for segmentation models.

#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>

#include "ubd/commands.hpp"

namespace {

struct CommonFlags {
  std::string manifest;
  std::string config;
  std::optional<int> k;
  std::optional<std::string> aggregator;
  std::optional<std::string> attribute;
  std::optional<std::string> positive_group;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  std::optional<std::string> out;
};

void add_common(CLI::App* cmd, CommonFlags& f, bool needs_manifest) {
  if (needs_manifest) cmd->add_option("--manifest", f.manifest, "Dataset manifest (JSON)")->required();
  cmd->add_option("--config", f.config, "JSON settings file; command-line flags take precedence");
  cmd->add_option("--k", f.k, "Number of reference images used per case");
  cmd->add_option("--aggregator", f.aggregator, "mean or max over the k reference scores");
  cmd->add_option("--attribute", f.attribute, "Attribute defining the two audit groups");
  cmd->add_option("--positive-group", f.positive_group, "Attribute value reported as the first group");
  cmd->add_option("--seed", f.seed, "Random seed");
  cmd->add_option("--threads", f.threads, "Worker threads (default: $UBD_THREADS or 1)");
  cmd->add_option("--out", f.out, "Output directory");
}

ubd::RunConfig resolve(const CommonFlags& f) {
  ubd::RunConfig cfg;
  cfg.threads = ubd::default_thread_count();
  if (!f.config.empty()) ubd::load_config_file(cfg, f.config);
  if (f.k) cfg.k = *f.k;
  if (f.aggregator) cfg.aggregator = ubd::parse_aggregator(*f.aggregator);
  if (f.attribute) cfg.attribute = *f.attribute;
  if (f.positive_group) cfg.positive_group = *f.positive_group;
  if (f.seed) cfg.seed = *f.seed;
  if (f.threads) cfg.threads = *f.threads;
  if (f.out) cfg.output_dir = *f.out;
  cfg.validate();
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Estimate segmentation quality without ground truth and audit it across demographic groups"};
  app.require_subcommand(1);

  CommonFlags est_flags;
  auto* est = app.add_subcommand("estimate", "Per-case RCA Dice estimates");
  add_common(est, est_flags, true);

  CommonFlags audit_flags;
  auto* aud = app.add_subcommand("audit", "Group gap in estimated Dice for one attribute");
  add_common(aud, audit_flags, true);

  CommonFlags grid_flags;
  ubd::SyntheticGridConfig grid_cfg;
  auto* grid = app.add_subcommand("synthetic-grid", "Checkpoint-pair experiment on synthetic phantoms");
  add_common(grid, grid_flags, false);
  grid->add_option("--cases", grid_cfg.n_test, "Test phantoms (alternating M/F)");
  grid->add_option("--refs", grid_cfg.n_refs, "Reference phantoms");
  grid->add_option("--size", grid_cfg.size, "Phantom side length in pixels");
  grid->add_option("--noise", grid_cfg.noise_level, "Gaussian intensity noise level");

  CommonFlags gen_flags;
  ubd::GenPhantomsConfig gen_cfg;
  auto* gen = app.add_subcommand("gen-phantoms", "Export the synthetic corpus as image files and a manifest");
  add_common(gen, gen_flags, false);
  gen->add_option("--cases", gen_cfg.grid.n_test, "Test phantoms (alternating M/F)");
  gen->add_option("--refs", gen_cfg.grid.n_refs, "Reference phantoms");
  gen->add_option("--size", gen_cfg.grid.size, "Phantom side length in pixels");
  gen->add_option("--noise", gen_cfg.grid.noise_level, "Gaussian intensity noise level");
  gen->add_option("--male-level", gen_cfg.male_level, "Checkpoint (1..12) producing male predictions");
  gen->add_option("--female-level", gen_cfg.female_level, "Checkpoint (1..12) producing female predictions");
  gen->add_option("--format", gen_cfg.format, "Image format: png or pgm");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*est) {
      const auto cfg = resolve(est_flags);
      const auto rows = ubd::cmd_estimate(est_flags.manifest, cfg);
      std::cout << "wrote estimates for " << rows.size() << " case(s) to " << cfg.output_dir.string() << "\n";
    } else if (*aud) {
      const auto cfg = resolve(audit_flags);
      ubd::cmd_audit(audit_flags.manifest, cfg, std::cout);
    } else if (*grid) {
      grid_cfg.run = resolve(grid_flags);
      const auto res = ubd::cmd_synthetic_grid(grid_cfg);
      for (const auto& s : res.summaries) {
        std::cout << s.structure << ": pearson_r = " << (s.pearson_r ? ubd::fmt_num(*s.pearson_r) : "n/a")
                  << ", slope = " << (s.fit ? ubd::fmt_num(s.fit->slope) : "n/a") << ", sign agreement";
        for (const auto& [t, a] : s.sign_agreement) std::cout << " @" << t << " = " << ubd::fmt_num(a.fraction);
        std::cout << "\n";
      }
      for (const auto& w : res.grid.warnings) std::cerr << "warning: " << w << "\n";
    } else if (*gen) {
      gen_cfg.grid.run = resolve(gen_flags);
      const auto m = ubd::cmd_gen_phantoms(gen_cfg);
      std::cout << "wrote " << m.cases.size() << " case(s) and manifest.json to "
                << gen_cfg.grid.run.output_dir.string() << "\n";
    }
  } catch (const ubd::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.kind() == ubd::Error::Kind::input ? 1 : 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
