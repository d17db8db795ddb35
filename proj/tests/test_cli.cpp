#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "support.hpp"
#include "ubd/commands.hpp"

namespace ubd {
namespace {

namespace fs = std::filesystem;

fs::path scratch(const std::string& name) {
  const fs::path p = fs::path(UBD_TEST_TMP) / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

struct CliRun {
  int code;
  std::string output;
};

CliRun run_cli(const std::string& args, const fs::path& cwd) {
  const fs::path log = cwd / "cli.log";
  const std::string cmd =
      "cd '" + cwd.string() + "' && '" + std::string(UBD_CLI_PATH) + "' " + args + " > '" + log.string() + "' 2>&1";
  const int status = std::system(cmd.c_str());
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, io::read_file(log)};
}

std::string slurp(const fs::path& p) { return io::read_file(p); }

void write(const fs::path& p, const std::string& bytes) {
  fs::create_directories(p.parent_path());
  std::ofstream(p, std::ios::binary) << bytes;
}

/// Writes images and per-structure masks for `cases` and returns a manifest.
struct DatasetCase {
  std::string id;
  Image image;
  std::optional<LabelMask> prediction;
  std::optional<LabelMask> truth;
  bool reference = false;
  Attributes attributes;
};

Manifest write_dataset(const fs::path& dir, const std::vector<DatasetCase>& cases) {
  Manifest m;
  m.structures = phantom_structures();
  m.base_dir = dir;
  for (const auto& c : cases) {
    ManifestCase mc{c.id, "img/" + c.id + ".png", c.reference, std::nullopt, std::nullopt, c.attributes};
    write(dir / mc.image, io::encode_png(io::from_image(c.image)));
    auto masks = [&](const LabelMask& mask, const std::string& tag) {
      std::map<std::string, std::string> paths;
      for (std::size_t s = 0; s < mask.structure_count(); ++s) {
        const std::string rel = "mask/" + c.id + "_" + tag + "_" + mask.structures()[s] + ".png";
        write(dir / rel, io::encode_png(io::from_channel(mask, s)));
        paths[mask.structures()[s]] = rel;
      }
      return MaskSource{paths};
    };
    if (c.prediction) mc.prediction = masks(*c.prediction, "pred");
    if (c.truth) mc.ground_truth = masks(*c.truth, "gt");
    m.cases.push_back(mc);
  }
  write(dir / "manifest.json", manifest_json(m).dump(2));
  return m;
}

std::vector<DatasetCase> reference_cases(std::uint64_t seed, std::size_t n) {
  std::vector<DatasetCase> out;
  for (std::size_t i = 0; i < n; ++i) {
    const Sex sex = i % 2 ? Sex::female : Sex::male;
    auto ph = generate_phantom(PhantomSpec::sample(derive_seed(seed, {i}), sex));
    out.push_back({numbered_id("ref", i), ph.image, std::nullopt, ph.mask, true, {{"sex", to_string(sex)}}});
  }
  return out;
}

RunConfig small_config(const fs::path& out) {
  RunConfig cfg;
  cfg.k = 3;
  cfg.output_dir = out;
  return cfg;
}

TEST(Io, PngAndPgmRoundTrip) {
  Rng rng(1);
  io::Gray8 g{7, 5, std::vector<std::uint8_t>(35)};
  for (auto& p : g.pixels) p = static_cast<std::uint8_t>(rng.next() & 0xff);
  const auto png = io::decode_png(io::encode_png(g), "x");
  const auto pgm = io::decode_pgm(io::encode_pgm(g), "x");
  EXPECT_EQ(png.pixels, g.pixels);
  EXPECT_EQ(pgm.pixels, g.pixels);
  EXPECT_EQ(png.width, 7);
  EXPECT_EQ(pgm.height, 5);
}

TEST(Io, PgmWithCommentsAndSixteenBit) {
  const std::string header = "P5\n# comment\n2 1\n65535\n";
  const std::string data{'\xff', '\xff', '\x00', '\x00'};
  const auto g = io::decode_pgm(header + data, "x");
  EXPECT_EQ(g.pixels, (std::vector<std::uint8_t>{255, 0}));
  EXPECT_THROW(io::decode_pgm("P2\n1 1\n255\n0", "x"), InputError);
  EXPECT_THROW(io::decode_pgm("P5\n4 4\n255\n\x01", "x"), InputError);
  EXPECT_THROW(io::decode_png("not a png", "x"), InputError);
}

TEST(Io, BitmaskRoundTrip) {
  Rng rng(2);
  const auto m = test::random_mask(rng, 9, 6, 3, 0.5);
  const fs::path dir = scratch("bitmask");
  write(dir / "m.png", io::encode_png(io::to_bitmask(m)));
  EXPECT_EQ(io::read_bitmask(m.structures(), dir / "m.png"), m);
}

TEST(Io, StagedOutputCommitsAllOrNothing) {
  const fs::path dir = scratch("staged");
  write(dir / "a.csv", "old");
  {
    io::StagedOutput out(dir);
    out.add("a.csv", "new");
    out.add("sub/b.csv", "b");
    // Never committed: previous content survives.
  }
  EXPECT_EQ(slurp(dir / "a.csv"), "old");
  EXPECT_FALSE(fs::exists(dir / "sub/b.csv"));
  io::StagedOutput out(dir);
  out.add("a.csv", "new");
  out.add("sub/b.csv", "b");
  out.commit();
  EXPECT_EQ(slurp(dir / "a.csv"), "new");
  EXPECT_EQ(slurp(dir / "sub/b.csv"), "b");
  for (const auto& e : fs::recursive_directory_iterator(dir)) EXPECT_NE(e.path().extension(), ".tmp");
}

TEST(Manifest, ValidationErrorsNameTheCase) {
  const fs::path dir = scratch("manifest_errors");
  auto refs = reference_cases(5, 2);
  const Manifest m = write_dataset(dir, refs);
  json j = manifest_json(m);
  auto expect_error = [&](json bad, const std::string& needle) {
    try {
      parse_manifest(bad, dir);
      ADD_FAILURE() << "no error for " << needle;
    } catch (const InputError& e) {
      EXPECT_NE(std::string(e.what()).find(needle), std::string::npos) << e.what();
    }
  };
  json dup = j;
  dup["cases"][1]["id"] = "ref000";
  expect_error(dup, "duplicate case id 'ref000'");
  json missing = j;
  missing["cases"][1]["image"] = "img/nope.png";
  expect_error(missing, "nope.png");
  json version = j;
  version["version"] = 9;
  expect_error(version, "version");
  json keys = j;
  keys["cases"][1]["attributes"] = {{"age", "50"}};
  expect_error(keys, "ref001");
  json no_gt = j;
  no_gt["cases"][0].erase("ground_truth");
  expect_error(no_gt, "ref000");
  json partial = j;
  partial["cases"][0]["ground_truth"].erase("heart");
  expect_error(partial, "heart");
  EXPECT_NO_THROW(parse_manifest(j, dir));
  EXPECT_EQ(manifest_json(parse_manifest(j, dir)), j);
}

TEST(Config, JsonOverlayAndValidation) {
  RunConfig cfg;
  apply_config_json(cfg, json{{"k", 7}, {"aggregator", "max"}, {"registration", {{"demons_max_step", 0.5}}}});
  EXPECT_EQ(cfg.k, 7);
  EXPECT_EQ(cfg.aggregator, Aggregator::max);
  EXPECT_EQ(cfg.registration.demons_max_step, 0.5);
  EXPECT_THROW(apply_config_json(cfg, json{{"metric", "mi"}}), InputError);
  EXPECT_THROW(apply_config_json(cfg, json{{"k", "five"}}), InputError);
  cfg.threads = 0;
  EXPECT_THROW(cfg.validate(), InputError);
}

TEST(Estimate, DuplicateOfReferenceScoresHigh) {
  const fs::path dir = scratch("estimate_copy");
  auto cases = reference_cases(7, 6);
  DatasetCase target = cases[2];
  target.id = "target";
  target.reference = false;
  target.prediction = target.truth;
  target.truth.reset();
  cases.push_back(target);
  write_dataset(dir, cases);
  RunConfig cfg = small_config(dir / "out");
  cfg.k = 1;
  const auto rows = cmd_estimate(dir / "manifest.json", cfg);
  ASSERT_EQ(rows.size(), 1u);
  for (const auto& [s, v] : rows[0].estimate.aggregate.per_structure) EXPECT_GE(v, 0.95) << s;
  const std::string csv = slurp(dir / "out/estimates.csv");
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "case_id,structure,dsc_rca,k_used,aggregator");
  const json j = json::parse(slurp(dir / "out/estimates.json"));
  EXPECT_EQ(j["cases"][0]["per_reference"].size(), 1u);
}

TEST(Estimate, EmptyPredictionGivesZeroRows) {
  const fs::path dir = scratch("estimate_empty");
  auto cases = reference_cases(8, 4);
  cases.push_back({"blank", cases[0].image, LabelMask::empty(64, 64, phantom_structures()), std::nullopt, false,
                   {{"sex", "M"}}});
  write_dataset(dir, cases);
  cmd_estimate(dir / "manifest.json", small_config(dir / "out"));
  std::istringstream csv(slurp(dir / "out/estimates.csv"));
  std::string line;
  std::getline(csv, line);
  int rows = 0;
  while (std::getline(csv, line)) {
    EXPECT_NE(line.find(",0,3,mean"), std::string::npos) << line;
    ++rows;
  }
  EXPECT_EQ(rows, 2);
}

TEST(Estimate, NeedsTargetsAndReferences) {
  const fs::path dir = scratch("estimate_none");
  write_dataset(dir, reference_cases(9, 3));
  EXPECT_THROW(cmd_estimate(dir / "manifest.json", small_config(dir / "out")), InputError);
}

TEST(Cli, MissingImageFailsWithoutPartialOutput) {
  const fs::path dir = scratch("cli_missing");
  auto cases = reference_cases(10, 3);
  cases.push_back({"t0", cases[0].image, cases[0].truth, std::nullopt, false, {{"sex", "M"}}});
  write_dataset(dir, cases);
  fs::remove(dir / "img/t0.png");
  const CliRun r = run_cli("estimate --manifest manifest.json --out out --k 2", dir);
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.output.find("t0"), std::string::npos) << r.output;
  EXPECT_FALSE(fs::exists(dir / "out/estimates.csv"));
}

TEST(Cli, UsageErrorsExitOne) {
  const fs::path dir = scratch("cli_usage");
  EXPECT_EQ(run_cli("", dir).code, 1);
  EXPECT_EQ(run_cli("estimate", dir).code, 1);
  EXPECT_EQ(run_cli("estimate --manifest nope.json", dir).code, 1);
  EXPECT_EQ(run_cli("synthetic-grid --k 0", dir).code, 1);
  EXPECT_EQ(run_cli("frobnicate", dir).code, 1);
  EXPECT_EQ(run_cli("--help", dir).code, 0);
}

TEST(Cli, AuditIdenticalGroupsPrintsZeroGap) {
  const fs::path dir = scratch("cli_identical");
  auto cases = reference_cases(11, 5);
  for (int i = 0; i < 2; ++i) {
    for (const char* sex : {"M", "F"}) {
      const auto& src = cases[static_cast<std::size_t>(i)];
      cases.push_back({std::string("t") + sex + std::to_string(i), src.image, src.truth, std::nullopt, false,
                       {{"sex", sex}}});
    }
  }
  write_dataset(dir, cases);
  const CliRun r = run_cli("audit --manifest manifest.json --out out --k 2", dir);
  ASSERT_EQ(r.code, 0) << r.output;
  EXPECT_NE(r.output.find("lung: delta_rca = 0\n"), std::string::npos) << r.output;
  EXPECT_NE(r.output.find("heart: delta_rca = 0\n"), std::string::npos) << r.output;
  EXPECT_NE(r.output.find("mean(M) - mean(F)"), std::string::npos);
  const json j = json::parse(slurp(dir / "out/audit.json"));
  EXPECT_FALSE(j.contains("delta_true"));
  EXPECT_FALSE(j.contains("pearson_r"));
  EXPECT_FALSE(fs::exists(dir / "out/scatter.svg"));
}

TEST(Cli, AuditMissingAttributeNamesCase) {
  const fs::path dir = scratch("cli_attr");
  auto cases = reference_cases(12, 3);
  cases.push_back({"t0", cases[0].image, cases[0].truth, std::nullopt, false, {{"sex", "M"}}});
  cases.push_back({"t1", cases[1].image, cases[1].truth, std::nullopt, false, {{"sex", "F"}}});
  write_dataset(dir, cases);
  const CliRun r = run_cli("audit --manifest manifest.json --attribute site --out out", dir);
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.output.find("'t0' lacks attribute 'site'"), std::string::npos) << r.output;
}

TEST(Cli, GridCellEquivalence) {
  // The exported manifest for cell (male 3, female 10) audited through the
  // CLI must reproduce the in-process grid cell exactly.
  const fs::path dir = scratch("cli_equivalence");
  const CliRun gen = run_cli(
      "gen-phantoms --cases 8 --refs 6 --seed 21 --male-level 3 --female-level 10 --out ds --format pgm", dir);
  ASSERT_EQ(gen.code, 0) << gen.output;
  const CliRun aud = run_cli("audit --manifest ds/manifest.json --k 3 --seed 21 --out res", dir);
  ASSERT_EQ(aud.code, 0) << aud.output;
  const json j = json::parse(slurp(dir / "res/audit.json"));

  const auto ds = make_grid_dataset({.seed = 21, .n_test = 8, .n_refs = 6});
  GridOptions opt;
  opt.rca.k = 3;
  opt.seed = 21;
  const auto g = run_grid(ds.corpus, ds.references, opt);
  for (std::size_t s = 0; s < g.structures.size(); ++s) {
    const std::string& name = g.structures[s];
    EXPECT_EQ(j["delta_rca"][name].get<double>(), g.delta_rca[s][2][9]) << name;
    EXPECT_EQ(j["delta_true"][name].get<double>(), g.delta_true[s][2][9]) << name;
  }
  EXPECT_TRUE(fs::exists(dir / "res/scatter.svg"));
  EXPECT_TRUE(j.contains("pearson_r"));
}

TEST(Cli, GenPhantomsPngLoads) {
  const fs::path dir = scratch("cli_png");
  ASSERT_EQ(run_cli("gen-phantoms --cases 2 --refs 2 --size 48 --out ds", dir).code, 0);
  const auto m = load_manifest(dir / "ds/manifest.json");
  const auto cases = load_cases(m);
  EXPECT_EQ(cases.size(), 4u);
  EXPECT_EQ(cases.front().image.width(), 48);
}

TEST(Cli, SyntheticGridByteIdenticalAcrossRunsAndThreads) {
  const fs::path dir = scratch("cli_determinism");
  const std::string base = "synthetic-grid --cases 6 --refs 4 --size 48 --k 2 --seed 5";
  ASSERT_EQ(run_cli(base + " --threads 1 --out a", dir).code, 0);
  ASSERT_EQ(run_cli(base + " --threads 1 --out b", dir).code, 0);
  ASSERT_EQ(run_cli(base + " --threads 8 --out c", dir).code, 0);
  for (const char* f : {"grid_true.csv", "grid_rca.csv", "grid_rca_max.csv", "grid_cases.csv", "summary.json"}) {
    EXPECT_EQ(slurp(dir / "a" / f), slurp(dir / "b" / f)) << f;
    EXPECT_EQ(slurp(dir / "a" / f), slurp(dir / "c" / f)) << f;
  }
  const json s = json::parse(slurp(dir / "a/summary.json"));
  EXPECT_TRUE(s["structures"]["lung"].contains("pearson_r"));
  EXPECT_TRUE(s["structures"]["heart"]["sign_agreement"].contains("0.02"));
  for (const char* f : {"heatmap_true.svg", "heatmap_rca.svg", "grid_scatter.svg"}) EXPECT_TRUE(fs::exists(dir / "a" / f));
}

TEST(Cli, ThreadsFromEnvironment) {
  const fs::path dir = scratch("cli_env");
  const std::string args = "synthetic-grid --cases 4 --refs 3 --size 32 --k 1 --out o";
  const std::string cmd = "cd '" + dir.string() + "' && UBD_THREADS=3 '" + UBD_CLI_PATH + "' " + args + " >/dev/null";
  EXPECT_EQ(std::system(cmd.c_str()), 0);
  EXPECT_TRUE(fs::exists(dir / "o/grid_true.csv"));
}

}  // namespace
}  // namespace ubd
