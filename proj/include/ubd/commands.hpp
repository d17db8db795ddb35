#pragma once

// Subcommand implementations shared by the CLI and the tests. Each command
// stages its outputs and commits them only after everything succeeded.

#include <cstdio>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "ubd/fairness.hpp"
#include "ubd/grid.hpp"
#include "ubd/io.hpp"
#include "ubd/manifest.hpp"
#include "ubd/rca.hpp"
#include "ubd/svg.hpp"

namespace ubd {

inline std::string fmt_num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

struct CaseEstimate {
  RcaEstimate estimate;
  Attributes attributes;
  std::optional<DiceScore> truth;  // DSC(prediction, ground truth) when both exist
};

/// Runs RCA for every non-reference case that carries a prediction.
inline std::vector<CaseEstimate> run_estimates(const Manifest& manifest, const RunConfig& cfg) {
  cfg.validate();
  const auto cases = load_cases(manifest);
  const ReferenceDatabase db = reference_database(cases);
  if (db.empty()) throw InputError("manifest has no reference cases with ground truth");
  std::vector<const LoadedCase*> targets;
  for (const auto& c : cases) {
    if (!c.reference && c.prediction) targets.push_back(&c);
  }
  if (targets.empty()) throw InputError("manifest has no non-reference case with a prediction");

  RcaOptions opt = cfg.rca_options();
  opt.threads = 1;
  std::vector<CaseEstimate> out(targets.size());
  parallel_for(targets.size(), cfg.threads, [&](std::size_t i) {
    const LoadedCase& c = *targets[i];
    CaseEstimate ce;
    ce.estimate = estimate_dsc_rca(c.id, c.image, *c.prediction, db, opt, cfg.aggregator);
    ce.attributes = c.attributes;
    if (c.ground_truth) ce.truth = dsc(*c.prediction, *c.ground_truth);
    out[i] = std::move(ce);
  });
  return out;
}

inline nlohmann::json dice_json(const DiceScore& d) {
  nlohmann::json per = nlohmann::json::object();
  for (const auto& [s, v] : d.per_structure) per[s] = v;
  return {{"per_structure", per}, {"macro_average", d.macro_average}};
}

inline void stage_estimates(io::StagedOutput& out, const std::vector<CaseEstimate>& rows) {
  std::string csv = "case_id,structure,dsc_rca,k_used,aggregator\n";
  nlohmann::json cases = nlohmann::json::array();
  for (const auto& r : rows) {
    const RcaEstimate& e = r.estimate;
    for (const auto& [s, v] : e.aggregate.per_structure) {
      csv += e.case_id + "," + s + "," + fmt_num(v) + "," + std::to_string(e.k_used) + "," + to_string(e.aggregator) +
             "\n";
    }
    nlohmann::json refs = nlohmann::json::array();
    for (const auto& p : e.per_reference) refs.push_back({{"reference_id", p.reference_id}, {"dice", dice_json(p.dice)}});
    nlohmann::json jc{{"case_id", e.case_id},       {"aggregator", to_string(e.aggregator)},
                      {"k_used", e.k_used},         {"aggregate", dice_json(e.aggregate)},
                      {"per_reference", refs},      {"warnings", e.warnings},
                      {"attributes", r.attributes}};
    if (r.truth) jc["true_dsc"] = dice_json(*r.truth);
    cases.push_back(std::move(jc));
  }
  out.add("estimates.csv", std::move(csv));
  out.add("estimates.json", nlohmann::json{{"cases", cases}}.dump(2) + "\n");
}

inline std::vector<CaseEstimate> cmd_estimate(const fs::path& manifest_path, const RunConfig& cfg) {
  const Manifest m = load_manifest(manifest_path);
  auto rows = run_estimates(m, cfg);
  io::StagedOutput out(cfg.output_dir);
  stage_estimates(out, rows);
  out.commit();
  return rows;
}

inline nlohmann::json audit_json(const AuditReport& r) {
  using nlohmann::json;
  json groups = json::array();
  for (const auto& g : r.groups) {
    json mr = json::object();
    for (const auto& [s, v] : g.mean_dsc_rca) mr[s] = v;
    json jg{{"group_value", g.group_value}, {"n_cases", g.n_cases}, {"mean_dsc_rca", mr}, {"case_ids", g.case_ids}};
    if (g.mean_dsc_true) {
      json mt = json::object();
      for (const auto& [s, v] : *g.mean_dsc_true) mt[s] = v;
      jg["mean_dsc_true"] = mt;
    }
    groups.push_back(std::move(jg));
  }
  json delta_rca = json::object();
  for (std::size_t s = 0; s < r.structures.size(); ++s) delta_rca[r.structures[s]] = r.delta_rca[s];
  json j{{"attribute", r.attribute},
         {"sign_convention", r.groups[0].group_value + " minus " + r.groups[1].group_value},
         {"structures", r.structures},
         {"groups", groups},
         {"delta_rca", delta_rca}};
  if (r.delta_true) {
    json dt = json::object();
    for (std::size_t s = 0; s < r.structures.size(); ++s) dt[r.structures[s]] = (*r.delta_true)[s];
    j["delta_true"] = dt;
    if (r.sign_agreement) j["sign_agreement"] = *r.sign_agreement;
    if (r.pearson_r) j["pearson_r"] = *r.pearson_r;
    if (r.fitted_slope) j["fitted_slope"] = *r.fitted_slope;
    if (r.fitted_intercept) j["fitted_intercept"] = *r.fitted_intercept;
  }
  return j;
}

inline std::string audit_csv(const AuditReport& r) {
  std::string csv =
      "structure,positive_group,other_group,mean_rca_positive,mean_rca_other,delta_rca,mean_true_positive,"
      "mean_true_other,delta_true\n";
  for (std::size_t s = 0; s < r.structures.size(); ++s) {
    csv += r.structures[s] + "," + r.groups[0].group_value + "," + r.groups[1].group_value + "," +
           fmt_num(r.groups[0].mean_dsc_rca[s].second) + "," + fmt_num(r.groups[1].mean_dsc_rca[s].second) + "," +
           fmt_num(r.delta_rca[s]) + ",";
    if (r.delta_true) {
      csv += fmt_num((*r.groups[0].mean_dsc_true)[s].second) + "," + fmt_num((*r.groups[1].mean_dsc_true)[s].second) +
             "," + fmt_num((*r.delta_true)[s]);
    } else {
      csv += ",,";
    }
    csv += "\n";
  }
  return csv;
}

inline AuditReport audit_estimates(const std::vector<CaseEstimate>& rows, const RunConfig& cfg) {
  std::vector<AuditCase> cases;
  for (const auto& r : rows) cases.push_back({r.estimate.case_id, r.estimate.aggregate, r.attributes, r.truth});
  return audit(cases, cfg.attribute, cfg.positive_group);
}

inline AuditReport cmd_audit(const fs::path& manifest_path, const RunConfig& cfg, std::ostream& log) {
  const Manifest m = load_manifest(manifest_path);
  for (const auto& c : m.cases) {
    if (!c.reference && c.prediction && !c.attributes.count(cfg.attribute))
      throw InputError("audit: case '" + c.id + "' lacks attribute '" + cfg.attribute + "'");
  }
  const auto rows = run_estimates(m, cfg);
  const AuditReport report = audit_estimates(rows, cfg);

  io::StagedOutput out(cfg.output_dir);
  stage_estimates(out, rows);
  out.add("audit.json", audit_json(report).dump(2) + "\n");
  out.add("audit.csv", audit_csv(report));
  if (report.delta_true) {
    std::vector<svg::Series> series;
    for (std::size_t s = 0; s < report.structures.size(); ++s) {
      series.push_back({report.structures[s], svg::palette(s), {{(*report.delta_true)[s], report.delta_rca[s]}}});
    }
    out.add("scatter.svg", svg::scatter("Estimated vs true gap (" + report.groups[0].group_value + " - " +
                                            report.groups[1].group_value + ")",
                                        "true gap (delta DSC)", "estimated gap (delta DSC RCA)", series));
  }
  out.commit();

  log << "attribute '" << report.attribute << "': delta = mean(" << report.groups[0].group_value << ") - mean("
      << report.groups[1].group_value << "); positive favours " << report.groups[0].group_value << "\n";
  for (std::size_t s = 0; s < report.structures.size(); ++s) {
    log << "  " << report.structures[s] << ": delta_rca = " << fmt_num(report.delta_rca[s]);
    if (report.delta_true) log << "  (delta_true = " << fmt_num((*report.delta_true)[s]) << ")";
    log << "\n";
  }
  return report;
}

// --- synthetic grid ---------------------------------------------------------

struct SyntheticGridConfig {
  RunConfig run;
  std::size_t n_test = 40;
  std::size_t n_refs = 20;
  int size = 64;
  double noise_level = 0.02;

  GridDatasetOptions dataset_options() const { return {run.seed, n_test, n_refs, size, noise_level}; }
  GridOptions grid_options() const {
    GridOptions g;
    g.rca = run.rca_options();
    g.seed = run.seed;
    g.attribute = "sex";
    g.positive_group = "M";
    return g;
  }
};

inline std::string level_matrix_csv(const GridResult& g, const std::vector<LevelMatrix>& m) {
  std::string csv = "structure,male_level";
  for (int j = 1; j <= kDegradationLevels; ++j) csv += ",female_" + std::to_string(j);
  csv += "\n";
  for (std::size_t s = 0; s < g.structures.size(); ++s) {
    for (int i = 0; i < kDegradationLevels; ++i) {
      csv += g.structures[s] + "," + std::to_string(i + 1);
      for (int j = 0; j < kDegradationLevels; ++j) csv += "," + fmt_num(m[s][i][j]);
      csv += "\n";
    }
  }
  return csv;
}

inline std::string grid_cases_csv(const GridResult& g) {
  std::string csv = "case_id,sex,level,structure,dsc_true,dsc_rca_mean,dsc_rca_max\n";
  for (const auto& r : g.records) {
    for (std::size_t s = 0; s < g.structures.size(); ++s) {
      csv += r.case_id + "," + to_string(r.sex) + "," + std::to_string(r.level) + "," + g.structures[s] + "," +
             fmt_num(r.truth.value(s)) + "," + fmt_num(r.rca_mean.value(s)) + "," + fmt_num(r.rca_max.value(s)) + "\n";
    }
  }
  return csv;
}

inline nlohmann::json grid_summary_json(const GridResult& g, const std::vector<GridSummary>& summaries,
                                        const SyntheticGridConfig& cfg) {
  using nlohmann::json;
  json structures = json::object();
  for (const auto& s : summaries) {
    json sa = json::object();
    json sa_max = json::object();
    for (const auto& [t, a] : s.sign_agreement) sa[fmt_num(t)] = {{"fraction", a.fraction}, {"n_retained", a.n_retained}};
    for (const auto& [t, a] : s.sign_agreement_max)
      sa_max[fmt_num(t)] = {{"fraction", a.fraction}, {"n_retained", a.n_retained}};
    json js{{"sign_agreement", sa}, {"sign_agreement_max", sa_max}};
    js["pearson_r"] = s.pearson_r ? json(*s.pearson_r) : json(nullptr);
    js["slope"] = s.fit ? json(s.fit->slope) : json(nullptr);
    js["intercept"] = s.fit ? json(s.fit->intercept) : json(nullptr);
    js["pearson_r_case_level"] = s.pearson_case_level ? json(*s.pearson_case_level) : json(nullptr);
    structures[s.structure] = js;
  }
  return json{{"seed", cfg.run.seed},
              {"n_test", cfg.n_test},
              {"n_refs", cfg.n_refs},
              {"size", cfg.size},
              {"k", cfg.run.k},
              {"levels", kDegradationLevels},
              {"sign_convention", "male minus female"},
              {"balanced", g.balanced},
              {"warnings", g.warnings},
              {"structures", structures}};
}

inline std::vector<svg::HeatmapPanel> heatmap_panels(const GridResult& g, const std::vector<LevelMatrix>& m) {
  std::vector<svg::HeatmapPanel> panels;
  for (std::size_t s = 0; s < g.structures.size(); ++s) {
    svg::HeatmapPanel p{g.structures[s], {}};
    for (const auto& row : m[s]) p.values.emplace_back(row.begin(), row.end());
    panels.push_back(std::move(p));
  }
  return panels;
}

struct SyntheticGridOutcome {
  GridResult grid;
  std::vector<GridSummary> summaries;
};

inline SyntheticGridOutcome cmd_synthetic_grid(const SyntheticGridConfig& cfg) {
  cfg.run.validate();
  const GridDataset ds = make_grid_dataset(cfg.dataset_options());
  SyntheticGridOutcome res;
  res.grid = run_grid(ds.corpus, ds.references, cfg.grid_options());
  res.summaries = summarize_grid(res.grid);
  const GridResult& g = res.grid;

  io::StagedOutput out(cfg.run.output_dir);
  out.add("grid_true.csv", level_matrix_csv(g, g.delta_true));
  out.add("grid_rca.csv", level_matrix_csv(g, g.delta_rca));
  out.add("grid_rca_max.csv", level_matrix_csv(g, g.delta_rca_max));
  out.add("grid_cases.csv", grid_cases_csv(g));
  out.add("heatmap_true.svg", svg::heatmaps("True gap (male - female)", "male checkpoint", "female checkpoint",
                                            heatmap_panels(g, g.delta_true)));
  out.add("heatmap_rca.svg", svg::heatmaps("Estimated gap via RCA (male - female)", "male checkpoint",
                                           "female checkpoint", heatmap_panels(g, g.delta_rca)));
  std::vector<svg::Series> series;
  for (std::size_t s = 0; s < g.structures.size(); ++s) series.push_back({g.structures[s], svg::palette(s), g.scatter(s)});
  out.add("grid_scatter.svg",
          svg::scatter("Estimated vs true gap, all checkpoint pairs", "true gap", "estimated gap", series));
  out.add("summary.json", grid_summary_json(g, res.summaries, cfg).dump(2) + "\n");
  out.commit();
  return res;
}

// --- phantom export ---------------------------------------------------------

struct GenPhantomsConfig {
  SyntheticGridConfig grid;
  int male_level = kDegradationLevels;
  int female_level = kDegradationLevels;
  std::string format = "png";
};

/// Writes the synthetic corpus and references as image/mask files with a
/// manifest. Target cases carry predictions from the chosen checkpoints
/// (identical to the in-process grid predictions) plus their ground truth.
inline Manifest cmd_gen_phantoms(const GenPhantomsConfig& cfg) {
  if (cfg.format != "png" && cfg.format != "pgm") throw InputError("gen-phantoms: format must be png or pgm");
  DegradationLevel::from_level(cfg.male_level);
  DegradationLevel::from_level(cfg.female_level);
  const GridDataset ds = make_grid_dataset(cfg.grid.dataset_options());
  const std::string ext = "." + cfg.format;
  io::StagedOutput out(cfg.grid.run.output_dir);
  Manifest m;
  m.structures = phantom_structures();

  auto stage_mask = [&](const LabelMask& mask, const std::string& stem) {
    std::map<std::string, std::string> paths;
    for (std::size_t s = 0; s < mask.structure_count(); ++s) {
      const std::string rel = "masks/" + stem + "_" + mask.structures()[s] + ext;
      out.add(rel, io::encode_gray8(io::from_channel(mask, s), rel));
      paths[mask.structures()[s]] = rel;
    }
    return MaskSource{paths};
  };

  for (const auto& r : ds.references.records()) {
    const std::string img = "images/" + r.id + ext;
    out.add(img, io::encode_gray8(io::from_image(r.image), img));
    m.cases.push_back({r.id, img, true, std::nullopt, stage_mask(r.mask, r.id + "_gt"), r.attributes});
  }
  for (std::size_t i = 0; i < ds.corpus.size(); ++i) {
    const PhantomCase& c = ds.corpus[i];
    const int level = c.sex == Sex::male ? cfg.male_level : cfg.female_level;
    const LabelMask pred = grid_prediction(c, i, level, cfg.grid.run.seed);
    const std::string img = "images/" + c.id + ext;
    out.add(img, io::encode_gray8(io::from_image(c.image), img));
    m.cases.push_back({c.id, img, false, stage_mask(pred, c.id + "_pred"), stage_mask(c.mask, c.id + "_gt"),
                       {{"sex", to_string(c.sex)}}});
  }
  out.add("manifest.json", manifest_json(m).dump(2) + "\n");
  out.commit();
  m.base_dir = cfg.grid.run.output_dir;
  return m;
}

}  // namespace ubd
