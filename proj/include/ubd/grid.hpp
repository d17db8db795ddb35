#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ubd/fairness.hpp"
#include "ubd/metrics.hpp"
#include "ubd/parallel.hpp"
#include "ubd/phantom.hpp"
#include "ubd/random.hpp"
#include "ubd/rca.hpp"
#include "ubd/reference_db.hpp"

namespace ubd {

struct PhantomCase {
  std::string id;
  Sex sex = Sex::male;
  Image image;
  LabelMask mask;
};

/// Sex-balanced test corpus plus a disjoint reference database.
struct GridDataset {
  std::vector<PhantomCase> corpus;
  ReferenceDatabase references;
};

inline std::string numbered_id(const std::string& prefix, std::size_t i) {
  std::string n = std::to_string(i);
  while (n.size() < 3) n.insert(n.begin(), '0');
  return prefix + n;
}

/// Phantoms alternate M/F. Cases 2m and 2m+1 form a matched pair: the same
/// subject geometry with the male and female offsets applied, and separate
/// image noise.
inline std::vector<PhantomCase> make_phantom_cases(std::uint64_t seed, std::uint64_t stream, std::size_t count,
                                                   const std::string& prefix, int size, double noise_level) {
  std::vector<PhantomCase> cases(count);
  for (std::size_t i = 0; i < count; ++i) {
    const Sex sex = i % 2 == 0 ? Sex::male : Sex::female;
    auto spec = PhantomSpec::sample(derive_seed(seed, {stream, i / 2}), sex, size, noise_level);
    spec.seed = derive_seed(seed, {stream, i, 0x1});
    auto ph = generate_phantom(spec);
    cases[i] = PhantomCase{numbered_id(prefix, i), sex, std::move(ph.image), std::move(ph.mask)};
  }
  return cases;
}

struct GridDatasetOptions {
  std::uint64_t seed = 7;
  std::size_t n_test = 40;
  std::size_t n_refs = 20;
  int size = 64;
  double noise_level = 0.02;
};

inline GridDataset make_grid_dataset(const GridDatasetOptions& opt) {
  GridDataset ds;
  ds.corpus = make_phantom_cases(opt.seed, 1, opt.n_test, "case", opt.size, opt.noise_level);
  std::vector<ReferenceRecord> refs;
  for (auto& c : make_phantom_cases(opt.seed, 2, opt.n_refs, "ref", opt.size, opt.noise_level))
    refs.push_back({c.id, std::move(c.image), std::move(c.mask), {{"sex", to_string(c.sex)}}});
  ds.references = ReferenceDatabase(std::move(refs));
  return ds;
}

/// Prediction of emulated checkpoint `level` for corpus case `case_index`.
/// One corruption realization is drawn per matched pair and reused at every
/// level: a better checkpoint never segments a case worse, and at equal
/// levels the two members of a pair differ only in anatomy.
inline LabelMask grid_prediction(const PhantomCase& c, std::size_t case_index, int level, std::uint64_t seed) {
  return degrade(c.mask, DegradationLevel::from_level(level), derive_seed(seed, {0xdeb, case_index / 2}));
}

struct CaseLevelRecord {
  std::string case_id;
  Sex sex = Sex::male;
  int level = 0;
  DiceScore truth;
  DiceScore rca_mean;
  DiceScore rca_max;
};

/// 12x12 matrices indexed [male_level-1][female_level-1], one per structure.
using LevelMatrix = std::array<std::array<double, kDegradationLevels>, kDegradationLevels>;

struct GridResult {
  std::vector<std::string> structures;
  std::vector<CaseLevelRecord> records;  // case-major, level-minor
  std::vector<LevelMatrix> delta_true;
  std::vector<LevelMatrix> delta_rca;
  std::vector<LevelMatrix> delta_rca_max;
  bool balanced = true;
  std::vector<std::string> warnings;

  /// (delta_true, delta_rca) for every cell of structure `s`.
  std::vector<std::pair<double, double>> scatter(std::size_t s, Aggregator agg = Aggregator::mean) const {
    const auto& est = agg == Aggregator::mean ? delta_rca[s] : delta_rca_max[s];
    std::vector<std::pair<double, double>> out;
    for (int i = 0; i < kDegradationLevels; ++i)
      for (int j = 0; j < kDegradationLevels; ++j) out.emplace_back(delta_true[s][i][j], est[i][j]);
    return out;
  }
};

struct GridOptions {
  RcaOptions rca;
  std::uint64_t seed = 7;  // degradation streams
  std::string attribute = "sex";
  std::string positive_group = "M";
};

/// Audit input for one grid cell: male cases segmented by checkpoint
/// `male_level`, female cases by `female_level`.
inline std::vector<AuditCase> grid_cell_cases(const GridResult& g, const std::vector<PhantomCase>& corpus,
                                              int male_level, int female_level, Aggregator agg) {
  std::vector<AuditCase> cases;
  for (std::size_t c = 0; c < corpus.size(); ++c) {
    const int level = corpus[c].sex == Sex::male ? male_level : female_level;
    const CaseLevelRecord& r = g.records[c * kDegradationLevels + static_cast<std::size_t>(level - 1)];
    cases.push_back({r.case_id, agg == Aggregator::mean ? r.rca_mean : r.rca_max,
                     {{"sex", to_string(r.sex)}}, r.truth});
  }
  return cases;
}

/// Runs the checkpoint-pair experiment: every (male level, female level)
/// pair is a fictitious model, audited with and without ground truth.
inline GridResult run_grid(const std::vector<PhantomCase>& corpus, const ReferenceDatabase& db,
                           const GridOptions& opt) {
  if (corpus.empty()) throw InputError("run_grid: empty corpus");
  GridResult g;
  g.structures = corpus.front().mask.structures();
  std::size_t males = 0;
  for (const auto& c : corpus) {
    males += c.sex == Sex::male ? 1 : 0;
    if (db.find(c.id)) throw InputError("run_grid: corpus case '" + c.id + "' is also a reference");
  }
  if (males == 0 || males == corpus.size()) throw InputError("run_grid: corpus needs both sexes");
  if (2 * males != corpus.size()) {
    g.balanced = false;
    g.warnings.push_back("corpus is not sex-balanced: " + std::to_string(males) + " male of " +
                         std::to_string(corpus.size()));
  }

  // Registration does not depend on the prediction, so align once per case.
  RcaOptions inner = opt.rca;
  inner.threads = 1;
  std::vector<RcaAlignment> alignments(corpus.size());
  parallel_for(corpus.size(), opt.rca.threads, [&](std::size_t c) {
    alignments[c] = align_to_references(corpus[c].id, corpus[c].image, db, inner);
  });
  for (const auto& a : alignments) g.warnings.insert(g.warnings.end(), a.warnings.begin(), a.warnings.end());

  g.records.resize(corpus.size() * kDegradationLevels);
  parallel_for(g.records.size(), opt.rca.threads, [&](std::size_t idx) {
    const std::size_t c = idx / kDegradationLevels;
    const int level = static_cast<int>(idx % kDegradationLevels) + 1;
    const LabelMask pred = grid_prediction(corpus[c], c, level, opt.seed);
    CaseLevelRecord r;
    r.case_id = corpus[c].id;
    r.sex = corpus[c].sex;
    r.level = level;
    r.truth = dsc(pred, corpus[c].mask);
    const RcaEstimate mean_est = score_alignment(alignments[c], pred, db, Aggregator::mean);
    r.rca_mean = mean_est.aggregate;
    r.rca_max = aggregate_scores(
        [&] {
          std::vector<DiceScore> v;
          for (const auto& p : mean_est.per_reference) v.push_back(p.dice);
          return v;
        }(),
        Aggregator::max);
    g.records[idx] = std::move(r);
  });

  const std::size_t ns = g.structures.size();
  g.delta_true.assign(ns, LevelMatrix{});
  g.delta_rca.assign(ns, LevelMatrix{});
  g.delta_rca_max.assign(ns, LevelMatrix{});
  for (int i = 1; i <= kDegradationLevels; ++i) {
    for (int j = 1; j <= kDegradationLevels; ++j) {
      const AuditReport mean_report = audit(grid_cell_cases(g, corpus, i, j, Aggregator::mean), opt.attribute,
                                            opt.positive_group);
      const AuditReport max_report = audit(grid_cell_cases(g, corpus, i, j, Aggregator::max), opt.attribute,
                                           opt.positive_group);
      for (std::size_t s = 0; s < ns; ++s) {
        g.delta_true[s][i - 1][j - 1] = (*mean_report.delta_true)[s];
        g.delta_rca[s][i - 1][j - 1] = mean_report.delta_rca[s];
        g.delta_rca_max[s][i - 1][j - 1] = max_report.delta_rca[s];
      }
    }
  }
  return g;
}

/// Correlation and sign-agreement diagnostics for one structure of a grid.
struct GridSummary {
  std::string structure;
  std::optional<double> pearson_r;
  std::optional<stats::LineFit> fit;
  std::vector<std::pair<double, SignAgreement>> sign_agreement;      // per threshold, mean aggregator
  std::vector<std::pair<double, SignAgreement>> sign_agreement_max;  // per threshold, max aggregator
  std::optional<double> pearson_case_level;  // true DSC vs DSC^RCA over (case, level)
};

inline const std::vector<double>& reporting_thresholds() {
  static const std::vector<double> t{0.0, 0.01, 0.02};
  return t;
}

inline std::vector<GridSummary> summarize_grid(const GridResult& g) {
  std::vector<GridSummary> out;
  for (std::size_t s = 0; s < g.structures.size(); ++s) {
    GridSummary sum;
    sum.structure = g.structures[s];
    const auto pairs = g.scatter(s, Aggregator::mean);
    std::vector<double> xt;
    std::vector<double> yr;
    for (const auto& [t, r] : pairs) {
      xt.push_back(t);
      yr.push_back(r);
    }
    sum.pearson_r = stats::pearson(xt, yr);
    sum.fit = stats::least_squares(xt, yr);
    const auto pairs_max = g.scatter(s, Aggregator::max);
    for (double th : reporting_thresholds()) {
      sum.sign_agreement.emplace_back(th, sign_agreement(pairs, th));
      sum.sign_agreement_max.emplace_back(th, sign_agreement(pairs_max, th));
    }
    std::vector<double> ct;
    std::vector<double> cr;
    for (const auto& r : g.records) {
      ct.push_back(r.truth.value(s));
      cr.push_back(r.rca_mean.value(s));
    }
    sum.pearson_case_level = stats::pearson(ct, cr);
    out.push_back(std::move(sum));
  }
  return out;
}

}  // namespace ubd
