#pragma once

#include <algorithm>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ubd/metrics.hpp"
#include "ubd/parallel.hpp"
#include "ubd/reference_db.hpp"
#include "ubd/registration.hpp"
#include "ubd/similarity.hpp"
#include "ubd/warp.hpp"

namespace ubd {

enum class Aggregator { mean, max };

inline const char* to_string(Aggregator a) { return a == Aggregator::mean ? "mean" : "max"; }

inline Aggregator parse_aggregator(const std::string& s) {
  if (s == "mean") return Aggregator::mean;
  if (s == "max") return Aggregator::max;
  throw InputError("unknown aggregator '" + s + "' (expected mean or max)");
}

struct ReferenceScore {
  std::string reference_id;
  DiceScore dice;
};

struct RcaEstimate {
  std::string case_id;
  std::vector<ReferenceScore> per_reference;  // sorted by reference id
  DiceScore aggregate;
  Aggregator aggregator = Aggregator::mean;
  std::size_t k_used = 0;
  std::vector<std::string> warnings;
};

/// Mean or max of per-reference Dice scores, per structure.
inline DiceScore aggregate_scores(const std::vector<DiceScore>& scores, Aggregator agg) {
  if (scores.empty()) throw ComputationError("cannot aggregate zero reference scores");
  const auto names = scores.front().structures();
  std::vector<std::pair<std::string, double>> values;
  for (std::size_t s = 0; s < names.size(); ++s) {
    double acc = agg == Aggregator::mean ? 0.0 : -std::numeric_limits<double>::infinity();
    for (const auto& d : scores) {
      acc = agg == Aggregator::mean ? acc + d.value(s) : std::max(acc, d.value(s));
    }
    if (agg == Aggregator::mean) acc /= static_cast<double>(scores.size());
    values.emplace_back(names[s], std::clamp(acc, 0.0, 1.0));
  }
  return DiceScore::from_values(std::move(values));
}

struct RcaOptions {
  int k = 5;
  int thumb_size = 32;
  SimilarityMetric metric = SimilarityMetric::ncc;
  RegistrationConfig registration;
  int threads = 1;
};

/// Registrations of one atlas onto its top-k references. Independent of the
/// prediction being scored, so one alignment serves many predictions.
struct RcaAlignment {
  std::string case_id;
  std::vector<std::string> reference_ids;  // ascending
  std::vector<DisplacementField> fields;
  std::vector<std::string> warnings;
};

inline RcaAlignment align_to_references(const std::string& case_id, const Image& atlas, const ReferenceDatabase& db,
                                        const RcaOptions& opt) {
  if (db.empty()) throw InputError("RCA: reference database is empty");
  opt.registration.validate();
  const ReferenceDatabase candidates = db.find(case_id) ? db.without(case_id) : db;
  if (candidates.empty()) throw InputError("RCA: reference database only contains the atlas itself");
  for (const auto& r : candidates.records()) require_same_dims(atlas, r.image, "RCA reference");

  const SimilarityRanking ranking =
      top_k_select(atlas, candidates, SimilarityOptions{opt.k, opt.thumb_size, opt.metric, opt.threads});
  std::vector<std::string> ids;
  for (const auto& [id, _] : ranking.entries) ids.push_back(id);
  std::sort(ids.begin(), ids.end());

  std::vector<std::optional<DisplacementField>> fields(ids.size());
  std::vector<std::string> failures(ids.size());
  parallel_for(ids.size(), opt.threads, [&](std::size_t i) {
    try {
      fields[i] = register_images(atlas, candidates.find(ids[i])->image, opt.registration).field;
    } catch (const ComputationError& e) {
      failures[i] = e.what();
    }
  });

  RcaAlignment out;
  out.case_id = case_id;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (fields[i]) {
      out.reference_ids.push_back(ids[i]);
      out.fields.push_back(std::move(*fields[i]));
    } else {
      out.warnings.push_back("case '" + case_id + "': reference '" + ids[i] + "' skipped: " + failures[i]);
    }
  }
  if (out.reference_ids.empty()) throw ComputationError("RCA: every registration failed for case '" + case_id + "'");
  return out;
}

/// Propagates `pred` through every aligned reference and scores it against
/// the reference ground truth.
inline RcaEstimate score_alignment(const RcaAlignment& alignment, const LabelMask& pred, const ReferenceDatabase& db,
                                   Aggregator agg) {
  RcaEstimate est;
  est.case_id = alignment.case_id;
  est.aggregator = agg;
  est.warnings = alignment.warnings;
  std::vector<DiceScore> scores;
  for (std::size_t i = 0; i < alignment.reference_ids.size(); ++i) {
    const ReferenceRecord* ref = db.find(alignment.reference_ids[i]);
    if (!ref) throw InputError("RCA: reference '" + alignment.reference_ids[i] + "' missing from database");
    if (pred.structures() != ref->mask.structures())
      throw InputError("RCA: prediction structures differ from reference '" + ref->id + "'");
    const LabelMask propagated = warp_mask(pred, alignment.fields[i]);
    DiceScore d = dsc(propagated, ref->mask);
    est.per_reference.push_back({ref->id, d});
    scores.push_back(std::move(d));
  }
  est.k_used = scores.size();
  est.aggregate = aggregate_scores(scores, agg);
  return est;
}

/// Ground-truth-free quality estimate of `pred` on `atlas`: top-k selection,
/// atlas->reference registration, label propagation and Dice aggregation.
inline RcaEstimate estimate_dsc_rca(const std::string& case_id, const Image& atlas, const LabelMask& pred,
                                    const ReferenceDatabase& db, const RcaOptions& opt,
                                    Aggregator agg = Aggregator::mean) {
  require_same_dims(atlas, pred, "estimate_dsc_rca");
  const RcaAlignment alignment = align_to_references(case_id, atlas, db, opt);
  return score_alignment(alignment, pred, db, agg);
}

}  // namespace ubd
