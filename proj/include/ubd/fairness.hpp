#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ubd/metrics.hpp"
#include "ubd/rca.hpp"
#include "ubd/reference_db.hpp"
#include "ubd/stats.hpp"

namespace ubd {

/// One audited case: its RCA estimate, demographic attributes and, when
/// available, its true Dice score.
struct AuditCase {
  std::string case_id;
  DiceScore rca;
  Attributes attributes;
  std::optional<DiceScore> truth;
};

struct GroupStats {
  std::string group_value;
  std::size_t n_cases = 0;
  std::vector<std::pair<std::string, double>> mean_dsc_rca;
  std::optional<std::vector<std::pair<std::string, double>>> mean_dsc_true;
  std::vector<std::string> case_ids;
};

/// Signed gaps are first group minus second group; groups[0] is always the
/// positive group.
struct AuditReport {
  std::string attribute;
  std::vector<std::string> structures;
  std::array<GroupStats, 2> groups;
  std::vector<double> delta_rca;
  std::optional<std::vector<double>> delta_true;
  std::optional<double> sign_agreement;
  std::optional<double> pearson_r;
  std::optional<double> fitted_slope;
  std::optional<double> fitted_intercept;
};

inline int sign_of(double v) { return (v > 0.0) - (v < 0.0); }

struct SignAgreement {
  double fraction = 0.0;
  std::size_t n_retained = 0;
};

/// Fraction of (delta_true, delta_rca) pairs with matching sign after
/// dropping pairs whose |delta_true| is below `threshold`.
inline SignAgreement sign_agreement(const std::vector<std::pair<double, double>>& pairs, double threshold) {
  if (pairs.empty()) throw InputError("sign_agreement: no pairs");
  if (!(threshold >= 0.0)) throw InputError("sign_agreement: threshold must be >= 0");
  std::size_t kept = 0;
  std::size_t agree = 0;
  for (const auto& [t, r] : pairs) {
    if (std::abs(t) < threshold) continue;
    ++kept;
    agree += sign_of(t) == sign_of(r) ? 1 : 0;
  }
  if (kept == 0) throw InputError("sign_agreement: threshold excludes every pair; it is uninformative");
  return {static_cast<double>(agree) / static_cast<double>(kept), kept};
}

namespace detail {

inline std::vector<std::pair<std::string, double>> mean_scores(const std::vector<const DiceScore*>& scores,
                                                               const std::vector<std::string>& structures) {
  std::vector<std::pair<std::string, double>> out;
  for (const auto& s : structures) {
    double sum = 0.0;
    for (const DiceScore* d : scores) sum += d->value(s);
    out.emplace_back(s, sum / static_cast<double>(scores.size()));
  }
  return out;
}

}  // namespace detail

/// Splits the population on `attribute` (exactly two values) and reports the
/// signed gap positive-group minus other-group per structure.
inline AuditReport audit(const std::vector<AuditCase>& cases, const std::string& attribute,
                         const std::string& positive_group) {
  if (cases.empty()) throw InputError("audit: no cases");
  std::vector<std::string> values;
  for (const auto& c : cases) {
    auto it = c.attributes.find(attribute);
    if (it == c.attributes.end()) throw InputError("audit: case '" + c.case_id + "' lacks attribute '" + attribute + "'");
    if (std::find(values.begin(), values.end(), it->second) == values.end()) values.push_back(it->second);
  }
  if (values.size() != 2) {
    throw InputError("audit: attribute '" + attribute + "' must take exactly two values, found " +
                     std::to_string(values.size()));
  }
  if (std::find(values.begin(), values.end(), positive_group) == values.end())
    throw InputError("audit: positive group '" + positive_group + "' not present for attribute '" + attribute + "'");
  const std::string other = values[0] == positive_group ? values[1] : values[0];

  AuditReport report;
  report.attribute = attribute;
  report.structures = cases.front().rca.structures();

  bool all_truth = true;
  for (const auto& c : cases) {
    if (c.rca.structures() != report.structures)
      throw InputError("audit: case '" + c.case_id + "' has a different structure list");
    all_truth = all_truth && c.truth.has_value();
  }

  const std::array<std::string, 2> names{positive_group, other};
  for (std::size_t g = 0; g < 2; ++g) {
    GroupStats& gs = report.groups[g];
    gs.group_value = names[g];
    std::vector<const DiceScore*> rca;
    std::vector<const DiceScore*> truth;
    for (const auto& c : cases) {
      if (c.attributes.at(attribute) != names[g]) continue;
      gs.case_ids.push_back(c.case_id);
      rca.push_back(&c.rca);
      if (c.truth) truth.push_back(&*c.truth);
    }
    gs.n_cases = gs.case_ids.size();
    gs.mean_dsc_rca = detail::mean_scores(rca, report.structures);
    if (all_truth) gs.mean_dsc_true = detail::mean_scores(truth, report.structures);
  }

  for (std::size_t s = 0; s < report.structures.size(); ++s)
    report.delta_rca.push_back(report.groups[0].mean_dsc_rca[s].second - report.groups[1].mean_dsc_rca[s].second);

  if (all_truth) {
    std::vector<double> dt;
    for (std::size_t s = 0; s < report.structures.size(); ++s)
      dt.push_back((*report.groups[0].mean_dsc_true)[s].second - (*report.groups[1].mean_dsc_true)[s].second);
    std::vector<std::pair<double, double>> pairs;
    for (std::size_t s = 0; s < dt.size(); ++s) pairs.emplace_back(dt[s], report.delta_rca[s]);
    report.sign_agreement = sign_agreement(pairs, 0.0).fraction;
    if (dt.size() >= 2) {
      report.pearson_r = stats::pearson(dt, report.delta_rca);
      if (auto fit = stats::least_squares(dt, report.delta_rca)) {
        report.fitted_slope = fit->slope;
        report.fitted_intercept = fit->intercept;
      }
    }
    report.delta_true = std::move(dt);
  }
  return report;
}

}  // namespace ubd
