#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "ubd/image.hpp"

namespace ubd {

/// Per-structure Dice values in structure order plus their macro average.
struct DiceScore {
  std::vector<std::pair<std::string, double>> per_structure;
  double macro_average = 0.0;

  static DiceScore from_values(std::vector<std::pair<std::string, double>> values) {
    DiceScore d;
    d.per_structure = std::move(values);
    double sum = 0.0;
    for (const auto& [_, v] : d.per_structure) sum += v;
    d.macro_average = d.per_structure.empty() ? 0.0 : sum / static_cast<double>(d.per_structure.size());
    return d;
  }

  std::vector<std::string> structures() const {
    std::vector<std::string> names;
    for (const auto& [n, _] : per_structure) names.push_back(n);
    return names;
  }
  double value(const std::string& structure) const {
    for (const auto& [n, v] : per_structure) {
      if (n == structure) return v;
    }
    throw InputError("structure '" + structure + "' not present in Dice score");
  }
  double value(std::size_t i) const { return per_structure.at(i).second; }
};

/// 2|P∩G| / (|P|+|G|). Two empty channels score 1.
inline double dice_channel(const LabelMask::Channel& p, const LabelMask::Channel& g) {
  std::size_t inter = 0;
  std::size_t np = 0;
  std::size_t ng = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    inter += static_cast<std::size_t>(p[i] & g[i]);
    np += p[i];
    ng += g[i];
  }
  if (np + ng == 0) return 1.0;
  return 2.0 * static_cast<double>(inter) / static_cast<double>(np + ng);
}

inline DiceScore dsc(const LabelMask& pred, const LabelMask& gt) {
  require_same_dims(pred, gt, "dsc");
  if (pred.structures() != gt.structures()) throw InputError("dsc: structure lists differ");
  std::vector<std::pair<std::string, double>> values;
  for (std::size_t c = 0; c < pred.structure_count(); ++c) {
    values.emplace_back(pred.structures()[c], dice_channel(pred.channel(c), gt.channel(c)));
  }
  return DiceScore::from_values(std::move(values));
}

}  // namespace ubd
