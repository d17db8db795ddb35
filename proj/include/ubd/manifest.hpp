#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "ubd/io.hpp"
#include "ubd/metrics.hpp"
#include "ubd/rca.hpp"
#include "ubd/reference_db.hpp"

namespace ubd {

namespace fs = std::filesystem;
using nlohmann::json;

inline constexpr int kManifestVersion = 1;

/// Per-structure mask files, or one bit-packed label map (bit i = structure i).
using MaskSource = std::variant<std::map<std::string, std::string>, std::string>;

struct ManifestCase {
  std::string id;
  std::string image;
  bool reference = false;
  std::optional<MaskSource> prediction;
  std::optional<MaskSource> ground_truth;
  Attributes attributes;
};

/// Dataset description; paths are relative to the manifest file.
struct Manifest {
  int version = kManifestVersion;
  std::vector<std::string> structures;
  std::vector<ManifestCase> cases;
  fs::path base_dir;
};

namespace detail {

inline std::optional<MaskSource> parse_mask_source(const json& j, const std::string& key, const std::string& id) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  const json& v = j.at(key);
  if (v.is_string()) return MaskSource{v.get<std::string>()};
  if (v.is_object()) return MaskSource{v.get<std::map<std::string, std::string>>()};
  throw InputError("manifest: case '" + id + "' field '" + key + "' must be a path or a structure->path object");
}

inline json mask_source_json(const MaskSource& m) {
  if (const auto* s = std::get_if<std::string>(&m)) return *s;
  return std::get<std::map<std::string, std::string>>(m);
}

inline std::vector<std::string> mask_paths(const MaskSource& m) {
  if (const auto* s = std::get_if<std::string>(&m)) return {*s};
  std::vector<std::string> out;
  for (const auto& [_, p] : std::get<std::map<std::string, std::string>>(m)) out.push_back(p);
  return out;
}

}  // namespace detail

inline Manifest parse_manifest(const json& j, const fs::path& base_dir) {
  Manifest m;
  m.base_dir = base_dir;
  try {
    m.version = j.at("version").get<int>();
    if (m.version != kManifestVersion)
      throw InputError("manifest: unsupported version " + std::to_string(m.version));
    m.structures = j.at("structures").get<std::vector<std::string>>();
    for (const auto& c : j.at("cases")) {
      ManifestCase mc;
      mc.id = c.at("id").get<std::string>();
      mc.image = c.at("image").get<std::string>();
      mc.reference = c.value("reference", false);
      mc.prediction = detail::parse_mask_source(c, "prediction", mc.id);
      mc.ground_truth = detail::parse_mask_source(c, "ground_truth", mc.id);
      if (c.contains("attributes")) mc.attributes = c.at("attributes").get<Attributes>();
      m.cases.push_back(std::move(mc));
    }
  } catch (const json::exception& e) {
    throw InputError(std::string("manifest: ") + e.what());
  }
  if (m.structures.empty()) throw InputError("manifest: no structures listed");

  std::set<std::string> ids;
  std::optional<std::set<std::string>> attribute_keys;
  for (const auto& c : m.cases) {
    if (c.id.empty()) throw InputError("manifest: case with empty id");
    if (!ids.insert(c.id).second) throw InputError("manifest: duplicate case id '" + c.id + "'");
    if (c.reference && !c.ground_truth) throw InputError("manifest: reference case '" + c.id + "' has no ground truth");
    for (const auto* src : {&c.prediction, &c.ground_truth}) {
      if (!*src) continue;
      if (const auto* per = std::get_if<std::map<std::string, std::string>>(&**src)) {
        for (const auto& s : m.structures) {
          if (!per->count(s)) throw InputError("manifest: case '" + c.id + "' lacks a mask for structure '" + s + "'");
        }
        if (per->size() != m.structures.size())
          throw InputError("manifest: case '" + c.id + "' lists masks for unknown structures");
      }
    }
    if (!c.attributes.empty()) {
      std::set<std::string> keys;
      for (const auto& [k, _] : c.attributes) keys.insert(k);
      if (!attribute_keys) {
        attribute_keys = keys;
      } else if (*attribute_keys != keys) {
        throw InputError("manifest: case '" + c.id + "' has attribute keys inconsistent with earlier cases");
      }
    }
    std::vector<std::string> paths{c.image};
    for (const auto* src : {&c.prediction, &c.ground_truth}) {
      if (*src) {
        for (auto& p : detail::mask_paths(**src)) paths.push_back(p);
      }
    }
    for (const auto& p : paths) {
      if (!fs::exists(base_dir / p))
        throw InputError("manifest: case '" + c.id + "' references missing file '" + (base_dir / p).string() + "'");
    }
  }
  return m;
}

inline Manifest load_manifest(const fs::path& path) {
  json j;
  try {
    j = json::parse(io::read_file(path));
  } catch (const json::exception& e) {
    throw InputError("manifest '" + path.string() + "': " + e.what());
  }
  return parse_manifest(j, path.parent_path());
}

inline json manifest_json(const Manifest& m) {
  json cases = json::array();
  for (const auto& c : m.cases) {
    json jc{{"id", c.id}, {"image", c.image}, {"reference", c.reference}};
    if (c.prediction) jc["prediction"] = detail::mask_source_json(*c.prediction);
    if (c.ground_truth) jc["ground_truth"] = detail::mask_source_json(*c.ground_truth);
    if (!c.attributes.empty()) jc["attributes"] = c.attributes;
    cases.push_back(std::move(jc));
  }
  return json{{"version", m.version}, {"structures", m.structures}, {"cases", cases}};
}

/// Manifest case with its files decoded.
struct LoadedCase {
  std::string id;
  bool reference = false;
  Image image;
  std::optional<LabelMask> prediction;
  std::optional<LabelMask> ground_truth;
  Attributes attributes;
};

inline LabelMask load_mask(const Manifest& m, const MaskSource& src, const std::string& id) {
  try {
    if (const auto* single = std::get_if<std::string>(&src)) return io::read_bitmask(m.structures, m.base_dir / *single);
    const auto& per = std::get<std::map<std::string, std::string>>(src);
    std::vector<fs::path> paths;
    for (const auto& s : m.structures) paths.push_back(m.base_dir / per.at(s));
    return io::read_mask(m.structures, paths);
  } catch (const InputError& e) {
    throw InputError("case '" + id + "': " + e.what());
  }
}

inline std::vector<LoadedCase> load_cases(const Manifest& m) {
  std::vector<LoadedCase> out;
  for (const auto& c : m.cases) {
    LoadedCase lc;
    lc.id = c.id;
    lc.reference = c.reference;
    try {
      lc.image = io::read_image(m.base_dir / c.image);
    } catch (const InputError& e) {
      throw InputError("case '" + c.id + "': " + e.what());
    }
    if (c.prediction) lc.prediction = load_mask(m, *c.prediction, c.id);
    if (c.ground_truth) lc.ground_truth = load_mask(m, *c.ground_truth, c.id);
    for (const auto* mask : {&lc.prediction, &lc.ground_truth}) {
      if (*mask && ((*mask)->width() != lc.image.width() || (*mask)->height() != lc.image.height()))
        throw InputError("case '" + c.id + "': mask dimensions do not match the image");
    }
    lc.attributes = c.attributes;
    out.push_back(std::move(lc));
  }
  return out;
}

inline ReferenceDatabase reference_database(const std::vector<LoadedCase>& cases) {
  std::vector<ReferenceRecord> refs;
  for (const auto& c : cases) {
    if (c.reference) refs.push_back({c.id, c.image, *c.ground_truth, c.attributes});
  }
  return ReferenceDatabase(std::move(refs));
}

// --- run configuration ------------------------------------------------------

struct RunConfig {
  int k = 5;
  Aggregator aggregator = Aggregator::mean;
  RegistrationConfig registration;
  int thumb_size = 32;
  SimilarityMetric metric = SimilarityMetric::ncc;
  std::string attribute = "sex";
  std::string positive_group = "M";
  std::uint64_t seed = 7;
  fs::path output_dir = "out";
  int threads = 1;

  void validate() const {
    if (k < 1) throw InputError("config: k must be >= 1");
    if (threads < 1) throw InputError("config: threads must be >= 1");
    if (thumb_size < 1) throw InputError("config: thumb_size must be >= 1");
    registration.validate();
  }

  RcaOptions rca_options() const { return RcaOptions{k, thumb_size, metric, registration, threads}; }
};

/// Overlays the fields present in a JSON settings object onto `cfg`.
inline void apply_config_json(RunConfig& cfg, const json& j) {
  try {
    if (j.contains("k")) cfg.k = j.at("k").get<int>();
    if (j.contains("aggregator")) cfg.aggregator = parse_aggregator(j.at("aggregator").get<std::string>());
    if (j.contains("thumb_size")) cfg.thumb_size = j.at("thumb_size").get<int>();
    if (j.contains("metric")) {
      const auto s = j.at("metric").get<std::string>();
      if (s == "ncc") {
        cfg.metric = SimilarityMetric::ncc;
      } else if (s == "ssd") {
        cfg.metric = SimilarityMetric::ssd;
      } else {
        throw InputError("config: unknown metric '" + s + "'");
      }
    }
    if (j.contains("attribute")) cfg.attribute = j.at("attribute").get<std::string>();
    if (j.contains("positive_group")) cfg.positive_group = j.at("positive_group").get<std::string>();
    if (j.contains("seed")) cfg.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("out")) cfg.output_dir = j.at("out").get<std::string>();
    if (j.contains("threads")) cfg.threads = j.at("threads").get<int>();
    if (j.contains("registration")) {
      const json& r = j.at("registration");
      RegistrationConfig& rc = cfg.registration;
      rc.pyramid_levels = r.value("pyramid_levels", rc.pyramid_levels);
      rc.affine_iters_per_level = r.value("affine_iters_per_level", rc.affine_iters_per_level);
      rc.affine_step = r.value("affine_step", rc.affine_step);
      rc.demons_iters_per_level = r.value("demons_iters_per_level", rc.demons_iters_per_level);
      rc.demons_sigma_fluid = r.value("demons_sigma_fluid", rc.demons_sigma_fluid);
      rc.demons_sigma_diffusion = r.value("demons_sigma_diffusion", rc.demons_sigma_diffusion);
      rc.demons_max_step = r.value("demons_max_step", rc.demons_max_step);
      rc.convergence_tol = r.value("convergence_tol", rc.convergence_tol);
    }
  } catch (const json::exception& e) {
    throw InputError(std::string("config: ") + e.what());
  }
}

inline void load_config_file(RunConfig& cfg, const fs::path& path) {
  json j;
  try {
    j = json::parse(io::read_file(path));
  } catch (const json::exception& e) {
    throw InputError("config '" + path.string() + "': " + e.what());
  }
  apply_config_json(cfg, j);
}

}  // namespace ubd
