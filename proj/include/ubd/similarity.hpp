#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "ubd/image.hpp"
#include "ubd/parallel.hpp"
#include "ubd/reference_db.hpp"

namespace ubd {

enum class SimilarityMetric { ncc, ssd };

inline const char* to_string(SimilarityMetric m) { return m == SimilarityMetric::ncc ? "ncc" : "ssd"; }

/// Pearson correlation of the intensity vectors; 0 when either is constant.
inline double ncc(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw InputError("ncc: dimension mismatch");
  if (a.empty()) throw InputError("ncc: empty images");
  const double n = static_cast<double>(a.size());
  double ma = 0.0;
  double mb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  double sab = 0.0;
  double saa = 0.0;
  double sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double da = a[i] - ma;
    const double db = b[i] - mb;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  // Rounding leaves ~1e-33 of spurious variance on constant inputs.
  constexpr double tiny = 1e-20;
  if (saa <= tiny * n || sbb <= tiny * n) return 0.0;
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

inline double ncc(const Image& a, const Image& b) {
  require_same_dims(a, b, "ncc");
  return ncc(a.pixels(), b.pixels());
}

/// Negated mean squared difference, so that larger is more similar.
inline double neg_ssd(const Image& a, const Image& b) {
  require_same_dims(a, b, "ssd");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a.pixels()[i] - b.pixels()[i];
    s += d * d;
  }
  return -s / static_cast<double>(std::max<std::size_t>(1, a.size()));
}

/// Box-filter thumbnail: each output pixel averages the source pixels that
/// map onto it. Sources smaller than the thumbnail are sampled by nearest.
inline Image thumbnail(const Image& img, int size) {
  if (size < 1) throw InputError("thumbnail size must be >= 1");
  ScalarGrid sum(size, size, 0.0);
  ScalarGrid cnt(size, size, 0.0);
  for (int y = 0; y < img.height(); ++y) {
    const int ty = static_cast<int>(static_cast<long long>(y) * size / img.height());
    for (int x = 0; x < img.width(); ++x) {
      const int tx = static_cast<int>(static_cast<long long>(x) * size / img.width());
      sum.at(tx, ty) += img.at(x, y);
      cnt.at(tx, ty) += 1.0;
    }
  }
  for (int ty = 0; ty < size; ++ty) {
    for (int tx = 0; tx < size; ++tx) {
      if (cnt.at(tx, ty) > 0.0) {
        sum.at(tx, ty) /= cnt.at(tx, ty);
      } else {
        const int sx = std::min(img.width() - 1, static_cast<int>(static_cast<long long>(tx) * img.width() / size));
        const int sy = std::min(img.height() - 1, static_cast<int>(static_cast<long long>(ty) * img.height() / size));
        sum.at(tx, ty) = img.at(sx, sy);
      }
    }
  }
  return Image::from_clamped(std::move(sum));
}

struct SimilarityRanking {
  std::vector<std::pair<std::string, double>> entries;  // (reference id, score), best first
  std::string metric_name;
};

struct SimilarityOptions {
  int k = 5;
  int thumb_size = 32;
  SimilarityMetric metric = SimilarityMetric::ncc;
  int threads = 1;
};

/// Scores every reference against the atlas on thumbnails and keeps the best
/// min(k, |db|). Ties are broken by ascending reference id.
inline SimilarityRanking top_k_select(const Image& atlas, const ReferenceDatabase& db,
                                      const SimilarityOptions& opt) {
  if (opt.k < 1) throw InputError("top_k_select: k must be >= 1");
  if (db.empty()) throw InputError("top_k_select: reference database is empty");
  require_same_dims(atlas, db.at(0).image, "top_k_select");
  const Image atlas_thumb = thumbnail(atlas, opt.thumb_size);
  std::vector<double> scores(db.size());
  parallel_for(db.size(), opt.threads, [&](std::size_t i) {
    const Image ref_thumb = thumbnail(db.at(i).image, opt.thumb_size);
    scores[i] = opt.metric == SimilarityMetric::ncc ? ncc(atlas_thumb, ref_thumb) : neg_ssd(atlas_thumb, ref_thumb);
  });
  SimilarityRanking ranking;
  ranking.metric_name = to_string(opt.metric);
  for (std::size_t i = 0; i < db.size(); ++i) ranking.entries.emplace_back(db.at(i).id, scores[i]);
  std::sort(ranking.entries.begin(), ranking.entries.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  if (ranking.entries.size() > static_cast<std::size_t>(opt.k)) ranking.entries.resize(static_cast<std::size_t>(opt.k));
  return ranking;
}

}  // namespace ubd
