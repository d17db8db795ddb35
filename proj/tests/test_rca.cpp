#include <gtest/gtest.h>

#include <algorithm>

#include "support.hpp"
#include "ubd/grid.hpp"
#include "ubd/rca.hpp"
#include "ubd/stats.hpp"

namespace ubd {
namespace {

DiceScore one(double v) { return DiceScore::from_values({{"s", v}}); }

TEST(Aggregate, MeanAndMax) {
  const std::vector<DiceScore> s{one(0.8), one(0.9), one(1.0)};
  EXPECT_NEAR(aggregate_scores(s, Aggregator::mean).value(0), 0.9, 1e-12);
  EXPECT_DOUBLE_EQ(aggregate_scores(s, Aggregator::max).value(0), 1.0);
  EXPECT_THROW(aggregate_scores({}, Aggregator::mean), ComputationError);
}

TEST(Aggregate, MeanLiesBetweenMinAndMax) {
  Rng rng(5);
  for (int t = 0; t < 200; ++t) {
    std::vector<DiceScore> s;
    const int n = 1 + static_cast<int>(rng.uniform() * 7);
    for (int i = 0; i < n; ++i) s.push_back(DiceScore::from_values({{"a", rng.uniform()}, {"b", rng.uniform()}}));
    for (std::size_t st = 0; st < 2; ++st) {
      double lo = 1.0;
      double hi = 0.0;
      for (const auto& d : s) {
        lo = std::min(lo, d.value(st));
        hi = std::max(hi, d.value(st));
      }
      const double m = aggregate_scores(s, Aggregator::mean).value(st);
      EXPECT_LE(lo, m + 1e-12);
      EXPECT_LE(m, hi + 1e-12);
      EXPECT_DOUBLE_EQ(aggregate_scores(s, Aggregator::max).value(st), hi);
    }
  }
}

TEST(Aggregator, Parse) {
  EXPECT_EQ(parse_aggregator("mean"), Aggregator::mean);
  EXPECT_EQ(parse_aggregator("max"), Aggregator::max);
  EXPECT_THROW(parse_aggregator("median"), InputError);
}

class RcaFixture : public ::testing::Test {
 protected:
  void SetUp() override { ds_ = make_grid_dataset({.seed = 3, .n_test = 6, .n_refs = 8}); }
  GridDataset ds_;
};

TEST_F(RcaFixture, CopyOfReferenceScoresNearOne) {
  const auto& ref = ds_.references.at(2);
  RcaOptions opt;
  opt.k = 1;
  const auto est = estimate_dsc_rca("copy", ref.image, ref.mask, ds_.references, opt);
  EXPECT_EQ(est.k_used, 1u);
  EXPECT_EQ(est.per_reference.front().reference_id, ref.id);
  for (const auto& [s, v] : est.aggregate.per_structure) EXPECT_GE(v, 0.95) << s;
}

TEST_F(RcaFixture, EmptyPredictionScoresZero) {
  const auto& c = ds_.corpus.front();
  const auto est = estimate_dsc_rca(c.id, c.image, LabelMask::empty(64, 64, phantom_structures()), ds_.references, {});
  for (const auto& [s, v] : est.aggregate.per_structure) EXPECT_EQ(v, 0.0) << s;
}

TEST_F(RcaFixture, SelfIsExcludedById) {
  const auto& ref = ds_.references.at(0);
  const auto est = estimate_dsc_rca(ref.id, ref.image, ref.mask, ds_.references, RcaOptions{.k = 20, .registration = {}});
  EXPECT_EQ(est.k_used, ds_.references.size() - 1);
  for (const auto& p : est.per_reference) EXPECT_NE(p.reference_id, ref.id);
}

TEST_F(RcaFixture, PerReferenceSortedAndMeanConsistent) {
  const auto& c = ds_.corpus[1];
  const auto est = estimate_dsc_rca(c.id, c.image, c.mask, ds_.references, {});
  EXPECT_EQ(est.k_used, 5u);
  EXPECT_TRUE(std::is_sorted(est.per_reference.begin(), est.per_reference.end(),
                             [](const auto& a, const auto& b) { return a.reference_id < b.reference_id; }));
  double sum = 0.0;
  for (const auto& p : est.per_reference) sum += p.dice.value("lung");
  EXPECT_NEAR(est.aggregate.value("lung"), sum / 5.0, 1e-12);
}

TEST_F(RcaFixture, InputErrors) {
  const auto& c = ds_.corpus[0];
  EXPECT_THROW(estimate_dsc_rca(c.id, c.image, c.mask, ReferenceDatabase{}, {}), InputError);
  EXPECT_THROW(estimate_dsc_rca(c.id, c.image, LabelMask::empty(32, 32, {"lung", "heart"}), ds_.references, {}),
               InputError);
  EXPECT_THROW(estimate_dsc_rca(c.id, c.image, LabelMask::empty(64, 64, {"x"}), ds_.references, {}), InputError);
  RcaOptions bad;
  bad.k = 0;
  EXPECT_THROW(estimate_dsc_rca(c.id, c.image, c.mask, ds_.references, bad), InputError);
}

TEST_F(RcaFixture, ThreadCountDoesNotChangeResult) {
  const auto& c = ds_.corpus[2];
  RcaOptions one_thread;
  RcaOptions four = one_thread;
  four.threads = 4;
  const auto a = estimate_dsc_rca(c.id, c.image, c.mask, ds_.references, one_thread);
  const auto b = estimate_dsc_rca(c.id, c.image, c.mask, ds_.references, four);
  EXPECT_EQ(a.aggregate.per_structure, b.aggregate.per_structure);
}

TEST_F(RcaFixture, AggregateTracksErosion) {
  for (std::size_t i = 0; i < 5; ++i) {
    const auto& c = ds_.corpus[i];
    const auto alignment = align_to_references(c.id, c.image, ds_.references, {});
    double prev_lung = 1.0;
    double prev_heart = 1.0;
    for (double r : {0.0, 1.0, 2.0, 3.0, 4.0}) {
      const auto est = score_alignment(alignment, erode(c.mask, r), ds_.references, Aggregator::mean);
      EXPECT_LE(est.aggregate.value("lung"), prev_lung + 0.02) << c.id << " r=" << r;
      EXPECT_LE(est.aggregate.value("heart"), prev_heart + 0.02) << c.id << " r=" << r;
      prev_lung = est.aggregate.value("lung");
      prev_heart = est.aggregate.value("heart");
    }
  }
}

TEST_F(RcaFixture, CorrelatesWithTrueDice) {
  std::vector<double> truth_lung, rca_lung, truth_heart, rca_heart;
  for (std::size_t i = 0; i < ds_.corpus.size(); ++i) {
    const auto& c = ds_.corpus[i];
    const auto alignment = align_to_references(c.id, c.image, ds_.references, {});
    for (int level = 1; level <= kDegradationLevels; ++level) {
      const LabelMask pred = grid_prediction(c, i, level, 3);
      const auto t = dsc(pred, c.mask);
      const auto e = score_alignment(alignment, pred, ds_.references, Aggregator::mean).aggregate;
      truth_lung.push_back(t.value("lung"));
      rca_lung.push_back(e.value("lung"));
      truth_heart.push_back(t.value("heart"));
      rca_heart.push_back(e.value("heart"));
    }
  }
  ASSERT_GE(truth_lung.size(), 50u);
  EXPECT_GE(*stats::pearson(truth_lung, rca_lung), 0.7);
  EXPECT_GE(*stats::pearson(truth_heart, rca_heart), 0.7);
}

}  // namespace
}  // namespace ubd
