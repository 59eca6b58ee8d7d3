#include <gtest/gtest.h>

#include "automr/metrics.hpp"
#include "automr/rng.hpp"
#include "oracles.hpp"

using namespace automr;

TEST(Metrics, MatchesCountingOracleOnRandomVectors) {
  Rng rng(55);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t C = 1 + rng.below(10);
    const std::size_t N = rng.below(1001);
    // Skew predictions toward the truth so the matrix is not uniform noise.
    const double hit = rng.uniform();
    std::vector<int> y(N), p(N);
    for (std::size_t i = 0; i < N; ++i) {
      y[i] = static_cast<int>(rng.below(C));
      p[i] = rng.uniform() < hit ? y[i] : static_cast<int>(rng.below(C));
    }
    const auto m = compute_metrics(y, p, C);
    const auto o = oracle::count_metrics(y, p, C);
    ASSERT_EQ(m.confusion, o.confusion) << "trial " << trial;
    ASSERT_EQ(m.accuracy, o.accuracy) << "trial " << trial;
    ASSERT_EQ(m.total, N);
    for (std::size_t k = 0; k < C; ++k) {
      ASSERT_EQ(m.per_class[k].precision, o.precision[k]) << "trial " << trial << " class " << k;
      ASSERT_EQ(m.per_class[k].recall, o.recall[k]) << "trial " << trial << " class " << k;
      ASSERT_EQ(m.per_class[k].f1, o.f1[k]) << "trial " << trial << " class " << k;
      ASSERT_EQ(m.per_class[k].support, o.support[k]);
    }
    ASSERT_EQ(m.macro_precision, o.macro_p) << "trial " << trial;
    ASSERT_EQ(m.macro_recall, o.macro_r) << "trial " << trial;
    ASSERT_EQ(m.macro_f1, o.macro_f1) << "trial " << trial;
  }
}

TEST(Metrics, HandWorkedTwoClassCase) {
  const auto m = metrics_from_confusion({{8, 2}, {4, 6}});
  EXPECT_DOUBLE_EQ(m.accuracy, 0.7);
  EXPECT_DOUBLE_EQ(m.per_class[0].precision, 8.0 / 12.0);
  EXPECT_DOUBLE_EQ(m.per_class[0].recall, 0.8);
  EXPECT_DOUBLE_EQ(m.per_class[1].precision, 0.75);
  EXPECT_DOUBLE_EQ(m.per_class[1].recall, 0.6);
  EXPECT_NEAR(m.per_class[0].f1, 2 * (2.0 / 3) * 0.8 / (2.0 / 3 + 0.8), 1e-15);
  EXPECT_NEAR(m.macro_recall, 0.7, 1e-15);
}

TEST(Metrics, PerfectPredictionsScoreOne) {
  const std::vector<int> y{0, 1, 2, 2, 1, 0};
  const auto m = compute_metrics(y, y, 3);
  EXPECT_EQ(m.accuracy, 1.0);
  EXPECT_EQ(m.macro_f1, 1.0);
  for (const auto& c : m.per_class) EXPECT_EQ(c.f1, 1.0);
}

TEST(Metrics, AbsentClassExcludedFromMacroAverage) {
  const std::vector<int> y{0, 0, 0}, p{0, 0, 1};
  const auto m = compute_metrics(y, p, 3);
  EXPECT_EQ(m.per_class[1].precision, 0.0);
  EXPECT_EQ(m.per_class[2].support, 0u);
  // only class 0 has support: precision 1, recall 2/3
  EXPECT_DOUBLE_EQ(m.macro_precision, 1.0);
  EXPECT_DOUBLE_EQ(m.macro_recall, 2.0 / 3.0);
}

TEST(Metrics, EmptyInputIsAllZero) {
  const auto m = compute_metrics(std::vector<int>{}, std::vector<int>{}, 4);
  EXPECT_EQ(m.total, 0u);
  EXPECT_EQ(m.accuracy, 0.0);
  EXPECT_EQ(m.macro_f1, 0.0);
}

TEST(Metrics, RejectsBadInput) {
  EXPECT_THROW(compute_metrics(std::vector<int>{0, 1}, std::vector<int>{0}, 2), ShapeError);
  EXPECT_THROW(compute_metrics(std::vector<int>{0, 2}, std::vector<int>{0, 1}, 2), ShapeError);
  EXPECT_THROW(compute_metrics(std::vector<int>{0}, std::vector<int>{-1}, 2), ShapeError);
  EXPECT_THROW(metrics_from_confusion({{1, 2}, {3}}), ShapeError);
}

TEST(Metrics, ArgmaxTiesGoToLowestClass) {
  const Tensor<float> logits({3, 3}, std::vector<float>{1, 1, 0, 0, 2, 2, -1, -3, -0.5f});
  EXPECT_EQ(argmax_rows(logits), (std::vector<int>{0, 1, 2}));
}

TEST(Metrics, JsonRoundTripKeepsEverything) {
  auto m = metrics_from_confusion({{5, 1, 0}, {2, 7, 1}, {0, 0, 4}}, 0.4321);
  const nlohmann::json j = m;
  const auto back = j.get<MetricsReport>();
  EXPECT_EQ(back.confusion, m.confusion);
  EXPECT_EQ(back.accuracy, m.accuracy);
  EXPECT_EQ(back.macro_f1, m.macro_f1);
  EXPECT_EQ(back.loss, m.loss);

  m.loss = std::numeric_limits<double>::quiet_NaN();
  const nlohmann::json k = m;
  EXPECT_TRUE(k.at("loss").is_null());
  EXPECT_TRUE(std::isnan(k.get<MetricsReport>().loss));
}
