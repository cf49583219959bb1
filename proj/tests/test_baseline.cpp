#include <algorithm>
#include <cmath>

#include <gtest/gtest.h>

#include "fnn/baseline.hpp"
#include "fnn/datagen.hpp"
#include "support.hpp"

using namespace fnn;

namespace {

// Constant curves pass through the degree-1 smoother unchanged, so distances
// between them are known in closed form.
LabeledSample constant(double a, double b, int label, std::size_t T = 40) {
  std::vector<double> v(2 * T, a);
  std::fill(v.begin() + static_cast<std::ptrdiff_t>(T), v.end(), b);
  return {MultiCurve(Grid(T), 2, v), label};
}

std::vector<LabeledSample> noisy(std::size_t n, std::uint64_t seed) {
  SimConfig c;
  c.n_samples = n;
  c.n_timepoints = 60;
  c.seed = seed;
  return gen_dataset2(c);
}

const LLEConfig lle{};

TEST(Knn, QueryEqualToFirstPoint) {
  const std::vector<LabeledSample> train = {constant(0, 0, 1), constant(1, 1, 2)};
  EXPECT_EQ(knn_predict(knn_fit(train, lle, 1), train[0].data), 1);
  EXPECT_EQ(knn_predict(knn_fit(train, lle, 1), train[1].data), 2);
}

TEST(Knn, VoteTieGoesToNearerClass) {
  const auto q = constant(0, 0, 1).data;
  EXPECT_EQ(knn_predict(knn_fit({constant(0.5, 0, 1), constant(1, 0, 2)}, lle, 2), q), 1);
  EXPECT_EQ(knn_predict(knn_fit({constant(1, 0, 1), constant(0.5, 0, 2)}, lle, 2), q), 2);
  // Equal mean distance: lower class wins whatever the training order.
  EXPECT_EQ(knn_predict(knn_fit({constant(0, 1, 3), constant(1, 0, 2)}, lle, 2), q), 2);
  EXPECT_EQ(knn_predict(knn_fit({constant(1, 0, 2), constant(0, 1, 3)}, lle, 2), q), 2);
}

TEST(Knn, DistanceTieFollowsTrainingOrder) {
  const auto q = constant(0, 0, 1).data;
  EXPECT_EQ(knn_predict(knn_fit({constant(1, 0, 2), constant(-1, 0, 1)}, lle, 1), q), 2);
  EXPECT_EQ(knn_predict(knn_fit({constant(-1, 0, 1), constant(1, 0, 2)}, lle, 1), q), 1);
}

TEST(Knn, HandEnumeratedVote) {
  // Distances 1, 2, 3, 4, 5 with labels 2, 1, 1, 3, 3.
  const std::vector<LabeledSample> train = {constant(3, 0, 1), constant(5, 0, 3), constant(1, 0, 2),
                                            constant(4, 0, 3), constant(2, 0, 1)};
  const auto q = constant(0, 0, 1).data;
  // k = 2: one vote each, class 2 is nearer; k = 5: classes 1 and 3 tie on
  // two votes, class 1 has the smaller mean distance.
  const int want[] = {2, 2, 1, 1, 1};
  for (std::size_t k = 1; k <= 5; ++k) EXPECT_EQ(knn_predict(knn_fit(train, lle, k), q), want[k - 1]) << "k=" << k;
}

TEST(Knn, FullNeighbourhoodIsMajority) {
  const auto train = noisy(31, 2);
  std::size_t counts[4] = {};
  for (const auto& s : train) ++counts[s.class_index()];
  const int majority = static_cast<int>(std::max_element(counts + 1, counts + 4) - counts);
  const auto model = knn_fit(train, lle, train.size());
  for (const auto& s : noisy(10, 3)) EXPECT_EQ(knn_predict(model, s.data), majority);
}

TEST(Knn, TrainingPointsPredictOwnLabel) {
  const auto train = noisy(50, 4);
  const auto model = knn_fit(train, lle, 1);
  for (const auto& s : train) EXPECT_EQ(knn_predict(model, s.data), s.class_index());
}

TEST(Knn, StoresOrderZeroSmoothedChannels) {
  LLEConfig full;
  full.derivative_orders = 1;
  full.bandwidths = {5, 10};
  const auto train = noisy(3, 5);
  const auto model = knn_fit(train, full, 2);
  LLEConfig o0;
  o0.derivative_orders = 0;
  o0.bandwidths = {5};
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(model.curves[i].channels(), 2u);
    EXPECT_EQ(model.curves[i], lle_smooth(train[i].data, o0));
  }
}

TEST(Knn, FitIsDeterministic) {
  const auto train = noisy(20, 6);
  const auto a = knn_fit(train, lle, 3), b = knn_fit(train, lle, 3);
  EXPECT_EQ(a.curves, b.curves);
  EXPECT_EQ(a.labels, b.labels);
}

TEST(Knn, RejectsBadK) {
  const auto train = noisy(5, 7);
  EXPECT_THROW(knn_fit(train, lle, 6), Error);
  EXPECT_THROW(knn_fit(train, lle, 0), Error);
  EXPECT_THROW(knn_fit({}, lle, 1), Error);
}

TEST(Knn, PermutationInvariant) {
  auto train = noisy(60, 8);
  const auto queries = noisy(30, 9);
  std::vector<int> before;
  for (std::size_t k : {1u, 4u, 7u}) {
    const auto m = knn_fit(train, lle, k);
    for (const auto& q : queries) before.push_back(knn_predict(m, q.data));
  }
  Rng rng(1);
  rng.shuffle(train);
  std::vector<int> after;
  for (std::size_t k : {1u, 4u, 7u}) {
    const auto m = knn_fit(train, lle, k);
    for (const auto& q : queries) after.push_back(knn_predict(m, q.data));
  }
  EXPECT_EQ(before, after);
}

TEST(Knn, DuplicateOfQueryWins) {
  const auto train0 = noisy(40, 10);
  for (const auto& q : noisy(10, 11)) {
    for (int label : {1, 2, 3}) {
      auto train = train0;
      train.push_back({q.data, label});
      EXPECT_EQ(knn_predict(knn_fit(train, lle, 1), q.data), label);
    }
  }
}

TEST(Distance, IsAMetric) {
  for (std::uint64_t s = 0; s < 20; ++s) {
    const auto x = lle_smooth(test::random_curves(2, 50, 3 * s), lle);
    const auto y = lle_smooth(test::random_curves(2, 50, 3 * s + 1), lle);
    const auto z = lle_smooth(test::random_curves(2, 50, 3 * s + 2), lle);
    EXPECT_EQ(curve_distance(x, x), 0.0);
    EXPECT_NEAR(curve_distance(x, y), curve_distance(y, x), 1e-10);
    EXPECT_LE(curve_distance(x, z), curve_distance(x, y) + curve_distance(y, z) + 1e-10);
  }
}

TEST(Distance, ConstantCurves) {
  EXPECT_NEAR(curve_distance(constant(0, 0, 1).data, constant(3, 4, 1).data), 5.0, 1e-12);
}

TEST(Sweep, MatchesSingleKCalls) {
  const auto train = noisy(80, 12), test = noisy(40, 13);
  std::vector<std::size_t> ks(19);
  for (std::size_t i = 0; i < 19; ++i) ks[i] = i + 1;
  const auto acc = knn_sweep(train, test, ks, lle);
  ASSERT_EQ(acc.size(), 19u);
  for (std::size_t i = 0; i < ks.size(); ++i) {
    const auto m = knn_fit(train, lle, ks[i]);
    std::size_t hits = 0;
    for (const auto& s : test) hits += knn_predict(m, s.data) == s.class_index();
    EXPECT_EQ(acc[i], static_cast<double>(hits) / 40.0);
    EXPECT_GE(acc[i], 0.0);
    EXPECT_LE(acc[i], 1.0);
  }
}

TEST(Sweep, IdenticalTrainAndTestAtK1) {
  const auto data = noisy(50, 14);
  EXPECT_EQ(knn_sweep(data, data, {1}, lle)[0], 1.0);
}

}  // namespace
