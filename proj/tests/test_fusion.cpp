#include <gtest/gtest.h>

#include <random>

#include "locmap/fusion.hpp"

namespace locmap {
namespace {

FusionParams With(FusionMethod m) {
  FusionParams p;
  p.method = m;
  return p;
}

std::vector<double> RandomList(std::mt19937_64& rng, std::size_t n) {
  std::uniform_real_distribution<double> u(0, 1);
  std::vector<double> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

TEST(Normalize, MinMax) {
  EXPECT_EQ(NormalizeScores({0, 5, 10}), (std::vector<double>{0, 0.5, 1}));
  EXPECT_EQ(NormalizeScores({3, 3, 3}), (std::vector<double>{1, 1, 1}));
  EXPECT_TRUE(NormalizeScores({}).empty());
}

TEST(Normalize, InvariantToScaling) {
  std::mt19937_64 rng(1);
  for (int i = 0; i < 100; ++i) {
    const auto v = RandomList(rng, 10);
    std::vector<double> w = v;
    for (auto& x : w) x *= 2.0;
    const auto a = NormalizeScores(v), b = NormalizeScores(w);
    for (std::size_t k = 0; k < a.size(); ++k) EXPECT_NEAR(a[k], b[k], 1e-15);
  }
}

TEST(Fuse, SingleListIsIdentityForEveryMethod) {
  std::mt19937_64 rng(2);
  const auto s = RandomList(rng, 20);
  for (auto m : {FusionMethod::kMean, FusionMethod::kPower, FusionMethod::kMin, FusionMethod::kMax,
                 FusionMethod::kWmp, FusionMethod::kWmm, FusionMethod::kGharm}) {
    const auto out = FuseScores(With(m), {s});
    for (std::size_t i = 0; i < s.size(); ++i) EXPECT_NEAR(out[i], s[i], 1e-12);
  }
}

TEST(Fuse, WmmEndpointsAreMaxAndMin) {
  std::mt19937_64 rng(3);
  const std::vector<std::vector<double>> s = {RandomList(rng, 30), RandomList(rng, 30),
                                              RandomList(rng, 30)};
  FusionParams p = With(FusionMethod::kWmm);
  p.beta = 0.0;
  const auto hi = FuseScores(p, s);
  p.beta = 1.0;
  const auto lo = FuseScores(p, s);
  for (std::size_t i = 0; i < 30; ++i) {
    EXPECT_EQ(hi[i], std::max({s[0][i], s[1][i], s[2][i]}));
    EXPECT_EQ(lo[i], std::min({s[0][i], s[1][i], s[2][i]}));
  }
}

TEST(Fuse, WmpWithBetaOneIsWeightedMean) {
  std::mt19937_64 rng(4);
  const std::vector<std::vector<double>> s = {RandomList(rng, 30), RandomList(rng, 30)};
  FusionParams p = With(FusionMethod::kWmp);
  p.beta = 1.0;
  p.rho = {0.3, 0.7};
  const auto out = FuseScores(p, s);
  for (std::size_t i = 0; i < 30; ++i) EXPECT_NEAR(out[i], 0.3 * s[0][i] + 0.7 * s[1][i], 1e-12);
}

TEST(Fuse, GharmHandValue) {
  // f(x) = 1 / (1 + x) on x_i = 0.5 * 0.8 = 0.4; the f-mean of equal values is 0.4
  FusionParams p = With(FusionMethod::kGharm);
  p.alpha = {0.5, 0.5};
  p.gamma = 1.0;
  const auto out = FuseScores(p, {{0.8}, {0.8}});
  const double f = 1.0 / 1.4;
  EXPECT_NEAR(out[0], 1.0 / f - 1.0, 1e-12);
  EXPECT_NEAR(out[0], 0.4, 1e-12);
}

TEST(Fuse, GharmEqualWeightsIdenticalInputs) {
  std::mt19937_64 rng(5);
  for (std::size_t n = 1; n <= 5; ++n) {
    const auto s = RandomList(rng, 10);
    const auto out = FuseScores(With(FusionMethod::kGharm), std::vector(n, s));
    for (std::size_t i = 0; i < s.size(); ++i) EXPECT_NEAR(out[i], s[i] / double(n), 1e-12);
  }
}

TEST(Fuse, MonotoneInEveryInput) {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(0, 1);
  for (auto m : {FusionMethod::kMean, FusionMethod::kPower, FusionMethod::kMin, FusionMethod::kMax,
                 FusionMethod::kWmp, FusionMethod::kWmm, FusionMethod::kGharm}) {
    for (int trial = 0; trial < 500; ++trial) {
      std::vector<std::vector<double>> s = {{u(rng)}, {u(rng)}, {u(rng)}};
      FusionParams p = With(m);
      p.beta = u(rng);
      const double before = FuseScores(p, s)[0];
      auto& x = s[trial % 3][0];
      x += (1.0 - x) * u(rng);
      EXPECT_GE(FuseScores(p, s)[0], before - 1e-15);
    }
  }
}

TEST(Fuse, WeightShapeMismatch) {
  FusionParams p = With(FusionMethod::kMean);
  p.rho = {1.0};
  EXPECT_THROW(FuseScores(p, {{0.1}, {0.2}}), WeightShapeMismatch);
}

TEST(Fuse, AlphaMustSumToOne) {
  FusionParams p = With(FusionMethod::kGharm);
  p.alpha = {0.5, 0.6};
  EXPECT_THROW(FuseScores(p, {{0.1}, {0.2}}), ConfigError);
}

TEST(Fuse, UnalignedLists) {
  EXPECT_THROW(FuseScores(With(FusionMethod::kMean), {{0.1, 0.2}, {0.3}}), DimensionMismatch);
}

TEST(RoundRobin, IdenticalLists) {
  const std::vector<std::string> l = {"a", "b", "c"};
  EXPECT_EQ(RoundRobin({l, l}), l);
}

TEST(RoundRobin, SwappedPair) {
  EXPECT_EQ(RoundRobin({{"A", "B"}, {"B", "A"}}), (std::vector<std::string>{"A", "B"}));
}

TEST(RoundRobin, PermutationsOfUniverse) {
  std::mt19937_64 rng(7);
  std::vector<std::string> universe;
  for (int i = 0; i < 20; ++i) universe.push_back("i" + std::to_string(i));
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<std::vector<std::string>> lists(4, universe);
    for (auto& l : lists) std::shuffle(l.begin(), l.end(), rng);
    const auto out = RoundRobin(lists);
    auto sorted = out;
    std::sort(sorted.begin(), sorted.end());
    auto expected = universe;
    std::sort(expected.begin(), expected.end());
    EXPECT_EQ(sorted, expected);
    // first round: each list in turn contributes its best item not yet taken
    std::vector<std::string> first;
    for (const auto& l : lists)
      for (const auto& x : l)
        if (std::find(first.begin(), first.end(), x) == first.end()) {
          first.push_back(x);
          break;
        }
    for (std::size_t i = 0; i < first.size(); ++i) EXPECT_EQ(out[i], first[i]);
  }
}

TEST(FusedRetrieval, AgreementWinsOverSingleType) {
  GlobalDescriptors q1 = {{"q", Eigen::Vector2d(1, 0)}};
  GlobalDescriptors q2 = {{"q", Eigen::Vector2d(1, 0)}};
  // "x" is best for type 1 only, "y" is second for both
  GlobalDescriptors d1 = {{"x", Eigen::Vector2d(1, 0)}, {"y", Eigen::Vector2d(0.9, 0.1)},
                          {"z", Eigen::Vector2d(0, 1)}};
  GlobalDescriptors d2 = {{"x", Eigen::Vector2d(0, 1)}, {"y", Eigen::Vector2d(0.9, 0.1)},
                          {"z", Eigen::Vector2d(1, 0)}};
  const auto pairs = FusedRetrievalPairs({q1, q2}, {d1, d2}, With(FusionMethod::kMin), 3);
  ASSERT_EQ(pairs.size(), 3u);
  EXPECT_EQ(pairs[0].image_b, "y");
}

TEST(FusedRetrieval, RoundRobinRanking) {
  GlobalDescriptors q = {{"q", Eigen::Vector2d(1, 0)}};
  GlobalDescriptors d1 = {{"a", Eigen::Vector2d(1, 0)}, {"b", Eigen::Vector2d(1, 1)},
                          {"c", Eigen::Vector2d(0, 1)}};
  GlobalDescriptors d2 = {{"a", Eigen::Vector2d(0, 1)}, {"b", Eigen::Vector2d(1, 1)},
                          {"c", Eigen::Vector2d(1, 0)}};
  const auto pairs = FusedRetrievalPairs({q, q}, {d1, d2}, With(FusionMethod::kRoundRobin), 3);
  ASSERT_EQ(pairs.size(), 3u);
  EXPECT_EQ(pairs[0].image_b, "a");
  EXPECT_EQ(pairs[1].image_b, "c");
  EXPECT_EQ(pairs[2].image_b, "b");
}

TEST(FusionMethod, ParseNames) {
  EXPECT_EQ(ParseFusionMethod("GHARM"), FusionMethod::kGharm);
  EXPECT_EQ(ParseFusionMethod("round_robin"), FusionMethod::kRoundRobin);
  EXPECT_FALSE(ParseFusionMethod("median"));
}

}  // namespace
}  // namespace locmap
