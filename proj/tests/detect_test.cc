// Copyright 2026 The MOIT Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "moit/detect.h"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "oracles.h"

namespace moit {
namespace {

Mat64 RandomUnitRows(std::size_t n, std::size_t d, Rng& rng) {
  Mat64 z(n, d);
  for (std::size_t i = 0; i < n; ++i) {
    Vec64 v(d);
    for (double& x : v) x = rng.Normal();
    z.SetRow(i, L2Normalize(v));
  }
  return z;
}

// Random rows with repeated points so similarity ties actually occur.
Mat64 RowsWithTies(std::size_t n, std::size_t d, Rng& rng) {
  const std::size_t distinct = std::max<std::size_t>(2, n / 3);
  const Mat64 base = RandomUnitRows(distinct, d, rng);
  Mat64 z(n, d);
  for (std::size_t i = 0; i < n; ++i) z.SetRow(i, base.row(rng.UniformInt(distinct)));
  return z;
}

std::vector<int> RandomLabels(std::size_t n, std::size_t c, Rng& rng) {
  std::vector<int> y(n);
  for (int& v : y) v = static_cast<int>(rng.UniformInt(c));
  return y;
}

void ExpectMatrixEquals(const Mat64& m, const oracle::Rows& r) {
  ASSERT_EQ(m.rows(), r.size());
  for (std::size_t i = 0; i < r.size(); ++i) {
    for (std::size_t k = 0; k < r[i].size(); ++k) {
      ASSERT_EQ(m(i, k), r[i][k]) << i << "," << k;
    }
  }
}

TEST(KnnSoftLabelsTest, UnanimousAndSplitNeighborhoods) {
  // Query 0 has neighbors 1 and 2 (closest), point 3 is far away.
  const Mat64 z(4, 2, {1.0, 0.0, 0.995, 0.0998749, 0.995, -0.0998749, -1.0, 0.0});
  Mat64 zz(4, 2);
  for (std::size_t i = 0; i < 4; ++i) zz.SetRow(i, L2Normalize(z.row(i)));
  const Mat64 p = KnnSoftLabels(zz, std::vector<int>{1, 0, 0, 1}, 2, 2);
  EXPECT_EQ(p(0, 0), 1.0);
  EXPECT_EQ(p(0, 1), 0.0);
  const Mat64 q = KnnSoftLabels(zz, std::vector<int>{1, 0, 1, 1}, 2, 2);
  EXPECT_EQ(q(0, 0), 0.5);
  EXPECT_EQ(q(0, 1), 0.5);
}

TEST(KnnSoftLabelsTest, CirclePointsMatchOracle) {
  Mat64 z(12, 2);
  std::vector<int> labels(12);
  for (std::size_t i = 0; i < 12; ++i) {
    const double a = 2.0 * std::numbers::pi * static_cast<double>(i) / 12.0;
    z(i, 0) = std::cos(a);
    z(i, 1) = std::sin(a);
    labels[i] = static_cast<int>((i / 4) % 3);
  }
  const auto nbrs = oracle::Neighbors(oracle::ToRows(z), 3);
  EXPECT_EQ(NearestNeighbors(z, 3), nbrs);
  ExpectMatrixEquals(KnnSoftLabels(z, labels, 3, 3),
                     oracle::VoteCounts(nbrs, labels, 3));
}

TEST(KnnSoftLabelsTest, RandomInstancesMatchOracle) {
  Rng rng(1);
  for (int t = 0; t < 30; ++t) {
    const std::size_t n = 5 + rng.UniformInt(60);
    const std::size_t c = 2 + rng.UniformInt(4);
    const std::size_t k = 2 + rng.UniformInt(n - 2);
    const Mat64 z = t % 2 ? RowsWithTies(n, 3, rng) : RandomUnitRows(n, 3, rng);
    const std::vector<int> y = RandomLabels(n, c, rng);
    const auto nbrs = oracle::Neighbors(oracle::ToRows(z), k);
    ASSERT_EQ(NearestNeighbors(z, k), nbrs);
    const Mat64 p = KnnSoftLabels(z, y, c, k);
    ExpectMatrixEquals(p, oracle::VoteCounts(nbrs, y, c));
    for (std::size_t i = 0; i < n; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < c; ++j) {
        s += p(i, j);
        const double votes = p(i, j) * static_cast<double>(k);
        EXPECT_NEAR(votes, std::round(votes), 1e-9);
      }
      EXPECT_NEAR(s, 1.0, 1e-12);
    }
  }
}

TEST(KnnSoftLabelsTest, BadK) {
  Rng rng(2);
  const Mat64 z = RandomUnitRows(5, 2, rng);
  const std::vector<int> y = {0, 1, 0, 1, 0};
  for (std::size_t k : {0u, 1u, 5u, 9u}) {
    try {
      KnnSoftLabels(z, y, 2, k);
      ADD_FAILURE() << "k=" << k << " accepted";
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::kBadK);
    }
  }
  EXPECT_NO_THROW(KnnSoftLabels(z, y, 2, 4));
}

TEST(CorrectLabelsTest, LowestClassOnTies) {
  const Mat64 p(3, 2, {0.7, 0.3, 0.5, 0.5, 0.25, 0.75});
  EXPECT_EQ(CorrectLabels(p), (std::vector<int>{0, 0, 1}));
}

TEST(CorrectLabelsTest, MatchesNaiveScan) {
  Rng rng(3);
  const Mat64 z = RowsWithTies(80, 3, rng);
  const std::vector<int> y = RandomLabels(80, 4, rng);
  const Mat64 p = KnnSoftLabels(z, y, 4, 6);
  EXPECT_EQ(CorrectLabels(p), oracle::ArgMaxRows(oracle::ToRows(p)));
}

TEST(CorrectedSoftLabelsTest, Reductions) {
  Rng rng(4);
  const Mat64 z = RandomUnitRows(30, 4, rng);
  const std::vector<int> y = RandomLabels(30, 3, rng);
  EXPECT_EQ(CorrectedSoftLabels(z, y, 3, 5), KnnSoftLabels(z, y, 3, 5));
  const Mat64 same = CorrectedSoftLabels(z, std::vector<int>(30, 2), 3, 5);
  for (std::size_t i = 0; i < 30; ++i) {
    EXPECT_EQ(same(i, 2), 1.0);
    EXPECT_EQ(same(i, 0) + same(i, 1), 0.0);
  }
}

TEST(CorrectedSoftLabelsTest, ThirtyPointsMatchOracle) {
  Rng rng(5);
  for (int t = 0; t < 10; ++t) {
    const Mat64 z = RandomUnitRows(30, 3, rng);
    const std::vector<int> y = RandomLabels(30, 3, rng);
    const auto nbrs = oracle::Neighbors(oracle::ToRows(z), 7);
    const auto y_hat = oracle::ArgMaxRows(oracle::VoteCounts(nbrs, y, 3));
    ExpectMatrixEquals(CorrectedSoftLabels(z, y_hat, 3, 7),
                       oracle::VoteCounts(nbrs, y_hat, 3));
  }
}

TEST(DisagreementTest, Values) {
  EXPECT_EQ(Disagreement(Vec64{0.0, 1.0}, 1), 0.0);
  EXPECT_NEAR(Disagreement(Vec64{0.0, 1.0}, 0), -std::log(1e-12), 1e-12);
  EXPECT_NEAR(Disagreement(Vec64{0.0, 1.0}, 0), 27.631, 1e-3);
  EXPECT_NEAR(Disagreement(Vec64{0.5, 0.5}, 0), std::log(2.0), 1e-15);
}

struct SelectionCase {
  std::vector<double> d;
  std::vector<int> y;
  std::vector<int> y_hat;
};

// Classes of 40 samples each; the first agree[c] samples of class c have
// y_hat == y.
SelectionCase MakeSelectionCase(const std::vector<int>& agree, Rng& rng) {
  SelectionCase s;
  const int c = static_cast<int>(agree.size());
  for (int k = 0; k < c; ++k) {
    for (int i = 0; i < 40; ++i) {
      s.y.push_back(k);
      s.y_hat.push_back(i < agree[k] ? k : (k + 1) % c);
      s.d.push_back(rng.Uniform(0.0, 3.0));
    }
  }
  return s;
}

TEST(SelectCleanTest, MedianOfAgreementCounts) {
  Rng rng(6);
  const SelectionCase s = MakeSelectionCase({10, 20, 30}, rng);
  const CleanSelection sel =
      SelectClean(s.d, s.y_hat, s.y, 3, BalanceStrategy::kMedian);
  EXPECT_EQ(sel.agreements, (std::vector<std::size_t>{10, 20, 30}));
  EXPECT_EQ(sel.per_class_target, 20u);
  for (const auto& cls : sel.clean_set) EXPECT_EQ(cls.size(), 20u);
  EXPECT_EQ(sel.clean_set,
            oracle::SelectClean(s.d, s.y_hat, s.y, 3, "median"));
  for (int k = 0; k < 3; ++k) {
    double worst = 0.0;
    for (std::size_t i : sel.clean_set[k]) {
      EXPECT_EQ(s.y[i], k);
      worst = std::max(worst, s.d[i]);
    }
    EXPECT_EQ(sel.gamma[k], worst);
  }
}

TEST(SelectCleanTest, EvenClassCountFloorsMedian) {
  Rng rng(7);
  const SelectionCase s = MakeSelectionCase({3, 10, 20, 30}, rng);
  const CleanSelection sel =
      SelectClean(s.d, s.y_hat, s.y, 4, BalanceStrategy::kMedian);
  EXPECT_EQ(sel.per_class_target, 15u);
  const SelectionCase odd = MakeSelectionCase({3, 10, 11, 30}, rng);
  EXPECT_EQ(SelectClean(odd.d, odd.y_hat, odd.y, 4, BalanceStrategy::kMedian)
                .per_class_target,
            10u);
}

TEST(SelectCleanTest, UnbalancedKeepsAgreeingSamples) {
  Rng rng(8);
  SelectionCase s = MakeSelectionCase({40, 40, 40}, rng);
  const CleanSelection all =
      SelectClean(s.d, s.y_hat, s.y, 3, BalanceStrategy::kUnbalanced);
  EXPECT_EQ(all.size(), s.y.size());
  s = MakeSelectionCase({5, 17, 40}, rng);
  const CleanSelection part =
      SelectClean(s.d, s.y_hat, s.y, 3, BalanceStrategy::kUnbalanced);
  EXPECT_EQ(part.size(), 62u);
  EXPECT_EQ(part.clean_set,
            oracle::SelectClean(s.d, s.y_hat, s.y, 3, "unbalanced"));
}

TEST(SelectCleanTest, MinWithZeroAgreementIsEmpty) {
  Rng rng(9);
  const SelectionCase s = MakeSelectionCase({0, 5, 9}, rng);
  const CleanSelection sel =
      SelectClean(s.d, s.y_hat, s.y, 3, BalanceStrategy::kMin);
  EXPECT_EQ(sel.per_class_target, 0u);
  EXPECT_EQ(sel.size(), 0u);
  EXPECT_EQ(SelectClean(s.d, s.y_hat, s.y, 3, BalanceStrategy::kMax)
                .per_class_target,
            9u);
}

TEST(SelectCleanTest, EmptyClassWarns) {
  const std::vector<double> d = {0.1, 0.2, 0.3};
  const std::vector<int> y = {0, 0, 2};
  const CleanSelection sel = SelectClean(d, y, y, 3, BalanceStrategy::kMax);
  EXPECT_FALSE(sel.warnings.empty());
  EXPECT_EQ(sel.clean_set[1].size(), 0u);
  EXPECT_EQ(sel.clean_set[0].size(), 2u);
  EXPECT_EQ(sel.clean_set[2].size(), 1u);
}

TEST(SelectCleanTest, RandomMatchesOracleAndIsMonotone) {
  Rng rng(10);
  const BalanceStrategy strategies[] = {
      BalanceStrategy::kMedian, BalanceStrategy::kMin, BalanceStrategy::kMax,
      BalanceStrategy::kUnbalanced};
  const char* names[] = {"median", "min", "max", "unbalanced"};
  for (int t = 0; t < 40; ++t) {
    const std::size_t n = 10 + rng.UniformInt(150);
    const std::size_t c = 2 + rng.UniformInt(5);
    const std::vector<int> y = RandomLabels(n, c, rng);
    std::vector<int> y_hat = y;
    for (int& v : y_hat) {
      if (rng.Bernoulli(0.4)) v = static_cast<int>(rng.UniformInt(c));
    }
    std::vector<double> d(n);
    // Coarse values so equal d at the boundary is common.
    for (double& v : d) v = 0.25 * static_cast<double>(rng.UniformInt(8));
    for (int s = 0; s < 4; ++s) {
      const CleanSelection sel = SelectClean(d, y_hat, y, c, strategies[s]);
      ASSERT_EQ(sel.clean_set, oracle::SelectClean(d, y_hat, y, c, names[s]))
          << names[s];
      if (strategies[s] == BalanceStrategy::kUnbalanced) continue;
      const auto mask = sel.Mask(n);
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
          if (y[i] == y[j] && d[i] < d[j] && mask[j]) EXPECT_TRUE(mask[i]);
        }
      }
    }
  }
}

TEST(DetectionMetricsTest, Cases) {
  std::vector<std::uint8_t> noise = {0, 0, 0, 0, 0, 0, 1, 1, 1, 1};
  std::vector<std::uint8_t> exact = {1, 1, 1, 1, 1, 1, 0, 0, 0, 0};
  const DetectionMetrics perfect = ComputeDetectionMetrics(exact, noise);
  EXPECT_EQ(perfect.precision, 1.0);
  EXPECT_EQ(perfect.recall, 1.0);
  const DetectionMetrics empty =
      ComputeDetectionMetrics(std::vector<std::uint8_t>(10, 0), noise);
  EXPECT_EQ(empty.precision, 0.0);
  EXPECT_EQ(empty.recall, 0.0);
  EXPECT_FALSE(empty.warnings.empty());
  std::vector<std::uint8_t> five = {1, 1, 1, 1, 0, 0, 1, 0, 0, 0};
  const DetectionMetrics crafted = ComputeDetectionMetrics(five, noise);
  EXPECT_DOUBLE_EQ(crafted.precision, 0.8);
  EXPECT_NEAR(crafted.recall, 0.6667, 1e-4);
}

TEST(DetectNoiseTest, PipelineMatchesOracle) {
  Rng rng(11);
  for (int t = 0; t < 10; ++t) {
    const std::size_t n = 60;
    const Mat64 z = RandomUnitRows(n, 4, rng);
    const std::vector<int> y = RandomLabels(n, 3, rng);
    const DetectionResult r =
        DetectNoise(z, y, 3, 8, BalanceStrategy::kMedian);
    const auto nbrs = oracle::Neighbors(oracle::ToRows(z), 8);
    const auto p = oracle::VoteCounts(nbrs, y, 3);
    const auto y_hat = oracle::ArgMaxRows(p);
    const auto p_hat = oracle::VoteCounts(nbrs, y_hat, 3);
    ExpectMatrixEquals(r.p, p);
    EXPECT_EQ(r.y_hat, y_hat);
    ExpectMatrixEquals(r.p_hat, p_hat);
    std::vector<double> d(n);
    for (std::size_t i = 0; i < n; ++i) {
      d[i] = -std::log(std::max(p_hat[i][y[i]], 1e-12));
      EXPECT_EQ(r.d[i], d[i]);
    }
    EXPECT_EQ(r.selection.clean_set,
              oracle::SelectClean(d, y_hat, y, 3, "median"));
    const DetectionResult raw =
        DetectNoise(z, y, 3, 8, BalanceStrategy::kMedian, SoftLabelSource::kRaw);
    for (std::size_t i = 0; i < n; ++i) {
      EXPECT_EQ(raw.d[i], -std::log(std::max(p[i][y[i]], 1e-12)));
    }
  }
}

}  // namespace
}  // namespace moit
