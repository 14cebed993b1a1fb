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

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace moit {

namespace {

void CheckK(std::size_t n, std::size_t k) {
  if (k < 2 || k >= n) {
    throw Error(ErrorCode::kBadK, "K=" + std::to_string(k) +
                                      " must satisfy 2 <= K < N=" +
                                      std::to_string(n));
  }
}

void CheckLabels(std::span<const int> labels, std::size_t num_classes) {
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= num_classes) {
      throw Error(ErrorCode::kInvalidArgument, "label out of range");
    }
  }
}

}  // namespace

NeighborTable NearestNeighbors(const Mat64& z, std::size_t k) {
  const std::size_t n = z.rows();
  CheckK(n, k);
  const Mat64 sims = PairwiseInner(z, z);
  NeighborTable table(n);
  ParallelFor(n, [&](std::size_t i) {
    std::vector<std::size_t> cand;
    cand.reserve(n - 1);
    for (std::size_t j = 0; j < n; ++j) {
      if (j != i) cand.push_back(j);
    }
    auto closer = [&](std::size_t a, std::size_t b) {
      const double sa = sims(i, a);
      const double sb = sims(i, b);
      return sa > sb || (sa == sb && a < b);
    };
    std::partial_sort(cand.begin(), cand.begin() + static_cast<long>(k),
                      cand.end(), closer);
    cand.resize(k);
    table[i] = std::move(cand);
  });
  return table;
}

Mat64 SoftLabelsFromNeighbors(const NeighborTable& neighbors,
                              std::span<const int> labels,
                              std::size_t num_classes) {
  CheckLabels(labels, num_classes);
  Mat64 p(neighbors.size(), num_classes);
  for (std::size_t i = 0; i < neighbors.size(); ++i) {
    const auto k = static_cast<double>(neighbors[i].size());
    std::vector<std::size_t> counts(num_classes, 0);
    for (std::size_t j : neighbors[i]) {
      ++counts[static_cast<std::size_t>(labels[j])];
    }
    for (std::size_t c = 0; c < num_classes; ++c) {
      p(i, c) = static_cast<double>(counts[c]) / k;
    }
  }
  return p;
}

Mat64 KnnSoftLabels(const Mat64& z, std::span<const int> labels,
                    std::size_t num_classes, std::size_t k) {
  if (labels.size() != z.rows()) {
    throw Error(ErrorCode::kDimMismatch, "labels do not match embeddings");
  }
  return SoftLabelsFromNeighbors(NearestNeighbors(z, k), labels, num_classes);
}

std::vector<int> CorrectLabels(const Mat64& p) {
  std::vector<int> y_hat(p.rows());
  for (std::size_t i = 0; i < p.rows(); ++i) {
    y_hat[i] = static_cast<int>(ArgMax(p.row(i)));
  }
  return y_hat;
}

Mat64 CorrectedSoftLabels(const Mat64& z, std::span<const int> y_hat,
                          std::size_t num_classes, std::size_t k) {
  return KnnSoftLabels(z, y_hat, num_classes, k);
}

double Disagreement(std::span<const double> row, int y) {
  if (y < 0 || static_cast<std::size_t>(y) >= row.size()) {
    throw Error(ErrorCode::kInvalidArgument, "label out of range");
  }
  return -std::log(std::max(row[static_cast<std::size_t>(y)], 1e-12));
}

const char* BalanceStrategyName(BalanceStrategy s) {
  switch (s) {
    case BalanceStrategy::kMedian: return "median";
    case BalanceStrategy::kMin: return "min";
    case BalanceStrategy::kMax: return "max";
    case BalanceStrategy::kUnbalanced: return "none";
  }
  return "median";
}

BalanceStrategy ParseBalanceStrategy(const std::string& name) {
  if (name == "median") return BalanceStrategy::kMedian;
  if (name == "min") return BalanceStrategy::kMin;
  if (name == "max") return BalanceStrategy::kMax;
  if (name == "none" || name == "unbalanced") {
    return BalanceStrategy::kUnbalanced;
  }
  throw Error(ErrorCode::kInvalidArgument, "unknown balance strategy " + name);
}

std::size_t CleanSelection::size() const {
  std::size_t s = 0;
  for (const auto& c : clean_set) s += c.size();
  return s;
}

std::vector<std::uint8_t> CleanSelection::Mask(std::size_t n) const {
  std::vector<std::uint8_t> mask(n, 0);
  for (const auto& c : clean_set) {
    for (std::size_t i : c) mask.at(i) = 1;
  }
  return mask;
}

CleanSelection SelectClean(std::span<const double> d,
                           std::span<const int> y_hat, std::span<const int> y,
                           std::size_t num_classes, BalanceStrategy strategy) {
  const std::size_t n = d.size();
  if (y_hat.size() != n || y.size() != n) {
    throw Error(ErrorCode::kDimMismatch, "selection inputs differ in length");
  }
  if (num_classes == 0) {
    throw Error(ErrorCode::kInvalidArgument, "need at least one class");
  }
  CheckLabels(y, num_classes);

  CleanSelection sel;
  sel.clean_set.assign(num_classes, {});
  sel.gamma.assign(num_classes, std::numeric_limits<double>::quiet_NaN());
  sel.agreements.assign(num_classes, 0);

  std::vector<std::vector<std::size_t>> members(num_classes);
  for (std::size_t i = 0; i < n; ++i) {
    const auto c = static_cast<std::size_t>(y[i]);
    members[c].push_back(i);
    if (y_hat[i] == y[i]) ++sel.agreements[c];
  }
  for (std::size_t c = 0; c < num_classes; ++c) {
    if (members[c].empty()) {
      sel.warnings.push_back("EmptyClass: class " + std::to_string(c) +
                             " has no samples");
    }
  }

  auto by_score = [&](std::size_t p, std::size_t q) {
    return d[p] < d[q] || (d[p] == d[q] && p < q);
  };
  if (strategy == BalanceStrategy::kUnbalanced) {
    for (std::size_t c = 0; c < num_classes; ++c) {
      for (std::size_t i : members[c]) {
        if (y_hat[i] == y[i]) sel.clean_set[c].push_back(i);
      }
      std::sort(sel.clean_set[c].begin(), sel.clean_set[c].end(), by_score);
    }
  } else {
    std::vector<std::size_t> a = sel.agreements;
    std::sort(a.begin(), a.end());
    std::size_t m = 0;
    switch (strategy) {
      case BalanceStrategy::kMin: m = a.front(); break;
      case BalanceStrategy::kMax: m = a.back(); break;
      default: {
        const std::size_t h = num_classes / 2;
        m = num_classes % 2 == 1 ? a[h] : (a[h - 1] + a[h]) / 2;
      }
    }
    sel.per_class_target = m;
    for (std::size_t c = 0; c < num_classes; ++c) {
      std::vector<std::size_t> idx = members[c];
      const std::size_t take = std::min(m, idx.size());
      std::partial_sort(idx.begin(), idx.begin() + static_cast<long>(take),
                        idx.end(), by_score);
      idx.resize(take);
      sel.clean_set[c] = std::move(idx);
    }
  }
  for (std::size_t c = 0; c < num_classes; ++c) {
    for (std::size_t i : sel.clean_set[c]) {
      if (std::isnan(sel.gamma[c]) || d[i] > sel.gamma[c]) sel.gamma[c] = d[i];
    }
  }
  return sel;
}

DetectionMetrics ComputeDetectionMetrics(
    std::span<const std::uint8_t> selected,
    std::span<const std::uint8_t> noise_mask) {
  if (selected.size() != noise_mask.size()) {
    throw Error(ErrorCode::kDimMismatch, "mask lengths differ");
  }
  std::size_t chosen = 0;
  std::size_t clean = 0;
  std::size_t hit = 0;
  for (std::size_t i = 0; i < selected.size(); ++i) {
    const bool truly_clean = noise_mask[i] == 0;
    clean += truly_clean;
    chosen += selected[i] != 0;
    hit += (selected[i] != 0) && truly_clean;
  }
  DetectionMetrics m;
  if (chosen == 0) {
    m.warnings.push_back("empty selection: precision undefined, reporting 0");
  } else {
    m.precision = static_cast<double>(hit) / static_cast<double>(chosen);
  }
  if (clean > 0) {
    m.recall = static_cast<double>(hit) / static_cast<double>(clean);
  }
  return m;
}

DetectionResult DetectNoise(const Mat64& z, std::span<const int> labels,
                            std::size_t num_classes, std::size_t k,
                            BalanceStrategy strategy, SoftLabelSource source) {
  if (labels.size() != z.rows()) {
    throw Error(ErrorCode::kDimMismatch, "labels do not match embeddings");
  }
  const NeighborTable nn = NearestNeighbors(z, k);
  DetectionResult r;
  r.p = SoftLabelsFromNeighbors(nn, labels, num_classes);
  r.y_hat = CorrectLabels(r.p);
  r.p_hat = SoftLabelsFromNeighbors(nn, r.y_hat, num_classes);
  const Mat64& scored = source == SoftLabelSource::kCorrected ? r.p_hat : r.p;
  r.d.resize(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    r.d[i] = Disagreement(scored.row(i), labels[i]);
  }
  r.selection = SelectClean(r.d, r.y_hat, labels, num_classes, strategy);
  return r;
}

}  // namespace moit
