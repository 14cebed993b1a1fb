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

#ifndef MOIT_DETECT_H_
#define MOIT_DETECT_H_

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "moit/coremath.h"

namespace moit {

// Label-noise detection from k-NN votes in embedding space.
//
// Neighborhoods exclude the query itself; similarity is the inner product
// of unit rows, ties broken by lower index. Soft labels count neighbor
// labels per class (equality indicator) and divide by K.

// N x K neighbor indices, most similar first.
using NeighborTable = std::vector<std::vector<std::size_t>>;

NeighborTable NearestNeighbors(const Mat64& z, std::size_t k);

Mat64 SoftLabelsFromNeighbors(const NeighborTable& neighbors,
                              std::span<const int> labels,
                              std::size_t num_classes);

// p(c | x_i): vote over the original labels. Throws kBadK unless 2 <= K < N.
Mat64 KnnSoftLabels(const Mat64& z, std::span<const int> labels,
                    std::size_t num_classes, std::size_t k);

// Argmax per row, lowest class on ties.
std::vector<int> CorrectLabels(const Mat64& p);

// p_hat(c | x_i): the same vote over corrected labels.
Mat64 CorrectedSoftLabels(const Mat64& z, std::span<const int> y_hat,
                          std::size_t num_classes, std::size_t k);

// -log(max(p[y], 1e-12)).
double Disagreement(std::span<const double> row, int y);

enum class BalanceStrategy { kMedian, kMin, kMax, kUnbalanced };

const char* BalanceStrategyName(BalanceStrategy s);
BalanceStrategy ParseBalanceStrategy(const std::string& name);

struct CleanSelection {
  // Per-class index lists, ascending by (d, index).
  std::vector<std::vector<std::size_t>> clean_set;
  // Largest selected d per class; NaN for classes with nothing selected.
  std::vector<double> gamma;
  // Per-class counts of samples whose corrected label agrees with y.
  std::vector<std::size_t> agreements;
  std::size_t per_class_target = 0;
  std::vector<std::string> warnings;

  std::size_t size() const;
  std::vector<std::uint8_t> Mask(std::size_t n) const;
};

CleanSelection SelectClean(std::span<const double> d,
                           std::span<const int> y_hat, std::span<const int> y,
                           std::size_t num_classes, BalanceStrategy strategy);

struct DetectionMetrics {
  double precision = 0.0;
  double recall = 0.0;
  std::vector<std::string> warnings;
};

// Positives are the selected samples; truth is !noise_mask.
DetectionMetrics ComputeDetectionMetrics(std::span<const std::uint8_t> selected,
                                         std::span<const std::uint8_t> noise_mask);

enum class SoftLabelSource { kCorrected, kRaw };

struct DetectionResult {
  Mat64 p;
  std::vector<int> y_hat;
  Mat64 p_hat;
  std::vector<double> d;
  CleanSelection selection;
};

// Full pipeline on unit embeddings. With kRaw the disagreement is scored
// against p instead of p_hat.
DetectionResult DetectNoise(const Mat64& z, std::span<const int> labels,
                            std::size_t num_classes, std::size_t k,
                            BalanceStrategy strategy,
                            SoftLabelSource source = SoftLabelSource::kCorrected);

}  // namespace moit

#endif  // MOIT_DETECT_H_
