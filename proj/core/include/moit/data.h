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

#ifndef MOIT_DATA_H_
#define MOIT_DATA_H_

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "moit/coremath.h"
#include "moit/losses.h"

namespace moit {

enum class Split { kTrain, kVal, kTest };

struct Dataset {
  Mat64 x;
  std::vector<int> y_clean;
  std::vector<int> y;
  std::vector<std::uint8_t> noise_mask;  // y != y_clean
  int num_classes = 0;
  Split split = Split::kTrain;

  std::size_t size() const { return y.size(); }
  std::size_t dim() const { return x.cols(); }
  std::size_t NoisyCount() const;
  void RefreshNoiseMask();
  // Throws kInvalidArgument on inconsistent shapes or labels.
  void Validate() const;
};

// Class centers uniform in [-spread, spread]^D, redrawn until every pair is
// at least 4 * sigma apart. Throws kCenterPackingFailed after 1000 draws.
Mat64 DrawCenters(int num_classes, int dim, double center_spread,
                  double cluster_sigma, Rng& rng);

// per_class Gaussian samples around each center, class-major order.
Dataset SampleBlobs(const Mat64& centers, int per_class, double cluster_sigma,
                    Rng& rng);

Dataset MakeBlobs(int num_classes, int per_class, int dim, double center_spread,
                  double cluster_sigma, std::uint64_t seed);

struct BlobSplits {
  Mat64 centers;
  Dataset train;
  Dataset test;
};

// Train split identical to MakeBlobs with the same arguments; the test split
// is drawn around the same centers from an independent stream.
BlobSplits MakeBlobSplits(int num_classes, int per_class, int test_per_class,
                          int dim, double center_spread, double cluster_sigma,
                          std::uint64_t seed);

// Each label flips with probability `rate` to a uniformly drawn incorrect
// class. Flips are drawn against y_clean.
Dataset InjectSymmetric(Dataset data, double rate, Rng& rng);

// mapping[c] is the flip target of class c; mapping[c] == c never flips.
Dataset InjectAsymmetric(Dataset data, double rate,
                         std::span<const int> mapping, Rng& rng);

// Circular shift inside consecutive groups of `group_size` classes; a
// trailing partial group shifts within itself.
std::vector<int> CircularGroupMapping(int num_classes, int group_size);

struct AugmentConfig {
  double jitter_sigma = 0.0;
  double drop_prob = 0.0;
  double scale_lo = 1.0;
  double scale_hi = 1.0;

  void Validate() const;
  static AugmentConfig Identity() { return {}; }
};

// x * dropmask * scale + N(0, jitter_sigma^2); one scale draw per view.
Vec64 Augment(std::span<const double> x, const AugmentConfig& cfg, Rng& rng);
std::pair<Vec64, Vec64> TwoViews(std::span<const double> x,
                                 const AugmentConfig& cfg, Rng& rng);

Vec64 MixupPair(std::span<const double> xa, std::span<const double> xb,
                double lambda);

// Random permutation of [0, n) without fixed points (n >= 2).
std::vector<std::size_t> RandomDerangement(std::size_t n, Rng& rng);

struct MixedBatch {
  Mat64 inputs;  // 2N mixed views
  std::vector<MixedLabel> labels;
  std::vector<std::size_t> view_pairing;  // row r <-> (r + N) mod 2N
  std::vector<std::size_t> partner;       // view mixed into row r
  std::vector<std::size_t> source_a;      // dataset index behind y_a
  std::vector<std::size_t> source_b;      // dataset index behind y_b
};

// Two augmented views of every sample (first views in rows [0, N), second
// views in [N, 2N)), each mixed with the view picked by a random
// derangement of the 2N rows. One lambda ~ Beta(alpha, alpha) per row unless
// fixed_lambda is given.
MixedBatch BuildContrastBatch(const Mat64& inputs, std::span<const int> labels,
                              std::span<const std::size_t> sample_ids,
                              const AugmentConfig& cfg, double alpha, Rng& rng,
                              std::optional<double> fixed_lambda = std::nullopt);

// Text format:
//   moitdata v1, N, D, C
//   x_0,...,x_{D-1},y,y_clean     (N rows, 17 significant digits)
void WriteDataset(const Dataset& data, std::ostream& out);
Dataset ReadDataset(std::istream& in);
void SaveDataset(const Dataset& data, const std::string& path);
Dataset LoadDataset(const std::string& path);

}  // namespace moit

#endif  // MOIT_DATA_H_
