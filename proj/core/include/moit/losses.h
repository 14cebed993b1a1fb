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

#ifndef MOIT_LOSSES_H_
#define MOIT_LOSSES_H_

#include <span>
#include <vector>

#include "moit/coremath.h"
#include "moit/membank.h"

namespace moit {

// Label record of an interpolated sample lambda * x_a + (1 - lambda) * x_b.
struct MixedLabel {
  int ya = 0;
  int yb = 0;
  double lambda = 1.0;
  int dominant = 0;

  static MixedLabel Mix(int ya, int yb, double lambda) {
    return {ya, yb, lambda, lambda >= 0.5 ? ya : yb};
  }
  static MixedLabel Plain(int y) { return {y, y, 1.0, y}; }
};

struct ContrastBatch {
  Mat64 z;                                // 2N unit rows
  std::vector<MixedLabel> labels;         // one per row
  std::vector<std::size_t> view_pairing;  // sibling view of each row
};

struct LossOut {
  double value = 0.0;
  Mat64 grad;
};

// Supervised contrastive loss over unit rows with plain labels. Anchors
// without any same-label partner are left out of the mean. Throws
// kDegenerateBatch when no anchor has a partner.
LossOut SclLoss(const Mat64& z, std::span<const int> labels, double tau);

// Interpolated contrastive loss inside the batch: every anchor mixes two
// contrastive terms, weighted lambda and 1 - lambda, whose positives are
// the other rows with dominant label y_a and y_b respectively. The softmax
// denominator runs over every other row. Same degenerate rule as SclLoss.
LossOut IclMixLoss(const ContrastBatch& batch, double tau);

// Batch anchors against memory entries only. Memory rows are constants.
// An empty memory, or one with no matching entries, gives zero.
LossOut IclMemLoss(const ContrastBatch& batch, const MemorySnapshot& memory,
                   double tau);

enum class CombineMode { kSum, kMean };

LossOut IclLoss(const ContrastBatch& batch, const MemorySnapshot& memory,
                double tau, CombineMode mode = CombineMode::kSum);

// Mean over rows of -lambda * ta . log(h) - (1 - lambda) * tb . log(h) with
// h = softmax(logits) and h floored at kProbFloor inside the log. Gradient
// is with respect to the logits. Targets must be distributions.
inline constexpr double kProbFloor = 1e-12;

LossOut SslLoss(const Mat64& logits, const Mat64& targets_a,
                const Mat64& targets_b, std::span<const double> lambdas);

struct MoitLossOut {
  double value = 0.0;
  double icl = 0.0;
  double ssl = 0.0;
  Mat64 grad_z;
  Mat64 grad_logits;
};

MoitLossOut MoitLoss(const ContrastBatch& batch, const MemorySnapshot& memory,
                     const Mat64& logits, const Mat64& targets_a,
                     const Mat64& targets_b, double tau,
                     CombineMode mode = CombineMode::kSum);

// Hard bootstrapping on mixed samples: the target for each side is
// delta * onehot(y) + (1 - delta) * onehot(prediction).
LossOut BootstrapLoss(const Mat64& logits, std::span<const int> ya,
                      std::span<const int> yb, std::span<const int> pred_a,
                      std::span<const int> pred_b,
                      std::span<const double> lambdas, double delta);

Mat64 OneHotRows(std::span<const int> labels, std::size_t num_classes);

}  // namespace moit

#endif  // MOIT_LOSSES_H_
