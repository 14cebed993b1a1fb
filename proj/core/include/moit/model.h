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

#ifndef MOIT_MODEL_H_
#define MOIT_MODEL_H_

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "moit/coremath.h"

namespace moit {

struct ModelShape {
  int input_dim = 0;
  std::vector<int> hidden = {64};
  int embed_dim = 32;
  int proj_dim = 128;
  int num_classes = 0;
};

// y = W x + b with W stored out x in.
struct Affine {
  Mat64 weight;
  Vec64 bias;

  std::size_t in_dim() const { return weight.cols(); }
  std::size_t out_dim() const { return weight.rows(); }
  bool operator==(const Affine&) const = default;
};

// Encoder (affine layers with ReLU between them), projection head on the
// encoder output, and a linear classifier on the same encoder output.
struct ModelParams {
  std::vector<Affine> encoder;
  Affine projector;
  Affine classifier;

  std::size_t input_dim() const { return encoder.front().in_dim(); }
  std::size_t embed_dim() const { return encoder.back().out_dim(); }
  std::size_t proj_dim() const { return projector.out_dim(); }
  std::size_t num_classes() const { return classifier.out_dim(); }
  ModelShape shape() const;

  // Visits every (name, tensor storage, is_weight) triple in a fixed order.
  template <typename Fn>
  void ForEachTensor(Fn&& fn);
  template <typename Fn>
  void ForEachTensor(Fn&& fn) const;

  bool operator==(const ModelParams&) const = default;
};

using ParamGrads = ModelParams;

// Glorot-uniform weights in +-sqrt(6 / (fan_in + fan_out)), zero biases.
ModelParams InitParams(const ModelShape& shape, Rng& rng);
ModelParams ZerosLike(const ModelParams& params);
void ReinitClassifier(ModelParams& params, Rng& rng);
bool AllFinite(const ModelParams& params);

struct ForwardPass {
  // act[l] is the input of encoder layer l (act[0] = x); pre[l] its output
  // before the ReLU.
  std::vector<Vec64> act;
  std::vector<Vec64> pre;
  Vec64 v;
  Vec64 w;
  double w_norm = 0.0;
  Vec64 z;
  Vec64 logits;
};

ForwardPass Forward(const ModelParams& params, std::span<const double> x);
std::vector<ForwardPass> ForwardBatch(const ModelParams& params,
                                      const Mat64& inputs);

// No-gradient helpers over a whole matrix of inputs.
Mat64 Embed(const ModelParams& params, const Mat64& inputs);
Mat64 ClassLogits(const ModelParams& params, const Mat64& inputs);

// Vector-Jacobian product of z = w / ||w||.
Vec64 L2NormalizeBackward(std::span<const double> z, double w_norm,
                          std::span<const double> grad_z);

// Sums parameter gradients over the batch. grad_z / grad_logits hold one row
// per pass; an empty matrix means no upstream gradient on that output.
ParamGrads Backward(const ModelParams& params,
                    std::span<const ForwardPass> passes, const Mat64& grad_z,
                    const Mat64& grad_logits);

struct SgdHyper {
  double lr = 0.1;
  double momentum = 0.9;
  double weight_decay = 1e-4;
};

struct TrainableMask {
  bool encoder = true;
  bool projector = true;
  bool classifier = true;
};

struct OptState {
  ModelParams momentum;
  long step = 0;
  double lr = 0.0;
};

OptState InitOptState(const ModelParams& params);

// buf <- momentum * buf + grad + decay * param; param <- param - lr * buf.
void SgdUpdate(std::span<double> param, std::span<double> buf,
               std::span<const double> grad, double lr, double momentum,
               double weight_decay);

// Weight decay applies to weight matrices only. Groups switched off in the
// mask keep both their parameters and momentum untouched.
void SgdStep(ModelParams& params, OptState& state, const ParamGrads& grads,
             const SgdHyper& hyper, const TrainableMask& mask = {});

struct LrSchedule {
  double initial = 0.1;
  std::vector<int> milestones = {30, 50};
  double factor = 0.1;
  // Optional additional decay starting at this epoch; negative disables it.
  int extra_decay_epoch = -1;
};

double LrAt(int epoch, const LrSchedule& schedule);

// Binary checkpoint, all integers and floats little-endian:
//   "MOITCKPT" | u32 version | u32 tensor_count |
//   tensor_count x { u32 name_len | name | u32 rank | rank x u64 dim |
//                    prod(dim) x f64 }
inline constexpr std::uint32_t kCheckpointVersion = 1;

void WriteCheckpoint(const ModelParams& params, std::ostream& out);
ModelParams ReadCheckpoint(std::istream& in);
void SaveCheckpoint(const ModelParams& params, const std::string& path);
ModelParams LoadCheckpoint(const std::string& path);

template <typename Fn>
void ModelParams::ForEachTensor(Fn&& fn) {
  for (std::size_t l = 0; l < encoder.size(); ++l) {
    const std::string prefix = "encoder." + std::to_string(l);
    fn(prefix + ".weight", encoder[l].weight.values(), true);
    fn(prefix + ".bias", encoder[l].bias, false);
  }
  fn(std::string("projector.weight"), projector.weight.values(), true);
  fn(std::string("projector.bias"), projector.bias, false);
  fn(std::string("classifier.weight"), classifier.weight.values(), true);
  fn(std::string("classifier.bias"), classifier.bias, false);
}

template <typename Fn>
void ModelParams::ForEachTensor(Fn&& fn) const {
  const_cast<ModelParams*>(this)->ForEachTensor(
      [&](const std::string& name, std::vector<double>& t, bool is_weight) {
        fn(name, static_cast<const std::vector<double>&>(t), is_weight);
      });
}

}  // namespace moit

#endif  // MOIT_MODEL_H_
