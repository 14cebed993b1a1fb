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

#ifndef MOIT_TRAIN_H_
#define MOIT_TRAIN_H_

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "moit/coremath.h"
#include "moit/data.h"
#include "moit/detect.h"
#include "moit/losses.h"
#include "moit/membank.h"
#include "moit/model.h"

namespace moit {

struct TrainConfig {
  // input_dim and num_classes are taken from the dataset.
  ModelShape model;

  int epochs = 60;
  int batch_size = 64;
  double tau = 0.1;
  double alpha = 1.0;
  int k = 250;  // clamped to N_train / 4
  int memory_size = 2048;
  int ssl_start_epoch = 32;
  LrSchedule lr = {0.1, {30, 50}, 0.1, -1};
  bool extra_decay_at_ssl = false;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  BalanceStrategy balance = BalanceStrategy::kMedian;
  SoftLabelSource soft_label = SoftLabelSource::kCorrected;
  CombineMode combine = CombineMode::kSum;
  AugmentConfig augment = {0.15, 0.1, 0.8, 1.2};

  // Ablations. no_icl + no_mixup + no_ssl is plain cross-entropy training.
  bool no_ssl = false;
  bool no_memory = false;
  bool no_icl = false;
  bool no_mixup = false;

  int knn_eval_k = 200;
  double knn_eval_tau = 0.1;

  // Clean-set fine-tuning.
  int finetune_epochs = 16;
  int bootstrap_start_epoch = 7;
  double finetune_lr = 0.001;
  double delta = 0.8;
  AugmentConfig finetune_augment = {0.05, 0.0, 1.0, 1.0};

  std::uint64_t seed = 1;

  std::size_t EffectiveK(std::size_t n_train) const;
  LrSchedule EffectiveSchedule() const;
  void Validate() const;
};

struct EpochMetrics {
  int epoch = 0;
  double lr = 0.0;
  double icl_loss = 0.0;
  double ssl_loss = 0.0;
  double train_acc_on_clean_labels = 0.0;
  double test_acc = 0.0;
  double knn_acc = 0.0;
  // NaN in epochs where detection did not run.
  double det_precision = 0.0;
  double det_recall = 0.0;
  std::size_t clean_set_size = 0;
  bool detection_ran = false;
};

// Snapshot handed to TrainHooks::on_batch before the parameter update.
struct BatchRecord {
  int epoch = 0;
  std::size_t step = 0;
  const MixedBatch* batch = nullptr;
  const ModelParams* params = nullptr;
  const MemorySnapshot* memory = nullptr;
  const Mat64* targets_a = nullptr;
  const Mat64* targets_b = nullptr;
  const Mat64* logits = nullptr;
  const MoitLossOut* loss = nullptr;
};

struct TrainHooks {
  std::function<void(const BatchRecord&)> on_batch;
  std::function<void(const EpochMetrics&)> on_epoch;
};

struct TrainResult {
  ModelParams params;
  std::vector<EpochMetrics> metrics;
  std::optional<DetectionResult> detection;
  std::vector<std::string> warnings;
};

// Full interpolated contrastive + semi-supervised training. Epochs before
// ssl_start_epoch use the given labels as targets; afterwards detection
// runs once at the start of every epoch and samples outside the clean set
// are supervised by the model's own softmax on the raw input. `test` may be
// null, in which case test and k-NN accuracies are NaN.
TrainResult TrainMoit(const TrainConfig& config, const Dataset& train,
                      const Dataset* test, const TrainHooks& hooks = {});

// One-hot y_i for members of the clean set, softmax(raw_logits) otherwise.
Vec64 PseudoTarget(std::size_t index, std::span<const std::uint8_t> clean_mask,
                   std::span<const int> labels,
                   std::span<const double> raw_logits);

struct FinetuneResult {
  ModelParams params;
  std::vector<EpochMetrics> metrics;
  std::vector<std::string> warnings;
};

// Re-initializes the classifier and trains encoder + classifier on the clean
// samples with mixup and hard bootstrapping (delta = 1 before
// bootstrap_start_epoch). The projection head is never updated. Throws
// kEmptyCleanSet when clean_indices is empty.
FinetuneResult FinetuneMoitPlus(const ModelParams& params,
                                std::span<const std::size_t> clean_indices,
                                const TrainConfig& config, const Dataset& train,
                                const Dataset* test,
                                const TrainHooks& hooks = {});

// Similarity-weighted vote of the k most similar training rows; each
// neighbor adds exp(sim / tau) to its class. Ties go to the lower class.
std::vector<int> WeightedKnnPredict(const Mat64& train_z,
                                    std::span<const int> train_labels,
                                    const Mat64& test_z,
                                    std::size_t num_classes, std::size_t k,
                                    double tau);

double WeightedKnnEval(const Mat64& train_z, std::span<const int> train_labels,
                       const Mat64& test_z, std::span<const int> test_labels,
                       std::size_t num_classes, std::size_t k = 200,
                       double tau = 0.1);

double Accuracy(std::span<const int> predictions, std::span<const int> labels);

std::vector<int> PredictClasses(const ModelParams& params, const Mat64& inputs);

double ClassifierEval(const ModelParams& params, const Mat64& inputs,
                      std::span<const int> labels);

// Classifier accuracy and weighted k-NN accuracy on `test`, with the clean
// training labels as the k-NN reference.
struct EvalReport {
  double test_acc = 0.0;
  double knn_acc = 0.0;
};

EvalReport Evaluate(const ModelParams& params, const Dataset& train,
                    const Dataset& test, std::size_t knn_k, double knn_tau);

}  // namespace moit

#endif  // MOIT_TRAIN_H_
