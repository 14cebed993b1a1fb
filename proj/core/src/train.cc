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

#include "moit/train.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace moit {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Stream ids for Rng::Fork.
constexpr std::uint64_t kInitStream = 1;
constexpr std::uint64_t kEpochStreamBase = 1000;
constexpr std::uint64_t kFinetuneStream = 77;

Mat64 GatherRows(const Mat64& m, std::span<const std::size_t> ids) {
  Mat64 out(ids.size(), m.cols());
  for (std::size_t r = 0; r < ids.size(); ++r) out.SetRow(r, m.row(ids[r]));
  return out;
}

std::vector<std::vector<std::size_t>> MakeBatches(std::vector<std::size_t> order,
                                                  std::size_t batch_size) {
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t s = 0; s < order.size(); s += batch_size) {
    const std::size_t e = std::min(order.size(), s + batch_size);
    // Mixing needs a partner, so singleton tails are dropped.
    if (e - s < 2) break;
    batches.emplace_back(order.begin() + static_cast<long>(s),
                         order.begin() + static_cast<long>(e));
  }
  return batches;
}

Mat64 StackZ(const std::vector<ForwardPass>& passes, std::size_t dim) {
  Mat64 z(passes.size(), dim);
  for (std::size_t i = 0; i < passes.size(); ++i) z.SetRow(i, passes[i].z);
  return z;
}

Mat64 StackLogits(const std::vector<ForwardPass>& passes, std::size_t dim) {
  Mat64 l(passes.size(), dim);
  for (std::size_t i = 0; i < passes.size(); ++i) l.SetRow(i, passes[i].logits);
  return l;
}

void FillEval(EpochMetrics& m, const ModelParams& params, const Dataset& train,
              const Dataset* test, const TrainConfig& config) {
  m.train_acc_on_clean_labels = ClassifierEval(params, train.x, train.y_clean);
  if (test != nullptr && test->size() > 0) {
    const std::size_t k = std::min<std::size_t>(
        static_cast<std::size_t>(config.knn_eval_k), train.size());
    const EvalReport r = Evaluate(params, train, *test, k, config.knn_eval_tau);
    m.test_acc = r.test_acc;
    m.knn_acc = r.knn_acc;
  } else {
    m.test_acc = kNaN;
    m.knn_acc = kNaN;
  }
}

}  // namespace

std::size_t TrainConfig::EffectiveK(std::size_t n_train) const {
  const std::size_t cap = n_train / 4;
  return std::max<std::size_t>(2, std::min(static_cast<std::size_t>(k), cap));
}

LrSchedule TrainConfig::EffectiveSchedule() const {
  LrSchedule s = lr;
  s.extra_decay_epoch = extra_decay_at_ssl ? ssl_start_epoch : -1;
  return s;
}

void TrainConfig::Validate() const {
  auto fail = [](const std::string& what) {
    throw Error(ErrorCode::kInvalidArgument, what);
  };
  if (epochs < 0) fail("epochs must be >= 0");
  if (batch_size < 2) fail("batch_size must be >= 2");
  if (!(tau > 0.0)) fail("tau must be positive");
  if (!(alpha > 0.0)) fail("alpha must be positive");
  if (k < 2) fail("k must be >= 2");
  if (memory_size < 1) fail("memory_size must be >= 1");
  if (ssl_start_epoch < 0) fail("ssl_start_epoch must be >= 0");
  if (epochs > 0 && ssl_start_epoch > epochs) {
    fail("ssl_start_epoch must not exceed epochs");
  }
  if (!(lr.initial >= 0.0) || !(lr.factor > 0.0)) fail("invalid lr schedule");
  if (!(momentum >= 0.0 && momentum < 1.0)) fail("momentum must lie in [0, 1)");
  if (!(weight_decay >= 0.0)) fail("weight_decay must be >= 0");
  if (!(delta >= 0.0 && delta <= 1.0)) fail("delta must lie in [0, 1]");
  if (finetune_epochs < 0) fail("finetune_epochs must be >= 0");
  if (bootstrap_start_epoch < 0) fail("bootstrap_start_epoch must be >= 0");
  if (!(finetune_lr >= 0.0)) fail("finetune_lr must be >= 0");
  if (knn_eval_k < 1) fail("knn_eval_k must be >= 1");
  if (!(knn_eval_tau > 0.0)) fail("knn_eval_tau must be positive");
  augment.Validate();
  finetune_augment.Validate();
}

Vec64 PseudoTarget(std::size_t index, std::span<const std::uint8_t> clean_mask,
                   std::span<const int> labels,
                   std::span<const double> raw_logits) {
  if (clean_mask[index] != 0) {
    Vec64 t(raw_logits.size(), 0.0);
    t.at(static_cast<std::size_t>(labels[index])) = 1.0;
    return t;
  }
  return ScaledSoftmax(raw_logits, 1.0);
}

TrainResult TrainMoit(const TrainConfig& config, const Dataset& train,
                      const Dataset* test, const TrainHooks& hooks) {
  config.Validate();
  train.Validate();
  const std::size_t n = train.size();
  const auto num_classes = static_cast<std::size_t>(train.num_classes);

  ModelShape shape = config.model;
  shape.input_dim = static_cast<int>(train.dim());
  shape.num_classes = train.num_classes;

  const Rng root(config.seed);
  Rng init_rng = root.Fork(kInitStream);
  TrainResult result;
  result.params = InitParams(shape, init_rng);
  ModelParams& params = result.params;
  OptState opt = InitOptState(params);
  MemoryBank bank(static_cast<std::size_t>(config.memory_size),
                  params.proj_dim());
  const MemorySnapshot no_memory;
  const std::size_t k = config.EffectiveK(n);
  const LrSchedule schedule = config.EffectiveSchedule();
  const bool use_icl = !config.no_icl;
  const bool use_memory = use_icl && !config.no_memory;

  std::size_t step = 0;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    EpochMetrics m;
    m.epoch = epoch;
    m.lr = LrAt(epoch, schedule);
    m.det_precision = kNaN;
    m.det_recall = kNaN;
    Rng rng = root.Fork(kEpochStreamBase + static_cast<std::uint64_t>(epoch));

    std::vector<std::uint8_t> clean_mask;
    if (!config.no_ssl && epoch >= config.ssl_start_epoch) {
      const Mat64 z = Embed(params, train.x);
      DetectionResult det = DetectNoise(z, train.y, num_classes, k,
                                        config.balance, config.soft_label);
      const auto selected = det.selection.Mask(n);
      const DetectionMetrics dm =
          ComputeDetectionMetrics(selected, train.noise_mask);
      m.detection_ran = true;
      m.det_precision = dm.precision;
      m.det_recall = dm.recall;
      m.clean_set_size = det.selection.size();
      for (const auto& w : det.selection.warnings) {
        result.warnings.push_back("epoch " + std::to_string(epoch) + ": " + w);
      }
      if (m.clean_set_size == 0) {
        result.warnings.push_back(
            "epoch " + std::to_string(epoch) +
            ": EmptyCleanSet, using the given labels as targets");
      } else {
        clean_mask = selected;
      }
      result.detection = std::move(det);
    }
    const bool pseudo_labels = !clean_mask.empty();

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    rng.Shuffle(order);
    double icl_sum = 0.0;
    double ssl_sum = 0.0;
    std::size_t batches_run = 0;
    for (const auto& ids : MakeBatches(std::move(order),
                                       static_cast<std::size_t>(config.batch_size))) {
      const Mat64 xb = GatherRows(train.x, ids);
      std::vector<int> yb(ids.size());
      for (std::size_t i = 0; i < ids.size(); ++i) yb[i] = train.y[ids[i]];

      const MixedBatch mb = BuildContrastBatch(
          xb, yb, ids, config.augment, config.alpha, rng,
          config.no_mixup ? std::optional<double>(1.0) : std::nullopt);

      // Targets per source sample, indexed by position inside the batch.
      Mat64 source_targets(ids.size(), num_classes);
      if (pseudo_labels) {
        const Mat64 raw = ClassLogits(params, xb);
        for (std::size_t i = 0; i < ids.size(); ++i) {
          source_targets.SetRow(
              i, PseudoTarget(ids[i], clean_mask, train.y, raw.row(i)));
        }
      } else {
        source_targets = OneHotRows(yb, num_classes);
      }
      const std::size_t rows = mb.inputs.rows();
      const std::size_t half = ids.size();
      Mat64 targets_a(rows, num_classes);
      Mat64 targets_b(rows, num_classes);
      for (std::size_t r = 0; r < rows; ++r) {
        targets_a.SetRow(r, source_targets.row(r % half));
        targets_b.SetRow(r, source_targets.row(mb.partner[r] % half));
      }

      const std::vector<ForwardPass> passes = ForwardBatch(params, mb.inputs);
      ContrastBatch cb;
      cb.z = StackZ(passes, params.proj_dim());
      cb.labels = mb.labels;
      cb.view_pairing = mb.view_pairing;
      const Mat64 logits = StackLogits(passes, num_classes);

      MemorySnapshot snapshot;
      if (use_memory) snapshot = bank.Snapshot();
      const MemorySnapshot& memory = use_memory ? snapshot : no_memory;

      MoitLossOut loss;
      if (use_icl) {
        try {
          loss = MoitLoss(cb, memory, logits, targets_a, targets_b, config.tau,
                          config.combine);
        } catch (const Error& e) {
          if (e.code() != ErrorCode::kDegenerateBatch) throw;
          // No in-batch positives: keep the memory term and the classifier.
          const LossOut mem = IclMemLoss(cb, memory, config.tau);
          std::vector<double> lambdas(rows);
          for (std::size_t r = 0; r < rows; ++r) lambdas[r] = cb.labels[r].lambda;
          LossOut ssl = SslLoss(logits, targets_a, targets_b, lambdas);
          const double w = config.combine == CombineMode::kMean ? 0.5 : 1.0;
          loss.icl = w * mem.value;
          loss.ssl = ssl.value;
          loss.value = loss.icl + loss.ssl;
          loss.grad_z = mem.grad;
          for (double& g : loss.grad_z.values()) g *= w;
          loss.grad_logits = std::move(ssl.grad);
        }
      } else {
        std::vector<double> lambdas(rows);
        for (std::size_t r = 0; r < rows; ++r) lambdas[r] = cb.labels[r].lambda;
        LossOut ssl = SslLoss(logits, targets_a, targets_b, lambdas);
        loss.ssl = ssl.value;
        loss.value = ssl.value;
        loss.grad_logits = std::move(ssl.grad);
      }

      if (hooks.on_batch) {
        BatchRecord rec;
        rec.epoch = epoch;
        rec.step = step;
        rec.batch = &mb;
        rec.params = &params;
        rec.memory = &memory;
        rec.targets_a = &targets_a;
        rec.targets_b = &targets_b;
        rec.logits = &logits;
        rec.loss = &loss;
        hooks.on_batch(rec);
      }

      const ParamGrads grads =
          Backward(params, passes, loss.grad_z, loss.grad_logits);
      TrainableMask mask;
      mask.projector = use_icl;
      SgdStep(params, opt, grads,
              {m.lr, config.momentum, config.weight_decay}, mask);
      if (use_memory) {
        std::vector<int> dominant(rows);
        for (std::size_t r = 0; r < rows; ++r) dominant[r] = cb.labels[r].dominant;
        bank.PushBatch(cb.z, dominant);
      }
      icl_sum += loss.icl;
      ssl_sum += loss.ssl;
      ++batches_run;
      ++step;
    }
    if (batches_run > 0) {
      m.icl_loss = icl_sum / static_cast<double>(batches_run);
      m.ssl_loss = ssl_sum / static_cast<double>(batches_run);
    }
    if (!AllFinite(params)) {
      throw Error(ErrorCode::kInvalidArgument,
                  "training diverged at epoch " + std::to_string(epoch));
    }
    FillEval(m, params, train, test, config);
    if (hooks.on_epoch) hooks.on_epoch(m);
    result.metrics.push_back(m);
  }
  return result;
}

FinetuneResult FinetuneMoitPlus(const ModelParams& params,
                                std::span<const std::size_t> clean_indices,
                                const TrainConfig& config, const Dataset& train,
                                const Dataset* test, const TrainHooks& hooks) {
  config.Validate();
  train.Validate();
  if (clean_indices.empty()) {
    throw Error(ErrorCode::kEmptyCleanSet, "fine-tuning needs clean samples");
  }
  if (params.input_dim() != train.dim() ||
      params.num_classes() != static_cast<std::size_t>(train.num_classes)) {
    throw Error(ErrorCode::kDimMismatch, "model does not match dataset");
  }
  for (std::size_t i : clean_indices) {
    if (i >= train.size()) {
      throw Error(ErrorCode::kInvalidArgument, "clean index out of range");
    }
  }
  const auto num_classes = static_cast<std::size_t>(train.num_classes);
  const Rng root = Rng(config.seed).Fork(kFinetuneStream);
  Rng init_rng = root.Fork(kInitStream);

  FinetuneResult result;
  result.params = params;
  ReinitClassifier(result.params, init_rng);
  ModelParams& p = result.params;
  OptState opt = InitOptState(p);
  TrainableMask mask;
  mask.projector = false;

  std::vector<std::size_t> pool(clean_indices.begin(), clean_indices.end());
  std::sort(pool.begin(), pool.end());

  for (int epoch = 0; epoch < config.finetune_epochs; ++epoch) {
    EpochMetrics m;
    m.epoch = epoch;
    m.lr = config.finetune_lr;
    m.det_precision = kNaN;
    m.det_recall = kNaN;
    const double delta =
        epoch < config.bootstrap_start_epoch ? 1.0 : config.delta;
    Rng rng = root.Fork(kEpochStreamBase + static_cast<std::uint64_t>(epoch));
    std::vector<std::size_t> order = pool;
    rng.Shuffle(order);
    double loss_sum = 0.0;
    std::size_t batches_run = 0;
    for (const auto& ids : MakeBatches(std::move(order),
                                       static_cast<std::size_t>(config.batch_size))) {
      const std::size_t b = ids.size();
      const Mat64 xb = GatherRows(train.x, ids);
      Mat64 views(b, train.dim());
      for (std::size_t i = 0; i < b; ++i) {
        views.SetRow(i, Augment(xb.row(i), config.finetune_augment, rng));
      }
      const std::vector<std::size_t> perm = RandomDerangement(b, rng);
      Mat64 mixed(b, train.dim());
      std::vector<double> lambdas(b);
      for (std::size_t i = 0; i < b; ++i) {
        lambdas[i] = config.no_mixup ? 1.0 : SampleLambda(config.alpha, rng);
        mixed.SetRow(i, MixupPair(views.row(i), views.row(perm[i]), lambdas[i]));
      }
      const std::vector<int> pred = PredictClasses(p, xb);
      std::vector<int> ya(b), yb(b), pa(b), pb(b);
      for (std::size_t i = 0; i < b; ++i) {
        ya[i] = train.y[ids[i]];
        yb[i] = train.y[ids[perm[i]]];
        pa[i] = pred[i];
        pb[i] = pred[perm[i]];
      }
      const std::vector<ForwardPass> passes = ForwardBatch(p, mixed);
      const Mat64 logits = StackLogits(passes, num_classes);
      const LossOut loss = BootstrapLoss(logits, ya, yb, pa, pb, lambdas, delta);
      const ParamGrads grads = Backward(p, passes, Mat64(), loss.grad);
      SgdStep(p, opt, grads, {config.finetune_lr, config.momentum,
                              config.weight_decay}, mask);
      loss_sum += loss.value;
      ++batches_run;
    }
    if (batches_run > 0) m.ssl_loss = loss_sum / static_cast<double>(batches_run);
    if (!AllFinite(p)) {
      throw Error(ErrorCode::kInvalidArgument,
                  "fine-tuning diverged at epoch " + std::to_string(epoch));
    }
    m.clean_set_size = pool.size();
    FillEval(m, p, train, test, config);
    if (hooks.on_epoch) hooks.on_epoch(m);
    result.metrics.push_back(m);
  }
  return result;
}

std::vector<int> WeightedKnnPredict(const Mat64& train_z,
                                    std::span<const int> train_labels,
                                    const Mat64& test_z,
                                    std::size_t num_classes, std::size_t k,
                                    double tau) {
  const std::size_t n = train_z.rows();
  if (train_labels.size() != n) {
    throw Error(ErrorCode::kDimMismatch, "train labels do not match rows");
  }
  if (k == 0 || k > n) {
    throw Error(ErrorCode::kBadK, "k=" + std::to_string(k) +
                                      " must lie in [1, N_train=" +
                                      std::to_string(n) + "]");
  }
  const Mat64 sims = PairwiseInner(test_z, train_z);
  std::vector<int> pred(test_z.rows());
  ParallelFor(test_z.rows(), [&](std::size_t t) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::partial_sort(idx.begin(), idx.begin() + static_cast<long>(k), idx.end(),
                      [&](std::size_t a, std::size_t b) {
                        return sims(t, a) > sims(t, b) ||
                               (sims(t, a) == sims(t, b) && a < b);
                      });
    Vec64 score(num_classes, 0.0);
    for (std::size_t j = 0; j < k; ++j) {
      score[static_cast<std::size_t>(train_labels[idx[j]])] +=
          std::exp(sims(t, idx[j]) / tau);
    }
    pred[t] = static_cast<int>(ArgMax(score));
  });
  return pred;
}

double Accuracy(std::span<const int> predictions, std::span<const int> labels) {
  if (predictions.size() != labels.size()) {
    throw Error(ErrorCode::kDimMismatch, "prediction count mismatch");
  }
  if (labels.empty()) return 0.0;
  std::size_t hit = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    hit += predictions[i] == labels[i];
  }
  return static_cast<double>(hit) / static_cast<double>(labels.size());
}

double WeightedKnnEval(const Mat64& train_z, std::span<const int> train_labels,
                       const Mat64& test_z, std::span<const int> test_labels,
                       std::size_t num_classes, std::size_t k, double tau) {
  return Accuracy(
      WeightedKnnPredict(train_z, train_labels, test_z, num_classes, k, tau),
      test_labels);
}

std::vector<int> PredictClasses(const ModelParams& params, const Mat64& inputs) {
  const Mat64 logits = ClassLogits(params, inputs);
  std::vector<int> pred(inputs.rows());
  for (std::size_t i = 0; i < pred.size(); ++i) {
    pred[i] = static_cast<int>(ArgMax(logits.row(i)));
  }
  return pred;
}

double ClassifierEval(const ModelParams& params, const Mat64& inputs,
                      std::span<const int> labels) {
  return Accuracy(PredictClasses(params, inputs), labels);
}

EvalReport Evaluate(const ModelParams& params, const Dataset& train,
                    const Dataset& test, std::size_t knn_k, double knn_tau) {
  EvalReport r;
  r.test_acc = ClassifierEval(params, test.x, test.y_clean);
  r.knn_acc = WeightedKnnEval(Embed(params, train.x), train.y_clean,
                              Embed(params, test.x), test.y_clean,
                              static_cast<std::size_t>(train.num_classes),
                              knn_k, knn_tau);
  return r;
}

}  // namespace moit
