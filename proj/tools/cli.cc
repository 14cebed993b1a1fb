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

#include "cli.h"

#include <algorithm>
#include <charconv>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <optional>
#include <sstream>
#include <string_view>
#include <utility>

#include "CLI11.hpp"
#include "moit/train.h"

namespace moit::cli {
namespace {

namespace fs = std::filesystem;

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using KeyValues = std::vector<std::pair<std::string, std::string>>;

std::string Trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<int> ParseIntList(const std::string& text, const char* what) {
  std::vector<int> out;
  if (Trim(text).empty()) return out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = Trim(item);
    int v = 0;
    const auto res =
        std::from_chars(item.data(), item.data() + item.size(), v);
    if (item.empty() || res.ec != std::errc() ||
        res.ptr != item.data() + item.size()) {
      throw UsageError(std::string("bad integer list for ") + what + ": " +
                       text);
    }
    out.push_back(v);
  }
  return out;
}

std::string JoinInts(const std::vector<int>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i > 0) s += ",";
    s += std::to_string(v[i]);
  }
  return s;
}

std::string Bool(bool b) { return b ? "true" : "false"; }

// Key=value lines become --key=value arguments placed ahead of the command
// line, so explicit flags win under the take-last policy.
std::vector<std::string> ExpandConfig(const std::vector<std::string>& args) {
  std::string path;
  for (std::size_t i = 1; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) {
      path = args[i + 1];
    } else if (args[i].rfind("--config=", 0) == 0) {
      path = args[i].substr(9);
    }
  }
  if (path.empty()) return args;
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open config " + path);
  std::vector<std::string> expanded = {args[0]};
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    line = Trim(line);
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos || eq == 0) {
      throw UsageError(path + ":" + std::to_string(line_no) +
                       ": expected key=value");
    }
    const std::string key = Trim(line.substr(0, eq));
    if (key == "config") continue;
    expanded.push_back("--" + key + "=" + Trim(line.substr(eq + 1)));
  }
  expanded.insert(expanded.end(), args.begin() + 1, args.end());
  return expanded;
}

void WriteKeyValues(const std::string& path, const KeyValues& kv,
                    const std::vector<std::string>& comments) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path);
  for (const auto& c : comments) out << "# " << c << "\n";
  for (const auto& [k, v] : kv) out << k << "=" << v << "\n";
  if (!out) throw Error(ErrorCode::kIo, "write failed: " + path);
}

void EnsureDir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) {
    throw Error(ErrorCode::kIo, "cannot create directory " + dir);
  }
}

std::string Join(const std::string& dir, const char* name) {
  return (fs::path(dir) / name).string();
}

const char* SoftLabelName(SoftLabelSource s) {
  return s == SoftLabelSource::kRaw ? "raw" : "corrected";
}

const char* CombineName(CombineMode m) {
  return m == CombineMode::kMean ? "mean" : "sum";
}

// ---------------------------------------------------------------------------
// Metrics and detection files.

constexpr char kMetricsHeader[] =
    "epoch,lr,icl_loss,ssl_loss,test_acc,knn_acc,det_precision,det_recall,"
    "clean_size";

class MetricsWriter {
 public:
  explicit MetricsWriter(const std::string& path) : path_(path), out_(path) {
    if (!out_) throw Error(ErrorCode::kIo, "cannot write " + path);
    out_ << kMetricsHeader << "\n";
    out_.flush();
  }

  void Append(const EpochMetrics& m) {
    out_ << m.epoch << "," << FormatDouble(m.lr) << ","
         << FormatDouble(m.icl_loss) << "," << FormatDouble(m.ssl_loss) << ","
         << FormatDouble(m.test_acc) << "," << FormatDouble(m.knn_acc) << ","
         << FormatDouble(m.det_precision) << "," << FormatDouble(m.det_recall)
         << "," << m.clean_set_size << "\n";
    out_.flush();
    if (!out_) throw Error(ErrorCode::kIo, "write failed: " + path_);
  }

 private:
  std::string path_;
  std::ofstream out_;
};

void WriteDetectionCsv(const std::string& path, const Dataset& data,
                       const DetectionResult& det) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path);
  const auto selected = det.selection.Mask(data.size());
  out << "index,y,y_hat,d,selected,is_noisy_truth\n";
  for (std::size_t i = 0; i < data.size(); ++i) {
    out << i << "," << data.y[i] << "," << det.y_hat[i] << ","
        << FormatDouble(det.d[i]) << "," << static_cast<int>(selected[i])
        << "," << static_cast<int>(data.noise_mask[i]) << "\n";
  }
  if (!out) throw Error(ErrorCode::kIo, "write failed: " + path);
}

std::vector<std::size_t> ReadSelectedIndices(const std::string& path,
                                             std::size_t n) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path);
  std::string line;
  if (!std::getline(in, line) ||
      Trim(line) != "index,y,y_hat,d,selected,is_noisy_truth") {
    throw Error(ErrorCode::kParse, path + ": bad detection header");
  }
  std::vector<std::size_t> clean;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (Trim(line).empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string f;
    while (std::getline(ss, f, ',')) fields.push_back(Trim(f));
    if (fields.size() != 6 || fields[0] != std::to_string(row) ||
        (fields[4] != "0" && fields[4] != "1")) {
      throw Error(ErrorCode::kParse,
                  path + ": malformed row " + std::to_string(row));
    }
    if (fields[4] == "1") clean.push_back(row);
    ++row;
  }
  if (row != n) {
    throw Error(ErrorCode::kParse, path + ": " + std::to_string(row) +
                                       " rows for a dataset of " +
                                       std::to_string(n));
  }
  return clean;
}

ModelParams LoadCheckpointFor(const std::string& path, const Dataset& data) {
  ModelParams params = LoadCheckpoint(path);
  if (params.input_dim() != data.dim() ||
      params.num_classes() != static_cast<std::size_t>(data.num_classes)) {
    throw Error(ErrorCode::kCheckpoint,
                path + ": checkpoint shape does not match the dataset");
  }
  return params;
}

// Test split: explicit path, else the companion file when it exists.
std::optional<Dataset> LoadTestSplit(const std::string& explicit_path,
                                     const std::string& train_path) {
  std::string path = explicit_path;
  if (path.empty()) {
    const std::string companion = CompanionTestPath(train_path);
    if (!fs::exists(companion)) return std::nullopt;
    path = companion;
  }
  Dataset test = LoadDataset(path);
  test.split = Split::kTest;
  return test;
}

void CheckSameSpace(const Dataset& train, const Dataset& test) {
  if (test.dim() != train.dim() || test.num_classes != train.num_classes) {
    throw Error(ErrorCode::kParse,
                "test split does not match the training data");
  }
}

std::size_t KnnK(int requested, bool explicit_k, std::size_t n_train) {
  if (requested < 1) throw UsageError("--knn-k must be >= 1");
  const auto k = static_cast<std::size_t>(requested);
  if (k > n_train) {
    if (explicit_k) {
      throw UsageError("--knn-k " + std::to_string(k) +
                       " exceeds the training set size " +
                       std::to_string(n_train));
    }
    return n_train;
  }
  return k;
}

void PrintWarnings(const std::vector<std::string>& warnings,
                   std::ostream& err) {
  for (const auto& w : warnings) err << "warning: " << w << "\n";
}

// ---------------------------------------------------------------------------
// Option groups shared by several subcommands.

struct Common {
  std::string config;
  int threads = 1;
};

void AddCommon(CLI::App* app, Common& c) {
  app->add_option("--config", c.config,
                  "key=value file; keys are long flag names");
  app->add_option("--threads", c.threads, "worker threads")
      ->envname("MOIT_THREADS")
      ->check(CLI::PositiveNumber);
}

void AddAugment(CLI::App* app, AugmentConfig& a) {
  app->add_option("--jitter", a.jitter_sigma, "Gaussian jitter sigma")
      ->capture_default_str();
  app->add_option("--drop-prob", a.drop_prob, "feature dropout probability")
      ->capture_default_str();
  app->add_option("--scale-lo", a.scale_lo, "random scale lower bound")
      ->capture_default_str();
  app->add_option("--scale-hi", a.scale_hi, "random scale upper bound")
      ->capture_default_str();
}

void AppendAugment(KeyValues& kv, const AugmentConfig& a) {
  kv.emplace_back("jitter", FormatDouble(a.jitter_sigma));
  kv.emplace_back("drop-prob", FormatDouble(a.drop_prob));
  kv.emplace_back("scale-lo", FormatDouble(a.scale_lo));
  kv.emplace_back("scale-hi", FormatDouble(a.scale_hi));
}

// ---------------------------------------------------------------------------
// generate

struct GenerateArgs {
  Common common;
  int classes = 5;
  int per_class = 200;
  int test_per_class = 100;
  int dim = 16;
  double spread = 5.0;
  double sigma = 0.5;
  std::string noise = "sym";
  double rate = 0.0;
  int group_size = 0;
  std::uint64_t seed = 1;
  std::string out;
};

void SetupGenerate(CLI::App* app, GenerateArgs& a) {
  AddCommon(app, a.common);
  app->add_option("--classes", a.classes, "number of classes")
      ->capture_default_str();
  app->add_option("--per-class", a.per_class, "training samples per class")
      ->capture_default_str();
  app->add_option("--test-per-class", a.test_per_class,
                  "test samples per class (0 skips the test file)")
      ->capture_default_str();
  app->add_option("--dim", a.dim, "input dimension")->capture_default_str();
  app->add_option("--spread", a.spread, "center coordinate range")
      ->capture_default_str();
  app->add_option("--sigma", a.sigma, "cluster standard deviation")
      ->capture_default_str();
  app->add_option("--noise", a.noise, "label noise type")
      ->check(CLI::IsMember({"sym", "asym", "none"}))
      ->capture_default_str();
  app->add_option("--rate", a.rate, "noise rate")->capture_default_str();
  app->add_option("--group-size", a.group_size,
                  "asym: circular shift group size (0 = all classes)")
      ->capture_default_str();
  app->add_option("--seed", a.seed, "random seed")->capture_default_str();
  app->add_option("--out", a.out, "output dataset path")->required();
}

int RunGenerate(const GenerateArgs& a, std::ostream& out) {
  if (a.classes < 2) throw UsageError("--classes must be >= 2");
  if (a.per_class < 1) throw UsageError("--per-class must be >= 1");
  if (a.test_per_class < 0) throw UsageError("--test-per-class must be >= 0");
  if (a.dim < 1) throw UsageError("--dim must be >= 1");
  if (!(a.spread > 0.0) || !(a.sigma > 0.0)) {
    throw UsageError("--spread and --sigma must be positive");
  }
  if (!(a.rate >= 0.0 && a.rate <= 1.0)) {
    throw UsageError("--rate must lie in [0, 1]");
  }
  if (a.group_size < 0) throw UsageError("--group-size must be >= 0");

  BlobSplits splits =
      MakeBlobSplits(a.classes, a.per_class, std::max(a.test_per_class, 1),
                     a.dim, a.spread, a.sigma, a.seed);
  Rng noise_rng = Rng(a.seed).Fork(3);
  Dataset train = std::move(splits.train);
  if (a.noise == "sym") {
    train = InjectSymmetric(std::move(train), a.rate, noise_rng);
  } else if (a.noise == "asym") {
    const int g = a.group_size == 0 ? a.classes : a.group_size;
    const auto mapping = CircularGroupMapping(a.classes, g);
    train = InjectAsymmetric(std::move(train), a.rate, mapping, noise_rng);
  }
  SaveDataset(train, a.out);
  KeyValues kv = {
      {"classes", std::to_string(a.classes)},
      {"per-class", std::to_string(a.per_class)},
      {"test-per-class", std::to_string(a.test_per_class)},
      {"dim", std::to_string(a.dim)},
      {"spread", FormatDouble(a.spread)},
      {"sigma", FormatDouble(a.sigma)},
      {"noise", a.noise},
      {"rate", FormatDouble(a.rate)},
      {"group-size", std::to_string(a.group_size)},
      {"seed", std::to_string(a.seed)},
      {"out", a.out},
  };
  std::vector<std::string> comments = {
      "moit generate", "noisy labels: " + std::to_string(train.NoisyCount())};
  if (a.test_per_class > 0) {
    const std::string test_path = CompanionTestPath(a.out);
    SaveDataset(splits.test, test_path);
    comments.push_back("test split: " + test_path);
  }
  WriteKeyValues(a.out + ".config.txt", kv, comments);
  out << "wrote " << a.out << " (" << train.size() << " rows, "
      << train.NoisyCount() << " noisy)\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// train

struct TrainArgs {
  Common common;
  std::string data;
  std::string test;
  std::string out;
  TrainConfig cfg;
  std::string hidden = "64";
  std::string milestones = "30,50";
  std::string balance = "median";
  std::string soft_label = "corrected";
  std::string combine = "sum";
};

void SetupTrain(CLI::App* app, TrainArgs& a) {
  TrainConfig& c = a.cfg;
  AddCommon(app, a.common);
  app->add_option("--data", a.data, "training dataset file")->required();
  app->add_option("--test", a.test,
                  "test dataset file (default: companion .test file)");
  app->add_option("--out", a.out, "output directory")->required();
  app->add_option("--seed", c.seed, "random seed")->capture_default_str();
  app->add_option("--epochs", c.epochs, "training epochs")
      ->capture_default_str();
  app->add_option("--batch-size", c.batch_size, "minibatch size")
      ->capture_default_str();
  app->add_option("--tau", c.tau, "contrastive temperature")
      ->capture_default_str();
  app->add_option("--alpha", c.alpha, "mixup Beta(alpha, alpha)")
      ->capture_default_str();
  app->add_option("--k", c.k, "detection neighbors (capped at N/4)")
      ->capture_default_str();
  app->add_option("--memory-size", c.memory_size, "memory bank capacity")
      ->capture_default_str();
  app->add_option("--ssl-start", c.ssl_start_epoch,
                  "first epoch with noise detection and pseudo-labels")
      ->capture_default_str();
  app->add_option("--lr", c.lr.initial, "initial learning rate")
      ->capture_default_str();
  app->add_option("--milestones", a.milestones,
                  "comma-separated decay epochs")
      ->capture_default_str();
  app->add_option("--lr-factor", c.lr.factor, "decay factor")
      ->capture_default_str();
  app->add_flag("--extra-decay-at-ssl", c.extra_decay_at_ssl,
                "additional decay at the SSL start epoch");
  app->add_option("--momentum", c.momentum, "SGD momentum")
      ->capture_default_str();
  app->add_option("--weight-decay", c.weight_decay, "weight decay")
      ->capture_default_str();
  app->add_option("--balance", a.balance, "clean-set balancing")
      ->check(CLI::IsMember({"median", "min", "max", "none"}))
      ->capture_default_str();
  app->add_option("--soft-label", a.soft_label,
                  "disagreement source: corrected or raw")
      ->check(CLI::IsMember({"corrected", "raw"}))
      ->capture_default_str();
  app->add_option("--combine", a.combine, "in-batch + memory combination")
      ->check(CLI::IsMember({"sum", "mean"}))
      ->capture_default_str();
  AddAugment(app, c.augment);
  app->add_option("--hidden", a.hidden, "comma-separated hidden widths")
      ->capture_default_str();
  app->add_option("--embed-dim", c.model.embed_dim, "encoder output width")
      ->capture_default_str();
  app->add_option("--proj-dim", c.model.proj_dim, "projection width")
      ->capture_default_str();
  app->add_flag("--no-ssl", c.no_ssl, "given labels as targets throughout");
  app->add_flag("--no-memory", c.no_memory, "disable the memory bank term");
  app->add_flag("--no-icl", c.no_icl, "disable the contrastive term");
  app->add_flag("--no-mixup", c.no_mixup, "disable input interpolation");
  app->add_option("--knn-k", c.knn_eval_k, "weighted k-NN eval neighbors")
      ->capture_default_str();
  app->add_option("--knn-tau", c.knn_eval_tau, "weighted k-NN eval tau")
      ->capture_default_str();
}

KeyValues ResolvedTrain(const TrainArgs& a, const std::string& test_path) {
  const TrainConfig& c = a.cfg;
  KeyValues kv = {
      {"data", a.data},
      {"test", test_path},
      {"out", a.out},
      {"seed", std::to_string(c.seed)},
      {"epochs", std::to_string(c.epochs)},
      {"batch-size", std::to_string(c.batch_size)},
      {"tau", FormatDouble(c.tau)},
      {"alpha", FormatDouble(c.alpha)},
      {"k", std::to_string(c.k)},
      {"memory-size", std::to_string(c.memory_size)},
      {"ssl-start", std::to_string(c.ssl_start_epoch)},
      {"lr", FormatDouble(c.lr.initial)},
      {"milestones", JoinInts(c.lr.milestones)},
      {"lr-factor", FormatDouble(c.lr.factor)},
      {"extra-decay-at-ssl", Bool(c.extra_decay_at_ssl)},
      {"momentum", FormatDouble(c.momentum)},
      {"weight-decay", FormatDouble(c.weight_decay)},
      {"balance", a.balance},
      {"soft-label", SoftLabelName(c.soft_label)},
      {"combine", CombineName(c.combine)},
  };
  AppendAugment(kv, c.augment);
  kv.emplace_back("hidden", JoinInts(c.model.hidden));
  kv.emplace_back("embed-dim", std::to_string(c.model.embed_dim));
  kv.emplace_back("proj-dim", std::to_string(c.model.proj_dim));
  kv.emplace_back("no-ssl", Bool(c.no_ssl));
  kv.emplace_back("no-memory", Bool(c.no_memory));
  kv.emplace_back("no-icl", Bool(c.no_icl));
  kv.emplace_back("no-mixup", Bool(c.no_mixup));
  kv.emplace_back("knn-k", std::to_string(c.knn_eval_k));
  kv.emplace_back("knn-tau", FormatDouble(c.knn_eval_tau));
  return kv;
}

int RunTrain(TrainArgs& a, std::ostream& out, std::ostream& err) {
  TrainConfig& c = a.cfg;
  c.model.hidden = ParseIntList(a.hidden, "--hidden");
  c.lr.milestones = ParseIntList(a.milestones, "--milestones");
  c.balance = ParseBalanceStrategy(a.balance);
  c.soft_label =
      a.soft_label == "raw" ? SoftLabelSource::kRaw : SoftLabelSource::kCorrected;
  c.combine = a.combine == "mean" ? CombineMode::kMean : CombineMode::kSum;
  try {
    c.Validate();
  } catch (const Error& e) {
    throw UsageError(e.what());
  }

  const Dataset train = LoadDataset(a.data);
  const std::optional<Dataset> test = LoadTestSplit(a.test, a.data);
  if (test) CheckSameSpace(train, *test);
  std::string test_path = a.test;
  if (test && test_path.empty()) test_path = CompanionTestPath(a.data);

  EnsureDir(a.out);
  WriteKeyValues(
      Join(a.out, "config.txt"), ResolvedTrain(a, test_path),
      {"moit train",
       "n-train=" + std::to_string(train.size()) +
           " classes=" + std::to_string(train.num_classes) +
           " effective-k=" + std::to_string(c.EffectiveK(train.size()))});

  MetricsWriter metrics(Join(a.out, "metrics.csv"));
  TrainHooks hooks;
  hooks.on_epoch = [&metrics](const EpochMetrics& m) { metrics.Append(m); };
  TrainResult result = TrainMoit(c, train, test ? &*test : nullptr, hooks);
  PrintWarnings(result.warnings, err);

  SaveCheckpoint(result.params, Join(a.out, "model.ckpt"));
  DetectionResult det =
      result.detection
          ? std::move(*result.detection)
          : DetectNoise(Embed(result.params, train.x), train.y,
                        static_cast<std::size_t>(train.num_classes),
                        c.EffectiveK(train.size()), c.balance, c.soft_label);
  WriteDetectionCsv(Join(a.out, "detection.csv"), train, det);

  out << "wrote " << a.out << " (" << result.metrics.size() << " epochs";
  if (!result.metrics.empty()) {
    const EpochMetrics& last = result.metrics.back();
    out << ", test_acc=" << FormatDouble(last.test_acc)
        << ", knn_acc=" << FormatDouble(last.knn_acc);
  }
  out << ")\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// finetune

struct FinetuneArgs {
  Common common;
  std::string data;
  std::string test;
  std::string checkpoint;
  std::string detection;
  std::string out;
  TrainConfig cfg;
};

void SetupFinetune(CLI::App* app, FinetuneArgs& a) {
  TrainConfig& c = a.cfg;
  AddCommon(app, a.common);
  app->add_option("--data", a.data, "training dataset file")->required();
  app->add_option("--test", a.test,
                  "test dataset file (default: companion .test file)");
  app->add_option("--checkpoint", a.checkpoint, "checkpoint from train")
      ->required();
  app->add_option("--detection", a.detection, "detection.csv from train")
      ->required();
  app->add_option("--out", a.out, "output directory")->required();
  app->add_option("--seed", c.seed, "random seed")->capture_default_str();
  app->add_option("--epochs", c.finetune_epochs, "fine-tuning epochs")
      ->capture_default_str();
  app->add_option("--bootstrap-start", c.bootstrap_start_epoch,
                  "first epoch with bootstrapped targets")
      ->capture_default_str();
  app->add_option("--lr", c.finetune_lr, "constant learning rate")
      ->capture_default_str();
  app->add_option("--delta", c.delta, "weight of the given label")
      ->capture_default_str();
  app->add_option("--batch-size", c.batch_size, "minibatch size")
      ->capture_default_str();
  app->add_option("--alpha", c.alpha, "mixup Beta(alpha, alpha)")
      ->capture_default_str();
  app->add_option("--momentum", c.momentum, "SGD momentum")
      ->capture_default_str();
  app->add_option("--weight-decay", c.weight_decay, "weight decay")
      ->capture_default_str();
  AddAugment(app, c.finetune_augment);
  app->add_flag("--no-mixup", c.no_mixup, "disable input interpolation");
  app->add_option("--knn-k", c.knn_eval_k, "weighted k-NN eval neighbors")
      ->capture_default_str();
  app->add_option("--knn-tau", c.knn_eval_tau, "weighted k-NN eval tau")
      ->capture_default_str();
}

int RunFinetune(FinetuneArgs& a, std::ostream& out, std::ostream& err) {
  TrainConfig& c = a.cfg;
  if (c.finetune_epochs < 0) throw UsageError("--epochs must be >= 0");
  if (c.bootstrap_start_epoch < 0) {
    throw UsageError("--bootstrap-start must be >= 0");
  }
  if (!(c.finetune_lr > 0.0)) throw UsageError("--lr must be positive");
  if (!(c.delta >= 0.0 && c.delta <= 1.0)) {
    throw UsageError("--delta must lie in [0, 1]");
  }
  try {
    c.Validate();
    c.finetune_augment.Validate();
  } catch (const Error& e) {
    throw UsageError(e.what());
  }

  const Dataset train = LoadDataset(a.data);
  const std::optional<Dataset> test = LoadTestSplit(a.test, a.data);
  if (test) CheckSameSpace(train, *test);
  std::string test_path = a.test;
  if (test && test_path.empty()) test_path = CompanionTestPath(a.data);
  const ModelParams params = LoadCheckpointFor(a.checkpoint, train);
  const std::vector<std::size_t> clean =
      ReadSelectedIndices(a.detection, train.size());
  const std::size_t knn_k = KnnK(c.knn_eval_k, false, train.size());

  EnsureDir(a.out);
  KeyValues kv = {
      {"data", a.data},
      {"test", test_path},
      {"checkpoint", a.checkpoint},
      {"detection", a.detection},
      {"out", a.out},
      {"seed", std::to_string(c.seed)},
      {"epochs", std::to_string(c.finetune_epochs)},
      {"bootstrap-start", std::to_string(c.bootstrap_start_epoch)},
      {"lr", FormatDouble(c.finetune_lr)},
      {"delta", FormatDouble(c.delta)},
      {"batch-size", std::to_string(c.batch_size)},
      {"alpha", FormatDouble(c.alpha)},
      {"momentum", FormatDouble(c.momentum)},
      {"weight-decay", FormatDouble(c.weight_decay)},
  };
  AppendAugment(kv, c.finetune_augment);
  kv.emplace_back("no-mixup", Bool(c.no_mixup));
  kv.emplace_back("knn-k", std::to_string(c.knn_eval_k));
  kv.emplace_back("knn-tau", FormatDouble(c.knn_eval_tau));
  WriteKeyValues(Join(a.out, "config.txt"), kv,
                 {"moit finetune",
                  "clean-set-size=" + std::to_string(clean.size())});

  MetricsWriter metrics(Join(a.out, "metrics.csv"));
  TrainHooks hooks;
  hooks.on_epoch = [&metrics](const EpochMetrics& m) { metrics.Append(m); };
  const FinetuneResult result = FinetuneMoitPlus(
      params, clean, c, train, test ? &*test : nullptr, hooks);
  PrintWarnings(result.warnings, err);
  SaveCheckpoint(result.params, Join(a.out, "model.ckpt"));

  EvalReport report{std::numeric_limits<double>::quiet_NaN(),
                    std::numeric_limits<double>::quiet_NaN()};
  if (test) {
    report = Evaluate(result.params, train, *test, knn_k, c.knn_eval_tau);
  }
  out << FormatDouble(report.test_acc) << "," << FormatDouble(report.knn_acc)
      << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// eval

struct EvalArgs {
  Common common;
  std::string data;
  std::string test;
  std::string checkpoint;
  int knn_k = 200;
  double knn_tau = 0.1;
  CLI::Option* knn_k_opt = nullptr;
};

void SetupEval(CLI::App* app, EvalArgs& a) {
  AddCommon(app, a.common);
  app->add_option("--data", a.data,
                  "training dataset file (k-NN reference set)")
      ->required();
  app->add_option("--test", a.test,
                  "test dataset file (default: companion .test file)");
  app->add_option("--checkpoint", a.checkpoint, "model checkpoint")
      ->required();
  a.knn_k_opt =
      app->add_option("--knn-k", a.knn_k, "weighted k-NN neighbors")
          ->capture_default_str();
  app->add_option("--knn-tau", a.knn_tau, "weighted k-NN temperature")
      ->capture_default_str();
}

int RunEval(const EvalArgs& a, std::ostream& out) {
  if (!(a.knn_tau > 0.0)) throw UsageError("--knn-tau must be positive");
  const Dataset train = LoadDataset(a.data);
  const std::optional<Dataset> test = LoadTestSplit(a.test, a.data);
  if (!test) {
    throw UsageError("no test split: pass --test or generate a companion "
                     "file next to " + a.data);
  }
  CheckSameSpace(train, *test);
  const std::size_t k = KnnK(a.knn_k, a.knn_k_opt->count() > 0, train.size());
  const ModelParams params = LoadCheckpointFor(a.checkpoint, train);
  const EvalReport r = Evaluate(params, train, *test, k, a.knn_tau);
  out << FormatDouble(r.test_acc) << "," << FormatDouble(r.knn_acc) << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// detect

struct DetectArgs {
  Common common;
  std::string data;
  std::string checkpoint;
  std::string out;
  int k = 250;
  std::string balance = "median";
  std::string soft_label = "corrected";
};

void SetupDetect(CLI::App* app, DetectArgs& a) {
  AddCommon(app, a.common);
  app->add_option("--data", a.data, "dataset file")->required();
  app->add_option("--checkpoint", a.checkpoint, "model checkpoint")
      ->required();
  app->add_option("--out", a.out, "output CSV path")->required();
  app->add_option("--k", a.k, "neighbors (capped at N/4)")
      ->capture_default_str();
  app->add_option("--balance", a.balance, "clean-set balancing")
      ->check(CLI::IsMember({"median", "min", "max", "none"}))
      ->capture_default_str();
  app->add_option("--soft-label", a.soft_label,
                  "disagreement source: corrected or raw")
      ->check(CLI::IsMember({"corrected", "raw"}))
      ->capture_default_str();
}

int RunDetect(const DetectArgs& a, std::ostream& out) {
  if (a.k < 2) throw UsageError("--k must be >= 2");
  const Dataset data = LoadDataset(a.data);
  const ModelParams params = LoadCheckpointFor(a.checkpoint, data);
  TrainConfig c;
  c.k = a.k;
  const std::size_t k = c.EffectiveK(data.size());
  const BalanceStrategy strategy = ParseBalanceStrategy(a.balance);
  const SoftLabelSource source =
      a.soft_label == "raw" ? SoftLabelSource::kRaw : SoftLabelSource::kCorrected;
  const DetectionResult det =
      DetectNoise(Embed(params, data.x), data.y,
                  static_cast<std::size_t>(data.num_classes), k, strategy,
                  source);
  WriteDetectionCsv(a.out, data, det);
  WriteKeyValues(a.out + ".config.txt",
                 {{"data", a.data},
                  {"checkpoint", a.checkpoint},
                  {"out", a.out},
                  {"k", std::to_string(a.k)},
                  {"balance", a.balance},
                  {"soft-label", a.soft_label}},
                 {"moit detect", "effective-k=" + std::to_string(k)});
  const DetectionMetrics dm =
      ComputeDetectionMetrics(det.selection.Mask(data.size()), data.noise_mask);
  out << "clean_size=" << det.selection.size()
      << " precision=" << FormatDouble(dm.precision)
      << " recall=" << FormatDouble(dm.recall) << "\n";
  return kExitOk;
}

int ExitCodeFor(ErrorCode code) {
  switch (code) {
    case ErrorCode::kIo: return kExitIo;
    case ErrorCode::kParse: return kExitParse;
    case ErrorCode::kCheckpoint: return kExitCheckpoint;
    default: return kExitUsage;
  }
}

}  // namespace

std::string CompanionTestPath(const std::string& path) {
  fs::path p(path);
  if (!p.has_extension()) return path + ".test";
  const std::string ext = p.extension().string();
  p.replace_extension(".test" + ext);
  return p.string();
}

int RunCli(const std::vector<std::string>& args, std::ostream& out,
           std::ostream& err) {
  CLI::App app{"Label-noise robust training on synthetic blobs", "moit"};
  app.require_subcommand(1);
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);

  GenerateArgs gen;
  TrainArgs train;
  FinetuneArgs finetune;
  EvalArgs eval;
  DetectArgs detect;
  auto* gen_cmd = app.add_subcommand("generate", "write a blobs dataset");
  auto* train_cmd = app.add_subcommand("train", "train with noise detection");
  auto* finetune_cmd =
      app.add_subcommand("finetune", "fine-tune on the detected clean set");
  auto* eval_cmd = app.add_subcommand("eval", "print test_acc,knn_acc");
  auto* detect_cmd = app.add_subcommand("detect", "score label noise");
  SetupGenerate(gen_cmd, gen);
  SetupTrain(train_cmd, train);
  SetupFinetune(finetune_cmd, finetune);
  SetupEval(eval_cmd, eval);
  SetupDetect(detect_cmd, detect);

  try {
    std::vector<std::string> expanded = ExpandConfig(args);
    std::reverse(expanded.begin(), expanded.end());
    // CLI11 silently drops invalid environment values; reject them instead.
    if (const char* env = std::getenv("MOIT_THREADS");
        env != nullptr && *env != '\0' &&
        std::find(expanded.begin(), expanded.end(), "--threads") ==
            expanded.end()) {
      int n = 0;
      const std::string_view v(env);
      const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), n);
      if (ec != std::errc() || ptr != v.data() + v.size() || n <= 0) {
        err << "error: MOIT_THREADS must be a positive integer\n";
        return kExitUsage;
      }
    }
    try {
      app.parse(expanded);
    } catch (const CLI::ParseError& e) {
      const int rc = app.exit(e, out, err);
      return rc == 0 ? kExitOk : kExitUsage;
    }
    if (*gen_cmd) {
      SetNumThreads(gen.common.threads);
      return RunGenerate(gen, out);
    }
    if (*train_cmd) {
      SetNumThreads(train.common.threads);
      return RunTrain(train, out, err);
    }
    if (*finetune_cmd) {
      SetNumThreads(finetune.common.threads);
      return RunFinetune(finetune, out, err);
    }
    if (*eval_cmd) {
      SetNumThreads(eval.common.threads);
      return RunEval(eval, out);
    }
    SetNumThreads(detect.common.threads);
    return RunDetect(detect, out);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return ExitCodeFor(e.code());
  }
}

}  // namespace moit::cli
