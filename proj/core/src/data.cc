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

#include "moit/data.h"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>

namespace moit {

std::size_t Dataset::NoisyCount() const {
  return static_cast<std::size_t>(
      std::count(noise_mask.begin(), noise_mask.end(), 1));
}

void Dataset::RefreshNoiseMask() {
  noise_mask.resize(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) {
    noise_mask[i] = y[i] != y_clean[i] ? 1 : 0;
  }
}

void Dataset::Validate() const {
  if (num_classes <= 0) {
    throw Error(ErrorCode::kInvalidArgument, "dataset needs classes");
  }
  if (x.rows() != y.size() || y.size() != y_clean.size() ||
      noise_mask.size() != y.size()) {
    throw Error(ErrorCode::kInvalidArgument, "dataset columns differ in length");
  }
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (y[i] < 0 || y[i] >= num_classes || y_clean[i] < 0 ||
        y_clean[i] >= num_classes) {
      throw Error(ErrorCode::kInvalidArgument, "label out of range");
    }
    if ((noise_mask[i] != 0) != (y[i] != y_clean[i])) {
      throw Error(ErrorCode::kInvalidArgument, "noise mask out of sync");
    }
  }
}

Mat64 DrawCenters(int num_classes, int dim, double center_spread,
                  double cluster_sigma, Rng& rng) {
  if (num_classes <= 0 || dim <= 0 || !(center_spread > 0.0) ||
      !(cluster_sigma > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "blob parameters must be positive");
  }
  const double min_dist = 4.0 * cluster_sigma;
  const auto c = static_cast<std::size_t>(num_classes);
  const auto d = static_cast<std::size_t>(dim);
  for (int attempt = 0; attempt < 1000; ++attempt) {
    Mat64 centers(c, d);
    for (double& v : centers.values()) {
      v = rng.Uniform(-center_spread, center_spread);
    }
    bool ok = true;
    for (std::size_t a = 0; a < c && ok; ++a) {
      for (std::size_t b = a + 1; b < c && ok; ++b) {
        double s = 0.0;
        for (std::size_t k = 0; k < d; ++k) {
          const double diff = centers(a, k) - centers(b, k);
          s += diff * diff;
        }
        ok = std::sqrt(s) >= min_dist;
      }
    }
    if (ok) return centers;
  }
  throw Error(ErrorCode::kCenterPackingFailed,
              "could not place centers 4 sigma apart in 1000 attempts");
}

Dataset SampleBlobs(const Mat64& centers, int per_class, double cluster_sigma,
                    Rng& rng) {
  if (per_class <= 0) {
    throw Error(ErrorCode::kInvalidArgument, "per_class must be positive");
  }
  Dataset data;
  data.num_classes = static_cast<int>(centers.rows());
  const auto n = centers.rows() * static_cast<std::size_t>(per_class);
  data.x = Mat64(n, centers.cols());
  std::size_t i = 0;
  for (std::size_t c = 0; c < centers.rows(); ++c) {
    for (int s = 0; s < per_class; ++s, ++i) {
      auto row = data.x.row(i);
      for (std::size_t k = 0; k < row.size(); ++k) {
        row[k] = centers(c, k) + rng.Normal(0.0, cluster_sigma);
      }
      data.y_clean.push_back(static_cast<int>(c));
    }
  }
  data.y = data.y_clean;
  data.noise_mask.assign(n, 0);
  return data;
}

BlobSplits MakeBlobSplits(int num_classes, int per_class, int test_per_class,
                          int dim, double center_spread, double cluster_sigma,
                          std::uint64_t seed) {
  const Rng root(seed);
  Rng center_rng = root.Fork(0);
  Rng train_rng = root.Fork(1);
  Rng test_rng = root.Fork(2);
  BlobSplits s;
  s.centers = DrawCenters(num_classes, dim, center_spread, cluster_sigma,
                          center_rng);
  s.train = SampleBlobs(s.centers, per_class, cluster_sigma, train_rng);
  if (test_per_class > 0) {
    s.test = SampleBlobs(s.centers, test_per_class, cluster_sigma, test_rng);
    s.test.split = Split::kTest;
  }
  return s;
}

Dataset MakeBlobs(int num_classes, int per_class, int dim, double center_spread,
                  double cluster_sigma, std::uint64_t seed) {
  return MakeBlobSplits(num_classes, per_class, 0, dim, center_spread,
                        cluster_sigma, seed)
      .train;
}

Dataset InjectSymmetric(Dataset data, double rate, Rng& rng) {
  if (!(rate >= 0.0 && rate <= 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "noise rate must lie in [0, 1]");
  }
  if (data.num_classes < 2 && rate > 0.0) {
    throw Error(ErrorCode::kInvalidArgument, "symmetric noise needs 2+ classes");
  }
  const auto others = static_cast<std::uint64_t>(data.num_classes - 1);
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (!rng.Bernoulli(rate)) continue;
    int r = static_cast<int>(rng.UniformInt(others));
    if (r >= data.y_clean[i]) ++r;
    data.y[i] = r;
  }
  data.RefreshNoiseMask();
  return data;
}

Dataset InjectAsymmetric(Dataset data, double rate,
                         std::span<const int> mapping, Rng& rng) {
  if (!(rate >= 0.0 && rate <= 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "noise rate must lie in [0, 1]");
  }
  if (mapping.size() != static_cast<std::size_t>(data.num_classes)) {
    throw Error(ErrorCode::kInvalidMapping, "mapping must cover every class");
  }
  for (int m : mapping) {
    if (m < 0 || m >= data.num_classes) {
      throw Error(ErrorCode::kInvalidMapping, "mapping target out of range");
    }
  }
  for (std::size_t i = 0; i < data.size(); ++i) {
    const int target = mapping[static_cast<std::size_t>(data.y_clean[i])];
    if (target == data.y_clean[i]) continue;
    if (rng.Bernoulli(rate)) data.y[i] = target;
  }
  data.RefreshNoiseMask();
  return data;
}

std::vector<int> CircularGroupMapping(int num_classes, int group_size) {
  if (num_classes <= 0 || group_size <= 0) {
    throw Error(ErrorCode::kInvalidMapping, "group mapping needs positive sizes");
  }
  std::vector<int> mapping(static_cast<std::size_t>(num_classes));
  for (int start = 0; start < num_classes; start += group_size) {
    const int len = std::min(group_size, num_classes - start);
    for (int k = 0; k < len; ++k) {
      mapping[static_cast<std::size_t>(start + k)] = start + (k + 1) % len;
    }
  }
  return mapping;
}

void AugmentConfig::Validate() const {
  if (!(jitter_sigma >= 0.0) || !(drop_prob >= 0.0 && drop_prob < 1.0) ||
      !(scale_lo <= scale_hi)) {
    throw Error(ErrorCode::kInvalidArgument, "invalid augmentation config");
  }
}

Vec64 Augment(std::span<const double> x, const AugmentConfig& cfg, Rng& rng) {
  const double scale = cfg.scale_lo == cfg.scale_hi
                           ? cfg.scale_lo
                           : rng.Uniform(cfg.scale_lo, cfg.scale_hi);
  Vec64 out(x.size());
  for (std::size_t k = 0; k < x.size(); ++k) {
    const bool keep = cfg.drop_prob == 0.0 || !rng.Bernoulli(cfg.drop_prob);
    double v = keep ? x[k] * scale : 0.0;
    if (cfg.jitter_sigma > 0.0) v += rng.Normal(0.0, cfg.jitter_sigma);
    out[k] = v;
  }
  return out;
}

std::pair<Vec64, Vec64> TwoViews(std::span<const double> x,
                                 const AugmentConfig& cfg, Rng& rng) {
  cfg.Validate();
  Vec64 first = Augment(x, cfg, rng);
  Vec64 second = Augment(x, cfg, rng);
  return {std::move(first), std::move(second)};
}

Vec64 MixupPair(std::span<const double> xa, std::span<const double> xb,
                double lambda) {
  if (xa.size() != xb.size()) {
    throw Error(ErrorCode::kDimMismatch, "mixup of unequal lengths");
  }
  if (!(lambda >= 0.0 && lambda <= 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "lambda must lie in [0, 1]");
  }
  Vec64 out(xa.size());
  for (std::size_t k = 0; k < xa.size(); ++k) {
    out[k] = lambda * xa[k] + (1.0 - lambda) * xb[k];
  }
  return out;
}

std::vector<std::size_t> RandomDerangement(std::size_t n, Rng& rng) {
  if (n < 2) throw Error(ErrorCode::kInvalidArgument, "derangement needs n >= 2");
  std::vector<std::size_t> perm(n);
  for (;;) {
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    rng.Shuffle(perm);
    bool fixed = false;
    for (std::size_t i = 0; i < n && !fixed; ++i) fixed = perm[i] == i;
    if (!fixed) return perm;
  }
}

MixedBatch BuildContrastBatch(const Mat64& inputs, std::span<const int> labels,
                              std::span<const std::size_t> sample_ids,
                              const AugmentConfig& cfg, double alpha, Rng& rng,
                              std::optional<double> fixed_lambda) {
  const std::size_t n = inputs.rows();
  if (n < 2) throw Error(ErrorCode::kInvalidArgument, "batch needs N >= 2");
  if (labels.size() != n || sample_ids.size() != n) {
    throw Error(ErrorCode::kDimMismatch, "batch labels/ids do not match rows");
  }
  cfg.Validate();
  const std::size_t rows = 2 * n;
  Mat64 views(rows, inputs.cols());
  for (std::size_t i = 0; i < n; ++i) {
    auto [a, b] = TwoViews(inputs.row(i), cfg, rng);
    views.SetRow(i, a);
    views.SetRow(i + n, b);
  }
  MixedBatch out;
  out.inputs = Mat64(rows, inputs.cols());
  out.partner = RandomDerangement(rows, rng);
  for (std::size_t r = 0; r < rows; ++r) {
    const double lambda =
        fixed_lambda.has_value() ? *fixed_lambda : SampleLambda(alpha, rng);
    const std::size_t p = out.partner[r];
    out.inputs.SetRow(r, MixupPair(views.row(r), views.row(p), lambda));
    out.labels.push_back(MixedLabel::Mix(labels[r % n], labels[p % n], lambda));
    out.view_pairing.push_back((r + n) % rows);
    out.source_a.push_back(sample_ids[r % n]);
    out.source_b.push_back(sample_ids[p % n]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Text I/O

namespace {

std::vector<std::string_view> SplitCsv(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const std::size_t comma = line.find(',', start);
    std::string_view field = line.substr(start, comma - start);
    while (!field.empty() && field.front() == ' ') field.remove_prefix(1);
    while (!field.empty() && (field.back() == ' ' || field.back() == '\r')) {
      field.remove_suffix(1);
    }
    out.push_back(field);
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

template <typename T>
T ParseNumber(std::string_view s, std::size_t line_no) {
  T v{};
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw Error(ErrorCode::kParse, "line " + std::to_string(line_no) +
                                       ": bad number '" + std::string(s) + "'");
  }
  return v;
}

}  // namespace

void WriteDataset(const Dataset& data, std::ostream& out) {
  data.Validate();
  out << "moitdata v1, " << data.size() << ", " << data.dim() << ", "
      << data.num_classes << "\n";
  std::string line;
  for (std::size_t i = 0; i < data.size(); ++i) {
    line.clear();
    for (double v : data.x.row(i)) {
      line += FormatDouble(v, 17);
      line += ',';
    }
    line += std::to_string(data.y[i]);
    line += ',';
    line += std::to_string(data.y_clean[i]);
    line += '\n';
    out << line;
  }
}

Dataset ReadDataset(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorCode::kParse, "empty file");
  const auto header = SplitCsv(line);
  if (header.size() != 4 || header[0] != "moitdata v1") {
    throw Error(ErrorCode::kParse, "bad header: " + line);
  }
  const auto n = ParseNumber<std::size_t>(header[1], 1);
  const auto d = ParseNumber<std::size_t>(header[2], 1);
  const auto c = ParseNumber<int>(header[3], 1);
  if (d == 0 || c <= 0) throw Error(ErrorCode::kParse, "bad header sizes");
  Dataset data;
  data.num_classes = c;
  data.x = Mat64(n, d);
  data.y.resize(n);
  data.y_clean.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::getline(in, line)) {
      throw Error(ErrorCode::kParse, "expected " + std::to_string(n) +
                                         " rows, got " + std::to_string(i));
    }
    const auto fields = SplitCsv(line);
    if (fields.size() != d + 2) {
      throw Error(ErrorCode::kParse,
                  "line " + std::to_string(i + 2) + ": wrong field count");
    }
    for (std::size_t k = 0; k < d; ++k) {
      data.x(i, k) = ParseNumber<double>(fields[k], i + 2);
    }
    data.y[i] = ParseNumber<int>(fields[d], i + 2);
    data.y_clean[i] = ParseNumber<int>(fields[d + 1], i + 2);
    if (data.y[i] < 0 || data.y[i] >= c || data.y_clean[i] < 0 ||
        data.y_clean[i] >= c) {
      throw Error(ErrorCode::kParse,
                  "line " + std::to_string(i + 2) + ": label out of range");
    }
  }
  while (std::getline(in, line)) {
    if (!line.empty() && line != "\r") {
      throw Error(ErrorCode::kParse, "trailing rows after declared N");
    }
  }
  data.RefreshNoiseMask();
  return data;
}

void SaveDataset(const Dataset& data, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot open " + path);
  WriteDataset(data, out);
  if (!out) throw Error(ErrorCode::kIo, "write failed: " + path);
}

Dataset LoadDataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path);
  return ReadDataset(in);
}

}  // namespace moit
