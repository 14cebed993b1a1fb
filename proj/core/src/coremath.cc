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

#include "moit/coremath.h"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <numbers>
#include <thread>

namespace moit {

const char* ErrorCodeName(ErrorCode code) {
  switch (code) {
    case ErrorCode::kNearZeroNorm: return "NearZeroNorm";
    case ErrorCode::kDimMismatch: return "DimMismatch";
    case ErrorCode::kDegenerateBatch: return "DegenerateBatch";
    case ErrorCode::kInvalidTarget: return "InvalidTarget";
    case ErrorCode::kBadK: return "BadK";
    case ErrorCode::kInvalidMapping: return "InvalidMapping";
    case ErrorCode::kCenterPackingFailed: return "CenterPackingFailed";
    case ErrorCode::kEmptyCleanSet: return "EmptyCleanSet";
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
    case ErrorCode::kParse: return "Parse";
    case ErrorCode::kIo: return "Io";
    case ErrorCode::kCheckpoint: return "Checkpoint";
  }
  return "Unknown";
}

Mat64::Mat64(std::size_t rows, std::size_t cols, std::vector<double> values)
    : rows_(rows), cols_(cols), values_(std::move(values)) {
  if (values_.size() != rows * cols) {
    throw Error(ErrorCode::kDimMismatch, "matrix storage does not match shape");
  }
}

void Mat64::SetRow(std::size_t r, std::span<const double> v) {
  if (v.size() != cols_) {
    throw Error(ErrorCode::kDimMismatch, "row length mismatch");
  }
  std::copy(v.begin(), v.end(), values_.begin() + r * cols_);
}

void Mat64::AppendRow(std::span<const double> v) {
  if (rows_ == 0 && cols_ == 0) cols_ = v.size();
  if (v.size() != cols_) {
    throw Error(ErrorCode::kDimMismatch, "row length mismatch");
  }
  values_.insert(values_.end(), v.begin(), v.end());
  ++rows_;
}

double Dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw Error(ErrorCode::kDimMismatch, "dot of unequal lengths");
  }
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * b[k];
  return s;
}

double Norm2(std::span<const double> v) { return std::sqrt(Dot(v, v)); }

bool AllFinite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(),
                     [](double x) { return std::isfinite(x); });
}

Vec64 L2Normalize(std::span<const double> v) {
  const double n = Norm2(v);
  if (!(n > 1e-12)) {
    throw Error(ErrorCode::kNearZeroNorm, "cannot normalize near-zero vector");
  }
  Vec64 out(v.size());
  for (std::size_t k = 0; k < v.size(); ++k) out[k] = v[k] / n;
  return out;
}

Vec64 ScaledSoftmax(std::span<const double> logits, double tau) {
  if (!(tau > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "temperature must be positive");
  }
  Vec64 out(logits.size());
  if (logits.empty()) return out;
  const double mx = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (std::size_t k = 0; k < logits.size(); ++k) {
    out[k] = std::exp((logits[k] - mx) / tau);
    sum += out[k];
  }
  for (double& p : out) p /= sum;
  return out;
}

Mat64 PairwiseInner(const Mat64& a, const Mat64& b) {
  if (a.cols() != b.cols()) {
    throw Error(ErrorCode::kDimMismatch, "pairwise inner: column mismatch");
  }
  Mat64 out(a.rows(), b.rows());
  ParallelFor(a.rows(), [&](std::size_t i) {
    const auto ai = a.row(i);
    for (std::size_t j = 0; j < b.rows(); ++j) {
      const auto bj = b.row(j);
      double s = 0.0;
      for (std::size_t k = 0; k < ai.size(); ++k) s += ai[k] * bj[k];
      out(i, j) = s;
    }
  });
  return out;
}

std::string FormatDouble(double v, int digits) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res =
      digits > 0 ? std::to_chars(buf, buf + sizeof(buf), v,
                                 std::chars_format::general, digits)
                 : std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::size_t ArgMax(std::span<const double> v) {
  std::size_t best = 0;
  for (std::size_t k = 1; k < v.size(); ++k) {
    if (v[k] > v[best]) best = k;
  }
  return best;
}

namespace {

std::uint64_t SplitMix64(std::uint64_t& x) {
  std::uint64_t z = (x += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::uint64_t Rotl(std::uint64_t x, int k) {
  return (x << k) | (x >> (64 - k));
}

}  // namespace

Rng::Rng(std::uint64_t seed) : seed_(seed) {
  std::uint64_t x = seed;
  for (auto& s : s_) s = SplitMix64(x);
}

std::uint64_t Rng::NextU64() {
  const std::uint64_t result = Rotl(s_[1] * 5, 7) * 9;
  const std::uint64_t t = s_[1] << 17;
  s_[2] ^= s_[0];
  s_[3] ^= s_[1];
  s_[1] ^= s_[2];
  s_[0] ^= s_[3];
  s_[2] ^= t;
  s_[3] = Rotl(s_[3], 45);
  return result;
}

double Rng::Uniform() {
  return static_cast<double>(NextU64() >> 11) * 0x1.0p-53;
}

double Rng::Uniform(double lo, double hi) { return lo + (hi - lo) * Uniform(); }

std::uint64_t Rng::UniformInt(std::uint64_t n) {
  if (n == 0) throw Error(ErrorCode::kInvalidArgument, "UniformInt(0)");
  // Reject the top partial bucket so r % n is exactly uniform.
  const std::uint64_t limit = UINT64_MAX - (UINT64_MAX % n + 1) % n;
  std::uint64_t r = NextU64();
  while (r > limit) r = NextU64();
  return r % n;
}

double Rng::Normal() {
  if (has_spare_normal_) {
    has_spare_normal_ = false;
    return spare_normal_;
  }
  const double u1 = 1.0 - Uniform();  // (0, 1]
  const double u2 = Uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double theta = 2.0 * std::numbers::pi * u2;
  spare_normal_ = r * std::sin(theta);
  has_spare_normal_ = true;
  return r * std::cos(theta);
}

double Rng::Normal(double mean, double stddev) {
  return mean + stddev * Normal();
}

double Rng::Gamma(double shape) {
  if (!(shape > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "gamma shape must be positive");
  }
  if (shape < 1.0) {
    const double g = Gamma(shape + 1.0);
    return g * std::pow(1.0 - Uniform(), 1.0 / shape);
  }
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x;
    double v;
    do {
      x = Normal();
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = 1.0 - Uniform();
    if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
    if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
  }
}

double Rng::Beta(double a, double b) {
  const double x = Gamma(a);
  const double y = Gamma(b);
  return x / (x + y);
}

bool Rng::Bernoulli(double p) { return Uniform() < p; }

Rng Rng::Fork(std::uint64_t stream) const {
  std::uint64_t x = seed_ ^ ((stream + 1) * 0x9E3779B97F4A7C15ULL);
  return Rng(SplitMix64(x));
}

double SampleLambda(double alpha, Rng& rng) {
  if (!(alpha > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "alpha must be positive");
  }
  if (alpha == 1.0) return rng.Uniform();
  return std::clamp(rng.Beta(alpha, alpha), 0.0, 1.0);
}

namespace {
std::atomic<int> g_num_threads{1};
}  // namespace

void SetNumThreads(int n) { g_num_threads.store(std::max(1, n)); }

int NumThreads() { return g_num_threads.load(); }

void ParallelFor(std::size_t n, const std::function<void(std::size_t)>& fn) {
  const std::size_t workers =
      std::min<std::size_t>(static_cast<std::size_t>(NumThreads()), n);
  if (workers <= 1 || n < 64) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(workers);
  const std::size_t chunk = (n + workers - 1) / workers;
  for (std::size_t w = 0; w < workers; ++w) {
    const std::size_t begin = w * chunk;
    const std::size_t end = std::min(n, begin + chunk);
    if (begin >= end) break;
    pool.emplace_back([&fn, begin, end] {
      for (std::size_t i = begin; i < end; ++i) fn(i);
    });
  }
  for (auto& t : pool) t.join();
}

}  // namespace moit
