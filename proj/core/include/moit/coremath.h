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

#ifndef MOIT_COREMATH_H_
#define MOIT_COREMATH_H_

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace moit {

// Failure categories raised by the library. Callers that need to branch on
// the kind of failure inspect Error::code().
enum class ErrorCode {
  kNearZeroNorm,
  kDimMismatch,
  kDegenerateBatch,
  kInvalidTarget,
  kBadK,
  kInvalidMapping,
  kCenterPackingFailed,
  kEmptyCleanSet,
  kInvalidArgument,
  kParse,
  kIo,
  kCheckpoint,
};

const char* ErrorCodeName(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(ErrorCodeName(code)) + ": " + what),
        code_(code) {}

  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

using Vec64 = std::vector<double>;

// Dense row-major matrix of doubles.
class Mat64 {
 public:
  Mat64() = default;
  Mat64(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), values_(rows * cols, fill) {}
  Mat64(std::size_t rows, std::size_t cols, std::vector<double> values);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return values_.size(); }
  bool empty() const { return values_.empty(); }

  double& operator()(std::size_t r, std::size_t c) {
    return values_[r * cols_ + c];
  }
  double operator()(std::size_t r, std::size_t c) const {
    return values_[r * cols_ + c];
  }

  std::span<double> row(std::size_t r) {
    return {values_.data() + r * cols_, cols_};
  }
  std::span<const double> row(std::size_t r) const {
    return {values_.data() + r * cols_, cols_};
  }

  std::vector<double>& values() { return values_; }
  const std::vector<double>& values() const { return values_; }

  void SetRow(std::size_t r, std::span<const double> v);
  // Appends a row; the first append on an empty 0x0 matrix fixes cols.
  void AppendRow(std::span<const double> v);

  bool operator==(const Mat64& other) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> values_;
};

double Dot(std::span<const double> a, std::span<const double> b);
double Norm2(std::span<const double> v);
bool AllFinite(std::span<const double> v);

// Throws kNearZeroNorm when ||v|| <= 1e-12.
Vec64 L2Normalize(std::span<const double> v);

// softmax(logits / tau) with max-subtraction.
Vec64 ScaledSoftmax(std::span<const double> logits, double tau);

// out(i, j) = <a_i, b_j>. Summation runs over the column index in order so
// results are reproducible bit for bit by any naive loop.
Mat64 PairwiseInner(const Mat64& a, const Mat64& b);

// Shortest text that round-trips, or `digits` significant digits when
// positive. "nan"/"inf" are spelled out.
std::string FormatDouble(double v, int digits = 0);

// Index of the first maximal entry.
std::size_t ArgMax(std::span<const double> v);

// xoshiro256** 1.0 (Blackman & Vigna) seeded through splitmix64. Every
// distribution below is implemented here on top of NextU64() so draws do
// not depend on the standard library implementation.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t seed() const { return seed_; }

  std::uint64_t NextU64();
  // Uniform on [0, 1) with 53 bits of resolution.
  double Uniform();
  double Uniform(double lo, double hi);
  // Uniform integer in [0, n) by rejection of the biased top range.
  std::uint64_t UniformInt(std::uint64_t n);
  // Standard normal via the Box-Muller transform; caches the second draw.
  double Normal();
  double Normal(double mean, double stddev);
  // Marsaglia-Tsang squeeze method; shape < 1 uses the boost U^(1/shape).
  double Gamma(double shape);
  // Beta(a, b) from two Gamma draws.
  double Beta(double a, double b);
  bool Bernoulli(double p);

  template <typename T>
  void Shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(UniformInt(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  // Child generator for an independent stream. The child seed is
  // splitmix64(seed ^ (stream + 1) * 0x9E3779B97F4A7C15); it depends only on
  // this generator's seed and the stream id, never on draws made so far.
  Rng Fork(std::uint64_t stream) const;

 private:
  std::uint64_t seed_;
  std::uint64_t s_[4];
  bool has_spare_normal_ = false;
  double spare_normal_ = 0.0;
};

// Beta(alpha, alpha); alpha == 1 takes one uniform draw.
double SampleLambda(double alpha, Rng& rng);

// Worker threads used by ParallelFor. Defaults to 1.
void SetNumThreads(int n);
int NumThreads();

// Runs fn(i) for i in [0, n), split into contiguous chunks over the
// configured worker count. fn must only write state owned by index i.
void ParallelFor(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace moit

#endif  // MOIT_COREMATH_H_
