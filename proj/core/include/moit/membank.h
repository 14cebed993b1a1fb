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

#ifndef MOIT_MEMBANK_H_
#define MOIT_MEMBANK_H_

#include <cstdint>
#include <span>
#include <vector>

#include "moit/coremath.h"

namespace moit {

// Immutable copy of the bank, oldest entry first.
struct MemorySnapshot {
  Mat64 z;
  std::vector<int> labels;
  std::vector<std::uint64_t> insert_steps;

  std::size_t size() const { return labels.size(); }
  bool empty() const { return labels.empty(); }
};

// Fixed-capacity FIFO of detached unit-norm embeddings and their dominant
// class. Once full, every push evicts the oldest entries.
class MemoryBank {
 public:
  MemoryBank(std::size_t capacity, std::size_t dim);

  std::size_t capacity() const { return capacity_; }
  std::size_t dim() const { return dim_; }
  std::size_t size() const { return size_; }
  bool empty() const { return size_ == 0; }
  // Total rows ever pushed.
  std::uint64_t pushed() const { return next_step_; }

  // Rows are appended in order. Rows must be unit norm (1e-6 tolerance).
  void PushBatch(const Mat64& z, std::span<const int> labels);
  MemorySnapshot Snapshot() const;
  void Clear();

 private:
  std::size_t capacity_;
  std::size_t dim_;
  std::size_t head_ = 0;  // slot of the oldest entry
  std::size_t size_ = 0;
  std::uint64_t next_step_ = 0;
  std::vector<double> z_;
  std::vector<int> labels_;
  std::vector<std::uint64_t> steps_;
};

}  // namespace moit

#endif  // MOIT_MEMBANK_H_
