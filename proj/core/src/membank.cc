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

#include "moit/membank.h"

#include <algorithm>
#include <cmath>

namespace moit {

MemoryBank::MemoryBank(std::size_t capacity, std::size_t dim)
    : capacity_(capacity),
      dim_(dim),
      z_(capacity * dim, 0.0),
      labels_(capacity, -1),
      steps_(capacity, 0) {
  if (capacity == 0 || dim == 0) {
    throw Error(ErrorCode::kInvalidArgument,
                "memory bank needs positive capacity and dim");
  }
}

void MemoryBank::PushBatch(const Mat64& z, std::span<const int> labels) {
  if (z.rows() != labels.size() || (z.rows() > 0 && z.cols() != dim_)) {
    throw Error(ErrorCode::kDimMismatch, "memory push shape mismatch");
  }
  for (std::size_t r = 0; r < z.rows(); ++r) {
    const auto row = z.row(r);
    if (std::abs(Norm2(row) - 1.0) > 1e-6) {
      throw Error(ErrorCode::kNearZeroNorm, "memory rows must be unit norm");
    }
    std::size_t slot;
    if (size_ < capacity_) {
      slot = (head_ + size_) % capacity_;
      ++size_;
    } else {
      slot = head_;
      head_ = (head_ + 1) % capacity_;
    }
    std::copy(row.begin(), row.end(), z_.begin() + slot * dim_);
    labels_[slot] = labels[r];
    steps_[slot] = next_step_++;
  }
}

MemorySnapshot MemoryBank::Snapshot() const {
  MemorySnapshot snap;
  snap.z = Mat64(size_, dim_);
  snap.labels.resize(size_);
  snap.insert_steps.resize(size_);
  for (std::size_t k = 0; k < size_; ++k) {
    const std::size_t slot = (head_ + k) % capacity_;
    std::copy_n(z_.begin() + slot * dim_, dim_, snap.z.row(k).begin());
    snap.labels[k] = labels_[slot];
    snap.insert_steps[k] = steps_[slot];
  }
  return snap;
}

void MemoryBank::Clear() {
  head_ = 0;
  size_ = 0;
}

}  // namespace moit
