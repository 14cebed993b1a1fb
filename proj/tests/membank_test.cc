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

#include <gtest/gtest.h>

#include <cmath>

namespace moit {
namespace {

// Row i encodes its push index as an angle so rows can be identified later.
Vec64 RowFor(std::uint64_t i) {
  const double a = static_cast<double>(i) * 1e-3;
  return {std::cos(a), std::sin(a)};
}

Mat64 RowsFor(std::uint64_t first, std::size_t n) {
  Mat64 z(n, 2);
  for (std::size_t r = 0; r < n; ++r) z.SetRow(r, RowFor(first + r));
  return z;
}

std::vector<int> LabelsFor(std::uint64_t first, std::size_t n) {
  std::vector<int> out;
  for (std::size_t r = 0; r < n; ++r) out.push_back(static_cast<int>((first + r) % 7));
  return out;
}

TEST(MemoryBankTest, EmptySnapshot) {
  MemoryBank bank(4, 2);
  const MemorySnapshot s = bank.Snapshot();
  EXPECT_TRUE(s.empty());
  EXPECT_EQ(s.z.rows(), 0u);
}

TEST(MemoryBankTest, KeepsLastEntriesInAgeOrder) {
  MemoryBank bank(4, 2);
  bank.PushBatch(RowsFor(0, 3), LabelsFor(0, 3));
  const MemorySnapshot first = bank.Snapshot();
  ASSERT_EQ(first.size(), 3u);
  EXPECT_EQ(first.insert_steps, (std::vector<std::uint64_t>{0, 1, 2}));
  bank.PushBatch(RowsFor(3, 3), LabelsFor(3, 3));
  const MemorySnapshot s = bank.Snapshot();
  ASSERT_EQ(s.size(), 4u);
  EXPECT_EQ(s.insert_steps, (std::vector<std::uint64_t>{2, 3, 4, 5}));
  EXPECT_EQ(s.labels, LabelsFor(2, 4));
  EXPECT_EQ(s.z, RowsFor(2, 4));
  // The earlier snapshot is an independent copy.
  EXPECT_EQ(first.size(), 3u);
  EXPECT_EQ(first.z, RowsFor(0, 3));
}

TEST(MemoryBankTest, CapacityTwoBatchesHoldsLastBatch) {
  const std::size_t n = 6;
  MemoryBank bank(n, 2);
  for (std::uint64_t b = 0; b < 5; ++b) {
    bank.PushBatch(RowsFor(b * n, n), LabelsFor(b * n, n));
    EXPECT_EQ(bank.Snapshot().z, RowsFor(b * n, n));
  }
}

TEST(MemoryBankTest, SinglePushesKeepNewestHundred) {
  MemoryBank bank(100, 2);
  for (std::uint64_t i = 1; i <= 10000; ++i) {
    bank.PushBatch(RowsFor(i, 1), LabelsFor(i, 1));
    EXPECT_LE(bank.size(), 100u);
  }
  const MemorySnapshot s = bank.Snapshot();
  ASSERT_EQ(s.size(), 100u);
  EXPECT_EQ(s.z, RowsFor(9901, 100));
  EXPECT_EQ(s.labels, LabelsFor(9901, 100));
  for (std::size_t r = 1; r < s.size(); ++r) {
    EXPECT_LT(s.insert_steps[r - 1], s.insert_steps[r]);
  }
  EXPECT_EQ(bank.pushed(), 10000u);
}

TEST(MemoryBankTest, BatchLargerThanCapacity) {
  MemoryBank bank(3, 2);
  bank.PushBatch(RowsFor(0, 7), LabelsFor(0, 7));
  EXPECT_EQ(bank.Snapshot().z, RowsFor(4, 3));
}

TEST(MemoryBankTest, ClearEmpties) {
  MemoryBank bank(3, 2);
  bank.PushBatch(RowsFor(0, 2), LabelsFor(0, 2));
  bank.Clear();
  EXPECT_TRUE(bank.empty());
  EXPECT_TRUE(bank.Snapshot().empty());
}

TEST(MemoryBankTest, RejectsBadRows) {
  MemoryBank bank(3, 2);
  try {
    bank.PushBatch(Mat64(1, 2, {2.0, 0.0}), std::vector<int>{0});
    ADD_FAILURE() << "non-unit row accepted";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kNearZeroNorm);
  }
  try {
    bank.PushBatch(Mat64(1, 3, {1.0, 0.0, 0.0}), std::vector<int>{0});
    ADD_FAILURE() << "wrong width accepted";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kDimMismatch);
  }
  EXPECT_TRUE(bank.empty());
}

}  // namespace
}  // namespace moit
