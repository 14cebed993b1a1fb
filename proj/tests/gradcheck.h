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

#ifndef MOIT_TESTS_GRADCHECK_H_
#define MOIT_TESTS_GRADCHECK_H_

#include <cstdint>
#include <string>
#include <vector>

namespace moit::gradcheck {

enum class LossKind {
  kScl,
  kIclMix,
  kIclMem,
  kIclSum,
  kIclMean,
  kSsl,
  kMoit,
  kBootstrap,
};

const std::vector<LossKind>& AllKinds();
std::string KindName(LossKind kind);

struct Outcome {
  double relative_error = 0.0;
  double value = 0.0;
  std::size_t num_params = 0;
};

// Builds a random tiny network (D <= 5, E <= 6, C <= 4, at most 8 rows),
// composes the loss through it and compares Backward with central
// differences over every parameter.
Outcome Run(LossKind kind, std::uint64_t seed);

}  // namespace moit::gradcheck

#endif  // MOIT_TESTS_GRADCHECK_H_
