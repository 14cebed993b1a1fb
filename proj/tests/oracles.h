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

// Slow reference implementations written straight from the definitions.
// They share no code with the library beyond plain data containers.

#ifndef MOIT_TESTS_ORACLES_H_
#define MOIT_TESTS_ORACLES_H_

#include <cstddef>
#include <cstdint>
#include <functional>
#include <vector>

#include "moit/coremath.h"
#include "moit/losses.h"
#include "moit/model.h"

namespace moit::oracle {

using Rows = std::vector<std::vector<double>>;

Rows ToRows(const Mat64& m);
double DotNaive(const std::vector<double>& a, const std::vector<double>& b);

// Supervised contrastive loss by a double loop over anchors and partners.
// Returns NaN when no anchor has a positive.
double Scl(const Rows& z, const std::vector<int>& labels, double tau);

// Per anchor: lambda * L(y_a) + (1 - lambda) * L(y_b) with positives chosen
// by partner dominant label; zero-weight or positive-free terms vanish and
// anchors with nothing left are skipped. Partners are the other batch rows
// (self excluded) or, for the memory form, every memory row.
double IclMix(const Rows& z, const std::vector<MixedLabel>& labels, double tau);
double IclMem(const Rows& z, const std::vector<MixedLabel>& labels,
              const Rows& memory, const std::vector<int>& memory_labels,
              double tau);

double Ssl(const Rows& logits, const Rows& ta, const Rows& tb,
           const std::vector<double>& lambdas);
double Bootstrap(const Rows& logits, const std::vector<int>& ya,
                 const std::vector<int>& yb, const std::vector<int>& pa,
                 const std::vector<int>& pb, const std::vector<double>& lambdas,
                 double delta);

// Full sort of every other row by (similarity desc, index asc).
std::vector<std::vector<std::size_t>> Neighbors(const Rows& z, std::size_t k);
Rows VoteCounts(const std::vector<std::vector<std::size_t>>& nbrs,
                const std::vector<int>& labels, std::size_t num_classes);
std::vector<int> ArgMaxRows(const Rows& p);

// Clean-set selection from the written rule; strategy is one of
// "median", "min", "max", "unbalanced". Result is per-class index lists.
std::vector<std::vector<std::size_t>> SelectClean(
    const std::vector<double>& d, const std::vector<int>& y_hat,
    const std::vector<int>& y, std::size_t num_classes, const char* strategy);

std::vector<int> WeightedKnn(const Rows& train, const std::vector<int>& labels,
                             const Rows& test, std::size_t num_classes,
                             std::size_t k, double tau);

// Leave-one-out 1-NN accuracy under Euclidean distance, lowest index on
// ties.
double LeaveOneOutAccuracy(const Rows& x, const std::vector<int>& labels);

// Central differences of f over every parameter entry, in ForEachTensor
// order, flattened.
std::vector<double> NumericGrad(const ModelParams& params,
                                const std::function<double(const ModelParams&)>& f,
                                double eps = 1e-6);
std::vector<double> Flatten(const ModelParams& grads);

// ||a - b|| / max(||a|| + ||b||, 1e-12).
double RelativeError(const std::vector<double>& a, const std::vector<double>& b);

}  // namespace moit::oracle

#endif  // MOIT_TESTS_ORACLES_H_
