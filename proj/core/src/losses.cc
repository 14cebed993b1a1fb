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

#include "moit/losses.h"

#include <algorithm>
#include <cmath>

namespace moit {

namespace {

struct TermSum {
  double sum = 0.0;
  std::size_t valid = 0;
};

// Accumulates the unnormalized per-anchor contrastive losses of `anchors`
// against `partners`. Gradients w.r.t. the inner products are pushed into
// grad_anchor and, when given, grad_partner. Caller divides by `valid`.
TermSum ContrastTerms(const Mat64& anchors,
                      std::span<const MixedLabel> anchor_labels,
                      const Mat64& partners, std::span<const int> partner_dom,
                      bool exclude_self, double tau, Mat64& grad_anchor,
                      Mat64* grad_partner) {
  const std::size_t n = anchors.rows();
  const std::size_t m = partners.rows();
  const Mat64 sims = PairwiseInner(anchors, partners);
  TermSum acc;
  std::vector<double> logits(m);
  std::vector<double> g(m);
  for (std::size_t i = 0; i < n; ++i) {
    const MixedLabel& lab = anchor_labels[i];
    double mx = -INFINITY;
    std::size_t count_a = 0;
    std::size_t count_b = 0;
    for (std::size_t r = 0; r < m; ++r) {
      if (exclude_self && r == i) continue;
      logits[r] = sims(i, r) / tau;
      mx = std::max(mx, logits[r]);
      if (partner_dom[r] == lab.ya) ++count_a;
      if (partner_dom[r] == lab.yb) ++count_b;
    }
    const bool use_a = count_a > 0 && lab.lambda > 0.0;
    const bool use_b = count_b > 0 && lab.lambda < 1.0;
    if (!use_a && !use_b) continue;

    double denom = 0.0;
    for (std::size_t r = 0; r < m; ++r) {
      if (exclude_self && r == i) continue;
      denom += std::exp(logits[r] - mx);
    }
    const double log_denom = mx + std::log(denom);

    const double wa = use_a ? lab.lambda : 0.0;
    const double wb = use_b ? 1.0 - lab.lambda : 0.0;
    double term_a = 0.0;
    double term_b = 0.0;
    for (std::size_t r = 0; r < m; ++r) {
      if (exclude_self && r == i) continue;
      if (use_a && partner_dom[r] == lab.ya) term_a += log_denom - logits[r];
      if (use_b && partner_dom[r] == lab.yb) term_b += log_denom - logits[r];
    }
    double loss = 0.0;
    if (use_a) loss += wa * (term_a / static_cast<double>(count_a));
    if (use_b) loss += wb * (term_b / static_cast<double>(count_b));
    acc.sum += loss;
    ++acc.valid;

    // d loss / d sim_r = (W * softmax_r - c_r) / tau, W = sum of c_r.
    const double ca = use_a ? wa / static_cast<double>(count_a) : 0.0;
    const double cb = use_b ? wb / static_cast<double>(count_b) : 0.0;
    const double total = wa + wb;
    auto gi = grad_anchor.row(i);
    const auto zi = anchors.row(i);
    for (std::size_t r = 0; r < m; ++r) {
      if (exclude_self && r == i) {
        g[r] = 0.0;
        continue;
      }
      double c = 0.0;
      if (partner_dom[r] == lab.ya) c += ca;
      if (partner_dom[r] == lab.yb) c += cb;
      g[r] = (total * std::exp(logits[r] - log_denom) - c) / tau;
      if (g[r] == 0.0) continue;
      const auto zr = partners.row(r);
      for (std::size_t k = 0; k < gi.size(); ++k) gi[k] += g[r] * zr[k];
      if (grad_partner != nullptr) {
        auto gr = grad_partner->row(r);
        for (std::size_t k = 0; k < gr.size(); ++k) gr[k] += g[r] * zi[k];
      }
    }
  }
  return acc;
}

void Scale(Mat64& m, double s) {
  for (double& v : m.values()) v *= s;
}

void CheckBatch(const ContrastBatch& batch, double tau) {
  if (!(tau > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "temperature must be positive");
  }
  if (batch.z.rows() != batch.labels.size()) {
    throw Error(ErrorCode::kDimMismatch, "labels do not match rows");
  }
}

std::vector<int> Dominants(std::span<const MixedLabel> labels) {
  std::vector<int> d(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) d[i] = labels[i].dominant;
  return d;
}

void CheckDistributions(const Mat64& t, const char* what) {
  for (std::size_t i = 0; i < t.rows(); ++i) {
    double s = 0.0;
    for (double v : t.row(i)) {
      if (!(v >= 0.0) || !std::isfinite(v)) {
        throw Error(ErrorCode::kInvalidTarget,
                    std::string(what) + " has a negative or non-finite entry");
      }
      s += v;
    }
    if (std::abs(s - 1.0) > 1e-9) {
      throw Error(ErrorCode::kInvalidTarget,
                  std::string(what) + " row does not sum to 1");
    }
  }
}

}  // namespace

LossOut IclMixLoss(const ContrastBatch& batch, double tau) {
  CheckBatch(batch, tau);
  if (batch.z.rows() < 2) {
    throw Error(ErrorCode::kDegenerateBatch, "need at least two rows");
  }
  const std::vector<int> dom = Dominants(batch.labels);
  LossOut out{0.0, Mat64(batch.z.rows(), batch.z.cols())};
  Mat64 grad_partner(batch.z.rows(), batch.z.cols());
  const TermSum acc = ContrastTerms(batch.z, batch.labels, batch.z, dom,
                                    /*exclude_self=*/true, tau, out.grad,
                                    &grad_partner);
  if (acc.valid == 0) {
    throw Error(ErrorCode::kDegenerateBatch, "no anchor has a positive");
  }
  const double inv = 1.0 / static_cast<double>(acc.valid);
  out.value = acc.sum * inv;
  for (std::size_t k = 0; k < out.grad.size(); ++k) {
    out.grad.values()[k] = (out.grad.values()[k] + grad_partner.values()[k]) * inv;
  }
  return out;
}

LossOut SclLoss(const Mat64& z, std::span<const int> labels, double tau) {
  ContrastBatch batch;
  batch.z = z;
  for (int y : labels) batch.labels.push_back(MixedLabel::Plain(y));
  return IclMixLoss(batch, tau);
}

LossOut IclMemLoss(const ContrastBatch& batch, const MemorySnapshot& memory,
                   double tau) {
  CheckBatch(batch, tau);
  LossOut out{0.0, Mat64(batch.z.rows(), batch.z.cols())};
  if (memory.empty()) return out;
  if (memory.z.cols() != batch.z.cols()) {
    throw Error(ErrorCode::kDimMismatch, "memory dim differs from batch dim");
  }
  const TermSum acc =
      ContrastTerms(batch.z, batch.labels, memory.z, memory.labels,
                    /*exclude_self=*/false, tau, out.grad, nullptr);
  if (acc.valid == 0) {
    Scale(out.grad, 0.0);
    return out;
  }
  const double inv = 1.0 / static_cast<double>(acc.valid);
  out.value = acc.sum * inv;
  Scale(out.grad, inv);
  return out;
}

LossOut IclLoss(const ContrastBatch& batch, const MemorySnapshot& memory,
                double tau, CombineMode mode) {
  LossOut mix = IclMixLoss(batch, tau);
  const LossOut mem = IclMemLoss(batch, memory, tau);
  const double w = mode == CombineMode::kMean ? 0.5 : 1.0;
  mix.value = w * (mix.value + mem.value);
  for (std::size_t k = 0; k < mix.grad.size(); ++k) {
    mix.grad.values()[k] = w * (mix.grad.values()[k] + mem.grad.values()[k]);
  }
  return mix;
}

LossOut SslLoss(const Mat64& logits, const Mat64& targets_a,
                const Mat64& targets_b, std::span<const double> lambdas) {
  const std::size_t n = logits.rows();
  const std::size_t c = logits.cols();
  if (targets_a.rows() != n || targets_b.rows() != n || lambdas.size() != n ||
      targets_a.cols() != c || targets_b.cols() != c) {
    throw Error(ErrorCode::kDimMismatch, "ssl loss input shapes differ");
  }
  CheckDistributions(targets_a, "target a");
  CheckDistributions(targets_b, "target b");
  LossOut out{0.0, Mat64(n, c)};
  if (n == 0) return out;
  const double inv = 1.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double lam = lambdas[i];
    const Vec64 h = ScaledSoftmax(logits.row(i), 1.0);
    double ce_a = 0.0;
    double ce_b = 0.0;
    double live_mass = 0.0;  // target mass on unclamped classes
    for (std::size_t k = 0; k < c; ++k) {
      const double lh = std::log(std::max(h[k], kProbFloor));
      ce_a -= targets_a(i, k) * lh;
      ce_b -= targets_b(i, k) * lh;
      if (h[k] > kProbFloor) {
        live_mass += lam * targets_a(i, k) + (1.0 - lam) * targets_b(i, k);
      }
    }
    out.value += (lam * ce_a + (1.0 - lam) * ce_b) * inv;
    for (std::size_t k = 0; k < c; ++k) {
      const double t = h[k] > kProbFloor
                           ? lam * targets_a(i, k) + (1.0 - lam) * targets_b(i, k)
                           : 0.0;
      out.grad(i, k) = (h[k] * live_mass - t) * inv;
    }
  }
  return out;
}

MoitLossOut MoitLoss(const ContrastBatch& batch, const MemorySnapshot& memory,
                     const Mat64& logits, const Mat64& targets_a,
                     const Mat64& targets_b, double tau, CombineMode mode) {
  std::vector<double> lambdas(batch.labels.size());
  for (std::size_t i = 0; i < lambdas.size(); ++i) {
    lambdas[i] = batch.labels[i].lambda;
  }
  LossOut icl = IclLoss(batch, memory, tau, mode);
  LossOut ssl = SslLoss(logits, targets_a, targets_b, lambdas);
  MoitLossOut out;
  out.icl = icl.value;
  out.ssl = ssl.value;
  out.value = icl.value + ssl.value;
  out.grad_z = std::move(icl.grad);
  out.grad_logits = std::move(ssl.grad);
  return out;
}

Mat64 OneHotRows(std::span<const int> labels, std::size_t num_classes) {
  Mat64 out(labels.size(), num_classes);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= num_classes) {
      throw Error(ErrorCode::kInvalidTarget, "class id out of range");
    }
    out(i, static_cast<std::size_t>(labels[i])) = 1.0;
  }
  return out;
}

LossOut BootstrapLoss(const Mat64& logits, std::span<const int> ya,
                      std::span<const int> yb, std::span<const int> pred_a,
                      std::span<const int> pred_b,
                      std::span<const double> lambdas, double delta) {
  if (!(delta >= 0.0 && delta <= 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "delta must lie in [0, 1]");
  }
  const std::size_t c = logits.cols();
  auto blend = [&](std::span<const int> y, std::span<const int> pred) {
    Mat64 t = OneHotRows(y, c);
    const Mat64 p = OneHotRows(pred, c);
    for (std::size_t k = 0; k < t.size(); ++k) {
      t.values()[k] = delta * t.values()[k] + (1.0 - delta) * p.values()[k];
    }
    return t;
  };
  return SslLoss(logits, blend(ya, pred_a), blend(yb, pred_b), lambdas);
}

}  // namespace moit
