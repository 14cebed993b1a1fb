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

#include "moit/model.h"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>

namespace moit {

namespace {

Affine InitAffine(std::size_t in, std::size_t out, Rng& rng) {
  Affine a{Mat64(out, in), Vec64(out, 0.0)};
  const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
  for (double& w : a.weight.values()) w = rng.Uniform(-limit, limit);
  return a;
}

Affine ZeroAffine(const Affine& like) {
  return {Mat64(like.weight.rows(), like.weight.cols()),
          Vec64(like.bias.size(), 0.0)};
}

Vec64 Apply(const Affine& a, std::span<const double> x) {
  if (x.size() != a.in_dim()) {
    throw Error(ErrorCode::kDimMismatch,
                "affine input has " + std::to_string(x.size()) +
                    " entries, expected " + std::to_string(a.in_dim()));
  }
  Vec64 y(a.out_dim());
  for (std::size_t o = 0; o < y.size(); ++o) {
    const auto wr = a.weight.row(o);
    double s = a.bias[o];
    for (std::size_t k = 0; k < x.size(); ++k) s += wr[k] * x[k];
    y[o] = s;
  }
  return y;
}

// Accumulates dW += g x^T, db += g and returns W^T g.
Vec64 AffineBackward(const Affine& a, std::span<const double> x,
                     std::span<const double> g, Affine& grad) {
  Vec64 dx(a.in_dim(), 0.0);
  for (std::size_t o = 0; o < a.out_dim(); ++o) {
    const double go = g[o];
    if (go == 0.0) continue;
    grad.bias[o] += go;
    auto gw = grad.weight.row(o);
    const auto wr = a.weight.row(o);
    for (std::size_t k = 0; k < x.size(); ++k) {
      gw[k] += go * x[k];
      dx[k] += go * wr[k];
    }
  }
  return dx;
}

}  // namespace

ModelShape ModelParams::shape() const {
  ModelShape s;
  s.input_dim = static_cast<int>(input_dim());
  s.hidden.clear();
  for (std::size_t l = 0; l + 1 < encoder.size(); ++l) {
    s.hidden.push_back(static_cast<int>(encoder[l].out_dim()));
  }
  s.embed_dim = static_cast<int>(embed_dim());
  s.proj_dim = static_cast<int>(proj_dim());
  s.num_classes = static_cast<int>(num_classes());
  return s;
}

ModelParams InitParams(const ModelShape& shape, Rng& rng) {
  if (shape.input_dim <= 0 || shape.embed_dim <= 0 || shape.proj_dim <= 0 ||
      shape.num_classes <= 0 ||
      std::any_of(shape.hidden.begin(), shape.hidden.end(),
                  [](int h) { return h <= 0; })) {
    throw Error(ErrorCode::kInvalidArgument, "model dimensions must be positive");
  }
  ModelParams p;
  std::size_t in = static_cast<std::size_t>(shape.input_dim);
  for (int h : shape.hidden) {
    p.encoder.push_back(InitAffine(in, static_cast<std::size_t>(h), rng));
    in = static_cast<std::size_t>(h);
  }
  const auto embed = static_cast<std::size_t>(shape.embed_dim);
  p.encoder.push_back(InitAffine(in, embed, rng));
  p.projector =
      InitAffine(embed, static_cast<std::size_t>(shape.proj_dim), rng);
  p.classifier =
      InitAffine(embed, static_cast<std::size_t>(shape.num_classes), rng);
  return p;
}

ModelParams ZerosLike(const ModelParams& params) {
  ModelParams z;
  for (const auto& layer : params.encoder) z.encoder.push_back(ZeroAffine(layer));
  z.projector = ZeroAffine(params.projector);
  z.classifier = ZeroAffine(params.classifier);
  return z;
}

void ReinitClassifier(ModelParams& params, Rng& rng) {
  params.classifier =
      InitAffine(params.classifier.in_dim(), params.classifier.out_dim(), rng);
}

bool AllFinite(const ModelParams& params) {
  bool ok = true;
  params.ForEachTensor([&](const std::string&, const std::vector<double>& t,
                           bool) { ok = ok && AllFinite(std::span(t)); });
  return ok;
}

ForwardPass Forward(const ModelParams& params, std::span<const double> x) {
  ForwardPass fp;
  fp.act.emplace_back(x.begin(), x.end());
  for (std::size_t l = 0; l < params.encoder.size(); ++l) {
    fp.pre.push_back(Apply(params.encoder[l], fp.act.back()));
    if (l + 1 < params.encoder.size()) {
      Vec64 a = fp.pre.back();
      for (double& e : a) e = std::max(e, 0.0);
      fp.act.push_back(std::move(a));
    }
  }
  fp.v = fp.pre.back();
  fp.w = Apply(params.projector, fp.v);
  fp.w_norm = Norm2(fp.w);
  fp.z = L2Normalize(fp.w);
  fp.logits = Apply(params.classifier, fp.v);
  return fp;
}

std::vector<ForwardPass> ForwardBatch(const ModelParams& params,
                                      const Mat64& inputs) {
  std::vector<ForwardPass> out(inputs.rows());
  ParallelFor(inputs.rows(),
              [&](std::size_t i) { out[i] = Forward(params, inputs.row(i)); });
  return out;
}

namespace {

Vec64 EncodeV(const ModelParams& params, std::span<const double> x) {
  Vec64 a(x.begin(), x.end());
  for (std::size_t l = 0; l < params.encoder.size(); ++l) {
    a = Apply(params.encoder[l], a);
    if (l + 1 < params.encoder.size()) {
      for (double& e : a) e = std::max(e, 0.0);
    }
  }
  return a;
}

}  // namespace

Mat64 Embed(const ModelParams& params, const Mat64& inputs) {
  Mat64 out(inputs.rows(), params.proj_dim());
  ParallelFor(inputs.rows(), [&](std::size_t i) {
    out.SetRow(i, L2Normalize(Apply(params.projector,
                                    EncodeV(params, inputs.row(i)))));
  });
  return out;
}

Mat64 ClassLogits(const ModelParams& params, const Mat64& inputs) {
  Mat64 out(inputs.rows(), params.num_classes());
  ParallelFor(inputs.rows(), [&](std::size_t i) {
    out.SetRow(i, Apply(params.classifier, EncodeV(params, inputs.row(i))));
  });
  return out;
}

Vec64 L2NormalizeBackward(std::span<const double> z, double w_norm,
                          std::span<const double> grad_z) {
  const double zg = Dot(z, grad_z);
  Vec64 gw(z.size());
  for (std::size_t k = 0; k < z.size(); ++k) {
    gw[k] = (grad_z[k] - z[k] * zg) / w_norm;
  }
  return gw;
}

ParamGrads Backward(const ModelParams& params,
                    std::span<const ForwardPass> passes, const Mat64& grad_z,
                    const Mat64& grad_logits) {
  const bool has_z = !grad_z.empty();
  const bool has_logits = !grad_logits.empty();
  if ((has_z && (grad_z.rows() != passes.size() ||
                 grad_z.cols() != params.proj_dim())) ||
      (has_logits && (grad_logits.rows() != passes.size() ||
                      grad_logits.cols() != params.num_classes()))) {
    throw Error(ErrorCode::kDimMismatch, "upstream gradient shape mismatch");
  }
  ParamGrads g = ZerosLike(params);
  const std::size_t layers = params.encoder.size();
  for (std::size_t i = 0; i < passes.size(); ++i) {
    const ForwardPass& fp = passes[i];
    Vec64 dv(params.embed_dim(), 0.0);
    if (has_z) {
      const Vec64 dw = L2NormalizeBackward(fp.z, fp.w_norm, grad_z.row(i));
      const Vec64 d = AffineBackward(params.projector, fp.v, dw, g.projector);
      for (std::size_t k = 0; k < dv.size(); ++k) dv[k] += d[k];
    }
    if (has_logits) {
      const Vec64 d = AffineBackward(params.classifier, fp.v,
                                     grad_logits.row(i), g.classifier);
      for (std::size_t k = 0; k < dv.size(); ++k) dv[k] += d[k];
    }
    Vec64 dpre = std::move(dv);
    for (std::size_t l = layers; l-- > 0;) {
      Vec64 dact =
          AffineBackward(params.encoder[l], fp.act[l], dpre, g.encoder[l]);
      if (l == 0) break;
      const Vec64& pre = fp.pre[l - 1];
      for (std::size_t k = 0; k < dact.size(); ++k) {
        if (!(pre[k] > 0.0)) dact[k] = 0.0;
      }
      dpre = std::move(dact);
    }
  }
  return g;
}

OptState InitOptState(const ModelParams& params) {
  return OptState{ZerosLike(params), 0, 0.0};
}

void SgdUpdate(std::span<double> param, std::span<double> buf,
               std::span<const double> grad, double lr, double momentum,
               double weight_decay) {
  if (param.size() != buf.size() || param.size() != grad.size()) {
    throw Error(ErrorCode::kDimMismatch, "sgd shapes differ");
  }
  for (std::size_t k = 0; k < param.size(); ++k) {
    buf[k] = momentum * buf[k] + grad[k] + weight_decay * param[k];
    param[k] -= lr * buf[k];
  }
}

void SgdStep(ModelParams& params, OptState& state, const ParamGrads& grads,
             const SgdHyper& hyper, const TrainableMask& mask) {
  auto update = [&](Affine& p, Affine& buf, const Affine& g) {
    SgdUpdate(p.weight.values(), buf.weight.values(), g.weight.values(),
              hyper.lr, hyper.momentum, hyper.weight_decay);
    SgdUpdate(p.bias, buf.bias, g.bias, hyper.lr, hyper.momentum, 0.0);
  };
  if (mask.encoder) {
    for (std::size_t l = 0; l < params.encoder.size(); ++l) {
      update(params.encoder[l], state.momentum.encoder[l], grads.encoder[l]);
    }
  }
  if (mask.projector) {
    update(params.projector, state.momentum.projector, grads.projector);
  }
  if (mask.classifier) {
    update(params.classifier, state.momentum.classifier, grads.classifier);
  }
  ++state.step;
  state.lr = hyper.lr;
}

double LrAt(int epoch, const LrSchedule& schedule) {
  if (epoch < 0) throw Error(ErrorCode::kInvalidArgument, "negative epoch");
  double lr = schedule.initial;
  for (int m : schedule.milestones) {
    if (epoch >= m) lr *= schedule.factor;
  }
  if (schedule.extra_decay_epoch >= 0 && epoch >= schedule.extra_decay_epoch) {
    lr *= schedule.factor;
  }
  return lr;
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

constexpr char kMagic[8] = {'M', 'O', 'I', 'T', 'C', 'K', 'P', 'T'};

template <typename T>
void PutLE(std::ostream& out, T value) {
  static_assert(std::endian::native == std::endian::little,
                "checkpoint writer assumes a little-endian host");
  char buf[sizeof(T)];
  std::memcpy(buf, &value, sizeof(T));
  out.write(buf, sizeof(T));
}

template <typename T>
T GetLE(std::istream& in) {
  char buf[sizeof(T)];
  if (!in.read(buf, sizeof(T))) {
    throw Error(ErrorCode::kCheckpoint, "truncated checkpoint");
  }
  T value;
  std::memcpy(&value, buf, sizeof(T));
  return value;
}

struct TensorRef {
  std::string name;
  std::vector<std::uint64_t> dims;
  const std::vector<double>* values;
};

std::vector<TensorRef> ListTensors(const ModelParams& p) {
  std::vector<TensorRef> out;
  auto add = [&](const std::string& prefix, const Affine& a) {
    out.push_back({prefix + ".weight", {a.out_dim(), a.in_dim()},
                   &a.weight.values()});
    out.push_back({prefix + ".bias", {a.bias.size()}, &a.bias});
  };
  for (std::size_t l = 0; l < p.encoder.size(); ++l) {
    add("encoder." + std::to_string(l), p.encoder[l]);
  }
  add("projector", p.projector);
  add("classifier", p.classifier);
  return out;
}

struct RawTensor {
  std::vector<std::uint64_t> dims;
  std::vector<double> values;
};

Affine TakeAffine(std::map<std::string, RawTensor>& tensors,
                  const std::string& prefix) {
  auto w = tensors.find(prefix + ".weight");
  auto b = tensors.find(prefix + ".bias");
  if (w == tensors.end() || b == tensors.end()) {
    throw Error(ErrorCode::kCheckpoint, "missing tensor " + prefix);
  }
  if (w->second.dims.size() != 2 || b->second.dims.size() != 1 ||
      b->second.dims[0] != w->second.dims[0]) {
    throw Error(ErrorCode::kCheckpoint, "bad shape for " + prefix);
  }
  Affine a{Mat64(w->second.dims[0], w->second.dims[1],
                 std::move(w->second.values)),
           std::move(b->second.values)};
  tensors.erase(w);
  tensors.erase(b);
  return a;
}

}  // namespace

void WriteCheckpoint(const ModelParams& params, std::ostream& out) {
  out.write(kMagic, sizeof(kMagic));
  PutLE<std::uint32_t>(out, kCheckpointVersion);
  const auto tensors = ListTensors(params);
  PutLE<std::uint32_t>(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& t : tensors) {
    PutLE<std::uint32_t>(out, static_cast<std::uint32_t>(t.name.size()));
    out.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
    PutLE<std::uint32_t>(out, static_cast<std::uint32_t>(t.dims.size()));
    for (auto d : t.dims) PutLE<std::uint64_t>(out, d);
    for (double v : *t.values) PutLE<double>(out, v);
  }
}

ModelParams ReadCheckpoint(std::istream& in) {
  char magic[sizeof(kMagic)];
  if (!in.read(magic, sizeof(magic)) ||
      std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw Error(ErrorCode::kCheckpoint, "bad magic");
  }
  const auto version = GetLE<std::uint32_t>(in);
  if (version != kCheckpointVersion) {
    throw Error(ErrorCode::kCheckpoint,
                "unsupported version " + std::to_string(version));
  }
  const auto count = GetLE<std::uint32_t>(in);
  std::map<std::string, RawTensor> tensors;
  for (std::uint32_t t = 0; t < count; ++t) {
    const auto name_len = GetLE<std::uint32_t>(in);
    if (name_len > 4096) throw Error(ErrorCode::kCheckpoint, "name too long");
    std::string name(name_len, '\0');
    if (!in.read(name.data(), name_len)) {
      throw Error(ErrorCode::kCheckpoint, "truncated checkpoint");
    }
    RawTensor raw;
    const auto rank = GetLE<std::uint32_t>(in);
    if (rank == 0 || rank > 2) throw Error(ErrorCode::kCheckpoint, "bad rank");
    std::uint64_t n = 1;
    for (std::uint32_t r = 0; r < rank; ++r) {
      raw.dims.push_back(GetLE<std::uint64_t>(in));
      if (raw.dims.back() == 0 || raw.dims.back() > (1u << 24)) {
        throw Error(ErrorCode::kCheckpoint, "bad dimension");
      }
      n *= raw.dims.back();
    }
    raw.values.resize(n);
    for (auto& v : raw.values) v = GetLE<double>(in);
    tensors[name] = std::move(raw);
  }
  ModelParams p;
  for (std::size_t l = 0;; ++l) {
    const std::string prefix = "encoder." + std::to_string(l);
    if (!tensors.contains(prefix + ".weight")) break;
    p.encoder.push_back(TakeAffine(tensors, prefix));
  }
  if (p.encoder.empty()) throw Error(ErrorCode::kCheckpoint, "no encoder");
  p.projector = TakeAffine(tensors, "projector");
  p.classifier = TakeAffine(tensors, "classifier");
  if (!tensors.empty()) {
    throw Error(ErrorCode::kCheckpoint,
                "unexpected tensor " + tensors.begin()->first);
  }
  for (std::size_t l = 1; l < p.encoder.size(); ++l) {
    if (p.encoder[l].in_dim() != p.encoder[l - 1].out_dim()) {
      throw Error(ErrorCode::kCheckpoint, "encoder chain mismatch");
    }
  }
  if (p.projector.in_dim() != p.embed_dim() ||
      p.classifier.in_dim() != p.embed_dim()) {
    throw Error(ErrorCode::kCheckpoint, "head input mismatch");
  }
  if (!AllFinite(p)) throw Error(ErrorCode::kCheckpoint, "non-finite values");
  return p;
}

void SaveCheckpoint(const ModelParams& params, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot open " + path);
  WriteCheckpoint(params, out);
  if (!out) throw Error(ErrorCode::kIo, "write failed: " + path);
}

ModelParams LoadCheckpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kCheckpoint, "cannot open " + path);
  return ReadCheckpoint(in);
}

}  // namespace moit
