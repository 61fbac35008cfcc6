// Copyright 2026 The probekit Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//   http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Probe network: input affine -> ReLU -> hidden affine -> ReLU -> output
// affine, trained with softmax cross-entropy (classification) or mean squared
// error (regression) under Adam with a step-decayed learning rate.
//
// Batches are column-major: one column per sample.

#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "probekit/common.hpp"
#include "probekit/data_model.hpp"

namespace probekit {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Parameter-shaped bundle; reused for gradients and Adam moments.
struct ProbeParams {
  Matrix w1, w2, w3;
  Vector b1, b2, b3;

  static ProbeParams zeros_like(const ProbeParams& p) {
    return {Matrix::Zero(p.w1.rows(), p.w1.cols()), Matrix::Zero(p.w2.rows(), p.w2.cols()),
            Matrix::Zero(p.w3.rows(), p.w3.cols()), Vector::Zero(p.b1.size()),
            Vector::Zero(p.b2.size()), Vector::Zero(p.b3.size())};
  }

  template <typename Fn>
  void for_each(Fn&& fn) {
    fn(w1), fn(b1), fn(w2), fn(b2), fn(w3), fn(b3);
  }

  template <typename Fn>
  void for_each(Fn&& fn) const {
    fn(w1), fn(b1), fn(w2), fn(b2), fn(w3), fn(b3);
  }
};

using Gradients = ProbeParams;

struct MLPProbe {
  TaskKind kind = TaskKind::kClassification;
  ProbeParams params;
  std::optional<LabelSpace> labels;

  // Regression targets are z-scored with training statistics; predictions
  // are mapped back before they leave the probe.
  bool normalize_targets = false;
  double target_mean = 0.0;
  double target_std = 1.0;

  // Inputs are scaled to unit L2 norm before the first layer.
  bool unit_norm = false;

  std::size_t input_dim() const { return static_cast<std::size_t>(params.w1.cols()); }
  std::size_t hidden_dim() const { return static_cast<std::size_t>(params.w1.rows()); }
  std::size_t output_dim() const { return static_cast<std::size_t>(params.w3.rows()); }
};

inline constexpr std::size_t kDefaultHiddenDim = 256;

/// Weights uniform in +-sqrt(6 / (fan_in + fan_out)), biases zero.
inline MLPProbe init_probe(std::size_t input_dim, std::size_t hidden_dim, std::size_t output_dim,
                           TaskKind kind, std::uint64_t seed) {
  if (input_dim == 0 || hidden_dim == 0 || output_dim == 0)
    throw Error("init_probe: dimensions must be positive");
  if (kind == TaskKind::kRegression && output_dim != 1)
    throw Error("init_probe: regression probes have a single output");
  MLPProbe p;
  p.kind = kind;
  Rng rng(seed);
  auto layer = [&rng](std::size_t out, std::size_t in) {
    double limit = std::sqrt(6.0 / static_cast<double>(in + out));
    std::uniform_real_distribution<double> u(-limit, limit);
    Matrix w(out, in);
    for (Eigen::Index r = 0; r < w.rows(); ++r)
      for (Eigen::Index c = 0; c < w.cols(); ++c) w(r, c) = u(rng);
    return w;
  };
  p.params.w1 = layer(hidden_dim, input_dim);
  p.params.w2 = layer(hidden_dim, hidden_dim);
  p.params.w3 = layer(output_dim, hidden_dim);
  p.params.b1 = Vector::Zero(static_cast<Eigen::Index>(hidden_dim));
  p.params.b2 = Vector::Zero(static_cast<Eigen::Index>(hidden_dim));
  p.params.b3 = Vector::Zero(static_cast<Eigen::Index>(output_dim));
  return p;
}

// ---------------------------------------------------------------------------
// Forward / losses / backward

struct ForwardCache {
  Matrix z1, h1, z2, h2, out;
};

inline ForwardCache forward_cached(const ProbeParams& p, const Matrix& x) {
  if (x.rows() != p.w1.cols())
    throw Error("forward: input dim " + std::to_string(x.rows()) + " does not match probe dim " +
                std::to_string(p.w1.cols()));
  ForwardCache c;
  c.z1 = (p.w1 * x).colwise() + p.b1;
  c.h1 = c.z1.cwiseMax(0.0);
  c.z2 = (p.w2 * c.h1).colwise() + p.b2;
  c.h2 = c.z2.cwiseMax(0.0);
  c.out = (p.w3 * c.h2).colwise() + p.b3;
  return c;
}

/// Raw outputs (logits, or normalized regression scores), one column per input.
inline Matrix forward(const MLPProbe& probe, const Matrix& x) {
  return forward_cached(probe.params, x).out;
}

/// Mean of -log softmax(logits)[target] over the batch columns.
inline double cross_entropy(const Matrix& logits, std::span<const int> targets) {
  if (static_cast<std::size_t>(logits.cols()) != targets.size())
    throw Error("cross_entropy: batch size mismatch");
  double total = 0.0;
  for (Eigen::Index j = 0; j < logits.cols(); ++j) {
    int t = targets[static_cast<std::size_t>(j)];
    if (t < 0 || t >= logits.rows()) throw Error("cross_entropy: target out of range");
    double mx = logits.col(j).maxCoeff();
    double s = (logits.col(j).array() - mx).exp().sum();
    total += std::log(s) - (logits(t, j) - mx);
  }
  return total / static_cast<double>(logits.cols());
}

inline double mse(std::span<const double> pred, std::span<const double> target) {
  if (pred.size() != target.size()) throw Error("mse: length mismatch");
  if (pred.empty()) return 0.0;
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    double d = pred[i] - target[i];
    s += d * d;
  }
  return s / static_cast<double>(pred.size());
}

namespace detail {

inline Gradients backprop(const ProbeParams& p, const Matrix& x, const ForwardCache& c,
                          const Matrix& d_out) {
  Gradients g;
  g.w3 = d_out * c.h2.transpose();
  g.b3 = d_out.rowwise().sum();
  Matrix d2 = (p.w3.transpose() * d_out).array() * (c.z2.array() > 0.0).cast<double>();
  g.w2 = d2 * c.h1.transpose();
  g.b2 = d2.rowwise().sum();
  Matrix d1 = (p.w2.transpose() * d2).array() * (c.z1.array() > 0.0).cast<double>();
  g.w1 = d1 * x.transpose();
  g.b1 = d1.rowwise().sum();
  return g;
}

}  // namespace detail

struct LossAndGradients {
  double loss = 0.0;
  Gradients grads;
};

/// Exact gradients of the mean cross-entropy over the batch.
inline LossAndGradients backward(const MLPProbe& probe, const Matrix& x,
                                 std::span<const int> targets) {
  if (probe.kind != TaskKind::kClassification)
    throw Error("backward: class targets given to a regression probe");
  auto c = forward_cached(probe.params, x);
  const double b = static_cast<double>(x.cols());
  double loss = cross_entropy(c.out, targets);
  Matrix d_out(c.out.rows(), c.out.cols());
  for (Eigen::Index j = 0; j < c.out.cols(); ++j) {
    double mx = c.out.col(j).maxCoeff();
    Vector e = (c.out.col(j).array() - mx).exp();
    d_out.col(j) = e / e.sum();
    d_out(targets[static_cast<std::size_t>(j)], j) -= 1.0;
  }
  d_out /= b;
  return {loss, detail::backprop(probe.params, x, c, d_out)};
}

/// Exact gradients of the mean squared error over the batch.
inline LossAndGradients backward(const MLPProbe& probe, const Matrix& x,
                                 std::span<const double> targets) {
  if (probe.kind != TaskKind::kRegression)
    throw Error("backward: scalar targets given to a classification probe");
  auto c = forward_cached(probe.params, x);
  if (static_cast<std::size_t>(c.out.cols()) != targets.size())
    throw Error("backward: batch size mismatch");
  std::span<const double> pred(c.out.data(), targets.size());
  double loss = mse(pred, targets);
  Matrix d_out(1, c.out.cols());
  for (Eigen::Index j = 0; j < c.out.cols(); ++j)
    d_out(0, j) = 2.0 * (c.out(0, j) - targets[static_cast<std::size_t>(j)]) /
                  static_cast<double>(targets.size());
  return {loss, detail::backprop(probe.params, x, c, d_out)};
}

// ---------------------------------------------------------------------------
// Adam

struct AdamHyper {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  ProbeParams m, v;
  long long t = 0;
  AdamHyper hyper;

  static AdamState for_probe(const MLPProbe& p, AdamHyper hyper = {}) {
    return {ProbeParams::zeros_like(p.params), ProbeParams::zeros_like(p.params), 0, hyper};
  }
};

/// One bias-corrected Adam update with the state's current learning rate.
inline void adam_step(MLPProbe& probe, AdamState& state, const Gradients& grads) {
  state.t += 1;
  const auto& h = state.hyper;
  const double c1 = 1.0 - std::pow(h.beta1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(h.beta2, static_cast<double>(state.t));
  auto update = [&](auto& theta, auto& m, auto& v, const auto& g) {
    m = h.beta1 * m + (1.0 - h.beta1) * g;
    v.array() = h.beta2 * v.array() + (1.0 - h.beta2) * g.array().square();
    theta.array() -= h.lr * (m.array() / c1) / ((v.array() / c2).sqrt() + h.epsilon);
  };
  auto& p = probe.params;
  update(p.w1, state.m.w1, state.v.w1, grads.w1);
  update(p.b1, state.m.b1, state.v.b1, grads.b1);
  update(p.w2, state.m.w2, state.v.w2, grads.w2);
  update(p.b2, state.m.b2, state.v.b2, grads.b2);
  update(p.w3, state.m.w3, state.v.w3, grads.w3);
  update(p.b3, state.m.b3, state.v.b3, grads.b3);
}

// ---------------------------------------------------------------------------
// Training

struct TrainConfig {
  int epochs = 20;
  int batch_size = 32;
  double initial_lr = 1e-3;
  double decay_factor = 0.1;
  int decay_every = 8;
  std::uint64_t seed = 0;
  AdamHyper adam;  // lr field is overridden by the schedule
  bool normalize_targets = true;

  void validate() const {
    if (epochs < 1) throw Error("train: epochs must be >= 1");
    if (batch_size < 1) throw Error("train: batch_size must be >= 1");
    if (!(decay_factor > 0.0 && decay_factor <= 1.0))
      throw Error("train: decay factor must lie in (0, 1]");
    if (decay_every < 1) throw Error("train: decay period must be >= 1");
    if (!(initial_lr > 0.0)) throw Error("train: learning rate must be positive");
  }
};

/// Learning rate for 0-based epoch `e`.
inline double lr_at_epoch(const TrainConfig& cfg, int e) {
  return cfg.initial_lr * std::pow(cfg.decay_factor, e / cfg.decay_every);
}

struct TrainHistory {
  std::vector<double> loss;  // mean training loss per epoch
  std::vector<double> lr;    // learning rate used in each epoch
};

/// Column-major input matrix for a dataset (optionally unit-normed).
inline Matrix design_matrix(const ProbingDataset& ds, bool unit_norm = false) {
  Matrix x(static_cast<Eigen::Index>(ds.dim), static_cast<Eigen::Index>(ds.size()));
  for (std::size_t i = 0; i < ds.size(); ++i) {
    auto r = ds.row(i);
    auto col = x.col(static_cast<Eigen::Index>(i));
    for (std::size_t k = 0; k < ds.dim; ++k) col(static_cast<Eigen::Index>(k)) = r[k];
    if (unit_norm) {
      double n = col.norm();
      if (n > 0.0) col /= n;
    }
  }
  return x;
}

inline std::pair<MLPProbe, TrainHistory> train(MLPProbe probe, const ProbingDataset& ds,
                                               const TrainConfig& cfg) {
  cfg.validate();
  if (ds.size() == 0) throw Error("train: empty dataset");
  if (ds.kind != probe.kind) throw Error("train: dataset kind does not match probe kind");
  if (ds.dim != probe.input_dim()) throw Error("train: dataset dim does not match probe");

  const Matrix x = design_matrix(ds, probe.unit_norm);
  const std::size_t n = ds.size();

  std::vector<double> values = ds.values;
  if (probe.kind == TaskKind::kRegression) {
    probe.normalize_targets = cfg.normalize_targets;
    probe.target_mean = 0.0;
    probe.target_std = 1.0;
    if (cfg.normalize_targets) {
      double mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(n);
      double var = 0.0;
      for (double v : values) var += (v - mean) * (v - mean);
      var /= static_cast<double>(n);
      double sd = std::sqrt(var);
      probe.target_mean = mean;
      probe.target_std = sd > 0.0 ? sd : 1.0;
      for (double& v : values) v = (v - probe.target_mean) / probe.target_std;
    }
  } else {
    for (int c : ds.classes)
      if (c < 0 || static_cast<std::size_t>(c) >= probe.output_dim())
        throw Error("train: class target out of range");
  }

  AdamState state = AdamState::for_probe(probe, cfg.adam);
  TrainHistory hist;
  std::vector<std::size_t> order(n);
  std::vector<int> batch_classes;
  std::vector<double> batch_values;
  const std::size_t bs = static_cast<std::size_t>(cfg.batch_size);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    state.hyper.lr = lr_at_epoch(cfg, epoch);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(epoch)));
    std::shuffle(order.begin(), order.end(), rng);

    double loss_sum = 0.0;
    for (std::size_t start = 0; start < n; start += bs) {
      std::size_t len = std::min(bs, n - start);
      Matrix xb(x.rows(), static_cast<Eigen::Index>(len));
      batch_classes.clear();
      batch_values.clear();
      for (std::size_t j = 0; j < len; ++j) {
        std::size_t i = order[start + j];
        xb.col(static_cast<Eigen::Index>(j)) = x.col(static_cast<Eigen::Index>(i));
        if (probe.kind == TaskKind::kClassification)
          batch_classes.push_back(ds.classes[i]);
        else
          batch_values.push_back(values[i]);
      }
      auto lg = probe.kind == TaskKind::kClassification ? backward(probe, xb, batch_classes)
                                                        : backward(probe, xb, batch_values);
      adam_step(probe, state, lg.grads);
      loss_sum += lg.loss * static_cast<double>(len);
    }
    hist.loss.push_back(loss_sum / static_cast<double>(n));
    hist.lr.push_back(state.hyper.lr);
  }
  return {std::move(probe), std::move(hist)};
}

// ---------------------------------------------------------------------------
// Prediction

/// Index of the largest entry; ties resolve to the lowest index.
inline int argmax(std::span<const double> logits) {
  if (logits.empty()) throw Error("argmax: empty input");
  std::size_t best = 0;
  for (std::size_t k = 1; k < logits.size(); ++k)
    if (logits[k] > logits[best]) best = k;
  return static_cast<int>(best);
}

inline std::vector<int> predict_classes(const MLPProbe& probe, const Matrix& x) {
  if (probe.kind != TaskKind::kClassification) throw Error("predict_classes: regression probe");
  Matrix out = forward(probe, x);
  std::vector<int> pred(static_cast<std::size_t>(out.cols()));
  for (Eigen::Index j = 0; j < out.cols(); ++j)
    pred[static_cast<std::size_t>(j)] =
        argmax(std::span<const double>(out.col(j).data(), static_cast<std::size_t>(out.rows())));
  return pred;
}

/// De-normalized regression outputs.
inline std::vector<double> predict_values(const MLPProbe& probe, const Matrix& x) {
  if (probe.kind != TaskKind::kRegression) throw Error("predict_values: classification probe");
  Matrix out = forward(probe, x);
  std::vector<double> pred(static_cast<std::size_t>(out.cols()));
  for (Eigen::Index j = 0; j < out.cols(); ++j) {
    double y = out(0, j);
    if (probe.normalize_targets) y = y * probe.target_std + probe.target_mean;
    pred[static_cast<std::size_t>(j)] = y;
  }
  return pred;
}

inline std::vector<int> predict_classes(const MLPProbe& probe, const ProbingDataset& ds) {
  return predict_classes(probe, design_matrix(ds, probe.unit_norm));
}

inline std::vector<double> predict_values(const MLPProbe& probe, const ProbingDataset& ds) {
  return predict_values(probe, design_matrix(ds, probe.unit_norm));
}

// ---------------------------------------------------------------------------
// PRB1 serialization

inline std::string serialize_probe(const MLPProbe& p) {
  std::string out = "PRB1";
  le::put_u32(out, static_cast<std::uint32_t>(p.input_dim()));
  le::put_u32(out, static_cast<std::uint32_t>(p.hidden_dim()));
  le::put_u32(out, static_cast<std::uint32_t>(p.output_dim()));
  out.push_back(p.kind == TaskKind::kClassification ? 0 : 1);
  out.push_back(p.unit_norm ? 1 : 0);
  auto put_str = [&out](const std::string& s) {
    if (s.size() > 0xffff) throw Error("serialize_probe: string too long");
    le::put_u16(out, static_cast<std::uint16_t>(s.size()));
    out += s;
  };
  out.push_back(p.labels ? 1 : 0);
  if (p.labels) {
    put_str(p.labels->trait_name());
    le::put_u32(out, static_cast<std::uint32_t>(p.labels->size()));
    for (const auto& c : p.labels->classes()) put_str(c);
  }
  out.push_back(p.normalize_targets ? 1 : 0);
  le::put_f64(out, p.target_mean);
  le::put_f64(out, p.target_std);
  // Row-major weights, layer by layer.
  auto put_mat = [&out](const Matrix& m) {
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c) le::put_f32(out, static_cast<float>(m(r, c)));
  };
  auto put_vec = [&out](const Vector& v) {
    for (Eigen::Index i = 0; i < v.size(); ++i) le::put_f32(out, static_cast<float>(v(i)));
  };
  put_mat(p.params.w1);
  put_vec(p.params.b1);
  put_mat(p.params.w2);
  put_vec(p.params.b2);
  put_mat(p.params.w3);
  put_vec(p.params.b3);
  return out;
}

inline MLPProbe parse_probe(std::string_view bytes, const std::string& what = "probe") {
  le::Reader in(bytes, what);
  in.expect_magic("PRB1");
  auto in_dim = in.u32(), hid = in.u32(), out_dim = in.u32();
  if (!in_dim || !hid || !out_dim) throw Error(what + ": zero dimension");
  MLPProbe p;
  std::uint8_t kind = in.u8();
  if (kind > 1) throw Error(what + ": bad task kind");
  p.kind = kind == 0 ? TaskKind::kClassification : TaskKind::kRegression;
  p.unit_norm = in.u8() != 0;
  auto get_str = [&in]() { return in.bytes(in.u16()); };
  if (in.u8()) {
    std::string trait = get_str();
    std::uint32_t k = in.u32();
    std::vector<std::string> classes;
    for (std::uint32_t i = 0; i < k; ++i) classes.push_back(get_str());
    p.labels = LabelSpace(trait, std::move(classes));
  }
  p.normalize_targets = in.u8() != 0;
  p.target_mean = in.f64();
  p.target_std = in.f64();
  auto get_mat = [&in](std::uint32_t rows, std::uint32_t cols) {
    Matrix m(rows, cols);
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = in.f32();
    return m;
  };
  auto get_vec = [&in](std::uint32_t n) {
    Vector v(n);
    for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = in.f32();
    return v;
  };
  p.params.w1 = get_mat(hid, in_dim);
  p.params.b1 = get_vec(hid);
  p.params.w2 = get_mat(hid, hid);
  p.params.b2 = get_vec(hid);
  p.params.w3 = get_mat(out_dim, hid);
  p.params.b3 = get_vec(out_dim);
  if (!in.at_end()) throw Error(what + ": trailing bytes");
  if (p.kind == TaskKind::kRegression && out_dim != 1) throw Error(what + ": regression probe with " + std::to_string(out_dim) + " outputs");
  if (p.labels && p.labels->size() != out_dim) throw Error(what + ": label count does not match outputs");
  return p;
}

inline void save_probe(const std::filesystem::path& path, const MLPProbe& p) {
  write_file_atomic(path, serialize_probe(p));
}

inline MLPProbe load_probe(const std::filesystem::path& path) {
  return parse_probe(read_file(path), path.string());
}

}  // namespace probekit
