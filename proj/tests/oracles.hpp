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

// Slow, direct reference implementations used to check the library.

#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <set>
#include <vector>

#include "probekit/probe_net.hpp"

namespace probekit::oracle {

/// Plain-loop forward pass of one input column; no Eigen expressions.
inline std::vector<double> forward_naive(const ProbeParams& p, const Matrix& x, Eigen::Index col) {
  auto layer = [](const Matrix& w, const Vector& b, const std::vector<double>& in, bool relu) {
    std::vector<double> out(static_cast<std::size_t>(w.rows()));
    for (Eigen::Index r = 0; r < w.rows(); ++r) {
      double s = b(r);
      for (Eigen::Index c = 0; c < w.cols(); ++c) s += w(r, c) * in[static_cast<std::size_t>(c)];
      out[static_cast<std::size_t>(r)] = relu ? std::max(0.0, s) : s;
    }
    return out;
  };
  std::vector<double> in(static_cast<std::size_t>(x.rows()));
  for (Eigen::Index k = 0; k < x.rows(); ++k) in[static_cast<std::size_t>(k)] = x(k, col);
  return layer(p.w3, p.b3, layer(p.w2, p.b2, layer(p.w1, p.b1, in, true), true), false);
}

inline double ce_loss_naive(const ProbeParams& p, const Matrix& x, const std::vector<int>& t) {
  double total = 0.0;
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    auto z = forward_naive(p, x, j);
    double mx = *std::max_element(z.begin(), z.end());
    double s = 0.0;
    for (double v : z) s += std::exp(v - mx);
    total += -(z[static_cast<std::size_t>(t[static_cast<std::size_t>(j)])] - mx - std::log(s));
  }
  return total / static_cast<double>(x.cols());
}

inline double mse_loss_naive(const ProbeParams& p, const Matrix& x, const std::vector<double>& t) {
  double total = 0.0;
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    double d = forward_naive(p, x, j)[0] - t[static_cast<std::size_t>(j)];
    total += d * d;
  }
  return total / static_cast<double>(x.cols());
}

/// Central finite differences of `loss(params)` for every parameter entry,
/// visited in the order w1, b1, w2, b2, w3, b3 (column-major within each).
template <typename Loss>
std::vector<double> numeric_gradient(ProbeParams p, Loss&& loss, double step) {
  std::vector<double> out;
  auto visit = [&](auto& m) {
    for (Eigen::Index i = 0; i < m.size(); ++i) {
      double keep = m.data()[i];
      m.data()[i] = keep + step;
      double up = loss(p);
      m.data()[i] = keep - step;
      double down = loss(p);
      m.data()[i] = keep;
      out.push_back((up - down) / (2.0 * step));
    }
  };
  visit(p.w1), visit(p.b1), visit(p.w2), visit(p.b2), visit(p.w3), visit(p.b3);
  return out;
}

inline std::vector<double> flatten(const ProbeParams& g) {
  std::vector<double> out;
  g.for_each([&](const auto& m) { out.insert(out.end(), m.data(), m.data() + m.size()); });
  return out;
}

/// Largest |a - n| / max(|a|, |n|, floor) over all coordinates.
inline double max_relative_error(const std::vector<double>& a, const std::vector<double>& n, double floor) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    worst = std::max(worst, std::abs(a[i] - n[i]) / std::max({std::abs(a[i]), std::abs(n[i]), floor}));
  return worst;
}

struct GradCheck {
  double ce = 0.0;
  double mse = 0.0;
};

/// Gradient check on one random small probe (dims <= 8, batch <= 4) for
/// both losses.
inline GradCheck gradient_check(std::uint64_t seed, double step = 1e-5, double floor = 1e-6) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> dim(1, 8), batch(1, 4);
  std::normal_distribution<double> g(0.0, 1.0);
  const int in = dim(rng), hidden = dim(rng), k = std::max(2, dim(rng)), b = batch(rng);
  Matrix x(in, b);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = g(rng);
  auto randomize_biases = [&](MLPProbe& p) {
    p.params.for_each([&](auto& m) {
      if (m.cols() == 1)
        for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = 0.1 * g(rng);
    });
  };

  GradCheck out;
  MLPProbe cls = init_probe(in, hidden, k, TaskKind::kClassification, rng());
  randomize_biases(cls);
  std::vector<int> ct(b);
  std::uniform_int_distribution<int> cls_dist(0, k - 1);
  for (auto& t : ct) t = cls_dist(rng);
  auto analytic = flatten(backward(cls, x, ct).grads);
  auto numeric = numeric_gradient(cls.params, [&](const ProbeParams& p) { return ce_loss_naive(p, x, ct); }, step);
  out.ce = max_relative_error(analytic, numeric, floor);

  MLPProbe reg = init_probe(in, hidden, 1, TaskKind::kRegression, rng());
  randomize_biases(reg);
  std::vector<double> rt(b);
  for (auto& t : rt) t = g(rng);
  analytic = flatten(backward(reg, x, rt).grads);
  numeric = numeric_gradient(reg.params, [&](const ProbeParams& p) { return mse_loss_naive(p, x, rt); }, step);
  out.mse = max_relative_error(analytic, numeric, floor);
  return out;
}

/// EER by listing every operating point (each distinct score and +inf as a
/// threshold) with direct counting, then interpolating at the first point
/// where FAR no longer exceeds FRR.
inline double eer_brute_force(const std::vector<double>& pos, const std::vector<double>& neg) {
  std::set<double> uniq(pos.begin(), pos.end());
  uniq.insert(neg.begin(), neg.end());
  std::vector<double> ts(uniq.begin(), uniq.end());
  ts.push_back(std::numeric_limits<double>::infinity());
  std::vector<double> far, frr;
  for (double t : ts) {
    double fa = 0, fr = 0;
    for (double s : neg) fa += s >= t;
    for (double s : pos) fr += s < t;
    far.push_back(fa / static_cast<double>(neg.size()));
    frr.push_back(fr / static_cast<double>(pos.size()));
  }
  for (std::size_t k = 0; k < ts.size(); ++k) {
    if (far[k] == frr[k]) return far[k];
    if (far[k] < frr[k]) {
      double a0 = far[k - 1] - frr[k - 1], a1 = far[k] - frr[k];
      double lambda = a0 / (a0 - a1);
      return far[k - 1] + lambda * (far[k] - far[k - 1]);
    }
  }
  return 0.5;
}

/// One bias-corrected Adam step on a scalar.
inline double adam_scalar_step(double theta, double grad, double lr, double b1 = 0.9, double b2 = 0.999,
                               double eps = 1e-8) {
  double m = (1 - b1) * grad, v = (1 - b2) * grad * grad;
  double mh = m / (1 - b1), vh = v / (1 - b2);
  return theta - lr * mh / (std::sqrt(vh) + eps);
}

}  // namespace probekit::oracle
