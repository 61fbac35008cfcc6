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

#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <span>
#include <vector>

#include "probekit/common.hpp"

namespace probekit {

struct ClassificationResult {
  double accuracy = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  std::size_t n = 0;
  std::vector<std::vector<std::size_t>> confusion;  // [label][prediction]
};

struct RegressionResult {
  double r_squared = 0.0;
  double p_value = 1.0;
  std::size_t n = 0;
};

struct EERResult {
  double eer = 0.0;
  double threshold = 0.0;
};

inline double accuracy(std::span<const int> preds, std::span<const int> labels) {
  if (preds.size() != labels.size()) throw Error("accuracy: length mismatch");
  if (preds.empty()) throw Error("accuracy: empty input");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) hits += preds[i] == labels[i];
  return static_cast<double>(hits) / static_cast<double>(preds.size());
}

inline std::vector<std::vector<std::size_t>> confusion_matrix(std::span<const int> preds,
                                                              std::span<const int> labels,
                                                              std::size_t num_classes) {
  if (preds.size() != labels.size()) throw Error("confusion_matrix: length mismatch");
  std::vector<std::vector<std::size_t>> m(num_classes, std::vector<std::size_t>(num_classes, 0));
  for (std::size_t i = 0; i < preds.size(); ++i) {
    auto l = static_cast<std::size_t>(labels[i]), p = static_cast<std::size_t>(preds[i]);
    if (labels[i] < 0 || preds[i] < 0 || l >= num_classes || p >= num_classes)
      throw Error("confusion_matrix: class index out of range");
    ++m[l][p];
  }
  return m;
}

/// Linear-interpolated quantile of sorted data (Hyndman-Fan type 7).
inline double quantile_sorted(std::span<const double> sorted, double q) {
  if (sorted.empty()) throw Error("quantile: empty input");
  double pos = q * static_cast<double>(sorted.size() - 1);
  auto lo = static_cast<std::size_t>(std::floor(pos));
  std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

/// Percentile bootstrap interval for accuracy. Replicate b draws from its own
/// stream derived from (seed, b), so replicates are order-independent.
inline std::pair<double, double> bootstrap_ci(std::span<const int> preds,
                                              std::span<const int> labels, int n_boot,
                                              double alpha, std::uint64_t seed) {
  if (preds.size() != labels.size()) throw Error("bootstrap_ci: length mismatch");
  if (preds.size() < 2) throw Error("bootstrap_ci: need at least 2 samples");
  if (n_boot < 100) throw Error("bootstrap_ci: n_boot must be >= 100");
  if (!(alpha > 0.0 && alpha < 1.0)) throw Error("bootstrap_ci: alpha must lie in (0, 1)");
  const std::size_t n = preds.size();
  std::vector<unsigned char> hit(n);
  for (std::size_t i = 0; i < n; ++i) hit[i] = preds[i] == labels[i];
  std::vector<double> stats(static_cast<std::size_t>(n_boot));
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  for (int b = 0; b < n_boot; ++b) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(b)));
    std::size_t hits = 0;
    for (std::size_t i = 0; i < n; ++i) hits += hit[pick(rng)];
    stats[static_cast<std::size_t>(b)] = static_cast<double>(hits) / static_cast<double>(n);
  }
  std::sort(stats.begin(), stats.end());
  return {quantile_sorted(stats, alpha / 2.0), quantile_sorted(stats, 1.0 - alpha / 2.0)};
}

inline double r_squared(std::span<const double> preds, std::span<const double> targets) {
  if (preds.size() != targets.size()) throw Error("r_squared: length mismatch");
  if (targets.size() < 2) throw Error("r_squared: need at least 2 samples");
  double mean = std::accumulate(targets.begin(), targets.end(), 0.0) /
                static_cast<double>(targets.size());
  double ss_tot = 0.0, ss_res = 0.0;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    ss_tot += (targets[i] - mean) * (targets[i] - mean);
    ss_res += (targets[i] - preds[i]) * (targets[i] - preds[i]);
  }
  if (ss_tot == 0.0) throw Error("undefined R²: targets have zero variance");
  return 1.0 - ss_res / ss_tot;
}

/// p = (1 + #{permuted R² >= observed}) / (n_perm + 1), permuting targets.
inline double permutation_p_value(std::span<const double> preds, std::span<const double> targets,
                                  int n_perm, std::uint64_t seed) {
  if (targets.size() < 3) throw Error("permutation_p_value: need at least 3 samples");
  if (n_perm < 100) throw Error("permutation_p_value: n_perm must be >= 100");
  const double observed = r_squared(preds, targets);
  std::vector<double> perm(targets.begin(), targets.end());
  std::size_t exceed = 0;
  for (int k = 0; k < n_perm; ++k) {
    std::copy(targets.begin(), targets.end(), perm.begin());
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(k)));
    std::shuffle(perm.begin(), perm.end(), rng);
    if (r_squared(preds, perm) >= observed) ++exceed;
  }
  return static_cast<double>(1 + exceed) / static_cast<double>(n_perm + 1);
}

/// Equal error rate with higher scores meaning bonafide. FAR(t) counts
/// negatives >= t, FRR(t) positives < t; the crossing between adjacent
/// thresholds is linearly interpolated, earliest crossing wins.
inline EERResult eer(std::span<const double> positives, std::span<const double> negatives) {
  if (positives.empty() || negatives.empty()) throw Error("eer: empty class");
  std::vector<double> pos(positives.begin(), positives.end());
  std::vector<double> neg(negatives.begin(), negatives.end());
  std::sort(pos.begin(), pos.end());
  std::sort(neg.begin(), neg.end());
  std::vector<double> thresholds;
  thresholds.reserve(pos.size() + neg.size());
  std::merge(pos.begin(), pos.end(), neg.begin(), neg.end(), std::back_inserter(thresholds));
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());

  const double np = static_cast<double>(pos.size()), nn = static_cast<double>(neg.size());
  std::size_t ip = 0, in = 0;  // counts of positives / negatives strictly below t
  double prev_far = 1.0, prev_frr = 0.0, prev_t = thresholds.front();
  for (std::size_t k = 0; k <= thresholds.size(); ++k) {
    double far, frr, t;
    if (k < thresholds.size()) {
      t = thresholds[k];
      while (ip < pos.size() && pos[ip] < t) ++ip;
      while (in < neg.size() && neg[in] < t) ++in;
      far = (nn - static_cast<double>(in)) / nn;
      frr = static_cast<double>(ip) / np;
    } else {
      t = std::numeric_limits<double>::infinity();
      far = 0.0;
      frr = 1.0;
    }
    double d = far - frr;
    if (d == 0.0) return {far, std::isfinite(t) ? t : thresholds.back()};
    if (d < 0.0) {
      // Never taken at k == 0: at the lowest threshold FAR is 1 and FRR is 0.
      double d_prev = prev_far - prev_frr;
      double lambda = d_prev / (d_prev - d);
      double e = prev_far + lambda * (far - prev_far);
      double thr = std::isfinite(t) ? prev_t + lambda * (t - prev_t) : prev_t;
      return {e, thr};
    }
    prev_far = far;
    prev_frr = frr;
    prev_t = t;
  }
  return {0.5, thresholds.back()};  // unreachable
}

}  // namespace probekit
