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

// Speed perturbation (tempo and pitch scaled together) and the EER-vs-rate
// sweep over externally produced countermeasure score files.

#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <numbers>
#include <set>
#include <string>
#include <unordered_set>
#include <vector>

#include "probekit/audio.hpp"
#include "probekit/common.hpp"
#include "probekit/metrics.hpp"

namespace probekit {

/// Windowed-sinc fractional-delay filter bank: `kTaps` taps per phase,
/// `kPhases` + 1 tabulated phases, linear interpolation between phases.
class SincResampler {
 public:
  static constexpr int kTaps = 64;
  static constexpr int kHalf = kTaps / 2;
  static constexpr int kPhases = 1024;

  explicit SincResampler(double cutoff, double kaiser_beta = 8.0) : cutoff_(cutoff) {
    table_.resize(static_cast<std::size_t>(kPhases + 1) * kTaps);
    const double i0_beta = std::cyl_bessel_i(0.0, kaiser_beta);
    for (int p = 0; p <= kPhases; ++p) {
      double frac = static_cast<double>(p) / kPhases;
      for (int k = 0; k < kTaps; ++k) {
        // Tap k reads input index floor(t) + k - kHalf + 1.
        double x = static_cast<double>(k - kHalf + 1) - frac;
        double arg = cutoff * x;
        double sinc = arg == 0.0 ? 1.0 : std::sin(std::numbers::pi * arg) / (std::numbers::pi * arg);
        double r = x / kHalf;
        double win = std::abs(r) >= 1.0 ? 0.0
                                        : std::cyl_bessel_i(0.0, kaiser_beta * std::sqrt(1.0 - r * r)) / i0_beta;
        table_[static_cast<std::size_t>(p) * kTaps + k] = cutoff * sinc * win;
      }
    }
  }

  /// Band-limited value of `x` at fractional input position `t`.
  double sample(const std::vector<double>& x, double t) const {
    const double base = std::floor(t);
    const double frac = t - base;
    const double pos = frac * kPhases;
    const int p = std::min(static_cast<int>(pos), kPhases - 1);
    const double mix = pos - p;
    const double* h0 = table_.data() + static_cast<std::size_t>(p) * kTaps;
    const double* h1 = h0 + kTaps;
    const auto first = static_cast<long long>(base) - kHalf + 1;
    const auto n = static_cast<long long>(x.size());
    double acc0 = 0.0, acc1 = 0.0;
    for (int k = 0; k < kTaps; ++k) {
      long long i = first + k;
      if (i < 0 || i >= n) continue;
      acc0 += h0[k] * x[static_cast<std::size_t>(i)];
      acc1 += h1[k] * x[static_cast<std::size_t>(i)];
    }
    return acc0 + mix * (acc1 - acc0);
  }

  double cutoff() const { return cutoff_; }

 private:
  double cutoff_;
  std::vector<double> table_;
};

inline double resampler_cutoff(double rate) { return std::min(1.0, 1.0 / rate); }

/// Resamples by 1/rate and keeps the original sample rate, so duration scales
/// by 1/rate and pitch by rate. Rate 1 returns the input unchanged. `rs` must
/// be built with `resampler_cutoff(rate)`.
inline Waveform speed_perturb(const Waveform& w, double rate, const SincResampler& rs) {
  if (!(rate >= 0.5 && rate <= 2.0)) throw Error("speed_perturb: rate must lie in [0.5, 2.0]");
  if (rate == 1.0) return w;
  if (rs.cutoff() != resampler_cutoff(rate)) throw Error("speed_perturb: resampler built for another rate");
  const auto out_len = static_cast<std::size_t>(std::llround(static_cast<double>(w.size()) / rate));
  Waveform out;
  out.sample_rate = w.sample_rate;
  out.samples.resize(out_len);
  for (std::size_t j = 0; j < out_len; ++j) out.samples[j] = rs.sample(w.samples, static_cast<double>(j) * rate);
  return out;
}

/// Same, building the filter on the fly.
inline Waveform speed_perturb(const Waveform& w, double rate) {
  if (!(rate >= 0.5 && rate <= 2.0)) throw Error("speed_perturb: rate must lie in [0.5, 2.0]");
  if (rate == 1.0) return w;
  return speed_perturb(w, rate, SincResampler(resampler_cutoff(rate)));
}

// ---------------------------------------------------------------------------
// Score files: "utt_id score label", label in {bonafide, spoof}

struct ScoreRow {
  std::string utt_id;
  double score = 0.0;
  bool is_bonafide = false;
};

using ScoreFile = std::vector<ScoreRow>;

inline ScoreFile parse_scores(std::string_view text, const std::string& what = "scores") {
  ScoreFile rows;
  std::unordered_set<std::string> seen;
  std::size_t line = 0, start = 0;
  while (start < text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    auto raw = text.substr(start, end - start);
    start = end + 1;
    ++line;
    auto tok = split_whitespace(raw);
    if (tok.empty()) continue;
    auto fail = [&](const std::string& msg) {
      return Error(what + ": line " + std::to_string(line) + ": " + msg);
    };
    if (tok.size() != 3) throw fail("expected 'utt_id score label'");
    ScoreRow r;
    r.utt_id = tok[0];
    if (!parse_double(tok[1], &r.score) || !std::isfinite(r.score)) throw fail("bad score '" + tok[1] + "'");
    if (tok[2] == "bonafide")
      r.is_bonafide = true;
    else if (tok[2] == "spoof")
      r.is_bonafide = false;
    else
      throw fail("label must be 'bonafide' or 'spoof', got '" + tok[2] + "'");
    if (!seen.insert(r.utt_id).second) throw fail("duplicate utt_id '" + r.utt_id + "'");
    rows.push_back(std::move(r));
  }
  return rows;
}

inline std::string serialize_scores(const ScoreFile& rows) {
  std::string out;
  for (const auto& r : rows)
    out += r.utt_id + " " + format_double(r.score) + " " + (r.is_bonafide ? "bonafide" : "spoof") + "\n";
  return out;
}

inline ScoreFile load_scores(const std::filesystem::path& path) {
  return parse_scores(read_file(path), path.string());
}

inline void save_scores(const std::filesystem::path& path, const ScoreFile& rows) {
  write_file_atomic(path, serialize_scores(rows));
}

inline EERResult score_eer(const ScoreFile& rows, const std::string& what = "scores") {
  std::vector<double> pos, neg;
  for (const auto& r : rows) (r.is_bonafide ? pos : neg).push_back(r.score);
  if (pos.empty() || neg.empty()) throw Error(what + ": missing class (need bonafide and spoof rows)");
  return eer(pos, neg);
}

// ---------------------------------------------------------------------------
// Sweep

inline const std::vector<double>& default_perturb_rates() {
  static const std::vector<double> rates = {0.8, 0.9, 1.0, 1.1, 1.2};
  return rates;
}

struct PerturbSweepConfig {
  std::vector<double> rates = default_perturb_rates();
  std::map<double, std::filesystem::path> score_files;

  void validate() const {
    std::set<double> distinct(rates.begin(), rates.end());
    if (distinct.size() != rates.size()) throw Error("sweep: rates must be distinct");
    if (!distinct.count(1.0)) throw Error("sweep: rate 1.0 (baseline) must be included");
    for (double r : rates)
      if (!score_files.count(r)) throw Error("sweep: missing score file for rate " + format_double(r));
  }
};

/// Rate -> EER, one entry per declared rate.
inline std::map<double, EERResult> run_sweep(const PerturbSweepConfig& cfg) {
  cfg.validate();
  std::map<double, EERResult> out;
  for (double r : cfg.rates) {
    const auto& path = cfg.score_files.at(r);
    out[r] = score_eer(load_scores(path), path.string());
  }
  return out;
}

inline std::string serialize_sweep_table(const std::map<double, EERResult>& table) {
  std::string out = "rate,eer,threshold\n";
  for (const auto& [rate, res] : table)
    out += format_double(rate) + "," + format_double(res.eer) + "," + format_double(res.threshold) + "\n";
  return out;
}

}  // namespace probekit
