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

// Gender-wise comparison of bonafide-to-spoof distances at two levels of a
// countermeasure: frame-level spectra (Itakura-Saito) and utterance
// embeddings (1 - cosine).

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "probekit/common.hpp"
#include "probekit/csv.hpp"
#include "probekit/data_model.hpp"
#include "probekit/metrics.hpp"
#include "probekit/trait_extract.hpp"

namespace probekit {

/// Itakura-Saito divergence summed over all frames and bins, divided by the
/// frame count. D(P, Q) != D(Q, P) in general.
inline double itakura_saito(const SpectralFrames& p, const SpectralFrames& q) {
  if (p.num_frames != q.num_frames || p.num_bins != q.num_bins)
    throw Error("itakura_saito: shape mismatch (" + std::to_string(p.num_frames) + "x" +
                std::to_string(p.num_bins) + " vs " + std::to_string(q.num_frames) + "x" +
                std::to_string(q.num_bins) + ")");
  if (p.num_frames == 0) throw Error("itakura_saito: no frames");
  double sum = 0.0;
  for (std::size_t i = 0; i < p.data.size(); ++i) {
    double a = p.data[i], b = q.data[i];
    if (!(a > 0.0) || !(b > 0.0)) throw Error("itakura_saito: non-positive entry");
    double ratio = a / b;
    sum += ratio - std::log(ratio) - 1.0;
  }
  return sum / static_cast<double>(p.num_frames);
}

inline double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw Error("cosine_similarity: dim mismatch");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) throw Error("cosine_similarity: zero vector");
  return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

enum class Representation { kEncoderSpectral, kEmbedding };

inline const char* to_string(Representation r) {
  return r == Representation::kEncoderSpectral ? "encoder_spectral" : "embedding";
}

inline Representation parse_representation(std::string_view s) {
  if (s == "encoder_spectral") return Representation::kEncoderSpectral;
  if (s == "embedding") return Representation::kEmbedding;
  throw Error("unknown representation '" + std::string(s) + "'");
}

struct PairedDistanceRecord {
  std::string bonafide_utt;
  std::string speaker_id;
  Gender gender = Gender::kFemale;
  Representation representation = Representation::kEmbedding;
  double mean_distance = 0.0;
};

struct PairingResult {
  std::vector<PairedDistanceRecord> records;
  std::size_t skipped = 0;  // bonafide utterances whose speaker has no spoofs
};

/// For each bonafide utterance, the mean distance to every spoofed utterance
/// of the same speaker. `distance(bonafide_utt, spoof_utt)`.
inline PairingResult pair_bonafide_spoof(
    const Manifest& m, Representation kind,
    const std::function<double(const std::string&, const std::string&)>& distance) {
  std::map<std::string, std::vector<std::string>> spoofs;
  for (const auto& r : m.rows)
    if (!r.is_bonafide) spoofs[r.speaker_id].push_back(r.utt_id);
  PairingResult out;
  for (const auto& r : m.rows) {
    if (!r.is_bonafide) continue;
    auto it = spoofs.find(r.speaker_id);
    if (it == spoofs.end()) {
      ++out.skipped;
      continue;
    }
    double sum = 0.0;
    for (const auto& s : it->second) sum += distance(r.utt_id, s);
    out.records.push_back({r.utt_id, r.speaker_id, r.gender, kind,
                           sum / static_cast<double>(it->second.size())});
  }
  return out;
}

/// Embedding level: distance = 1 - cosine similarity.
inline PairingResult bonafide_spoof_pairing(const Manifest& m, const EmbeddingTable& table) {
  return pair_bonafide_spoof(m, Representation::kEmbedding,
                             [&](const std::string& a, const std::string& b) {
                               return 1.0 - cosine_similarity(table.at(a), table.at(b));
                             });
}

/// Spectral level: Itakura-Saito(bonafide, spoof) on equal-shape frame sets.
inline PairingResult bonafide_spoof_pairing(const Manifest& m,
                                            const std::map<std::string, SpectralFrames>& frames) {
  auto get = [&](const std::string& id) -> const SpectralFrames& {
    auto it = frames.find(id);
    if (it == frames.end()) throw Error("missing spectral frames for utt_id '" + id + "'");
    return it->second;
  };
  return pair_bonafide_spoof(m, Representation::kEncoderSpectral,
                             [&](const std::string& a, const std::string& b) {
                               return itakura_saito(get(a), get(b));
                             });
}

// ---------------------------------------------------------------------------
// Gender-wise summaries

struct DistributionSummary {
  std::string group;
  std::size_t count = 0;
  double mean = 0.0;
  double stddev = 0.0;              // sample standard deviation (n - 1)
  std::array<double, 10> deciles{};  // quantiles at 0.1, 0.2, ..., 1.0
  double overlap_with_peer = 0.0;
};

inline constexpr int kOverlapBins = 50;

/// Histogram overlap coefficient: sum of bin-wise minima of the two
/// normalized histograms over a shared range.
inline double overlap_coefficient(std::span<const double> a, std::span<const double> b,
                                  int bins = kOverlapBins) {
  if (a.empty() || b.empty()) throw Error("overlap_coefficient: empty group");
  double lo = std::min(*std::min_element(a.begin(), a.end()), *std::min_element(b.begin(), b.end()));
  double hi = std::max(*std::max_element(a.begin(), a.end()), *std::max_element(b.begin(), b.end()));
  if (!(hi > lo)) return 1.0;
  auto hist = [&](std::span<const double> v) {
    std::vector<double> h(static_cast<std::size_t>(bins), 0.0);
    for (double x : v) {
      auto k = static_cast<int>((x - lo) / (hi - lo) * bins);
      h[static_cast<std::size_t>(std::clamp(k, 0, bins - 1))] += 1.0 / static_cast<double>(v.size());
    }
    return h;
  };
  auto ha = hist(a), hb = hist(b);
  double s = 0.0;
  for (int k = 0; k < bins; ++k) s += std::min(ha[static_cast<std::size_t>(k)], hb[static_cast<std::size_t>(k)]);
  return std::clamp(s, 0.0, 1.0);
}

inline DistributionSummary summarize(const std::string& group, std::vector<double> v) {
  DistributionSummary s;
  s.group = group;
  s.count = v.size();
  std::sort(v.begin(), v.end());
  double sum = 0.0;
  for (double x : v) sum += x;
  s.mean = sum / static_cast<double>(v.size());
  if (v.size() > 1) {
    double ss = 0.0;
    for (double x : v) ss += (x - s.mean) * (x - s.mean);
    s.stddev = std::sqrt(ss / static_cast<double>(v.size() - 1));
  }
  for (int k = 0; k < 10; ++k) s.deciles[static_cast<std::size_t>(k)] = quantile_sorted(v, (k + 1) / 10.0);
  return s;
}

struct GenderSummaries {
  DistributionSummary female, male;
};

inline GenderSummaries summarize_by_gender(const std::vector<PairedDistanceRecord>& records) {
  std::vector<double> f, m;
  for (const auto& r : records) (r.gender == Gender::kFemale ? f : m).push_back(r.mean_distance);
  if (f.empty()) throw Error("summarize_by_gender: no female records");
  if (m.empty()) throw Error("summarize_by_gender: no male records");
  double ov = overlap_coefficient(f, m);
  GenderSummaries out{summarize("female", f), summarize("male", m)};
  out.female.overlap_with_peer = ov;
  out.male.overlap_with_peer = ov;
  return out;
}

inline std::string serialize_distance_records(const std::vector<PairedDistanceRecord>& records) {
  std::string out = "bonafide_utt,speaker_id,gender,representation,mean_distance\n";
  for (const auto& r : records)
    csv::append_row(out, {r.bonafide_utt, r.speaker_id, to_string(r.gender),
                          to_string(r.representation), format_double(r.mean_distance)});
  return out;
}

}  // namespace probekit
