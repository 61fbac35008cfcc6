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

// Synthetic corpora with planted trait structure. Used as ground truth for
// the probing, distance and sweep pipelines; nothing here models real speech.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numbers>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "probekit/audio.hpp"
#include "probekit/common.hpp"
#include "probekit/data_model.hpp"
#include "probekit/perturbation.hpp"

namespace probekit {

enum class PlantKind { kNone, kCluster, kLinearSubspace };

inline const char* to_string(PlantKind k) {
  switch (k) {
    case PlantKind::kNone: return "none";
    case PlantKind::kCluster: return "cluster";
    case PlantKind::kLinearSubspace: return "linear_subspace";
  }
  return "?";
}

inline PlantKind parse_plant_kind(std::string_view s) {
  if (s == "none") return PlantKind::kNone;
  if (s == "cluster") return PlantKind::kCluster;
  if (s == "linear_subspace") return PlantKind::kLinearSubspace;
  throw Error("unknown plant kind '" + std::string(s) + "'");
}

struct PlantedTrait {
  Trait trait = Trait::kGender;
  PlantKind kind = PlantKind::kCluster;
  double strength = 1.0;  // in [0, 1]; 0 leaves embeddings independent of the trait
};

struct SynthAudio {
  double min_seconds = 1.5;
  double max_seconds = 3.0;
  int sample_rate = 16000;
  // Extra spoof distortion for male speakers, relative to female ones.
  double encoder_gender_gap = 0.0;
};

struct SynthSpec {
  int n_speakers = 20;
  int utts_per_speaker = 10;
  int dim = 32;
  std::vector<PlantedTrait> planted_traits;
  double noise_sigma = 0.01;
  std::uint64_t seed = 0;
  double spoof_fraction = 0.0;  // share of each speaker's utterances that are spoofed
  std::optional<SynthAudio> audio;

  void validate() const {
    if (n_speakers < 1 || utts_per_speaker < 1 || dim < 1)
      throw Error("synth: counts and dim must be positive");
    if (noise_sigma < 0.0) throw Error("synth: noise_sigma must be >= 0");
    if (spoof_fraction < 0.0 || spoof_fraction > 1.0) throw Error("synth: spoof_fraction must lie in [0, 1]");
    for (const auto& p : planted_traits) {
      if (p.strength < 0.0 || p.strength > 1.0) throw Error("synth: strength must lie in [0, 1]");
      if (p.kind == PlantKind::kCluster && kind_of(p.trait) != TaskKind::kClassification)
        throw Error(std::string("synth: cluster plant needs a categorical trait, got ") + to_string(p.trait));
      if (p.kind == PlantKind::kLinearSubspace && kind_of(p.trait) != TaskKind::kRegression)
        throw Error(std::string("synth: linear_subspace plant needs an acoustic trait, got ") + to_string(p.trait));
    }
  }
};

/// Radius of planted class means, in units of the unit-variance base noise.
inline constexpr double kPlantRadius = 3.0;

struct SynthCorpus {
  Manifest manifest;
  EmbeddingTable embeddings{1};
  std::map<Trait, std::vector<double>> latents;     // per linear trait, per row
  std::map<Trait, std::vector<double>> directions;  // unit vectors
};

inline const std::vector<std::string>& synth_attack_ids() {
  static const std::vector<std::string> ids = {"A07", "A08", "A09", "A10", "A11", "A12", "A13",
                                               "A14", "A15", "A16", "A17", "A18", "A19"};
  return ids;
}

/// A17-A19 are voice conversion; the rest (including TTS+VC hybrids) count as TTS.
inline AttackType synth_attack_type(const std::string& id) {
  return (id == "A17" || id == "A18" || id == "A19") ? AttackType::kVC : AttackType::kTTS;
}

namespace detail {

inline std::vector<double> random_unit(Rng& rng, int dim) {
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<double> u(static_cast<std::size_t>(dim));
  double n2 = 0.0;
  for (auto& x : u) {
    x = g(rng);
    n2 += x * x;
  }
  for (auto& x : u) x /= std::sqrt(n2);
  return u;
}

inline const std::vector<std::string>& synth_words() {
  static const std::vector<std::string> w = {
      "please", "call",  "stella", "ask",   "her",    "to",    "bring", "these", "things",
      "with",   "from",  "the",    "store", "six",    "spoons", "of",   "fresh", "snow",
      "peas",   "five",  "thick",  "slabs", "blue",   "cheese", "and",  "maybe", "a",
      "snack",  "for",   "brother", "bob",  "we",     "also",  "need",  "small", "plastic"};
  return w;
}

}  // namespace detail

inline SynthCorpus gen_dataset(const SynthSpec& spec) {
  spec.validate();
  Rng rng(derive_seed(spec.seed, "synth/meta"));
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_int_distribution<int> age_dist(18, 38);
  static const std::vector<std::string> accents = {"English", "Scottish", "Irish", "Welsh",
                                                   "American", "Canadian", "Australian",
                                                   "NewZealand", "SouthAfrican", "Indian",
                                                   "NorthernIrish", "British"};
  std::uniform_int_distribution<std::size_t> accent_dist(0, accents.size() - 1);
  std::uniform_int_distribution<std::size_t> attack_dist(0, synth_attack_ids().size() - 1);
  std::uniform_int_distribution<int> words_dist(5, 15);

  std::vector<int> order(static_cast<std::size_t>(spec.n_speakers));
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<Gender> genders(order.size());
  for (std::size_t i = 0; i < order.size(); ++i)
    genders[static_cast<std::size_t>(order[i])] = i < order.size() / 2 ? Gender::kMale : Gender::kFemale;

  SynthCorpus c;
  const int n_spoof = static_cast<int>(std::llround(spec.spoof_fraction * spec.utts_per_speaker));
  int counter = 0;
  for (int s = 0; s < spec.n_speakers; ++s) {
    char spk[32];
    std::snprintf(spk, sizeof spk, "LA_%04d", s + 1);
    int age = age_dist(rng);
    const std::string& accent = accents[accent_dist(rng)];
    for (int u = 0; u < spec.utts_per_speaker; ++u) {
      ManifestRow r;
      char utt[32];
      std::snprintf(utt, sizeof utt, "LA_E_%07d", ++counter);
      r.utt_id = utt;
      r.speaker_id = spk;
      r.gender = genders[static_cast<std::size_t>(s)];
      r.age = age;
      r.accent = accent;
      r.is_bonafide = u < spec.utts_per_speaker - n_spoof;
      if (!r.is_bonafide) {
        r.attack_id = synth_attack_ids()[attack_dist(rng)];
        r.attack_type = synth_attack_type(*r.attack_id);
      }
      const auto& words = detail::synth_words();
      std::uniform_int_distribution<std::size_t> word_dist(0, words.size() - 1);
      int nw = words_dist(rng);
      std::string text;
      for (int k = 0; k < nw; ++k) text += (k ? " " : "") + words[word_dist(rng)];
      r.transcript = text;
      if (spec.audio) r.audio_path = "wav/" + r.utt_id + ".wav";
      c.manifest.rows.push_back(std::move(r));
    }
  }

  // Planted signal geometry, drawn from its own stream.
  Rng geo(derive_seed(spec.seed, "synth/geometry"));
  std::map<Trait, std::map<std::string, std::vector<double>>> class_means;
  for (const auto& p : spec.planted_traits) {
    if (p.kind == PlantKind::kCluster) {
      auto space = build_label_space(c.manifest, p.trait);
      auto& means = class_means[p.trait];
      if (space.size() == 2) {
        auto u = detail::random_unit(geo, spec.dim);
        means[space.classes()[0]] = u;
        for (auto& x : u) x = -x;
        means[space.classes()[1]] = u;
      } else {
        for (const auto& cls : space.classes()) means[cls] = detail::random_unit(geo, spec.dim);
      }
    } else if (p.kind == PlantKind::kLinearSubspace) {
      c.directions[p.trait] = detail::random_unit(geo, spec.dim);
    }
  }

  Rng emb_rng(derive_seed(spec.seed, "synth/embeddings"));
  c.embeddings = EmbeddingTable(static_cast<std::size_t>(spec.dim));
  std::vector<double> v(static_cast<std::size_t>(spec.dim));
  for (const auto& p : spec.planted_traits)
    if (p.kind == PlantKind::kLinearSubspace) c.latents[p.trait].reserve(c.manifest.size());
  for (const auto& r : c.manifest.rows) {
    for (auto& x : v) x = gauss(emb_rng) + spec.noise_sigma * gauss(emb_rng);
    for (const auto& p : spec.planted_traits) {
      if (p.kind == PlantKind::kCluster) {
        const auto& mean = class_means[p.trait].at(*class_of(r, p.trait));
        for (std::size_t k = 0; k < v.size(); ++k) v[k] += p.strength * kPlantRadius * mean[k];
      } else if (p.kind == PlantKind::kLinearSubspace) {
        double z = gauss(emb_rng);
        c.latents[p.trait].push_back(z);
        const auto& dir = c.directions.at(p.trait);
        for (std::size_t k = 0; k < v.size(); ++k) v[k] += p.strength * kPlantRadius * z * dir[k];
      }
    }
    c.embeddings.add(r.utt_id, v);
  }
  return c;
}

/// target = <embedding, direction> / strength + N(0, noise_sigma^2). With
/// strength 0 the target is the (embedding-independent) latent plus noise.
/// Values are written into the corpus manifest and returned as a trait table.
inline TraitTable gen_regression_target(SynthCorpus& c, const SynthSpec& spec, Trait trait) {
  const PlantedTrait* plant = nullptr;
  for (const auto& p : spec.planted_traits)
    if (p.trait == trait && p.kind == PlantKind::kLinearSubspace) plant = &p;
  if (!plant) throw Error(std::string("gen_regression_target: trait '") + to_string(trait) + "' not planted");
  Rng rng(derive_seed(spec.seed, std::string("synth/target/") + to_string(trait)));
  std::normal_distribution<double> gauss(0.0, 1.0);
  const auto& dir = c.directions.at(trait);
  const auto& lat = c.latents.at(trait);
  TraitTable out;
  for (std::size_t i = 0; i < c.manifest.size(); ++i) {
    auto& r = c.manifest.rows[i];
    double target;
    if (plant->strength > 0.0) {
      auto e = c.embeddings.at(r.utt_id);
      double dot = 0.0;
      for (std::size_t k = 0; k < dir.size(); ++k) dot += e[k] * dir[k];
      target = dot / plant->strength;
    } else {
      target = kPlantRadius * lat[i];
    }
    target += spec.noise_sigma * gauss(rng);
    TraitValues tv = r.acoustic;
    switch (trait) {
      case Trait::kF0Mean: tv.f0_mean = target; break;
      case Trait::kSpeakingRate: tv.speaking_rate = target; break;
      case Trait::kDuration: tv.duration = target; break;
      case Trait::kSnr: tv.snr = target; break;
      default: break;
    }
    r.acoustic = tv;
    out.emplace_back(r.utt_id, tv);
  }
  return out;
}

inline Waveform gen_tone(double freq, double seconds, int sample_rate, double amplitude = 0.5) {
  if (!(freq > 0.0 && freq < sample_rate / 2.0)) throw Error("gen_tone: frequency must lie in (0, Nyquist)");
  if (!(seconds > 0.0)) throw Error("gen_tone: duration must be positive");
  Waveform w;
  w.sample_rate = sample_rate;
  w.samples.resize(static_cast<std::size_t>(std::llround(seconds * sample_rate)));
  for (std::size_t i = 0; i < w.samples.size(); ++i)
    w.samples[i] = amplitude * std::sin(2.0 * std::numbers::pi * freq * static_cast<double>(i) / sample_rate);
  return w;
}

/// Bonafide scores ~ N(+separation/2, 1), spoof scores ~ N(-separation/2, 1).
inline ScoreFile gen_scores(int n_bonafide, int n_spoof, double separation, std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  ScoreFile rows;
  char id[32];
  for (int i = 0; i < n_bonafide + n_spoof; ++i) {
    std::snprintf(id, sizeof id, "LA_E_%07d", i + 1);
    bool bon = i < n_bonafide;
    rows.push_back({id, (bon ? 0.5 : -0.5) * separation + gauss(rng), bon});
  }
  return rows;
}

/// Audio for one synthetic utterance: a three-harmonic voiced segment at a
/// speaker-dependent pitch between short silences, plus distortion for spoofs.
inline Waveform gen_utterance_audio(const ManifestRow& r, const SynthAudio& cfg, std::uint64_t seed) {
  Rng rng(derive_seed(seed, "synth/audio/" + r.utt_id));
  Rng spk_rng(derive_seed(seed, "synth/speaker/" + r.speaker_id));
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  double f0 = r.gender == Gender::kFemale ? 180.0 + 60.0 * u01(spk_rng) : 95.0 + 50.0 * u01(spk_rng);
  double seconds = cfg.min_seconds + (cfg.max_seconds - cfg.min_seconds) * u01(rng);
  const int sr = cfg.sample_rate;
  Waveform w;
  w.sample_rate = sr;
  w.samples.resize(static_cast<std::size_t>(std::llround(seconds * sr)));
  const std::size_t pad = static_cast<std::size_t>(0.2 * sr);
  double distortion = 0.0;
  if (!r.is_bonafide)
    distortion = 0.01 * (r.gender == Gender::kMale ? 1.0 + cfg.encoder_gender_gap : 1.0);
  for (std::size_t i = 0; i < w.samples.size(); ++i) {
    double x = 0.0;
    if (i >= pad && i + pad < w.samples.size()) {
      double t = static_cast<double>(i) / sr;
      for (int h = 1; h <= 3; ++h) x += (0.3 / h) * std::sin(2.0 * std::numbers::pi * h * f0 * t);
      x += distortion * gauss(rng);
    }
    x += 0.0005 * gauss(rng);
    w.samples[i] = x;
  }
  return w;
}

// ---------------------------------------------------------------------------
// Spec files (JSON)

inline SynthSpec parse_synth_spec(const nlohmann::json& j) {
  SynthSpec s;
  s.n_speakers = j.value("n_speakers", s.n_speakers);
  s.utts_per_speaker = j.value("utts_per_speaker", s.utts_per_speaker);
  s.dim = j.value("dim", s.dim);
  s.noise_sigma = j.value("noise_sigma", s.noise_sigma);
  s.seed = j.value("seed", s.seed);
  s.spoof_fraction = j.value("spoof_fraction", s.spoof_fraction);
  if (j.contains("planted_traits")) {
    for (const auto& p : j.at("planted_traits")) {
      PlantedTrait t;
      t.trait = parse_trait(p.at("trait_name").get<std::string>());
      t.kind = parse_plant_kind(p.value("kind", std::string(kind_of(t.trait) == TaskKind::kRegression ? "linear_subspace" : "cluster")));
      t.strength = p.value("strength", 1.0);
      s.planted_traits.push_back(t);
    }
  }
  if (j.contains("audio") && !j.at("audio").is_null()) {
    SynthAudio a;
    const auto& ja = j.at("audio");
    a.min_seconds = ja.value("min_seconds", a.min_seconds);
    a.max_seconds = ja.value("max_seconds", a.max_seconds);
    a.sample_rate = ja.value("sample_rate", a.sample_rate);
    a.encoder_gender_gap = ja.value("encoder_gender_gap", a.encoder_gender_gap);
    s.audio = a;
  }
  s.validate();
  return s;
}

inline nlohmann::json to_json(const SynthSpec& s) {
  nlohmann::json j;
  j["n_speakers"] = s.n_speakers;
  j["utts_per_speaker"] = s.utts_per_speaker;
  j["dim"] = s.dim;
  j["noise_sigma"] = s.noise_sigma;
  j["seed"] = s.seed;
  j["spoof_fraction"] = s.spoof_fraction;
  j["planted_traits"] = nlohmann::json::array();
  for (const auto& p : s.planted_traits)
    j["planted_traits"].push_back({{"trait_name", to_string(p.trait)}, {"kind", to_string(p.kind)}, {"strength", p.strength}});
  if (s.audio)
    j["audio"] = {{"min_seconds", s.audio->min_seconds}, {"max_seconds", s.audio->max_seconds},
                  {"sample_rate", s.audio->sample_rate}, {"encoder_gender_gap", s.audio->encoder_gender_gap}};
  else
    j["audio"] = nullptr;
  return j;
}

}  // namespace probekit
