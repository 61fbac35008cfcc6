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

// Run configuration, the command implementations behind the `probekit` tool,
// and the analysis report.

#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include <nlohmann/json.hpp>

#include "probekit/audio.hpp"
#include "probekit/common.hpp"
#include "probekit/data_model.hpp"
#include "probekit/distance_analysis.hpp"
#include "probekit/metrics.hpp"
#include "probekit/perturbation.hpp"
#include "probekit/probe_net.hpp"
#include "probekit/svg.hpp"
#include "probekit/synth.hpp"
#include "probekit/trait_extract.hpp"

namespace probekit {

namespace fs = std::filesystem;
using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

inline constexpr const char* kReportSchema = "probekit.report/1";

// ---------------------------------------------------------------------------
// Configuration

/// Every recognised key with its default value.
inline const json& config_defaults() {
  static const json d = json::parse(R"({
    "seed": 0,
    "manifest": {"path": null, "format": "csv"},
    "systems": {},
    "traits_file": null,
    "train_fraction": 0.9,
    "tasks": [],
    "train": {"epochs": 20, "batch_size": 32, "initial_lr": 0.001, "decay_factor": 0.1,
              "decay_every": 8, "hidden_dim": 256, "unit_norm": false, "normalize_targets": true},
    "metrics": {"n_boot": 1000, "alpha": 0.05, "n_perm": 999},
    "traits": {
      "pitch": {"floor_hz": 75.0, "ceiling_hz": 600.0, "frame_len": 0.04, "hop": 0.01,
                "voicing_threshold": 0.45, "silence_threshold": 0.03, "octave_cost": 0.01},
      "snr": {"frame_len": 0.025, "hop": 0.01, "noise_fraction": 0.1, "signal_fraction": 0.5}
    },
    "distance": {"system": null, "representations": ["encoder_spectral", "embedding"],
                 "chunk_seconds": 4.0, "frames_dir": null,
                 "spectrogram": {"frame_len": 0.025, "hop": 0.01, "fft_size": 512}},
    "perturb": {"rates": [0.8, 0.9, 1.0, 1.1, 1.2]},
    "sweep": {"rates": [0.8, 0.9, 1.0, 1.1, 1.2], "scores": {}},
    "synth": null
  })");
  return d;
}

namespace detail {

// Objects whose keys are user-chosen names rather than fixed fields.
inline bool free_form(const std::string& where) {
  return where == "systems" || where == "sweep.scores" || where == "synth";
}

inline void check_keys(const json& user, const json& defaults, const std::string& where) {
  for (const auto& [key, value] : user.items()) {
    std::string path = where.empty() ? key : where + "." + key;
    if (!defaults.contains(key)) throw Error("config: unknown key '" + path + "'");
    const json& d = defaults.at(key);
    if (d.is_object() && !free_form(path)) {
      if (!value.is_object()) throw Error("config: '" + path + "' must be an object");
      check_keys(value, d, path);
    }
  }
}

inline json merge(json base, const json& over) {
  for (const auto& [key, value] : over.items()) {
    if (value.is_object() && base.contains(key) && base[key].is_object() && !free_form(key))
      base[key] = merge(base[key], value);
    else
      base[key] = value;
  }
  return base;
}

template <typename T>
T get_as(const json& j, const char* key, const std::string& where) {
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw Error("config: '" + where + "." + key + "' has the wrong type");
  }
}

}  // namespace detail

struct SystemInput {
  std::string path;
  EmbeddingFormat format = EmbeddingFormat::kBinary;
};

struct TaskSpec {
  Trait trait = Trait::kGender;
  TaskKind kind = TaskKind::kClassification;
  PartitionScheme scheme = PartitionScheme::kT02;
  std::vector<std::string> systems;
};

struct MetricParams {
  int n_boot = 1000;
  double alpha = 0.05;
  int n_perm = 999;
};

struct RunConfig {
  json resolved;   // defaults applied; echoed into reports and fingerprinted
  fs::path base_dir;  // relative paths resolve against this

  std::uint64_t seed = 0;
  std::optional<std::string> manifest_path;
  ManifestFormat manifest_format = ManifestFormat::kCsv;
  std::map<std::string, SystemInput> systems;
  std::optional<std::string> traits_file;
  double train_fraction = 0.9;
  std::vector<TaskSpec> tasks;
  TrainConfig train;
  std::size_t hidden_dim = kDefaultHiddenDim;
  bool unit_norm = false;
  MetricParams metrics;
  PitchConfig pitch;
  SnrConfig snr;
  std::optional<std::string> distance_system;
  std::vector<Representation> representations;
  double chunk_seconds = 4.0;
  std::optional<std::string> frames_dir;
  SpectrogramConfig spectrogram;
  std::vector<double> perturb_rates;
  std::vector<double> sweep_rates;
  std::map<double, std::string> sweep_scores;
  std::optional<json> synth;

  fs::path resolve(const std::string& p) const {
    fs::path path(p);
    return path.is_absolute() ? path : base_dir / path;
  }

  std::string fingerprint() const { return hex64(fnv1a64(resolved.dump())); }
};

/// Applies defaults, validates, and returns the typed view. `seed_override`
/// replaces the document's seed before resolution.
inline RunConfig resolve_config(const json& user, const fs::path& base_dir,
                                std::optional<std::uint64_t> seed_override = std::nullopt) {
  if (!user.is_object()) throw Error("config: top level must be an object");
  detail::check_keys(user, config_defaults(), "");
  json r = detail::merge(config_defaults(), user);
  if (seed_override) r["seed"] = *seed_override;

  RunConfig c;
  c.base_dir = base_dir;
  try {
    c.seed = r.at("seed").get<std::uint64_t>();
  } catch (const json::exception&) {
    throw Error("config: 'seed' must be a non-negative integer");
  }

  const json& man = r.at("manifest");
  if (!man.at("path").is_null()) c.manifest_path = detail::get_as<std::string>(man, "path", "manifest");
  std::string mf = detail::get_as<std::string>(man, "format", "manifest");
  if (mf == "csv")
    c.manifest_format = ManifestFormat::kCsv;
  else if (mf == "jsonl")
    c.manifest_format = ManifestFormat::kJsonl;
  else
    throw Error("config: manifest.format must be 'csv' or 'jsonl'");

  if (!r.at("systems").is_object()) throw Error("config: 'systems' must be an object");
  for (auto& [name, s] : r.at("systems").items()) {
    if (s.is_string()) s = json{{"path", s}};
    if (!s.is_object() || !s.contains("path")) throw Error("config: systems." + name + " needs a 'path'");
    if (!s.contains("format")) s["format"] = "binary";
    for (const auto& [k, v] : s.items())
      if (k != "path" && k != "format") throw Error("config: unknown key 'systems." + name + "." + k + "'");
    SystemInput in;
    in.path = detail::get_as<std::string>(s, "path", "systems." + name);
    std::string f = detail::get_as<std::string>(s, "format", "systems." + name);
    if (f == "binary")
      in.format = EmbeddingFormat::kBinary;
    else if (f == "csv")
      in.format = EmbeddingFormat::kCsv;
    else
      throw Error("config: systems." + name + ".format must be 'binary' or 'csv'");
    c.systems[name] = in;
  }

  if (!r.at("traits_file").is_null()) c.traits_file = detail::get_as<std::string>(r, "traits_file", "");
  c.train_fraction = detail::get_as<double>(r, "train_fraction", "");
  if (!(c.train_fraction > 0.0 && c.train_fraction < 1.0))
    throw Error("config: train_fraction must lie in (0, 1)");

  if (!r.at("tasks").is_array()) throw Error("config: 'tasks' must be an array");
  std::set<std::tuple<std::string, std::string>> seen_tasks;
  for (std::size_t i = 0; i < r.at("tasks").size(); ++i) {
    json& t = r["tasks"][i];
    std::string where = "tasks[" + std::to_string(i) + "]";
    if (!t.is_object() || !t.contains("trait") || !t.contains("scheme"))
      throw Error("config: " + where + " needs 'trait' and 'scheme'");
    for (const auto& [k, v] : t.items())
      if (k != "trait" && k != "scheme" && k != "kind" && k != "systems")
        throw Error("config: unknown key '" + where + "." + k + "'");
    TaskSpec spec;
    spec.trait = parse_trait(detail::get_as<std::string>(t, "trait", where));
    spec.scheme = parse_scheme(detail::get_as<std::string>(t, "scheme", where));
    spec.kind = kind_of(spec.trait);
    if (t.contains("kind") && t.at("kind") != to_string(spec.kind))
      throw Error("config: " + where + ": trait '" + to_string(spec.trait) + "' is a " +
                  to_string(spec.kind) + " task");
    t["kind"] = to_string(spec.kind);
    if (!scheme_allows(spec.scheme, spec.trait))
      throw Error("config: " + where + ": scheme " + to_string(spec.scheme) + " is not valid for trait '" +
                  to_string(spec.trait) + "'");
    if (!t.contains("systems")) {
      json names = json::array();
      for (const auto& [name, s] : c.systems) names.push_back(name);
      t["systems"] = names;
    }
    spec.systems = detail::get_as<std::vector<std::string>>(t, "systems", where);
    if (spec.systems.empty()) throw Error("config: " + where + " lists no systems");
    for (const auto& s : spec.systems)
      if (!c.systems.count(s)) throw Error("config: " + where + " references undeclared system '" + s + "'");
    if (!seen_tasks.emplace(to_string(spec.trait), to_string(spec.scheme)).second)
      throw Error("config: " + where + " duplicates an earlier task");
    c.tasks.push_back(spec);
  }

  const json& tr = r.at("train");
  c.train.epochs = detail::get_as<int>(tr, "epochs", "train");
  c.train.batch_size = detail::get_as<int>(tr, "batch_size", "train");
  c.train.initial_lr = detail::get_as<double>(tr, "initial_lr", "train");
  c.train.decay_factor = detail::get_as<double>(tr, "decay_factor", "train");
  c.train.decay_every = detail::get_as<int>(tr, "decay_every", "train");
  c.train.normalize_targets = detail::get_as<bool>(tr, "normalize_targets", "train");
  c.train.validate();
  int hidden = detail::get_as<int>(tr, "hidden_dim", "train");
  if (hidden < 1) throw Error("config: train.hidden_dim must be positive");
  c.hidden_dim = static_cast<std::size_t>(hidden);
  c.unit_norm = detail::get_as<bool>(tr, "unit_norm", "train");

  const json& me = r.at("metrics");
  c.metrics.n_boot = detail::get_as<int>(me, "n_boot", "metrics");
  c.metrics.alpha = detail::get_as<double>(me, "alpha", "metrics");
  c.metrics.n_perm = detail::get_as<int>(me, "n_perm", "metrics");
  if (c.metrics.n_boot < 100) throw Error("config: metrics.n_boot must be >= 100");
  if (c.metrics.n_perm < 100) throw Error("config: metrics.n_perm must be >= 100");
  if (!(c.metrics.alpha > 0.0 && c.metrics.alpha < 1.0)) throw Error("config: metrics.alpha must lie in (0, 1)");

  const json& pj = r.at("traits").at("pitch");
  c.pitch.floor_hz = detail::get_as<double>(pj, "floor_hz", "traits.pitch");
  c.pitch.ceiling_hz = detail::get_as<double>(pj, "ceiling_hz", "traits.pitch");
  c.pitch.frame_len = detail::get_as<double>(pj, "frame_len", "traits.pitch");
  c.pitch.hop = detail::get_as<double>(pj, "hop", "traits.pitch");
  c.pitch.voicing_threshold = detail::get_as<double>(pj, "voicing_threshold", "traits.pitch");
  c.pitch.silence_threshold = detail::get_as<double>(pj, "silence_threshold", "traits.pitch");
  c.pitch.octave_cost = detail::get_as<double>(pj, "octave_cost", "traits.pitch");
  if (!(c.pitch.floor_hz > 0.0 && c.pitch.ceiling_hz > c.pitch.floor_hz))
    throw Error("config: traits.pitch needs 0 < floor_hz < ceiling_hz");
  const json& sj = r.at("traits").at("snr");
  c.snr.frame_len = detail::get_as<double>(sj, "frame_len", "traits.snr");
  c.snr.hop = detail::get_as<double>(sj, "hop", "traits.snr");
  c.snr.noise_fraction = detail::get_as<double>(sj, "noise_fraction", "traits.snr");
  c.snr.signal_fraction = detail::get_as<double>(sj, "signal_fraction", "traits.snr");

  const json& dj = r.at("distance");
  if (!dj.at("system").is_null()) {
    c.distance_system = detail::get_as<std::string>(dj, "system", "distance");
    if (!c.systems.count(*c.distance_system))
      throw Error("config: distance.system references undeclared system '" + *c.distance_system + "'");
  }
  for (const auto& s : detail::get_as<std::vector<std::string>>(dj, "representations", "distance"))
    c.representations.push_back(parse_representation(s));
  c.chunk_seconds = detail::get_as<double>(dj, "chunk_seconds", "distance");
  if (!(c.chunk_seconds > 0.0)) throw Error("config: distance.chunk_seconds must be positive");
  if (!dj.at("frames_dir").is_null()) c.frames_dir = detail::get_as<std::string>(dj, "frames_dir", "distance");
  const json& spj = dj.at("spectrogram");
  c.spectrogram.frame_len = detail::get_as<double>(spj, "frame_len", "distance.spectrogram");
  c.spectrogram.hop = detail::get_as<double>(spj, "hop", "distance.spectrogram");
  c.spectrogram.fft_size = detail::get_as<int>(spj, "fft_size", "distance.spectrogram");

  c.perturb_rates = detail::get_as<std::vector<double>>(r.at("perturb"), "rates", "perturb");
  for (double rate : c.perturb_rates)
    if (!(rate >= 0.5 && rate <= 2.0)) throw Error("config: perturb.rates must lie in [0.5, 2.0]");
  if (std::set<double>(c.perturb_rates.begin(), c.perturb_rates.end()).size() != c.perturb_rates.size())
    throw Error("config: perturb.rates must be distinct");
  c.sweep_rates = detail::get_as<std::vector<double>>(r.at("sweep"), "rates", "sweep");
  if (!r.at("sweep").at("scores").is_object()) throw Error("config: sweep.scores must be an object");
  for (const auto& [key, value] : r.at("sweep").at("scores").items()) {
    double rate = 0.0;
    if (!parse_double(key, &rate)) throw Error("config: sweep.scores key '" + key + "' is not a rate");
    if (!value.is_string()) throw Error("config: sweep.scores." + key + " must be a path");
    c.sweep_scores[rate] = value.get<std::string>();
  }
  if (!r.at("synth").is_null()) c.synth = r.at("synth");

  c.resolved = r;
  return c;
}

inline RunConfig load_config(const fs::path& path, std::optional<std::uint64_t> seed_override = std::nullopt) {
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    throw Error(path.string() + ": " + e.what());
  }
  return resolve_config(j, path.has_parent_path() ? path.parent_path() : fs::path("."), seed_override);
}

// ---------------------------------------------------------------------------
// Execution

struct RunContext {
  RunConfig config;
  fs::path outdir;
  int jobs = 1;
  std::ostream* log = &std::cerr;
};

/// One failed unit of work, as listed in reports and on stderr.
struct Failure {
  std::string command;
  std::string item;
  std::string error;
};

struct CommandOutcome {
  std::vector<Failure> failures;
  bool ok() const { return failures.empty(); }
};

inline ojson failures_json(const std::vector<Failure>& fs_) {
  ojson arr = ojson::array();
  for (const auto& f : fs_) arr.push_back({{"command", f.command}, {"item", f.item}, {"error", f.error}});
  return arr;
}

/// Runs body(i) for i in [0, n) on up to `jobs` threads. Errors are captured
/// per index; results must be stored by index by the caller.
template <typename Fn>
std::vector<std::optional<std::string>> parallel_for(std::size_t n, int jobs, Fn&& body) {
  std::vector<std::optional<std::string>> errors(n);
  auto run = [&](std::size_t i) {
    try {
      body(i);
    } catch (const std::exception& e) {
      errors[i] = e.what();
    }
  };
  const auto workers = static_cast<std::size_t>(std::max(1, jobs));
  if (workers == 1 || n < 2) {
    for (std::size_t i = 0; i < n; ++i) run(i);
    return errors;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < std::min(workers, n); ++w)
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) run(i);
    });
  for (auto& t : pool) t.join();
  return errors;
}

namespace detail {

inline Manifest load_run_manifest(const RunConfig& c) {
  if (!c.manifest_path) throw Error("config: manifest.path is required for this command");
  return load_manifest(c.resolve(*c.manifest_path), c.manifest_format);
}

inline fs::path manifest_dir(const RunConfig& c) {
  fs::path p = c.resolve(*c.manifest_path);
  return p.has_parent_path() ? p.parent_path() : fs::path(".");
}

inline fs::path audio_file(const RunConfig& c, const std::string& audio_path) {
  fs::path p(audio_path);
  return p.is_absolute() ? p : manifest_dir(c) / p;
}

inline std::vector<PartitionScheme> requested_schemes(const RunConfig& c) {
  std::set<PartitionScheme> s;
  for (const auto& t : c.tasks) s.insert(t.scheme);
  if (s.empty()) s = {PartitionScheme::kT01, PartitionScheme::kT02, PartitionScheme::kT03};
  return {s.begin(), s.end()};
}

inline std::string rate_label(double rate) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", rate);
  return buf;
}

inline std::string task_key(const std::string& system, const TaskSpec& t) {
  return system + "/" + to_string(t.trait) + "/" + to_string(t.scheme);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// partition

inline CommandOutcome cmd_partition(const RunContext& ctx) {
  const RunConfig& c = ctx.config;
  Manifest m = detail::load_run_manifest(c);
  CommandOutcome out;
  for (auto scheme : detail::requested_schemes(c)) {
    try {
      Split s = partition(m, scheme, c.train_fraction, derive_seed(c.seed, "partition"));
      write_file_atomic(ctx.outdir / "splits" / (std::string(to_string(scheme)) + ".json"),
                        serialize_split_json(s, scheme));
      *ctx.log << "partition " << to_string(scheme) << ": " << s.train.size() << " train, " << s.eval.size()
               << " eval\n";
    } catch (const std::exception& e) {
      out.failures.push_back({"partition", to_string(scheme), e.what()});
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// traits

inline CommandOutcome cmd_traits(const RunContext& ctx) {
  const RunConfig& c = ctx.config;
  Manifest m = detail::load_run_manifest(c);
  const std::size_t n = m.size();
  TraitTable table(n);
  std::vector<std::vector<std::pair<std::string, std::string>>> reasons(n);

  auto errors = parallel_for(n, ctx.jobs, [&](std::size_t i) {
    const ManifestRow& r = m.rows[i];
    table[i].first = r.utt_id;
    TraitValues& tv = table[i].second;
    auto& why = reasons[i];
    if (!r.audio_path) {
      why.emplace_back("all", "no audio_path");
      return;
    }
    Waveform w;
    try {
      w = read_wav(detail::audio_file(c, *r.audio_path));
    } catch (const std::exception& e) {
      why.emplace_back("all", e.what());
      return;
    }
    tv.duration = duration(w);
    try {
      tv.f0_mean = f0_mean(w, c.pitch);
    } catch (const std::exception& e) {
      why.emplace_back("f0_mean", e.what());
    }
    try {
      tv.snr = snr_estimate(w, c.snr);
    } catch (const std::exception& e) {
      why.emplace_back("snr", e.what());
    }
    if (!r.transcript) {
      why.emplace_back("speaking_rate", "no transcript");
    } else {
      try {
        tv.speaking_rate = speaking_rate(*r.transcript, *tv.duration);
      } catch (const std::exception& e) {
        why.emplace_back("speaking_rate", e.what());
      }
    }
  });

  std::size_t ok_rows = 0;
  std::string fail_csv = "utt_id,trait,reason\n";
  for (std::size_t i = 0; i < n; ++i) {
    if (errors[i]) reasons[i].emplace_back("all", *errors[i]);
    const auto& tv = table[i].second;
    if (tv.f0_mean || tv.speaking_rate || tv.duration || tv.snr) ++ok_rows;
    for (const auto& [trait, why] : reasons[i]) csv::append_row(fail_csv, {m.rows[i].utt_id, trait, why});
  }
  if (ok_rows == 0) throw Error("traits: no utterance yielded any trait value");
  write_file_atomic(ctx.outdir / "traits.csv", serialize_trait_csv(table));
  write_file_atomic(ctx.outdir / "traits_failures.csv", fail_csv);
  *ctx.log << "traits: " << ok_rows << "/" << n << " rows with values\n";
  return {};
}

// ---------------------------------------------------------------------------
// probe

struct TaskOutcome {
  std::string system;
  TaskSpec task;
  std::optional<std::string> error;
  std::size_t n_train = 0, n_eval = 0, n_dropped = 0;
  std::optional<ClassificationResult> classification;
  std::optional<RegressionResult> regression;
  std::vector<std::string> classes;
  TrainHistory history;
  std::string probe_file;
};

inline std::string history_digest(const TrainHistory& h) {
  std::string s;
  for (std::size_t e = 0; e < h.loss.size(); ++e) s += format_double(h.loss[e]) + ":" + format_double(h.lr[e]) + ";";
  return hex64(fnv1a64(s));
}

/// Assemble, train, evaluate, and save one (system, task) probe.
inline TaskOutcome run_probe_task(const RunConfig& c, const fs::path& outdir, const Manifest& m,
                                  const EmbeddingTable& table, const std::string& system,
                                  const TaskSpec& spec) {
  TaskOutcome o;
  o.system = system;
  o.task = spec;
  const fs::path split_path = outdir / "splits" / (std::string(to_string(spec.scheme)) + ".json");
  if (!fs::exists(split_path))
    throw Error("split file '" + split_path.string() + "' not found; run `partition` first");
  Split split = parse_split_json(read_file(split_path));

  TraitTask task = make_task(m, spec.trait);
  auto keep = [&](const std::vector<std::string>& ids) {
    if (task.kind == TaskKind::kClassification) return ids;
    std::vector<std::string> kept;
    for (const auto& id : ids) {
      const ManifestRow* r = m.find(id);
      if (r && !value_of(*r, spec.trait)) {
        ++o.n_dropped;
        continue;
      }
      kept.push_back(id);
    }
    return kept;
  };
  ProbingDataset train_ds = assemble(m, table, task, keep(split.train), SplitName::kTrain);
  ProbingDataset eval_ds = assemble(m, table, task, keep(split.eval), SplitName::kEval);
  if (train_ds.size() == 0 || eval_ds.size() == 0) throw Error("empty train or eval set");
  o.n_train = train_ds.size();
  o.n_eval = eval_ds.size();

  const std::string key = detail::task_key(system, spec);
  const std::size_t out_dim = task.kind == TaskKind::kClassification ? task.labels->size() : 1;
  MLPProbe probe = init_probe(table.dim(), c.hidden_dim, out_dim, task.kind, derive_seed(c.seed, "init/" + key));
  probe.unit_norm = c.unit_norm;
  probe.labels = task.labels;
  TrainConfig tc = c.train;
  tc.seed = derive_seed(c.seed, "shuffle/" + key);
  auto [trained, history] = train(std::move(probe), train_ds, tc);
  o.history = history;

  if (task.kind == TaskKind::kClassification) {
    o.classes = task.labels->classes();
    auto preds = predict_classes(trained, eval_ds);
    ClassificationResult res;
    res.n = eval_ds.size();
    res.accuracy = accuracy(preds, eval_ds.classes);
    auto [lo, hi] = bootstrap_ci(preds, eval_ds.classes, c.metrics.n_boot, c.metrics.alpha,
                                 derive_seed(c.seed, "bootstrap/" + key));
    res.ci_low = lo;
    res.ci_high = hi;
    res.confusion = confusion_matrix(preds, eval_ds.classes, task.labels->size());
    o.classification = res;
  } else {
    auto preds = predict_values(trained, eval_ds);
    RegressionResult res;
    res.n = eval_ds.size();
    res.r_squared = r_squared(preds, eval_ds.values);
    res.p_value = permutation_p_value(preds, eval_ds.values, c.metrics.n_perm,
                                      derive_seed(c.seed, "permutation/" + key));
    o.regression = res;
  }
  o.probe_file = "probes/" + system + "__" + to_string(spec.trait) + "__" + to_string(spec.scheme) + ".prb";
  save_probe(outdir / o.probe_file, trained);
  return o;
}

inline ojson task_json(const TaskOutcome& o) {
  ojson t;
  t["system"] = o.system;
  t["trait"] = to_string(o.task.trait);
  t["scheme"] = to_string(o.task.scheme);
  t["kind"] = to_string(o.task.kind);
  if (o.error) {
    t["status"] = "failed";
    t["error"] = *o.error;
    return t;
  }
  t["status"] = "ok";
  t["n_train"] = o.n_train;
  t["n_eval"] = o.n_eval;
  t["n_dropped"] = o.n_dropped;
  ojson metrics;
  if (o.classification) {
    const auto& r = *o.classification;
    metrics["accuracy"] = r.accuracy;
    metrics["ci_low"] = r.ci_low;
    metrics["ci_high"] = r.ci_high;
    metrics["n"] = r.n;
    metrics["classes"] = o.classes;
    metrics["confusion"] = r.confusion;
  } else {
    const auto& r = *o.regression;
    metrics["r_squared"] = r.r_squared;
    metrics["p_value"] = r.p_value;
    metrics["n"] = r.n;
  }
  t["metrics"] = metrics;
  t["history"] = {{"epochs", o.history.loss.size()},
                  {"final_loss", o.history.loss.empty() ? 0.0 : o.history.loss.back()},
                  {"loss", o.history.loss},
                  {"lr", o.history.lr},
                  {"digest", history_digest(o.history)}};
  t["probe_file"] = o.probe_file;
  return t;
}

/// Bar charts from a report: accuracy (with CI) for classification tasks and
/// R² (significant bars emphasised) for regression tasks. Keyed by file name.
inline std::map<std::string, std::string> report_charts(const ojson& report, double alpha = 0.01) {
  std::vector<std::string> systems;
  std::map<TaskKind, std::vector<std::string>> groups;
  std::map<std::pair<std::string, std::string>, const ojson*> cell;
  for (const auto& t : report.at("tasks")) {
    std::string sys = t.at("system");
    if (std::find(systems.begin(), systems.end(), sys) == systems.end()) systems.push_back(sys);
    if (t.at("status") != "ok") continue;
    TaskKind kind = t.at("kind") == "classification" ? TaskKind::kClassification : TaskKind::kRegression;
    std::string label = t.at("trait").get<std::string>() + " (" + t.at("scheme").get<std::string>() + ")";
    auto& g = groups[kind];
    if (std::find(g.begin(), g.end(), label) == g.end()) g.push_back(label);
    cell[{label, sys}] = &t;
  }
  std::map<std::string, std::string> charts;
  for (const auto& [kind, labels] : groups) {
    std::vector<svg::BarSeries> series;
    double lo = 0.0;
    for (const auto& sys : systems) {
      svg::BarSeries s;
      s.name = sys;
      for (const auto& label : labels) {
        auto it = cell.find({label, sys});
        if (it == cell.end()) {
          s.values.emplace_back();
          s.errors.emplace_back();
          s.emphasize.push_back(false);
          continue;
        }
        const auto& mj = it->second->at("metrics");
        if (kind == TaskKind::kClassification) {
          s.values.emplace_back(mj.at("accuracy").get<double>());
          s.errors.emplace_back(std::pair{mj.at("ci_low").get<double>(), mj.at("ci_high").get<double>()});
          s.emphasize.push_back(false);
        } else {
          double r2 = mj.at("r_squared");
          lo = std::min(lo, std::max(-1.0, r2));
          s.values.emplace_back(r2);
          s.errors.emplace_back();
          s.emphasize.push_back(mj.at("p_value").get<double>() < alpha);
        }
      }
      series.push_back(std::move(s));
    }
    if (kind == TaskKind::kClassification)
      charts["classification.svg"] = svg::bar_chart("Probe accuracy", "accuracy", labels, series, 0.0, 1.0);
    else
      charts["regression.svg"] = svg::bar_chart("Probe R\xC2\xB2", "R\xC2\xB2", labels, series,
                                                std::floor(lo * 5.0) / 5.0, 1.0);
  }
  return charts;
}

inline void write_charts(const fs::path& dir, const std::map<std::string, std::string>& charts) {
  for (const auto& [name, body] : charts) write_file_atomic(dir / name, body);
}

inline CommandOutcome cmd_probe(const RunContext& ctx) {
  const RunConfig& c = ctx.config;
  if (c.tasks.empty()) throw Error("probe: config lists no tasks");
  Manifest m = detail::load_run_manifest(c);
  bool needs_traits = false;
  for (const auto& t : c.tasks) needs_traits |= t.kind == TaskKind::kRegression;
  std::optional<std::string> traits_error;
  if (needs_traits) {
    fs::path tp = c.traits_file ? c.resolve(*c.traits_file) : ctx.outdir / "traits.csv";
    try {
      join_traits(m, parse_trait_csv(read_file(tp), tp.string()));
    } catch (const std::exception& e) {
      traits_error = e.what();
    }
  }

  std::map<std::string, EmbeddingTable> tables;
  std::map<std::string, std::string> table_errors;
  for (const auto& [name, in] : c.systems) {
    bool used = false;
    for (const auto& t : c.tasks) used |= std::find(t.systems.begin(), t.systems.end(), name) != t.systems.end();
    if (!used) continue;
    try {
      tables.emplace(name, load_embeddings(c.resolve(in.path), in.format));
    } catch (const std::exception& e) {
      table_errors[name] = e.what();
    }
  }

  std::vector<std::pair<std::string, TaskSpec>> jobs;
  for (const auto& t : c.tasks)
    for (const auto& s : t.systems) jobs.emplace_back(s, t);
  std::vector<TaskOutcome> results(jobs.size());
  auto errors = parallel_for(jobs.size(), ctx.jobs, [&](std::size_t i) {
    const auto& [system, spec] = jobs[i];
    results[i].system = system;
    results[i].task = spec;
    if (auto it = table_errors.find(system); it != table_errors.end()) throw Error(it->second);
    if (spec.kind == TaskKind::kRegression && traits_error) throw Error(*traits_error);
    results[i] = run_probe_task(c, ctx.outdir, m, tables.at(system), system, spec);
  });

  CommandOutcome out;
  ojson report;
  report["schema_version"] = kReportSchema;
  report["toolkit_version"] = kVersion;
  report["config_fingerprint"] = c.fingerprint();
  report["config"] = c.resolved;
  report["tasks"] = ojson::array();
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    if (errors[i]) {
      results[i].error = *errors[i];
      out.failures.push_back({"probe", detail::task_key(jobs[i].first, jobs[i].second), *errors[i]});
      *ctx.log << "probe " << detail::task_key(jobs[i].first, jobs[i].second) << ": FAILED: " << *errors[i] << "\n";
    } else {
      const auto& r = results[i];
      *ctx.log << "probe " << detail::task_key(r.system, r.task) << ": ";
      if (r.classification)
        *ctx.log << "accuracy " << svg::detail::num(r.classification->accuracy, 4) << "\n";
      else
        *ctx.log << "R2 " << svg::detail::num(r.regression->r_squared, 4) << " p "
                 << svg::detail::num(r.regression->p_value, 4) << "\n";
    }
    report["tasks"].push_back(task_json(results[i]));
  }
  report["failures"] = failures_json(out.failures);
  write_file_atomic(ctx.outdir / "report.json", report.dump(2) + "\n");
  write_charts(ctx.outdir / "charts", report_charts(report));
  return out;
}

// ---------------------------------------------------------------------------
// report

/// Re-renders charts from an existing report and prints a summary table.
inline CommandOutcome cmd_report(const RunContext& ctx, std::ostream& os) {
  const fs::path path = ctx.outdir / "report.json";
  ojson report = ojson::parse(read_file(path));
  if (report.value("schema_version", "") != kReportSchema)
    throw Error(path.string() + ": unsupported schema_version");
  write_charts(ctx.outdir / "charts", report_charts(report));
  os << "config " << report.at("config_fingerprint").get<std::string>() << "  toolkit "
     << report.at("toolkit_version").get<std::string>() << "\n";
  CommandOutcome out;
  for (const auto& t : report.at("tasks")) {
    std::string key = t.at("system").get<std::string>() + "/" + t.at("trait").get<std::string>() + "/" +
                      t.at("scheme").get<std::string>();
    os << key << "  ";
    if (t.at("status") != "ok") {
      os << "FAILED  " << t.at("error").get<std::string>() << "\n";
      out.failures.push_back({"report", key, t.at("error")});
      continue;
    }
    const auto& mj = t.at("metrics");
    if (t.at("kind") == "classification")
      os << "accuracy " << svg::detail::num(mj.at("accuracy"), 4) << "  ci [" << svg::detail::num(mj.at("ci_low"), 4)
         << ", " << svg::detail::num(mj.at("ci_high"), 4) << "]  n " << mj.at("n").get<std::size_t>() << "\n";
    else
      os << "R2 " << svg::detail::num(mj.at("r_squared"), 4) << "  p " << svg::detail::num(mj.at("p_value"), 4)
         << "  n " << mj.at("n").get<std::size_t>() << "\n";
  }
  return out;
}

// ---------------------------------------------------------------------------
// distance

inline ojson summary_json(const DistributionSummary& s) {
  return {{"group", s.group},
          {"count", s.count},
          {"mean", s.mean},
          {"stddev", s.stddev},
          {"deciles", s.deciles},
          {"overlap_with_peer", s.overlap_with_peer}};
}

inline CommandOutcome cmd_distance(const RunContext& ctx) {
  const RunConfig& c = ctx.config;
  Manifest m = detail::load_run_manifest(c);
  if (c.representations.empty()) throw Error("distance: no representations requested");
  CommandOutcome out;
  std::vector<PairedDistanceRecord> all;
  ojson summary;
  summary["config_fingerprint"] = c.fingerprint();
  summary["representations"] = ojson::object();

  for (auto rep : c.representations) {
    try {
      PairingResult pr;
      if (rep == Representation::kEmbedding) {
        if (!c.distance_system) throw Error("distance.system is required for the embedding level");
        const auto& in = c.systems.at(*c.distance_system);
        pr = bonafide_spoof_pairing(m, load_embeddings(c.resolve(in.path), in.format));
      } else {
        std::vector<const ManifestRow*> rows;
        for (const auto& r : m.rows) rows.push_back(&r);
        std::vector<SpectralFrames> frames(rows.size());
        auto errs = parallel_for(rows.size(), ctx.jobs, [&](std::size_t i) {
          const ManifestRow& r = *rows[i];
          if (c.frames_dir) {
            frames[i] = load_frames(c.resolve(*c.frames_dir) / (r.utt_id + ".frm"));
            return;
          }
          if (!r.audio_path) throw Error("utt_id '" + r.utt_id + "' has no audio_path");
          frames[i] = power_spectrogram(chunk_fixed(read_wav(detail::audio_file(c, *r.audio_path)), c.chunk_seconds),
                                        c.spectrogram);
        });
        for (std::size_t i = 0; i < rows.size(); ++i)
          if (errs[i]) throw Error(*errs[i]);
        std::map<std::string, SpectralFrames> by_id;
        for (std::size_t i = 0; i < rows.size(); ++i) by_id.emplace(rows[i]->utt_id, std::move(frames[i]));
        pr = bonafide_spoof_pairing(m, by_id);
      }
      if (pr.records.empty()) throw Error("no bonafide utterance has a same-speaker spoof");
      auto g = summarize_by_gender(pr.records);
      summary["representations"][to_string(rep)] = {{"records", pr.records.size()},
                                                    {"skipped_bonafide", pr.skipped},
                                                    {"overlap", g.female.overlap_with_peer},
                                                    {"female", summary_json(g.female)},
                                                    {"male", summary_json(g.male)}};
      std::vector<svg::HistSeries> hs(2);
      hs[0].name = "female";
      hs[1].name = "male";
      for (const auto& r : pr.records) hs[r.gender == Gender::kFemale ? 0 : 1].values.push_back(r.mean_distance);
      std::string xl = rep == Representation::kEmbedding ? "1 - cosine similarity" : "Itakura-Saito distance";
      write_file_atomic(ctx.outdir / "distance" / (std::string(to_string(rep)) + ".svg"),
                        svg::histogram_chart(std::string("Bonafide-spoof distance: ") + to_string(rep), xl, hs));
      *ctx.log << "distance " << to_string(rep) << ": " << pr.records.size() << " records, overlap "
               << svg::detail::num(g.female.overlap_with_peer, 4) << "\n";
      all.insert(all.end(), pr.records.begin(), pr.records.end());
    } catch (const std::exception& e) {
      out.failures.push_back({"distance", to_string(rep), e.what()});
    }
  }
  write_file_atomic(ctx.outdir / "distance" / "records.csv", serialize_distance_records(all));
  summary["failures"] = failures_json(out.failures);
  write_file_atomic(ctx.outdir / "distance" / "summary.json", summary.dump(2) + "\n");
  return out;
}

// ---------------------------------------------------------------------------
// perturb / sweep

inline CommandOutcome cmd_perturb(const RunContext& ctx) {
  const RunConfig& c = ctx.config;
  Manifest m = detail::load_run_manifest(c);
  if (c.perturb_rates.empty()) throw Error("perturb: no rates");
  CommandOutcome out;
  std::vector<const ManifestRow*> rows;
  for (const auto& r : m.rows) {
    if (r.audio_path)
      rows.push_back(&r);
    else
      out.failures.push_back({"perturb", r.utt_id, "no audio_path"});
  }
  if (rows.empty()) throw Error("perturb: no manifest row has an audio_path");
  for (double rate : c.perturb_rates) {
    const fs::path dir = ctx.outdir / "perturbed" / detail::rate_label(rate);
    const SincResampler rs(resampler_cutoff(rate));
    auto errs = parallel_for(rows.size(), ctx.jobs, [&](std::size_t i) {
      const fs::path src = detail::audio_file(c, *rows[i]->audio_path);
      const fs::path dst = dir / "wav" / (rows[i]->utt_id + ".wav");
      if (rate == 1.0)
        write_file_atomic(dst, read_file(src));
      else
        write_file_atomic(dst, serialize_wav(speed_perturb(read_wav(src), rate, rs)));
    });
    Manifest pm;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (errs[i]) {
        out.failures.push_back({"perturb", detail::rate_label(rate) + "/" + rows[i]->utt_id, *errs[i]});
        continue;
      }
      ManifestRow r = *rows[i];
      r.audio_path = "wav/" + r.utt_id + ".wav";
      pm.rows.push_back(std::move(r));
    }
    save_manifest(dir / "manifest.csv", pm, ManifestFormat::kCsv);
    *ctx.log << "perturb " << detail::rate_label(rate) << ": " << pm.size() << " files\n";
  }
  return out;
}

inline CommandOutcome cmd_sweep(const RunContext& ctx, const std::optional<fs::path>& chart_path) {
  const RunConfig& c = ctx.config;
  PerturbSweepConfig sc;
  sc.rates = c.sweep_rates;
  for (const auto& [rate, p] : c.sweep_scores) sc.score_files[rate] = c.resolve(p);
  auto table = run_sweep(sc);
  write_file_atomic(ctx.outdir / "sweep" / "eer.csv", serialize_sweep_table(table));
  std::vector<double> xs, ys;
  for (const auto& [rate, res] : table) {
    xs.push_back(rate);
    ys.push_back(res.eer);
    *ctx.log << "sweep " << detail::rate_label(rate) << ": EER " << svg::detail::num(res.eer, 4) << "\n";
  }
  write_file_atomic(chart_path ? *chart_path : ctx.outdir / "sweep" / "eer.svg",
                    svg::line_chart("EER vs speed-perturbation rate", "rate", "EER", xs, ys));
  return {};
}

// ---------------------------------------------------------------------------
// synth

/// Optional score-family block of a synth spec: one score file per rate with
/// class separation falling off linearly away from rate 1.
struct SynthScores {
  int n_bonafide = 200;
  int n_spoof = 800;
  double baseline_separation = 4.0;
  double degradation = 8.0;  // separation lost per unit of |rate - 1|
  std::vector<double> rates = default_perturb_rates();
};

inline CommandOutcome cmd_synth(const RunContext& ctx, const json& spec_json) {
  if (!spec_json.is_object()) throw Error("synth: spec must be an object");
  json core = spec_json;
  core.erase("scores");
  SynthSpec spec = parse_synth_spec(core);
  SynthCorpus corpus = gen_dataset(spec);

  ojson cfg;
  cfg["seed"] = spec.seed;
  cfg["manifest"] = {{"path", "manifest.csv"}, {"format", "csv"}};
  cfg["systems"] = {{"synthetic", {{"path", "embeddings.emb"}, {"format", "binary"}}}};

  bool has_regression = false;
  for (const auto& p : spec.planted_traits) has_regression |= p.kind == PlantKind::kLinearSubspace;
  if (has_regression) {
    for (const auto& p : spec.planted_traits)
      if (p.kind == PlantKind::kLinearSubspace) gen_regression_target(corpus, spec, p.trait);
    TraitTable tt;
    for (const auto& r : corpus.manifest.rows) tt.emplace_back(r.utt_id, r.acoustic);
    write_file_atomic(ctx.outdir / "traits.csv", serialize_trait_csv(tt));
    cfg["traits_file"] = "traits.csv";
  }

  ojson tasks = ojson::array();
  for (const auto& p : spec.planted_traits) {
    if (p.kind == PlantKind::kNone) continue;
    PartitionScheme scheme = p.trait == Trait::kSpeakerId ? PartitionScheme::kT01
                             : is_attack_trait(p.trait)   ? PartitionScheme::kT03
                                                          : PartitionScheme::kT02;
    tasks.push_back({{"trait", to_string(p.trait)}, {"scheme", to_string(scheme)}});
  }
  cfg["tasks"] = tasks;
  cfg["distance"] = {{"system", "synthetic"}};

  save_manifest(ctx.outdir / "manifest.csv", corpus.manifest, ManifestFormat::kCsv);
  save_embeddings(ctx.outdir / "embeddings.emb", corpus.embeddings, EmbeddingFormat::kBinary);

  if (spec.audio) {
    const auto& rows = corpus.manifest.rows;
    auto errs = parallel_for(rows.size(), ctx.jobs, [&](std::size_t i) {
      write_wav(ctx.outdir / *rows[i].audio_path, gen_utterance_audio(rows[i], *spec.audio, spec.seed));
    });
    for (std::size_t i = 0; i < rows.size(); ++i)
      if (errs[i]) throw Error(*errs[i]);
  }

  if (spec_json.contains("scores")) {
    const json& sj = spec_json.at("scores");
    SynthScores ss;
    ss.n_bonafide = sj.value("n_bonafide", ss.n_bonafide);
    ss.n_spoof = sj.value("n_spoof", ss.n_spoof);
    ss.baseline_separation = sj.value("baseline_separation", ss.baseline_separation);
    ss.degradation = sj.value("degradation", ss.degradation);
    if (sj.contains("rates")) ss.rates = sj.at("rates").get<std::vector<double>>();
    if (ss.n_bonafide < 1 || ss.n_spoof < 1) throw Error("synth: scores need at least one row per class");
    ojson files = ojson::object();
    for (double rate : ss.rates) {
      double sep = std::max(0.0, ss.baseline_separation - ss.degradation * std::abs(rate - 1.0));
      std::string name = "scores/rate_" + detail::rate_label(rate) + ".txt";
      save_scores(ctx.outdir / name,
                  gen_scores(ss.n_bonafide, ss.n_spoof, sep, derive_seed(spec.seed, "synth/scores/" + detail::rate_label(rate))));
      files[format_double(rate)] = name;
    }
    cfg["sweep"] = {{"rates", ss.rates}, {"scores", files}};
  }

  write_file_atomic(ctx.outdir / "config.json", cfg.dump(2) + "\n");
  *ctx.log << "synth: " << corpus.manifest.size() << " utterances, dim " << spec.dim << "\n";
  return {};
}

}  // namespace probekit
