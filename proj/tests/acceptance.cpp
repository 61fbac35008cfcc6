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

// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fail.
//
//   probekit_acceptance            run everything
//   probekit_acceptance 2 9        run only criteria 2 and 9

#include <chrono>
#include <cmath>
#include <functional>
#include <iostream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "oracles.hpp"
#include "probe_harness.hpp"
#include "probekit/distance_analysis.hpp"
#include "probekit/perturbation.hpp"
#include "probekit/pipeline.hpp"
#include "probekit/synth.hpp"
#include "probekit/trait_extract.hpp"
#include "test_util.hpp"

namespace probekit {
namespace {

namespace fs = std::filesystem;

struct Verdict {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << "[failed: " << what << "] ";
    }
  }
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

// 1 -------------------------------------------------------------------------

void gradients(Verdict& v) {
  auto t0 = Clock::now();
  double worst_ce = 0.0, worst_mse = 0.0;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    auto g = oracle::gradient_check(1000 + seed);
    worst_ce = std::max(worst_ce, g.ce);
    worst_mse = std::max(worst_mse, g.mse);
  }
  double secs = seconds_since(t0);
  v.detail << "max rel err ce " << worst_ce << ", mse " << worst_mse << "; " << secs << " s ";
  v.require(worst_ce <= 1e-4 && worst_mse <= 1e-4, "relative error <= 1e-4");
  v.require(secs < 10.0, "runtime < 10 s");
}

// 2 -------------------------------------------------------------------------

SynthSpec recoverability_spec(double strength, std::uint64_t seed) {
  SynthSpec s;
  s.n_speakers = 200;
  s.utts_per_speaker = 10;
  s.dim = 160;
  s.noise_sigma = 0.01;
  s.seed = seed;
  s.planted_traits = {{Trait::kGender, PlantKind::kCluster, strength}};
  return s;
}

void recoverability(Verdict& v) {
  auto t0 = Clock::now();
  SynthCorpus c = gen_dataset(recoverability_spec(1.0, 1));
  testing::FitOptions opt;
  opt.hidden_dim = 256;
  opt.seed = 1;
  double strong = testing::fit_probe(c.manifest, c.embeddings, Trait::kGender, opt).accuracy;
  v.detail << "strength 1 accuracy " << strong << "; ";
  v.require(strong >= 0.95, "accuracy >= 0.95 at strength 1");

  std::size_t hits = 0, n = 0;
  double lo_seed = 1.0, hi_seed = 0.0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    SynthCorpus z = gen_dataset(recoverability_spec(0.0, 100 + seed));
    opt.seed = 100 + seed;
    auto r = testing::fit_probe(z.manifest, z.embeddings, Trait::kGender, opt);
    hits += r.hits;
    n += r.n_eval;
    lo_seed = std::min(lo_seed, r.accuracy);
    hi_seed = std::max(hi_seed, r.accuracy);
  }
  // Normal approximation to the two-sided 99% binomial band at p = 0.5.
  const double pooled = static_cast<double>(hits) / static_cast<double>(n);
  const double half = 2.5758293035489 * std::sqrt(0.25 / static_cast<double>(n));
  double secs = seconds_since(t0);
  v.detail << "strength 0 pooled accuracy " << pooled << " over " << n << " eval rows (band 0.5 +/- " << half
           << ", per-seed range " << lo_seed << ".." << hi_seed << "); " << secs << " s ";
  v.require(std::abs(pooled - 0.5) <= half, "strength 0 inside 99% band");
  v.require(secs < 120.0, "runtime < 2 min");
}

// 3 -------------------------------------------------------------------------

SynthSpec regression_spec(std::uint64_t seed) {
  SynthSpec s;
  s.n_speakers = 200;
  s.utts_per_speaker = 10;
  s.dim = 32;
  s.noise_sigma = 0.0;
  s.seed = seed;
  s.planted_traits = {{Trait::kF0Mean, PlantKind::kLinearSubspace, 1.0}};
  return s;
}

void regression(Verdict& v) {
  testing::FitOptions opt;
  opt.hidden_dim = 256;
  opt.scheme = PartitionScheme::kT02;
  opt.n_perm = 999;
  {
    SynthSpec s = regression_spec(7);
    SynthCorpus c = gen_dataset(s);
    gen_regression_target(c, s, Trait::kF0Mean);
    opt.seed = 7;
    auto r = testing::fit_probe(c.manifest, c.embeddings, Trait::kF0Mean, opt);
    v.detail << "noiseless R2 " << r.r_squared << ", p " << r.p_value << "; ";
    v.require(r.r_squared >= 0.99, "R2 >= 0.99");
    v.require(r.p_value <= 0.001, "p <= 0.001");
  }
  int insignificant = 0;
  for (std::uint64_t trial = 0; trial < 20; ++trial) {
    SynthSpec s = regression_spec(200 + trial);
    SynthCorpus c = gen_dataset(s);
    gen_regression_target(c, s, Trait::kF0Mean);
    std::vector<std::optional<double>> values;
    for (const auto& row : c.manifest.rows) values.push_back(row.acoustic.f0_mean);
    std::mt19937_64 rng(derive_seed(trial, "shuffle-target"));
    std::shuffle(values.begin(), values.end(), rng);
    for (std::size_t i = 0; i < values.size(); ++i) c.manifest.rows[i].acoustic.f0_mean = values[i];
    opt.seed = 200 + trial;
    insignificant += testing::fit_probe(c.manifest, c.embeddings, Trait::kF0Mean, opt).p_value >= 0.05;
  }
  v.detail << "shuffled target p >= 0.05 in " << insignificant << "/20 ";
  v.require(insignificant >= 18, "shuffled p >= 0.05 in >= 90% of trials");
}

// 4 -------------------------------------------------------------------------

SpectralFrames frames(std::size_t n, std::size_t b, std::vector<double> data) {
  SpectralFrames s;
  s.num_frames = n;
  s.num_bins = b;
  s.data = std::move(data);
  return s;
}

void formulas(Verdict& v) {
  SpectralFrames p = frames(2, 1, {2, 2}), q = frames(2, 1, {1, 1});
  v.require(itakura_saito(p, p) == 0.0, "IS(P,P) == 0");
  double pq = itakura_saito(p, q), qp = itakura_saito(q, p);
  v.require(std::abs(pq - 0.306853) <= 1e-6 && std::abs(qp - 0.193147) <= 1e-6, "IS hand cases");

  std::mt19937_64 rng(4);
  std::lognormal_distribution<double> pos(0.0, 2.0);
  std::uniform_int_distribution<std::size_t> dim(1, 6);
  double min_is = INFINITY;
  for (int i = 0; i < 10000; ++i) {
    std::size_t n = dim(rng), b = dim(rng);
    std::vector<double> a(n * b), c(n * b);
    for (auto& x : a) x = pos(rng);
    for (auto& x : c) x = pos(rng);
    min_is = std::min(min_is, itakura_saito(frames(n, b, a), frames(n, b, c)));
  }
  v.require(min_is >= 0.0, "IS non-negative over 1e4 pairs");

  std::vector<double> preds = {0, 1}, targets = {0, 2};
  double r2_half = r_squared(preds, targets);
  v.require(std::abs(r2_half - 0.5) <= 1e-12, "R2 hand case 0.5");

  Matrix logits = Matrix::Zero(2, 1);
  std::vector<int> t = {0};
  double ce = cross_entropy(logits, t);
  v.require(std::abs(ce - std::log(2.0)) <= 1e-9, "CE uniform case ln 2");

  std::vector<double> a = {1, 1}, b = {1, 0};
  double cos = cosine_similarity(a, b);
  v.require(std::abs(cos - 0.707107) <= 1e-6, "cosine hand case");
  v.detail << "IS " << pq << "/" << qp << ", min IS " << min_is << ", R2 " << r2_half << ", CE " << ce
           << ", cosine " << cos << " ";
}

// 5 -------------------------------------------------------------------------

void eer_oracle(Verdict& v) {
  std::mt19937_64 rng(55);
  std::uniform_int_distribution<int> size(1, 60), coarse(0, 8);
  std::normal_distribution<double> g(0.0, 1.0);
  double worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    bool ties = trial % 4 == 0;
    std::vector<double> pos(static_cast<std::size_t>(size(rng))), neg(static_cast<std::size_t>(size(rng)));
    for (auto& x : pos) x = ties ? coarse(rng) + 1.0 : g(rng) + 1.0;
    for (auto& x : neg) x = ties ? coarse(rng) : g(rng);
    worst = std::max(worst, std::abs(eer(pos, neg).eer - oracle::eer_brute_force(pos, neg)));
  }
  std::vector<double> hi = {3, 4, 5}, lo = {-1, 0, 1};
  std::vector<double> same(50);
  for (auto& x : same) x = g(rng);
  double sep = eer(hi, lo).eer, ident = eer(same, same).eer;
  v.detail << "max |eer - oracle| " << worst << ", separable " << sep << ", identical " << ident << " ";
  v.require(worst <= 1e-9, "oracle agreement within 1e-9");
  v.require(sep == 0.0, "separable gives 0");
  v.require(std::abs(ident - 0.5) <= 1e-12, "identical gives 0.5");
}

// 6 -------------------------------------------------------------------------

void pitch(Verdict& v) {
  double worst_tone = 0.0;
  for (int k = 0; k < 20; ++k) {
    double f = 80.0 + 320.0 * k / 19.0;
    worst_tone = std::max(worst_tone, std::abs(f0_mean(gen_tone(f, 1.0, 16000)) - f));
  }
  double worst_ratio = 0.0;
  for (double f : {100.0, 150.0, 220.0, 300.0})
    for (double r : {0.8, 0.9, 1.1, 1.2}) {
      Waveform w = gen_tone(f, 1.0, 16000);
      double shifted = f0_mean(speed_perturb(w, r)) / f0_mean(w);
      worst_ratio = std::max(worst_ratio, std::abs(shifted / r - 1.0));
    }
  v.detail << "max tone error " << worst_tone << " Hz, max relative shift error " << worst_ratio << " ";
  v.require(worst_tone <= 1.0, "tones within 1 Hz");
  v.require(worst_ratio <= 0.01, "speed shift within 1%");
}

// 7 -------------------------------------------------------------------------

void partitions(Verdict& v) {
  std::mt19937_64 rng(77);
  int t02_checked = 0, t03_checked = 0, violations = 0;
  for (int i = 0; i < 1000; ++i) {
    Manifest m = testing::random_manifest(rng);
    std::map<std::string, const ManifestRow*> rows;
    for (const auto& r : m.rows) rows[r.utt_id] = &r;
    const auto seed = static_cast<std::uint64_t>(i);
    for (auto scheme : {PartitionScheme::kT01, PartitionScheme::kT02, PartitionScheme::kT03}) {
      std::optional<Split> s;
      try {
        s = partition(m, scheme, 0.8, seed);
      } catch (const Error&) {
      }
      std::optional<Split> again;
      try {
        again = partition(m, scheme, 0.8, seed);
      } catch (const Error&) {
      }
      if (s.has_value() != again.has_value() || (s && (s->train != again->train || s->eval != again->eval)))
        ++violations;
      if (!s) continue;
      if (scheme == PartitionScheme::kT02) {
        ++t02_checked;
        std::set<std::string> train;
        for (const auto& id : s->train) train.insert(rows.at(id)->speaker_id);
        for (const auto& id : s->eval) violations += train.count(rows.at(id)->speaker_id) > 0;
      }
      if (scheme == PartitionScheme::kT03) {
        ++t03_checked;
        std::map<std::string, int> total;
        std::set<std::string> tr, ev;
        for (const auto& r : m.rows) ++total[*class_of(r, Trait::kAttackId)];
        for (const auto& id : s->train) tr.insert(*class_of(*rows.at(id), Trait::kAttackId));
        for (const auto& id : s->eval) ev.insert(*class_of(*rows.at(id), Trait::kAttackId));
        for (const auto& [cls, n] : total) violations += !tr.count(cls) || !ev.count(cls);
      }
    }
    std::map<std::string, int> counts;
    for (const auto& r : m.rows) ++counts[*class_of(r, Trait::kAttackId)];
    bool feasible = std::all_of(counts.begin(), counts.end(), [](const auto& kv) { return kv.second >= 2; });
    if (feasible) {
      try {
        partition(m, PartitionScheme::kT03, 0.8, seed);
      } catch (const Error&) {
        ++violations;
      }
    }
  }
  v.detail << "1000 manifests, " << t02_checked << " T02 and " << t03_checked << " T03 splits, " << violations
           << " violations ";
  v.require(violations == 0, "no invariant violations");
}

// 8 -------------------------------------------------------------------------

RunContext context_in(const fs::path& data, const fs::path& out, std::ostream& log) {
  RunContext ctx;
  ctx.config = load_config(data / "config.json");
  ctx.outdir = out;
  ctx.log = &log;
  return ctx;
}

void gender_ablation(Verdict& v) {
  testing::TempDir dir("acceptance_ablation");
  std::ostringstream log;
  RunContext ctx;
  ctx.outdir = dir / "data";
  ctx.log = &log;
  // Embeddings carry no gender plant; the audio path distorts male spoofs more.
  json spec = json::parse(R"({
    "n_speakers": 60, "utts_per_speaker": 6, "dim": 32, "seed": 8, "spoof_fraction": 0.5,
    "audio": {"min_seconds": 1.0, "max_seconds": 1.0, "encoder_gender_gap": 3.0}
  })");
  if (!cmd_synth(ctx, spec).ok()) throw Error("synth failed");
  json cfg = json::parse(read_file(dir / "data/config.json"));
  cfg["distance"]["chunk_seconds"] = 1.0;
  write_file_atomic(dir / "data/config.json", cfg.dump(2));
  RunContext run = context_in(dir / "data", dir / "out", log);
  if (!cmd_distance(run).ok()) throw Error("distance failed: " + log.str());
  auto summary = json::parse(read_file(dir / "out/distance/summary.json"));
  double emb = summary["representations"]["embedding"]["overlap"].get<double>();
  double enc = summary["representations"]["encoder_spectral"]["overlap"].get<double>();
  v.detail << "overlap embedding " << emb << ", encoder " << enc << " ";
  v.require(emb > enc, "overlap(embedding) > overlap(encoder)");
}

// 9 -------------------------------------------------------------------------

std::map<std::string, std::string> tree(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file()) out[fs::relative(e.path(), root).generic_string()] = read_file(e.path());
  return out;
}

void determinism(Verdict& v) {
  testing::TempDir dir("acceptance_determinism");
  std::ostringstream log;
  RunContext ctx;
  ctx.outdir = dir / "data";
  ctx.log = &log;
  json spec = json::parse(R"({
    "n_speakers": 12, "utts_per_speaker": 6, "dim": 16, "seed": 9, "spoof_fraction": 0.5,
    "planted_traits": [{"trait_name": "gender", "strength": 1.0},
                       {"trait_name": "f0_mean", "strength": 0.8}],
    "audio": {"min_seconds": 0.5, "max_seconds": 0.8, "encoder_gender_gap": 2.0},
    "scores": {"n_bonafide": 200, "n_spoof": 400}
  })");
  if (!cmd_synth(ctx, spec).ok()) throw Error("synth failed");
  json cfg = json::parse(read_file(dir / "data/config.json"));
  cfg["train_fraction"] = 0.7;
  cfg["train"] = {{"epochs", 5}, {"hidden_dim", 16}};
  cfg["metrics"] = {{"n_boot", 300}, {"n_perm", 299}};
  cfg["perturb"] = {{"rates", {0.9, 1.0, 1.1}}};
  cfg["distance"]["chunk_seconds"] = 1.0;
  write_file_atomic(dir / "data/config.json", cfg.dump(2));

  for (const char* out : {"run_a", "run_b"}) {
    RunContext run = context_in(dir / "data", dir / out, log);
    run.jobs = std::string(out) == "run_a" ? 1 : 4;
    for (auto step : std::vector<std::function<CommandOutcome()>>{
             [&] { return cmd_partition(run); }, [&] { return cmd_probe(run); },
             [&] { return cmd_distance(run); }, [&] { return cmd_perturb(run); },
             [&] { return cmd_sweep(run, std::nullopt); }})
      if (!step().ok()) throw Error(std::string("pipeline step failed in ") + out + ": " + log.str());
  }
  auto a = tree(dir / "run_a"), b = tree(dir / "run_b");
  std::size_t differing = 0, reports = 0, charts = 0;
  for (const auto& [rel, bytes] : a) {
    auto it = b.find(rel);
    if (it == b.end() || it->second != bytes) {
      ++differing;
      v.detail << "differs: " << rel << "; ";
    }
    reports += rel.ends_with(".json");
    charts += rel.ends_with(".svg");
  }
  v.detail << a.size() << " files (" << reports << " json, " << charts << " svg), " << differing << " differ ";
  v.require(a.size() == b.size(), "same file set");
  v.require(differing == 0, "byte-identical outputs");
  v.require(reports > 0 && charts > 0 && a.count("report.json"), "reports and charts present");
}

// 10 ------------------------------------------------------------------------

void round_trips(Verdict& v) {
  testing::TempDir dir("acceptance_formats");
  int checked = 0;
  auto same = [&](const std::string& what, const std::string& first, const std::string& second) {
    ++checked;
    v.require(first == second, what);
  };

  SynthSpec s;
  s.n_speakers = 6;
  s.utts_per_speaker = 5;
  s.dim = 24;
  s.spoof_fraction = 0.4;
  s.planted_traits = {{Trait::kF0Mean, PlantKind::kLinearSubspace, 0.7}};
  SynthCorpus c = gen_dataset(s);
  gen_regression_target(c, s, Trait::kF0Mean);

  std::string emb = serialize_embeddings_emb1(c.embeddings);
  same("EMB1 bytes", emb, serialize_embeddings_emb1(parse_embeddings_emb1(emb)));
  save_embeddings(dir / "a.emb", c.embeddings, EmbeddingFormat::kBinary);
  save_embeddings(dir / "b.emb", load_embeddings(dir / "a.emb", EmbeddingFormat::kBinary), EmbeddingFormat::kBinary);
  same("EMB1 file", read_file(dir / "a.emb"), read_file(dir / "b.emb"));

  SpectralFrames f = power_spectrogram(gen_tone(180.0, 0.4, 16000));
  std::string frm = serialize_frames(f);
  same("FRM1 bytes", frm, serialize_frames(parse_frames(frm)));
  save_frames(dir / "a.frm", f);
  save_frames(dir / "b.frm", load_frames(dir / "a.frm"));
  same("FRM1 file", read_file(dir / "a.frm"), read_file(dir / "b.frm"));

  for (auto kind : {TaskKind::kClassification, TaskKind::kRegression}) {
    MLPProbe p = init_probe(24, 12, kind == TaskKind::kRegression ? 1 : 3, kind, 10);
    p.target_mean = 1.25;
    p.target_std = 0.5;
    std::string prb = serialize_probe(p);
    same("PRB1 bytes", prb, serialize_probe(parse_probe(prb)));
    save_probe(dir / "a.prb", p);
    save_probe(dir / "b.prb", load_probe(dir / "a.prb"));
    same("PRB1 file", read_file(dir / "a.prb"), read_file(dir / "b.prb"));
  }

  std::mt19937_64 rng(10);
  std::vector<Manifest> manifests = {c.manifest};
  for (int i = 0; i < 50; ++i) manifests.push_back(testing::random_manifest(rng));
  for (const auto& m : manifests) {
    std::string csv = serialize_manifest_csv(m), jsonl = serialize_manifest_jsonl(m);
    same("manifest CSV", csv, serialize_manifest_csv(parse_manifest_csv(csv)));
    same("manifest JSONL", jsonl, serialize_manifest_jsonl(parse_manifest_jsonl(jsonl)));
    same("manifest CSV->JSONL->CSV", csv, serialize_manifest_csv(parse_manifest_jsonl(jsonl)));
  }
  save_manifest(dir / "a.jsonl", c.manifest, ManifestFormat::kJsonl);
  save_manifest(dir / "b.jsonl", load_manifest(dir / "a.jsonl", ManifestFormat::kJsonl), ManifestFormat::kJsonl);
  same("manifest JSONL file", read_file(dir / "a.jsonl"), read_file(dir / "b.jsonl"));

  ScoreFile sc = gen_scores(300, 700, 1.5, 10);
  std::string txt = serialize_scores(sc);
  same("score text", txt, serialize_scores(parse_scores(txt)));
  save_scores(dir / "a.txt", sc);
  save_scores(dir / "b.txt", load_scores(dir / "a.txt"));
  same("score file", read_file(dir / "a.txt"), read_file(dir / "b.txt"));

  v.detail << checked << " round trips compared ";
}

struct Criterion {
  int id;
  const char* name;
  std::function<void(Verdict&)> run;
};

int run(const std::set<int>& only) {
  const std::vector<Criterion> all = {
      {1, "gradient check", gradients},          {2, "probing recoverability", recoverability},
      {3, "regression recoverability", regression}, {4, "formula checks", formulas},
      {5, "EER oracle", eer_oracle},             {6, "F0 and speed perturbation", pitch},
      {7, "partition invariants", partitions},   {8, "gender ablation overlap", gender_ablation},
      {9, "pipeline determinism", determinism},  {10, "format round trips", round_trips},
  };
  int failed = 0;
  for (const auto& c : all) {
    if (!only.empty() && !only.count(c.id)) continue;
    Verdict v;
    auto t0 = Clock::now();
    try {
      c.run(v);
    } catch (const std::exception& e) {
      v.pass = false;
      v.detail << "[exception: " << e.what() << "] ";
    }
    failed += !v.pass;
    std::cout << (v.pass ? "PASS" : "FAIL") << " criterion " << c.id << " (" << c.name << "): " << v.detail.str()
              << "[" << seconds_since(t0) << " s]" << std::endl;
  }
  return failed == 0 ? 0 : 1;
}

}  // namespace
}  // namespace probekit

int main(int argc, char** argv) {
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));
  return probekit::run(only);
}
