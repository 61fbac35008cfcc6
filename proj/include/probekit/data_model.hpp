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

// Manifests, embedding tables, label spaces and the three partitioning
// schemes used by the probing experiments.

#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>

#include "probekit/common.hpp"
#include "probekit/csv.hpp"

namespace probekit {

enum class Gender { kFemale, kMale };
enum class AttackType { kTTS, kVC };

inline const char* to_string(Gender g) { return g == Gender::kFemale ? "female" : "male"; }
inline const char* to_string(AttackType a) { return a == AttackType::kTTS ? "TTS" : "VC"; }

inline Gender parse_gender(std::string_view s) {
  if (s == "female" || s == "f" || s == "F" || s == "Female") return Gender::kFemale;
  if (s == "male" || s == "m" || s == "M" || s == "Male") return Gender::kMale;
  throw Error("unknown gender '" + std::string(s) + "'");
}

inline AttackType parse_attack_type(std::string_view s) {
  if (s == "TTS" || s == "tts") return AttackType::kTTS;
  if (s == "VC" || s == "vc") return AttackType::kVC;
  throw Error("unknown attack type '" + std::string(s) + "'");
}

/// Measured acoustic traits of one utterance; any of them may be missing.
struct TraitValues {
  std::optional<double> f0_mean;        // Hz
  std::optional<double> speaking_rate;  // words per second
  std::optional<double> duration;       // seconds
  std::optional<double> snr;            // dB
};

struct ManifestRow {
  std::string utt_id;
  std::string speaker_id;
  Gender gender = Gender::kFemale;
  int age = 0;
  std::string accent;
  bool is_bonafide = true;
  std::optional<std::string> attack_id;
  std::optional<AttackType> attack_type;
  std::optional<std::string> transcript;
  std::optional<std::string> audio_path;

  // Joined from a trait file; not part of the manifest formats.
  TraitValues acoustic;
};

struct Manifest {
  std::vector<ManifestRow> rows;

  std::size_t size() const { return rows.size(); }
  bool empty() const { return rows.empty(); }

  const ManifestRow* find(std::string_view utt_id) const {
    for (const auto& r : rows)
      if (r.utt_id == utt_id) return &r;
    return nullptr;
  }
};

enum class ManifestFormat { kCsv, kJsonl };

inline constexpr const char* kManifestHeader =
    "utt_id,speaker_id,gender,age,accent,is_bonafide,attack_id,attack_type,transcript,audio_path";

/// Throws on duplicate ids and bonafide/attack conflicts.
inline void validate(const Manifest& m) {
  std::unordered_set<std::string> seen;
  for (std::size_t i = 0; i < m.rows.size(); ++i) {
    const auto& r = m.rows[i];
    if (r.utt_id.empty()) throw Error("manifest row " + std::to_string(i + 1) + ": empty utt_id");
    if (!seen.insert(r.utt_id).second) throw Error("duplicate utt_id '" + r.utt_id + "'");
    if (r.is_bonafide && (r.attack_id || r.attack_type))
      throw Error("utt '" + r.utt_id + "': bonafide/attack conflict");
    if (!r.is_bonafide && !r.attack_id)
      throw Error("utt '" + r.utt_id + "': spoofed row without attack_id");
  }
}

namespace detail {

inline std::optional<std::string> opt_field(const std::string& s) {
  if (s.empty()) return std::nullopt;
  return s;
}

inline bool parse_bool(std::string_view s, bool* out) {
  if (s == "true" || s == "1" || s == "True" || s == "TRUE") {
    *out = true;
    return true;
  }
  if (s == "false" || s == "0" || s == "False" || s == "FALSE") {
    *out = false;
    return true;
  }
  return false;
}

}  // namespace detail

inline Manifest parse_manifest_csv(std::string_view text, const std::string& what = "manifest") {
  auto records = csv::parse(text, what);
  if (records.empty()) throw Error(what + ": missing header");
  std::string header;
  for (std::size_t k = 0; k < records[0].fields.size(); ++k)
    header += (k ? "," : "") + records[0].fields[k];
  if (header != kManifestHeader)
    throw Error(what + ": line 1: unexpected header '" + header + "'");
  Manifest m;
  for (std::size_t n = 1; n < records.size(); ++n) {
    const auto& rec = records[n];
    auto fail = [&](const std::string& msg) {
      return Error(what + ": line " + std::to_string(rec.line) + ": " + msg);
    };
    if (rec.fields.size() != 10)
      throw fail("expected 10 fields, got " + std::to_string(rec.fields.size()));
    const auto& f = rec.fields;
    ManifestRow r;
    r.utt_id = f[0];
    r.speaker_id = f[1];
    if (r.speaker_id.empty()) throw fail("empty speaker_id");
    try {
      r.gender = parse_gender(f[2]);
    } catch (const Error& e) {
      throw fail(e.what());
    }
    long long age;
    if (!parse_int(f[3], &age)) throw fail("bad age '" + f[3] + "'");
    r.age = static_cast<int>(age);
    r.accent = f[4];
    if (!detail::parse_bool(f[5], &r.is_bonafide)) throw fail("bad is_bonafide '" + f[5] + "'");
    r.attack_id = detail::opt_field(f[6]);
    if (!f[7].empty()) {
      try {
        r.attack_type = parse_attack_type(f[7]);
      } catch (const Error& e) {
        throw fail(e.what());
      }
    }
    r.transcript = detail::opt_field(f[8]);
    r.audio_path = detail::opt_field(f[9]);
    if (r.is_bonafide && (r.attack_id || r.attack_type)) throw fail("bonafide/attack conflict");
    m.rows.push_back(std::move(r));
  }
  validate(m);
  return m;
}

inline Manifest parse_manifest_jsonl(std::string_view text, const std::string& what = "manifest") {
  Manifest m;
  std::size_t line = 0, start = 0;
  while (start < text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view raw = text.substr(start, end - start);
    start = end + 1;
    ++line;
    if (!raw.empty() && raw.back() == '\r') raw.remove_suffix(1);
    if (raw.find_first_not_of(" \t") == std::string_view::npos) continue;
    auto fail = [&](const std::string& msg) {
      return Error(what + ": line " + std::to_string(line) + ": " + msg);
    };
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(raw);
    } catch (const nlohmann::json::exception& e) {
      throw fail(std::string("parse error: ") + e.what());
    }
    if (!j.is_object()) throw fail("expected an object");
    auto str = [&](const char* key, bool required) -> std::optional<std::string> {
      auto it = j.find(key);
      if (it == j.end() || it->is_null()) {
        if (required) throw fail(std::string("missing '") + key + "'");
        return std::nullopt;
      }
      if (!it->is_string()) throw fail(std::string("'") + key + "' must be a string");
      auto s = it->get<std::string>();
      if (s.empty()) {
        if (required) throw fail(std::string("empty '") + key + "'");
        return std::nullopt;
      }
      return s;
    };
    ManifestRow r;
    try {
      r.utt_id = *str("utt_id", true);
      r.speaker_id = *str("speaker_id", true);
      r.gender = parse_gender(*str("gender", true));
      auto age = j.find("age");
      if (age == j.end() || !age->is_number_integer()) throw fail("'age' must be an integer");
      r.age = age->get<int>();
      r.accent = str("accent", false).value_or("");
      auto bon = j.find("is_bonafide");
      if (bon == j.end() || !bon->is_boolean()) throw fail("'is_bonafide' must be a boolean");
      r.is_bonafide = bon->get<bool>();
      r.attack_id = str("attack_id", false);
      if (auto t = str("attack_type", false)) r.attack_type = parse_attack_type(*t);
      r.transcript = str("transcript", false);
      r.audio_path = str("audio_path", false);
    } catch (const nlohmann::json::exception& e) {
      throw fail(e.what());
    } catch (const Error& e) {
      std::string msg = e.what();
      if (msg.rfind(what, 0) == 0) throw;
      throw fail(msg);
    }
    if (r.is_bonafide && (r.attack_id || r.attack_type)) throw fail("bonafide/attack conflict");
    m.rows.push_back(std::move(r));
  }
  validate(m);
  return m;
}

inline Manifest load_manifest(const std::filesystem::path& path, ManifestFormat format) {
  std::string text = read_file(path);
  return format == ManifestFormat::kCsv ? parse_manifest_csv(text, path.string())
                                        : parse_manifest_jsonl(text, path.string());
}

inline std::string serialize_manifest_csv(const Manifest& m) {
  std::string out = std::string(kManifestHeader) + "\n";
  for (const auto& r : m.rows) {
    csv::append_row(out, {r.utt_id, r.speaker_id, to_string(r.gender), std::to_string(r.age),
                          r.accent, r.is_bonafide ? "true" : "false", r.attack_id.value_or(""),
                          r.attack_type ? to_string(*r.attack_type) : "",
                          r.transcript.value_or(""), r.audio_path.value_or("")});
  }
  return out;
}

inline std::string serialize_manifest_jsonl(const Manifest& m) {
  std::string out;
  for (const auto& r : m.rows) {
    nlohmann::ordered_json j;
    auto opt = [](const std::optional<std::string>& s) {
      return s ? nlohmann::ordered_json(*s) : nlohmann::ordered_json(nullptr);
    };
    j["utt_id"] = r.utt_id;
    j["speaker_id"] = r.speaker_id;
    j["gender"] = to_string(r.gender);
    j["age"] = r.age;
    j["accent"] = r.accent;
    j["is_bonafide"] = r.is_bonafide;
    j["attack_id"] = opt(r.attack_id);
    j["attack_type"] = r.attack_type ? nlohmann::ordered_json(to_string(*r.attack_type))
                                     : nlohmann::ordered_json(nullptr);
    j["transcript"] = opt(r.transcript);
    j["audio_path"] = opt(r.audio_path);
    out += j.dump();
    out.push_back('\n');
  }
  return out;
}

inline void save_manifest(const std::filesystem::path& path, const Manifest& m,
                          ManifestFormat format) {
  write_file_atomic(path, format == ManifestFormat::kCsv ? serialize_manifest_csv(m)
                                                         : serialize_manifest_jsonl(m));
}

// ---------------------------------------------------------------------------
// Embedding tables

/// Fixed-dimension vectors keyed by utterance id, in insertion order.
class EmbeddingTable {
 public:
  explicit EmbeddingTable(std::size_t dim) : dim_(dim) {
    if (dim == 0) throw Error("embedding dim must be positive");
  }

  void add(const std::string& utt_id, std::span<const double> v) {
    if (v.size() != dim_)
      throw Error("embedding '" + utt_id + "': dim mismatch (" + std::to_string(v.size()) +
                  " vs " + std::to_string(dim_) + ")");
    for (double x : v)
      if (!std::isfinite(x)) throw Error("embedding '" + utt_id + "': non-finite component");
    if (!index_.emplace(utt_id, ids_.size()).second)
      throw Error("duplicate embedding utt_id '" + utt_id + "'");
    ids_.push_back(utt_id);
    data_.insert(data_.end(), v.begin(), v.end());
  }

  std::size_t dim() const { return dim_; }
  std::size_t size() const { return ids_.size(); }
  bool empty() const { return ids_.empty(); }
  const std::vector<std::string>& ids() const { return ids_; }

  std::span<const double> row(std::size_t i) const {
    return {data_.data() + i * dim_, dim_};
  }

  std::optional<std::size_t> find(const std::string& utt_id) const {
    auto it = index_.find(utt_id);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  std::span<const double> at(const std::string& utt_id) const {
    auto i = find(utt_id);
    if (!i) throw Error("missing embedding for utt_id '" + utt_id + "'");
    return row(*i);
  }

 private:
  std::size_t dim_;
  std::vector<std::string> ids_;
  std::vector<double> data_;
  std::unordered_map<std::string, std::size_t> index_;
};

enum class EmbeddingFormat { kBinary, kCsv };

inline EmbeddingTable parse_embeddings_emb1(std::string_view bytes,
                                            const std::string& what = "embeddings") {
  le::Reader in(bytes, what);
  in.expect_magic("EMB1");
  std::uint32_t dim = in.u32();
  std::uint32_t count = in.u32();
  if (dim == 0) throw Error(what + ": dim must be positive");
  if (count == 0) throw Error(what + ": empty table");
  EmbeddingTable table(dim);
  std::vector<double> v(dim);
  for (std::uint32_t n = 0; n < count; ++n) {
    std::uint16_t len = in.u16();
    std::string id = in.bytes(len);
    for (std::uint32_t k = 0; k < dim; ++k) v[k] = in.f32();
    table.add(id, v);
  }
  if (!in.at_end()) throw Error(what + ": trailing bytes after " + std::to_string(count) + " records");
  return table;
}

inline EmbeddingTable parse_embeddings_csv(std::string_view text,
                                           const std::string& what = "embeddings") {
  auto records = csv::parse(text, what);
  std::size_t first = 0;
  if (!records.empty() && !records[0].fields.empty() && records[0].fields[0] == "utt_id") first = 1;
  if (records.size() <= first) throw Error(what + ": empty table");
  std::size_t dim = records[first].fields.size() - 1;
  if (dim == 0) throw Error(what + ": line " + std::to_string(records[first].line) + ": no values");
  EmbeddingTable table(dim);
  std::vector<double> v(dim);
  for (std::size_t n = first; n < records.size(); ++n) {
    const auto& rec = records[n];
    auto where = what + ": line " + std::to_string(rec.line) + ": ";
    if (rec.fields.size() != dim + 1)
      throw Error(where + "dim mismatch (" + std::to_string(rec.fields.size() - 1) + " vs " +
                  std::to_string(dim) + ")");
    for (std::size_t k = 0; k < dim; ++k) {
      const auto& s = rec.fields[k + 1];
      if (!parse_double(s, &v[k])) {
        // from_chars accepts "nan"/"inf"; anything else is malformed.
        throw Error(where + "bad value '" + s + "'");
      }
      if (!std::isfinite(v[k])) throw Error(where + "non-finite component");
    }
    try {
      table.add(rec.fields[0], v);
    } catch (const Error& e) {
      throw Error(where + e.what());
    }
  }
  return table;
}

inline EmbeddingTable load_embeddings(const std::filesystem::path& path, EmbeddingFormat format) {
  std::string data = read_file(path);
  return format == EmbeddingFormat::kBinary ? parse_embeddings_emb1(data, path.string())
                                            : parse_embeddings_csv(data, path.string());
}

inline std::string serialize_embeddings_emb1(const EmbeddingTable& t) {
  std::string out = "EMB1";
  le::put_u32(out, static_cast<std::uint32_t>(t.dim()));
  le::put_u32(out, static_cast<std::uint32_t>(t.size()));
  for (std::size_t i = 0; i < t.size(); ++i) {
    const auto& id = t.ids()[i];
    if (id.size() > 0xffff) throw Error("utt_id too long for EMB1: '" + id.substr(0, 32) + "...'");
    le::put_u16(out, static_cast<std::uint16_t>(id.size()));
    out += id;
    for (double x : t.row(i)) le::put_f32(out, static_cast<float>(x));
  }
  return out;
}

inline std::string serialize_embeddings_csv(const EmbeddingTable& t) {
  std::string out = "utt_id";
  for (std::size_t k = 0; k < t.dim(); ++k) out += ",v" + std::to_string(k);
  out.push_back('\n');
  for (std::size_t i = 0; i < t.size(); ++i) {
    out += csv::quote(t.ids()[i]);
    for (double x : t.row(i)) out += "," + format_double(x);
    out.push_back('\n');
  }
  return out;
}

inline void save_embeddings(const std::filesystem::path& path, const EmbeddingTable& t,
                            EmbeddingFormat format) {
  write_file_atomic(path, format == EmbeddingFormat::kBinary ? serialize_embeddings_emb1(t)
                                                             : serialize_embeddings_csv(t));
}

// ---------------------------------------------------------------------------
// Traits and label spaces

enum class Trait {
  kSpeakerId,
  kAge,
  kGender,
  kAccent,
  kAttackId,
  kAttackType,
  kF0Mean,
  kSpeakingRate,
  kDuration,
  kSnr,
};

enum class TaskKind { kClassification, kRegression };

inline constexpr Trait kAllTraits[] = {Trait::kSpeakerId, Trait::kAge,          Trait::kGender,
                                       Trait::kAccent,    Trait::kAttackId,     Trait::kAttackType,
                                       Trait::kF0Mean,    Trait::kSpeakingRate, Trait::kDuration,
                                       Trait::kSnr};

inline const char* to_string(Trait t) {
  switch (t) {
    case Trait::kSpeakerId: return "speaker_id";
    case Trait::kAge: return "age";
    case Trait::kGender: return "gender";
    case Trait::kAccent: return "accent";
    case Trait::kAttackId: return "attack_id";
    case Trait::kAttackType: return "attack_type";
    case Trait::kF0Mean: return "f0_mean";
    case Trait::kSpeakingRate: return "speaking_rate";
    case Trait::kDuration: return "duration";
    case Trait::kSnr: return "snr";
  }
  return "?";
}

inline Trait parse_trait(std::string_view s) {
  for (Trait t : kAllTraits)
    if (s == to_string(t)) return t;
  throw Error("unknown trait '" + std::string(s) + "'");
}

inline const char* to_string(TaskKind k) {
  return k == TaskKind::kClassification ? "classification" : "regression";
}

/// Meta traits are categorical; acoustic traits are regression targets.
inline TaskKind kind_of(Trait t) {
  switch (t) {
    case Trait::kF0Mean:
    case Trait::kSpeakingRate:
    case Trait::kDuration:
    case Trait::kSnr:
      return TaskKind::kRegression;
    default:
      return TaskKind::kClassification;
  }
}

inline bool is_attack_trait(Trait t) { return t == Trait::kAttackId || t == Trait::kAttackType; }

inline constexpr const char* kBonafideClass = "bonafide";

/// Class name of a row under a categorical trait, or nullopt if the row has
/// no value for it.
inline std::optional<std::string> class_of(const ManifestRow& r, Trait t) {
  switch (t) {
    case Trait::kSpeakerId: return r.speaker_id;
    case Trait::kAge: return std::to_string(r.age);
    case Trait::kGender: return std::string(to_string(r.gender));
    case Trait::kAccent: return r.accent.empty() ? std::nullopt : std::optional(r.accent);
    case Trait::kAttackId:
      if (r.is_bonafide) return std::string(kBonafideClass);
      return r.attack_id;
    case Trait::kAttackType:
      if (r.is_bonafide) return std::string(kBonafideClass);
      if (!r.attack_type) return std::nullopt;
      return std::string(to_string(*r.attack_type));
    default:
      throw Error(std::string("trait '") + to_string(t) + "' is not categorical");
  }
}

inline std::optional<double> value_of(const ManifestRow& r, Trait t) {
  switch (t) {
    case Trait::kF0Mean: return r.acoustic.f0_mean;
    case Trait::kSpeakingRate: return r.acoustic.speaking_rate;
    case Trait::kDuration: return r.acoustic.duration;
    case Trait::kSnr: return r.acoustic.snr;
    default:
      throw Error(std::string("trait '") + to_string(t) + "' is not a regression trait");
  }
}

class LabelSpace {
 public:
  LabelSpace() = default;
  LabelSpace(std::string trait_name, std::vector<std::string> classes)
      : trait_name_(std::move(trait_name)), classes_(std::move(classes)) {
    if (classes_.empty()) throw Error("label space '" + trait_name_ + "' has no classes");
    for (std::size_t i = 0; i < classes_.size(); ++i)
      if (!index_.emplace(classes_[i], static_cast<int>(i)).second)
        throw Error("label space '" + trait_name_ + "': duplicate class '" + classes_[i] + "'");
  }

  const std::string& trait_name() const { return trait_name_; }
  const std::vector<std::string>& classes() const { return classes_; }
  std::size_t size() const { return classes_.size(); }

  std::optional<int> index_of(const std::string& cls) const {
    auto it = index_.find(cls);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  bool operator==(const LabelSpace& o) const {
    return trait_name_ == o.trait_name_ && classes_ == o.classes_;
  }

 private:
  std::string trait_name_;
  std::vector<std::string> classes_;
  std::map<std::string, int> index_;
};

/// Classes sorted lexicographically; attack traits get "bonafide" appended
/// last when bonafide rows exist; gender is always {female, male}.
inline LabelSpace build_label_space(const Manifest& m, Trait trait) {
  if (m.empty()) throw Error("build_label_space: empty manifest");
  if (kind_of(trait) != TaskKind::kClassification)
    throw Error(std::string("build_label_space: '") + to_string(trait) + "' is a regression trait");
  if (trait == Trait::kGender) return LabelSpace("gender", {"female", "male"});
  std::set<std::string> values;
  bool has_bonafide = false;
  for (const auto& r : m.rows) {
    if (is_attack_trait(trait) && r.is_bonafide) {
      has_bonafide = true;
      continue;
    }
    if (auto c = class_of(r, trait)) values.insert(*c);
  }
  if (values.empty())
    throw Error(std::string("build_label_space: trait column '") + to_string(trait) +
                "' entirely absent");
  std::vector<std::string> classes(values.begin(), values.end());
  if (has_bonafide) classes.emplace_back(kBonafideClass);
  return LabelSpace(to_string(trait), std::move(classes));
}

// ---------------------------------------------------------------------------
// Acoustic trait files: utt_id,f0_mean,speaking_rate,duration,snr

inline constexpr const char* kTraitHeader = "utt_id,f0_mean,speaking_rate,duration,snr";

using TraitTable = std::vector<std::pair<std::string, TraitValues>>;

inline TraitTable parse_trait_csv(std::string_view text, const std::string& what = "traits") {
  auto records = csv::parse(text, what);
  if (records.empty()) throw Error(what + ": missing header");
  std::size_t first = 0;
  if (records[0].fields.size() >= 1 && records[0].fields[0] == "utt_id") first = 1;
  TraitTable out;
  for (std::size_t n = first; n < records.size(); ++n) {
    const auto& rec = records[n];
    if (rec.fields.size() < 5)
      throw Error(what + ": line " + std::to_string(rec.line) + ": expected 5 fields");
    TraitValues v;
    std::optional<double>* slots[] = {&v.f0_mean, &v.speaking_rate, &v.duration, &v.snr};
    for (int k = 0; k < 4; ++k) {
      const auto& s = rec.fields[k + 1];
      if (s.empty()) continue;
      double d;
      if (!parse_double(s, &d) || !std::isfinite(d))
        throw Error(what + ": line " + std::to_string(rec.line) + ": bad value '" + s + "'");
      *slots[k] = d;
    }
    out.emplace_back(rec.fields[0], v);
  }
  return out;
}

inline std::string serialize_trait_csv(const TraitTable& t) {
  std::string out = std::string(kTraitHeader) + "\n";
  auto cell = [](const std::optional<double>& d) { return d ? format_double(*d) : std::string(); };
  for (const auto& [id, v] : t)
    csv::append_row(out, {id, cell(v.f0_mean), cell(v.speaking_rate), cell(v.duration), cell(v.snr)});
  return out;
}

/// Copies measured traits into the matching manifest rows. Rows without an
/// entry keep whatever they had.
inline void join_traits(Manifest& m, const TraitTable& traits) {
  std::unordered_map<std::string, const TraitValues*> by_id;
  for (const auto& [id, v] : traits) by_id[id] = &v;
  for (auto& r : m.rows) {
    auto it = by_id.find(r.utt_id);
    if (it != by_id.end()) r.acoustic = *it->second;
  }
}

// ---------------------------------------------------------------------------
// Partitioning

enum class PartitionScheme { kT01, kT02, kT03 };

inline const char* to_string(PartitionScheme s) {
  switch (s) {
    case PartitionScheme::kT01: return "T01";
    case PartitionScheme::kT02: return "T02";
    case PartitionScheme::kT03: return "T03";
  }
  return "?";
}

inline PartitionScheme parse_scheme(std::string_view s) {
  if (s == "T01") return PartitionScheme::kT01;
  if (s == "T02") return PartitionScheme::kT02;
  if (s == "T03") return PartitionScheme::kT03;
  throw Error("unknown partition scheme '" + std::string(s) + "'");
}

/// Whether a trait may be probed under a scheme. Speaker identity needs the
/// same speakers on both sides (T01); other speaker-level traits use T01 or
/// T02; attack traits need the full set (T03).
inline bool scheme_allows(PartitionScheme s, Trait t) {
  if (is_attack_trait(t)) return s == PartitionScheme::kT03;
  if (t == Trait::kSpeakerId) return s == PartitionScheme::kT01;
  return s == PartitionScheme::kT01 || s == PartitionScheme::kT02;
}

enum class SplitName { kTrain, kEval };

struct Split {
  std::vector<std::string> train;
  std::vector<std::string> eval;
};

namespace detail {

// Number of held-out items for a group of n, keeping both sides non-empty
// whenever n >= 2.
inline std::size_t eval_count(std::size_t n, double train_fraction) {
  if (n < 2) return 0;
  auto k = static_cast<std::size_t>(std::llround((1.0 - train_fraction) * static_cast<double>(n)));
  return std::clamp<std::size_t>(k, 1, n - 1);
}

// Stratified utterance-level split; groups processed in sorted key order.
inline std::unordered_set<std::string> stratified_eval(
    const std::map<std::string, std::vector<std::string>>& groups, double train_fraction,
    Rng& rng) {
  std::unordered_set<std::string> eval;
  for (const auto& [key, ids] : groups) {
    std::vector<std::string> shuffled = ids;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    std::size_t k = eval_count(shuffled.size(), train_fraction);
    for (std::size_t i = 0; i < k; ++i) eval.insert(shuffled[i]);
  }
  return eval;
}

}  // namespace detail

/// Deterministic given (manifest, scheme, train_fraction, seed). Both output
/// lists keep manifest row order.
inline Split partition(const Manifest& m, PartitionScheme scheme, double train_fraction,
                       std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0))
    throw Error("partition: train_fraction must lie in (0, 1)");
  Rng rng(derive_seed(seed, to_string(scheme)));
  std::vector<const ManifestRow*> pool;
  for (const auto& r : m.rows)
    if (scheme == PartitionScheme::kT03 || r.is_bonafide) pool.push_back(&r);
  if (pool.empty()) throw Error(std::string("partition ") + to_string(scheme) + ": no rows in scope");

  std::unordered_set<std::string> eval;
  switch (scheme) {
    case PartitionScheme::kT01: {
      std::map<std::string, std::vector<std::string>> by_speaker;
      for (auto* r : pool) by_speaker[r->speaker_id].push_back(r->utt_id);
      eval = detail::stratified_eval(by_speaker, train_fraction, rng);
      break;
    }
    case PartitionScheme::kT02: {
      std::set<std::string> speaker_set;
      for (auto* r : pool) speaker_set.insert(r->speaker_id);
      if (speaker_set.size() < 2) throw Error("partition T02 infeasible: fewer than 2 speakers");
      std::vector<std::string> speakers(speaker_set.begin(), speaker_set.end());
      std::shuffle(speakers.begin(), speakers.end(), rng);
      std::size_t k = detail::eval_count(speakers.size(), train_fraction);
      std::unordered_set<std::string> eval_speakers(speakers.begin(), speakers.begin() + k);
      for (auto* r : pool)
        if (eval_speakers.count(r->speaker_id)) eval.insert(r->utt_id);
      break;
    }
    case PartitionScheme::kT03: {
      std::map<std::string, std::vector<std::string>> by_attack;
      for (auto* r : pool) by_attack[*class_of(*r, Trait::kAttackId)].push_back(r->utt_id);
      for (const auto& [cls, ids] : by_attack)
        if (ids.size() < 2)
          throw Error("partition T03 infeasible: class '" + cls + "' has fewer than 2 utterances");
      eval = detail::stratified_eval(by_attack, train_fraction, rng);
      break;
    }
  }
  Split split;
  for (auto* r : pool) (eval.count(r->utt_id) ? split.eval : split.train).push_back(r->utt_id);
  return split;
}

inline std::string serialize_split_json(const Split& s, PartitionScheme scheme) {
  nlohmann::ordered_json j;
  j["scheme"] = to_string(scheme);
  j["train"] = s.train;
  j["eval"] = s.eval;
  return j.dump(2) + "\n";
}

inline Split parse_split_json(std::string_view text) {
  auto j = nlohmann::json::parse(text);
  Split s;
  s.train = j.at("train").get<std::vector<std::string>>();
  s.eval = j.at("eval").get<std::vector<std::string>>();
  return s;
}

// ---------------------------------------------------------------------------
// Probing datasets

struct TraitTask {
  Trait trait = Trait::kGender;
  TaskKind kind = TaskKind::kClassification;
  std::optional<LabelSpace> labels;  // classification only
};

inline TraitTask make_task(const Manifest& m, Trait trait) {
  TraitTask task{trait, kind_of(trait), std::nullopt};
  if (task.kind == TaskKind::kClassification) task.labels = build_label_space(m, trait);
  return task;
}

/// Aligned (embedding, target) pairs. Features are row-major, one row per item.
struct ProbingDataset {
  TaskKind kind = TaskKind::kClassification;
  SplitName split = SplitName::kTrain;
  std::size_t dim = 0;
  std::vector<std::string> utt_ids;
  std::vector<double> features;
  std::vector<int> classes;    // classification targets
  std::vector<double> values;  // regression targets

  std::size_t size() const { return utt_ids.size(); }
  std::span<const double> row(std::size_t i) const { return {features.data() + i * dim, dim}; }
};

inline ProbingDataset assemble(const Manifest& m, const EmbeddingTable& table,
                               const TraitTask& task, const std::vector<std::string>& utt_ids,
                               SplitName split, bool unit_norm = false) {
  std::unordered_map<std::string, const ManifestRow*> rows;
  for (const auto& r : m.rows) rows.emplace(r.utt_id, &r);
  ProbingDataset ds;
  ds.kind = task.kind;
  ds.split = split;
  ds.dim = table.dim();
  ds.features.reserve(utt_ids.size() * table.dim());
  for (const auto& id : utt_ids) {
    auto rit = rows.find(id);
    if (rit == rows.end()) throw Error("utt_id '" + id + "' not in manifest");
    const ManifestRow& r = *rit->second;
    auto idx = table.find(id);
    if (!idx) throw Error("missing embedding for utt_id '" + id + "'");
    if (task.kind == TaskKind::kClassification) {
      auto cls = class_of(r, task.trait);
      if (!cls) throw Error("utt_id '" + id + "' has no value for trait '" + to_string(task.trait) + "'");
      auto k = task.labels->index_of(*cls);
      if (!k) throw Error("utt_id '" + id + "': class '" + *cls + "' not in label space");
      ds.classes.push_back(*k);
    } else {
      auto v = value_of(r, task.trait);
      if (!v) throw Error("missing regression value '" + std::string(to_string(task.trait)) +
                          "' for utt_id '" + id + "'");
      ds.values.push_back(*v);
    }
    auto vec = table.row(*idx);
    double scale = 1.0;
    if (unit_norm) {
      double n2 = 0.0;
      for (double x : vec) n2 += x * x;
      if (n2 > 0.0) scale = 1.0 / std::sqrt(n2);
    }
    for (double x : vec) ds.features.push_back(x * scale);
    ds.utt_ids.push_back(id);
  }
  return ds;
}

}  // namespace probekit
