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
#include <filesystem>
#include <string>
#include <vector>

#include "probekit/common.hpp"

namespace probekit {

struct Waveform {
  std::vector<double> samples;  // nominally in [-1, 1]
  int sample_rate = 16000;

  std::size_t size() const { return samples.size(); }
};

/// Parses RIFF/WAVE with 16-bit PCM. Multi-channel input is averaged to mono.
inline Waveform parse_wav(std::string_view bytes, const std::string& what = "wav") {
  le::Reader in(bytes, what);
  in.expect_magic("RIFF");
  in.u32();
  if (in.bytes(4) != "WAVE") throw Error(what + ": not a WAVE file");

  bool have_fmt = false;
  std::uint16_t channels = 0, bits = 0;
  std::uint32_t rate = 0;
  for (;;) {
    if (in.at_end()) throw Error(what + ": no data chunk");
    std::string id = in.bytes(4);
    std::uint32_t size = in.u32();
    if (id == "fmt ") {
      if (size < 16) throw Error(what + ": truncated chunk 'fmt '");
      std::string body = in.bytes(size);
      le::Reader f(body, what);
      std::uint16_t format = f.u16();
      channels = f.u16();
      rate = f.u32();
      f.u32();  // byte rate
      f.u16();  // block align
      bits = f.u16();
      if (format == 0xFFFE && size >= 40) {
        f.u16();  // cbSize
        f.u16();  // valid bits
        f.u32();  // channel mask
        format = f.u16();  // first two bytes of the subformat GUID
      }
      if (format != 1 || bits != 16)
        throw Error(what + ": unsupported encoding (format " + std::to_string(format) + ", " +
                    std::to_string(bits) + " bits); only 16-bit PCM is read");
      if (channels == 0 || rate == 0) throw Error(what + ": bad fmt chunk");
      have_fmt = true;
    } else if (id == "data") {
      if (!have_fmt) throw Error(what + ": data chunk before fmt chunk");
      in.need(size);
      std::size_t frames = size / (2u * channels);
      Waveform w;
      w.sample_rate = static_cast<int>(rate);
      w.samples.resize(frames);
      for (std::size_t i = 0; i < frames; ++i) {
        double acc = 0.0;
        for (std::uint16_t c = 0; c < channels; ++c)
          acc += static_cast<std::int16_t>(in.u16()) / 32768.0;
        w.samples[i] = channels == 1 ? acc : acc / channels;
      }
      return w;
    } else {
      in.bytes(size);
    }
    if (size & 1u) {
      if (!in.at_end()) in.u8();
    }
  }
}

inline Waveform read_wav(const std::filesystem::path& path) {
  return parse_wav(read_file(path), path.string());
}

/// 16-bit mono PCM; samples are clipped to the representable range.
inline std::string serialize_wav(const Waveform& w) {
  std::string out = "RIFF";
  const std::uint32_t data_bytes = static_cast<std::uint32_t>(w.samples.size() * 2);
  le::put_u32(out, 36 + data_bytes);
  out += "WAVEfmt ";
  le::put_u32(out, 16);
  le::put_u16(out, 1);
  le::put_u16(out, 1);
  le::put_u32(out, static_cast<std::uint32_t>(w.sample_rate));
  le::put_u32(out, static_cast<std::uint32_t>(w.sample_rate) * 2);
  le::put_u16(out, 2);
  le::put_u16(out, 16);
  out += "data";
  le::put_u32(out, data_bytes);
  for (double x : w.samples) {
    double s = std::round(x * 32768.0);
    s = std::clamp(s, -32768.0, 32767.0);
    le::put_u16(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(s)));
  }
  return out;
}

inline void write_wav(const std::filesystem::path& path, const Waveform& w) {
  write_file_atomic(path, serialize_wav(w));
}

inline double duration(const Waveform& w) {
  return static_cast<double>(w.samples.size()) / static_cast<double>(w.sample_rate);
}

/// Truncates to `seconds`, or tiles the waveform cyclically up to it.
inline Waveform chunk_fixed(const Waveform& w, double seconds) {
  if (!(seconds > 0.0)) throw Error("chunk_fixed: seconds must be positive");
  if (w.samples.empty()) throw Error("chunk_fixed: empty waveform");
  auto target = static_cast<std::size_t>(std::llround(seconds * w.sample_rate));
  Waveform out;
  out.sample_rate = w.sample_rate;
  out.samples.resize(target);
  for (std::size_t i = 0; i < target; ++i) out.samples[i] = w.samples[i % w.samples.size()];
  return out;
}

}  // namespace probekit
