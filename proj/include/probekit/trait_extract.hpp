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

// Acoustic trait measurement: mean F0, speaking rate, duration, SNR, and the
// power spectrograms compared by the spectral distance analysis.

#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <string>
#include <vector>

#include <unsupported/Eigen/FFT>

#include "probekit/audio.hpp"
#include "probekit/common.hpp"

namespace probekit {

struct PitchConfig {
  double floor_hz = 75.0;
  double ceiling_hz = 600.0;
  double frame_len = 0.04;  // seconds
  double hop = 0.01;        // seconds
  double voicing_threshold = 0.45;
  double silence_threshold = 0.03;  // frame peak relative to global peak
  double octave_cost = 0.01;        // per octave, favours higher candidates
};

namespace detail {

inline std::vector<double> hann(std::size_t n) {
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i)
    w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n));
  return w;
}

inline std::vector<double> autocorr(const std::vector<double>& x, std::size_t max_lag) {
  std::vector<double> r(max_lag + 1, 0.0);
  for (std::size_t lag = 0; lag <= max_lag && lag < x.size(); ++lag) {
    double s = 0.0;
    for (std::size_t n = 0; n + lag < x.size(); ++n) s += x[n] * x[n + lag];
    r[lag] = s;
  }
  return r;
}

inline std::size_t frame_count(std::size_t len, std::size_t frame, std::size_t hop) {
  if (len < frame) return 0;
  return (len - frame) / hop + 1;
}

}  // namespace detail

/// Per-frame pitch estimate; 0 marks an unvoiced frame.
inline std::vector<double> pitch_track(const Waveform& w, const PitchConfig& cfg = {}) {
  if (!(cfg.floor_hz > 0.0 && cfg.floor_hz < cfg.ceiling_hz))
    throw Error("f0: floor must be positive and below ceiling");
  if (cfg.frame_len < 2.0 / cfg.floor_hz)
    throw Error("f0: frame must span two periods of the pitch floor");
  const double sr = w.sample_rate;
  const auto frame = static_cast<std::size_t>(std::llround(cfg.frame_len * sr));
  const auto hop = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(cfg.hop * sr)));
  const auto min_lag = std::max<std::size_t>(2, static_cast<std::size_t>(std::ceil(sr / cfg.ceiling_hz)));
  const auto max_lag = static_cast<std::size_t>(std::floor(sr / cfg.floor_hz));
  if (max_lag + 1 >= frame || min_lag >= max_lag) throw Error("f0: lag range does not fit the frame");

  const auto window = detail::hann(frame);
  const auto rw = detail::autocorr(window, max_lag + 1);
  double global_peak = 0.0;
  for (double s : w.samples) global_peak = std::max(global_peak, std::abs(s));

  const std::size_t n_frames = detail::frame_count(w.size(), frame, hop);
  std::vector<double> track(n_frames, 0.0);
  std::vector<double> buf(frame);
  for (std::size_t f = 0; f < n_frames; ++f) {
    const double* x = w.samples.data() + f * hop;
    double mean = 0.0, peak = 0.0;
    for (std::size_t i = 0; i < frame; ++i) mean += x[i];
    mean /= static_cast<double>(frame);
    for (std::size_t i = 0; i < frame; ++i) {
      peak = std::max(peak, std::abs(x[i] - mean));
      buf[i] = (x[i] - mean) * window[i];
    }
    if (global_peak == 0.0 || peak < cfg.silence_threshold * global_peak) continue;
    auto r = detail::autocorr(buf, max_lag + 1);
    if (!(r[0] > 0.0)) continue;
    // Normalize and divide out the window's own autocorrelation.
    std::vector<double> nr(max_lag + 2);
    for (std::size_t lag = 0; lag <= max_lag + 1; ++lag) nr[lag] = (r[lag] / r[0]) / (rw[lag] / rw[0]);

    double best_strength = -1e300, best_value = 0.0, best_lag = 0.0;
    for (std::size_t lag = min_lag; lag <= max_lag; ++lag) {
      if (!(nr[lag] > nr[lag - 1] && nr[lag] >= nr[lag + 1])) continue;
      double a = nr[lag - 1], b = nr[lag], c = nr[lag + 1];
      double denom = a - 2.0 * b + c;
      double delta = denom < 0.0 ? 0.5 * (a - c) / denom : 0.0;
      double value = b - 0.25 * (a - c) * delta;
      double true_lag = static_cast<double>(lag) + delta;
      double freq = sr / true_lag;
      double strength = value + cfg.octave_cost * std::log2(freq / cfg.floor_hz);
      if (strength > best_strength) {
        best_strength = strength;
        best_value = value;
        best_lag = true_lag;
      }
    }
    if (best_lag > 0.0 && best_value >= cfg.voicing_threshold) {
      double freq = sr / best_lag;
      if (freq >= cfg.floor_hz && freq <= cfg.ceiling_hz) track[f] = freq;
    }
  }
  return track;
}

/// Mean F0 over voiced frames; unvoiced frames are excluded.
inline double f0_mean(const Waveform& w, const PitchConfig& cfg = {}) {
  auto track = pitch_track(w, cfg);
  double sum = 0.0;
  std::size_t voiced = 0;
  for (double f : track)
    if (f > 0.0) {
      sum += f;
      ++voiced;
    }
  if (voiced == 0) throw Error("unvoiced audio");
  return sum / static_cast<double>(voiced);
}

/// Tokens containing at least one alphanumeric character.
inline std::size_t count_words(std::string_view transcript) {
  std::size_t n = 0;
  for (const auto& tok : split_whitespace(transcript))
    if (std::any_of(tok.begin(), tok.end(), [](unsigned char c) { return std::isalnum(c) || c >= 0x80; }))
      ++n;
  return n;
}

/// Words per second.
inline double speaking_rate(std::string_view transcript, double dur) {
  if (!(dur > 0.0)) throw Error("speaking_rate: duration must be positive");
  return static_cast<double>(count_words(transcript)) / dur;
}

struct SnrConfig {
  double frame_len = 0.025;
  double hop = 0.01;
  double noise_fraction = 0.1;   // quietest frames
  double signal_fraction = 0.5;  // loudest frames
  double power_floor = 1e-10;
};

/// Energy-percentile SNR in dB; no clean reference needed.
inline double snr_estimate(const Waveform& w, const SnrConfig& cfg = {}) {
  const auto frame = static_cast<std::size_t>(std::llround(cfg.frame_len * w.sample_rate));
  const auto hop = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(cfg.hop * w.sample_rate)));
  const std::size_t n = detail::frame_count(w.size(), frame, hop);
  if (frame == 0 || n < 10) throw Error("snr: audio too short (need at least 10 frames)");
  std::vector<double> power(n);
  for (std::size_t f = 0; f < n; ++f) {
    double s = 0.0;
    for (std::size_t i = 0; i < frame; ++i) {
      double x = w.samples[f * hop + i];
      s += x * x;
    }
    power[f] = s / static_cast<double>(frame);
  }
  std::sort(power.begin(), power.end());
  auto n_noise = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(cfg.noise_fraction * n)));
  auto n_signal = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(cfg.signal_fraction * n)));
  double noise = 0.0, signal = 0.0;
  for (std::size_t i = 0; i < n_noise; ++i) noise += power[i];
  for (std::size_t i = n - n_signal; i < n; ++i) signal += power[i];
  noise = std::max(noise / static_cast<double>(n_noise), cfg.power_floor);
  signal = std::max(signal / static_cast<double>(n_signal), cfg.power_floor);
  return 10.0 * std::log10(signal / noise);
}

// ---------------------------------------------------------------------------
// Spectrograms

/// N x B non-negative power values, row-major (one row per frame).
struct SpectralFrames {
  std::size_t num_frames = 0;
  std::size_t num_bins = 0;
  std::vector<double> data;
  double frame_shift = 0.0;   // seconds; 0 when unknown
  double frame_length = 0.0;  // seconds; 0 when unknown

  double at(std::size_t frame, std::size_t bin) const { return data[frame * num_bins + bin]; }
};

struct SpectrogramConfig {
  double frame_len = 0.025;
  double hop = 0.01;
  int fft_size = 512;
  double floor = 1e-10;
};

/// Hann-windowed one-sided power spectrum. Interior bins are doubled and all
/// bins scaled by 1/fft_size, so each frame's bins sum to the windowed
/// frame energy (before flooring).
inline SpectralFrames power_spectrogram(const Waveform& w, const SpectrogramConfig& cfg = {}) {
  const auto frame = static_cast<std::size_t>(std::llround(cfg.frame_len * w.sample_rate));
  const auto hop = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(cfg.hop * w.sample_rate)));
  const auto nfft = static_cast<std::size_t>(cfg.fft_size);
  if (frame == 0) throw Error("power_spectrogram: empty frame");
  if (nfft < frame) throw Error("power_spectrogram: fft_size smaller than the frame");
  const std::size_t n = detail::frame_count(w.size(), frame, hop);
  if (n == 0) throw Error("power_spectrogram: audio shorter than one frame");

  SpectralFrames out;
  out.num_frames = n;
  out.num_bins = nfft / 2 + 1;
  out.frame_shift = static_cast<double>(hop) / w.sample_rate;
  out.frame_length = static_cast<double>(frame) / w.sample_rate;
  out.data.resize(n * out.num_bins);

  const auto window = detail::hann(frame);
  Eigen::FFT<double> fft;
  std::vector<double> buf(nfft, 0.0);
  std::vector<std::complex<double>> spec;
  for (std::size_t f = 0; f < n; ++f) {
    std::fill(buf.begin(), buf.end(), 0.0);
    for (std::size_t i = 0; i < frame; ++i) buf[i] = w.samples[f * hop + i] * window[i];
    fft.fwd(spec, buf);
    for (std::size_t k = 0; k < out.num_bins; ++k) {
      double p = std::norm(spec[k]) / static_cast<double>(nfft);
      if (k != 0 && !(nfft % 2 == 0 && k == nfft / 2)) p *= 2.0;
      out.data[f * out.num_bins + k] = std::max(p, cfg.floor);
    }
  }
  return out;
}

inline std::string serialize_frames(const SpectralFrames& s) {
  std::string out = "FRM1";
  le::put_u32(out, static_cast<std::uint32_t>(s.num_frames));
  le::put_u32(out, static_cast<std::uint32_t>(s.num_bins));
  for (double v : s.data) le::put_f32(out, static_cast<float>(v));
  return out;
}

inline SpectralFrames parse_frames(std::string_view bytes, const std::string& what = "frames") {
  le::Reader in(bytes, what);
  in.expect_magic("FRM1");
  SpectralFrames s;
  s.num_frames = in.u32();
  s.num_bins = in.u32();
  if (s.num_frames == 0 || s.num_bins == 0) throw Error(what + ": empty frame matrix");
  in.need(s.num_frames * s.num_bins * 4);
  s.data.resize(s.num_frames * s.num_bins);
  for (auto& v : s.data) {
    v = in.f32();
    if (!std::isfinite(v)) throw Error(what + ": non-finite value");
  }
  if (!in.at_end()) throw Error(what + ": trailing bytes");
  return s;
}

inline SpectralFrames load_frames(const std::filesystem::path& path) {
  return parse_frames(read_file(path), path.string());
}

inline void save_frames(const std::filesystem::path& path, const SpectralFrames& s) {
  write_file_atomic(path, serialize_frames(s));
}

}  // namespace probekit
