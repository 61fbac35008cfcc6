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

#include <gmock/gmock.h>
#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "probekit/audio.hpp"
#include "probekit/trait_extract.hpp"
#include "test_util.hpp"

namespace probekit {
namespace {

using ::testing::HasSubstr;

Waveform sine(double freq, double seconds, int sr = 16000, double amp = 0.5) {
  Waveform w;
  w.sample_rate = sr;
  w.samples.resize(static_cast<std::size_t>(std::llround(seconds * sr)));
  for (std::size_t i = 0; i < w.size(); ++i)
    w.samples[i] = amp * std::sin(2.0 * std::numbers::pi * freq * static_cast<double>(i) / sr);
  return w;
}

void add_noise(Waveform& w, double sigma, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, sigma);
  for (auto& s : w.samples) s += g(rng);
}

std::string error_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.what();
  }
  return "";
}

// Minimal WAV header builder for encodings the writer never produces.
std::string wav_with(std::uint16_t format, std::uint16_t channels, std::uint16_t bits, const std::string& data) {
  std::string out = "RIFF";
  le::put_u32(out, static_cast<std::uint32_t>(36 + data.size()));
  out += "WAVEfmt ";
  le::put_u32(out, 16);
  le::put_u16(out, format);
  le::put_u16(out, channels);
  le::put_u32(out, 16000);
  le::put_u32(out, 16000u * channels * bits / 8);
  le::put_u16(out, static_cast<std::uint16_t>(channels * bits / 8));
  le::put_u16(out, bits);
  out += "data";
  le::put_u32(out, static_cast<std::uint32_t>(data.size()));
  return out + data;
}

TEST(Wav, RoundTripWithinQuantization) {
  Waveform w = sine(440.0, 0.25);
  Waveform r = parse_wav(serialize_wav(w));
  ASSERT_EQ(r.size(), w.size());
  EXPECT_EQ(r.sample_rate, 16000);
  for (std::size_t i = 0; i < w.size(); ++i) EXPECT_NEAR(r.samples[i], w.samples[i], 0.5 / 32768.0 + 1e-12);
  EXPECT_EQ(serialize_wav(r), serialize_wav(w));
}

TEST(Wav, FileRoundTrip) {
  testing::TempDir dir("wav");
  Waveform w = sine(100.0, 0.1, 8000);
  write_wav(dir / "a.wav", w);
  Waveform r = read_wav(dir / "a.wav");
  EXPECT_EQ(r.sample_rate, 8000);
  EXPECT_EQ(r.size(), w.size());
}

TEST(Wav, RejectsUnsupportedEncodings) {
  EXPECT_THAT(error_of([] { parse_wav(wav_with(1, 1, 24, std::string(6, '\0'))); }),
              HasSubstr("unsupported encoding"));
  EXPECT_THAT(error_of([] { parse_wav(wav_with(3, 1, 32, std::string(8, '\0'))); }),
              HasSubstr("unsupported encoding"));
  EXPECT_THROW(parse_wav("RIFX"), Error);
  EXPECT_THROW(parse_wav(serialize_wav(sine(100, 0.1)).substr(0, 50)), Error);
}

TEST(Wav, StereoIsAveragedToMono) {
  std::string data;
  le::put_u16(data, static_cast<std::uint16_t>(std::int16_t{16384}));
  le::put_u16(data, static_cast<std::uint16_t>(std::int16_t{0}));
  le::put_u16(data, static_cast<std::uint16_t>(std::int16_t{-16384}));
  le::put_u16(data, static_cast<std::uint16_t>(std::int16_t{-16384}));
  Waveform w = parse_wav(wav_with(1, 2, 16, data));
  ASSERT_EQ(w.size(), 2u);
  EXPECT_DOUBLE_EQ(w.samples[0], 0.25);
  EXPECT_DOUBLE_EQ(w.samples[1], -0.5);
}

TEST(Duration, Examples) {
  Waveform w;
  w.samples.assign(16000, 0.0);
  EXPECT_DOUBLE_EQ(duration(w), 1.0);
  Waveform a = sine(100, 0.3), b = sine(100, 0.45);
  Waveform ab = a;
  ab.samples.insert(ab.samples.end(), b.samples.begin(), b.samples.end());
  EXPECT_NEAR(duration(ab), duration(a) + duration(b), 1e-12);
}

TEST(Pitch, PureToneAt220) {
  EXPECT_NEAR(f0_mean(sine(220.0, 1.0)), 220.0, 1.0);
}

class ToneSweep : public ::testing::TestWithParam<int> {};

TEST_P(ToneSweep, WithinOneHertzAtThirtyDb) {
  const double freq = 80.0 + 320.0 * GetParam() / 19.0;
  Waveform w = sine(freq, 1.0);
  // amplitude 0.5 sine has power 0.125; 30 dB below is 1.25e-4
  add_noise(w, std::sqrt(1.25e-4), static_cast<std::uint64_t>(GetParam()));
  EXPECT_NEAR(f0_mean(w), freq, 1.0) << freq << " Hz";
}

INSTANTIATE_TEST_SUITE_P(Tones, ToneSweep, ::testing::Range(0, 20));

TEST(Pitch, WhiteNoiseIsUnvoiced) {
  int unvoiced = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Waveform w;
    w.samples.resize(16000);
    add_noise(w, 0.3, seed);
    if (error_of([&] { f0_mean(w); }) == "unvoiced audio") ++unvoiced;
  }
  EXPECT_GE(unvoiced, 95);
}

TEST(Pitch, OutOfBandToneIsUnvoiced) {
  PitchConfig cfg;
  cfg.ceiling_hz = 90.0;
  EXPECT_EQ(error_of([&] { f0_mean(sine(100.0, 1.0), cfg); }), "unvoiced audio");
}

TEST(Pitch, SilenceIsUnvoiced) {
  Waveform w;
  w.samples.assign(16000, 0.0);
  EXPECT_EQ(error_of([&] { f0_mean(w); }), "unvoiced audio");
}

TEST(Pitch, MeanExcludesUnvoicedFrames) {
  Waveform w = sine(150.0, 0.5);
  w.samples.resize(16000, 0.0);
  auto track = pitch_track(w);
  EXPECT_TRUE(std::count(track.begin(), track.end(), 0.0) > 10);
  EXPECT_NEAR(f0_mean(w), 150.0, 1.0);
}

TEST(Pitch, RejectsBadBand) {
  PitchConfig cfg;
  cfg.floor_hz = 500.0;
  cfg.ceiling_hz = 400.0;
  EXPECT_THROW(pitch_track(sine(200, 0.5), cfg), Error);
}

TEST(SpeakingRate, Examples) {
  EXPECT_DOUBLE_EQ(speaking_rate("one two three four five six seven eight nine ten", 5.0), 2.0);
  EXPECT_DOUBLE_EQ(speaking_rate("  hello,   world  ", 1.0), 2.0);
  EXPECT_DOUBLE_EQ(speaking_rate("hello - world", 1.0), 2.0);
  EXPECT_DOUBLE_EQ(speaking_rate("", 3.0), 0.0);
  EXPECT_THROW(speaking_rate("a b", 0.0), Error);
  const std::string t = "the quick brown fox jumps";
  EXPECT_EQ(speaking_rate(t, 1.25), 2.0 * speaking_rate(t, 2.5));
}

Waveform half_silent_sine() {
  Waveform w = sine(300.0, 1.0);
  std::fill(w.samples.begin() + 8000, w.samples.end(), 0.0);
  return w;
}

TEST(Snr, CleanBeatsNoisy) {
  Waveform clean = half_silent_sine();
  Waveform noisy = clean;
  add_noise(noisy, std::sqrt(0.125 * 0.01), 1);
  EXPECT_GT(snr_estimate(clean), snr_estimate(noisy));
}

TEST(Snr, MonotoneInNoiseLevel) {
  Waveform base = half_silent_sine();
  double prev = snr_estimate(base);
  for (double sigma : {0.001, 0.01, 0.05, 0.2}) {
    Waveform w = base;
    add_noise(w, sigma, 3);
    double s = snr_estimate(w);
    EXPECT_LT(s, prev) << sigma;
    prev = s;
  }
}

TEST(Snr, DigitalSilenceIsFinite) {
  double s = snr_estimate(half_silent_sine());
  EXPECT_TRUE(std::isfinite(s));
  Waveform zero;
  zero.samples.assign(16000, 0.0);
  EXPECT_DOUBLE_EQ(snr_estimate(zero), 0.0);
  EXPECT_THROW(snr_estimate(sine(100, 0.05)), Error);
}

TEST(Spectrogram, FrameCountForFourSeconds) {
  Waveform w = sine(200.0, 4.0);
  SpectralFrames s = power_spectrogram(w);
  EXPECT_EQ(s.num_frames, 398u);
  EXPECT_EQ(s.num_bins, 257u);
  EXPECT_DOUBLE_EQ(s.frame_shift, 0.01);
}

TEST(Spectrogram, ParsevalAgainstWindowedEnergy) {
  Waveform w = sine(333.0, 0.2);
  add_noise(w, 0.05, 4);
  SpectrogramConfig cfg;
  SpectralFrames s = power_spectrogram(w, cfg);
  const std::size_t frame = 400, hop = 160;
  for (std::size_t f = 0; f < s.num_frames; ++f) {
    double energy = 0.0;
    for (std::size_t i = 0; i < frame; ++i) {
      double win = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(frame));
      double x = w.samples[f * hop + i] * win;
      energy += x * x;
    }
    double bins = 0.0;
    for (std::size_t k = 0; k < s.num_bins; ++k) bins += s.at(f, k);
    ASSERT_NEAR(bins, energy, 1e-6 * energy) << "frame " << f;
  }
}

TEST(Spectrogram, ZeroSignalHitsFloor) {
  Waveform w;
  w.samples.assign(1600, 0.0);
  SpectralFrames s = power_spectrogram(w);
  for (double v : s.data) EXPECT_EQ(v, 1e-10);
  Waveform tiny;
  tiny.samples.assign(100, 0.1);
  EXPECT_THROW(power_spectrogram(tiny), Error);
}

TEST(Chunk, TruncateAndTile) {
  Waveform w = sine(100, 5.0);
  Waveform c = chunk_fixed(w, 4.0);
  EXPECT_EQ(c.size(), 64000u);
  EXPECT_TRUE(std::equal(c.samples.begin(), c.samples.end(), w.samples.begin()));
  Waveform s;
  s.samples = {1, 2, 3};
  s.sample_rate = 2;
  Waveform t = chunk_fixed(s, 4.0);
  EXPECT_EQ(t.samples, (std::vector<double>{1, 2, 3, 1, 2, 3, 1, 2}));
  EXPECT_THROW(chunk_fixed(s, 0.0), Error);
}

TEST(Frames, FileRoundTrip) {
  testing::TempDir dir("frm");
  SpectralFrames s = power_spectrogram(sine(250.0, 0.3));
  save_frames(dir / "x.frm", s);
  SpectralFrames r = load_frames(dir / "x.frm");
  EXPECT_EQ(r.num_frames, s.num_frames);
  EXPECT_EQ(r.num_bins, s.num_bins);
  for (std::size_t i = 0; i < s.data.size(); ++i) ASSERT_NEAR(r.data[i], s.data[i], 1e-6 * s.data[i]);
  EXPECT_EQ(serialize_frames(r), serialize_frames(s));
  std::string bytes = serialize_frames(s);
  EXPECT_THROW(parse_frames(bytes + "x"), Error);
  EXPECT_THROW(parse_frames(bytes.substr(0, 20)), Error);
}

}  // namespace
}  // namespace probekit
