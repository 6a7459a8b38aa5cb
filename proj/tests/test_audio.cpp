/* Copyright 2026 The Coughnet Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstring>

#include "coughnet/audio.hpp"
#include "coughnet/errors.hpp"
#include "coughnet/rng.hpp"
#include "test_util.hpp"

using namespace coughnet;
using testutil::TempDir;

TEST_CASE("load_wav decodes a 1-second all-zero mono 16-bit file") {
  TempDir dir("wav_zero");
  const std::string path = dir.file("zero.wav");
  testutil::write_bytes(path, testutil::wav_bytes(
      1, 1, 22050, 16, testutil::pcm16_frames(std::vector<std::int16_t>(22050, 0))));
  const AudioClip clip = load_wav(path);
  CHECK(clip.sample_rate == 22050);
  CHECK(clip.length() == 22050);
  CHECK(clip.samples.abs().maxCoeff() == 0.0);
}

TEST_CASE("load_wav mixes a symmetric stereo pair down to silence") {
  TempDir dir("wav_stereo");
  const std::string path = dir.file("stereo.wav");
  std::vector<std::int16_t> frames;
  for (int i = 0; i < 100; ++i) {
    frames.push_back(16384);   // +0.5
    frames.push_back(-16384);  // -0.5
  }
  testutil::write_bytes(path, testutil::wav_bytes(1, 2, 8000, 16,
                                                  testutil::pcm16_frames(frames)));
  const AudioClip clip = load_wav(path);
  CHECK(clip.length() == 100);
  CHECK(clip.samples.abs().maxCoeff() == 0.0);
}

TEST_CASE("load_wav scales 16-bit sample 16384 to exactly 0.5") {
  TempDir dir("wav_scale");
  const std::string path = dir.file("half.wav");
  testutil::write_bytes(path, testutil::wav_bytes(1, 1, 22050, 16,
                                                  testutil::pcm16_frames({16384, -32768})));
  const AudioClip clip = load_wav(path);
  CHECK(clip.samples[0] == 0.5);
  CHECK(clip.samples[1] == -1.0);
}

TEST_CASE("load_wav scales 24-bit sample 4194304 to exactly 0.5") {
  TempDir dir("wav_24");
  const std::string path = dir.file("pcm24.wav");
  std::vector<std::uint8_t> frames;
  auto push24 = [&frames](std::int32_t v) {
    frames.push_back(static_cast<std::uint8_t>(v & 0xff));
    frames.push_back(static_cast<std::uint8_t>((v >> 8) & 0xff));
    frames.push_back(static_cast<std::uint8_t>((v >> 16) & 0xff));
  };
  push24(4194304);
  push24(-4194304);
  testutil::write_bytes(path, testutil::wav_bytes(1, 1, 44100, 24, frames));
  const AudioClip clip = load_wav(path);
  CHECK(clip.sample_rate == 44100);
  CHECK(clip.samples[0] == 0.5);
  CHECK(clip.samples[1] == -0.5);
}

TEST_CASE("load_wav reads 32-bit float samples as-is") {
  TempDir dir("wav_f32");
  const std::string path = dir.file("f32.wav");
  std::vector<std::uint8_t> frames;
  for (float v : {0.25f, -1.5f}) {  // out-of-range floats survive decode
    std::uint32_t raw;
    std::memcpy(&raw, &v, 4);
    testutil::append_u32(frames, raw);
  }
  testutil::write_bytes(path, testutil::wav_bytes(3, 1, 22050, 32, frames));
  const AudioClip clip = load_wav(path);
  CHECK(clip.samples[0] == doctest::Approx(0.25).epsilon(1e-9));
  CHECK(clip.samples[1] == doctest::Approx(-1.5).epsilon(1e-9));
}

TEST_CASE("load_wav rejects bad containers and encodings") {
  TempDir dir("wav_bad");

  const std::string bad_magic = dir.file("bad_magic.wav");
  testutil::write_bytes(bad_magic, {'N', 'O', 'P', 'E', 0, 0, 0, 0});
  CHECK_THROWS_AS(load_wav(bad_magic), MalformedContainer);

  const std::string pcm8 = dir.file("pcm8.wav");
  testutil::write_bytes(pcm8, testutil::wav_bytes(1, 1, 22050, 8, {0x80, 0x80}));
  CHECK_THROWS_AS(load_wav(pcm8), UnsupportedEncoding);

  const std::string compressed = dir.file("adpcm.wav");
  testutil::write_bytes(compressed, testutil::wav_bytes(85, 1, 22050, 16,
                                                        testutil::pcm16_frames({0})));
  CHECK_THROWS_AS(load_wav(compressed), UnsupportedEncoding);

  const std::string empty = dir.file("empty.wav");
  testutil::write_bytes(empty, testutil::wav_bytes(1, 1, 22050, 16, {}));
  CHECK_THROWS_AS(load_wav(empty), EmptyAudio);

  CHECK_THROWS_AS(load_wav(dir.file("missing.wav")), MalformedContainer);
}

TEST_CASE("load_wav skips unknown chunks before fmt/data") {
  TempDir dir("wav_chunks");
  const std::string path = dir.file("listed.wav");
  std::vector<std::uint8_t> out;
  out.insert(out.end(), {'R', 'I', 'F', 'F'});
  testutil::append_u32(out, 0);  // reader walks chunks, not the RIFF size
  out.insert(out.end(), {'W', 'A', 'V', 'E'});
  out.insert(out.end(), {'L', 'I', 'S', 'T'});
  testutil::append_u32(out, 4);
  out.insert(out.end(), {'I', 'N', 'F', 'O'});
  const auto rest = testutil::wav_bytes(1, 1, 22050, 16, testutil::pcm16_frames({100}));
  out.insert(out.end(), rest.begin() + 12, rest.end());
  testutil::write_bytes(path, out);
  const AudioClip clip = load_wav(path);
  CHECK(clip.length() == 1);
}

TEST_CASE("wav round trip stays within quantization error") {
  TempDir dir("wav_rt");
  RngStream rng(321);
  AudioClip clip;
  clip.sample_rate = 22050;
  clip.samples.resize(5000);
  for (Eigen::Index i = 0; i < clip.length(); ++i) clip.samples[i] = rng.uniform(-0.99, 0.99);

  const std::string p16 = dir.file("p16.wav");
  save_wav(p16, clip, WavEncoding::kPcm16);
  const AudioClip back16 = load_wav(p16);
  REQUIRE(back16.length() == clip.length());
  CHECK((back16.samples - clip.samples).abs().maxCoeff() <= 1.0 / 32768.0);

  const std::string pf = dir.file("f32.wav");
  save_wav(pf, clip, WavEncoding::kFloat32);
  const AudioClip backf = load_wav(pf);
  CHECK((backf.samples - clip.samples).abs().maxCoeff() <= 1e-7);

  const std::string pf2 = dir.file("f32b.wav");
  save_wav(pf2, clip, WavEncoding::kFloat32);
  CHECK(testutil::read_bytes(pf) == testutil::read_bytes(pf2));
}

TEST_CASE("resample halves the length from 44100 to 22050") {
  AudioClip clip;
  clip.sample_rate = 44100;
  clip.samples = Eigen::ArrayXd::LinSpaced(44101, 0.0, 1.0);
  const AudioClip out = resample(clip, 22050);
  CHECK(out.sample_rate == 22050);
  CHECK(out.length() == std::llround(44101.0 * 22050 / 44100));
}

TEST_CASE("resample maps a constant signal to the same constant") {
  AudioClip clip;
  clip.sample_rate = 48000;
  clip.samples = Eigen::ArrayXd::Constant(9600, 0.3);
  const AudioClip out = resample(clip, 22050);
  CHECK(out.length() == std::llround(9600.0 * 22050 / 48000));
  CHECK((out.samples - 0.3).abs().maxCoeff() <= 1e-15);
}

TEST_CASE("resample at the source rate is bitwise identity") {
  RngStream rng(7);
  AudioClip clip;
  clip.sample_rate = 22050;
  clip.samples.resize(1000);
  for (Eigen::Index i = 0; i < 1000; ++i) clip.samples[i] = rng.uniform(-1, 1);
  const AudioClip out = resample(clip, 22050);
  REQUIRE(out.length() == clip.length());
  CHECK(std::memcmp(out.samples.data(), clip.samples.data(),
                    sizeof(double) * static_cast<std::size_t>(clip.length())) == 0);
}

TEST_CASE("resample preserves the zero-crossing count of a linear ramp within 1") {
  AudioClip ramp;
  ramp.sample_rate = 44100;
  ramp.samples = Eigen::ArrayXd::LinSpaced(5000, -1.0, 1.0);
  auto crossings = [](const Eigen::ArrayXd& x) {
    int count = 0;
    for (Eigen::Index i = 1; i < x.size(); ++i) {
      if ((x[i - 1] < 0 && x[i] >= 0) || (x[i - 1] >= 0 && x[i] < 0)) ++count;
    }
    return count;
  };
  const int original = crossings(ramp.samples);
  for (int rate : {22050, 16000, 8000, 48000}) {
    const AudioClip out = resample(ramp, rate);
    CHECK(std::abs(crossings(out.samples) - original) <= 1);
    CHECK(out.samples[0] <= 0.0);
    CHECK(out.samples[out.length() - 1] >= 0.0);
  }
}

TEST_CASE("fix_length pads, trims, and is idempotent") {
  RngStream rng(99);
  AudioClip clip;
  clip.sample_rate = kSampleRate;
  clip.samples.resize(100);
  for (Eigen::Index i = 0; i < 100; ++i) clip.samples[i] = rng.uniform(-1, 1);

  SUBCASE("exact length is untouched") {
    AudioClip exact;
    exact.sample_rate = kSampleRate;
    exact.samples = Eigen::ArrayXd::Random(kClipSamples);
    const AudioClip out = fix_length(exact);
    CHECK(std::memcmp(out.samples.data(), exact.samples.data(),
                      sizeof(double) * kClipSamples) == 0);
  }

  SUBCASE("short clips keep their head and pad zeros") {
    const AudioClip out = fix_length(clip);
    REQUIRE(out.length() == kClipSamples);
    CHECK((out.samples.head(100) - clip.samples).abs().maxCoeff() == 0.0);
    CHECK(out.samples.tail(kClipSamples - 100).abs().maxCoeff() == 0.0);
  }

  SUBCASE("long clips are trimmed to the head slice") {
    AudioClip longclip;
    longclip.sample_rate = kSampleRate;
    longclip.samples.resize(200000);
    for (Eigen::Index i = 0; i < 200000; ++i) longclip.samples[i] = rng.uniform(-1, 1);
    const AudioClip out = fix_length(longclip);
    REQUIRE(out.length() == kClipSamples);
    // Slice oracle: element-wise equality with the input's head.
    CHECK((out.samples - longclip.samples.head(kClipSamples)).abs().maxCoeff() == 0.0);
  }

  SUBCASE("idempotence at random lengths") {
    RngStream lens(5);
    for (int trial = 0; trial < 20; ++trial) {
      const auto n = static_cast<Eigen::Index>(1 + lens.uniform_int(4000));
      const auto target = static_cast<Eigen::Index>(1 + lens.uniform_int(4000));
      AudioClip c;
      c.sample_rate = kSampleRate;
      c.samples.resize(n);
      for (Eigen::Index i = 0; i < n; ++i) c.samples[i] = lens.uniform(-1, 1);
      const AudioClip once = fix_length(c, target);
      const AudioClip twice = fix_length(once, target);
      REQUIRE(once.length() == target);
      CHECK((twice.samples - once.samples).abs().maxCoeff() == 0.0);
    }
  }
}
