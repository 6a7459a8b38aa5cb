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

#include "coughnet/audio.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <vector>

#include "coughnet/errors.hpp"

namespace coughnet {

namespace {

constexpr double kPcm16Scale = 32768.0;
constexpr double kPcm24Scale = 8388608.0;

std::uint16_t read_u16(const std::uint8_t* p) {
  return static_cast<std::uint16_t>(p[0]) |
         static_cast<std::uint16_t>(p[1]) << 8;
}

std::uint32_t read_u32(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) |
         static_cast<std::uint32_t>(p[1]) << 8 |
         static_cast<std::uint32_t>(p[2]) << 16 |
         static_cast<std::uint32_t>(p[3]) << 24;
}

void append_u16(std::vector<std::uint8_t>& b, std::uint16_t v) {
  b.push_back(static_cast<std::uint8_t>(v & 0xff));
  b.push_back(static_cast<std::uint8_t>(v >> 8));
}

void append_u32(std::vector<std::uint8_t>& b, std::uint32_t v) {
  for (int i = 0; i < 4; ++i)
    b.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
}

struct FmtChunk {
  std::uint16_t format = 0;
  std::uint16_t channels = 0;
  std::uint32_t sample_rate = 0;
  std::uint16_t bits_per_sample = 0;
};

}  // namespace

AudioClip load_wav(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MalformedContainer(path + ": cannot open file");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    throw MalformedContainer(path + ": not a RIFF/WAVE container");
  }

  FmtChunk fmt;
  bool have_fmt = false;
  const std::uint8_t* data = nullptr;
  std::size_t data_size = 0;

  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const char* id = reinterpret_cast<const char*>(bytes.data() + pos);
    std::uint32_t size = read_u32(bytes.data() + pos + 4);
    pos += 8;
    if (pos + size > bytes.size()) {
      throw MalformedContainer(path + ": chunk overruns file");
    }
    if (std::memcmp(id, "fmt ", 4) == 0) {
      if (size < 16) throw MalformedContainer(path + ": fmt chunk too short");
      fmt.format = read_u16(bytes.data() + pos);
      fmt.channels = read_u16(bytes.data() + pos + 2);
      fmt.sample_rate = read_u32(bytes.data() + pos + 4);
      fmt.bits_per_sample = read_u16(bytes.data() + pos + 14);
      have_fmt = true;
    } else if (std::memcmp(id, "data", 4) == 0) {
      data = bytes.data() + pos;
      data_size = size;
    }
    pos += size + (size & 1);  // chunks are word-aligned
  }

  if (!have_fmt) throw MalformedContainer(path + ": missing fmt chunk");
  if (data == nullptr) throw MalformedContainer(path + ": missing data chunk");
  if (fmt.sample_rate == 0) throw MalformedContainer(path + ": zero sample rate");
  if (fmt.channels < 1 || fmt.channels > 2) {
    throw UnsupportedEncoding(path + ": " + std::to_string(fmt.channels) +
                              " channels (only 1-2 supported)");
  }

  const bool pcm16 = fmt.format == 1 && fmt.bits_per_sample == 16;
  const bool pcm24 = fmt.format == 1 && fmt.bits_per_sample == 24;
  const bool f32 = fmt.format == 3 && fmt.bits_per_sample == 32;
  if (!pcm16 && !pcm24 && !f32) {
    throw UnsupportedEncoding(path + ": format tag " + std::to_string(fmt.format) +
                              " at " + std::to_string(fmt.bits_per_sample) + " bits");
  }

  const std::size_t bytes_per_sample = fmt.bits_per_sample / 8;
  const std::size_t frame_bytes = bytes_per_sample * fmt.channels;
  const std::size_t n_frames = data_size / frame_bytes;
  if (n_frames == 0) throw EmptyAudio(path + ": zero data frames");

  AudioClip clip;
  clip.sample_rate = static_cast<int>(fmt.sample_rate);
  clip.samples.resize(static_cast<Eigen::Index>(n_frames));

  for (std::size_t i = 0; i < n_frames; ++i) {
    double acc = 0.0;
    for (unsigned ch = 0; ch < fmt.channels; ++ch) {
      const std::uint8_t* p = data + i * frame_bytes + ch * bytes_per_sample;
      double v;
      if (pcm16) {
        auto raw = static_cast<std::int16_t>(read_u16(p));
        v = raw / kPcm16Scale;
      } else if (pcm24) {
        std::int32_t raw = p[0] | (p[1] << 8) | (p[2] << 16);
        if (raw & 0x800000) raw |= ~0xffffff;  // sign extend
        v = raw / kPcm24Scale;
      } else {
        float f;
        std::memcpy(&f, p, 4);
        v = f;
      }
      acc += v;
    }
    clip.samples[static_cast<Eigen::Index>(i)] = acc / fmt.channels;
  }
  return clip;
}

void save_wav(const std::string& path, const AudioClip& clip,
              WavEncoding encoding) {
  const auto n = static_cast<std::uint32_t>(clip.length());
  const std::uint16_t bits = encoding == WavEncoding::kPcm16 ? 16 : 32;
  const std::uint32_t data_size = n * (bits / 8);

  std::vector<std::uint8_t> out;
  out.reserve(44 + data_size);
  out.insert(out.end(), {'R', 'I', 'F', 'F'});
  append_u32(out, 36 + data_size);
  out.insert(out.end(), {'W', 'A', 'V', 'E'});
  out.insert(out.end(), {'f', 'm', 't', ' '});
  append_u32(out, 16);
  append_u16(out, encoding == WavEncoding::kPcm16 ? 1 : 3);
  append_u16(out, 1);  // mono
  append_u32(out, static_cast<std::uint32_t>(clip.sample_rate));
  append_u32(out, static_cast<std::uint32_t>(clip.sample_rate) * (bits / 8));
  append_u16(out, bits / 8);
  append_u16(out, bits);
  out.insert(out.end(), {'d', 'a', 't', 'a'});
  append_u32(out, data_size);

  for (Eigen::Index i = 0; i < clip.length(); ++i) {
    if (encoding == WavEncoding::kPcm16) {
      double scaled = std::round(clip.samples[i] * kPcm16Scale);
      scaled = std::clamp(scaled, -32768.0, 32767.0);
      append_u16(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(scaled)));
    } else {
      float f = static_cast<float>(clip.samples[i]);
      std::uint32_t raw;
      std::memcpy(&raw, &f, 4);
      append_u32(out, raw);
    }
  }

  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError(path + ": cannot open for writing");
  os.write(reinterpret_cast<const char*>(out.data()),
           static_cast<std::streamsize>(out.size()));
  if (!os) throw IoError(path + ": short write");
}

AudioClip resample(const AudioClip& clip, int target_rate) {
  if (target_rate <= 0) throw DomainError("resample: target rate must be positive");
  if (clip.sample_rate == target_rate) return clip;

  const auto n_in = clip.length();
  const auto n_out = static_cast<Eigen::Index>(std::llround(
      static_cast<double>(n_in) * target_rate / clip.sample_rate));

  AudioClip out;
  out.sample_rate = target_rate;
  out.samples.resize(n_out);
  const double step = static_cast<double>(clip.sample_rate) / target_rate;
  for (Eigen::Index i = 0; i < n_out; ++i) {
    const double t = i * step;
    const auto lo = static_cast<Eigen::Index>(t);
    if (lo >= n_in - 1) {
      out.samples[i] = clip.samples[n_in - 1];
    } else {
      const double frac = t - static_cast<double>(lo);
      out.samples[i] = (1.0 - frac) * clip.samples[lo] + frac * clip.samples[lo + 1];
    }
  }
  return out;
}

AudioClip resample_to_length(const AudioClip& clip, Eigen::Index n_samples) {
  const auto n_in = clip.length();
  AudioClip out;
  out.sample_rate = clip.sample_rate;
  out.samples.resize(n_samples);
  if (n_in == 0) {
    out.samples.setZero();
    return out;
  }
  const double step = static_cast<double>(n_in) / static_cast<double>(n_samples);
  for (Eigen::Index i = 0; i < n_samples; ++i) {
    const double t = i * step;
    const auto lo = static_cast<Eigen::Index>(t);
    if (lo >= n_in - 1) {
      out.samples[i] = clip.samples[n_in - 1];
    } else {
      const double frac = t - static_cast<double>(lo);
      out.samples[i] = (1.0 - frac) * clip.samples[lo] + frac * clip.samples[lo + 1];
    }
  }
  return out;
}

AudioClip fix_length(const AudioClip& clip, Eigen::Index n_samples) {
  if (clip.length() == n_samples) return clip;
  AudioClip out;
  out.sample_rate = clip.sample_rate;
  out.samples = Eigen::ArrayXd::Zero(n_samples);
  const auto keep = std::min(clip.length(), n_samples);
  out.samples.head(keep) = clip.samples.head(keep);
  return out;
}

}  // namespace coughnet
