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

#include "coughnet/features.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <vector>

#include "coughnet/errors.hpp"
#include "coughnet/fft.hpp"

namespace coughnet {

namespace {

// Reflection without edge duplication (period 2L - 2); replicates for L == 1.
Eigen::Index reflect_index(Eigen::Index i, Eigen::Index len) {
  if (len == 1) return 0;
  const Eigen::Index period = 2 * (len - 1);
  i = ((i % period) + period) % period;
  return i < len ? i : period - i;
}

void write_u32(std::ofstream& os, std::uint32_t v) {
  std::uint8_t b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<std::uint8_t>((v >> (8 * i)) & 0xff);
  os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t read_u32(std::ifstream& is, const std::string& path) {
  std::uint8_t b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (!is) throw MalformedContainer(path + ": truncated feature cache");
  return static_cast<std::uint32_t>(b[0]) | static_cast<std::uint32_t>(b[1]) << 8 |
         static_cast<std::uint32_t>(b[2]) << 16 | static_cast<std::uint32_t>(b[3]) << 24;
}

}  // namespace

double hz_to_mel(double f) {
  if (f < 0.0) throw DomainError("hz_to_mel: negative frequency");
  return 2595.0 * std::log10(1.0 + f / 700.0);
}

double mel_to_hz(double m) {
  if (m < 0.0) throw DomainError("mel_to_hz: negative mel value");
  return 700.0 * (std::pow(10.0, m / 2595.0) - 1.0);
}

Eigen::VectorXd hann_window(int n) {
  Eigen::VectorXd w(n);
  for (int k = 0; k < n; ++k) {
    w[k] = 0.5 * (1.0 - std::cos(2.0 * M_PI * k / n));
  }
  return w;
}

Eigen::MatrixXcd stft_complex(const Eigen::ArrayXd& x, int n_fft, int hop) {
  const Eigen::Index len = x.size();
  if (len < 1) throw EmptyAudio("stft: empty signal");
  const int n_frames = 1 + static_cast<int>(len / hop);
  const int pad = n_fft / 2;

  const Eigen::VectorXd window = hann_window(n_fft);
  const Fft fft(n_fft);

  Eigen::MatrixXcd out(n_fft / 2 + 1, n_frames);
  Eigen::VectorXd frame(n_fft);
  for (int f = 0; f < n_frames; ++f) {
    const Eigen::Index start = static_cast<Eigen::Index>(f) * hop - pad;
    for (int k = 0; k < n_fft; ++k) {
      const Eigen::Index src = start + k;
      const double v = (src >= 0 && src < len) ? x[src] : x[reflect_index(src, len)];
      frame[k] = v * window[k];
    }
    out.col(f) = fft.forward_real(frame);
  }
  return out;
}

Eigen::ArrayXd istft(const Eigen::MatrixXcd& frames, int n_fft, int hop,
                     Eigen::Index out_length) {
  const auto n_frames = frames.cols();
  if (frames.rows() != n_fft / 2 + 1) {
    throw ShapeMismatch("istft: expected n_fft/2+1 spectrum rows");
  }
  const Eigen::VectorXd window = hann_window(n_fft);
  const Fft fft(n_fft);

  const Eigen::Index full = (n_frames - 1) * hop + n_fft;
  Eigen::ArrayXd acc = Eigen::ArrayXd::Zero(full);
  Eigen::ArrayXd norm = Eigen::ArrayXd::Zero(full);
  for (Eigen::Index f = 0; f < n_frames; ++f) {
    const Eigen::VectorXd frame = fft.inverse_real(frames.col(f));
    const Eigen::Index start = f * hop;
    for (int k = 0; k < n_fft; ++k) {
      acc[start + k] += frame[k] * window[k];
      norm[start + k] += window[k] * window[k];
    }
  }
  for (Eigen::Index i = 0; i < full; ++i) {
    if (norm[i] > 1e-12) acc[i] /= norm[i];
  }

  // Drop the centering pad, then cut or zero-pad to the requested length.
  const int pad = n_fft / 2;
  Eigen::ArrayXd out = Eigen::ArrayXd::Zero(out_length);
  const Eigen::Index avail = std::max<Eigen::Index>(0, full - pad);
  const Eigen::Index keep = std::min(out_length, avail);
  if (keep > 0) out.head(keep) = acc.segment(pad, keep);
  return out;
}

Spectrogram stft_power(const AudioClip& clip, const FeatureConfig& config) {
  if (clip.length() != config.clip_samples) {
    throw LengthMismatch("stft_power: clip has " + std::to_string(clip.length()) +
                         " samples, expected " + std::to_string(config.clip_samples));
  }
  const Eigen::MatrixXcd spec = stft_complex(clip.samples, config.n_fft, config.hop);
  Spectrogram s;
  s.n_fft = config.n_fft;
  s.hop = config.hop;
  s.power = spec.cwiseAbs2();
  return s;
}

MelFilterbank mel_filterbank(int n_mels, int n_fft, int sample_rate) {
  if (n_mels < 1) throw DomainError("mel_filterbank: n_mels must be >= 1");
  const double f_max = sample_rate / 2.0;
  const int n_bins = n_fft / 2 + 1;

  // n_mels + 2 breakpoints equally spaced in mel, mapped back to Hz.
  Eigen::VectorXd breakpoints(n_mels + 2);
  const double mel_max = hz_to_mel(f_max);
  for (int i = 0; i < n_mels + 2; ++i) {
    breakpoints[i] = mel_to_hz(mel_max * i / (n_mels + 1));
  }

  MelFilterbank bank;
  bank.n_mels = n_mels;
  bank.f_min = 0.0;
  bank.f_max = f_max;
  bank.weights = Eigen::MatrixXd::Zero(n_mels, n_bins);
  for (int m = 0; m < n_mels; ++m) {
    const double lo = breakpoints[m];
    const double mid = breakpoints[m + 1];
    const double hi = breakpoints[m + 2];
    for (int k = 0; k < n_bins; ++k) {
      const double f = static_cast<double>(k) * sample_rate / n_fft;
      const double rising = (f - lo) / (mid - lo);
      const double falling = (hi - f) / (hi - mid);
      bank.weights(m, k) = std::max(0.0, std::min(rising, falling));
    }
  }
  return bank;
}

Eigen::MatrixXd dct_matrix(int n) {
  Eigen::MatrixXd g(n, n);
  const double scale0 = std::sqrt(1.0 / n);
  const double scale = std::sqrt(2.0 / n);
  for (int k = 0; k < n; ++k) {
    for (int j = 0; j < n; ++j) {
      const double c = std::cos(M_PI * k * (2.0 * j + 1.0) / (2.0 * n));
      g(k, j) = (k == 0 ? scale0 : scale) * c;
    }
  }
  return g;
}

FeatureExtractor::FeatureExtractor(const FeatureConfig& config)
    : config_(config),
      bank_(mel_filterbank(config.n_mels, config.n_fft, config.sample_rate)),
      dct_rows_(dct_matrix(config.n_mels).topRows(config.n_mfcc)) {}

FeatureMatrix FeatureExtractor::compute(const AudioClip& clip,
                                        const std::string& source_id) const {
  const Spectrogram spec = stft_power(clip, config_);
  const Eigen::MatrixXd mel_power = bank_.weights * spec.power;
  const Eigen::MatrixXd log_mel =
      mel_power.cwiseMax(config_.log_floor).array().log().matrix();
  FeatureMatrix out;
  out.coefficients = dct_rows_ * log_mel;
  out.source_id = source_id;
  return out;
}

FeatureMatrix mfcc(const AudioClip& clip, const FeatureConfig& config,
                   const std::string& source_id) {
  return FeatureExtractor(config).compute(clip, source_id);
}

void write_feature_cache(const std::string& path, const FeatureMatrix& features) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError(path + ": cannot open for writing");
  os.write("CMFC", 4);
  write_u32(os, 1);
  const auto rows = static_cast<std::uint32_t>(features.coefficients.rows());
  const auto cols = static_cast<std::uint32_t>(features.coefficients.cols());
  write_u32(os, rows);
  write_u32(os, cols);
  for (std::uint32_t r = 0; r < rows; ++r) {
    for (std::uint32_t c = 0; c < cols; ++c) {
      const double v = features.coefficients(r, c);
      std::uint64_t raw;
      std::memcpy(&raw, &v, 8);
      std::uint8_t b[8];
      for (int i = 0; i < 8; ++i) b[i] = static_cast<std::uint8_t>((raw >> (8 * i)) & 0xff);
      os.write(reinterpret_cast<const char*>(b), 8);
    }
  }
  write_u32(os, static_cast<std::uint32_t>(features.source_id.size()));
  os.write(features.source_id.data(),
           static_cast<std::streamsize>(features.source_id.size()));
  if (!os) throw IoError(path + ": short write");
}

FeatureMatrix read_feature_cache(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError(path + ": cannot open");
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "CMFC", 4) != 0) {
    throw MalformedContainer(path + ": bad feature cache magic");
  }
  const std::uint32_t version = read_u32(is, path);
  if (version != 1) {
    throw UnsupportedEncoding(path + ": feature cache version " + std::to_string(version));
  }
  const std::uint32_t rows = read_u32(is, path);
  const std::uint32_t cols = read_u32(is, path);
  FeatureMatrix out;
  out.coefficients.resize(rows, cols);
  for (std::uint32_t r = 0; r < rows; ++r) {
    for (std::uint32_t c = 0; c < cols; ++c) {
      std::uint8_t b[8];
      is.read(reinterpret_cast<char*>(b), 8);
      if (!is) throw MalformedContainer(path + ": truncated feature cache");
      std::uint64_t raw = 0;
      for (int i = 0; i < 8; ++i) raw |= static_cast<std::uint64_t>(b[i]) << (8 * i);
      double v;
      std::memcpy(&v, &raw, 8);
      out.coefficients(r, c) = v;
    }
  }
  const std::uint32_t id_len = read_u32(is, path);
  out.source_id.resize(id_len);
  is.read(out.source_id.data(), id_len);
  if (!is) throw MalformedContainer(path + ": truncated source id");
  return out;
}

}  // namespace coughnet
