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

// MFCC extraction chain: centered STFT with a periodic Hann window, power
// spectrum, triangular mel filterbank, natural-log compression with a floor,
// and a truncated orthonormal DCT-II along the mel axis. A canonical
// 154350-sample clip at 22050 Hz yields a 15 x 302 coefficient matrix.

#ifndef COUGHNET_FEATURES_HPP_
#define COUGHNET_FEATURES_HPP_

#include <Eigen/Core>
#include <string>

#include "coughnet/audio.hpp"

namespace coughnet {

struct FeatureConfig {
  int sample_rate = kSampleRate;
  Eigen::Index clip_samples = kClipSamples;
  int n_fft = 2048;
  int hop = 512;
  int n_mels = 128;
  int n_mfcc = 15;
  double log_floor = 1e-10;

  // Centered framing: 1 + floor(clip / hop) frames (302 for the canonical clip).
  int n_frames() const {
    return 1 + static_cast<int>(clip_samples / hop);
  }
};

// Power spectrogram, (n_fft/2 + 1) rows x n_frames columns, entries >= 0.
struct Spectrogram {
  Eigen::MatrixXd power;
  int n_fft = 2048;
  int hop = 512;
};

// Triangular filters, one row per mel band, evaluated at FFT bin centers.
// Rows peak at 1 in continuous frequency; all entries lie in [0, 1].
struct MelFilterbank {
  Eigen::MatrixXd weights;  // n_mels x (n_fft/2 + 1)
  int n_mels = 0;
  double f_min = 0.0;
  double f_max = 0.0;
};

struct FeatureMatrix {
  Eigen::MatrixXd coefficients;  // n_mfcc x n_frames
  std::string source_id;
};

// Mel(f) = 2595 * log10(1 + f / 700). Strictly increasing; f must be >= 0.
double hz_to_mel(double f);

// Exact inverse: 700 * (10^(m / 2595) - 1); m must be >= 0.
double mel_to_hz(double m);

// Periodic Hann window of length n: 0.5 * (1 - cos(2 pi k / n)).
Eigen::VectorXd hann_window(int n);

// Complex STFT with centered frames and reflection padding. Works for any
// signal length >= 1; output is (n_fft/2 + 1) x (1 + floor(len / hop)).
Eigen::MatrixXcd stft_complex(const Eigen::ArrayXd& x, int n_fft, int hop);

// Least-squares inverse STFT (windowed overlap-add normalized by the summed
// squared window), trimmed of the n_fft/2 centering pad and cut or
// zero-padded to out_length.
Eigen::ArrayXd istft(const Eigen::MatrixXcd& frames, int n_fft, int hop,
                     Eigen::Index out_length);

// Squared-magnitude STFT of a canonical-length clip. Throws LengthMismatch
// when the clip does not match config.clip_samples.
Spectrogram stft_power(const AudioClip& clip, const FeatureConfig& config = {});

// n_mels + 2 breakpoints equally spaced on the mel axis between f_min = 0 and
// f_max = sample_rate / 2, each filter rising and falling linearly in Hz
// between consecutive breakpoints.
MelFilterbank mel_filterbank(int n_mels = 128, int n_fft = 2048,
                             int sample_rate = kSampleRate);

// Full n x n orthonormal DCT-II matrix G, G * G^T = I.
Eigen::MatrixXd dct_matrix(int n);

// The full chain. Requires the clip at config.sample_rate with exactly
// config.clip_samples samples.
FeatureMatrix mfcc(const AudioClip& clip, const FeatureConfig& config = {},
                   const std::string& source_id = "");

// Precomputes the filterbank and DCT rows once; immutable after construction
// and safe to share across threads when extracting a corpus.
class FeatureExtractor {
 public:
  explicit FeatureExtractor(const FeatureConfig& config = {});

  const FeatureConfig& config() const { return config_; }
  FeatureMatrix compute(const AudioClip& clip,
                        const std::string& source_id = "") const;

 private:
  FeatureConfig config_;
  MelFilterbank bank_;
  Eigen::MatrixXd dct_rows_;  // n_mfcc x n_mels
};

// Binary feature cache, one file per clip: magic "CMFC", u32 version = 1,
// u32 n_mfcc, u32 n_frames, row-major doubles, u32 id length, UTF-8 id.
// All fields little-endian.
void write_feature_cache(const std::string& path, const FeatureMatrix& features);
FeatureMatrix read_feature_cache(const std::string& path);

}  // namespace coughnet

#endif  // COUGHNET_FEATURES_HPP_
