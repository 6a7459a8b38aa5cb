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

#ifndef COUGHNET_AUDIO_HPP_
#define COUGHNET_AUDIO_HPP_

#include <Eigen/Core>
#include <cstdint>
#include <string>

namespace coughnet {

// Canonical geometry: every clip entering the feature extractor is mono at
// kSampleRate and exactly kClipSamples long (7 seconds).
inline constexpr int kSampleRate = 22050;
inline constexpr int kClipSamples = 154350;

// Mono audio. Amplitudes are dimensionless, nominally in [-1, 1], and are
// deliberately never clamped: gain and mixdown must stay exactly linear.
struct AudioClip {
  Eigen::ArrayXd samples;
  int sample_rate = kSampleRate;

  Eigen::Index length() const { return samples.size(); }
};

enum class WavEncoding { kPcm16, kFloat32 };

// Decodes a RIFF/WAVE file with 16-bit PCM, 24-bit PCM, or 32-bit float
// samples and 1 or 2 channels. Stereo is mixed down by per-sample channel
// mean. 16-bit scales by 1/32768, 24-bit by 1/8388608.
// Throws MalformedContainer / UnsupportedEncoding / EmptyAudio.
AudioClip load_wav(const std::string& path);

// Writes a mono WAV file. kPcm16 quantizes (with clipping at full scale);
// kFloat32 is exact to float precision.
void save_wav(const std::string& path, const AudioClip& clip,
              WavEncoding encoding = WavEncoding::kFloat32);

// Linear-interpolation resampler. Output length round(len * target / source).
// Returns the clip bit-for-bit unchanged when the rates already match.
AudioClip resample(const AudioClip& clip, int target_rate);

// Linear interpolation onto exactly n_samples output positions, keeping the
// declared sample rate. Used by pitch shifting where the implied intermediate
// rate is not an integer.
AudioClip resample_to_length(const AudioClip& clip, Eigen::Index n_samples);

// Head-preserving trim / zero pad to exactly n_samples.
AudioClip fix_length(const AudioClip& clip, Eigen::Index n_samples = kClipSamples);

}  // namespace coughnet

#endif  // COUGHNET_AUDIO_HPP_
