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

#include "coughnet/synth.hpp"

#include <cmath>
#include <complex>
#include <cstdio>

#include "coughnet/errors.hpp"
#include "coughnet/fft.hpp"
#include "coughnet/rng.hpp"

namespace coughnet {

namespace {

// Gain in dB relative to 1 kHz; flat below 50 Hz to keep the shelf finite.
double tilt_gain(double freq_hz, double tilt_db_per_octave) {
  const double f = std::max(freq_hz, 50.0);
  const double octaves = std::log2(f / 1000.0);
  return std::pow(10.0, tilt_db_per_octave * octaves / 20.0);
}

// White noise shaped by the tilt shelf in the frequency domain.
Eigen::ArrayXd tilted_noise(Eigen::Index length, double tilt, int sample_rate,
                            RngStream& rng) {
  Eigen::Index n_fft = 256;
  while (n_fft < length) n_fft *= 2;

  Eigen::VectorXd noise = Eigen::VectorXd::Zero(n_fft);
  for (Eigen::Index i = 0; i < length; ++i) noise[i] = rng.normal();

  const Fft fft(static_cast<int>(n_fft));
  Eigen::VectorXcd spectrum = fft.forward_real(noise);
  for (Eigen::Index k = 0; k < spectrum.size(); ++k) {
    const double f = static_cast<double>(k) * sample_rate / static_cast<double>(n_fft);
    spectrum[k] *= tilt_gain(f, tilt);
  }
  return fft.inverse_real(spectrum).head(length).array();
}

AudioClip synth_clip(const SynthSpec& spec, double tilt, RngStream& rng) {
  const Eigen::Index n = spec.clip_samples();
  Eigen::ArrayXd signal = Eigen::ArrayXd::Zero(n);

  const int burst_count = spec.burst_count_min +
                          static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(
                              spec.burst_count_max - spec.burst_count_min + 1)));
  for (int b = 0; b < burst_count; ++b) {
    const double tau = rng.uniform(0.05, 0.3);  // seconds
    const auto burst_len = static_cast<Eigen::Index>(
        std::min<double>(static_cast<double>(n), std::llround(4.0 * tau * spec.sample_rate)));
    const Eigen::Index onset =
        static_cast<Eigen::Index>(rng.uniform_int(static_cast<std::uint64_t>(
            std::max<Eigen::Index>(1, n - burst_len + 1))));

    Eigen::ArrayXd burst = tilted_noise(burst_len, tilt, spec.sample_rate, rng);
    for (Eigen::Index i = 0; i < burst_len; ++i) {
      const double t = static_cast<double>(i) / spec.sample_rate;
      signal[onset + i] += burst[i] * std::exp(-t / tau);
    }
  }

  const double peak = signal.abs().maxCoeff();
  if (peak > 0.0) signal *= 0.5 / peak;

  const double floor_amp = std::pow(10.0, spec.noise_floor_db / 20.0);
  for (Eigen::Index i = 0; i < n; ++i) signal[i] += floor_amp * rng.normal();

  AudioClip clip;
  clip.sample_rate = spec.sample_rate;
  clip.samples = std::move(signal);
  return clip;
}

}  // namespace

std::vector<LabeledClip> generate_corpus(const SynthSpec& spec) {
  if (spec.n_per_class < 1) throw DomainError("generate_corpus: n_per_class must be >= 1");
  if (spec.separation < 0.0 || spec.separation > 1.0) {
    throw DomainError("generate_corpus: separation must be in [0, 1]");
  }

  const double center = 0.5 * (spec.class0_tilt + spec.class1_tilt);
  const double tilt0 = center + spec.separation * (spec.class0_tilt - center);
  const double tilt1 = center + spec.separation * (spec.class1_tilt - center);

  std::vector<LabeledClip> corpus;
  corpus.reserve(static_cast<std::size_t>(2 * spec.n_per_class));
  for (int label = 0; label <= 1; ++label) {
    const double tilt = label == 0 ? tilt0 : tilt1;
    for (int i = 0; i < spec.n_per_class; ++i) {
      RngStream rng(spec.seed, {static_cast<std::uint64_t>(label),
                                static_cast<std::uint64_t>(i)});
      LabeledClip entry;
      entry.clip = synth_clip(spec, tilt, rng);
      entry.label = label;
      char name[32];
      std::snprintf(name, sizeof(name), "class%d_%04d.wav", label, i);
      entry.id = name;
      corpus.push_back(std::move(entry));
    }
  }
  return corpus;
}

}  // namespace coughnet
