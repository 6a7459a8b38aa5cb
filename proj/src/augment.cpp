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

#include "coughnet/augment.hpp"

#include <cmath>
#include <complex>
#include <sstream>

#include "coughnet/errors.hpp"
#include "coughnet/features.hpp"
#include "coughnet/rng.hpp"

namespace coughnet {

namespace {

constexpr int kVocoderFft = 2048;
constexpr int kVocoderHop = 512;
constexpr int kTrimFrame = 2048;

double wrap_phase(double x) {
  return x - 2.0 * M_PI * std::round(x / (2.0 * M_PI));
}

std::string format_param(double v) {
  std::ostringstream os;
  os.precision(6);
  os << v;
  return os.str();
}

}  // namespace

AudioClip time_stretch(const AudioClip& clip, double rate) {
  if (rate < 0.1 || rate > 10.0) {
    throw RateOutOfRange("time_stretch: rate " + std::to_string(rate) +
                         " outside [0.1, 10]");
  }
  const Eigen::Index n = clip.length();
  if (n < 2) return clip;

  const Eigen::MatrixXcd spec = stft_complex(clip.samples, kVocoderFft, kVocoderHop);
  const Eigen::Index n_bins = spec.rows();
  const Eigen::Index n_frames = spec.cols();
  const auto out_frames =
      static_cast<Eigen::Index>(std::ceil(static_cast<double>(n_frames) / rate));

  // Expected per-hop phase advance for each bin.
  Eigen::ArrayXd phi_advance(n_bins);
  for (Eigen::Index k = 0; k < n_bins; ++k) {
    phi_advance[k] = 2.0 * M_PI * static_cast<double>(k) * kVocoderHop / kVocoderFft;
  }

  Eigen::ArrayXd phase_acc(n_bins);
  for (Eigen::Index k = 0; k < n_bins; ++k) phase_acc[k] = std::arg(spec(k, 0));

  Eigen::MatrixXcd stretched(n_bins, out_frames);
  for (Eigen::Index j = 0; j < out_frames; ++j) {
    const double t = static_cast<double>(j) * rate;
    const auto i0 = static_cast<Eigen::Index>(t);
    const double alpha = t - static_cast<double>(i0);
    for (Eigen::Index k = 0; k < n_bins; ++k) {
      const std::complex<double> c0 = spec(k, i0);
      const std::complex<double> c1 =
          (i0 + 1 < n_frames) ? spec(k, i0 + 1) : std::complex<double>(0.0, 0.0);
      const double mag = (1.0 - alpha) * std::abs(c0) + alpha * std::abs(c1);
      stretched(k, j) = std::polar(mag, phase_acc[k]);
      const double dphi = wrap_phase(std::arg(c1) - std::arg(c0) - phi_advance[k]);
      phase_acc[k] += phi_advance[k] + dphi;
    }
  }

  const auto out_len = static_cast<Eigen::Index>(
      std::llround(static_cast<double>(n) / rate));
  AudioClip out;
  out.sample_rate = clip.sample_rate;
  out.samples = istft(stretched, kVocoderFft, kVocoderHop, out_len);
  return out;
}

AudioClip pitch_shift(const AudioClip& clip, double semitones) {
  if (std::abs(semitones) > 12.0) {
    throw SemitonesOutOfRange("pitch_shift: " + std::to_string(semitones) +
                              " semitones outside [-12, 12]");
  }
  const Eigen::Index n = clip.length();
  if (n < 2) return clip;
  // Stretch slows the clip by the pitch factor, then interpolating back to
  // the original length compresses the waveform and scales every frequency
  // by 2^(semitones/12).
  const double rate = std::pow(2.0, -semitones / 12.0);
  const AudioClip stretched = time_stretch(clip, rate);
  return resample_to_length(stretched, n);
}

AudioClip shift(const AudioClip& clip, double fraction, bool rollover) {
  if (std::abs(fraction) > 1.0) {
    throw DomainError("shift: |fraction| must be <= 1");
  }
  const Eigen::Index n = clip.length();
  AudioClip out;
  out.sample_rate = clip.sample_rate;
  out.samples.resize(n);
  if (n == 0) return out;

  const auto k = static_cast<Eigen::Index>(
      std::llround(fraction * static_cast<double>(n)));
  for (Eigen::Index i = 0; i < n; ++i) {
    Eigen::Index src = i - k;
    if (rollover) {
      src = ((src % n) + n) % n;
      out.samples[i] = clip.samples[src];
    } else {
      out.samples[i] = (src >= 0 && src < n) ? clip.samples[src] : 0.0;
    }
  }
  return out;
}

AudioClip trim_silence(const AudioClip& clip, double threshold_db) {
  const Eigen::Index n = clip.length();
  if (n == 0) throw EmptyAudio("trim_silence: empty clip");

  const auto n_frames = (n + kTrimFrame - 1) / kTrimFrame;
  Eigen::ArrayXd rms(n_frames);
  for (Eigen::Index f = 0; f < n_frames; ++f) {
    const Eigen::Index start = f * kTrimFrame;
    const Eigen::Index len = std::min<Eigen::Index>(kTrimFrame, n - start);
    rms[f] = std::sqrt(clip.samples.segment(start, len).square().mean());
  }
  const double peak = rms.maxCoeff();

  AudioClip out;
  out.sample_rate = clip.sample_rate;
  if (peak == 0.0) {
    out.samples.resize(0);  // empty marker: the whole clip is silence
    return out;
  }

  const double threshold = peak * std::pow(10.0, -threshold_db / 20.0);
  Eigen::Index first = 0;
  while (first < n_frames && rms[first] < threshold) ++first;
  Eigen::Index last = n_frames - 1;
  while (last > first && rms[last] < threshold) --last;

  const Eigen::Index begin = first * kTrimFrame;
  const Eigen::Index end = std::min(n, (last + 1) * kTrimFrame);
  out.samples = clip.samples.segment(begin, end - begin);
  return out;
}

AudioClip gain(const AudioClip& clip, double db) {
  if (std::abs(db) > 40.0) throw DomainError("gain: |db| must be <= 40");
  AudioClip out;
  out.sample_rate = clip.sample_rate;
  out.samples = clip.samples * std::pow(10.0, db / 20.0);
  return out;
}

std::vector<LabeledClip> upsample_positives(std::vector<LabeledClip> manifest,
                                            const AugmentSpec& spec,
                                            std::uint64_t rng_seed) {
  std::vector<Eigen::Index> positives;
  Eigen::Index negatives = 0;
  for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(manifest.size()); ++i) {
    if (manifest[i].label == 1) {
      positives.push_back(i);
    } else {
      ++negatives;
    }
  }
  if (positives.empty() || negatives == 0) {
    throw OneClassOnly("upsample_positives: manifest must contain both classes");
  }

  const auto target = static_cast<Eigen::Index>(
      std::ceil(static_cast<double>(negatives) / spec.target_negatives_per_positive));
  const auto needed = target - static_cast<Eigen::Index>(positives.size());
  if (needed <= 0) return manifest;

  const auto n_pos = static_cast<Eigen::Index>(positives.size());
  for (Eigen::Index j = 0; j < needed; ++j) {
    const Eigen::Index source_idx = j % n_pos;
    const Eigen::Index copy_idx = j / n_pos;
    const LabeledClip& source = manifest[positives[source_idx]];

    RngStream rng(rng_seed, {static_cast<std::uint64_t>(source_idx),
                             static_cast<std::uint64_t>(copy_idx)});
    AudioClip current = source.clip;
    std::ostringstream log;

    if (rng.bernoulli(spec.per_transform_probability)) {
      const double rate = rng.uniform(spec.time_stretch_min, spec.time_stretch_max);
      current = time_stretch(current, rate);
      log << "time_stretch=" << format_param(rate) << ';';
    }
    if (rng.bernoulli(spec.per_transform_probability)) {
      const double semitones = rng.uniform(spec.pitch_shift_min, spec.pitch_shift_max);
      current = pitch_shift(current, semitones);
      log << "pitch_shift=" << format_param(semitones) << ';';
    }
    if (rng.bernoulli(spec.per_transform_probability)) {
      const double fraction = rng.uniform(spec.shift_min, spec.shift_max);
      current = shift(current, fraction, spec.shift_rollover);
      log << "shift=" << format_param(fraction)
          << (spec.shift_rollover ? ",rollover" : ",zerofill") << ';';
    }
    if (rng.bernoulli(spec.per_transform_probability)) {
      current = trim_silence(current, spec.trim_threshold_db);
      log << "trim=" << format_param(spec.trim_threshold_db) << ';';
    }
    if (rng.bernoulli(spec.per_transform_probability)) {
      const double db = rng.uniform(spec.gain_min_db, spec.gain_max_db);
      current = gain(current, db);
      log << "gain=" << format_param(db) << ';';
    }

    LabeledClip synthetic;
    synthetic.clip = fix_length(current, spec.clip_samples);
    synthetic.label = 1;
    synthetic.id = source.id + "#aug" + std::to_string(copy_idx);
    synthetic.source_id = source.id;
    synthetic.transform_log = log.str();
    manifest.push_back(std::move(synthetic));
  }
  return manifest;
}

}  // namespace coughnet
