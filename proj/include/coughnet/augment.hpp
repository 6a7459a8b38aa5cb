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

// The five waveform transforms used to upsample the positive class, plus the
// rebalancing policy itself. All transforms are pure given their parameters;
// the upsampler draws parameters from per-example keyed random streams so
// synthetic clips are reproducible independently of generation order.

#ifndef COUGHNET_AUGMENT_HPP_
#define COUGHNET_AUGMENT_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "coughnet/audio.hpp"

namespace coughnet {

struct AugmentSpec {
  double time_stretch_min = 0.8;
  double time_stretch_max = 1.25;
  double pitch_shift_min = -4.0;   // semitones
  double pitch_shift_max = 4.0;
  double shift_min = -0.5;         // fraction of clip length
  double shift_max = 0.5;
  bool shift_rollover = true;
  double trim_threshold_db = 20.0;
  double gain_min_db = -12.0;
  double gain_max_db = 12.0;
  double per_transform_probability = 0.5;
  double target_negatives_per_positive = 3.0;
  Eigen::Index clip_samples = kClipSamples;  // re-canonicalization length
};

// One corpus entry. Synthetic examples carry the identifier of the original
// positive they were derived from, which fold assignment must respect.
struct LabeledClip {
  AudioClip clip;
  int label = 0;
  std::string id;
  std::string source_id;       // empty for originals
  std::string transform_log;   // "name=param;..." provenance, empty for originals
};

// Phase-vocoder time stretch; output length round(len / rate), pitch
// preserved. Requires 0.1 <= rate <= 10.
AudioClip time_stretch(const AudioClip& clip, double rate);

// Pitch shift by fractional semitones at constant length, via time stretch
// plus interpolation back to the input length. Requires |semitones| <= 12.
AudioClip pitch_shift(const AudioClip& clip, double semitones);

// Shift samples by round(fraction * length) positions. With rollover the
// shift is circular; without it vacated positions are zero-filled.
AudioClip shift(const AudioClip& clip, double fraction, bool rollover);

// Removes leading and trailing 2048-sample frames whose RMS is more than
// threshold_db below the peak frame RMS. An all-silent clip yields the
// empty-marker clip (length 0); fix_length restores it to padded silence.
AudioClip trim_silence(const AudioClip& clip, double threshold_db = 20.0);

// Multiplies every sample by 10^(db/20). No clipping. Requires |db| <= 40.
AudioClip gain(const AudioClip& clip, double db);

// Appends synthetic positives until positives >= ceil(negatives / ratio).
// Source positives are used round-robin in manifest order; each synthetic is
// a composition of the five transforms, each included independently with
// spec.per_transform_probability, with parameters drawn from a stream keyed
// by (rng_seed, source index, copy index). Outputs are re-canonicalized to
// spec.clip_samples. Throws OneClassOnly when a class is missing.
std::vector<LabeledClip> upsample_positives(std::vector<LabeledClip> manifest,
                                            const AugmentSpec& spec,
                                            std::uint64_t rng_seed);

}  // namespace coughnet

#endif  // COUGHNET_AUGMENT_HPP_
