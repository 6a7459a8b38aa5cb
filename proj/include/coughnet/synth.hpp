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

// Deterministic two-class corpus for desk-scale end-to-end runs. Each clip
// is a handful of exponentially decaying noise bursts over a quiet noise
// floor; the classes differ only by the spectral tilt applied to the burst
// noise, a broadband cue the low-order MFCCs are known to carry. separation
// scales the tilt gap: 0 makes the classes identically distributed.

#ifndef COUGHNET_SYNTH_HPP_
#define COUGHNET_SYNTH_HPP_

#include <cstdint>
#include <vector>

#include "coughnet/augment.hpp"

namespace coughnet {

struct SynthSpec {
  int n_per_class = 100;
  double clip_seconds = 7.0;
  int burst_count_min = 2;
  int burst_count_max = 6;
  double class0_tilt = -6.0;  // dB/octave
  double class1_tilt = 3.0;
  double noise_floor_db = -60.0;
  double separation = 1.0;  // in [0, 1]
  std::uint64_t seed = 0;
  int sample_rate = kSampleRate;

  Eigen::Index clip_samples() const {
    return static_cast<Eigen::Index>(std::llround(clip_seconds * sample_rate));
  }
};

// n_per_class clips per label, deterministic per (seed, label, index).
std::vector<LabeledClip> generate_corpus(const SynthSpec& spec);

}  // namespace coughnet

#endif  // COUGHNET_SYNTH_HPP_
