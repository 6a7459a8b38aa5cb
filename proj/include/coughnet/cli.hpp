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

#ifndef COUGHNET_CLI_HPP_
#define COUGHNET_CLI_HPP_

#include <string>
#include <vector>

#include "coughnet/augment.hpp"
#include "coughnet/features.hpp"
#include "coughnet/synth.hpp"
#include "coughnet/train.hpp"

namespace coughnet {

// Everything configurable from the config file, environment, and flags.
// Precedence: defaults < config file < COUGHNET_* environment < CLI flags.
struct PipelineConfig {
  TrainConfig train;
  FeatureConfig features;
  SynthSpec synth;
  double clip_seconds = 7.0;  // drives features.clip_samples and synth length
  int jobs = 1;

  // Recomputes derived fields (clip_samples, synth geometry) from
  // clip_seconds and the shared sample rate and seed.
  void finalize();
};

// Applies `key = value` pairs from a flat config file. Unknown keys throw
// ConfigError naming the key.
void apply_config_file(PipelineConfig& config, const std::string& path);

// Applies COUGHNET_<UPPERCASED KEY> environment overrides.
void apply_env_overrides(PipelineConfig& config);

// Sets one key; shared by file, environment, and test code.
void apply_config_key(PipelineConfig& config, const std::string& key,
                      const std::string& value);

// Resamples to the configured rate and pads/trims to the canonical length.
AudioClip canonicalize(const AudioClip& clip, const FeatureConfig& features);

// Loads a manifest and decodes + canonicalizes every row. Relative paths
// resolve against the manifest's directory. Per-file failures throw.
std::vector<LabeledClip> load_corpus(const std::string& manifest_path,
                                     const FeatureConfig& features);

// The `coughnet` entry point, callable in-process. `args` excludes the
// program name. Returns the process exit code.
int run_cli(const std::vector<std::string>& args);

}  // namespace coughnet

#endif  // COUGHNET_CLI_HPP_
