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

#include "coughnet/cli.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <atomic>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <thread>
#include <unordered_map>

#include "coughnet/errors.hpp"
#include "coughnet/eval.hpp"
#include "coughnet/manifest.hpp"
#include "coughnet/nn.hpp"

namespace coughnet {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

constexpr const char* kVersion = "1.0.0";

// ---------------------------------------------------------------- config --

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = {
      "learning_rate", "batch_size", "epochs", "folds", "seed",
      "adam_beta1", "adam_beta2", "adam_epsilon",
      "reg_kernel", "reg_bias", "reg_activity",
      "augment_scope", "final_model",
      "sample_rate", "clip_seconds", "n_fft", "hop", "n_mels", "n_mfcc",
      "augment_probability", "time_stretch_min", "time_stretch_max",
      "pitch_shift_min", "pitch_shift_max", "shift_min", "shift_max",
      "shift_rollover", "trim_threshold_db", "gain_min_db", "gain_max_db",
      "target_ratio",
      "synth_n_per_class", "synth_separation", "synth_burst_min",
      "synth_burst_max", "synth_tilt0", "synth_tilt1", "synth_noise_floor_db",
      "jobs",
  };
  return keys;
}

double parse_double(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const double v = std::stod(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': bad numeric value '" + value + "'");
  }
}

long long parse_int(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const long long v = std::stoll(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': bad integer value '" + value + "'");
  }
}

std::string trim_ws(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t");
  return s.substr(begin, end - begin + 1);
}

}  // namespace

void PipelineConfig::finalize() {
  features.clip_samples =
      static_cast<Eigen::Index>(std::llround(clip_seconds * features.sample_rate));
  synth.clip_seconds = clip_seconds;
  synth.sample_rate = features.sample_rate;
  synth.seed = train.seed;
  train.augment.clip_samples = features.clip_samples;
}

void apply_config_key(PipelineConfig& c, const std::string& key,
                      const std::string& value) {
  if (key == "learning_rate") c.train.learning_rate = parse_double(key, value);
  else if (key == "batch_size") c.train.batch_size = static_cast<int>(parse_int(key, value));
  else if (key == "epochs") c.train.epochs = static_cast<int>(parse_int(key, value));
  else if (key == "folds") c.train.folds = static_cast<int>(parse_int(key, value));
  else if (key == "seed") c.train.seed = static_cast<std::uint64_t>(parse_int(key, value));
  else if (key == "adam_beta1") c.train.adam_beta1 = parse_double(key, value);
  else if (key == "adam_beta2") c.train.adam_beta2 = parse_double(key, value);
  else if (key == "adam_epsilon") c.train.adam_epsilon = parse_double(key, value);
  else if (key == "reg_kernel") c.train.reg.kernel = parse_double(key, value);
  else if (key == "reg_bias") c.train.reg.bias = parse_double(key, value);
  else if (key == "reg_activity") c.train.reg.activity = parse_double(key, value);
  else if (key == "augment_scope") {
    if (value == "fold_local") c.train.augment_scope = AugmentScope::kFoldLocal;
    else if (value == "global") c.train.augment_scope = AugmentScope::kGlobal;
    else throw ConfigError("config key 'augment_scope': expected fold_local or global");
  } else if (key == "final_model") {
    if (value == "best_fold") c.train.final_model = FinalModelPolicy::kBestFold;
    else if (value == "retrain_all") c.train.final_model = FinalModelPolicy::kRetrainAll;
    else throw ConfigError("config key 'final_model': expected best_fold or retrain_all");
  } else if (key == "sample_rate") {
    c.features.sample_rate = static_cast<int>(parse_int(key, value));
  } else if (key == "clip_seconds") {
    c.clip_seconds = parse_double(key, value);
  } else if (key == "n_fft") c.features.n_fft = static_cast<int>(parse_int(key, value));
  else if (key == "hop") c.features.hop = static_cast<int>(parse_int(key, value));
  else if (key == "n_mels") c.features.n_mels = static_cast<int>(parse_int(key, value));
  else if (key == "n_mfcc") c.features.n_mfcc = static_cast<int>(parse_int(key, value));
  else if (key == "augment_probability") {
    c.train.augment.per_transform_probability = parse_double(key, value);
  } else if (key == "time_stretch_min") c.train.augment.time_stretch_min = parse_double(key, value);
  else if (key == "time_stretch_max") c.train.augment.time_stretch_max = parse_double(key, value);
  else if (key == "pitch_shift_min") c.train.augment.pitch_shift_min = parse_double(key, value);
  else if (key == "pitch_shift_max") c.train.augment.pitch_shift_max = parse_double(key, value);
  else if (key == "shift_min") c.train.augment.shift_min = parse_double(key, value);
  else if (key == "shift_max") c.train.augment.shift_max = parse_double(key, value);
  else if (key == "shift_rollover") c.train.augment.shift_rollover = parse_int(key, value) != 0;
  else if (key == "trim_threshold_db") c.train.augment.trim_threshold_db = parse_double(key, value);
  else if (key == "gain_min_db") c.train.augment.gain_min_db = parse_double(key, value);
  else if (key == "gain_max_db") c.train.augment.gain_max_db = parse_double(key, value);
  else if (key == "target_ratio") {
    c.train.augment.target_negatives_per_positive = parse_double(key, value);
  } else if (key == "synth_n_per_class") c.synth.n_per_class = static_cast<int>(parse_int(key, value));
  else if (key == "synth_separation") c.synth.separation = parse_double(key, value);
  else if (key == "synth_burst_min") c.synth.burst_count_min = static_cast<int>(parse_int(key, value));
  else if (key == "synth_burst_max") c.synth.burst_count_max = static_cast<int>(parse_int(key, value));
  else if (key == "synth_tilt0") c.synth.class0_tilt = parse_double(key, value);
  else if (key == "synth_tilt1") c.synth.class1_tilt = parse_double(key, value);
  else if (key == "synth_noise_floor_db") c.synth.noise_floor_db = parse_double(key, value);
  else if (key == "jobs") c.jobs = static_cast<int>(parse_int(key, value));
  else throw ConfigError("unknown config key '" + key + "'");
}

void apply_config_file(PipelineConfig& config, const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError(path + ": cannot open config file");
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    const std::string trimmed = trim_ws(line);
    if (trimmed.empty()) continue;
    const auto eq = trimmed.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(path + ":" + std::to_string(line_no) + ": expected key = value");
    }
    apply_config_key(config, trim_ws(trimmed.substr(0, eq)),
                     trim_ws(trimmed.substr(eq + 1)));
  }
}

void apply_env_overrides(PipelineConfig& config) {
  for (const std::string& key : config_keys()) {
    std::string env_name = "COUGHNET_";
    for (char ch : key) env_name.push_back(static_cast<char>(std::toupper(ch)));
    if (const char* value = std::getenv(env_name.c_str())) {
      apply_config_key(config, key, value);
    }
  }
}

AudioClip canonicalize(const AudioClip& clip, const FeatureConfig& features) {
  return fix_length(resample(clip, features.sample_rate), features.clip_samples);
}

namespace {

std::string resolve_path(const std::string& file, const fs::path& manifest_dir) {
  fs::path p(file);
  if (p.is_absolute()) return p.string();
  return (manifest_dir / p).string();
}

}  // namespace

std::vector<LabeledClip> load_corpus(const std::string& manifest_path,
                                     const FeatureConfig& features) {
  const std::vector<ManifestRow> rows = read_manifest(manifest_path);
  const fs::path dir = fs::path(manifest_path).parent_path();
  std::vector<LabeledClip> corpus;
  corpus.reserve(rows.size());
  for (const ManifestRow& row : rows) {
    LabeledClip entry;
    entry.clip = canonicalize(load_wav(resolve_path(row.file, dir)), features);
    entry.label = row.label;
    entry.id = row.file;
    entry.source_id = row.source_id;
    corpus.push_back(std::move(entry));
  }
  return corpus;
}

namespace {

// ----------------------------------------------------------- run manifest --

struct RunManifest {
  std::string command;
  std::uint64_t seed = 0;
  std::vector<std::string> outputs;
  std::vector<std::pair<std::string, std::string>> errors;  // (file, message)
  json counts = json::object();

  int write(const fs::path& out_dir) const {
    json doc;
    doc["command"] = command;
    doc["seed"] = seed;
    doc["version"] = kVersion;
    doc["outputs"] = outputs;
    json errs = json::array();
    for (const auto& [file, message] : errors) {
      errs.push_back({{"file", file}, {"message", message}});
    }
    doc["errors"] = errs;
    doc["counts"] = counts;
    std::ofstream os(out_dir / "run_manifest.json");
    os << doc.dump(2) << '\n';
    return errors.empty() ? 0 : 1;
  }
};

// Ordered parallel map: runs fn(i) over [0, n) on `jobs` threads; results and
// errors land in index order so output is scheduling-independent.
void parallel_for(std::size_t n, int jobs,
                  const std::function<void(std::size_t)>& fn) {
  if (jobs <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    for (std::size_t i = next.fetch_add(1); i < n; i = next.fetch_add(1)) fn(i);
  };
  std::vector<std::thread> pool;
  const int count = std::min<int>(jobs, static_cast<int>(n));
  pool.reserve(static_cast<std::size_t>(count));
  for (int t = 0; t < count; ++t) pool.emplace_back(worker);
  for (std::thread& t : pool) t.join();
}

std::uint64_t fnv1a_bytes(const std::uint8_t* data, std::size_t len,
                          std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (std::size_t i = 0; i < len; ++i) {
    h ^= data[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t content_hash(const std::string& path, const FeatureConfig& fc) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError(path + ": cannot open");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(is)),
                                  std::istreambuf_iterator<char>());
  std::uint64_t h = fnv1a_bytes(bytes.data(), bytes.size());
  std::ostringstream cfg;
  cfg << fc.sample_rate << ':' << fc.clip_samples << ':' << fc.n_fft << ':'
      << fc.hop << ':' << fc.n_mels << ':' << fc.n_mfcc;
  const std::string s = cfg.str();
  return fnv1a_bytes(reinterpret_cast<const std::uint8_t*>(s.data()), s.size(), h);
}

std::string hash_hex(std::uint64_t h) {
  char buf[24];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string cache_name(const std::string& file) {
  const std::string stem = fs::path(file).stem().string();
  const std::uint64_t h =
      fnv1a_bytes(reinterpret_cast<const std::uint8_t*>(file.data()), file.size());
  return stem + "_" + hash_hex(h).substr(8) + ".cmfc";
}

json config_echo(const PipelineConfig& c) {
  json doc;
  doc["learning_rate"] = c.train.learning_rate;
  doc["batch_size"] = c.train.batch_size;
  doc["epochs"] = c.train.epochs;
  doc["folds"] = c.train.folds;
  doc["seed"] = c.train.seed;
  doc["adam_beta1"] = c.train.adam_beta1;
  doc["adam_beta2"] = c.train.adam_beta2;
  doc["adam_epsilon"] = c.train.adam_epsilon;
  doc["reg_kernel"] = c.train.reg.kernel;
  doc["reg_bias"] = c.train.reg.bias;
  doc["reg_activity"] = c.train.reg.activity;
  doc["augment_scope"] =
      c.train.augment_scope == AugmentScope::kFoldLocal ? "fold_local" : "global";
  doc["final_model"] =
      c.train.final_model == FinalModelPolicy::kBestFold ? "best_fold" : "retrain_all";
  doc["sample_rate"] = c.features.sample_rate;
  doc["clip_seconds"] = c.clip_seconds;
  doc["clip_samples"] = c.features.clip_samples;
  doc["n_fft"] = c.features.n_fft;
  doc["hop"] = c.features.hop;
  doc["n_mels"] = c.features.n_mels;
  doc["n_mfcc"] = c.features.n_mfcc;
  doc["augment_probability"] = c.train.augment.per_transform_probability;
  doc["target_ratio"] = c.train.augment.target_negatives_per_positive;
  doc["jobs"] = c.jobs;
  return doc;
}

// ------------------------------------------------------------ subcommands --

int cmd_synth(const PipelineConfig& config, const std::string& out_dir) {
  fs::create_directories(out_dir);
  const std::vector<LabeledClip> corpus = generate_corpus(config.synth);

  RunManifest run;
  run.command = "synth";
  run.seed = config.synth.seed;

  std::vector<ManifestRow> rows(corpus.size());
  parallel_for(corpus.size(), config.jobs, [&](std::size_t i) {
    const fs::path path = fs::path(out_dir) / corpus[i].id;
    save_wav(path.string(), corpus[i].clip, WavEncoding::kFloat32);
    rows[i] = ManifestRow{corpus[i].id, corpus[i].label, "", -1, ""};
  });
  for (const ManifestRow& row : rows) {
    run.outputs.push_back((fs::path(out_dir) / row.file).string());
  }

  const fs::path manifest_path = fs::path(out_dir) / "manifest.csv";
  write_manifest(manifest_path.string(), rows);
  run.outputs.push_back(manifest_path.string());
  run.counts["clips"] = corpus.size();
  return run.write(out_dir);
}

int cmd_features(const PipelineConfig& config, const std::string& manifest_path,
                 const std::string& out_dir) {
  fs::create_directories(out_dir);
  const std::vector<ManifestRow> rows = read_manifest(manifest_path);
  const fs::path manifest_dir = fs::path(manifest_path).parent_path();
  const fs::path index_path = fs::path(out_dir) / "index.json";

  json old_index;
  if (fs::exists(index_path)) {
    std::ifstream is(index_path);
    try {
      old_index = json::parse(is);
    } catch (const json::exception&) {
      old_index = json::object();  // stale index is rebuilt, not trusted
    }
  }

  const FeatureExtractor extractor(config.features);
  RunManifest run;
  run.command = "features";
  run.seed = config.train.seed;

  struct Slot {
    std::string cache_path;
    std::string hash;
    bool skipped = false;
    std::string error;
  };
  std::vector<Slot> slots(rows.size());

  parallel_for(rows.size(), config.jobs, [&](std::size_t i) {
    Slot& slot = slots[i];
    try {
      const std::string resolved = resolve_path(rows[i].file, manifest_dir);
      slot.hash = hash_hex(content_hash(resolved, config.features));
      const fs::path cache_path = fs::path(out_dir) / cache_name(rows[i].file);
      slot.cache_path = cache_path.string();

      if (old_index.contains("features") &&
          old_index["features"].contains(rows[i].file)) {
        const json& entry = old_index["features"][rows[i].file];
        if (entry.value("hash", "") == slot.hash && fs::exists(cache_path)) {
          slot.skipped = true;
          return;
        }
      }
      const AudioClip clip = canonicalize(load_wav(resolved), config.features);
      write_feature_cache(cache_path.string(), extractor.compute(clip, rows[i].file));
    } catch (const Error& e) {
      slot.error = e.what();
    }
  });

  json index;
  index["version"] = 1;
  index["features"] = json::object();
  std::size_t written = 0, skipped = 0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const Slot& slot = slots[i];
    if (!slot.error.empty()) {
      run.errors.emplace_back(rows[i].file, slot.error);
      std::cerr << "features: " << rows[i].file << ": " << slot.error << '\n';
      continue;
    }
    index["features"][rows[i].file] = {{"cache", slot.cache_path},
                                       {"hash", slot.hash},
                                       {"label", rows[i].label}};
    run.outputs.push_back(slot.cache_path);
    (slot.skipped ? skipped : written) += 1;
  }
  {
    std::ofstream os(index_path);
    os << index.dump(2) << '\n';
  }
  run.outputs.push_back(index_path.string());
  run.counts["written"] = written;
  run.counts["skipped"] = skipped;
  run.counts["failed"] = run.errors.size();
  return run.write(out_dir);
}

int cmd_augment(const PipelineConfig& config, const std::string& manifest_path,
                const std::string& out_dir) {
  fs::create_directories(out_dir);
  const std::vector<ManifestRow> rows = read_manifest(manifest_path);
  const fs::path manifest_dir = fs::path(manifest_path).parent_path();

  std::vector<LabeledClip> corpus = load_corpus(manifest_path, config.features);
  const std::size_t n_original = corpus.size();
  const std::vector<LabeledClip> augmented = upsample_positives(
      std::move(corpus), config.train.augment,
      derive_seed(config.train.seed, {streams::kAugment}));

  RunManifest run;
  run.command = "augment";
  run.seed = config.train.seed;

  std::vector<ManifestRow> out_rows(augmented.size());
  for (std::size_t i = 0; i < n_original; ++i) {
    // Originals stay where they are; record a resolvable path.
    out_rows[i] = ManifestRow{resolve_path(rows[i].file, manifest_dir),
                              augmented[i].label, "", -1, ""};
  }
  parallel_for(augmented.size() - n_original, config.jobs, [&](std::size_t k) {
    const std::size_t i = n_original + k;
    const std::string name =
        fs::path(augmented[i].id.substr(0, augmented[i].id.find('#'))).stem().string() +
        "_aug" + std::to_string(k) + ".wav";
    save_wav((fs::path(out_dir) / name).string(), augmented[i].clip,
             WavEncoding::kFloat32);
    out_rows[i] = ManifestRow{name, augmented[i].label, augmented[i].source_id, -1,
                              augmented[i].transform_log};
  });
  for (std::size_t i = n_original; i < augmented.size(); ++i) {
    run.outputs.push_back(out_rows[i].file);
  }

  const fs::path out_manifest = fs::path(out_dir) / "manifest.csv";
  write_manifest(out_manifest.string(), out_rows);
  run.outputs.push_back(out_manifest.string());
  run.counts["originals"] = n_original;
  run.counts["synthetic"] = augmented.size() - n_original;
  return run.write(out_dir);
}

// Loads cached features for original files where the hash still matches.
std::unordered_map<std::string, FeatureMatrix> load_feature_cache_dir(
    const std::string& features_dir, const std::vector<ManifestRow>& rows,
    const fs::path& manifest_dir, const FeatureConfig& fc, std::size_t* stale) {
  std::unordered_map<std::string, FeatureMatrix> cache;
  const fs::path index_path = fs::path(features_dir) / "index.json";
  if (!fs::exists(index_path)) {
    throw IoError(index_path.string() + ": feature cache index not found");
  }
  std::ifstream is(index_path);
  json index = json::parse(is);
  for (const ManifestRow& row : rows) {
    if (!index.contains("features") || !index["features"].contains(row.file)) {
      ++*stale;
      continue;
    }
    const json& entry = index["features"][row.file];
    const std::string resolved = resolve_path(row.file, manifest_dir);
    if (entry.value("hash", "") != hash_hex(content_hash(resolved, fc))) {
      ++*stale;
      continue;
    }
    const std::string cache_path = entry.value("cache", "");
    if (!fs::exists(cache_path)) {
      ++*stale;
      continue;
    }
    cache[row.file] = read_feature_cache(cache_path);
  }
  return cache;
}

int cmd_train(const PipelineConfig& config, const std::string& manifest_path,
              const std::string& out_dir, const std::string& features_dir) {
  fs::create_directories(out_dir);
  const std::vector<ManifestRow> rows = read_manifest(manifest_path);
  const fs::path manifest_dir = fs::path(manifest_path).parent_path();

  std::size_t stale = 0;
  std::unordered_map<std::string, FeatureMatrix> precomputed;
  if (!features_dir.empty()) {
    precomputed = load_feature_cache_dir(features_dir, rows, manifest_dir,
                                         config.features, &stale);
    if (stale > 0) {
      std::cerr << "train: " << stale
                << " cache entries missing or stale; re-extracting those files\n";
    }
  }

  const std::vector<LabeledClip> corpus = load_corpus(manifest_path, config.features);
  const CvResult cv = run_cv(corpus, config.train, config.features,
                             precomputed.empty() ? nullptr : &precomputed);

  RunManifest run;
  run.command = "train";
  run.seed = config.train.seed;

  // Per-fold checkpoints and ROC plot data.
  for (const CvFoldResult& fold : cv.folds) {
    const fs::path ckpt = fs::path(out_dir) / ("fold" + std::to_string(fold.fold) + ".ckpt");
    save_checkpoint(ckpt.string(), fold.params, config.train.seed, config.train.epochs);
    run.outputs.push_back(ckpt.string());
    const fs::path roc = fs::path(out_dir) / ("roc_fold" + std::to_string(fold.fold) + ".csv");
    write_roc_csv(roc.string(), fold.report.roc);
    run.outputs.push_back(roc.string());
  }

  // Training history.
  {
    const fs::path history_path = fs::path(out_dir) / "history.csv";
    std::ofstream os(history_path);
    os.precision(17);
    os << "fold,epoch,train_loss,val_loss,val_auc\n";
    for (const CvFoldResult& fold : cv.folds) {
      for (std::size_t e = 0; e < fold.history.size(); ++e) {
        os << fold.fold << ',' << e << ',' << fold.history[e].train_loss << ','
           << fold.history[e].val_loss << ',' << fold.history[e].val_auc << '\n';
      }
    }
    run.outputs.push_back(history_path.string());
  }

  // Report.
  {
    std::vector<EvalReport> reports;
    for (const CvFoldResult& fold : cv.folds) reports.push_back(fold.report);
    const fs::path report_path = fs::path(out_dir) / "report.json";
    std::ofstream os(report_path);
    os << report_json(reports, cv.aggregate);
    run.outputs.push_back(report_path.string());
  }

  // Final model.
  {
    const fs::path final_path = fs::path(out_dir) / "final.ckpt";
    if (config.train.final_model == FinalModelPolicy::kBestFold) {
      save_checkpoint(final_path.string(), cv.folds[static_cast<std::size_t>(cv.best_fold)].params,
                      config.train.seed, config.train.epochs);
    } else {
      // Retrain on the full augmented corpus with no held-out fold.
      AugmentSpec spec = config.train.augment;
      spec.clip_samples = config.features.clip_samples;
      std::vector<LabeledClip> full = upsample_positives(
          corpus, spec, derive_seed(config.train.seed, {streams::kAugment}));
      const FeatureExtractor extractor(config.features);
      std::vector<FeatureMatrix> feats(full.size());
      std::vector<const Eigen::MatrixXd*> feat_ptrs(full.size());
      std::vector<int> labels(full.size());
      for (std::size_t i = 0; i < full.size(); ++i) {
        const auto it = precomputed.find(full[i].id);
        feats[i] = it != precomputed.end() ? it->second
                                           : extractor.compute(full[i].clip, full[i].id);
        feat_ptrs[i] = &feats[i].coefficients;
        labels[i] = full[i].label;
      }
      ModelConfig mc;
      mc.input_frames = config.features.n_frames();
      mc.n_mfcc = config.features.n_mfcc;
      const FoldTrainResult trained = train_fold(feat_ptrs, labels, {}, {}, mc,
                                                 config.train, config.train.folds);
      save_checkpoint(final_path.string(), trained.params, config.train.seed,
                      config.train.epochs);
    }
    run.outputs.push_back(final_path.string());
  }

  // Run metadata: config echo, seed, stream names, versions.
  {
    json meta;
    meta["command"] = "train";
    meta["version"] = kVersion;
    meta["config"] = config_echo(config);
    meta["rng_streams"] = {"init", "dropout", "shuffle", "fold", "augment", "synth"};
    meta["best_fold"] = cv.best_fold;
    meta["cached_features_used"] = precomputed.size();
    const fs::path meta_path = fs::path(out_dir) / "run_metadata.json";
    std::ofstream os(meta_path);
    os << meta.dump(2) << '\n';
    run.outputs.push_back(meta_path.string());
  }

  run.counts["folds"] = cv.folds.size();
  run.counts["mean_auc"] = cv.aggregate.mean_auc;
  std::cout << "train: mean validation AUC " << cv.aggregate.mean_auc
            << " (sd " << cv.aggregate.sd_auc << "), mean accuracy "
            << cv.aggregate.mean_accuracy << '\n';
  return run.write(out_dir);
}

int cmd_predict(const PipelineConfig& config, const std::string& checkpoint_path,
                const std::string& input_path, const std::string& out_path,
                double threshold, bool have_threshold,
                const std::string& sensitivity_report) {
  Checkpoint ckpt = load_checkpoint(checkpoint_path);

  FeatureConfig fc = config.features;
  if (fc.n_frames() != ckpt.params.config.input_frames ||
      fc.n_mfcc != ckpt.params.config.n_mfcc) {
    throw ConfigError(
        "predict: feature geometry (" + std::to_string(fc.n_frames()) + " frames, " +
        std::to_string(fc.n_mfcc) + " coefficients) does not match checkpoint (" +
        std::to_string(ckpt.params.config.input_frames) + " frames, " +
        std::to_string(ckpt.params.config.n_mfcc) +
        "); set --clip-seconds to the training value");
  }

  if (!sensitivity_report.empty()) {
    std::ifstream is(sensitivity_report);
    if (!is) throw IoError(sensitivity_report + ": cannot open report");
    const json report = json::parse(is);
    double sum = 0.0;
    std::size_t n = 0;
    for (const json& fold : report.at("folds")) {
      sum += fold.at("threshold_80").get<double>();
      ++n;
    }
    if (n == 0) throw ConfigError("predict: report has no folds");
    threshold = sum / static_cast<double>(n);
    have_threshold = true;
  }

  std::vector<std::string> files;
  fs::path base_dir;
  if (fs::path(input_path).extension() == ".csv") {
    base_dir = fs::path(input_path).parent_path();
    for (const ManifestRow& row : read_manifest(input_path)) files.push_back(row.file);
  } else {
    base_dir = "";
    files.push_back(input_path);
  }

  const FeatureExtractor extractor(fc);
  std::vector<FeatureMatrix> feats(files.size());
  std::vector<std::string> errors(files.size());
  parallel_for(files.size(), config.jobs, [&](std::size_t i) {
    try {
      const AudioClip clip =
          canonicalize(load_wav(resolve_path(files[i], base_dir)), fc);
      feats[i] = extractor.compute(clip, files[i]);
    } catch (const Error& e) {
      errors[i] = e.what();
    }
  });

  std::ofstream os(out_path);
  if (!os) throw IoError(out_path + ": cannot open for writing");
  os.precision(17);
  os << (have_threshold ? "file,probability,decision\n" : "file,probability\n");
  bool any_error = false;
  for (std::size_t i = 0; i < files.size(); ++i) {
    if (!errors[i].empty()) {
      std::cerr << "predict: " << files[i] << ": " << errors[i] << '\n';
      any_error = true;
      continue;
    }
    std::vector<const Eigen::MatrixXd*> one{&feats[i].coefficients};
    const double p = model_predict(one, ckpt.params)[0];
    os << files[i] << ',' << p;
    if (have_threshold) os << ',' << (p >= threshold ? 1 : 0);
    os << '\n';
  }
  return any_error ? 1 : 0;
}

int cmd_evaluate(const std::string& scores_path, const std::string& manifest_path,
                 const std::string& out_path) {
  std::unordered_map<std::string, int> labels;
  for (const ManifestRow& row : read_manifest(manifest_path)) {
    labels[row.file] = row.label;
  }

  std::ifstream is(scores_path);
  if (!is) throw IoError(scores_path + ": cannot open scores");
  std::string line;
  if (!std::getline(is, line)) throw MalformedContainer(scores_path + ": empty scores file");
  std::vector<double> score_values;
  std::vector<int> score_labels;
  std::size_t line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string file, prob;
    std::getline(ls, file, ',');
    std::getline(ls, prob, ',');
    const auto it = labels.find(file);
    if (it == labels.end()) {
      throw MalformedContainer(scores_path + ":" + std::to_string(line_no) +
                               ": file " + file + " not in manifest");
    }
    score_values.push_back(parse_double("probability", prob));
    score_labels.push_back(it->second);
  }

  Eigen::VectorXd scores(static_cast<Eigen::Index>(score_values.size()));
  for (std::size_t i = 0; i < score_values.size(); ++i) {
    scores[static_cast<Eigen::Index>(i)] = score_values[i];
  }
  const EvalReport report = evaluate_scores(scores, score_labels);
  const AggregateReport aggregate = average_reports({report});
  std::ofstream os(out_path);
  if (!os) throw IoError(out_path + ": cannot open for writing");
  os << report_json({report}, aggregate);
  std::cout << "evaluate: auc " << report.auc << ", accuracy " << report.accuracy << '\n';
  return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args) {
  CLI::App app{"cough-audio classification pipeline"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path, out_dir;
  PipelineConfig config;
  bool seed_set = false, jobs_set = false, clip_seconds_set = false;
  std::uint64_t seed_flag = 0;
  int jobs_flag = 1;
  double clip_seconds_flag = 7.0;

  app.add_option("--config", config_path, "flat key=value configuration file");
  app.add_option("--seed", seed_flag, "run seed")->each([&](const std::string&) {
    seed_set = true;
  });
  app.add_option("--jobs", jobs_flag, "worker threads for per-file stages")
      ->each([&](const std::string&) { jobs_set = true; });
  app.add_option("--out", out_dir, "output directory");
  app.add_option("--clip-seconds", clip_seconds_flag,
                 "canonical clip duration in seconds")
      ->each([&](const std::string&) { clip_seconds_set = true; });

  // synth
  auto* synth = app.add_subcommand("synth", "generate a labeled synthetic corpus");
  int synth_n = -1;
  double synth_sep = -1.0;
  synth->add_option("--n-per-class", synth_n, "clips per class");
  synth->add_option("--separation", synth_sep, "class separation in [0, 1]");

  // features
  auto* features = app.add_subcommand("features", "extract MFCC feature caches");
  std::string features_manifest;
  features->add_option("--manifest", features_manifest, "corpus manifest CSV")->required();

  // augment
  auto* augment = app.add_subcommand("augment", "rebalance positives with audio augmentation");
  std::string augment_manifest;
  augment->add_option("--manifest", augment_manifest, "corpus manifest CSV")->required();

  // train
  auto* train = app.add_subcommand("train", "cross-validated training");
  std::string train_manifest, train_features_dir;
  int train_folds = -1, train_epochs = -1, train_batch = -1;
  double train_lr = -1.0;
  std::string train_scope, train_final;
  train->add_option("--manifest", train_manifest, "corpus manifest CSV")->required();
  train->add_option("--features-dir", train_features_dir,
                    "feature cache directory from `features`");
  train->add_option("--folds", train_folds, "cross-validation folds");
  train->add_option("--epochs", train_epochs, "epochs per fold");
  train->add_option("--batch-size", train_batch, "mini-batch size");
  train->add_option("--learning-rate", train_lr, "Adam learning rate");
  train->add_option("--augment-scope", train_scope, "fold_local or global");
  train->add_option("--final-model", train_final, "best_fold or retrain_all");

  // predict
  auto* predict = app.add_subcommand("predict", "score audio with a checkpoint");
  std::string predict_ckpt, predict_input, predict_out = "scores.csv", predict_report;
  double predict_threshold = 0.5;
  bool have_threshold = false;
  predict->add_option("--checkpoint", predict_ckpt, "model checkpoint")->required();
  predict->add_option("--input", predict_input, "WAV file or manifest CSV")->required();
  predict->add_option("--scores", predict_out, "output scores CSV");
  predict->add_option("--threshold", predict_threshold, "decision threshold")
      ->each([&](const std::string&) { have_threshold = true; });
  predict->add_option("--sensitivity-report", predict_report,
                      "report.json to anchor the decision threshold at 80% sensitivity");

  // evaluate
  auto* evaluate = app.add_subcommand("evaluate", "score an existing scores CSV against labels");
  std::string eval_scores, eval_manifest, eval_out = "report.json";
  evaluate->add_option("--scores", eval_scores, "scores CSV")->required();
  evaluate->add_option("--manifest", eval_manifest, "manifest CSV with labels")->required();
  evaluate->add_option("--report", eval_out, "output report JSON");

  std::vector<const char*> argv;
  argv.push_back("coughnet");
  for (const std::string& a : args) argv.push_back(a.c_str());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (!config_path.empty()) apply_config_file(config, config_path);
    apply_env_overrides(config);
    if (seed_set) config.train.seed = seed_flag;
    if (jobs_set) config.jobs = jobs_flag;
    if (clip_seconds_set) config.clip_seconds = clip_seconds_flag;
    if (synth_n >= 0) config.synth.n_per_class = synth_n;
    if (synth_sep >= 0.0) config.synth.separation = synth_sep;
    if (train_folds > 0) config.train.folds = train_folds;
    if (train_epochs > 0) config.train.epochs = train_epochs;
    if (train_batch > 0) config.train.batch_size = train_batch;
    if (train_lr > 0) config.train.learning_rate = train_lr;
    if (!train_scope.empty()) apply_config_key(config, "augment_scope", train_scope);
    if (!train_final.empty()) apply_config_key(config, "final_model", train_final);
    config.finalize();

    auto require_out = [&out_dir]() {
      if (out_dir.empty()) throw ConfigError("--out is required for this command");
      return out_dir;
    };

    if (synth->parsed()) return cmd_synth(config, require_out());
    if (features->parsed()) return cmd_features(config, features_manifest, require_out());
    if (augment->parsed()) return cmd_augment(config, augment_manifest, require_out());
    if (train->parsed()) {
      return cmd_train(config, train_manifest, require_out(), train_features_dir);
    }
    if (predict->parsed()) {
      return cmd_predict(config, predict_ckpt, predict_input, predict_out,
                         predict_threshold, have_threshold, predict_report);
    }
    if (evaluate->parsed()) return cmd_evaluate(eval_scores, eval_manifest, eval_out);
    throw ConfigError("no subcommand given");
  } catch (const Error& e) {
    std::cerr << "coughnet: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace coughnet
