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

#include "coughnet/train.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <unordered_map>

#include "coughnet/errors.hpp"

namespace coughnet {

namespace {

constexpr double kProbClamp = 1e-12;

}  // namespace

AdamState AdamState::init(ModelParams& params) {
  AdamState state;
  for (const ParamView& view : learnable_views(params)) {
    state.m.push_back(Eigen::VectorXd::Zero(view.size));
    state.v.push_back(Eigen::VectorXd::Zero(view.size));
  }
  return state;
}

LossResult bce_loss(const RowMat& probs, const std::vector<int>& labels) {
  if (probs.cols() != 1 ||
      static_cast<std::size_t>(probs.rows()) != labels.size()) {
    throw ShapeMismatch("bce_loss: probs must be B x 1 matching labels");
  }
  const Eigen::Index batch = probs.rows();
  LossResult result;
  result.dprobs.resize(batch, 1);
  double sum = 0.0;
  for (Eigen::Index i = 0; i < batch; ++i) {
    const int y = labels[static_cast<std::size_t>(i)];
    if (y != 0 && y != 1) throw LabelOutOfDomain("bce_loss: labels must be 0 or 1");
    const double p = std::clamp(probs(i, 0), kProbClamp, 1.0 - kProbClamp);
    sum += y == 1 ? -std::log(p) : -std::log(1.0 - p);
    result.dprobs(i, 0) =
        (y == 1 ? -1.0 / p : 1.0 / (1.0 - p)) / static_cast<double>(batch);
  }
  result.loss = sum / static_cast<double>(batch);
  return result;
}

double total_loss(const LossResult& data, const ModelParams& params,
                  const ForwardCache& cache, const RegConfig& reg) {
  return data.loss + l2_penalty(params, cache, reg);
}

void adam_step(ModelParams& params, ModelGrads& grads, AdamState& state,
               const TrainConfig& config) {
  auto param_views = learnable_views(params);
  auto grad_views = learnable_views(grads);
  if (param_views.size() != state.m.size()) {
    throw ShapeMismatch("adam_step: state does not match parameter count");
  }
  state.t += 1;
  const double b1 = config.adam_beta1;
  const double b2 = config.adam_beta2;
  const double bias1 = 1.0 - std::pow(b1, static_cast<double>(state.t));
  const double bias2 = 1.0 - std::pow(b2, static_cast<double>(state.t));

  for (std::size_t i = 0; i < param_views.size(); ++i) {
    if (param_views[i].size != grad_views[i].size ||
        param_views[i].size != state.m[i].size()) {
      throw ShapeMismatch("adam_step: tensor size mismatch at " + param_views[i].name);
    }
    Eigen::Map<Eigen::VectorXd> p(param_views[i].data, param_views[i].size);
    Eigen::Map<const Eigen::VectorXd> g(grad_views[i].data, grad_views[i].size);
    Eigen::VectorXd& m = state.m[i];
    Eigen::VectorXd& v = state.v[i];
    m = b1 * m + (1.0 - b1) * g;
    v = b2 * v + (1.0 - b2) * g.cwiseProduct(g);
    p.array() -= config.learning_rate * (m.array() / bias1) /
                 ((v.array() / bias2).sqrt() + config.adam_epsilon);
  }
}

std::vector<int> FoldPlan::validation_ids(int fold) const {
  std::vector<int> ids;
  for (std::size_t i = 0; i < fold_of.size(); ++i) {
    if (fold_of[i] == fold) ids.push_back(static_cast<int>(i));
  }
  return ids;
}

std::vector<int> FoldPlan::training_ids(int fold) const {
  std::vector<int> ids;
  for (std::size_t i = 0; i < fold_of.size(); ++i) {
    if (fold_of[i] != fold) ids.push_back(static_cast<int>(i));
  }
  return ids;
}

FoldPlan stratified_kfold(const std::vector<int>& labels, int k,
                          std::uint64_t seed) {
  if (k < 2) throw DomainError("stratified_kfold: k must be >= 2");
  std::vector<int> class0, class1;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] != 0 && labels[i] != 1) {
      throw LabelOutOfDomain("stratified_kfold: labels must be 0 or 1");
    }
    (labels[i] == 1 ? class1 : class0).push_back(static_cast<int>(i));
  }
  if (static_cast<int>(class0.size()) < k || static_cast<int>(class1.size()) < k) {
    throw ClassTooSmall("stratified_kfold: each class needs at least k members");
  }

  FoldPlan plan;
  plan.k = k;
  plan.fold_of.assign(labels.size(), -1);
  RngStream rng(seed, {streams::kFold});
  for (std::vector<int>* cls : {&class0, &class1}) {
    rng.shuffle(*cls);
    for (std::size_t i = 0; i < cls->size(); ++i) {
      plan.fold_of[static_cast<std::size_t>((*cls)[i])] = static_cast<int>(i % k);
    }
  }
  return plan;
}

namespace {

double validation_pass(const std::vector<const Eigen::MatrixXd*>& features,
                       const std::vector<int>& labels, ModelParams& params,
                       double* out_auc) {
  const Eigen::VectorXd scores = model_predict(features, params);
  RowMat probs(scores.size(), 1);
  probs.col(0) = scores;
  const LossResult data = bce_loss(probs, labels);
  bool both = false;
  {
    bool has0 = false, has1 = false;
    for (int y : labels) (y == 1 ? has1 : has0) = true;
    both = has0 && has1;
  }
  *out_auc = both ? auc(roc_curve(scores, labels))
                  : std::numeric_limits<double>::quiet_NaN();
  return data.loss;
}

}  // namespace

FoldTrainResult train_fold(const std::vector<const Eigen::MatrixXd*>& train_features,
                           const std::vector<int>& train_labels,
                           const std::vector<const Eigen::MatrixXd*>& val_features,
                           const std::vector<int>& val_labels,
                           const ModelConfig& model_config,
                           const TrainConfig& config, int fold_index) {
  if (train_features.empty() || train_features.size() != train_labels.size()) {
    throw ShapeMismatch("train_fold: features/labels mismatch");
  }
  const auto fold_key = static_cast<std::uint64_t>(fold_index);

  FoldTrainResult result;
  {
    RngStream init_rng(config.seed, {streams::kInit, fold_key});
    result.params = ModelParams::init(model_config, init_rng);
  }
  AdamState adam = AdamState::init(result.params);
  RngStream dropout_rng(config.seed, {streams::kDropout, fold_key});

  const auto n = static_cast<Eigen::Index>(train_features.size());
  std::vector<int> order(train_features.size());
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    RngStream shuffle_rng(config.seed,
                          {streams::kShuffle, fold_key, static_cast<std::uint64_t>(epoch)});
    shuffle_rng.shuffle(order);

    double loss_sum = 0.0;
    for (Eigen::Index start = 0; start < n; start += config.batch_size) {
      const Eigen::Index size = std::min<Eigen::Index>(config.batch_size, n - start);
      std::vector<const Eigen::MatrixXd*> batch_features(static_cast<std::size_t>(size));
      std::vector<int> batch_labels(static_cast<std::size_t>(size));
      for (Eigen::Index i = 0; i < size; ++i) {
        const int id = order[static_cast<std::size_t>(start + i)];
        batch_features[static_cast<std::size_t>(i)] = train_features[static_cast<std::size_t>(id)];
        batch_labels[static_cast<std::size_t>(i)] = train_labels[static_cast<std::size_t>(id)];
      }

      const Tensor4 x = batch_from_features(batch_features);
      ForwardCache cache;
      const RowMat probs =
          model_forward(x, result.params, Mode::kTrain, &dropout_rng, &cache);
      const LossResult data = bce_loss(probs, batch_labels);
      loss_sum += total_loss(data, result.params, cache, config.reg) *
                  static_cast<double>(size);

      ModelGrads grads = model_backward(result.params, cache, data.dprobs, config.reg);
      adam_step(result.params, grads, adam, config);
    }

    EpochStats stats;
    stats.train_loss = loss_sum / static_cast<double>(n);
    if (!val_features.empty()) {
      stats.val_loss = validation_pass(val_features, val_labels, result.params,
                                       &stats.val_auc);
    } else {
      stats.val_loss = std::numeric_limits<double>::quiet_NaN();
      stats.val_auc = std::numeric_limits<double>::quiet_NaN();
    }
    result.history.push_back(stats);
  }
  result.adam_steps = adam.t;
  return result;
}

CvResult run_cv(const std::vector<LabeledClip>& corpus, const TrainConfig& config,
                const FeatureConfig& features,
                const std::unordered_map<std::string, FeatureMatrix>* precomputed) {
  bool has0 = false, has1 = false;
  for (const LabeledClip& e : corpus) (e.label == 1 ? has1 : has0) = true;
  if (!has0 || !has1) throw OneClassOnly("run_cv: corpus must contain both classes");

  // Fold plan over the original corpus.
  std::vector<int> original_labels;
  original_labels.reserve(corpus.size());
  for (const LabeledClip& e : corpus) original_labels.push_back(e.label);
  CvResult result;
  result.plan = stratified_kfold(original_labels, config.folds, config.seed);

  // Rebalance once; synthetic fold placement depends on the scope.
  AugmentSpec augment_spec = config.augment;
  augment_spec.clip_samples = features.clip_samples;
  std::vector<LabeledClip> augmented =
      upsample_positives(corpus, augment_spec, derive_seed(config.seed, {streams::kAugment}));

  const std::size_t n_original = corpus.size();
  std::vector<int> fold_of(augmented.size());
  std::vector<bool> synthetic(augmented.size(), false);
  for (std::size_t i = 0; i < n_original; ++i) fold_of[i] = result.plan.fold_of[i];

  if (config.augment_scope == AugmentScope::kFoldLocal) {
    std::unordered_map<std::string, int> fold_by_id;
    for (std::size_t i = 0; i < n_original; ++i) {
      fold_by_id[augmented[i].id] = fold_of[i];
    }
    for (std::size_t i = n_original; i < augmented.size(); ++i) {
      synthetic[i] = true;
      const auto it = fold_by_id.find(augmented[i].source_id);
      if (it == fold_by_id.end()) {
        throw Error("run_cv: synthetic example with unknown source " +
                    augmented[i].source_id);
      }
      fold_of[i] = it->second;
    }
  } else {
    // Global scope: deal every example, synthetic or not, independently.
    std::vector<int> all_labels;
    all_labels.reserve(augmented.size());
    for (const LabeledClip& e : augmented) all_labels.push_back(e.label);
    const FoldPlan global_plan =
        stratified_kfold(all_labels, config.folds, config.seed);
    fold_of = global_plan.fold_of;
    for (std::size_t i = n_original; i < augmented.size(); ++i) synthetic[i] = true;
  }

  // Features for the whole augmented corpus; audio is not needed past here,
  // so each clip is released as soon as it has been transformed.
  const FeatureExtractor extractor(features);
  std::vector<FeatureMatrix> feature_cache(augmented.size());
  for (std::size_t i = 0; i < augmented.size(); ++i) {
    if (precomputed != nullptr) {
      const auto it = precomputed->find(augmented[i].id);
      if (it != precomputed->end()) {
        feature_cache[i] = it->second;
        augmented[i].clip.samples.resize(0);
        continue;
      }
    }
    feature_cache[i] = extractor.compute(augmented[i].clip, augmented[i].id);
    augmented[i].clip.samples.resize(0);
  }

  ModelConfig model_config;
  model_config.input_frames = features.n_frames();
  model_config.n_mfcc = features.n_mfcc;

  std::vector<EvalReport> reports;
  for (int fold = 0; fold < config.folds; ++fold) {
    std::vector<const Eigen::MatrixXd*> train_features_v, val_features_v;
    std::vector<int> train_labels_v, val_labels_v;
    std::vector<std::string> val_ids;
    for (std::size_t i = 0; i < augmented.size(); ++i) {
      if (fold_of[i] != fold) {
        train_features_v.push_back(&feature_cache[i].coefficients);
        train_labels_v.push_back(augmented[i].label);
      } else {
        // Fold-local scope validates only on originals; synthetics sharing
        // this fold sit out entirely.
        if (config.augment_scope == AugmentScope::kFoldLocal && synthetic[i]) continue;
        val_features_v.push_back(&feature_cache[i].coefficients);
        val_labels_v.push_back(augmented[i].label);
        val_ids.push_back(augmented[i].id);
      }
    }

    FoldTrainResult trained =
        train_fold(train_features_v, train_labels_v, val_features_v, val_labels_v,
                   model_config, config, fold);

    CvFoldResult fold_result;
    fold_result.fold = fold;
    fold_result.val_ids = std::move(val_ids);
    fold_result.val_labels = std::move(val_labels_v);
    fold_result.val_scores = model_predict(val_features_v, trained.params);
    fold_result.report = evaluate_scores(fold_result.val_scores, fold_result.val_labels);
    fold_result.history = std::move(trained.history);
    fold_result.params = std::move(trained.params);
    reports.push_back(fold_result.report);
    result.folds.push_back(std::move(fold_result));
  }

  result.aggregate = average_reports(reports);
  result.best_fold = 0;
  for (std::size_t i = 1; i < result.folds.size(); ++i) {
    if (result.folds[i].report.auc > result.folds[result.best_fold].report.auc) {
      result.best_fold = static_cast<int>(i);
    }
  }
  return result;
}

}  // namespace coughnet
