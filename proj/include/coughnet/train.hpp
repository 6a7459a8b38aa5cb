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

// Binary cross-entropy + L2 training with Adam, stratified k-fold splitting,
// and the cross-validation driver. Every random choice flows from the run
// seed through named sub-streams, so a (corpus, config, seed) triple fully
// determines every parameter and metric.

#ifndef COUGHNET_TRAIN_HPP_
#define COUGHNET_TRAIN_HPP_

#include <cstdint>
#include <unordered_map>
#include <vector>

#include "coughnet/augment.hpp"
#include "coughnet/eval.hpp"
#include "coughnet/features.hpp"
#include "coughnet/nn.hpp"

namespace coughnet {

// Sub-stream keys hung off the run seed. Keeping them in one place makes
// every stage independently re-runnable.
namespace streams {
inline constexpr std::uint64_t kInit = 1;
inline constexpr std::uint64_t kDropout = 2;
inline constexpr std::uint64_t kShuffle = 3;
inline constexpr std::uint64_t kFold = 4;
inline constexpr std::uint64_t kAugment = 5;
inline constexpr std::uint64_t kSynth = 6;
}  // namespace streams

enum class AugmentScope { kFoldLocal, kGlobal };
enum class FinalModelPolicy { kBestFold, kRetrainAll };

struct TrainConfig {
  double learning_rate = 1e-4;
  int batch_size = 32;
  int epochs = 200;
  int folds = 5;
  std::uint64_t seed = 42;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;
  RegConfig reg;
  AugmentSpec augment;
  // Fold-local keeps every synthetic clip in its source's fold so no
  // augmented copy of a validation example ever reaches training. Global
  // reproduces the leak-prone variant where synthetics are dealt
  // independently.
  AugmentScope augment_scope = AugmentScope::kFoldLocal;
  FinalModelPolicy final_model = FinalModelPolicy::kBestFold;
};

// Per-parameter first/second moment accumulators, aligned with
// learnable_views order, plus the shared step counter.
struct AdamState {
  std::vector<Eigen::VectorXd> m;
  std::vector<Eigen::VectorXd> v;
  std::int64_t t = 0;

  static AdamState init(ModelParams& params);
};

struct LossResult {
  double loss = 0.0;   // data term, mean over the batch
  RowMat dprobs;       // gradient of the data term wrt probabilities
};

// -mean(y ln p + (1-y) ln(1-p)) with probabilities clamped to
// [1e-12, 1-1e-12] before the logs. Labels must be 0 or 1.
LossResult bce_loss(const RowMat& probs, const std::vector<int>& labels);

// Data term plus the kernel/bias/activity penalties; pairs with the reg
// gradients that model_backward adds to the parameter gradients.
double total_loss(const LossResult& data, const ModelParams& params,
                  const ForwardCache& cache, const RegConfig& reg);

// One bias-corrected Adam update over every learnable tensor.
void adam_step(ModelParams& params, ModelGrads& grads, AdamState& state,
               const TrainConfig& config);

struct FoldPlan {
  int k = 0;
  std::vector<int> fold_of;  // per corpus example

  std::vector<int> validation_ids(int fold) const;
  std::vector<int> training_ids(int fold) const;
};

// Within each class, identifiers are shuffled with the seeded stream and
// dealt round-robin, so fold class counts differ from exact proportion by at
// most one. Throws ClassTooSmall when a class has fewer than k members.
FoldPlan stratified_kfold(const std::vector<int>& labels, int k,
                          std::uint64_t seed);

struct EpochStats {
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_auc = 0.0;
};

struct FoldTrainResult {
  ModelParams params;
  std::vector<EpochStats> history;
  std::int64_t adam_steps = 0;
};

// Trains one fold: epochs x ceil(n / batch) Adam steps, order reshuffled at
// every epoch from the (seed, fold, epoch) stream, final partial batch kept,
// no early stopping. Validation metrics are recorded per epoch; pass empty
// validation vectors to skip them (NaN in the history).
FoldTrainResult train_fold(const std::vector<const Eigen::MatrixXd*>& train_features,
                           const std::vector<int>& train_labels,
                           const std::vector<const Eigen::MatrixXd*>& val_features,
                           const std::vector<int>& val_labels,
                           const ModelConfig& model_config,
                           const TrainConfig& config, int fold_index);

struct CvFoldResult {
  int fold = 0;
  ModelParams params;
  EvalReport report;
  std::vector<EpochStats> history;
  std::vector<std::string> val_ids;
  Eigen::VectorXd val_scores;
  std::vector<int> val_labels;
};

struct CvResult {
  FoldPlan plan;                    // over the original corpus
  std::vector<CvFoldResult> folds;
  AggregateReport aggregate;
  int best_fold = 0;                // by validation AUC
};

// Full cross-validation: stratified plan over the originals, class
// rebalancing via upsample_positives, feature extraction, per-fold training
// on the 4/5 split, evaluation on the held-out originals (plus held-out
// synthetics under the global scope). Entries of `precomputed` (keyed by
// example id) are used instead of re-extracting.
CvResult run_cv(const std::vector<LabeledClip>& corpus, const TrainConfig& config,
                const FeatureConfig& features,
                const std::unordered_map<std::string, FeatureMatrix>* precomputed = nullptr);

}  // namespace coughnet

#endif  // COUGHNET_TRAIN_HPP_
