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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <map>
#include <numeric>
#include <set>

#include "coughnet/errors.hpp"
#include "coughnet/synth.hpp"
#include "coughnet/train.hpp"
#include "test_util.hpp"

using namespace coughnet;

namespace {

ModelConfig tiny_config() {
  ModelConfig c;
  c.input_frames = 12;
  c.n_mfcc = 9;
  c.conv1_filters = 4;
  c.conv2_filters = 3;
  c.dense1_units = 8;
  c.dense2_units = 6;
  return c;
}

std::vector<Eigen::MatrixXd> random_features(int count, const ModelConfig& config,
                                             std::uint64_t seed) {
  RngStream rng(seed);
  std::vector<Eigen::MatrixXd> features;
  for (int i = 0; i < count; ++i) {
    Eigen::MatrixXd f(config.n_mfcc, config.input_frames);
    for (Eigen::Index r = 0; r < f.rows(); ++r)
      for (Eigen::Index c = 0; c < f.cols(); ++c) f(r, c) = rng.normal();
    features.push_back(std::move(f));
  }
  return features;
}

std::vector<const Eigen::MatrixXd*> pointers(const std::vector<Eigen::MatrixXd>& v) {
  std::vector<const Eigen::MatrixXd*> out;
  for (const auto& f : v) out.push_back(&f);
  return out;
}

}  // namespace

TEST_CASE("bce_loss matches hand-computed values") {
  SUBCASE("p = 0.5, y = 1 gives ln 2") {
    RowMat probs(1, 1);
    probs << 0.5;
    const LossResult r = bce_loss(probs, {1});
    CHECK(r.loss == doctest::Approx(std::log(2.0)).epsilon(1e-12));
    // d/dp of -ln(p) at 0.5 is -2.
    CHECK(r.dprobs(0, 0) == doctest::Approx(-2.0).epsilon(1e-12));
  }

  SUBCASE("perfect predictions cost at most 1e-11") {
    RowMat probs(2, 1);
    probs << 1.0, 0.0;
    const LossResult r = bce_loss(probs, {1, 0});
    CHECK(r.loss >= 0.0);
    CHECK(r.loss <= 1e-11);
  }

  SUBCASE("p = [0.9, 0.1], y = [1, 0] gives 0.10536") {
    RowMat probs(2, 1);
    probs << 0.9, 0.1;
    const LossResult r = bce_loss(probs, {1, 0});
    CHECK(r.loss == doctest::Approx(0.10536).epsilon(1e-4));
    CHECK(r.loss == doctest::Approx(-std::log(0.9)).epsilon(1e-12));
  }

  SUBCASE("labels outside {0,1} throw") {
    RowMat probs(1, 1);
    probs << 0.5;
    CHECK_THROWS_AS(bce_loss(probs, {2}), LabelOutOfDomain);
  }
}

TEST_CASE("total_loss equals the data term when all regularizers are zero") {
  ModelConfig config = tiny_config();
  RngStream rng(1);
  ModelParams params = ModelParams::init(config, rng);
  const auto features = random_features(4, config, 2);
  const Tensor4 x = batch_from_features(pointers(features));
  RngStream drop(3);
  ForwardCache cache;
  const RowMat probs = model_forward(x, params, Mode::kTrain, &drop, &cache);
  const LossResult data = bce_loss(probs, {0, 1, 0, 1});
  CHECK(total_loss(data, params, cache, RegConfig{0, 0, 0}) == data.loss);
  CHECK(total_loss(data, params, cache, RegConfig{}) > data.loss);
}

TEST_CASE("adam_step identities") {
  ModelConfig config = tiny_config();
  RngStream rng(4);

  SUBCASE("zero gradients leave parameters untouched") {
    ModelParams params = ModelParams::init(config, rng);
    ModelParams reference = params;
    ModelGrads zeros = ModelGrads::zeros(config);
    AdamState state = AdamState::init(params);
    TrainConfig tc;
    for (int step = 0; step < 10; ++step) adam_step(params, zeros, state, tc);
    auto a = learnable_views(params);
    auto b = learnable_views(reference);
    for (std::size_t v = 0; v < a.size(); ++v) {
      CHECK(std::memcmp(a[v].data, b[v].data,
                        sizeof(double) * static_cast<std::size_t>(a[v].size)) == 0);
    }
    CHECK(state.t == 10);
  }

  SUBCASE("first-step magnitude is the learning rate for g >> epsilon") {
    ModelParams params = ModelParams::init(config, rng);
    ModelGrads grads = ModelGrads::zeros(config);
    grads.out_b[0] = 0.3;
    const double before = params.out_b[0];
    AdamState state = AdamState::init(params);
    TrainConfig tc;  // lr 1e-4
    adam_step(params, grads, state, tc);
    const double update = before - params.out_b[0];
    // Bias-corrected first step: lr * g / (|g| + eps).
    CHECK(update == doctest::Approx(1e-4 * 0.3 / (0.3 + 1e-8)).epsilon(1e-9));
    CHECK(update > 0.0);
  }

  SUBCASE("first-step updates are scale invariant") {
    ModelParams params = ModelParams::init(config, rng);
    ModelGrads grads = ModelGrads::zeros(config);
    grads.dense2_b[0] = 0.01;
    grads.dense2_b[1] = 0.1;  // 10x gradient
    const Eigen::VectorXd before = params.dense2_b;
    AdamState state = AdamState::init(params);
    TrainConfig tc;
    adam_step(params, grads, state, tc);
    const double u0 = before[0] - params.dense2_b[0];
    const double u1 = before[1] - params.dense2_b[1];
    CHECK(u0 == doctest::Approx(u1).epsilon(1e-5));
  }
}

TEST_CASE("stratified_kfold deals 75/965 into exact 15/193 folds") {
  std::vector<int> labels(75, 1);
  labels.insert(labels.end(), 965, 0);
  const FoldPlan plan = stratified_kfold(labels, 5, 42);
  for (int fold = 0; fold < 5; ++fold) {
    int positives = 0, negatives = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (plan.fold_of[i] != fold) continue;
      (labels[i] == 1 ? positives : negatives) += 1;
    }
    CHECK(positives == 15);
    CHECK(negatives == 193);
  }
}

TEST_CASE("stratified_kfold spreads 7 positives as (2,2,1,1,1)") {
  std::vector<int> labels(7, 1);
  labels.insert(labels.end(), 10, 0);
  const FoldPlan plan = stratified_kfold(labels, 5, 3);
  std::vector<int> counts(5, 0);
  for (std::size_t i = 0; i < 7; ++i) counts[static_cast<std::size_t>(plan.fold_of[i])] += 1;
  std::sort(counts.begin(), counts.end(), std::greater<>());
  CHECK(counts == std::vector<int>{2, 2, 1, 1, 1});
}

TEST_CASE("stratified_kfold is deterministic and validates inputs") {
  std::vector<int> labels(20, 1);
  labels.insert(labels.end(), 30, 0);
  const FoldPlan a = stratified_kfold(labels, 5, 9);
  const FoldPlan b = stratified_kfold(labels, 5, 9);
  CHECK(a.fold_of == b.fold_of);
  const FoldPlan c = stratified_kfold(labels, 5, 10);
  CHECK(a.fold_of != c.fold_of);

  for (int fold : a.fold_of) {
    CHECK(fold >= 0);
    CHECK(fold < 5);
  }

  std::vector<int> small(4, 1);
  small.insert(small.end(), 30, 0);
  CHECK_THROWS_AS(stratified_kfold(small, 5, 1), ClassTooSmall);
  CHECK_THROWS_AS(stratified_kfold({1, 0, 1, 0}, 1, 1), DomainError);
}

TEST_CASE("RngStream shuffle emits permutations deterministically") {
  std::vector<int> v(100);
  std::iota(v.begin(), v.end(), 0);
  RngStream rng(5, {streams::kShuffle, 0, 0});
  rng.shuffle(v);
  std::vector<int> sorted = v;
  std::sort(sorted.begin(), sorted.end());
  std::vector<int> expect(100);
  std::iota(expect.begin(), expect.end(), 0);
  CHECK(sorted == expect);

  std::vector<int> w(100);
  std::iota(w.begin(), w.end(), 0);
  RngStream rng2(5, {streams::kShuffle, 0, 0});
  rng2.shuffle(w);
  CHECK(v == w);
}

TEST_CASE("train_fold runs exactly epochs x ceil(n/batch) Adam steps") {
  ModelConfig config = tiny_config();
  const auto features = random_features(64, config, 6);
  std::vector<int> labels(64);
  for (int i = 0; i < 64; ++i) labels[i] = i % 2;

  TrainConfig tc;
  tc.epochs = 2;
  tc.batch_size = 32;
  const FoldTrainResult r =
      train_fold(pointers(features), labels, {}, {}, config, tc, 0);
  CHECK(r.adam_steps == 4);
  CHECK(r.history.size() == 2);

  SUBCASE("partial final batches are used, not dropped") {
    TrainConfig tc2;
    tc2.epochs = 1;
    tc2.batch_size = 30;
    const FoldTrainResult r2 =
        train_fold(pointers(features), labels, {}, {}, config, tc2, 0);
    CHECK(r2.adam_steps == 3);  // 30 + 30 + 4
  }
}

TEST_CASE("train_fold is bit-for-bit deterministic") {
  ModelConfig config = tiny_config();
  const auto features = random_features(20, config, 7);
  std::vector<int> labels(20);
  for (int i = 0; i < 20; ++i) labels[i] = i < 10 ? 1 : 0;
  const auto val_features = random_features(6, config, 8);
  std::vector<int> val_labels = {1, 0, 1, 0, 1, 0};

  TrainConfig tc;
  tc.epochs = 3;
  tc.batch_size = 8;
  tc.learning_rate = 1e-3;

  const FoldTrainResult a = train_fold(pointers(features), labels, pointers(val_features),
                                       val_labels, config, tc, 2);
  const FoldTrainResult b = train_fold(pointers(features), labels, pointers(val_features),
                                       val_labels, config, tc, 2);

  auto va = learnable_views(const_cast<ModelParams&>(a.params));
  auto vb = learnable_views(const_cast<ModelParams&>(b.params));
  for (std::size_t v = 0; v < va.size(); ++v) {
    CHECK(std::memcmp(va[v].data, vb[v].data,
                      sizeof(double) * static_cast<std::size_t>(va[v].size)) == 0);
  }
  REQUIRE(a.history.size() == b.history.size());
  for (std::size_t e = 0; e < a.history.size(); ++e) {
    CHECK(a.history[e].train_loss == b.history[e].train_loss);
    CHECK(a.history[e].val_loss == b.history[e].val_loss);
    CHECK(a.history[e].val_auc == b.history[e].val_auc);
  }

  // A different fold index reseeds initialization and ordering.
  const FoldTrainResult c = train_fold(pointers(features), labels, pointers(val_features),
                                       val_labels, config, tc, 3);
  CHECK(a.history[0].train_loss != c.history[0].train_loss);
}

TEST_CASE("run_cv partitions validation over the originals fold-locally") {
  SynthSpec spec;
  spec.n_per_class = 30;
  spec.clip_seconds = 0.3;
  spec.seed = 21;
  const auto balanced = generate_corpus(spec);

  // 5 positives vs 30 negatives forces ceil(30/3) - 5 = 5 synthetic copies.
  std::vector<LabeledClip> corpus;
  int positives_kept = 0;
  for (const auto& e : balanced) {
    if (e.label == 1 && positives_kept >= 5) continue;
    positives_kept += e.label;
    corpus.push_back(e);
  }

  FeatureConfig fc;
  fc.clip_samples = spec.clip_samples();

  TrainConfig tc;
  tc.folds = 3;
  tc.epochs = 1;
  tc.batch_size = 8;
  tc.seed = 77;
  tc.augment.clip_samples = fc.clip_samples;

  const CvResult cv = run_cv(corpus, tc, fc);
  REQUIRE(cv.folds.size() == 3);

  // Validation ids across folds partition the original corpus exactly and
  // never include a synthetic example.
  std::multiset<std::string> seen;
  for (const CvFoldResult& fold : cv.folds) {
    for (const std::string& id : fold.val_ids) {
      CHECK(id.find("#aug") == std::string::npos);
      seen.insert(id);
    }
  }
  CHECK(seen.size() == corpus.size());
  for (const auto& e : corpus) CHECK(seen.count(e.id) == 1);

  for (const CvFoldResult& fold : cv.folds) {
    CHECK(std::isfinite(fold.report.auc));
    CHECK(fold.report.auc >= 0.0);
    CHECK(fold.report.auc <= 1.0);
    CHECK(fold.history.size() == 1);
  }
  CHECK(cv.best_fold >= 0);
  CHECK(cv.best_fold < 3);
}

TEST_CASE("run_cv global scope deals synthetics into folds independently") {
  SynthSpec spec;
  spec.n_per_class = 6;
  spec.clip_seconds = 0.3;
  spec.seed = 22;
  auto corpus = generate_corpus(spec);
  // 4 positives, 6 negatives.
  corpus.erase(std::remove_if(corpus.begin(), corpus.end(),
                              [k = 0](const LabeledClip& e) mutable {
                                return e.label == 1 && ++k > 4;
                              }),
               corpus.end());

  FeatureConfig fc;
  fc.clip_samples = spec.clip_samples();
  TrainConfig tc;
  tc.folds = 2;
  tc.epochs = 1;
  tc.batch_size = 4;
  tc.seed = 5;
  tc.augment_scope = AugmentScope::kGlobal;
  tc.augment.clip_samples = fc.clip_samples;

  const CvResult cv = run_cv(corpus, tc, fc);
  REQUIRE(cv.folds.size() == 2);
  // Global scope validates on synthetics too; with target ceil(6/3)=2 there
  // is nothing to synthesize here, so just check the runs are well formed.
  for (const CvFoldResult& fold : cv.folds) {
    CHECK(fold.val_ids.size() > 0);
  }
}

TEST_CASE("run_cv requires both classes") {
  SynthSpec spec;
  spec.n_per_class = 4;
  spec.clip_seconds = 0.3;
  auto corpus = generate_corpus(spec);
  corpus.erase(std::remove_if(corpus.begin(), corpus.end(),
                              [](const LabeledClip& e) { return e.label == 0; }),
               corpus.end());
  FeatureConfig fc;
  fc.clip_samples = spec.clip_samples();
  CHECK_THROWS_AS(run_cv(corpus, TrainConfig{}, fc), OneClassOnly);
}
