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

#include <cmath>
#include <cstring>

#include "coughnet/errors.hpp"
#include "coughnet/nn.hpp"
#include "coughnet/train.hpp"
#include "test_util.hpp"

using namespace coughnet;

namespace {

// Small geometry shared by the gradient and optimization tests; the layer
// code is the same as at canonical scale.
ModelConfig tiny_config() {
  ModelConfig c;
  c.input_frames = 12;
  c.n_mfcc = 9;
  c.conv1_filters = 6;
  c.conv2_filters = 4;
  c.dense1_units = 10;
  c.dense2_units = 8;
  c.dropout1 = 0.0;
  c.dropout2 = 0.0;
  return c;
}

Tensor4 random_input(Eigen::Index batch, const ModelConfig& config,
                     std::uint64_t seed, double scale = 1.0) {
  RngStream rng(seed);
  Tensor4 x = Tensor4::zeros(batch, config.input_frames, config.n_mfcc, 1);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data[i] = scale * rng.normal();
  return x;
}

double loss_for_gradcheck(ModelParams& params, const Tensor4& x,
                          const std::vector<int>& labels, const RegConfig& reg) {
  ForwardCache cache;
  const RowMat probs = model_forward(x, params, Mode::kTrain, nullptr, &cache);
  const LossResult data = bce_loss(probs, labels);
  return total_loss(data, params, cache, reg);
}

}  // namespace

TEST_CASE("conv2d_forward shape arithmetic and basic identities") {
  RngStream rng(1);

  SUBCASE("canonical first layer is (1,302,15,1) -> (1,300,13,64)") {
    Tensor4 x = Tensor4::zeros(1, 302, 15, 1);
    Eigen::MatrixXd kernel = Eigen::MatrixXd::Random(9, 64);
    Eigen::VectorXd bias = Eigen::VectorXd::Random(64);
    const Tensor4 y = conv2d_forward(x, kernel, bias, 3, 3);
    CHECK(y.b == 1);
    CHECK(y.h == 300);
    CHECK(y.w == 13);
    CHECK(y.c == 64);
  }

  SUBCASE("zero input and zero bias give zero output") {
    Tensor4 x = Tensor4::zeros(2, 8, 8, 3);
    Eigen::MatrixXd kernel = Eigen::MatrixXd::Random(2 * 2 * 3, 5);
    const Tensor4 y = conv2d_forward(x, kernel, Eigen::VectorXd::Zero(5), 2, 2);
    CHECK(y.data.abs().maxCoeff() == 0.0);
  }

  SUBCASE("1x1 identity kernel maps values through") {
    Tensor4 x = Tensor4::zeros(1, 4, 5, 3);
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data[i] = rng.uniform(-2, 2);
    const Eigen::MatrixXd kernel = Eigen::MatrixXd::Identity(3, 3);
    const Tensor4 y = conv2d_forward(x, kernel, Eigen::VectorXd::Zero(3), 1, 1);
    CHECK((y.data - x.data).abs().maxCoeff() == 0.0);
  }

  SUBCASE("kernel/input channel mismatch throws") {
    Tensor4 x = Tensor4::zeros(1, 4, 4, 2);
    Eigen::MatrixXd kernel = Eigen::MatrixXd::Random(9, 4);  // expects 1 channel
    CHECK_THROWS_AS(conv2d_forward(x, kernel, Eigen::VectorXd::Zero(4), 3, 3),
                    ShapeMismatch);
  }
}

TEST_CASE("maxpool2d pools 2x2 windows with floor semantics") {
  SUBCASE("shape: (1,300,13,64) -> (1,150,6,64)") {
    Tensor4 x = Tensor4::zeros(1, 300, 13, 64);
    const MaxPoolResult r = maxpool2d(x);
    CHECK(r.out.h == 150);
    CHECK(r.out.w == 6);
    CHECK(r.out.c == 64);
  }

  SUBCASE("window max") {
    Tensor4 x = Tensor4::zeros(1, 2, 2, 1);
    x.at(0, 0, 0, 0) = 1;
    x.at(0, 0, 1, 0) = 2;
    x.at(0, 1, 0, 0) = 3;
    x.at(0, 1, 1, 0) = 4;
    const MaxPoolResult r = maxpool2d(x);
    CHECK(r.out.data[0] == 4);
    CHECK(r.argmax[0] == x.flat(0, 1, 1, 0));
  }

  SUBCASE("ties break to the first position in scan order") {
    Tensor4 x = Tensor4::zeros(1, 4, 4, 2);
    x.data.setConstant(1.25);
    const MaxPoolResult r = maxpool2d(x);
    CHECK((r.out.data - 1.25).abs().maxCoeff() == 0.0);
    Eigen::Index oi = 0;
    for (Eigen::Index oy = 0; oy < 2; ++oy)
      for (Eigen::Index ox = 0; ox < 2; ++ox)
        for (Eigen::Index c = 0; c < 2; ++c, ++oi)
          CHECK(r.argmax[static_cast<std::size_t>(oi)] == x.flat(0, 2 * oy, 2 * ox, c));
  }
}

TEST_CASE("batchnorm_forward standardizes per channel in train mode") {
  ModelConfig config = tiny_config();
  RngStream rng(3);
  ModelParams params = ModelParams::init(config, rng);
  const Eigen::Index channels = config.conv2_filters;

  Tensor4 x = Tensor4::zeros(8, 3, 4, channels);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data[i] = rng.normal() * 2.0 + 0.7;

  SUBCASE("unit gamma, zero beta: mean 0, variance 1") {
    const Tensor4 y = batchnorm_forward(x, params, Mode::kTrain, nullptr);
    const Eigen::Index m = x.size() / channels;
    for (Eigen::Index c = 0; c < channels; ++c) {
      double mean = 0, var = 0;
      for (Eigen::Index i = c; i < y.size(); i += channels) mean += y.data[i];
      mean /= static_cast<double>(m);
      for (Eigen::Index i = c; i < y.size(); i += channels) {
        var += (y.data[i] - mean) * (y.data[i] - mean);
      }
      var /= static_cast<double>(m);
      CHECK(std::abs(mean) < 1e-6);
      CHECK(std::abs(var - 1.0) < 2e-3);  // epsilon=1e-3 shrinks variance slightly
    }
  }

  SUBCASE("gamma=2, beta=3 produce mean 3 and std 2") {
    params.bn_gamma.setConstant(2.0);
    params.bn_beta.setConstant(3.0);
    const Tensor4 y = batchnorm_forward(x, params, Mode::kTrain, nullptr);
    const Eigen::Index m = x.size() / channels;
    for (Eigen::Index c = 0; c < channels; ++c) {
      double mean = 0, var = 0;
      for (Eigen::Index i = c; i < y.size(); i += channels) mean += y.data[i];
      mean /= static_cast<double>(m);
      for (Eigen::Index i = c; i < y.size(); i += channels) {
        var += (y.data[i] - mean) * (y.data[i] - mean);
      }
      var /= static_cast<double>(m);
      CHECK(std::abs(mean - 3.0) < 1e-6);
      CHECK(std::abs(std::sqrt(var) - 2.0) < 5e-3);
    }
  }

  SUBCASE("single-value channels normalize to zero via the epsilon floor") {
    Tensor4 single = Tensor4::zeros(1, 1, 1, channels);
    for (Eigen::Index c = 0; c < channels; ++c) single.at(0, 0, 0, c) = 5.0 + c;
    const Tensor4 y = batchnorm_forward(single, params, Mode::kTrain, nullptr);
    CHECK(y.data.abs().maxCoeff() == 0.0);
    CHECK(y.data.isFinite().all());
  }

  SUBCASE("running statistics blend with momentum 0.99") {
    ModelParams fresh = ModelParams::init(config, rng);
    BatchNormCache cache;
    batchnorm_forward(x, fresh, Mode::kTrain, &cache);
    for (Eigen::Index c = 0; c < channels; ++c) {
      CHECK(fresh.bn_running_mean[c] ==
            doctest::Approx(0.01 * cache.mean[c]).epsilon(1e-12));
      CHECK(fresh.bn_running_var[c] ==
            doctest::Approx(0.99 + 0.01 * cache.var[c]).epsilon(1e-12));
    }
    CHECK(fresh.bn_batches == 1);
  }

  SUBCASE("infer before any train batch throws") {
    ModelParams fresh = ModelParams::init(config, rng);
    CHECK_THROWS_AS(batchnorm_forward(x, fresh, Mode::kInfer, nullptr),
                    InferBeforeTrain);
  }
}

TEST_CASE("dense_forward basics") {
  SUBCASE("identity weights pass input through") {
    RowMat x(2, 3);
    x << 1, 2, 3, 4, 5, 6;
    const RowMat y = dense_forward(x, Eigen::MatrixXd::Identity(3, 3),
                                   Eigen::VectorXd::Zero(3));
    CHECK((y - x).cwiseAbs().maxCoeff() == 0.0);
  }

  SUBCASE("zero input broadcasts the bias") {
    RowMat x = RowMat::Zero(4, 2);
    Eigen::VectorXd bias(3);
    bias << 0.5, -1.0, 2.0;
    const RowMat y = dense_forward(x, Eigen::MatrixXd::Zero(2, 3), bias);
    for (Eigen::Index r = 0; r < 4; ++r) {
      CHECK(y(r, 0) == 0.5);
      CHECK(y(r, 1) == -1.0);
      CHECK(y(r, 2) == 2.0);
    }
  }

  SUBCASE("hand-computed 1x2 case") {
    RowMat x(1, 2);
    x << 1, 2;
    Eigen::MatrixXd w(2, 1);
    w << 1, 1;
    Eigen::VectorXd b(1);
    b << 0.5;
    CHECK(dense_forward(x, w, b)(0, 0) == 3.5);
  }

  SUBCASE("shape mismatch throws") {
    CHECK_THROWS_AS(dense_forward(RowMat::Zero(1, 3), Eigen::MatrixXd::Zero(2, 2),
                                  Eigen::VectorXd::Zero(2)),
                    ShapeMismatch);
  }
}

TEST_CASE("sigmoid is stable at extreme arguments") {
  CHECK(sigmoid_stable(0.0) == 0.5);
  CHECK(sigmoid_stable(-1000.0) > 0.0);
  CHECK(std::isfinite(sigmoid_stable(-1000.0)));
  CHECK(sigmoid_stable(1000.0) < 1.0);
  CHECK(std::isfinite(sigmoid_stable(1000.0)));
}

TEST_CASE("dropout is inverted and unbiased") {
  RngStream rng(17);

  SUBCASE("rate 0 is the identity in both modes") {
    RowMat x = RowMat::Random(3, 4);
    RowMat mask;
    CHECK((dropout(x, 0.0, Mode::kTrain, &rng, &mask) - x).cwiseAbs().maxCoeff() == 0.0);
    CHECK((dropout(x, 0.0, Mode::kInfer, nullptr, &mask) - x).cwiseAbs().maxCoeff() == 0.0);
  }

  SUBCASE("infer mode is the identity at any rate") {
    RowMat x = RowMat::Random(3, 4);
    RowMat mask;
    CHECK((dropout(x, 0.7, Mode::kInfer, nullptr, &mask) - x).cwiseAbs().maxCoeff() == 0.0);
  }

  SUBCASE("train mode at rate 0.5 keeps the mean near 1 over 1e6 entries") {
    RowMat x = RowMat::Ones(1000, 1000);
    RowMat mask;
    const RowMat y = dropout(x, 0.5, Mode::kTrain, &rng, &mask);
    const double mean = y.sum() / static_cast<double>(y.size());
    CHECK(mean > 0.99);
    CHECK(mean < 1.01);
    // Survivors are scaled by exactly 1/(1-rate).
    for (Eigen::Index i = 0; i < 100; ++i) {
      const double v = y(i, 0);
      CHECK((v == 0.0 || v == 2.0));
    }
  }
}

TEST_CASE("model_forward walks the canonical shape chain") {
  ModelConfig config;  // canonical 302x15
  RngStream rng(5);
  ModelParams params = ModelParams::init(config, rng);
  CHECK(config.flatten_size() == 23840);

  const Tensor4 x = random_input(2, config, 6);
  RngStream dropout_rng(7);
  ForwardCache cache;
  const RowMat probs = model_forward(x, params, Mode::kTrain, &dropout_rng, &cache);

  // (B,302,15,1) -> (B,300,13,64) -> (B,150,6,64) -> (B,149,5,32) -> (B,23840)
  CHECK(cache.z1.h == 300);
  CHECK(cache.z1.w == 13);
  CHECK(cache.z1.c == 64);
  CHECK(cache.pool_argmax.size() == 2u * 150 * 6 * 64);
  CHECK(cache.z2.h == 149);
  CHECK(cache.z2.w == 5);
  CHECK(cache.z2.c == 32);
  CHECK(cache.flat.cols() == 23840);
  CHECK(cache.d1z.cols() == 256);
  CHECK(cache.d2z.cols() == 128);
  REQUIRE(probs.rows() == 2);
  REQUIRE(probs.cols() == 1);
  for (Eigen::Index i = 0; i < 2; ++i) {
    CHECK(probs(i, 0) > 0.0);
    CHECK(probs(i, 0) < 1.0);
  }

  SUBCASE("wrong input shape throws") {
    const Tensor4 bad = Tensor4::zeros(1, 300, 15, 1);
    CHECK_THROWS_AS(model_forward(bad, params, Mode::kInfer, nullptr, nullptr),
                    ShapeMismatch);
  }
}

TEST_CASE("infer mode is deterministic") {
  ModelConfig config = tiny_config();
  RngStream rng(8);
  ModelParams params = ModelParams::init(config, rng);
  const Tensor4 x = random_input(3, config, 9);
  // Seed the running stats.
  RngStream drop(1);
  model_forward(x, params, Mode::kTrain, &drop, nullptr);

  const RowMat a = model_forward(x, params, Mode::kInfer, nullptr, nullptr);
  const RowMat b = model_forward(x, params, Mode::kInfer, nullptr, nullptr);
  CHECK(std::memcmp(a.data(), b.data(), sizeof(double) * 3) == 0);
}

TEST_CASE("model_backward returns zero gradients for zero upstream") {
  ModelConfig config = tiny_config();
  RngStream rng(10);
  ModelParams params = ModelParams::init(config, rng);
  const Tensor4 x = random_input(4, config, 11);
  ForwardCache cache;
  model_forward(x, params, Mode::kTrain, nullptr, &cache);

  const RegConfig no_reg{0.0, 0.0, 0.0};
  ModelGrads grads = model_backward(params, cache, RowMat::Zero(4, 1), no_reg);
  for (const ParamView& view : learnable_views(grads)) {
    for (Eigen::Index i = 0; i < view.size; ++i) CHECK(view.data[i] == 0.0);
  }
}

TEST_CASE("analytic gradients match central finite differences to 1e-6") {
  ModelConfig config = tiny_config();
  RngStream rng(12);
  ModelParams params = ModelParams::init(config, rng);
  const Tensor4 x = random_input(2, config, 13, 0.8);
  const std::vector<int> labels = {1, 0};
  const RegConfig reg{1e-3, 1e-3, 1e-2};  // exercise every penalty term

  ForwardCache cache;
  const RowMat probs = model_forward(x, params, Mode::kTrain, nullptr, &cache);
  const LossResult data = bce_loss(probs, labels);
  ModelGrads grads = model_backward(params, cache, data.dprobs, reg);

  const double h = 1e-5;
  double worst = 0.0;
  auto param_views = learnable_views(params);
  auto grad_views = learnable_views(grads);
  for (std::size_t v = 0; v < param_views.size(); ++v) {
    for (Eigen::Index i = 0; i < param_views[v].size; ++i) {
      double& slot = param_views[v].data[i];
      const double saved = slot;
      slot = saved + h;
      const double up = loss_for_gradcheck(params, x, labels, reg);
      slot = saved - h;
      const double down = loss_for_gradcheck(params, x, labels, reg);
      slot = saved;
      const double fd = (up - down) / (2.0 * h);
      const double analytic = grad_views[v].data[i];
      const double err = std::abs(analytic - fd) /
                         std::max({std::abs(fd), std::abs(analytic), 1e-8});
      worst = std::max(worst, err);
    }
  }
  CHECK(worst < 1e-6);
}

TEST_CASE("conv1 bias gradient equals the summed routed deltas") {
  ModelConfig config = tiny_config();
  RngStream rng(14);
  ModelParams params = ModelParams::init(config, rng);
  const Tensor4 x = random_input(2, config, 15);
  const std::vector<int> labels = {0, 1};
  const RegConfig reg{0.0, 0.0, 0.0};

  ForwardCache cache;
  const RowMat probs = model_forward(x, params, Mode::kTrain, nullptr, &cache);
  const LossResult data = bce_loss(probs, labels);
  ModelGrads grads = model_backward(params, cache, data.dprobs, reg);

  // Finite differences on each conv1 bias channel.
  const double h = 1e-5;
  for (Eigen::Index c = 0; c < params.conv1_b.size(); ++c) {
    const double saved = params.conv1_b[c];
    params.conv1_b[c] = saved + h;
    const double up = loss_for_gradcheck(params, x, labels, reg);
    params.conv1_b[c] = saved - h;
    const double down = loss_for_gradcheck(params, x, labels, reg);
    params.conv1_b[c] = saved;
    const double fd = (up - down) / (2.0 * h);
    CHECK(grads.conv1_b[c] == doctest::Approx(fd).epsilon(1e-6));
  }
}

TEST_CASE("50 Adam steps halve the loss on a 16-example batch") {
  ModelConfig config = tiny_config();
  RngStream rng(16);
  ModelParams params = ModelParams::init(config, rng);
  const Tensor4 x = random_input(16, config, 17);
  std::vector<int> labels(16);
  for (int i = 0; i < 16; ++i) labels[i] = i % 2;

  TrainConfig tc;
  tc.learning_rate = 5e-3;
  const RegConfig reg{0.0, 0.0, 0.0};
  AdamState adam = AdamState::init(params);

  double initial = -1.0, final = -1.0;
  for (int step = 0; step < 50; ++step) {
    ForwardCache cache;
    const RowMat probs = model_forward(x, params, Mode::kTrain, nullptr, &cache);
    const LossResult data = bce_loss(probs, labels);
    if (step == 0) initial = data.loss;
    ModelGrads grads = model_backward(params, cache, data.dprobs, reg);
    adam_step(params, grads, adam, tc);
  }
  {
    ForwardCache cache;
    const RowMat probs = model_forward(x, params, Mode::kTrain, nullptr, &cache);
    final = bce_loss(probs, labels).loss;
  }
  CHECK(final <= 0.5 * initial);
}

TEST_CASE("checkpoints round trip bit-exactly") {
  testutil::TempDir dir("ckpt");
  ModelConfig config = tiny_config();
  RngStream rng(18);
  ModelParams params = ModelParams::init(config, rng);
  const Tensor4 x = random_input(2, config, 19);
  model_forward(x, params, Mode::kTrain, nullptr, nullptr);  // advance bn stats

  const std::string path = dir.file("model.ckpt");
  save_checkpoint(path, params, 424242, 7);

  Checkpoint loaded = load_checkpoint(path);
  CHECK(loaded.seed == 424242);
  CHECK(loaded.epoch == 7);
  CHECK(loaded.params.bn_batches == params.bn_batches);

  auto original_views = learnable_views(params);
  auto loaded_views = learnable_views(loaded.params);
  for (std::size_t v = 0; v < original_views.size(); ++v) {
    REQUIRE(original_views[v].size == loaded_views[v].size);
    CHECK(std::memcmp(original_views[v].data, loaded_views[v].data,
                      sizeof(double) * static_cast<std::size_t>(original_views[v].size)) == 0);
  }
  CHECK(std::memcmp(params.bn_running_mean.data(), loaded.params.bn_running_mean.data(),
                    sizeof(double) * static_cast<std::size_t>(params.bn_running_mean.size())) == 0);
  CHECK(std::memcmp(params.bn_running_var.data(), loaded.params.bn_running_var.data(),
                    sizeof(double) * static_cast<std::size_t>(params.bn_running_var.size())) == 0);

  // Saving the loaded params reproduces the file byte for byte.
  const std::string path2 = dir.file("model2.ckpt");
  save_checkpoint(path2, loaded.params, loaded.seed, loaded.epoch);
  CHECK(testutil::read_bytes(path) == testutil::read_bytes(path2));

  SUBCASE("payload corruption raises ChecksumMismatch") {
    auto bytes = testutil::read_bytes(path);
    bytes[bytes.size() - 5] ^= 0x01;
    const std::string bad = dir.file("bad.ckpt");
    testutil::write_bytes(bad, bytes);
    CHECK_THROWS_AS(load_checkpoint(bad), ChecksumMismatch);
  }

  SUBCASE("bad magic raises MalformedContainer") {
    auto bytes = testutil::read_bytes(path);
    bytes[0] = 'X';
    const std::string bad = dir.file("badmagic.ckpt");
    testutil::write_bytes(bad, bytes);
    CHECK_THROWS_AS(load_checkpoint(bad), MalformedContainer);
  }
}

TEST_CASE("model_backward rejects a cache from a different batch") {
  ModelConfig config = tiny_config();
  RngStream rng(20);
  ModelParams params = ModelParams::init(config, rng);
  const Tensor4 x = random_input(3, config, 21);
  ForwardCache cache;
  model_forward(x, params, Mode::kTrain, nullptr, &cache);
  CHECK_THROWS_AS(model_backward(params, cache, RowMat::Zero(5, 1), RegConfig{}),
                  StaleCache);
}

TEST_CASE("batch_from_features transposes coefficient matrices time-major") {
  RngStream rng(22);
  Eigen::MatrixXd f(15, 302);
  for (int r = 0; r < 15; ++r)
    for (int c = 0; c < 302; ++c) f(r, c) = rng.normal();
  const Tensor4 x = batch_from_features({&f});
  CHECK(x.b == 1);
  CHECK(x.h == 302);
  CHECK(x.w == 15);
  CHECK(x.c == 1);
  for (int t = 0; t < 302; t += 17) {
    for (int q = 0; q < 15; ++q) {
      CHECK(x.at(0, t, q, 0) == f(q, t));
    }
  }
}

TEST_CASE("ModelParams rejects geometry the layer chain cannot fit") {
  ModelConfig config;
  config.input_frames = 4;  // pool output too small for conv2
  config.n_mfcc = 4;
  RngStream rng(23);
  CHECK_THROWS_AS(ModelParams::init(config, rng), ShapeMismatch);
}
