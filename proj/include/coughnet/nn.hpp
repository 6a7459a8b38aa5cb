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

// The ten-layer classifier with hand-written forward and backward passes:
//   conv(3x3, 64) + ReLU -> maxpool(2x2) -> conv(2x2, 32) + ReLU ->
//   batchnorm -> flatten -> dense(256) + ReLU -> dropout(0.5) ->
//   dense(128) + ReLU -> dropout(0.3) -> dense(1) + sigmoid.
// Convolutions are cross-correlations (no kernel flip), stride 1, valid
// padding. Everything is 64-bit; gradients are exact analytic derivatives
// checked against finite differences in the test suite.

#ifndef COUGHNET_NN_HPP_
#define COUGHNET_NN_HPP_

#include <Eigen/Core>
#include <cstdint>
#include <string>
#include <vector>

#include "coughnet/rng.hpp"

namespace coughnet {

// Activations use row-major storage so an example's data stays contiguous
// through im2col, flatten, and the dense stack.
using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Dense batch-height-width-channel tensor, row-major with channels fastest.
struct Tensor4 {
  Eigen::ArrayXd data;
  Eigen::Index b = 0, h = 0, w = 0, c = 0;

  static Tensor4 zeros(Eigen::Index b, Eigen::Index h, Eigen::Index w, Eigen::Index c);

  Eigen::Index size() const { return b * h * w * c; }
  Eigen::Index flat(Eigen::Index bi, Eigen::Index yi, Eigen::Index xi,
                    Eigen::Index ci) const {
    return ((bi * h + yi) * w + xi) * c + ci;
  }
  double& at(Eigen::Index bi, Eigen::Index yi, Eigen::Index xi, Eigen::Index ci) {
    return data[flat(bi, yi, xi, ci)];
  }
  double at(Eigen::Index bi, Eigen::Index yi, Eigen::Index xi, Eigen::Index ci) const {
    return data[flat(bi, yi, xi, ci)];
  }
};

enum class Mode { kTrain, kInfer };

struct ModelConfig {
  int input_frames = 302;  // time frames (tensor height)
  int n_mfcc = 15;         // coefficients per frame (tensor width)
  int conv1_filters = 64;
  int conv1_kernel = 3;
  int conv2_filters = 32;
  int conv2_kernel = 2;
  int dense1_units = 256;
  int dense2_units = 128;
  double dropout1 = 0.5;
  double dropout2 = 0.3;
  double bn_momentum = 0.99;
  double bn_epsilon = 1e-3;

  int conv1_out_h() const { return input_frames - conv1_kernel + 1; }
  int conv1_out_w() const { return n_mfcc - conv1_kernel + 1; }
  int pool_out_h() const { return conv1_out_h() / 2; }
  int pool_out_w() const { return conv1_out_w() / 2; }
  int conv2_out_h() const { return pool_out_h() - conv2_kernel + 1; }
  int conv2_out_w() const { return pool_out_w() - conv2_kernel + 1; }
  int flatten_size() const { return conv2_out_h() * conv2_out_w() * conv2_filters; }
};

// Learnable tensors plus batch-norm running statistics. Kernels are stored
// as (kh * kw * in_channels) x out_channels matrices, rows ordered (ky, kx, ci).
struct ModelParams {
  ModelConfig config;

  Eigen::MatrixXd conv1_w;
  Eigen::VectorXd conv1_b;
  Eigen::MatrixXd conv2_w;
  Eigen::VectorXd conv2_b;
  Eigen::VectorXd bn_gamma, bn_beta;
  Eigen::VectorXd bn_running_mean, bn_running_var;
  std::int64_t bn_batches = 0;  // 0 means running stats still at init sentinel
  Eigen::MatrixXd dense1_w;
  Eigen::VectorXd dense1_b;
  Eigen::MatrixXd dense2_w;
  Eigen::VectorXd dense2_b;
  Eigen::MatrixXd out_w;
  Eigen::VectorXd out_b;

  // He-uniform init for the ReLU layers, Glorot-uniform for the sigmoid
  // output, zero biases, identity batch-norm affine.
  static ModelParams init(const ModelConfig& config, RngStream& rng);
};

// Gradients for every learnable tensor, in ModelParams order.
struct ModelGrads {
  Eigen::MatrixXd conv1_w;
  Eigen::VectorXd conv1_b;
  Eigen::MatrixXd conv2_w;
  Eigen::VectorXd conv2_b;
  Eigen::VectorXd bn_gamma, bn_beta;
  Eigen::MatrixXd dense1_w;
  Eigen::VectorXd dense1_b;
  Eigen::MatrixXd dense2_w;
  Eigen::VectorXd dense2_b;
  Eigen::MatrixXd out_w;
  Eigen::VectorXd out_b;

  static ModelGrads zeros(const ModelConfig& config);
};

// Flat view over the learnable tensors, fixed declared order. Params and
// grads enumerate identically, which is what Adam and checkpointing key on.
struct ParamView {
  std::string name;
  double* data;
  Eigen::Index size;
};
std::vector<ParamView> learnable_views(ModelParams& params);
std::vector<ParamView> learnable_views(ModelGrads& grads);

// L2 coefficients for the two regularized dense layers. The activity term
// applies to the post-ReLU outputs of dense1/dense2, averaged over the batch.
struct RegConfig {
  double kernel = 1e-4;
  double bias = 1e-4;
  double activity = 1e-5;
};

// Everything the backward pass needs, retained by a train-mode forward.
struct ForwardCache {
  Eigen::Index batch = 0;
  Mode mode = Mode::kTrain;
  RowMat patches1;  // (B * conv1 positions) x (k1*k1)
  Tensor4 z1;
  RowMat patches2;  // (B * conv2 positions) x (k2*k2*64)
  Tensor4 z2;
  Tensor4 bn_input;  // relu(z2)
  Eigen::VectorXd bn_mean, bn_var, bn_inv_std;
  Tensor4 bn_xhat;
  std::vector<Eigen::Index> pool_argmax;  // flat index into relu(z1) per pooled value
  RowMat flat;     // B x flatten
  RowMat d1z, d1a, d1mask, d1out;
  RowMat d2z, d2a, d2mask, d2out;
  RowMat probs;    // B x 1
};

// ---- individual layers (exposed for unit tests) ----

// Valid-padding stride-1 cross-correlation. kernel is (kh*kw*ci) x co.
Tensor4 conv2d_forward(const Tensor4& x, const Eigen::MatrixXd& kernel,
                       const Eigen::VectorXd& bias, int kh, int kw);

struct MaxPoolResult {
  Tensor4 out;
  std::vector<Eigen::Index> argmax;  // flat input index per output element
};
// 2x2 max pooling with floor semantics; ties break to the first position in
// (y, x) scan order.
MaxPoolResult maxpool2d(const Tensor4& x);

struct BatchNormCache {
  Eigen::VectorXd mean, var, inv_std;
  Tensor4 xhat;
};
// Per-channel normalization over (batch, height, width). Train mode uses
// batch statistics and folds them into the running estimates; infer mode
// uses the running estimates and requires at least one prior train batch.
Tensor4 batchnorm_forward(const Tensor4& x, ModelParams& params, Mode mode,
                          BatchNormCache* cache);

RowMat dense_forward(const RowMat& x, const Eigen::MatrixXd& weights,
                     const Eigen::VectorXd& bias);

double sigmoid_stable(double z);

// Inverted dropout: train mode zeroes entries with probability rate and
// scales survivors by 1/(1-rate); infer mode is the identity. The returned
// mask holds the applied multipliers.
RowMat dropout(const RowMat& x, double rate, Mode mode, RngStream* rng,
               RowMat* mask);

// ---- full model ----

// Builds a (n, frames, mfcc, 1) batch from per-example coefficient matrices
// (each n_mfcc x n_frames; the network ingests the transpose, time-major).
Tensor4 batch_from_features(const std::vector<const Eigen::MatrixXd*>& examples);

// Forward pass in the architecture order. Train mode requires an RNG for the
// dropout draws and fills `cache`; infer mode needs neither.
RowMat model_forward(const Tensor4& x, ModelParams& params, Mode mode,
                     RngStream* rng, ForwardCache* cache);

// Infer-mode convenience: probabilities for a batch, processed in chunks.
Eigen::VectorXd model_predict(const std::vector<const Eigen::MatrixXd*>& examples,
                              ModelParams& params, int chunk = 64);

// Exact gradients of (data loss + regularization) given the upstream
// gradient with respect to the output probabilities. The cache must come
// from the immediately preceding train-mode forward with the same params.
ModelGrads model_backward(const ModelParams& params, const ForwardCache& cache,
                          const RowMat& dprobs, const RegConfig& reg);

// Kernel/bias/activity L2 penalty matching model_backward's gradient terms.
double l2_penalty(const ModelParams& params, const ForwardCache& cache,
                  const RegConfig& reg);

// ---- checkpointing ----

struct Checkpoint {
  ModelParams params;
  std::uint64_t seed = 0;
  int epoch = 0;
};

// Binary checkpoint: magic "CGHN", u32 version = 1, u32 header length, JSON
// header (shapes, hyperparameters, seed, epoch, payload checksum), then the
// raw 64-bit tensors in declared order. Round trips are bit-exact.
void save_checkpoint(const std::string& path, const ModelParams& params,
                     std::uint64_t seed, int epoch);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace coughnet

#endif  // COUGHNET_NN_HPP_
