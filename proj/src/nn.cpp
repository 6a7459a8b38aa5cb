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

#include "coughnet/nn.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>

#include <nlohmann/json.hpp>

#include "coughnet/errors.hpp"

namespace coughnet {

namespace {

using json = nlohmann::json;

// im2col: one row per (batch, out_y, out_x), columns ordered (ky, kx, ci).
RowMat extract_patches(const Tensor4& x, int kh, int kw) {
  const Eigen::Index oh = x.h - kh + 1;
  const Eigen::Index ow = x.w - kw + 1;
  RowMat patches(x.b * oh * ow, static_cast<Eigen::Index>(kh) * kw * x.c);
  Eigen::Index row = 0;
  for (Eigen::Index bi = 0; bi < x.b; ++bi) {
    for (Eigen::Index oy = 0; oy < oh; ++oy) {
      for (Eigen::Index ox = 0; ox < ow; ++ox, ++row) {
        Eigen::Index col = 0;
        for (int ky = 0; ky < kh; ++ky) {
          const Eigen::Index base = x.flat(bi, oy + ky, ox, 0);
          for (int kx = 0; kx < kw; ++kx) {
            for (Eigen::Index ci = 0; ci < x.c; ++ci, ++col) {
              patches(row, col) = x.data[base + kx * x.c + ci];
            }
          }
        }
      }
    }
  }
  return patches;
}

// col2im: scatter-add of patch gradients back onto the input layout.
Tensor4 scatter_patches(const RowMat& dpatches, Eigen::Index b, Eigen::Index h,
                        Eigen::Index w, Eigen::Index c, int kh, int kw) {
  Tensor4 dx = Tensor4::zeros(b, h, w, c);
  const Eigen::Index oh = h - kh + 1;
  const Eigen::Index ow = w - kw + 1;
  Eigen::Index row = 0;
  for (Eigen::Index bi = 0; bi < b; ++bi) {
    for (Eigen::Index oy = 0; oy < oh; ++oy) {
      for (Eigen::Index ox = 0; ox < ow; ++ox, ++row) {
        Eigen::Index col = 0;
        for (int ky = 0; ky < kh; ++ky) {
          const Eigen::Index base = dx.flat(bi, oy + ky, ox, 0);
          for (int kx = 0; kx < kw; ++kx) {
            for (Eigen::Index ci = 0; ci < c; ++ci, ++col) {
              dx.data[base + kx * c + ci] += dpatches(row, col);
            }
          }
        }
      }
    }
  }
  return dx;
}

Tensor4 tensor_from_rowmat(const RowMat& m, Eigen::Index b, Eigen::Index h,
                           Eigen::Index w, Eigen::Index c) {
  Tensor4 t;
  t.b = b;
  t.h = h;
  t.w = w;
  t.c = c;
  t.data = Eigen::Map<const Eigen::ArrayXd>(m.data(), m.size());
  return t;
}

RowMat relu(const RowMat& x) { return x.cwiseMax(0.0); }

Tensor4 relu(const Tensor4& x) {
  Tensor4 out = x;
  out.data = out.data.max(0.0);
  return out;
}

void check_finite(const Tensor4& t, const char* layer) {
  if (!t.data.isFinite().all()) {
    throw Error(std::string("non-finite activation after ") + layer);
  }
}

void he_uniform(Eigen::MatrixXd& w, double fan_in, RngStream& rng) {
  const double limit = std::sqrt(6.0 / fan_in);
  for (Eigen::Index r = 0; r < w.rows(); ++r)
    for (Eigen::Index c = 0; c < w.cols(); ++c) w(r, c) = rng.uniform(-limit, limit);
}

void glorot_uniform(Eigen::MatrixXd& w, double fan_in, double fan_out,
                    RngStream& rng) {
  const double limit = std::sqrt(6.0 / (fan_in + fan_out));
  for (Eigen::Index r = 0; r < w.rows(); ++r)
    for (Eigen::Index c = 0; c < w.cols(); ++c) w(r, c) = rng.uniform(-limit, limit);
}

std::uint64_t fnv1a(const std::uint8_t* data, std::size_t len) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::size_t i = 0; i < len; ++i) {
    h ^= data[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

Tensor4 Tensor4::zeros(Eigen::Index b, Eigen::Index h, Eigen::Index w,
                       Eigen::Index c) {
  Tensor4 t;
  t.b = b;
  t.h = h;
  t.w = w;
  t.c = c;
  t.data = Eigen::ArrayXd::Zero(b * h * w * c);
  return t;
}

ModelParams ModelParams::init(const ModelConfig& config, RngStream& rng) {
  if (config.conv1_out_h() < 1 || config.conv1_out_w() < 1 ||
      config.pool_out_h() < 1 || config.pool_out_w() < 1 ||
      config.conv2_out_h() < 1 || config.conv2_out_w() < 1) {
    throw ShapeMismatch("ModelParams: input too small for the layer chain");
  }
  // Canonical geometry must flatten to 149 * 5 * 32.
  if (config.input_frames == 302 && config.n_mfcc == 15 &&
      config.conv1_kernel == 3 && config.conv2_kernel == 2 &&
      config.conv2_filters == 32 && config.flatten_size() != 23840) {
    throw ShapeMismatch("ModelParams: canonical flatten size must be 23840");
  }

  ModelParams p;
  p.config = config;
  const int k1 = config.conv1_kernel;
  const int k2 = config.conv2_kernel;

  p.conv1_w.resize(k1 * k1, config.conv1_filters);
  he_uniform(p.conv1_w, k1 * k1, rng);
  p.conv1_b = Eigen::VectorXd::Zero(config.conv1_filters);

  p.conv2_w.resize(k2 * k2 * config.conv1_filters, config.conv2_filters);
  he_uniform(p.conv2_w, k2 * k2 * config.conv1_filters, rng);
  p.conv2_b = Eigen::VectorXd::Zero(config.conv2_filters);

  p.bn_gamma = Eigen::VectorXd::Ones(config.conv2_filters);
  p.bn_beta = Eigen::VectorXd::Zero(config.conv2_filters);
  p.bn_running_mean = Eigen::VectorXd::Zero(config.conv2_filters);
  p.bn_running_var = Eigen::VectorXd::Ones(config.conv2_filters);
  p.bn_batches = 0;

  p.dense1_w.resize(config.flatten_size(), config.dense1_units);
  he_uniform(p.dense1_w, config.flatten_size(), rng);
  p.dense1_b = Eigen::VectorXd::Zero(config.dense1_units);

  p.dense2_w.resize(config.dense1_units, config.dense2_units);
  he_uniform(p.dense2_w, config.dense1_units, rng);
  p.dense2_b = Eigen::VectorXd::Zero(config.dense2_units);

  p.out_w.resize(config.dense2_units, 1);
  glorot_uniform(p.out_w, config.dense2_units, 1, rng);
  p.out_b = Eigen::VectorXd::Zero(1);
  return p;
}

ModelGrads ModelGrads::zeros(const ModelConfig& config) {
  ModelGrads g;
  const int k1 = config.conv1_kernel;
  const int k2 = config.conv2_kernel;
  g.conv1_w = Eigen::MatrixXd::Zero(k1 * k1, config.conv1_filters);
  g.conv1_b = Eigen::VectorXd::Zero(config.conv1_filters);
  g.conv2_w = Eigen::MatrixXd::Zero(k2 * k2 * config.conv1_filters, config.conv2_filters);
  g.conv2_b = Eigen::VectorXd::Zero(config.conv2_filters);
  g.bn_gamma = Eigen::VectorXd::Zero(config.conv2_filters);
  g.bn_beta = Eigen::VectorXd::Zero(config.conv2_filters);
  g.dense1_w = Eigen::MatrixXd::Zero(config.flatten_size(), config.dense1_units);
  g.dense1_b = Eigen::VectorXd::Zero(config.dense1_units);
  g.dense2_w = Eigen::MatrixXd::Zero(config.dense1_units, config.dense2_units);
  g.dense2_b = Eigen::VectorXd::Zero(config.dense2_units);
  g.out_w = Eigen::MatrixXd::Zero(config.dense2_units, 1);
  g.out_b = Eigen::VectorXd::Zero(1);
  return g;
}

template <typename T>
static std::vector<ParamView> views_impl(T& t) {
  auto view = [](const char* name, auto& m) {
    return ParamView{name, const_cast<double*>(m.data()),
                     static_cast<Eigen::Index>(m.size())};
  };
  return {
      view("conv1_w", t.conv1_w),   view("conv1_b", t.conv1_b),
      view("conv2_w", t.conv2_w),   view("conv2_b", t.conv2_b),
      view("bn_gamma", t.bn_gamma), view("bn_beta", t.bn_beta),
      view("dense1_w", t.dense1_w), view("dense1_b", t.dense1_b),
      view("dense2_w", t.dense2_w), view("dense2_b", t.dense2_b),
      view("out_w", t.out_w),       view("out_b", t.out_b),
  };
}

std::vector<ParamView> learnable_views(ModelParams& params) {
  return views_impl(params);
}
std::vector<ParamView> learnable_views(ModelGrads& grads) {
  return views_impl(grads);
}

Tensor4 conv2d_forward(const Tensor4& x, const Eigen::MatrixXd& kernel,
                       const Eigen::VectorXd& bias, int kh, int kw) {
  if (kernel.rows() != static_cast<Eigen::Index>(kh) * kw * x.c) {
    throw ShapeMismatch("conv2d: kernel rows do not match kh*kw*in_channels");
  }
  if (x.h < kh || x.w < kw) {
    throw ShapeMismatch("conv2d: input smaller than kernel");
  }
  if (bias.size() != kernel.cols()) {
    throw ShapeMismatch("conv2d: bias length does not match filter count");
  }
  const RowMat patches = extract_patches(x, kh, kw);
  RowMat out = patches * kernel;
  out.rowwise() += bias.transpose();
  return tensor_from_rowmat(out, x.b, x.h - kh + 1, x.w - kw + 1, kernel.cols());
}

MaxPoolResult maxpool2d(const Tensor4& x) {
  const Eigen::Index oh = x.h / 2;
  const Eigen::Index ow = x.w / 2;
  MaxPoolResult r;
  r.out = Tensor4::zeros(x.b, oh, ow, x.c);
  r.argmax.resize(static_cast<std::size_t>(r.out.size()));
  Eigen::Index oi = 0;
  for (Eigen::Index bi = 0; bi < x.b; ++bi) {
    for (Eigen::Index oy = 0; oy < oh; ++oy) {
      for (Eigen::Index ox = 0; ox < ow; ++ox) {
        for (Eigen::Index ci = 0; ci < x.c; ++ci, ++oi) {
          Eigen::Index best = x.flat(bi, 2 * oy, 2 * ox, ci);
          double best_v = x.data[best];
          for (int dy = 0; dy < 2; ++dy) {
            for (int dx = 0; dx < 2; ++dx) {
              const Eigen::Index idx = x.flat(bi, 2 * oy + dy, 2 * ox + dx, ci);
              if (x.data[idx] > best_v) {
                best_v = x.data[idx];
                best = idx;
              }
            }
          }
          r.out.data[oi] = best_v;
          r.argmax[static_cast<std::size_t>(oi)] = best;
        }
      }
    }
  }
  return r;
}

Tensor4 batchnorm_forward(const Tensor4& x, ModelParams& params, Mode mode,
                          BatchNormCache* cache) {
  const Eigen::Index channels = x.c;
  if (channels != params.bn_gamma.size()) {
    throw ShapeMismatch("batchnorm: channel count does not match parameters");
  }
  const Eigen::Index m = x.b * x.h * x.w;
  const double eps = params.config.bn_epsilon;

  Eigen::VectorXd mean(channels), var(channels);
  if (mode == Mode::kTrain) {
    mean.setZero();
    for (Eigen::Index i = 0; i < x.size(); ++i) mean[i % channels] += x.data[i];
    mean /= static_cast<double>(m);
    var.setZero();
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      const double d = x.data[i] - mean[i % channels];
      var[i % channels] += d * d;
    }
    var /= static_cast<double>(m);

    const double momentum = params.config.bn_momentum;
    params.bn_running_mean = momentum * params.bn_running_mean + (1.0 - momentum) * mean;
    params.bn_running_var = momentum * params.bn_running_var + (1.0 - momentum) * var;
    params.bn_batches += 1;
  } else {
    if (params.bn_batches == 0) {
      throw InferBeforeTrain("batchnorm: running statistics never updated");
    }
    mean = params.bn_running_mean;
    var = params.bn_running_var;
  }

  Eigen::VectorXd inv_std(channels);
  for (Eigen::Index c = 0; c < channels; ++c) inv_std[c] = 1.0 / std::sqrt(var[c] + eps);

  Tensor4 out = x;
  Tensor4 xhat = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const Eigen::Index c = i % channels;
    const double normalized = (x.data[i] - mean[c]) * inv_std[c];
    xhat.data[i] = normalized;
    out.data[i] = params.bn_gamma[c] * normalized + params.bn_beta[c];
  }
  if (cache != nullptr) {
    cache->mean = std::move(mean);
    cache->var = std::move(var);
    cache->inv_std = std::move(inv_std);
    cache->xhat = std::move(xhat);
  }
  return out;
}

RowMat dense_forward(const RowMat& x, const Eigen::MatrixXd& weights,
                     const Eigen::VectorXd& bias) {
  if (x.cols() != weights.rows() || weights.cols() != bias.size()) {
    throw ShapeMismatch("dense: weight shape does not match input/bias");
  }
  RowMat out = x * weights;
  out.rowwise() += bias.transpose();
  return out;
}

double sigmoid_stable(double z) {
  double v;
  if (z >= 0.0) {
    v = 1.0 / (1.0 + std::exp(-z));
  } else {
    const double e = std::exp(z);
    v = e / (1.0 + e);
  }
  // Keep outputs strictly inside (0, 1) even where exp underflows, so the
  // loss logs stay finite.
  constexpr double lo = std::numeric_limits<double>::min();
  constexpr double hi = 1.0 - std::numeric_limits<double>::epsilon() / 2.0;
  return std::clamp(v, lo, hi);
}

RowMat dropout(const RowMat& x, double rate, Mode mode, RngStream* rng,
               RowMat* mask) {
  if (rate < 0.0 || rate >= 1.0) throw DomainError("dropout: rate must be in [0, 1)");
  if (mode == Mode::kInfer || rate == 0.0) {
    if (mask != nullptr) *mask = RowMat::Ones(x.rows(), x.cols());
    return x;
  }
  if (rng == nullptr) throw Error("dropout: train mode requires an RNG");
  const double keep_scale = 1.0 / (1.0 - rate);
  RowMat m(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
      m(r, c) = rng->bernoulli(rate) ? 0.0 : keep_scale;
    }
  }
  if (mask != nullptr) *mask = m;
  return x.cwiseProduct(m);
}

Tensor4 batch_from_features(const std::vector<const Eigen::MatrixXd*>& examples) {
  if (examples.empty()) throw ShapeMismatch("batch_from_features: empty batch");
  const Eigen::Index n_mfcc = examples[0]->rows();
  const Eigen::Index n_frames = examples[0]->cols();
  Tensor4 x = Tensor4::zeros(static_cast<Eigen::Index>(examples.size()), n_frames,
                             n_mfcc, 1);
  for (std::size_t i = 0; i < examples.size(); ++i) {
    const Eigen::MatrixXd& f = *examples[i];
    if (f.rows() != n_mfcc || f.cols() != n_frames) {
      throw ShapeMismatch("batch_from_features: inconsistent feature shapes");
    }
    for (Eigen::Index t = 0; t < n_frames; ++t) {
      for (Eigen::Index q = 0; q < n_mfcc; ++q) {
        x.at(static_cast<Eigen::Index>(i), t, q, 0) = f(q, t);
      }
    }
  }
  return x;
}

RowMat model_forward(const Tensor4& x, ModelParams& params, Mode mode,
                     RngStream* rng, ForwardCache* cache) {
  const ModelConfig& cfg = params.config;
  if (x.h != cfg.input_frames || x.w != cfg.n_mfcc || x.c != 1) {
    throw ShapeMismatch("model_forward: expected input (B, " +
                        std::to_string(cfg.input_frames) + ", " +
                        std::to_string(cfg.n_mfcc) + ", 1)");
  }
  const Eigen::Index batch = x.b;
  ForwardCache local;
  ForwardCache& cc = cache != nullptr ? *cache : local;
  cc.batch = batch;
  cc.mode = mode;

  // conv1 + ReLU
  cc.patches1 = extract_patches(x, cfg.conv1_kernel, cfg.conv1_kernel);
  RowMat z1m = cc.patches1 * params.conv1_w;
  z1m.rowwise() += params.conv1_b.transpose();
  cc.z1 = tensor_from_rowmat(z1m, batch, cfg.conv1_out_h(), cfg.conv1_out_w(),
                             cfg.conv1_filters);
  const Tensor4 a1 = relu(cc.z1);
  check_finite(a1, "conv1");

  // maxpool
  MaxPoolResult pooled = maxpool2d(a1);
  cc.pool_argmax = std::move(pooled.argmax);

  // conv2 + ReLU
  cc.patches2 = extract_patches(pooled.out, cfg.conv2_kernel, cfg.conv2_kernel);
  RowMat z2m = cc.patches2 * params.conv2_w;
  z2m.rowwise() += params.conv2_b.transpose();
  cc.z2 = tensor_from_rowmat(z2m, batch, cfg.conv2_out_h(), cfg.conv2_out_w(),
                             cfg.conv2_filters);
  cc.bn_input = relu(cc.z2);
  check_finite(cc.bn_input, "conv2");

  // batch norm
  BatchNormCache bn_cache;
  const Tensor4 bn_out = batchnorm_forward(cc.bn_input, params, mode, &bn_cache);
  cc.bn_mean = std::move(bn_cache.mean);
  cc.bn_var = std::move(bn_cache.var);
  cc.bn_inv_std = std::move(bn_cache.inv_std);
  cc.bn_xhat = std::move(bn_cache.xhat);

  // flatten
  cc.flat = Eigen::Map<const RowMat>(bn_out.data.data(), batch, cfg.flatten_size());

  // dense1 + ReLU + dropout(0.5)
  cc.d1z = dense_forward(cc.flat, params.dense1_w, params.dense1_b);
  cc.d1a = relu(cc.d1z);
  cc.d1out = dropout(cc.d1a, cfg.dropout1, mode, rng, &cc.d1mask);

  // dense2 + ReLU + dropout(0.3)
  cc.d2z = dense_forward(cc.d1out, params.dense2_w, params.dense2_b);
  cc.d2a = relu(cc.d2z);
  cc.d2out = dropout(cc.d2a, cfg.dropout2, mode, rng, &cc.d2mask);

  // output neuron + sigmoid
  RowMat oz = dense_forward(cc.d2out, params.out_w, params.out_b);
  cc.probs.resize(batch, 1);
  for (Eigen::Index i = 0; i < batch; ++i) cc.probs(i, 0) = sigmoid_stable(oz(i, 0));
  return cc.probs;
}

Eigen::VectorXd model_predict(const std::vector<const Eigen::MatrixXd*>& examples,
                              ModelParams& params, int chunk) {
  Eigen::VectorXd probs(static_cast<Eigen::Index>(examples.size()));
  for (std::size_t start = 0; start < examples.size();
       start += static_cast<std::size_t>(chunk)) {
    const std::size_t end = std::min(examples.size(), start + static_cast<std::size_t>(chunk));
    std::vector<const Eigen::MatrixXd*> slice(examples.begin() + static_cast<long>(start),
                                              examples.begin() + static_cast<long>(end));
    const Tensor4 x = batch_from_features(slice);
    const RowMat p = model_forward(x, params, Mode::kInfer, nullptr, nullptr);
    for (Eigen::Index i = 0; i < p.rows(); ++i) {
      probs[static_cast<Eigen::Index>(start) + i] = p(i, 0);
    }
  }
  return probs;
}

ModelGrads model_backward(const ModelParams& params_in, const ForwardCache& cache,
                          const RowMat& dprobs, const RegConfig& reg) {
  const ModelConfig& cfg = params_in.config;
  const Eigen::Index batch = cache.batch;
  if (dprobs.rows() != batch || dprobs.cols() != 1) {
    throw StaleCache("model_backward: upstream gradient shape does not match cache");
  }
  if (cache.flat.cols() != cfg.flatten_size() ||
      cache.d1z.cols() != cfg.dense1_units || cache.d2z.cols() != cfg.dense2_units) {
    throw StaleCache("model_backward: cache shapes do not match parameters");
  }
  const double inv_batch = 1.0 / static_cast<double>(batch);

  ModelGrads g = ModelGrads::zeros(cfg);

  // sigmoid
  RowMat dz_out(batch, 1);
  for (Eigen::Index i = 0; i < batch; ++i) {
    const double p = cache.probs(i, 0);
    dz_out(i, 0) = dprobs(i, 0) * p * (1.0 - p);
  }

  // output dense
  g.out_w = cache.d2out.transpose() * dz_out;
  g.out_b = dz_out.colwise().sum().transpose();
  RowMat d_d2out = dz_out * params_in.out_w.transpose();

  // dropout(0.3) and the dense2 activity penalty
  RowMat d_d2a = d_d2out.cwiseProduct(cache.d2mask);
  if (reg.activity != 0.0) d_d2a += 2.0 * reg.activity * inv_batch * cache.d2a;
  RowMat dz2d = d_d2a.cwiseProduct(
      (cache.d2z.array() > 0.0).cast<double>().matrix());

  g.dense2_w = cache.d1out.transpose() * dz2d;
  g.dense2_b = dz2d.colwise().sum().transpose();
  RowMat d_d1out = dz2d * params_in.dense2_w.transpose();

  // dropout(0.5) and the dense1 activity penalty
  RowMat d_d1a = d_d1out.cwiseProduct(cache.d1mask);
  if (reg.activity != 0.0) d_d1a += 2.0 * reg.activity * inv_batch * cache.d1a;
  RowMat dz1d = d_d1a.cwiseProduct(
      (cache.d1z.array() > 0.0).cast<double>().matrix());

  g.dense1_w = cache.flat.transpose() * dz1d;
  g.dense1_b = dz1d.colwise().sum().transpose();
  RowMat d_flat = dz1d * params_in.dense1_w.transpose();

  // batch norm
  const Eigen::Index channels = cfg.conv2_filters;
  const Eigen::Index bn_size = cache.bn_xhat.size();
  const Eigen::Index m = bn_size / channels;
  Eigen::Map<const Eigen::ArrayXd> d_bn_out(d_flat.data(), bn_size);

  Eigen::VectorXd sum_dxhat = Eigen::VectorXd::Zero(channels);
  Eigen::VectorXd sum_dxhat_xhat = Eigen::VectorXd::Zero(channels);
  for (Eigen::Index i = 0; i < bn_size; ++i) {
    const Eigen::Index c = i % channels;
    const double dy = d_bn_out[i];
    g.bn_beta[c] += dy;
    g.bn_gamma[c] += dy * cache.bn_xhat.data[i];
    const double dxhat = dy * params_in.bn_gamma[c];
    sum_dxhat[c] += dxhat;
    sum_dxhat_xhat[c] += dxhat * cache.bn_xhat.data[i];
  }

  Tensor4 d_a2 = Tensor4::zeros(batch, cfg.conv2_out_h(), cfg.conv2_out_w(), channels);
  if (cache.mode == Mode::kTrain) {
    const double inv_m = 1.0 / static_cast<double>(m);
    for (Eigen::Index i = 0; i < bn_size; ++i) {
      const Eigen::Index c = i % channels;
      const double dxhat = d_bn_out[i] * params_in.bn_gamma[c];
      d_a2.data[i] = cache.bn_inv_std[c] * inv_m *
                     (static_cast<double>(m) * dxhat - sum_dxhat[c] -
                      cache.bn_xhat.data[i] * sum_dxhat_xhat[c]);
    }
  } else {
    for (Eigen::Index i = 0; i < bn_size; ++i) {
      const Eigen::Index c = i % channels;
      d_a2.data[i] = d_bn_out[i] * params_in.bn_gamma[c] * cache.bn_inv_std[c];
    }
  }

  // conv2 ReLU
  Eigen::ArrayXd dz2 = d_a2.data * (cache.z2.data > 0.0).cast<double>();
  Eigen::Map<const RowMat> dz2m(dz2.data(), batch * cfg.conv2_out_h() * cfg.conv2_out_w(),
                                channels);

  g.conv2_w = cache.patches2.transpose() * dz2m;
  g.conv2_b = dz2m.colwise().sum().transpose();
  RowMat d_patches2 = dz2m * params_in.conv2_w.transpose();

  Tensor4 d_pooled = scatter_patches(d_patches2, batch, cfg.pool_out_h(),
                                     cfg.pool_out_w(), cfg.conv1_filters,
                                     cfg.conv2_kernel, cfg.conv2_kernel);

  // maxpool routes gradients to the cached argmax positions
  Tensor4 d_a1 = Tensor4::zeros(batch, cfg.conv1_out_h(), cfg.conv1_out_w(),
                                cfg.conv1_filters);
  if (cache.pool_argmax.size() != static_cast<std::size_t>(d_pooled.size())) {
    throw StaleCache("model_backward: pool argmax cache size mismatch");
  }
  for (Eigen::Index i = 0; i < d_pooled.size(); ++i) {
    d_a1.data[cache.pool_argmax[static_cast<std::size_t>(i)]] += d_pooled.data[i];
  }

  // conv1 ReLU
  Eigen::ArrayXd dz1 = d_a1.data * (cache.z1.data > 0.0).cast<double>();
  Eigen::Map<const RowMat> dz1m(dz1.data(), batch * cfg.conv1_out_h() * cfg.conv1_out_w(),
                                cfg.conv1_filters);
  g.conv1_w = cache.patches1.transpose() * dz1m;
  g.conv1_b = dz1m.colwise().sum().transpose();

  // L2 kernel/bias terms for the regularized dense layers
  if (reg.kernel != 0.0) {
    g.dense1_w += 2.0 * reg.kernel * params_in.dense1_w;
    g.dense2_w += 2.0 * reg.kernel * params_in.dense2_w;
  }
  if (reg.bias != 0.0) {
    g.dense1_b += 2.0 * reg.bias * params_in.dense1_b;
    g.dense2_b += 2.0 * reg.bias * params_in.dense2_b;
  }
  return g;
}

double l2_penalty(const ModelParams& params, const ForwardCache& cache,
                  const RegConfig& reg) {
  double penalty = 0.0;
  penalty += reg.kernel * (params.dense1_w.squaredNorm() + params.dense2_w.squaredNorm());
  penalty += reg.bias * (params.dense1_b.squaredNorm() + params.dense2_b.squaredNorm());
  if (reg.activity != 0.0 && cache.batch > 0) {
    penalty += reg.activity / static_cast<double>(cache.batch) *
               (cache.d1a.squaredNorm() + cache.d2a.squaredNorm());
  }
  return penalty;
}

namespace {

struct TensorSpec {
  std::string name;
  std::vector<Eigen::Index> shape;
  const double* data;
  Eigen::Index size;
};

std::vector<TensorSpec> checkpoint_tensors(const ModelParams& p) {
  const ModelConfig& c = p.config;
  const auto k1 = static_cast<Eigen::Index>(c.conv1_kernel);
  const auto k2 = static_cast<Eigen::Index>(c.conv2_kernel);
  return {
      {"conv1_w", {k1, k1, 1, c.conv1_filters}, p.conv1_w.data(), p.conv1_w.size()},
      {"conv1_b", {c.conv1_filters}, p.conv1_b.data(), p.conv1_b.size()},
      {"conv2_w", {k2, k2, c.conv1_filters, c.conv2_filters}, p.conv2_w.data(), p.conv2_w.size()},
      {"conv2_b", {c.conv2_filters}, p.conv2_b.data(), p.conv2_b.size()},
      {"bn_gamma", {c.conv2_filters}, p.bn_gamma.data(), p.bn_gamma.size()},
      {"bn_beta", {c.conv2_filters}, p.bn_beta.data(), p.bn_beta.size()},
      {"bn_running_mean", {c.conv2_filters}, p.bn_running_mean.data(), p.bn_running_mean.size()},
      {"bn_running_var", {c.conv2_filters}, p.bn_running_var.data(), p.bn_running_var.size()},
      {"dense1_w", {c.flatten_size(), c.dense1_units}, p.dense1_w.data(), p.dense1_w.size()},
      {"dense1_b", {c.dense1_units}, p.dense1_b.data(), p.dense1_b.size()},
      {"dense2_w", {c.dense1_units, c.dense2_units}, p.dense2_w.data(), p.dense2_w.size()},
      {"dense2_b", {c.dense2_units}, p.dense2_b.data(), p.dense2_b.size()},
      {"out_w", {c.dense2_units, 1}, p.out_w.data(), p.out_w.size()},
      {"out_b", {1}, p.out_b.data(), p.out_b.size()},
  };
}

void append_raw(std::vector<std::uint8_t>& out, const double* data,
                Eigen::Index count) {
  for (Eigen::Index i = 0; i < count; ++i) {
    std::uint64_t raw;
    std::memcpy(&raw, &data[i], 8);
    for (int b = 0; b < 8; ++b) {
      out.push_back(static_cast<std::uint8_t>((raw >> (8 * b)) & 0xff));
    }
  }
}

}  // namespace

void save_checkpoint(const std::string& path, const ModelParams& params,
                     std::uint64_t seed, int epoch) {
  const auto tensors = checkpoint_tensors(params);

  std::vector<std::uint8_t> payload;
  json layers = json::array();
  for (const auto& t : tensors) {
    layers.push_back({{"name", t.name}, {"shape", t.shape}});
    append_raw(payload, t.data, t.size);
  }

  json header;
  header["version"] = 1;
  header["layers"] = layers;
  header["input_frames"] = params.config.input_frames;
  header["n_mfcc"] = params.config.n_mfcc;
  header["conv1_filters"] = params.config.conv1_filters;
  header["conv1_kernel"] = params.config.conv1_kernel;
  header["conv2_filters"] = params.config.conv2_filters;
  header["conv2_kernel"] = params.config.conv2_kernel;
  header["dense1_units"] = params.config.dense1_units;
  header["dense2_units"] = params.config.dense2_units;
  header["dropout1"] = params.config.dropout1;
  header["dropout2"] = params.config.dropout2;
  header["bn_momentum"] = params.config.bn_momentum;
  header["bn_epsilon"] = params.config.bn_epsilon;
  header["bn_batches"] = params.bn_batches;
  header["seed"] = seed;
  header["epoch"] = epoch;
  char digest[32];
  std::snprintf(digest, sizeof(digest), "%016llx",
                static_cast<unsigned long long>(fnv1a(payload.data(), payload.size())));
  header["payload_fnv1a"] = digest;

  const std::string header_str = header.dump();
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError(path + ": cannot open for writing");
  os.write("CGHN", 4);
  auto write_u32 = [&os](std::uint32_t v) {
    std::uint8_t b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<std::uint8_t>((v >> (8 * i)) & 0xff);
    os.write(reinterpret_cast<const char*>(b), 4);
  };
  write_u32(1);
  write_u32(static_cast<std::uint32_t>(header_str.size()));
  os.write(header_str.data(), static_cast<std::streamsize>(header_str.size()));
  os.write(reinterpret_cast<const char*>(payload.data()),
           static_cast<std::streamsize>(payload.size()));
  if (!os) throw IoError(path + ": short write");
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError(path + ": cannot open");
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "CGHN", 4) != 0) {
    throw MalformedContainer(path + ": bad checkpoint magic");
  }
  auto read_u32 = [&is, &path]() {
    std::uint8_t b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    if (!is) throw MalformedContainer(path + ": truncated checkpoint");
    return static_cast<std::uint32_t>(b[0]) | static_cast<std::uint32_t>(b[1]) << 8 |
           static_cast<std::uint32_t>(b[2]) << 16 | static_cast<std::uint32_t>(b[3]) << 24;
  };
  const std::uint32_t version = read_u32();
  if (version != 1) {
    throw UnsupportedEncoding(path + ": checkpoint version " + std::to_string(version));
  }
  const std::uint32_t header_len = read_u32();
  std::string header_str(header_len, '\0');
  is.read(header_str.data(), header_len);
  if (!is) throw MalformedContainer(path + ": truncated header");
  json header;
  try {
    header = json::parse(header_str);
  } catch (const json::exception& e) {
    throw MalformedContainer(path + ": bad header JSON: " + e.what());
  }

  ModelConfig config;
  config.input_frames = header.at("input_frames").get<int>();
  config.n_mfcc = header.at("n_mfcc").get<int>();
  config.conv1_filters = header.at("conv1_filters").get<int>();
  config.conv1_kernel = header.at("conv1_kernel").get<int>();
  config.conv2_filters = header.at("conv2_filters").get<int>();
  config.conv2_kernel = header.at("conv2_kernel").get<int>();
  config.dense1_units = header.at("dense1_units").get<int>();
  config.dense2_units = header.at("dense2_units").get<int>();
  config.dropout1 = header.at("dropout1").get<double>();
  config.dropout2 = header.at("dropout2").get<double>();
  config.bn_momentum = header.at("bn_momentum").get<double>();
  config.bn_epsilon = header.at("bn_epsilon").get<double>();

  Checkpoint ckpt;
  RngStream dummy(0);
  ckpt.params = ModelParams::init(config, dummy);
  ckpt.params.bn_batches = header.at("bn_batches").get<std::int64_t>();
  ckpt.seed = header.at("seed").get<std::uint64_t>();
  ckpt.epoch = header.at("epoch").get<int>();

  std::vector<std::uint8_t> payload((std::istreambuf_iterator<char>(is)),
                                    std::istreambuf_iterator<char>());
  const auto tensors = checkpoint_tensors(ckpt.params);
  std::size_t expected = 0;
  for (const auto& t : tensors) expected += static_cast<std::size_t>(t.size) * 8;
  if (payload.size() != expected) {
    throw MalformedContainer(path + ": payload has " + std::to_string(payload.size()) +
                             " bytes, expected " + std::to_string(expected));
  }
  char digest[32];
  std::snprintf(digest, sizeof(digest), "%016llx",
                static_cast<unsigned long long>(fnv1a(payload.data(), payload.size())));
  if (header.at("payload_fnv1a").get<std::string>() != digest) {
    throw ChecksumMismatch(path + ": checkpoint payload checksum mismatch");
  }

  std::size_t off = 0;
  for (const auto& t : tensors) {
    auto* dst = const_cast<double*>(t.data);
    for (Eigen::Index i = 0; i < t.size; ++i) {
      std::uint64_t raw = 0;
      for (int b = 0; b < 8; ++b) {
        raw |= static_cast<std::uint64_t>(payload[off++]) << (8 * b);
      }
      std::memcpy(&dst[i], &raw, 8);
    }
  }
  return ckpt;
}

}  // namespace coughnet
