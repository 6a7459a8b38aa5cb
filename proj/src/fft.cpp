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

#include "coughnet/fft.hpp"

#include <cmath>

#include "coughnet/errors.hpp"

namespace coughnet {

Fft::Fft(int n) : n_(n) {
  if (n < 2 || (n & (n - 1)) != 0) {
    throw DomainError("Fft: size must be a power of two >= 2, got " +
                      std::to_string(n));
  }
  log2n_ = 0;
  while ((1 << log2n_) < n) ++log2n_;

  bit_reverse_.resize(n);
  for (int i = 0; i < n; ++i) {
    int rev = 0;
    for (int b = 0; b < log2n_; ++b) rev |= ((i >> b) & 1) << (log2n_ - 1 - b);
    bit_reverse_[i] = rev;
  }

  twiddle_.resize(n / 2);
  twiddle_inv_.resize(n / 2);
  for (int k = 0; k < n / 2; ++k) {
    const double ang = -2.0 * M_PI * k / n;
    twiddle_[k] = {std::cos(ang), std::sin(ang)};
    twiddle_inv_[k] = std::conj(twiddle_[k]);
  }
}

void Fft::transform(std::complex<double>* data, bool invert) const {
  for (int i = 0; i < n_; ++i) {
    const int j = bit_reverse_[i];
    if (i < j) std::swap(data[i], data[j]);
  }
  const auto& tw = invert ? twiddle_inv_ : twiddle_;
  for (int len = 2; len <= n_; len <<= 1) {
    const int half = len >> 1;
    const int stride = n_ / len;
    for (int start = 0; start < n_; start += len) {
      for (int k = 0; k < half; ++k) {
        const std::complex<double> w = tw[static_cast<std::size_t>(k) * stride];
        std::complex<double>& a = data[start + k];
        std::complex<double>& b = data[start + k + half];
        const std::complex<double> t = b * w;
        b = a - t;
        a += t;
      }
    }
  }
}

void Fft::forward(std::complex<double>* data) const { transform(data, false); }

void Fft::inverse(std::complex<double>* data) const {
  transform(data, true);
  const double scale = 1.0 / n_;
  for (int i = 0; i < n_; ++i) data[i] *= scale;
}

Eigen::VectorXcd Fft::forward_real(
    const Eigen::Ref<const Eigen::VectorXd>& x) const {
  if (x.size() != n_) throw ShapeMismatch("Fft::forward_real: length mismatch");
  std::vector<std::complex<double>> buf(static_cast<std::size_t>(n_));
  for (int i = 0; i < n_; ++i) buf[i] = {x[i], 0.0};
  forward(buf.data());
  Eigen::VectorXcd out(n_ / 2 + 1);
  for (int k = 0; k <= n_ / 2; ++k) out[k] = buf[k];
  return out;
}

Eigen::VectorXd Fft::inverse_real(
    const Eigen::Ref<const Eigen::VectorXcd>& spectrum) const {
  if (spectrum.size() != n_ / 2 + 1) {
    throw ShapeMismatch("Fft::inverse_real: expected n/2+1 bins");
  }
  std::vector<std::complex<double>> buf(static_cast<std::size_t>(n_));
  for (int k = 0; k <= n_ / 2; ++k) buf[k] = spectrum[k];
  for (int k = 1; k < n_ / 2; ++k) buf[n_ - k] = std::conj(spectrum[k]);
  inverse(buf.data());
  Eigen::VectorXd out(n_);
  for (int i = 0; i < n_; ++i) out[i] = buf[i].real();
  return out;
}

Eigen::VectorXcd dft_direct(const Eigen::Ref<const Eigen::VectorXd>& x) {
  const auto n = x.size();
  Eigen::VectorXcd out(n);
  for (Eigen::Index k = 0; k < n; ++k) {
    std::complex<double> acc(0.0, 0.0);
    for (Eigen::Index t = 0; t < n; ++t) {
      const double ang = -2.0 * M_PI * static_cast<double>(k) *
                         static_cast<double>(t) / static_cast<double>(n);
      acc += x[t] * std::complex<double>(std::cos(ang), std::sin(ang));
    }
    out[k] = acc;
  }
  return out;
}

}  // namespace coughnet
