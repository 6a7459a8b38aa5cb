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

#ifndef COUGHNET_FFT_HPP_
#define COUGHNET_FFT_HPP_

#include <Eigen/Core>
#include <complex>
#include <vector>

namespace coughnet {

// Iterative radix-2 Cooley-Tukey transform with a precomputed twiddle table.
// Size must be a power of two. Instances are immutable after construction
// and safe to share across threads.
class Fft {
 public:
  explicit Fft(int n);

  int size() const { return n_; }

  // In-place transforms over n() complex values.
  void forward(std::complex<double>* data) const;
  void inverse(std::complex<double>* data) const;  // includes the 1/n scale

  // Real input -> one-sided spectrum of n/2 + 1 bins.
  Eigen::VectorXcd forward_real(const Eigen::Ref<const Eigen::VectorXd>& x) const;

  // One-sided spectrum of n/2 + 1 bins -> real signal of n samples.
  Eigen::VectorXd inverse_real(const Eigen::Ref<const Eigen::VectorXcd>& spectrum) const;

 private:
  void transform(std::complex<double>* data, bool invert) const;

  int n_;
  int log2n_;
  std::vector<int> bit_reverse_;
  std::vector<std::complex<double>> twiddle_;      // forward e^{-2pi i k / n}
  std::vector<std::complex<double>> twiddle_inv_;  // inverse
};

// Direct O(n^2) discrete Fourier transform; the independence oracle used by
// tests to certify the fast path. Never called from production code.
Eigen::VectorXcd dft_direct(const Eigen::Ref<const Eigen::VectorXd>& x);

}  // namespace coughnet

#endif  // COUGHNET_FFT_HPP_
