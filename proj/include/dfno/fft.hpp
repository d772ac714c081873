// Copyright 2026 The dfno Authors
// SPDX-License-Identifier: Apache-2.0
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
//
#pragma once

// Sequential FFTs with orthonormal (1/sqrt(n)) scaling. Power-of-two lengths
// use an iterative radix-2 kernel; every other length goes through a
// Bluestein chirp-z convolution on a power-of-two core.

#include <complex>
#include <memory>
#include <span>
#include <vector>

#include "dfno/collectives.hpp"

namespace dfno {

enum class Direction { forward, inverse };

class Fft1d {
 public:
  explicit Fft1d(Index n);

  Index size() const { return n_; }
  bool uses_bluestein() const { return !chirp_.empty(); }
  bool uses_direct() const { return !direct_.empty(); }

  static constexpr Index kDirectLimit = 12;

  /// In-place unitary DFT of `data` (length n).
  void transform(Complex* data, Direction dir) const;

 private:
  void pow2_unscaled(Complex* data, Index m, bool inverse) const;

  Index n_;
  Index m_;                       // radix-2 core length
  std::vector<Complex> twiddle_;  // exp(-2 pi i k / m_), k < m_/2
  std::vector<Index> bitrev_;
  std::vector<Complex> chirp_;       // exp(-i pi k^2 / n), k < n
  std::vector<Complex> chirp_fft_;   // unscaled FFT of the conjugate chirp filter
  std::vector<Complex> direct_;      // dense DFT matrix for short non-power-of-two n
  mutable std::vector<Complex> work_;
};

/// Cached per-thread plan for length n.
const Fft1d& fft_plan(Index n);

/// Unitary DFT along each of `dims` of a row-major block of shape
/// `local_shape`. Forward passes visit dims from last to first, inverse passes
/// from first to last, so a multi-stage distributed transform performs the
/// same arithmetic as a single-stage one.
void local_fft(std::span<Complex> data, std::span<const Index> local_shape,
               std::span<const std::size_t> dims, Direction dir);

/// Same, on a partitioned tensor; every transformed dim must be whole on
/// this worker (partition size 1), otherwise Errc::invalid_argument.
void local_fft(ComplexTensor& tensor, std::span<const std::size_t> dims, Direction dir);

}  // namespace dfno
