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
#include "dfno/fft.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <unordered_map>

namespace dfno {

namespace {

Index next_pow2(Index n) {
  Index m = 1;
  while (m < n) m <<= 1;
  return m;
}

bool is_pow2(Index n) { return n > 0 && (n & (n - 1)) == 0; }

}  // namespace

Fft1d::Fft1d(Index n) : n_(n) {
  require(n >= 1, "fft: length must be >= 1");
  if (!is_pow2(n) && n <= kDirectLimit) {
    // Short odd-sized lines: a dense DFT is cheaper and more accurate than Bluestein.
    direct_.resize(static_cast<std::size_t>(n * n));
    for (Index k = 0; k < n; ++k)
      for (Index j = 0; j < n; ++j) {
        double a = -2.0 * std::numbers::pi * static_cast<double>((j * k) % n) /
                   static_cast<double>(n);
        direct_[k * n + j] = {std::cos(a), std::sin(a)};
      }
    m_ = n;
    work_.resize(static_cast<std::size_t>(n));
    return;
  }
  m_ = is_pow2(n) ? n : next_pow2(2 * n - 1);

  twiddle_.resize(static_cast<std::size_t>(m_ / 2));
  for (Index k = 0; k < m_ / 2; ++k) {
    double a = -2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(m_);
    twiddle_[k] = {std::cos(a), std::sin(a)};
  }
  bitrev_.resize(static_cast<std::size_t>(m_));
  int bits = 0;
  while ((Index{1} << bits) < m_) ++bits;
  for (Index i = 0; i < m_; ++i) {
    Index r = 0;
    for (int b = 0; b < bits; ++b)
      if (i & (Index{1} << b)) r |= Index{1} << (bits - 1 - b);
    bitrev_[i] = r;
  }

  if (is_pow2(n)) return;

  chirp_.resize(static_cast<std::size_t>(n));
  for (Index k = 0; k < n; ++k) {
    // k^2 mod 2n keeps the angle argument small
    Index k2 = (k * k) % (2 * n);
    double a = -std::numbers::pi * static_cast<double>(k2) / static_cast<double>(n);
    chirp_[k] = {std::cos(a), std::sin(a)};
  }
  chirp_fft_.assign(static_cast<std::size_t>(m_), Complex{});
  chirp_fft_[0] = std::conj(chirp_[0]);
  for (Index k = 1; k < n; ++k) {
    chirp_fft_[k] = std::conj(chirp_[k]);
    chirp_fft_[m_ - k] = std::conj(chirp_[k]);
  }
  pow2_unscaled(chirp_fft_.data(), m_, false);
  work_.resize(static_cast<std::size_t>(m_));
}

// Complex arithmetic is spelled out on doubles: std::complex multiplication
// carries NaN-recovery branches that defeat the optimizer in these loops.
void Fft1d::pow2_unscaled(Complex* data, Index m, bool inverse) const {
  for (Index i = 0; i < m; ++i) {
    Index j = bitrev_[i];
    if (i < j) std::swap(data[i], data[j]);
  }
  double* a = reinterpret_cast<double*>(data);
  const double* tw = reinterpret_cast<const double*>(twiddle_.data());
  const double sign = inverse ? -1.0 : 1.0;
  for (Index len = 2; len <= m; len <<= 1) {
    const Index half = len / 2;
    const Index step = m / len;
    for (Index start = 0; start < m; start += len) {
      double* lo = a + 2 * start;
      double* hi = a + 2 * (start + half);
      for (Index k = 0; k < half; ++k) {
        const double wr = tw[2 * k * step];
        const double wi = sign * tw[2 * k * step + 1];
        const double xr = hi[2 * k], xi = hi[2 * k + 1];
        const double vr = xr * wr - xi * wi;
        const double vi = xr * wi + xi * wr;
        const double ur = lo[2 * k], ui = lo[2 * k + 1];
        lo[2 * k] = ur + vr;
        lo[2 * k + 1] = ui + vi;
        hi[2 * k] = ur - vr;
        hi[2 * k + 1] = ui - vi;
      }
    }
  }
}

namespace {

inline Complex mul(Complex a, Complex b) {
  return {a.real() * b.real() - a.imag() * b.imag(), a.real() * b.imag() + a.imag() * b.real()};
}

}  // namespace

void Fft1d::transform(Complex* data, Direction dir) const {
  const double scale = 1.0 / std::sqrt(static_cast<double>(n_));
  const bool inverse = dir == Direction::inverse;
  if (n_ == 1) return;
  if (!direct_.empty()) {
    const double sign = inverse ? -1.0 : 1.0;
    for (Index k = 0; k < n_; ++k) {
      const Complex* row = direct_.data() + k * n_;
      double sr = 0.0, si = 0.0;
      for (Index j = 0; j < n_; ++j) {
        const double wr = row[j].real(), wi = sign * row[j].imag();
        sr += data[j].real() * wr - data[j].imag() * wi;
        si += data[j].real() * wi + data[j].imag() * wr;
      }
      work_[k] = {sr * scale, si * scale};
    }
    std::copy_n(work_.data(), n_, data);
    return;
  }
  if (!uses_bluestein()) {
    pow2_unscaled(data, n_, inverse);
    for (Index i = 0; i < n_; ++i) data[i] = {data[i].real() * scale, data[i].imag() * scale};
    return;
  }
  // The inverse DFT is conj(F(conj(x))).
  Complex* w = work_.data();
  for (Index k = 0; k < n_; ++k) w[k] = mul(inverse ? std::conj(data[k]) : data[k], chirp_[k]);
  for (Index k = n_; k < m_; ++k) w[k] = Complex{};
  pow2_unscaled(w, m_, false);
  for (Index k = 0; k < m_; ++k) w[k] = mul(w[k], chirp_fft_[k]);
  pow2_unscaled(w, m_, true);
  const double norm = scale / static_cast<double>(m_);
  for (Index k = 0; k < n_; ++k) {
    Complex y = mul(w[k], chirp_[k]);
    y = {y.real() * norm, y.imag() * norm};
    data[k] = inverse ? std::conj(y) : y;
  }
}

const Fft1d& fft_plan(Index n) {
  thread_local std::unordered_map<Index, std::unique_ptr<Fft1d>> cache;
  auto& slot = cache[n];
  if (!slot) slot = std::make_unique<Fft1d>(n);
  return *slot;
}

void local_fft(std::span<Complex> data, std::span<const Index> shape,
               std::span<const std::size_t> dims, Direction dir) {
  require(static_cast<Index>(data.size()) == volume(shape), "local_fft: buffer/shape mismatch");
  for (std::size_t d : dims) require(d < shape.size(), "local_fft: dimension out of range");
  if (data.empty()) return;

  std::vector<std::size_t> order(dims.begin(), dims.end());
  std::sort(order.begin(), order.end());
  if (dir == Direction::forward) std::reverse(order.begin(), order.end());

  std::vector<Complex> line;
  for (std::size_t d : order) {
    const Index n = shape[d];
    if (n == 1) continue;
    const Fft1d& plan = fft_plan(n);
    Index inner = 1;
    for (std::size_t e = d + 1; e < shape.size(); ++e) inner *= shape[e];
    const Index outer = static_cast<Index>(data.size()) / (inner * n);
    if (inner == 1) {
      for (Index o = 0; o < outer; ++o) plan.transform(data.data() + o * n, dir);
      continue;
    }
    // Gather a few neighbouring lines at a time so reads stay contiguous.
    constexpr Index kBlock = 8;
    line.resize(static_cast<std::size_t>(n * kBlock));
    for (Index o = 0; o < outer; ++o) {
      Complex* base = data.data() + o * n * inner;
      for (Index i0 = 0; i0 < inner; i0 += kBlock) {
        const Index nb = std::min(kBlock, inner - i0);
        for (Index k = 0; k < n; ++k)
          for (Index b = 0; b < nb; ++b) line[b * n + k] = base[k * inner + i0 + b];
        for (Index b = 0; b < nb; ++b) plan.transform(line.data() + b * n, dir);
        for (Index k = 0; k < n; ++k)
          for (Index b = 0; b < nb; ++b) base[k * inner + i0 + b] = line[b * n + k];
      }
    }
  }
}

void local_fft(ComplexTensor& tensor, std::span<const std::size_t> dims, Direction dir) {
  for (std::size_t d : dims) {
    require(d < tensor.shape().size(), "local_fft: dimension out of range");
    if (tensor.partition().dims()[d] != 1)
      fail(Errc::invalid_argument,
           "local_fft: dimension " + std::to_string(d) + " is distributed over " +
               std::to_string(tensor.partition().dims()[d]) + " workers");
  }
  Shape ext = tensor.local_shape();
  local_fft(tensor.local(), ext, dims, dir);
}

}  // namespace dfno
