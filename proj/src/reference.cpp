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
#include "dfno/reference.hpp"

#include <cmath>
#include <numbers>

#include "dfno/fft.hpp"

namespace dfno {

namespace {

const ParamGroup& group(const std::vector<ParamGroup>& params, const std::string& name) {
  for (const auto& g : params)
    if (g.name == name) return g;
  fail(Errc::invalid_argument, "reference model: missing parameter group " + name);
}

std::vector<Complex> complex_values(const ParamGroup& g) {
  std::vector<Complex> out(g.values.size() / 2);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = {g.values[2 * i], g.values[2 * i + 1]};
  return out;
}

struct Extents {
  Index outer = 1, inner = 1;
};

Extents split(const Shape& shape, std::size_t dim) {
  Extents e;
  for (std::size_t d = 0; d < dim; ++d) e.outer *= shape[d];
  for (std::size_t d = dim + 1; d < shape.size(); ++d) e.inner *= shape[d];
  return e;
}

std::vector<double> dense_affine(const std::vector<double>& x, const Shape& shape,
                                 std::size_t dim, const std::vector<double>& W,
                                 const std::vector<double>* b, Index out) {
  const Index in = shape[dim];
  auto [outer, inner] = split(shape, dim);
  std::vector<double> y(static_cast<std::size_t>(outer * out * inner), 0.0);
  for (Index o = 0; o < outer; ++o)
    for (Index j = 0; j < out; ++j)
      for (Index i = 0; i < inner; ++i) {
        double s = b ? (*b)[j] : 0.0;
        for (Index k = 0; k < in; ++k) s += W[j * in + k] * x[(o * in + k) * inner + i];
        y[(o * out + j) * inner + i] = s;
      }
  return y;
}

std::vector<double> dense_affine_adj(const std::vector<double>& x, const Shape& shape,
                                     std::size_t dim, const std::vector<double>& W, Index out,
                                     const std::vector<double>& g, std::vector<double>& dW,
                                     std::vector<double>* db) {
  const Index in = shape[dim];
  auto [outer, inner] = split(shape, dim);
  std::vector<double> dx(x.size(), 0.0);
  for (Index o = 0; o < outer; ++o)
    for (Index j = 0; j < out; ++j)
      for (Index i = 0; i < inner; ++i) {
        const double gj = g[(o * out + j) * inner + i];
        if (db) (*db)[j] += gj;
        for (Index k = 0; k < in; ++k) {
          dx[(o * in + k) * inner + i] += W[j * in + k] * gj;
          dW[j * in + k] += gj * x[(o * in + k) * inner + i];
        }
      }
  return dx;
}

Shape with(Shape s, std::size_t dim, Index value) {
  s[dim] = value;
  return s;
}

struct ModeGrid {
  std::vector<Index> field;   // flat offset of each retained mode in the field
  std::vector<Index> mirror;  // dense index of the conjugate partner, -1 if not retained
  Index field_volume = 1;
};

ModeGrid mode_grid(const Shape& shape, std::span<const Index> modes) {
  const std::size_t r = modes.size();
  const std::size_t lead = shape.size() - r;
  ModeGrid g;
  for (std::size_t d = 0; d < r; ++d) g.field_volume *= shape[lead + d];
  Index count = 1;
  for (Index m : modes) count *= 2 * m;
  for (Index idx = 0; idx < count; ++idx) {
    Index rem = idx, field = 0, stride = 1, mirror = 0, mstride = 1;
    bool paired = true;
    for (std::size_t d = r; d-- > 0;) {
      const Index n = shape[lead + d], m = modes[d];
      Index pos = rem % (2 * m);
      rem /= 2 * m;
      Index k = pos < m ? pos : n - 2 * m + pos;
      field += k * stride;
      stride *= n;
      Index neg = (n - k) % n;
      if (neg < m) mirror += neg * mstride;
      else if (neg >= n - m) mirror += (neg - (n - 2 * m)) * mstride;
      else paired = false;
      mstride *= 2 * m;
    }
    g.field.push_back(field);
    g.mirror.push_back(paired ? mirror : -1);
  }
  return g;
}

std::vector<std::size_t> field_dims(const Shape& shape, std::size_t r) {
  std::vector<std::size_t> dims;
  for (std::size_t d = shape.size() - r; d < shape.size(); ++d) dims.push_back(d);
  return dims;
}

std::vector<Complex> transform(std::span<const double> x, const Shape& shape, std::size_t r) {
  std::vector<Complex> X(x.begin(), x.end());
  auto dims = field_dims(shape, r);
  local_fft(X, shape, dims, Direction::forward);
  return X;
}

// Y[b, p, k] = sum_q M[k, p, q] X[b, q, k] (or with M^H), zero off the retained set.
std::vector<Complex> apply_weights(const std::vector<Complex>& X, Index batch, Index in_c,
                                   Index out_c, const ModeGrid& grid,
                                   const std::vector<Complex>& R, int c_out, int c_in,
                                   bool adjoint) {
  const Index V = grid.field_volume;
  std::vector<Complex> Y(static_cast<std::size_t>(batch * out_c * V));
  for (Index b = 0; b < batch; ++b)
    for (std::size_t i = 0; i < grid.field.size(); ++i) {
      const Complex* M = R.data() + i * c_out * c_in;
      const Index f = grid.field[i];
      for (Index p = 0; p < out_c; ++p) {
        Complex s = 0.0;
        for (Index q = 0; q < in_c; ++q) {
          Complex w = adjoint ? std::conj(M[q * c_in + p]) : M[p * c_in + q];
          s += w * X[(b * in_c + q) * V + f];
        }
        Y[(b * out_c + p) * V + f] = s;
      }
    }
  return Y;
}

std::vector<double> inverse_real(std::vector<Complex> Y, const Shape& shape, std::size_t r) {
  auto dims = field_dims(shape, r);
  local_fft(Y, shape, dims, Direction::inverse);
  std::vector<double> y(Y.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = Y[i].real();
  return y;
}

double act(double z, Activation a) {
  if (a == Activation::relu) return std::max(z, 0.0);
  if (a == Activation::gelu) return 0.5 * z * (1.0 + std::erf(z / std::numbers::sqrt2));
  return z;
}

double act_prime(double z, Activation a) {
  if (a == Activation::relu) return z > 0.0 ? 1.0 : 0.0;
  if (a == Activation::gelu)
    return 0.5 * (1.0 + std::erf(z / std::numbers::sqrt2)) +
           z * std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi);
  return 1.0;
}

struct BlockState {
  std::vector<double> input, pre;
  std::vector<Complex> spectrum;
};

struct ForwardState {
  std::vector<double> a, lifted_t, lifted_c, projected_in, out;
  std::vector<BlockState> blocks;
};

ForwardState run_forward(const FnoConfig& c, const std::vector<ParamGroup>& params,
                         std::span<const double> a) {
  validate(c);
  const Shape in = input_shape(c);
  require(static_cast<Index>(a.size()) == volume(in), "reference model: input size mismatch");
  const std::size_t nd = tensor_ndim(c), t = nd - 1, r = nd - 2;
  const Index w = c.width;
  auto modes = effective_modes(c);

  ForwardState s;
  s.a.assign(a.begin(), a.end());
  s.lifted_t = dense_affine(s.a, in, t, group(params, "time_lift.weight").values,
                            &group(params, "time_lift.bias").values, c.out_timesteps);
  Shape shape_t = with(in, t, c.out_timesteps);
  s.lifted_c = dense_affine(s.lifted_t, shape_t, 1, group(params, "channel_lift.weight").values,
                            &group(params, "channel_lift.bias").values, w);
  const Shape lifted = lifted_shape(c);
  const ModeGrid grid = mode_grid(lifted, modes);

  std::vector<double> v = s.lifted_c;
  for (int k = 0; k < c.num_blocks; ++k) {
    const std::string name = "block" + std::to_string(k);
    BlockState b;
    b.input = v;
    b.pre = dense_affine(v, lifted, 1, group(params, name + ".weight").values, nullptr, w);
    b.spectrum = transform(v, lifted, r);
    auto R = complex_values(group(params, name + ".spectral"));
    auto spec = inverse_real(apply_weights(b.spectrum, c.batch, w, w, grid, R, c.width, c.width,
                                           false),
                             lifted, r);
    for (std::size_t i = 0; i < v.size(); ++i) {
      b.pre[i] += spec[i];
      v[i] = act(b.pre[i], c.activation);
    }
    s.blocks.push_back(std::move(b));
  }
  s.projected_in = v;
  s.out = dense_affine(v, lifted, 1, group(params, "projection.weight").values, nullptr,
                       c.out_channels);
  return s;
}

}  // namespace

std::vector<double> reference_spectral_conv(const Shape& shape, std::span<const Index> modes,
                                            int c_out, std::span<const Complex> weights,
                                            std::span<const double> x) {
  const std::size_t r = modes.size();
  require(shape.size() == r + 2, "reference spectral conv: shape must be (batch, channel, field...)");
  const int c_in = static_cast<int>(shape[1]);
  const ModeGrid grid = mode_grid(shape, modes);
  std::vector<Complex> R(weights.begin(), weights.end());
  require(R.size() == grid.field.size() * c_out * c_in, "reference spectral conv: weight size");
  auto X = transform(x, shape, r);
  auto Y = apply_weights(X, shape[0], c_in, c_out, grid, R, c_out, c_in, false);
  return inverse_real(std::move(Y), with(shape, 1, c_out), r);
}

std::vector<double> reference_forward(const FnoConfig& config,
                                      const std::vector<ParamGroup>& params,
                                      std::span<const double> a) {
  return run_forward(config, params, a).out;
}

ReferenceGradients reference_backward(const FnoConfig& c, const std::vector<ParamGroup>& params,
                                      std::span<const double> a,
                                      std::span<const double> target) {
  ForwardState s = run_forward(c, params, a);
  require(target.size() == s.out.size(), "reference model: target size mismatch");
  const std::size_t nd = tensor_ndim(c), t = nd - 1, r = nd - 2;
  const Index w = c.width;
  const Shape lifted = lifted_shape(c);
  const ModeGrid grid = mode_grid(lifted, effective_modes(c));

  ReferenceGradients out;
  out.params = params;
  for (auto& g : out.params) std::fill(g.values.begin(), g.values.end(), 0.0);
  auto grad = [&](const std::string& name) -> std::vector<double>& {
    for (auto& g : out.params)
      if (g.name == name) return g.values;
    fail(Errc::invalid_argument, "reference model: missing parameter group " + name);
  };

  double d2 = 0.0, t2 = 0.0;
  for (std::size_t i = 0; i < target.size(); ++i) {
    d2 += (s.out[i] - target[i]) * (s.out[i] - target[i]);
    t2 += target[i] * target[i];
  }
  require(t2 > 0.0, "reference model: zero target");
  out.loss = std::sqrt(d2) / std::sqrt(t2);
  std::vector<double> g(s.out.size(), 0.0);
  if (d2 > 0.0)
    for (std::size_t i = 0; i < g.size(); ++i)
      g[i] = (s.out[i] - target[i]) / (std::sqrt(d2) * std::sqrt(t2));

  g = dense_affine_adj(s.projected_in, lifted, 1, group(params, "projection.weight").values,
                       c.out_channels, g, grad("projection.weight"), nullptr);
  for (int k = c.num_blocks - 1; k >= 0; --k) {
    const std::string name = "block" + std::to_string(k);
    const BlockState& b = s.blocks[static_cast<std::size_t>(k)];
    std::vector<double> dz(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) dz[i] = g[i] * act_prime(b.pre[i], c.activation);
    g = dense_affine_adj(b.input, lifted, 1, group(params, name + ".weight").values, w, dz,
                         grad(name + ".weight"), nullptr);

    auto R = complex_values(group(params, name + ".spectral"));
    auto G = transform(dz, lifted, r);
    auto& dR = grad(name + ".spectral");
    const Index V = grid.field_volume;
    for (Index bt = 0; bt < c.batch; ++bt)
      for (std::size_t i = 0; i < grid.field.size(); ++i)
        for (Index p = 0; p < w; ++p)
          for (Index q = 0; q < w; ++q) {
            Complex v = G[(bt * w + p) * V + grid.field[i]] *
                        std::conj(b.spectrum[(bt * w + q) * V + grid.field[i]]);
            std::size_t e = (i * w * w + p * w + q) * 2;
            dR[e] += v.real();
            dR[e + 1] += v.imag();
          }
    // Frozen modes stay zero; self-conjugate modes stay real.
    for (std::size_t i = 0; i < grid.field.size(); ++i)
      for (Index e = 0; e < w * w; ++e) {
        std::size_t at = (i * w * w + e) * 2;
        if (grid.mirror[i] < 0) dR[at] = 0.0;
        if (grid.mirror[i] < 0 || grid.mirror[i] == static_cast<Index>(i)) dR[at + 1] = 0.0;
      }
    auto back = inverse_real(apply_weights(G, c.batch, w, w, grid, R, c.width, c.width, true),
                             lifted, r);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += back[i];
  }
  Shape shape_t = with(input_shape(c), t, c.out_timesteps);
  g = dense_affine_adj(s.lifted_t, shape_t, 1, group(params, "channel_lift.weight").values, w, g,
                       grad("channel_lift.weight"), &grad("channel_lift.bias"));
  out.input = dense_affine_adj(s.a, input_shape(c), t, group(params, "time_lift.weight").values,
                               c.out_timesteps, g, grad("time_lift.weight"),
                               &grad("time_lift.bias"));
  return out;
}

}  // namespace dfno
