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
#include "dfno/model.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace dfno {

namespace {

Shape dims_as_shape(const Partition& p) { return Shape(p.dims().begin(), p.dims().end()); }

double uniform01(std::uint64_t key) { return 0.5 * (uniform_from_key(key) + 1.0); }

ComplexTensor to_complex(const RealTensor& x) {
  std::vector<Complex> data(x.data().begin(), x.data().end());
  return ComplexTensor(x.shape(), x.partition(), x.rank(), x.box(), std::move(data));
}

RealTensor real_part(const ComplexTensor& x) {
  std::vector<double> data(x.size());
  for (std::size_t i = 0; i < data.size(); ++i) data[i] = x.data()[i].real();
  return RealTensor(x.shape(), x.partition(), x.rank(), x.box(), std::move(data));
}

void add_into(std::vector<double>& acc, const std::vector<double>& v) {
  if (acc.size() != v.size()) fail(Errc::internal, "gradient accumulation size mismatch");
  for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += v[i];
}

double activate(double z, Activation a) {
  switch (a) {
    case Activation::relu: return z > 0.0 ? z : 0.0;
    case Activation::gelu: return 0.5 * z * (1.0 + std::erf(z / std::numbers::sqrt2));
    case Activation::identity: return z;
  }
  return z;
}

double activate_grad(double z, Activation a) {
  switch (a) {
    case Activation::relu: return z > 0.0 ? 1.0 : 0.0;
    case Activation::gelu: {
      double cdf = 0.5 * (1.0 + std::erf(z / std::numbers::sqrt2));
      double pdf = std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi);
      return cdf + z * pdf;
    }
    case Activation::identity: return 1.0;
  }
  return 1.0;
}

// y[o, j, i] = sum_k W[j, k] x[o, k, i] + b[j] along `dim`.
RealTensor affine_apply(const RealTensor& x, const double* W, const double* b, Index out,
                        Index in, std::size_t dim) {
  Shape shape = x.shape();
  shape[dim] = out;
  RealTensor y(shape, x.partition(), x.rank());
  if (!x.active() || x.size() == 0) return y;
  Shape local = x.local_shape();
  Index outer = 1, inner = 1;
  for (std::size_t d = 0; d < dim; ++d) outer *= local[d];
  for (std::size_t d = dim + 1; d < local.size(); ++d) inner *= local[d];
  const double* xs = x.data().data();
  double* ys = y.data().data();
  for (Index o = 0; o < outer; ++o)
    for (Index j = 0; j < out; ++j) {
      double* yr = ys + (o * out + j) * inner;
      std::fill(yr, yr + inner, b ? b[j] : 0.0);
      for (Index k = 0; k < in; ++k) {
        const double w = W[j * in + k];
        const double* xr = xs + (o * in + k) * inner;
        for (Index i = 0; i < inner; ++i) yr[i] += w * xr[i];
      }
    }
  return y;
}

// Local adjoint of affine_apply; parameter gradients are accumulated into dW, db.
RealTensor affine_adjoint(const RealTensor& x, const RealTensor& g, const double* W, Index out,
                          Index in, std::size_t dim, double* dW, double* db) {
  RealTensor dx = x.zeros_like();
  if (!x.active() || x.size() == 0) return dx;
  Shape local = x.local_shape();
  Index outer = 1, inner = 1;
  for (std::size_t d = 0; d < dim; ++d) outer *= local[d];
  for (std::size_t d = dim + 1; d < local.size(); ++d) inner *= local[d];
  const double* xs = x.data().data();
  const double* gs = g.data().data();
  double* dxs = dx.data().data();
  for (Index o = 0; o < outer; ++o)
    for (Index j = 0; j < out; ++j) {
      const double* gr = gs + (o * out + j) * inner;
      if (db) {
        double s = 0.0;
        for (Index i = 0; i < inner; ++i) s += gr[i];
        db[j] += s;
      }
      for (Index k = 0; k < in; ++k) {
        const double w = W[j * in + k];
        const double* xr = xs + (o * in + k) * inner;
        double* dxr = dxs + (o * in + k) * inner;
        double s = 0.0;
        for (Index i = 0; i < inner; ++i) {
          dxr[i] += w * gr[i];
          s += gr[i] * xr[i];
        }
        dW[j * in + k] += s;
      }
    }
  return dx;
}

void check_affine_input(const RealTensor& x, const AffineParams& p, std::size_t dim,
                        const char* stage) {
  if (dim >= x.shape().size())
    fail(Errc::invalid_argument, std::string(stage) + ": acting dimension out of range");
  if (x.partition().dims()[dim] != 1)
    fail(Errc::invalid_argument, std::string(stage) + ": dimension " + std::to_string(dim) +
                                     " is distributed over " +
                                     std::to_string(x.partition().dims()[dim]) + " workers");
  if (x.shape()[dim] != p.in_dim())
    fail(Errc::invalid_argument, std::string(stage) + ": weight is " +
                                     to_string(p.weight.shape()) + " but dimension " +
                                     std::to_string(dim) + " has size " +
                                     std::to_string(x.shape()[dim]));
}

// Multiplies retained modes by R (or R^H) channel-wise and zeros every other entry.
ComplexTensor mix_modes(const ComplexTensor& X, const SpectralWeights& w, bool adjoint) {
  const Index in_c = adjoint ? w.c_out : w.c_in;
  const Index out_c = adjoint ? w.c_in : w.c_out;
  if (X.shape()[1] != in_c)
    fail(Errc::invalid_argument, "spectral_conv: input has " + std::to_string(X.shape()[1]) +
                                     " channels, weights expect " + std::to_string(in_c));
  Shape shape = X.shape();
  shape[1] = out_c;
  ComplexTensor Y(shape, X.partition(), X.rank());
  if (Y.size() == 0) return Y;
  Shape local = X.local_shape();
  const Index batch = local[0];
  Index V = 1;
  for (std::size_t d = 2; d < local.size(); ++d) V *= local[d];
  const Complex* xs = X.data().data();
  Complex* ys = Y.data().data();
  for (Index b = 0; b < batch; ++b)
    for (std::size_t i = 0; i < w.owned.size(); ++i) {
      const Index o = w.owned[i].offset;
      const Complex* M = w.matrix(i);
      for (Index p = 0; p < out_c; ++p) {
        Complex acc = 0.0;
        for (Index q = 0; q < in_c; ++q) {
          Complex r = adjoint ? std::conj(M[q * w.c_in + p]) : M[p * w.c_in + q];
          acc += r * xs[(b * in_c + q) * V + o];
        }
        ys[(b * out_c + p) * V + o] = acc;
      }
    }
  return Y;
}

DfftPlan plan_for_channels(const DfftPlan& plan, Index channels) {
  if (plan.shape[1] == channels) return plan;
  Shape shape = plan.shape;
  shape[1] = channels;
  return plan_dfft(plan.input, shape, plan.transform_dims);
}

void check_spectral_input(const RealTensor& v, const SpectralWeights& w, const DfftPlan& plan) {
  if (v.shape() != plan.shape)
    fail(Errc::invalid_argument, "spectral_conv: tensor shape " + to_string(v.shape()) +
                                     " does not match plan shape " + to_string(plan.shape));
  if (!v.partition().same_layout(plan.input))
    fail(Errc::invalid_argument, "spectral_conv: tensor is not on the plan's input partition");
  if (v.partition().dims()[1] != 1)
    fail(Errc::invalid_argument, "spectral_conv: channel dimension is distributed");
  if (v.shape()[1] != w.c_in)
    fail(Errc::invalid_argument, "spectral_conv: channel count does not match weights");
}

struct SpectralResult {
  RealTensor out;
  SpectralField spectrum;
};

SpectralResult spectral_forward(WorkerContext& ctx, const RealTensor& v, const SpectralWeights& w,
                                const DfftPlan& plan) {
  check_spectral_input(v, w, plan);
  SpectralField X = dfft_forward(ctx, plan, to_complex(v));
  SpectralField Y{mix_modes(X.data, w, false), X.transformed};
  ComplexTensor y = dfft_inverse(ctx, plan_for_channels(plan, w.c_out), Y);

  double sums[2] = {0.0, 0.0};
  for (const Complex& z : y.data()) {
    sums[0] += z.imag() * z.imag();
    sums[1] += std::norm(z);
  }
  auto total = allreduce_sum(ctx, std::span<const double>(sums, 2));
  if (total[0] > 1e-16 * total[1])
    fail(Errc::numeric, "spectral_conv: imaginary residue " +
                            std::to_string(std::sqrt(total[0] / total[1])) +
                            " exceeds 1e-8 relative");
  return {real_part(y), std::move(X)};
}

RealTensor spectral_backward(WorkerContext& ctx, const RealTensor& g, const SpectralWeights& w,
                             const DfftPlan& plan, const SpectralField& X, SpectralWeights& dw) {
  SpectralField G = dfft_forward(ctx, plan_for_channels(plan, w.c_out), to_complex(g));
  if (G.data.size() > 0) {
    Shape local = G.data.local_shape();
    const Index batch = local[0];
    Index V = 1;
    for (std::size_t d = 2; d < local.size(); ++d) V *= local[d];
    const Complex* gs = G.data.data().data();
    const Complex* xs = X.data.data().data();
    for (Index b = 0; b < batch; ++b)
      for (std::size_t i = 0; i < w.owned.size(); ++i) {
        const Index o = w.owned[i].offset;
        Complex* dM = dw.matrix(i);
        for (Index p = 0; p < w.c_out; ++p) {
          const Complex gp = gs[(b * w.c_out + p) * V + o];
          for (Index q = 0; q < w.c_in; ++q)
            dM[p * w.c_in + q] += gp * std::conj(xs[(b * w.c_in + q) * V + o]);
        }
      }
  }
  ComplexTensor back = dfft_adjoint(ctx, plan, mix_modes(G.data, w, true));
  return real_part(back);
}

std::vector<std::size_t> range_dims(std::size_t lo, std::size_t hi) {
  std::vector<std::size_t> out;
  for (std::size_t d = lo; d < hi; ++d) out.push_back(d);
  return out;
}

}  // namespace

Activation parse_activation(std::string_view name) {
  if (name == "relu") return Activation::relu;
  if (name == "gelu") return Activation::gelu;
  if (name == "identity") return Activation::identity;
  fail(Errc::invalid_argument, "unknown activation '" + std::string(name) + "'");
}

const char* activation_name(Activation a) {
  switch (a) {
    case Activation::relu: return "relu";
    case Activation::gelu: return "gelu";
    case Activation::identity: return "identity";
  }
  return "?";
}

std::size_t tensor_ndim(const FnoConfig& c) { return c.spatial.size() + 3; }

Shape input_shape(const FnoConfig& c) {
  Shape s{c.batch, c.in_channels};
  s.insert(s.end(), c.spatial.begin(), c.spatial.end());
  s.push_back(1);
  return s;
}

Shape output_shape(const FnoConfig& c) {
  Shape s{c.batch, c.out_channels};
  s.insert(s.end(), c.spatial.begin(), c.spatial.end());
  s.push_back(c.out_timesteps);
  return s;
}

Shape lifted_shape(const FnoConfig& c) {
  Shape s = output_shape(c);
  s[1] = c.width;
  return s;
}

std::vector<std::size_t> transform_dims(const FnoConfig& c) {
  return range_dims(2, tensor_ndim(c));
}

std::vector<Index> effective_modes(const FnoConfig& c) {
  if (!c.modes.empty()) return c.modes;
  return std::vector<Index>(c.spatial.size() + 1, 8);
}

void validate(const FnoConfig& c) {
  require(c.num_blocks >= 1, "config: num_blocks must be at least 1");
  require(c.width >= 1, "config: width must be at least 1");
  require(c.in_channels >= 1 && c.out_channels >= 1, "config: channel counts must be positive");
  require(c.out_timesteps >= 1, "config: out_timesteps must be positive");
  require(c.batch >= 1, "config: batch must be positive");
  require(!c.spatial.empty(), "config: spatial shape is empty");
  for (Index s : c.spatial) require(s >= 1, "config: spatial extents must be positive");
  const std::size_t nd = tensor_ndim(c);
  auto modes = effective_modes(c);
  require(modes.size() == nd - 2, "config: need one mode count per spatial dim plus time, got " +
                                      std::to_string(modes.size()));
  Shape sizes = lifted_shape(c);
  for (std::size_t d = 0; d < modes.size(); ++d) {
    Index n = sizes[d + 2];
    if (modes[d] < 1 || modes[d] > n / 2)
      fail(Errc::invalid_argument, "config: modes[" + std::to_string(d) + "] = " +
                                       std::to_string(modes[d]) + " must lie in [1, " +
                                       std::to_string(n / 2) + "] for extent " +
                                       std::to_string(n));
  }
  require(c.partition.size() == nd, "config: partition needs " + std::to_string(nd) +
                                        " entries, got " + std::to_string(c.partition.size()));
  require(c.partition[0] == 1, "config: the batch dimension cannot be partitioned");
  int total = 1;
  for (int p : c.partition) {
    require(p >= 1, "config: partition entries must be positive");
    total *= p;
  }
  if (!c.block_partition.empty()) {
    require(c.block_partition.size() == nd, "config: block_partition needs " +
                                                std::to_string(nd) + " entries");
    require(c.block_partition[0] == 1 && c.block_partition[1] == 1,
            "config: block_partition must keep batch and channel whole");
    int btotal = 1;
    for (int p : c.block_partition) {
      require(p >= 1, "config: block_partition entries must be positive");
      btotal *= p;
    }
    require(btotal == total, "config: block_partition uses " + std::to_string(btotal) +
                                 " workers but partition uses " + std::to_string(total));
  }
}

ModelLayout make_layout(const FnoConfig& c) {
  validate(c);
  const std::size_t nd = tensor_ndim(c);
  const std::size_t t = nd - 1;
  Shape in = input_shape(c);
  Shape lifted_in = in;
  lifted_in[t] = c.out_timesteps;

  Partition px = make_partition(c.partition);
  std::vector<std::size_t> spatial = range_dims(2, t);
  std::vector<std::size_t> time_dim{t};
  Partition pt = make_whole(px, in, time_dim, spatial);
  std::vector<std::size_t> channel_dim{1};
  std::vector<std::size_t> field = range_dims(2, nd);
  Partition pc = make_whole(pt, lifted_in, channel_dim, field);
  Partition pb = c.block_partition.empty() ? pc : make_partition(c.block_partition);
  DfftPlan plan = plan_dfft(pb, lifted_shape(c), transform_dims(c));
  return {px, pt, pc, pb, std::move(plan)};
}

// ---- spectral weights ----

bool is_retained(Index k, Index m, Index n) { return k < m || k >= n - m; }

Index retained_position(Index k, Index m, Index n) { return k < m ? k : k - (n - 2 * m); }

std::vector<OwnedMode> mode_ownership(const RegionBox& box, std::span<const Index> modes,
                                      std::span<const Index> sizes) {
  const std::size_t r = sizes.size();
  require(modes.size() == r && box.ranges.size() == r,
          "mode_ownership: box, modes and sizes must have the same dimensionality");
  for (std::size_t d = 0; d < r; ++d)
    if (modes[d] < 1 || 2 * modes[d] > sizes[d])
      fail(Errc::invalid_argument, "mode_ownership: m = " + std::to_string(modes[d]) +
                                       " exceeds half of n = " + std::to_string(sizes[d]));

  std::vector<std::vector<Index>> kept(r);
  for (std::size_t d = 0; d < r; ++d)
    for (Index k = box.ranges[d].start; k < box.ranges[d].stop; ++k)
      if (is_retained(k, modes[d], sizes[d])) kept[d].push_back(k);
  std::vector<OwnedMode> out;
  for (const auto& k : kept)
    if (k.empty()) return out;

  Shape extent = box.extent();
  std::vector<std::size_t> pos(r, 0);
  while (true) {
    OwnedMode m{0, std::vector<Index>(r)};
    for (std::size_t d = 0; d < r; ++d) {
      m.mode[d] = kept[d][pos[d]];
      m.offset = m.offset * extent[d] + (m.mode[d] - box.ranges[d].start);
    }
    out.push_back(std::move(m));
    std::size_t d = r;
    while (d > 0) {
      --d;
      if (++pos[d] < kept[d].size()) break;
      pos[d] = 0;
      if (d == 0) return out;
    }
  }
}

ModeKind mode_kind(std::span<const Index> mode, std::span<const Index> modes,
                   std::span<const Index> sizes) {
  std::vector<Index> neg(mode.size());
  for (std::size_t d = 0; d < mode.size(); ++d) {
    neg[d] = (sizes[d] - mode[d]) % sizes[d];
    if (!is_retained(neg[d], modes[d], sizes[d])) return ModeKind::frozen;
  }
  if (std::equal(neg.begin(), neg.end(), mode.begin())) return ModeKind::self_conjugate;
  return std::lexicographical_compare(mode.begin(), mode.end(), neg.begin(), neg.end())
             ? ModeKind::leading
             : ModeKind::mirror;
}

Shape SpectralWeights::dense_shape() const {
  Shape s;
  for (Index m : modes) s.push_back(2 * m);
  s.push_back(c_out);
  s.push_back(c_in);
  return s;
}

SpectralWeights make_spectral_weights(const DfftPlan& plan, int rank, std::vector<Index> modes,
                                      int c_out, int c_in) {
  const std::size_t nd = plan.shape.size();
  const std::size_t r = plan.transform_dims.size();
  require(r == modes.size(), "spectral weights: one mode count per transformed dim");
  for (std::size_t i = 0; i < r; ++i)
    require(plan.transform_dims[i] == nd - r + i,
            "spectral weights: transformed dims must be the trailing dims");

  SpectralWeights w;
  w.modes = std::move(modes);
  w.sizes.assign(plan.shape.end() - static_cast<long>(r), plan.shape.end());
  w.c_out = c_out;
  w.c_in = c_in;
  const Partition& out = plan.output_partition();
  RegionBox box{std::vector<IndexRange>(r)};
  if (out.contains_rank(rank)) {
    RegionBox full = local_region(out, rank, plan.shape);
    box.ranges.assign(full.ranges.end() - static_cast<long>(r), full.ranges.end());
  }
  w.owned = mode_ownership(box, w.modes, w.sizes);
  for (const auto& m : w.owned) w.kinds.push_back(mode_kind(m.mode, w.modes, w.sizes));
  w.values.assign(w.owned.size() * static_cast<std::size_t>(c_out * c_in), Complex(0.0));
  return w;
}

void init_spectral(SpectralWeights& w, std::uint64_t seed) {
  const double scale = 1.0 / (static_cast<double>(w.c_in) * w.c_out);
  for (std::size_t i = 0; i < w.owned.size(); ++i) {
    Complex* M = w.matrix(i);
    const ModeKind kind = w.kinds[i];
    if (kind == ModeKind::frozen) {
      std::fill(M, M + w.c_out * w.c_in, Complex(0.0));
      continue;
    }
    // Key on the leading member of the conjugate pair so both members agree.
    std::uint64_t key = seed;
    for (std::size_t d = 0; d < w.modes.size(); ++d) {
      Index k = w.owned[i].mode[d];
      if (kind == ModeKind::mirror) k = (w.sizes[d] - k) % w.sizes[d];
      key = hash_combine(key, static_cast<std::uint64_t>(k));
    }
    for (Index e = 0; e < w.c_out * w.c_in; ++e) {
      std::uint64_t ke = hash_combine(key, static_cast<std::uint64_t>(e));
      Complex v(scale * uniform01(ke), scale * uniform01(hash_combine(ke, 0x696dULL)));
      if (kind == ModeKind::mirror) v = std::conj(v);
      if (kind == ModeKind::self_conjugate) v.imag(0.0);
      M[e] = v;
    }
  }
}

void project_spectral(SpectralWeights& w) {
  for (std::size_t i = 0; i < w.owned.size(); ++i) {
    Complex* M = w.matrix(i);
    if (w.kinds[i] == ModeKind::frozen)
      std::fill(M, M + w.c_out * w.c_in, Complex(0.0));
    else if (w.kinds[i] == ModeKind::self_conjugate)
      for (Index e = 0; e < w.c_out * w.c_in; ++e) M[e].imag(0.0);
  }
}

namespace {

Index dense_mode_index(const SpectralWeights& w, std::span<const Index> mode) {
  Index pos = 0;
  for (std::size_t d = 0; d < w.modes.size(); ++d)
    pos = pos * 2 * w.modes[d] + retained_position(mode[d], w.modes[d], w.sizes[d]);
  return pos;
}

}  // namespace

std::vector<Complex> gather_spectral(WorkerContext& ctx, const SpectralWeights& w) {
  const Index block = static_cast<Index>(w.c_out) * w.c_in;
  const Index total = volume(w.dense_shape());
  std::vector<double> flat(static_cast<std::size_t>(2 * total), 0.0);
  for (std::size_t i = 0; i < w.owned.size(); ++i) {
    Index base = dense_mode_index(w, w.owned[i].mode) * block;
    const Complex* M = w.matrix(i);
    for (Index e = 0; e < block; ++e) {
      flat[static_cast<std::size_t>(2 * (base + e))] = M[e].real();
      flat[static_cast<std::size_t>(2 * (base + e) + 1)] = M[e].imag();
    }
  }
  // Owners are disjoint, so summing exact zeros from everyone else is lossless.
  auto summed = allreduce_sum(ctx, flat);
  std::vector<Complex> out(static_cast<std::size_t>(total));
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = Complex(summed[2 * i], summed[2 * i + 1]);
  return out;
}

void load_spectral(SpectralWeights& w, std::span<const Complex> dense) {
  const Index block = static_cast<Index>(w.c_out) * w.c_in;
  require(static_cast<Index>(dense.size()) == volume(w.dense_shape()),
          "load_spectral: dense tensor has the wrong size");
  for (std::size_t i = 0; i < w.owned.size(); ++i) {
    Index base = dense_mode_index(w, w.owned[i].mode) * block;
    std::copy_n(dense.begin() + base, block, w.matrix(i));
  }
}

std::vector<Complex> hermitian_projection(std::span<const Complex> dense,
                                          std::span<const Index> modes,
                                          std::span<const Index> sizes, int c_out, int c_in) {
  const std::size_t r = modes.size();
  const Index block = static_cast<Index>(c_out) * c_in;
  Index count = 1;
  for (Index m : modes) count *= 2 * m;
  require(static_cast<Index>(dense.size()) == count * block,
          "hermitian_projection: dense tensor has the wrong size");
  std::vector<Complex> out(dense.begin(), dense.end());
  std::vector<Index> mode(r), neg(r);
  for (Index idx = 0; idx < count; ++idx) {
    Index rem = idx;
    for (std::size_t d = r; d-- > 0;) {
      Index pos = rem % (2 * modes[d]);
      rem /= 2 * modes[d];
      mode[d] = pos < modes[d] ? pos : sizes[d] - 2 * modes[d] + pos;
    }
    Complex* M = out.data() + idx * block;
    switch (mode_kind(mode, modes, sizes)) {
      case ModeKind::leading: break;
      case ModeKind::frozen: std::fill(M, M + block, Complex(0.0)); break;
      case ModeKind::self_conjugate:
        for (Index e = 0; e < block; ++e) M[e].imag(0.0);
        break;
      case ModeKind::mirror: {
        Index partner = 0;
        for (std::size_t d = 0; d < r; ++d) {
          neg[d] = (sizes[d] - mode[d]) % sizes[d];
          partner = partner * 2 * modes[d] + retained_position(neg[d], modes[d], sizes[d]);
        }
        const Complex* L = dense.data() + partner * block;
        for (Index e = 0; e < block; ++e) M[e] = std::conj(L[e]);
        break;
      }
    }
  }
  return out;
}

RealTensor spectral_conv(WorkerContext& ctx, const RealTensor& v, const SpectralWeights& w,
                         const DfftPlan& plan) {
  return spectral_forward(ctx, v, w, plan).out;
}

// ---- affine ----

AffineParams make_affine(int rank, Index out_dim, Index in_dim, bool bias) {
  require(out_dim >= 1 && in_dim >= 1, "affine: dimensions must be positive");
  AffineParams p;
  p.weight = RealTensor(Shape{out_dim, in_dim}, root_partition(2), rank);
  if (bias) p.bias = RealTensor(Shape{out_dim}, root_partition(1), rank);
  return p;
}

void init_affine(AffineParams& p, std::uint64_t seed) {
  const double bound = std::sqrt(1.0 / static_cast<double>(p.in_dim()));
  auto& w = p.weight.data();
  for (std::size_t i = 0; i < w.size(); ++i)
    w[i] = bound * uniform_from_key(hash_combine(seed, i));
  if (p.has_bias()) {
    auto& b = p.bias.data();
    std::uint64_t bseed = hash_combine(seed, 0x62696173ULL);
    for (std::size_t i = 0; i < b.size(); ++i)
      b[i] = bound * uniform_from_key(hash_combine(bseed, i));
  }
}

RealTensor affine_pointwise(WorkerContext& ctx, const RealTensor& x, const AffineParams& p,
                            std::size_t dim) {
  check_affine_input(x, p, dim, "affine");
  RealTensor wb = broadcast_fwd(ctx, p.weight, x.partition());
  RealTensor bb;
  if (p.has_bias()) bb = broadcast_fwd(ctx, p.bias, x.partition());
  return affine_apply(x, wb.data().data(), p.has_bias() ? bb.data().data() : nullptr,
                      p.out_dim(), p.in_dim(), dim);
}

// ---- parameter sets ----

std::vector<ParamView> ParamSet::views() {
  std::vector<ParamView> out;
  auto affine = [&](const std::string& name, AffineParams& p) {
    out.push_back({name + ".weight", p.weight.data()});
    if (p.has_bias()) out.push_back({name + ".bias", p.bias.data()});
  };
  affine("time_lift", time_lift);
  affine("channel_lift", channel_lift);
  for (std::size_t k = 0; k < block.size(); ++k) {
    affine("block" + std::to_string(k), block[k]);
    auto& v = spectral[k].values;
    out.push_back({"block" + std::to_string(k) + ".spectral",
                   std::span<double>(reinterpret_cast<double*>(v.data()), 2 * v.size())});
  }
  affine("projection", projection);
  return out;
}

ParamSet ParamSet::zeros_like() const {
  ParamSet z = *this;
  for (auto& v : z.views()) std::fill(v.values.begin(), v.values.end(), 0.0);
  return z;
}

FnoModel init_model(const FnoConfig& config, std::uint64_t seed, int rank) {
  FnoModel m{config, make_layout(config), rank, {}};
  const Index w = config.width;
  auto& p = m.params;
  p.time_lift = make_affine(rank, config.out_timesteps, 1, true);
  init_affine(p.time_lift, hash_combine(seed, 1));
  p.channel_lift = make_affine(rank, w, config.in_channels, true);
  init_affine(p.channel_lift, hash_combine(seed, 2));
  for (int k = 0; k < config.num_blocks; ++k) {
    p.block.push_back(make_affine(rank, w, w, false));
    init_affine(p.block.back(), hash_combine(seed, 100 + static_cast<std::uint64_t>(k)));
    p.spectral.push_back(make_spectral_weights(m.layout.plan, rank, effective_modes(config),
                                               config.width, config.width));
    init_spectral(p.spectral.back(), hash_combine(seed, 200 + static_cast<std::uint64_t>(k)));
  }
  p.projection = make_affine(rank, config.out_channels, w, false);
  init_affine(p.projection, hash_combine(seed, 3));
  return m;
}

std::uint64_t parameter_count(const FnoConfig& c) {
  validate(c);
  const std::uint64_t w = static_cast<std::uint64_t>(c.width);
  const std::uint64_t nt = static_cast<std::uint64_t>(c.out_timesteps);
  std::uint64_t retained = 1;
  for (Index m : effective_modes(c)) retained *= static_cast<std::uint64_t>(2 * m);
  return 2 * nt + w * static_cast<std::uint64_t>(c.in_channels) + w +
         static_cast<std::uint64_t>(c.num_blocks) * (w * w + w * w * retained) +
         static_cast<std::uint64_t>(c.out_channels) * w;
}

std::vector<ParamGroup> gather_params(WorkerContext& ctx, const FnoModel& model) {
  std::vector<ParamGroup> out;
  auto affine = [&](const std::string& name, const AffineParams& p) {
    std::vector<double> w = p.weight.data();
    share_from_root(ctx, 0, w);
    out.push_back({name + ".weight", p.weight.shape(), false, std::move(w)});
    if (p.has_bias()) {
      std::vector<double> b = p.bias.data();
      share_from_root(ctx, 0, b);
      out.push_back({name + ".bias", p.bias.shape(), false, std::move(b)});
    }
  };
  const auto& p = model.params;
  affine("time_lift", p.time_lift);
  affine("channel_lift", p.channel_lift);
  for (std::size_t k = 0; k < p.block.size(); ++k) {
    affine("block" + std::to_string(k), p.block[k]);
    auto dense = gather_spectral(ctx, p.spectral[k]);
    std::vector<double> flat(2 * dense.size());
    for (std::size_t i = 0; i < dense.size(); ++i) {
      flat[2 * i] = dense[i].real();
      flat[2 * i + 1] = dense[i].imag();
    }
    out.push_back({"block" + std::to_string(k) + ".spectral", p.spectral[k].dense_shape(), true,
                   std::move(flat)});
  }
  affine("projection", p.projection);
  return out;
}

void load_params(FnoModel& model, const std::vector<ParamGroup>& groups) {
  auto find = [&](const std::string& name, const Shape& shape, bool complex) -> const ParamGroup& {
    for (const auto& g : groups)
      if (g.name == name) {
        if (g.shape != shape || g.complex != complex)
          fail(Errc::invalid_argument, "parameter group " + name + " has shape " +
                                           to_string(g.shape) + ", model expects " +
                                           to_string(shape));
        Index scalars = volume(shape) * (complex ? 2 : 1);
        if (static_cast<Index>(g.values.size()) != scalars)
          fail(Errc::invalid_argument, "parameter group " + name + " has the wrong length");
        return g;
      }
    fail(Errc::invalid_argument, "parameter group " + name + " is missing");
  };
  auto affine = [&](const std::string& name, AffineParams& p) {
    const auto& w = find(name + ".weight", p.weight.shape(), false);
    if (p.weight.active()) p.weight.data() = w.values;
    if (p.has_bias()) {
      const auto& b = find(name + ".bias", p.bias.shape(), false);
      if (p.bias.active()) p.bias.data() = b.values;
    }
  };
  auto& p = model.params;
  affine("time_lift", p.time_lift);
  affine("channel_lift", p.channel_lift);
  for (std::size_t k = 0; k < p.block.size(); ++k) {
    affine("block" + std::to_string(k), p.block[k]);
    const auto& s = find("block" + std::to_string(k) + ".spectral", p.spectral[k].dense_shape(),
                         true);
    std::vector<Complex> dense(s.values.size() / 2);
    for (std::size_t i = 0; i < dense.size(); ++i)
      dense[i] = Complex(s.values[2 * i], s.values[2 * i + 1]);
    load_spectral(p.spectral[k], dense);
  }
  affine("projection", p.projection);
}

// ---- forward / backward ----

std::vector<Tape::Step> Tape::consume() {
  if (replayed_) fail(Errc::invalid_state, "tape has already been replayed");
  replayed_ = true;
  return std::move(steps_);
}

namespace {

using Select = AffineParams& (*)(ParamSet&, std::size_t);

RealTensor repartition_step(WorkerContext& ctx, const RealTensor& x, const Partition& dest,
                            Tape* tape) {
  RealTensor y = repartition(ctx, x, dest);
  if (tape) {
    Partition src = x.partition();
    tape->record([src](WorkerContext& c, const RealTensor& g, ParamSet&) {
      return repartition_adj(c, g, src);
    });
  }
  return y;
}

RealTensor affine_step(WorkerContext& ctx, const RealTensor& x, const AffineParams& p,
                       std::size_t dim, const char* stage, Tape* tape, Select select,
                       std::size_t index) {
  check_affine_input(x, p, dim, stage);
  RealTensor wb = broadcast_fwd(ctx, p.weight, x.partition());
  RealTensor bb;
  const bool has_bias = p.has_bias();
  if (has_bias) bb = broadcast_fwd(ctx, p.bias, x.partition());
  const Index out = p.out_dim(), in = p.in_dim();
  RealTensor y = affine_apply(x, wb.data().data(), has_bias ? bb.data().data() : nullptr, out,
                              in, dim);
  if (tape) {
    tape->record([x, wb, bb, has_bias, out, in, dim, select, index](
                     WorkerContext& c, const RealTensor& g, ParamSet& grads) {
      RealTensor dwb = wb.zeros_like();
      RealTensor dbb = has_bias ? bb.zeros_like() : RealTensor();
      RealTensor dx = affine_adjoint(x, g, wb.data().data(), out, in, dim, dwb.data().data(),
                                     has_bias && dbb.size() ? dbb.data().data() : nullptr);
      AffineParams& gp = select(grads, index);
      add_into(gp.weight.data(),
               broadcast_adj(c, dwb, gp.weight.partition(), gp.weight.shape()).data());
      if (has_bias)
        add_into(gp.bias.data(), broadcast_adj(c, dbb, gp.bias.partition(), gp.bias.shape()).data());
      return dx;
    });
  }
  return y;
}

RealTensor block_step(WorkerContext& ctx, const RealTensor& v, const FnoModel& model,
                      std::size_t k, Tape* tape) {
  const AffineParams& W = model.params.block[k];
  const SpectralWeights& R = model.params.spectral[k];
  const DfftPlan& plan = model.layout.plan;
  check_affine_input(v, W, 1, "fno_block");
  RealTensor wb = broadcast_fwd(ctx, W.weight, v.partition());
  const Index w = W.out_dim();
  RealTensor z = affine_apply(v, wb.data().data(), nullptr, w, w, 1);
  SpectralResult s = spectral_forward(ctx, v, R, plan);
  if (!z.partition().same_layout(s.out.partition()) || z.size() != s.out.size())
    fail(Errc::internal, "fno_block: branch layouts differ");
  for (std::size_t i = 0; i < z.size(); ++i) z.data()[i] += s.out.data()[i];
  RealTensor out = z.zeros_like();
  const Activation act = model.config.activation;
  for (std::size_t i = 0; i < z.size(); ++i) out.data()[i] = activate(z.data()[i], act);

  if (tape) {
    const SpectralWeights* weights = &R;
    tape->record([v, z = std::move(z), wb, X = std::move(s.spectrum), plan, weights, k, w, act](
                     WorkerContext& c, const RealTensor& g, ParamSet& grads) {
      RealTensor dz = g.zeros_like();
      for (std::size_t i = 0; i < dz.size(); ++i)
        dz.data()[i] = g.data()[i] * activate_grad(z.data()[i], act);
      RealTensor dwb = wb.zeros_like();
      RealTensor dv = affine_adjoint(v, dz, wb.data().data(), w, w, 1, dwb.data().data(), nullptr);
      AffineParams& gp = grads.block[k];
      add_into(gp.weight.data(),
               broadcast_adj(c, dwb, gp.weight.partition(), gp.weight.shape()).data());
      RealTensor ds = spectral_backward(c, dz, *weights, plan, X, grads.spectral[k]);
      add_into(dv.data(), ds.data());
      return dv;
    });
  }
  return out;
}

}  // namespace

RealTensor fno_forward(WorkerContext& ctx, const FnoModel& model, const RealTensor& a,
                       Tape* tape) {
  const FnoConfig& c = model.config;
  const ModelLayout& L = model.layout;
  if (a.shape() != input_shape(c))
    fail(Errc::invalid_argument, "fno_forward: input shape " + to_string(a.shape()) +
                                     " does not match model input " +
                                     to_string(input_shape(c)));
  if (!a.partition().same_layout(L.input))
    fail(Errc::invalid_argument, "fno_forward: input partition " +
                                     to_string(dims_as_shape(a.partition())) +
                                     " does not match model partition " +
                                     to_string(dims_as_shape(L.input)));
  const std::size_t t = tensor_ndim(c) - 1;
  Select lift = [](ParamSet& p, std::size_t i) -> AffineParams& {
    return i == 0 ? p.time_lift : p.channel_lift;
  };
  Select proj = [](ParamSet& p, std::size_t) -> AffineParams& { return p.projection; };

  RealTensor x = repartition_step(ctx, a, L.time, tape);
  x = affine_step(ctx, x, model.params.time_lift, t, "time lift", tape, lift, 0);
  x = repartition_step(ctx, x, L.channel, tape);
  x = affine_step(ctx, x, model.params.channel_lift, 1, "channel lift", tape, lift, 1);
  x = repartition_step(ctx, x, L.block, tape);
  for (std::size_t k = 0; k < model.params.block.size(); ++k) x = block_step(ctx, x, model, k, tape);
  x = repartition_step(ctx, x, L.channel, tape);
  return affine_step(ctx, x, model.params.projection, 1, "projection", tape, proj, 0);
}

Gradients fno_backward(WorkerContext& ctx, const FnoModel& model, Tape& tape,
                       const RealTensor& loss_gradient) {
  auto steps = tape.consume();
  if (loss_gradient.shape() != output_shape(model.config) ||
      !loss_gradient.partition().same_layout(model.layout.channel))
    fail(Errc::invalid_argument, "fno_backward: loss gradient does not match the model output");
  Gradients out{model.params.zeros_like(), loss_gradient};
  for (auto it = steps.rbegin(); it != steps.rend(); ++it) out.input = (*it)(ctx, out.input, out.params);
  for (auto& s : out.params.spectral) project_spectral(s);
  return out;
}

// ---- loss ----

namespace {

std::pair<double, double> loss_norms(WorkerContext& ctx, const RealTensor& y,
                                     const RealTensor& target) {
  if (y.shape() != target.shape())
    fail(Errc::invalid_argument, "relative loss: prediction shape " + to_string(y.shape()) +
                                     " differs from target shape " + to_string(target.shape()));
  if (!y.partition().same_layout(target.partition()) || y.size() != target.size())
    fail(Errc::invalid_argument, "relative loss: prediction and target are partitioned differently");
  double local[2] = {0.0, 0.0};
  for (std::size_t i = 0; i < y.size(); ++i) {
    double d = y.data()[i] - target.data()[i];
    local[0] += d * d;
    local[1] += target.data()[i] * target.data()[i];
  }
  auto s = allreduce_sum(ctx, std::span<const double>(local, 2));
  if (s[1] == 0.0) fail(Errc::numeric, "relative loss: target norm is zero");
  return {std::sqrt(s[0]), std::sqrt(s[1])};
}

}  // namespace

double relative_lp_loss(WorkerContext& ctx, const RealTensor& y, const RealTensor& target) {
  auto [diff, norm] = loss_norms(ctx, y, target);
  return diff / norm;
}

Loss relative_lp_loss_grad(WorkerContext& ctx, const RealTensor& y, const RealTensor& target) {
  auto [diff, norm] = loss_norms(ctx, y, target);
  Loss out{diff / norm, y.zeros_like()};
  if (diff > 0.0) {
    const double scale = 1.0 / (diff * norm);
    for (std::size_t i = 0; i < y.size(); ++i)
      out.gradient.data()[i] = scale * (y.data()[i] - target.data()[i]);
  }
  return out;
}

// ---- Adam ----

AdamState make_adam(const ParamSet& params, AdamOptions options) {
  return {options, 0, params.zeros_like(), params.zeros_like()};
}

void adam_update(std::span<double> theta, std::span<const double> grad, std::span<double> m,
                 std::span<double> v, long step, const AdamOptions& o) {
  require(grad.size() == theta.size() && m.size() == theta.size() && v.size() == theta.size(),
          "adam: parameter, gradient and moment sizes differ");
  require(step >= 1, "adam: step counter must start at 1");
  const double c1 = 1.0 - std::pow(o.beta1, static_cast<double>(step));
  const double c2 = 1.0 - std::pow(o.beta2, static_cast<double>(step));
  for (std::size_t i = 0; i < theta.size(); ++i) {
    m[i] = o.beta1 * m[i] + (1.0 - o.beta1) * grad[i];
    v[i] = o.beta2 * v[i] + (1.0 - o.beta2) * grad[i] * grad[i];
    theta[i] -= o.lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + o.eps);
  }
}

void adam_step(ParamSet& params, ParamSet& grads, AdamState& state) {
  auto p = params.views(), g = grads.views(), m = state.m.views(), v = state.v.views();
  if (g.size() != p.size() || m.size() != p.size() || v.size() != p.size())
    fail(Errc::invalid_argument, "adam: gradient structure does not match parameters");
  for (std::size_t i = 0; i < p.size(); ++i)
    if (g[i].name != p[i].name || g[i].values.size() != p[i].values.size())
      fail(Errc::invalid_argument, "adam: gradient for " + p[i].name + " has the wrong shape");
  ++state.step;
  for (std::size_t i = 0; i < p.size(); ++i)
    adam_update(p[i].values, g[i].values, m[i].values, v[i].values, state.step, state.options);
}

}  // namespace dfno
