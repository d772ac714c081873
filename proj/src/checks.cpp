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
#include "dfno/checks.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <numbers>
#include <random>

#include "dfno/collectives.hpp"
#include "dfno/dfft.hpp"
#include "dfno/error.hpp"
#include "dfno/fft.hpp"
#include "dfno/model.hpp"
#include "dfno/reference.hpp"
#include "dfno/tensor_file.hpp"

namespace dfno {
namespace {

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

int workers_of(const std::vector<int>& dims) {
  int n = 1;
  for (int d : dims) n *= d;
  return n;
}

// Random partition dims with at most `max_workers` workers and no entry
// larger than the extent it splits.
std::vector<int> random_dims(std::mt19937_64& rng, const Shape& shape, int max_workers) {
  std::vector<int> dims(shape.size(), 1);
  int total = 1;
  for (int tries = 0; tries < 6; ++tries) {
    std::size_t d = rng() % shape.size();
    int f = 2 + static_cast<int>(rng() % 2);
    if (total * f <= max_workers && dims[d] * f <= shape[d]) {
      dims[d] *= f;
      total *= f;
    }
  }
  return dims;
}

template <class T>
double rel_diff(std::span<const T> a, std::span<const T> b) {
  require(a.size() == b.size(), "check: compared buffers differ in length");
  double num = 0, den = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += std::norm(a[i] - b[i]);
    den += std::norm(b[i]);
  }
  return den == 0 ? std::sqrt(num) : std::sqrt(num / den);
}

std::vector<double> random_vector(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1, 1);
  std::vector<double> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

void note_worst(CheckResult& r, double value, const std::string& where) {
  ++r.cases;
  if (r.detail.empty() || value > r.max_discrepancy) {
    r.max_discrepancy = value;
    r.detail = "worst: " + where;
  }
}

CheckResult make_result(std::string name, double tolerance) {
  CheckResult r;
  r.name = std::move(name);
  r.tolerance = tolerance;
  return r;
}

}  // namespace

CheckResult check_adjoint(int seeds) {
  Stopwatch clock;
  CheckResult r = make_result("adjoint", 1e-10);
  std::mt19937_64 rng(2024);
  for (int seed = 0; seed < seeds; ++seed) {
    const std::size_t nd = 1 + rng() % 3;
    Shape shape(nd);
    for (auto& s : shape) s = 1 + static_cast<Index>(rng() % 12);

    auto p = make_partition(random_dims(rng, shape, 8));
    auto q = make_partition(random_dims(rng, shape, 8));
    LinearOp<double> rep{"repartition", shape, p,
                         [q](WorkerContext& ctx, const RealTensor& x) { return repartition(ctx, x, q); },
                         [p](WorkerContext& ctx, const RealTensor& g) {
                           return repartition_adj(ctx, g, p);
                         }};
    double e = launch(std::max(p.size(), q.size()), [&](WorkerContext& ctx) {
      return adjoint_check(ctx, rep, static_cast<std::uint64_t>(seed));
    })[0];
    note_worst(r, e, "repartition " + to_string(shape));

    // Broadcast source: the destination with some entries collapsed to 1.
    auto qd = random_dims(rng, shape, 8);
    auto pd = qd;
    for (auto& v : pd)
      if (rng() % 2) v = 1;
    auto src = make_partition(pd), dst = make_partition(qd);
    LinearOp<double> bc{"broadcast", shape, src,
                        [dst](WorkerContext& ctx, const RealTensor& x) {
                          return broadcast_fwd(ctx, x, dst);
                        },
                        [src, shape](WorkerContext& ctx, const RealTensor& g) {
                          return broadcast_adj(ctx, g, src, shape);
                        }};
    e = launch(dst.size(), [&](WorkerContext& ctx) {
      return adjoint_check(ctx, bc, static_cast<std::uint64_t>(seed) + 1000);
    })[0];
    note_worst(r, e, "broadcast " + to_string(shape));
  }
  r.seconds = clock.seconds();
  return r;
}

namespace {

struct DfftCase {
  std::vector<int> pdims;
  Shape shape;
  std::vector<std::size_t> dims;
};

std::vector<DfftCase> dfft_cases() {
  std::vector<DfftCase> cases{
      {{2, 1}, {15, 4}, {0}},
      {{4, 1}, {60, 6}, {0}},
      {{2, 2}, {6, 8}, {0, 1}},
      {{2, 2}, {60, 4}, {1}},
      {{2, 1, 2}, {4, 6, 8}, {0, 1, 2}},
      {{1, 2, 2, 1}, {2, 16, 15, 4}, {1, 2, 3}},
      {{1, 1, 2, 2, 2, 1}, {1, 2, 8, 8, 8, 6}, {2, 3, 4, 5}},
  };
  static const Index sizes[] = {4, 6, 8, 15, 16, 60};
  std::mt19937_64 rng(77);
  while (cases.size() < 40) {
    DfftCase c;
    const std::size_t nd = 1 + rng() % 3;
    for (std::size_t d = 0; d < nd; ++d) c.shape.push_back(sizes[rng() % 6]);
    if (volume(c.shape) > 20000) continue;
    c.pdims = random_dims(rng, c.shape, 8);
    for (std::size_t d = 0; d < nd; ++d)
      if (rng() % 3 != 0) c.dims.push_back(d);
    if (c.dims.empty()) c.dims.push_back(rng() % nd);
    try {
      plan_dfft(make_partition(c.pdims), c.shape, c.dims);
    } catch (const Error& e) {
      if (e.code() == Errc::plan) continue;
      throw;
    }
    cases.push_back(std::move(c));
  }
  return cases;
}

// Direct O(n^2) DFT along one axis, independent of the FFT kernels.
void naive_axis_dft(std::vector<Complex>& x, const Shape& shape, std::size_t dim) {
  Index inner = 1;
  for (std::size_t d = dim + 1; d < shape.size(); ++d) inner *= shape[d];
  const Index n = shape[dim];
  const Index outer = volume(shape) / (inner * n);
  std::vector<Complex> twiddle(static_cast<std::size_t>(n)), line(twiddle.size());
  for (Index k = 0; k < n; ++k)
    twiddle[k] = std::polar(1.0, -2.0 * std::numbers::pi * static_cast<double>(k) / n);
  const double scale = 1.0 / std::sqrt(static_cast<double>(n));
  for (Index o = 0; o < outer; ++o)
    for (Index i = 0; i < inner; ++i) {
      Complex* base = x.data() + o * n * inner + i;
      for (Index k = 0; k < n; ++k) {
        Complex acc = 0;
        for (Index j = 0; j < n; ++j) acc += base[j * inner] * twiddle[(j * k) % n];
        line[k] = acc * scale;
      }
      for (Index k = 0; k < n; ++k) base[k * inner] = line[k];
    }
}

struct DfftOutcome {
  double oracle;
  double norm_defect;
};

DfftOutcome run_dfft_case(const DfftCase& c, std::uint64_t seed) {
  auto p = make_partition(c.pdims);
  auto plan = plan_dfft(p, c.shape, c.dims);
  int n = p.size();
  for (const auto& s : plan.stages) n = std::max(n, s.partition.size());
  auto out = launch(n, [&](WorkerContext& ctx) {
    ComplexTensor x(c.shape, p, ctx.rank());
    fill_random(x, seed);
    auto y = dfft_forward(ctx, plan, x);
    double nx = norm2(ctx, x), ny = norm2(ctx, y.data);
    return std::tuple{gather(ctx, x), gather(ctx, y.data), nx, ny};
  });
  auto& [x, y, nx, ny] = out[0];
  auto direct = x;
  for (std::size_t d : c.dims) naive_axis_dft(direct, c.shape, d);
  local_fft(x, c.shape, c.dims, Direction::forward);
  return {std::max(rel_diff<Complex>(y, x), rel_diff<Complex>(y, direct)),
          std::abs(ny - nx) / nx};
}

}  // namespace

CheckResult check_dfft_oracle() {
  Stopwatch clock;
  CheckResult r = make_result("dfft_oracle", 1e-10);
  std::uint64_t seed = 1;
  for (const auto& c : dfft_cases()) {
    auto o = run_dfft_case(c, seed++);
    note_worst(r, o.oracle, to_string(c.shape) + " on " +
                                to_string(std::vector<Index>(c.pdims.begin(), c.pdims.end())));
  }
  r.seconds = clock.seconds();
  return r;
}

CheckResult check_dfft_unitarity() {
  Stopwatch clock;
  CheckResult r = make_result("dfft_unitarity", 1e-12);
  std::uint64_t seed = 500;
  for (const auto& c : dfft_cases()) {
    auto o = run_dfft_case(c, seed++);
    note_worst(r, o.norm_defect, to_string(c.shape));
  }
  r.seconds = clock.seconds();
  return r;
}

CheckResult check_mode_ownership() {
  Stopwatch clock;
  CheckResult r = make_result("mode_ownership", 1e-10);
  struct Case {
    std::vector<int> pdims;
    Shape shape;
    std::vector<Index> modes;
  };
  const std::vector<Case> cases{
      {{1, 1, 3, 3}, {1, 2, 9, 12}, {2, 3}},
      {{1, 1, 3, 3}, {1, 3, 12, 12}, {4, 4}},
      {{1, 1, 2, 2, 1}, {1, 8, 16, 16, 8}, {4, 4, 3}},
      {{1, 1, 2, 2, 2, 1}, {1, 3, 8, 6, 4, 4}, {2, 3, 2, 1}},
      {{1, 1, 1, 1, 2, 2}, {2, 2, 6, 4, 8, 6}, {3, 1, 2, 2}},
      {{1, 1, 2, 1, 2, 2}, {1, 4, 16, 16, 16, 10}, {4, 4, 4, 4}},
  };
  std::uint64_t seed = 3;
  for (const auto& c : cases) {
    auto p = make_partition(c.pdims);
    auto x = random_vector(static_cast<std::size_t>(volume(c.shape)), seed);
    const int ch = static_cast<int>(c.shape[1]);
    std::vector<std::size_t> dims;
    for (std::size_t d = 2; d < c.shape.size(); ++d) dims.push_back(d);
    auto out = launch(p.size(), [&](WorkerContext& ctx) {
      auto plan = plan_dfft(p, c.shape, dims);
      auto w = make_spectral_weights(plan, ctx.rank(), c.modes, ch, ch);
      init_spectral(w, seed + 70);
      auto v = scatter<double>(x, c.shape, p, ctx.rank());
      auto y = gather(ctx, spectral_conv(ctx, v, w, plan));
      return std::pair{y, gather_spectral(ctx, w)};
    });
    auto expect = reference_spectral_conv(c.shape, c.modes, ch, out[0].second, x);
    note_worst(r, rel_diff<double>(out[0].first, expect),
               to_string(c.shape) + " on " +
                   to_string(std::vector<Index>(c.pdims.begin(), c.pdims.end())));
    ++seed;
  }
  r.seconds = clock.seconds();
  return r;
}

CheckResult check_partition_invariance() {
  Stopwatch clock;
  CheckResult r = make_result("partition_invariance", 1e-8);
  FnoConfig c;
  c.num_blocks = 4;
  c.width = 8;
  c.in_channels = 2;
  c.out_timesteps = 10;
  c.spatial = {16, 16, 16};
  c.modes = {4, 4, 4, 4};
  const std::vector<std::pair<std::vector<int>, std::vector<int>>> layouts{
      {{1, 1, 1, 1, 1, 1}, {}},
      {{1, 1, 2, 1, 1, 1}, {}},
      {{1, 1, 2, 2, 1, 1}, {1, 1, 2, 1, 1, 2}},
      {{1, 1, 2, 2, 2, 1}, {1, 1, 2, 2, 1, 2}},
  };
  c.partition = layouts[0].first;
  auto x = random_vector(static_cast<std::size_t>(volume(input_shape(c))), 21);
  std::vector<double> base;
  for (const auto& [pd, bd] : layouts) {
    c.partition = pd;
    c.block_partition = bd;
    auto y = launch(workers_of(pd), [&](WorkerContext& ctx) {
      FnoModel m = init_model(c, 42, ctx.rank());
      auto a = scatter<double>(x, input_shape(c), m.layout.input, ctx.rank());
      return gather(ctx, fno_forward(ctx, m, a));
    })[0];
    if (base.empty()) {
      base = std::move(y);
      continue;
    }
    note_worst(r, rel_diff<double>(y, base),
               std::to_string(workers_of(pd)) + " workers " +
                   to_string(std::vector<Index>(pd.begin(), pd.end())));
  }
  r.seconds = clock.seconds();
  return r;
}

CheckResult check_gradients(double epsilon) {
  Stopwatch clock;
  CheckResult r = make_result("gradient_fd", 1e-5);
  FnoConfig c;
  c.num_blocks = 2;
  c.width = 4;
  c.in_channels = 1;
  c.out_timesteps = 4;
  c.spatial = {8, 8, 4};
  c.modes = {2, 2, 2, 2};
  c.partition = {1, 1, 2, 1, 1, 1};
  const int workers = workers_of(c.partition);
  const auto x = random_vector(static_cast<std::size_t>(volume(input_shape(c))), 31);
  // A target on the scale of the untrained output keeps the loss sensitive to
  // every parameter; a unit-scale target would bury the derivatives in roundoff.
  auto target = random_vector(static_cast<std::size_t>(volume(output_shape(c))), 32);
  {
    auto y = launch(workers, [&](WorkerContext& ctx) {
      FnoModel m = init_model(c, 8, ctx.rank());
      auto a = scatter<double>(x, input_shape(c), m.layout.input, ctx.rank());
      return gather(ctx, fno_forward(ctx, m, a));
    })[0];
    double ny = 0, nt = 0;
    for (std::size_t i = 0; i < y.size(); ++i) {
      ny += y[i] * y[i];
      nt += target[i] * target[i];
    }
    for (auto& t : target) t *= std::sqrt(ny / nt);
  }

  auto analytic = launch(workers, [&](WorkerContext& ctx) {
    FnoModel m = init_model(c, 8, ctx.rank());
    auto a = scatter<double>(x, input_shape(c), m.layout.input, ctx.rank());
    auto t = scatter<double>(target, output_shape(c), m.layout.channel, ctx.rank());
    Tape tape;
    auto y = fno_forward(ctx, m, a, &tape);
    auto loss = relative_lp_loss_grad(ctx, y, t);
    auto g = fno_backward(ctx, m, tape, loss.gradient);
    FnoModel gm = m;
    gm.params = g.params;
    return std::tuple{gather_params(ctx, m), gather_params(ctx, gm), gather(ctx, g.input)};
  })[0];
  const auto& [params, grads, dinput] = analytic;

  auto loss_at = [&](const std::vector<ParamGroup>& groups, const std::vector<double>& input) {
    return launch(workers, [&](WorkerContext& ctx) {
      FnoModel m = init_model(c, 8, ctx.rank());
      load_params(m, groups);
      auto a = scatter<double>(input, input_shape(c), m.layout.input, ctx.rank());
      auto t = scatter<double>(target, output_shape(c), m.layout.channel, ctx.rank());
      return relative_lp_loss(ctx, fno_forward(ctx, m, a), t);
    })[0];
  };
  auto compare = [&](double analytic_value, double plus, double minus, const std::string& what) {
    const double fd = (plus - minus) / (2 * epsilon);
    const double scale = std::max(std::abs(analytic_value), std::abs(fd));
    note_worst(r, scale > 0 ? std::abs(fd - analytic_value) / scale : 0.0, what);
  };

  const auto modes = effective_modes(c);
  const Shape lifted = lifted_shape(c);
  const Shape sizes(lifted.begin() + 2, lifted.end());
  for (std::size_t gi = 0; gi < params.size(); ++gi) {
    auto dir = random_vector(params[gi].values.size(), 100 + gi);
    if (params[gi].complex) {
      // Directions must stay inside the real-output subspace.
      std::vector<Complex> dc(dir.size() / 2);
      for (std::size_t i = 0; i < dc.size(); ++i) dc[i] = Complex(dir[2 * i], dir[2 * i + 1]);
      dc = hermitian_projection(dc, modes, sizes, c.width, c.width);
      for (std::size_t i = 0; i < dc.size(); ++i) {
        dir[2 * i] = dc[i].real();
        dir[2 * i + 1] = dc[i].imag();
      }
    }
    double an = 0;
    for (std::size_t i = 0; i < dir.size(); ++i) an += grads[gi].values[i] * dir[i];
    auto plus = params, minus = params;
    for (std::size_t i = 0; i < dir.size(); ++i) {
      plus[gi].values[i] += epsilon * dir[i];
      minus[gi].values[i] -= epsilon * dir[i];
    }
    compare(an, loss_at(plus, x), loss_at(minus, x), params[gi].name);
  }
  auto dir = random_vector(x.size(), 99);
  double an = 0;
  for (std::size_t i = 0; i < x.size(); ++i) an += dinput[i] * dir[i];
  auto xp = x, xm = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    xp[i] += epsilon * dir[i];
    xm[i] -= epsilon * dir[i];
  }
  compare(an, loss_at(params, xp), loss_at(params, xm), "input");
  r.seconds = clock.seconds();
  return r;
}

namespace {

std::vector<double> brute_region(const std::vector<double>& all, const Shape& dims,
                                 const RegionBox& box) {
  std::vector<double> out;
  if (box.empty()) return out;
  std::vector<Index> idx(dims.size());
  for (std::size_t d = 0; d < dims.size(); ++d) idx[d] = box.ranges[d].start;
  for (;;) {
    Index flat = 0;
    for (std::size_t d = 0; d < dims.size(); ++d) flat = flat * dims[d] + idx[d];
    out.push_back(all[static_cast<std::size_t>(flat)]);
    std::size_t d = dims.size();
    for (;;) {
      if (d == 0) return out;
      --d;
      if (++idx[d] < box.ranges[d].stop) break;
      idx[d] = box.ranges[d].start;
    }
  }
}

double count_mismatches(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) return static_cast<double>(std::max(a.size(), b.size()));
  double n = 0;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (std::memcmp(&a[i], &b[i], sizeof(double)) != 0) ++n;
  return n;
}

}  // namespace

CheckResult check_file_roundtrip(const std::string& dir, int trials) {
  Stopwatch clock;
  // Discrepancy counts scalars whose bits differ.
  CheckResult r = make_result("file_roundtrip", 0.0);
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) fail(Errc::io, "cannot create " + dir + ": " + ec.message());
  const auto path = (std::filesystem::path(dir) / "roundtrip.dfno").string();
  std::mt19937_64 rng(8);
  auto pick = [&](Index lo, Index hi) { return std::uniform_int_distribution<Index>(lo, hi)(rng); };
  for (int t = 0; t < trials; ++t) {
    const auto nd = static_cast<std::size_t>(pick(1, 4));
    Shape dims(nd), chunk(nd);
    RegionBox box;
    for (std::size_t d = 0; d < nd; ++d) {
      dims[d] = pick(1, 9);
      chunk[d] = pick(1, dims[d]);
      Index a = pick(0, dims[d]), b = pick(0, dims[d]);
      box.ranges.push_back({std::min(a, b), std::max(a, b)});
    }
    std::vector<double> all(static_cast<std::size_t>(volume(dims)));
    for (auto& v : all) v = std::ldexp(std::uniform_real_distribution<double>(-1, 1)(rng), pick(-40, 40));
    write_tensor(path, dims, chunk, all);
    double bad = count_mismatches(read_tensor(path), all) +
                 count_mismatches(read_tensor(path, box), brute_region(all, dims, box));
    note_worst(r, bad, to_string(dims) + " chunk " + to_string(chunk));
  }
  std::filesystem::remove(path, ec);
  r.seconds = clock.seconds();
  return r;
}

std::vector<CheckResult> run_all_checks(const std::string& scratch_dir) {
  return {check_adjoint(),         check_dfft_oracle(),          check_dfft_unitarity(),
          check_mode_ownership(),  check_partition_invariance(), check_gradients(),
          check_file_roundtrip(scratch_dir)};
}

}  // namespace dfno
