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
#include <cmath>
#include <random>
#include <set>

#include "doctest.h"
#include "dfno/model.hpp"
#include "dfno/reference.hpp"

using namespace dfno;

namespace {

FnoConfig tiny_config(std::vector<int> partition, std::vector<int> block = {}) {
  FnoConfig c;
  c.num_blocks = 2;
  c.width = 4;
  c.in_channels = 1;
  c.out_timesteps = 4;
  c.spatial = {8, 8, 8};
  c.modes = {2, 2, 2, 2};
  c.partition = std::move(partition);
  c.block_partition = std::move(block);
  return c;
}

std::vector<double> random_vector(std::size_t n, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1, 1);
  std::vector<double> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

double rel_diff(std::span<const double> a, std::span<const double> b) {
  double num = 0, den = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += (a[i] - b[i]) * (a[i] - b[i]);
    den += b[i] * b[i];
  }
  return den == 0 ? std::sqrt(num) : std::sqrt(num / den);
}

int workers_of(const std::vector<int>& dims) {
  int n = 1;
  for (int d : dims) n *= d;
  return n;
}

std::vector<double> run_forward(const FnoConfig& c, std::uint64_t seed,
                                const std::vector<double>& input) {
  auto out = launch(workers_of(c.partition), [&](WorkerContext& ctx) {
    FnoModel m = init_model(c, seed, ctx.rank());
    auto a = scatter<double>(input, input_shape(c), m.layout.input, ctx.rank());
    return gather(ctx, fno_forward(ctx, m, a));
  });
  return out[0];
}

}  // namespace

TEST_CASE("mode ownership worked examples") {
  std::vector<Index> m{2}, n{8};
  auto all = mode_ownership(RegionBox{{{0, 8}}}, m, n);
  std::vector<Index> got;
  for (const auto& o : all) got.push_back(o.mode[0]);
  CHECK(got == std::vector<Index>{0, 1, 6, 7});

  auto upper = mode_ownership(RegionBox{{{4, 8}}}, m, n);
  REQUIRE(upper.size() == 2);
  CHECK(upper[0].offset == 2);
  CHECK(upper[1].offset == 3);
  CHECK(upper[0].mode[0] == 6);
  CHECK(mode_ownership(RegionBox{{{2, 6}}}, m, n).empty());

  std::vector<Index> too_many{5};
  CHECK_THROWS_AS(mode_ownership(RegionBox{{{0, 8}}}, too_many, n), Error);
}

TEST_CASE("mode ownership partitions the retained set exactly") {
  std::mt19937 rng(5);
  for (int trial = 0; trial < 40; ++trial) {
    std::size_t r = 1 + rng() % 3;
    std::vector<Index> sizes(r), modes(r);
    std::vector<int> pdims(r);
    for (std::size_t d = 0; d < r; ++d) {
      sizes[d] = 2 + rng() % 15;
      modes[d] = 1 + rng() % (sizes[d] / 2);
      pdims[d] = 1 + static_cast<int>(rng() % 3);
    }
    auto p = make_partition(pdims);
    std::multiset<std::vector<Index>> seen;
    for (int rank = 0; rank < p.size(); ++rank) {
      RegionBox box = local_region(p, rank, sizes);
      for (const auto& o : mode_ownership(box, modes, sizes)) {
        // offset must address the mode inside the box
        Index off = 0;
        for (std::size_t d = 0; d < r; ++d)
          off = off * box.ranges[d].size() + (o.mode[d] - box.ranges[d].start);
        CHECK(off == o.offset);
        seen.insert(o.mode);
      }
    }
    std::multiset<std::vector<Index>> expect;
    std::vector<Index> k(r, 0);
    while (true) {
      bool keep = true;
      for (std::size_t d = 0; d < r; ++d) keep = keep && (k[d] < modes[d] || k[d] >= sizes[d] - modes[d]);
      if (keep) expect.insert(k);
      std::size_t d = r;
      bool done = true;
      while (d-- > 0) {
        if (++k[d] < sizes[d]) {
          done = false;
          break;
        }
        k[d] = 0;
      }
      if (done) break;
    }
    CHECK(seen == expect);
  }
}

TEST_CASE("on a 3x3 partition only corner workers own modes") {
  auto p = make_partition({3, 3});
  std::vector<Index> sizes{9, 9}, modes{2, 2};
  for (int rank = 0; rank < 9; ++rank) {
    auto c = p.coords(rank);
    bool corner = c[0] != 1 && c[1] != 1;
    CHECK(mode_ownership(local_region(p, rank, sizes), modes, sizes).empty() == !corner);
  }
}

TEST_CASE("mode kinds and Hermitian projection") {
  std::vector<Index> n{8}, m{2};
  CHECK(mode_kind(std::vector<Index>{0}, m, n) == ModeKind::self_conjugate);
  CHECK(mode_kind(std::vector<Index>{1}, m, n) == ModeKind::leading);
  CHECK(mode_kind(std::vector<Index>{7}, m, n) == ModeKind::mirror);
  CHECK(mode_kind(std::vector<Index>{6}, m, n) == ModeKind::frozen);
  std::vector<Index> n4{4}, m4{2};
  CHECK(mode_kind(std::vector<Index>{2}, m4, n4) == ModeKind::self_conjugate);

  std::vector<Complex> dense{{1, 2}, {3, 4}, {5, 6}, {7, 8}};
  auto h = hermitian_projection(dense, m, n, 1, 1);
  CHECK(h[0] == Complex(1, 0));
  CHECK(h[1] == Complex(3, 4));
  CHECK(h[2] == Complex(0, 0));
  CHECK(h[3] == Complex(3, -4));
}

TEST_CASE("distributed spectral convolution matches the sequential reference") {
  struct Case {
    std::vector<int> pdims;
    Shape shape;
    std::vector<Index> modes;
  };
  std::vector<Case> cases{
      {{1, 1, 2, 2, 1}, {1, 8, 16, 16, 8}, {4, 4, 3}},
      {{1, 1, 3, 3}, {1, 2, 9, 12}, {2, 3}},
      {{1, 1, 2, 2, 2, 1}, {1, 3, 8, 6, 4, 4}, {2, 3, 2, 1}},
      {{1, 1, 1, 1, 2, 2}, {2, 2, 6, 4, 8, 6}, {3, 1, 2, 2}},
  };
  for (const auto& c : cases) {
    CAPTURE(to_string(c.shape));
    auto p = make_partition(c.pdims);
    auto x = random_vector(static_cast<std::size_t>(volume(c.shape)), 3);
    const int ch = static_cast<int>(c.shape[1]);
    std::vector<std::size_t> dims;
    for (std::size_t d = 2; d < c.shape.size(); ++d) dims.push_back(d);
    auto out = launch(p.size(), [&](WorkerContext& ctx) {
      auto plan = plan_dfft(p, c.shape, dims);
      auto w = make_spectral_weights(plan, ctx.rank(), c.modes, ch, ch);
      init_spectral(w, 77);
      auto v = scatter<double>(x, c.shape, p, ctx.rank());
      auto y = gather(ctx, spectral_conv(ctx, v, w, plan));
      auto dense = gather_spectral(ctx, w);
      return std::pair{y, dense};
    });
    auto expect = reference_spectral_conv(c.shape, c.modes, ch, out[0].second, x);
    CHECK(rel_diff(out[0].first, expect) < 1e-10);
  }
}

TEST_CASE("spectral convolution identity and zero cases") {
  Shape shape{1, 2, 8, 6};
  auto p = make_partition({1, 1, 2, 2});
  auto x = random_vector(96, 4);
  auto out = launch(4, [&](WorkerContext& ctx) {
    auto plan = plan_dfft(p, shape, {2, 3});
    auto v = scatter<double>(x, shape, p, ctx.rank());
    auto zero = make_spectral_weights(plan, ctx.rank(), {2, 2}, 2, 2);
    auto z = gather(ctx, spectral_conv(ctx, v, zero, plan));
    auto ident = make_spectral_weights(plan, ctx.rank(), {4, 3}, 2, 2);
    for (std::size_t i = 0; i < ident.owned.size(); ++i) {
      ident.matrix(i)[0] = 1.0;
      ident.matrix(i)[3] = 1.0;
    }
    auto y = gather(ctx, spectral_conv(ctx, v, ident, plan));
    return std::pair{z, y};
  });
  for (double v : out[0].first) CHECK(v == 0.0);
  double worst = 0;
  for (std::size_t i = 0; i < x.size(); ++i) worst = std::max(worst, std::abs(out[0].second[i] - x[i]));
  CHECK(worst < 1e-12);
}

TEST_CASE("non-Hermitian weights trip the imaginary residue check") {
  Shape shape{1, 1, 8};
  auto p = make_partition({1, 1, 1});
  try {
    launch(1, [&](WorkerContext& ctx) {
      auto plan = plan_dfft(p, shape, {2});
      auto w = make_spectral_weights(plan, 0, {2}, 1, 1);
      w.values[1] = Complex(0, 1);  // mode 1 without its conjugate partner
      auto v = scatter<double>(random_vector(8, 1), shape, p, 0);
      spectral_conv(ctx, v, w, plan);
    });
    FAIL("expected numeric error");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::numeric);
  }
}

TEST_CASE("affine with broadcast weights matches a dense contraction") {
  Shape shape{10, 20, 64, 64};
  auto x = random_vector(static_cast<std::size_t>(volume(shape)), 8);
  auto W = random_vector(400, 9);
  auto out = launch(8, [&](WorkerContext& ctx) {
    auto px = make_partition({1, 2, 2, 2});
    auto v = scatter<double>(x, shape, px, ctx.rank());
    CHECK_THROWS_AS(affine_pointwise(ctx, v, make_affine(ctx.rank(), 20, 20, false), 1), Error);
    auto v2 = repartition(ctx, v, make_partition({1, 1, 4, 2}));
    AffineParams p = make_affine(ctx.rank(), 20, 20, true);
    if (ctx.rank() == 0) {
      p.weight.data() = W;
      p.bias.data().assign(20, 0.5);
    }
    return gather(ctx, affine_pointwise(ctx, v2, p, 1));
  });
  std::vector<double> expect(x.size());
  const Index inner = 64 * 64;
  for (Index b = 0; b < 10; ++b)
    for (Index j = 0; j < 20; ++j)
      for (Index i = 0; i < inner; ++i) {
        double s = 0.5;
        for (Index k = 0; k < 20; ++k) s += W[j * 20 + k] * x[(b * 20 + k) * inner + i];
        expect[(b * 20 + j) * inner + i] = s;
      }
  CHECK(rel_diff(out[0], expect) < 1e-12);

  auto ident = launch(2, [&](WorkerContext& ctx) {
    auto p2 = make_partition({2, 1});
    auto v = scatter<double>(std::vector<double>{1, 2, 3, 4, 5, 6}, Shape{2, 3}, p2, ctx.rank());
    AffineParams a = make_affine(ctx.rank(), 3, 3, true);
    if (ctx.rank() == 0) a.weight.data() = {1, 0, 0, 0, 1, 0, 0, 0, 1};
    return gather(ctx, affine_pointwise(ctx, v, a, 1));
  });
  CHECK(ident[0] == std::vector<double>{1, 2, 3, 4, 5, 6});
}

TEST_CASE("forward shape contract and partition invariance against the reference") {
  auto x = random_vector(512, 11);
  std::vector<std::pair<std::vector<int>, std::vector<int>>> layouts{
      {{1, 1, 1, 1, 1, 1}, {}},
      {{1, 1, 2, 1, 1, 1}, {1, 1, 1, 1, 1, 2}},
      {{1, 1, 2, 2, 1, 1}, {}},
      {{1, 1, 2, 2, 2, 1}, {1, 1, 2, 2, 1, 2}},
  };
  FnoConfig base = tiny_config({1, 1, 1, 1, 1, 1});
  auto params = launch(1, [&](WorkerContext& ctx) {
    return gather_params(ctx, init_model(base, 42, 0));
  })[0];
  auto expect = reference_forward(base, params, x);
  CHECK(expect.size() == static_cast<std::size_t>(volume(output_shape(base))));
  for (const auto& [pd, bd] : layouts) {
    auto got = run_forward(tiny_config(pd, bd), 42, x);
    CHECK(rel_diff(got, expect) < 1e-8);
  }
}

TEST_CASE("initialization is deterministic and partition-invariant") {
  auto gathered = [](std::vector<int> pd) {
    FnoConfig c = tiny_config(pd);
    return launch(workers_of(pd), [&](WorkerContext& ctx) {
      return gather_params(ctx, init_model(c, 9, ctx.rank()));
    })[0];
  };
  auto a = gathered({1, 1, 1, 1, 1, 1});
  auto b = gathered({1, 1, 2, 1, 1, 1});
  auto c = gathered({1, 1, 2, 2, 1, 1});
  std::uint64_t count = 0;
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].values == b[i].values);
    CHECK(a[i].values == c[i].values);
    count += static_cast<std::uint64_t>(volume(a[i].shape));
  }
  CHECK(count == parameter_count(tiny_config({1, 1, 1, 1, 1, 1})));

  FnoConfig d;
  d.spatial = {64, 64, 64};
  d.out_timesteps = 20;
  d.partition = {1, 1, 1, 1, 1, 1};
  // two lifts with bias, K blocks of (w^2 + w^2 * 16^4), projection
  CHECK(parameter_count(d) == 2 * 20 + 20 + 20 + 4 * (400 + 400ULL * 65536) + 20);
}

TEST_CASE("gradients match the reference backward pass") {
  auto x = random_vector(512, 12);
  FnoConfig c = tiny_config({1, 1, 2, 2, 1, 1}, {1, 1, 1, 2, 1, 2});
  auto target = random_vector(static_cast<std::size_t>(volume(output_shape(c))), 13);
  auto out = launch(4, [&](WorkerContext& ctx) {
    FnoModel m = init_model(c, 5, ctx.rank());
    auto a = scatter<double>(x, input_shape(c), m.layout.input, ctx.rank());
    Tape tape;
    auto y = fno_forward(ctx, m, a, &tape);
    auto t = scatter<double>(target, output_shape(c), m.layout.channel, ctx.rank());
    auto loss = relative_lp_loss_grad(ctx, y, t);
    auto g = fno_backward(ctx, m, tape, loss.gradient);
    CHECK_THROWS_AS(fno_backward(ctx, m, tape, loss.gradient), Error);
    FnoModel gm = m;
    gm.params = g.params;
    return std::tuple{gather_params(ctx, m), gather_params(ctx, gm), gather(ctx, g.input),
                      loss.value};
  });
  auto& [params, grads, dinput, loss] = out[0];
  auto ref = reference_backward(c, params, x, target);
  CHECK(std::abs(ref.loss - loss) < 1e-12 * loss);
  CHECK(rel_diff(dinput, ref.input) < 1e-8);
  for (std::size_t i = 0; i < grads.size(); ++i) {
    CAPTURE(grads[i].name);
    CHECK(rel_diff(grads[i].values, ref.params[i].values) < 1e-8);
  }
}

TEST_CASE("zero loss gradient gives zero parameter gradients; reruns are bitwise equal") {
  FnoConfig c = tiny_config({1, 1, 2, 1, 1, 1});
  auto run = [&](bool zero) {
    return launch(2, [&](WorkerContext& ctx) {
      FnoModel m = init_model(c, 3, ctx.rank());
      RealTensor a(input_shape(c), m.layout.input, ctx.rank());
      fill_random(a, 1);
      Tape tape;
      auto y = fno_forward(ctx, m, a, &tape);
      RealTensor g = y.zeros_like();
      if (!zero) fill_random(g, 2);
      auto grads = fno_backward(ctx, m, tape, g);
      std::vector<double> flat;
      for (auto& v : grads.params.views()) flat.insert(flat.end(), v.values.begin(), v.values.end());
      return flat;
    });
  };
  for (const auto& w : run(true))
    for (double v : w) CHECK(v == 0.0);
  CHECK(run(false) == run(false));
}

TEST_CASE("relative loss values and errors") {
  auto out = launch(2, [](WorkerContext& ctx) {
    auto p = make_partition({2});
    auto t = scatter<double>(std::vector<double>{3, 4, 0, 0}, Shape{4}, p, ctx.rank());
    auto zero = t.zeros_like();
    double same = relative_lp_loss(ctx, t, t);
    double one = relative_lp_loss(ctx, zero, t);
    bool threw = false;
    try {
      relative_lp_loss(ctx, t, zero);
    } catch (const Error& e) {
      threw = e.code() == Errc::numeric;
    }
    return std::tuple{same, one, threw};
  });
  for (const auto& [same, one, threw] : out) {
    CHECK(same == 0.0);
    CHECK(one == 1.0);
    CHECK(threw);
  }
}

TEST_CASE("adam update hand trace") {
  std::vector<double> theta{1.0}, m{0.0}, v{0.0};
  std::vector<double> g{1.0};
  AdamOptions o;
  o.lr = 0.1;
  adam_update(theta, g, m, v, 1, o);
  CHECK(std::abs(theta[0] - (1.0 - 0.1 / (1.0 + 1e-8))) < 1e-15);
  adam_update(theta, g, m, v, 2, o);
  CHECK(std::abs(theta[0] - (1.0 - 0.2)) < 1e-7);

  std::vector<double> zero{0.0}, t2{2.5}, m2{0.0}, v2{0.0};
  adam_update(t2, zero, m2, v2, 1, o);
  CHECK(t2[0] == 2.5);
  CHECK_THROWS_AS(adam_update(t2, std::vector<double>{1, 2}, m2, v2, 1, o), Error);
}

TEST_CASE("configuration validation") {
  FnoConfig c = tiny_config({1, 1, 1, 1, 1, 1});
  c.modes = {2, 2, 2, 3};
  CHECK_THROWS_AS(validate(c), Error);
  c = tiny_config({2, 1, 1, 1, 1, 1});
  CHECK_THROWS_AS(validate(c), Error);
  c = tiny_config({1, 1, 2, 1, 1, 1}, {1, 2, 1, 1, 1, 1});
  CHECK_THROWS_AS(validate(c), Error);
  c = tiny_config({1, 1, 2, 1, 1, 1});
  CHECK_NOTHROW(validate(c));
  CHECK(activation_name(parse_activation("gelu")) == std::string("gelu"));
  CHECK_THROWS_AS(parse_activation("tanh"), Error);
}
