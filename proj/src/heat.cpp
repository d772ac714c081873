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
#include "dfno/heat.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "dfno/collectives.hpp"
#include "dfno/error.hpp"
#include "dfno/tensor_file.hpp"
#include "json.hpp"

namespace dfno {

double stable_dt(std::span<const double> kappa, double h) {
  double kmax = 0.0;
  for (double k : kappa) kmax = std::max(kmax, k);
  require(kmax > 0.0, "heat: diffusivity must be positive");
  return h * h / (4.0 * kmax);
}

std::vector<double> heat_step(std::span<const double> u, std::span<const double> kappa, Index nx,
                              Index ny, double dt, double h) {
  require(static_cast<Index>(u.size()) == nx * ny && u.size() == kappa.size(),
          "heat_step: field sizes do not match the grid");
  if (dt > stable_dt(kappa, h) * (1.0 + 1e-12))
    fail(Errc::invalid_argument, "heat_step: dt = " + std::to_string(dt) +
                                     " exceeds the stability limit h^2/(4 max kappa) = " +
                                     std::to_string(stable_dt(kappa, h)));
  const double r = dt / (h * h);
  std::vector<double> out(u.begin(), u.end());
  // Each interior face moves the same flux out of one cell and into the other.
  for (Index i = 0; i < nx; ++i)
    for (Index j = 0; j < ny; ++j) {
      const Index c = i * ny + j;
      if (i + 1 < nx) {
        const Index e = c + ny;
        double f = r * 0.5 * (kappa[c] + kappa[e]) * (u[e] - u[c]);
        out[c] += f;
        out[e] -= f;
      }
      if (j + 1 < ny) {
        const Index e = c + 1;
        double f = r * 0.5 * (kappa[c] + kappa[e]) * (u[e] - u[c]);
        out[c] += f;
        out[e] -= f;
      }
    }
  return out;
}

std::vector<double> gaussian_bump(Index n, double width) {
  std::vector<double> u(static_cast<std::size_t>(n * n));
  const double h = 1.0 / static_cast<double>(n);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j) {
      double x = (static_cast<double>(i) + 0.5) * h - 0.5;
      double y = (static_cast<double>(j) + 0.5) * h - 0.5;
      u[i * n + j] = std::exp(-(x * x + y * y) / (2.0 * width * width));
    }
  return u;
}

std::vector<double> diffusivity_field(const DatasetOptions& o, int sample) {
  const Index n = o.n;
  std::vector<double> z(static_cast<std::size_t>(n * n));
  const std::uint64_t key = hash_combine(hash_combine(o.seed, 0x6b617070ULL),
                                         static_cast<std::uint64_t>(sample));
  for (std::size_t i = 0; i < z.size(); ++i) z[i] = uniform_from_key(hash_combine(key, i));
  std::vector<double> tmp(z.size());
  for (int pass = 0; pass < o.smoothing_passes; ++pass) {
    for (Index i = 0; i < n; ++i)
      for (Index j = 0; j < n; ++j) {
        double s = 0.0;
        int count = 0;
        for (Index di = -1; di <= 1; ++di)
          for (Index dj = -1; dj <= 1; ++dj) {
            Index a = i + di, b = j + dj;
            if (a < 0 || b < 0 || a >= n || b >= n) continue;
            s += z[a * n + b];
            ++count;
          }
        tmp[i * n + j] = s / count;
      }
    z.swap(tmp);
  }
  double mean = 0.0, var = 0.0;
  for (double v : z) mean += v;
  mean /= static_cast<double>(z.size());
  for (double v : z) var += (v - mean) * (v - mean);
  const double sd = std::sqrt(var / static_cast<double>(z.size()));
  for (double& v : z) v = std::exp(o.log_kappa_std * (v - mean) / (sd > 0 ? sd : 1.0));
  return z;
}

HeatSample simulate_sample(const DatasetOptions& o, int sample) {
  require(o.n >= 8, "dataset: grid size must be at least 8");
  require(o.n_t >= 2, "dataset: need at least 2 time frames");
  require(o.t_end > 0.0, "dataset: t_end must be positive");
  const Index n = o.n;
  const double h = 1.0 / static_cast<double>(n);
  HeatSample s;
  s.kappa = diffusivity_field(o, sample);
  s.initial = gaussian_bump(n, o.bump_width);
  s.frames.assign(static_cast<std::size_t>(n * n * o.n_t), 0.0);
  const double frame_dt = o.t_end / static_cast<double>(o.n_t);
  const double limit = stable_dt(s.kappa, h);
  const auto steps = static_cast<long>(std::ceil(frame_dt / limit));
  const double dt = frame_dt / static_cast<double>(steps);
  std::vector<double> u = s.initial;
  for (Index f = 0; f < o.n_t; ++f) {
    for (long k = 0; k < steps; ++k) u = heat_step(u, s.kappa, n, n, dt, h);
    for (Index c = 0; c < n * n; ++c) s.frames[static_cast<std::size_t>(c * o.n_t + f)] = u[c];
  }
  return s;
}

std::string input_file_name(int sample) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "input_%04d.dfno", sample);
  return buf;
}

std::string target_file_name(int sample) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "target_%04d.dfno", sample);
  return buf;
}

void generate_dataset(const DatasetOptions& o, const std::string& out_dir) {
  require(o.samples >= 1, "dataset: need at least one sample");
  require(o.chunk.size() == 2 && o.chunk[0] >= 1 && o.chunk[1] >= 1,
          "dataset: chunk needs two positive spatial extents");
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) fail(Errc::io, "cannot create " + out_dir + ": " + ec.message());
  const Index n = o.n;
  nlohmann::ordered_json files = nlohmann::ordered_json::array();
  for (int i = 0; i < o.samples; ++i) {
    HeatSample s = simulate_sample(o, i);
    std::vector<double> input(s.kappa);
    input.insert(input.end(), s.initial.begin(), s.initial.end());
    const auto in_path = (std::filesystem::path(out_dir) / input_file_name(i)).string();
    const auto out_path = (std::filesystem::path(out_dir) / target_file_name(i)).string();
    write_tensor(in_path, Shape{2, n, n, 1}, Shape{2, o.chunk[0], o.chunk[1], 1}, input);
    write_tensor(out_path, Shape{1, n, n, o.n_t}, Shape{1, o.chunk[0], o.chunk[1], o.n_t},
                 s.frames);
    files.push_back({{"input", input_file_name(i)}, {"target", target_file_name(i)}});
  }
  nlohmann::ordered_json m;
  m["kind"] = "heat2d";
  m["samples"] = o.samples;
  m["n"] = n;
  m["n_t"] = o.n_t;
  m["seed"] = o.seed;
  m["t_end"] = o.t_end;
  m["log_kappa_std"] = o.log_kappa_std;
  m["smoothing_passes"] = o.smoothing_passes;
  m["bump_width"] = o.bump_width;
  m["chunk"] = o.chunk;
  m["input_shape"] = Shape{2, n, n, 1};
  m["target_shape"] = Shape{1, n, n, o.n_t};
  m["files"] = files;
  std::ofstream out(std::filesystem::path(out_dir) / "manifest.json");
  out << m.dump(2) << "\n";
  if (!out) fail(Errc::io, "cannot write manifest in " + out_dir);
}

}  // namespace dfno
