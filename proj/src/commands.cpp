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
#include "dfno/commands.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "dfno/collectives.hpp"
#include "dfno/config.hpp"
#include "dfno/error.hpp"
#include "dfno/heat.hpp"
#include "dfno/tensor_file.hpp"

namespace dfno {
namespace fs = std::filesystem;
namespace {

using Clock = std::chrono::steady_clock;

double since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

template <class... A>
std::string format(const char* f, A... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

void say(const RunOptions& o, const std::string& line) {
  if (o.log) o.log(line);
}

template <class T>
std::string join(std::span<const T> v, const char* sep) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? sep : "") + std::to_string(v[i]);
  return s;
}

void make_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) fail(Errc::io, "cannot create " + dir + ": " + ec.message());
}

std::uint64_t resolve_seed(ConfigReader& r, const RunOptions& o) {
  auto s = r.get<unsigned long long>("seed", 0);
  return o.seed ? *o.seed : s;
}

std::vector<int> read_partition(ConfigReader& r, const std::string& key, std::size_t nd) {
  if (!r.has(key)) return {};
  auto v = r.dims(key);
  require(v.size() == nd, key + ": expected " + std::to_string(nd) + " entries");
  return {v.begin(), v.end()};
}

int product(const std::vector<int>& v) {
  return std::accumulate(v.begin(), v.end(), 1, std::multiplies<>());
}

// Splits the first spatial dim over all workers when no partition is given.
std::vector<int> default_partition(std::size_t nd, int workers) {
  std::vector<int> p(nd, 1);
  p[2] = workers;
  return p;
}

void read_model_section(ConfigReader m, FnoConfig& c) {
  c.width = m.get<int>("width", c.width);
  c.num_blocks = m.get<int>("blocks", c.num_blocks);
  if (m.has("modes")) {
    auto v = m.dims("modes");
    c.modes.assign(v.begin(), v.end());
  }
  c.activation = parse_activation(m.get<std::string>("activation", activation_name(c.activation)));
  m.finish();
}

// Region of the per-sample file (no batch dim) held by this worker.
RealTensor read_local(const std::string& path, const Shape& shape, const Partition& p, int rank) {
  Shape file_dims(shape.begin() + 1, shape.end());
  auto h = read_header(path);
  if (h.dims != file_dims)
    fail(Errc::invalid_argument, path + ": shape " + to_string(h.dims) + ", expected " +
                                     to_string(file_dims));
  RealTensor t(shape, p, rank);
  RegionBox box = t.box();
  box.ranges.erase(box.ranges.begin());
  t.data() = read_tensor(path, box);
  return t;
}

struct Dataset {
  Index n = 0;
  Index n_t = 0;
  Shape input_shape;
  Shape target_shape;
  std::vector<std::pair<std::string, std::string>> files;
};

Dataset read_dataset(const std::string& dir) {
  const auto path = fs::path(dir) / "manifest.json";
  std::ifstream in(path);
  if (!in) fail(Errc::io, "no dataset manifest at " + path.string());
  Dataset d;
  try {
    auto m = nlohmann::json::parse(in);
    d.n = m.at("n").get<Index>();
    d.n_t = m.at("n_t").get<Index>();
    d.input_shape = m.at("input_shape").get<Shape>();
    d.target_shape = m.at("target_shape").get<Shape>();
    for (const auto& f : m.at("files"))
      d.files.emplace_back((fs::path(dir) / f.at("input").get<std::string>()).string(),
                           (fs::path(dir) / f.at("target").get<std::string>()).string());
  } catch (const nlohmann::json::exception& e) {
    fail(Errc::format, path.string() + ": " + e.what());
  }
  if (d.input_shape.size() != 4 || d.target_shape.size() != 4)
    fail(Errc::format, path.string() + ": expected rank-4 sample shapes");
  return d;
}

void shuffle(std::vector<int>& order, std::uint64_t key) {
  // Hash-driven Fisher-Yates; unlike std::shuffle the sequence is fixed by the key alone.
  for (std::size_t i = order.size(); i > 1; --i) {
    auto j = static_cast<std::size_t>(hash_combine(key, i) % i);
    std::swap(order[i - 1], order[j]);
  }
}

void barrier(WorkerContext& ctx) { allreduce_sum(ctx, 0.0); }

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t h = v.size() / 2;
  return v.size() % 2 ? v[h] : 0.5 * (v[h - 1] + v[h]);
}

}  // namespace

bool SelftestReport::passed() const {
  return std::all_of(suites.begin(), suites.end(), [](const auto& s) { return s.passed(); });
}

SelftestReport selftest_cmd(const nlohmann::json& doc, const RunOptions& o) {
  std::string scratch = (fs::temp_directory_path() / "dfno_selftest").string();
  int seeds = 50;
  if (!doc.is_null()) {
    ConfigReader r(doc, "selftest");
    scratch = r.get<std::string>("scratch_dir", scratch);
    seeds = r.get<int>("adjoint_seeds", seeds);
    r.finish();
  }
  SelftestReport report;
  const std::vector<std::function<CheckResult()>> suites{
      [&] { return check_adjoint(seeds); },
      [] { return check_dfft_oracle(); },
      [] { return check_dfft_unitarity(); },
      [] { return check_mode_ownership(); },
      [] { return check_partition_invariance(); },
      [] { return check_gradients(); },
      [&] { return check_file_roundtrip(scratch); },
  };
  for (const auto& run : suites) {
    auto r = run();
    const std::string tol = r.tolerance > 0 ? format("%.0e", r.tolerance) : "exact";
    say(o, format("%-4s %-21s max %.3e  tol %-5s  %3d cases  %6.2f s  %s",
                  r.passed() ? "ok" : "FAIL", r.name.c_str(), r.max_discrepancy, tol.c_str(),
                  r.cases, r.seconds, r.detail.c_str()));
    report.suites.push_back(std::move(r));
  }
  int ok = 0;
  for (const auto& s : report.suites) ok += s.passed();
  say(o, format("selftest: %d of %zu suites passed", ok, report.suites.size()));
  return report;
}

void gen_data_cmd(const nlohmann::json& doc, const RunOptions& o) {
  ConfigReader r(doc, "gen-data");
  DatasetOptions d;
  const auto out_dir = r.required<std::string>("out_dir");
  d.samples = r.get<int>("samples", d.samples);
  d.n = r.get<long long>("n", d.n);
  d.n_t = r.get<long long>("n_t", d.n_t);
  d.seed = resolve_seed(r, o);
  d.t_end = r.get<double>("t_end", d.t_end);
  d.log_kappa_std = r.get<double>("log_kappa_std", d.log_kappa_std);
  d.smoothing_passes = r.get<int>("smoothing_passes", d.smoothing_passes);
  d.bump_width = r.get<double>("bump_width", d.bump_width);
  if (r.has("chunk")) {
    auto c = r.dims("chunk");
    d.chunk.assign(c.begin(), c.end());
  }
  r.finish();
  auto t0 = Clock::now();
  generate_dataset(d, out_dir);
  say(o, format("wrote %d samples (%lldx%lld, %lld frames) to %s in %.2f s", d.samples,
                static_cast<long long>(d.n), static_cast<long long>(d.n),
                static_cast<long long>(d.n_t), out_dir.c_str(), since(t0)));
}

TrainReport train_cmd(const nlohmann::json& doc, const RunOptions& o) {
  ConfigReader r(doc, "train");
  const auto data_dir = r.required<std::string>("data_dir");
  const auto out_dir = r.required<std::string>("out_dir");
  const int n_train = r.get<int>("train_samples", 200);
  const int n_val = r.get<int>("val_samples", 50);
  const int epochs = r.get<int>("epochs", 30);
  const int batch = r.get<int>("batch_size", 1);
  const bool shuffled = r.get<bool>("shuffle", true);
  AdamOptions adam_opts;
  adam_opts.lr = r.get<double>("learning_rate", adam_opts.lr);
  const std::uint64_t seed = resolve_seed(r, o);

  Dataset data = read_dataset(data_dir);
  FnoConfig c;
  c.spatial = Shape(data.input_shape.begin() + 1, data.input_shape.end() - 1);
  c.in_channels = static_cast<int>(data.input_shape[0]);
  c.out_channels = static_cast<int>(data.target_shape[0]);
  c.out_timesteps = data.target_shape.back();
  if (r.has("model")) read_model_section(r.child("model"), c);
  const std::size_t nd = tensor_ndim(c);
  c.partition = read_partition(r, "partition", nd);
  c.block_partition = read_partition(r, "block_partition", nd);
  r.finish();

  require(batch == 1, "train: only batch_size 1 is supported");
  require(epochs >= 1, "train: epochs must be positive");
  require(n_train >= 1 && n_val >= 1, "train: need at least one training and one validation sample");
  require(adam_opts.lr >= 0, "train: learning_rate must be non-negative");
  if (static_cast<std::size_t>(n_train + n_val) > data.files.size())
    fail(Errc::invalid_argument, format("train: %d + %d samples requested, dataset has %zu",
                                        n_train, n_val, data.files.size()));
  if (c.partition.empty()) c.partition = default_partition(nd, o.workers);
  validate(c);
  if (product(c.partition) != o.workers)
    fail(Errc::invalid_argument, format("train: partition uses %d workers, %d available",
                                        product(c.partition), o.workers));

  say(o, format("train: %d workers, partition (%s), %llu parameters", o.workers,
                join<int>(c.partition, ",").c_str(),
                static_cast<unsigned long long>(parameter_count(c))));
  make_dir(out_dir);
  TrainReport report;
  report.loss_csv = (fs::path(out_dir) / "loss.csv").string();
  report.checkpoint_dir = (fs::path(out_dir) / "checkpoint").string();

  report.history = launch(o.workers, [&](WorkerContext& ctx) {
    const int rank = ctx.rank();
    FnoModel model = init_model(c, seed, rank);
    AdamState adam = make_adam(model.params, adam_opts);
    std::vector<RealTensor> xs, ts;
    for (int i = 0; i < n_train + n_val; ++i) {
      xs.push_back(read_local(data.files[i].first, input_shape(c), model.layout.input, rank));
      ts.push_back(read_local(data.files[i].second, output_shape(c), model.layout.channel, rank));
    }
    std::vector<EpochLoss> history;
    std::vector<int> order(static_cast<std::size_t>(n_train));
    for (int epoch = 1; epoch <= epochs; ++epoch) {
      auto t0 = Clock::now();
      std::iota(order.begin(), order.end(), 0);
      if (shuffled) shuffle(order, hash_combine(seed, static_cast<std::uint64_t>(epoch)));
      double train = 0;
      for (int i : order) {
        Tape tape;
        auto y = fno_forward(ctx, model, xs[i], &tape);
        auto loss = relative_lp_loss_grad(ctx, y, ts[i]);
        auto g = fno_backward(ctx, model, tape, loss.gradient);
        adam_step(model.params, g.params, adam);
        train += loss.value;
      }
      double val = 0;
      for (int i = n_train; i < n_train + n_val; ++i)
        val += relative_lp_loss(ctx, fno_forward(ctx, model, xs[i]), ts[i]);
      history.push_back({epoch, train / n_train, val / n_val});
      if (rank == 0)
        say(o, format("epoch %3d  train %.6f  val %.6f  (%.1f s)", epoch, history.back().train,
                      history.back().validation, since(t0)));
    }
    auto groups = gather_params(ctx, model);
    if (rank == 0) write_checkpoint(report.checkpoint_dir, c, groups);
    return history;
  })[0];

  std::ofstream csv(report.loss_csv, std::ios::trunc);
  csv << "epoch,train_loss,val_loss\n";
  for (const auto& e : report.history)
    csv << format("%d,%.17g,%.17g\n", e.epoch, e.train, e.validation);
  if (!csv) fail(Errc::io, "cannot write " + report.loss_csv);
  return report;
}

InferReport infer_cmd(const nlohmann::json& doc, const RunOptions& o) {
  ConfigReader r(doc, "infer");
  const auto ckpt_dir = r.required<std::string>("checkpoint");
  const auto input = r.required<std::string>("input");
  InferReport report;
  report.output = r.required<std::string>("output");
  Checkpoint ck = read_checkpoint(ckpt_dir);
  FnoConfig c = ck.config;
  const std::size_t nd = tensor_ndim(c);
  c.partition = read_partition(r, "partition", nd);
  c.block_partition = read_partition(r, "block_partition", nd);
  r.finish();
  if (c.partition.empty()) c.partition = default_partition(nd, o.workers);
  validate(c);
  if (product(c.partition) != o.workers)
    fail(Errc::invalid_argument, format("infer: partition uses %d workers, %d available",
                                        product(c.partition), o.workers));
  const Shape in_shape = input_shape(c);
  const Shape expect(in_shape.begin() + 1, in_shape.end());
  if (read_header(input).dims != expect)
    fail(Errc::invalid_argument, "infer: input " + input + " has shape " +
                                     to_string(read_header(input).dims) +
                                     ", checkpoint expects " + to_string(expect));

  const Shape out_shape = output_shape(c);
  report.output_shape = Shape(out_shape.begin() + 1, out_shape.end());
  report.seconds = launch(o.workers, [&](WorkerContext& ctx) {
    FnoModel model = init_model(c, 0, ctx.rank());
    load_params(model, ck.groups);
    auto a = read_local(input, in_shape, model.layout.input, ctx.rank());
    barrier(ctx);
    auto t0 = Clock::now();
    auto y = fno_forward(ctx, model, a);
    barrier(ctx);
    const double seconds = since(t0);
    auto global = gather(ctx, y);
    if (ctx.rank() == 0) {
      Shape chunk = report.output_shape;
      for (std::size_t d = 1; d + 1 < chunk.size(); ++d) chunk[d] = std::min<Index>(chunk[d], 16);
      write_tensor(report.output, report.output_shape, chunk, global);
    }
    return seconds;
  })[0];
  say(o, format("elapsed_seconds %.6f", report.seconds));
  say(o, "wrote " + report.output + " " + to_string(report.output_shape));
  return report;
}

std::vector<int> bench_partition(int workers) {
  require(workers >= 1 && (workers & (workers - 1)) == 0,
          "bench: worker counts must be powers of two");
  std::vector<int> dims(6, 1);
  int axis = 0;
  for (int q = workers; q > 1; q /= 2) {
    dims[2 + axis] *= 2;
    axis = (axis + 1) % 3;
  }
  return dims;
}

std::vector<BenchRow> bench_cmd(const nlohmann::json& doc, const RunOptions& o) {
  ConfigReader r(doc, "bench");
  auto series = r.get<std::vector<std::string>>("series", {"spatial", "temporal"});
  std::vector<long long> counts{1, 2, 4, 8};
  if (r.has("workers")) counts = r.dims("workers");
  const Index base = r.get<long long>("base", 32);
  const Index steps = r.get<long long>("time_steps", 20);
  FnoConfig model;
  model.width = r.get<int>("width", 20);
  model.num_blocks = r.get<int>("blocks", 4);
  model.activation = parse_activation(r.get<std::string>("activation", "relu"));
  const Index ms = std::min<Index>(8, base / 2), mt = std::min<Index>(8, steps / 2);
  model.modes = {ms, ms, ms, mt};
  if (r.has("modes")) {
    auto v = r.dims("modes");
    model.modes.assign(v.begin(), v.end());
  }
  const int warmup = r.get<int>("warmup", 2);
  const int reps = r.get<int>("repetitions", 5);
  const auto output = r.get<std::string>("output", "");
  const std::uint64_t seed = resolve_seed(r, o);
  r.finish();

  require(warmup >= 2 && reps >= 5, "bench: need at least 2 warmups and 5 timed repetitions");
  for (const auto& s : series)
    require(s == "spatial" || s == "temporal", "bench: unknown series '" + s + "'");
  for (long long p : counts)
    if (p > o.workers)
      fail(Errc::invalid_argument, format("bench: row needs %lld workers, only %d available", p,
                                          o.workers));

  std::vector<BenchRow> rows;
  for (const auto& s : series) {
    Index series_volume = -1;
    for (long long count : counts) {
      const int p = static_cast<int>(count);
      FnoConfig c = model;
      c.partition = bench_partition(p);
      if (s == "spatial") {
        c.spatial = {base * c.partition[2], base * c.partition[3], base * c.partition[4]};
        c.out_timesteps = steps;
      } else {
        c.spatial = {base, base, base};
        c.out_timesteps = steps * p;
      }
      validate(c);
      const Partition part = make_partition(c.partition);
      Shape lifted_in = input_shape(c);
      lifted_in.back() = c.out_timesteps;
      // Per-worker volume of the time-lifted input; both series hold it fixed.
      Index local = -1;
      for (int rank = 0; rank < p; ++rank) {
        Index v = local_region(part, rank, lifted_in).volume();
        if (local >= 0 && v != local)
          fail(Errc::internal, "bench: unbalanced local volume in the " + s + " series");
        local = v;
      }
      if (series_volume >= 0 && local != series_volume)
        fail(Errc::internal, "bench: local volume changes across the " + s + " series");
      series_volume = local;

      auto times = launch(p, [&](WorkerContext& ctx) {
        FnoModel m = init_model(c, seed, ctx.rank());
        RealTensor a(input_shape(c), m.layout.input, ctx.rank());
        fill_random(a, hash_combine(seed, 1));
        std::vector<double> infer, fwd, bwd;
        for (int k = 0; k < warmup + reps; ++k) {
          barrier(ctx);
          auto t0 = Clock::now();
          fno_forward(ctx, m, a);
          barrier(ctx);
          if (k >= warmup) infer.push_back(since(t0));
        }
        RealTensor g;
        for (int k = 0; k < warmup + reps; ++k) {
          Tape tape;
          barrier(ctx);
          auto t0 = Clock::now();
          auto y = fno_forward(ctx, m, a, &tape);
          barrier(ctx);
          if (k >= warmup) fwd.push_back(since(t0));
          if (!g.active()) {
            g = y.zeros_like();
            fill_random(g, hash_combine(seed, 2));
          }
          barrier(ctx);
          t0 = Clock::now();
          fno_backward(ctx, m, tape, g);
          barrier(ctx);
          if (k >= warmup) bwd.push_back(since(t0));
        }
        return std::array<double, 3>{median(infer), median(fwd), median(bwd)};
      })[0];

      const char* phases[] = {"inference", "forward_train", "backward"};
      for (int ph = 0; ph < 3; ++ph) {
        rows.push_back({s, p, c.partition, input_shape(c), output_shape(c), phases[ph],
                        times[ph], local});
        say(o, format("%-8s p=%d  (%s)  %-13s %.4f s  local volume %lld", s.c_str(), p,
                      join<int>(c.partition, ",").c_str(), phases[ph], times[ph],
                      static_cast<long long>(local)));
      }
    }
  }

  if (!output.empty()) {
    if (fs::path(output).has_parent_path()) make_dir(fs::path(output).parent_path().string());
    std::ofstream csv(output, std::ios::trunc);
    csv << "series,p,partition,input_shape,output_shape,phase,median_seconds,local_volume\n";
    for (const auto& row : rows)
      csv << row.series << ',' << row.workers << ',' << join<int>(row.partition, "x") << ','
          << join<Index>(row.input_shape, "x") << ',' << join<Index>(row.output_shape, "x") << ','
          << row.phase << ',' << format("%.9f", row.median_seconds) << ',' << row.local_volume
          << '\n';
    if (!csv) fail(Errc::io, "cannot write " + output);
  }
  return rows;
}

// ---- checkpoints ----

nlohmann::ordered_json model_to_json(const FnoConfig& c) {
  nlohmann::ordered_json j;
  j["width"] = c.width;
  j["blocks"] = c.num_blocks;
  j["modes"] = effective_modes(c);
  j["activation"] = activation_name(c.activation);
  j["in_channels"] = c.in_channels;
  j["out_channels"] = c.out_channels;
  j["out_timesteps"] = c.out_timesteps;
  j["spatial"] = c.spatial;
  return j;
}

FnoConfig model_from_json(const nlohmann::json& doc) {
  ConfigReader r(doc, "model");
  FnoConfig c;
  c.width = r.required<int>("width");
  c.num_blocks = r.required<int>("blocks");
  auto modes = r.dims("modes");
  c.modes.assign(modes.begin(), modes.end());
  c.activation = parse_activation(r.required<std::string>("activation"));
  c.in_channels = r.required<int>("in_channels");
  c.out_channels = r.required<int>("out_channels");
  c.out_timesteps = r.required<long long>("out_timesteps");
  auto spatial = r.dims("spatial");
  c.spatial.assign(spatial.begin(), spatial.end());
  r.finish();
  return c;
}

void write_checkpoint(const std::string& dir, const FnoConfig& config,
                      const std::vector<ParamGroup>& groups) {
  make_dir(dir);
  nlohmann::ordered_json m;
  m["format"] = "dfno-checkpoint";
  m["version"] = 1;
  m["model"] = model_to_json(config);
  m["groups"] = nlohmann::ordered_json::array();
  for (const auto& g : groups) {
    const std::string file = g.name + ".dfno";
    const auto path = (fs::path(dir) / file).string();
    if (g.complex) {
      std::vector<Complex> v(g.values.size() / 2);
      for (std::size_t i = 0; i < v.size(); ++i) v[i] = {g.values[2 * i], g.values[2 * i + 1]};
      write_tensor(path, g.shape, g.shape, v);
    } else {
      write_tensor(path, g.shape, g.shape, g.values);
    }
    m["groups"].push_back({{"name", g.name},
                           {"file", file},
                           {"shape", g.shape},
                           {"dtype", g.complex ? "complex128" : "real64"}});
  }
  std::ofstream out(fs::path(dir) / "manifest.json", std::ios::trunc);
  out << m.dump(2) << "\n";
  if (!out) fail(Errc::io, "cannot write checkpoint manifest in " + dir);
}

Checkpoint read_checkpoint(const std::string& dir) {
  const auto path = fs::path(dir) / "manifest.json";
  std::ifstream in(path);
  if (!in) fail(Errc::io, "no checkpoint manifest at " + path.string());
  Checkpoint ck;
  std::vector<std::string> files;
  try {
    auto m = nlohmann::json::parse(in);
    if (m.at("format") != "dfno-checkpoint" || m.at("version") != 1)
      fail(Errc::format, path.string() + ": not a version 1 checkpoint");
    ck.config = model_from_json(m.at("model"));
    for (const auto& g : m.at("groups")) {
      ParamGroup p;
      p.name = g.at("name").get<std::string>();
      p.shape = g.at("shape").get<Shape>();
      p.complex = g.at("dtype") == "complex128";
      ck.groups.push_back(std::move(p));
      files.push_back((fs::path(dir) / g.at("file").get<std::string>()).string());
    }
  } catch (const nlohmann::json::exception& e) {
    fail(Errc::format, path.string() + ": " + e.what());
  }
  for (std::size_t i = 0; i < files.size(); ++i) {
    auto& p = ck.groups[i];
    if (read_header(files[i]).dims != p.shape)
      fail(Errc::format, files[i] + ": shape does not match the checkpoint manifest");
    if (p.complex) {
      for (auto v : read_tensor_complex(files[i])) {
        p.values.push_back(v.real());
        p.values.push_back(v.imag());
      }
    } else {
      p.values = read_tensor(files[i]);
    }
  }
  return ck;
}

}  // namespace dfno
