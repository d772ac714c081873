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
#include "dfno/dfno.h"

#include <string>

#include "dfno/collectives.hpp"
#include "dfno/commands.hpp"
#include "dfno/config.hpp"
#include "dfno/error.hpp"
#include "dfno/partition.hpp"
#include "dfno/tensor_file.hpp"

struct dfno_partition {
  dfno::Partition impl;
};

namespace {

thread_local std::string g_last_error;

dfno_status to_status(dfno::Errc code) {
  switch (code) {
    case dfno::Errc::invalid_argument: return DFNO_INVALID_ARGUMENT;
    case dfno::Errc::protocol: return DFNO_PROTOCOL;
    case dfno::Errc::plan: return DFNO_PLAN;
    case dfno::Errc::format: return DFNO_FORMAT;
    case dfno::Errc::io: return DFNO_IO;
    case dfno::Errc::invalid_state: return DFNO_INVALID_STATE;
    case dfno::Errc::numeric: return DFNO_NUMERIC;
    default: return DFNO_INTERNAL;
  }
}

template <class F>
dfno_status guarded(F&& body) {
  g_last_error.clear();
  try {
    return body();
  } catch (const dfno::Error& e) {
    g_last_error = e.what();
    return to_status(e.code());
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return DFNO_INTERNAL;
  } catch (...) {
    g_last_error = "unknown exception";
    return DFNO_INTERNAL;
  }
}

dfno_status null_argument(const char* what) {
  g_last_error = std::string(what) + " is NULL";
  return DFNO_INVALID_ARGUMENT;
}

dfno::RunOptions run_options(const dfno_run_options* o) {
  dfno::RunOptions r;
  if (!o) return r;
  if (o->has_seed) r.seed = o->seed;
  r.workers = o->workers > 0 ? o->workers : 1;
  if (o->log) {
    auto fn = o->log;
    void* user = o->log_user;
    r.log = [fn, user](const std::string& line) { fn(line.c_str(), user); };
  }
  return r;
}

nlohmann::json config_or_null(const char* path) {
  return path ? dfno::load_config(path) : nlohmann::json();
}

}  // namespace

extern "C" {

const char* dfno_status_name(dfno_status status) {
  switch (status) {
    case DFNO_OK: return "ok";
    case DFNO_INVALID_ARGUMENT: return "invalid_argument";
    case DFNO_PROTOCOL: return "protocol";
    case DFNO_PLAN: return "plan";
    case DFNO_FORMAT: return "format";
    case DFNO_IO: return "io";
    case DFNO_INVALID_STATE: return "invalid_state";
    case DFNO_NUMERIC: return "numeric";
    case DFNO_INTERNAL: return "internal";
    case DFNO_CHECK_FAILED: return "check_failed";
  }
  return "unknown";
}

const char* dfno_last_error(void) { return g_last_error.c_str(); }

const char* dfno_version(void) { return "0.1.0"; }

dfno_status dfno_partition_create(const int* dims, size_t ndim, dfno_partition** out) {
  if (!out) return null_argument("out");
  if (!dims && ndim > 0) return null_argument("dims");
  return guarded([&] {
    *out = new dfno_partition{dfno::make_partition(std::vector<int>(dims, dims + ndim))};
    return DFNO_OK;
  });
}

void dfno_partition_destroy(dfno_partition* partition) { delete partition; }

dfno_status dfno_partition_size(const dfno_partition* partition, int* workers) {
  if (!partition) return null_argument("partition");
  if (!workers) return null_argument("workers");
  g_last_error.clear();
  *workers = partition->impl.size();
  return DFNO_OK;
}

dfno_status dfno_partition_local_region(const dfno_partition* partition, int rank,
                                        const int64_t* shape, size_t ndim, int64_t* start,
                                        int64_t* stop) {
  if (!partition) return null_argument("partition");
  if (!shape || !start || !stop) return null_argument("shape/start/stop");
  return guarded([&] {
    const auto& p = partition->impl;
    if (ndim != p.ndim())
      dfno::fail(dfno::Errc::invalid_argument, "shape rank does not match the partition");
    if (!p.contains_rank(rank))
      dfno::fail(dfno::Errc::invalid_argument, "rank " + std::to_string(rank) +
                                                   " is outside the partition");
    auto box = dfno::local_region(p, rank, dfno::Shape(shape, shape + ndim));
    for (size_t d = 0; d < ndim; ++d) {
      start[d] = box.ranges[d].start;
      stop[d] = box.ranges[d].stop;
    }
    return DFNO_OK;
  });
}

dfno_status dfno_tensor_write(const char* path, const int64_t* dims, const int64_t* chunk,
                              size_t ndim, const double* values) {
  if (!path) return null_argument("path");
  if (ndim > 0 && (!dims || !chunk)) return null_argument("dims/chunk");
  return guarded([&] {
    dfno::Shape shape(dims, dims + ndim);
    const auto n = static_cast<std::size_t>(dfno::volume(shape));
    if (n > 0 && !values) dfno::fail(dfno::Errc::invalid_argument, "values is NULL");
    dfno::write_tensor(path, shape, dfno::Shape(chunk, chunk + ndim),
                       std::span<const double>(values, n));
    return DFNO_OK;
  });
}

dfno_status dfno_tensor_read_header(const char* path, size_t* ndim, int64_t* dims,
                                    int64_t* chunk, size_t capacity) {
  if (!path) return null_argument("path");
  if (!ndim) return null_argument("ndim");
  return guarded([&] {
    auto h = dfno::read_header(path);
    *ndim = h.dims.size();
    for (size_t d = 0; d < h.dims.size() && d < capacity; ++d) {
      if (dims) dims[d] = h.dims[d];
      if (chunk) chunk[d] = h.chunk[d];
    }
    return DFNO_OK;
  });
}

dfno_status dfno_tensor_read(const char* path, const int64_t* start, const int64_t* stop,
                             double* out, size_t capacity) {
  if (!path) return null_argument("path");
  if ((start == nullptr) != (stop == nullptr)) return null_argument("one of start/stop");
  return guarded([&] {
    std::optional<dfno::RegionBox> region;
    if (start) {
      const auto nd = dfno::read_header(path).dims.size();
      region.emplace();
      for (size_t d = 0; d < nd; ++d) region->ranges.push_back({start[d], stop[d]});
    }
    auto values = dfno::read_tensor(path, region);
    if (values.size() > capacity)
      dfno::fail(dfno::Errc::invalid_argument,
                 "output buffer holds " + std::to_string(capacity) + " values, region has " +
                     std::to_string(values.size()));
    if (!values.empty() && !out) dfno::fail(dfno::Errc::invalid_argument, "out is NULL");
    std::copy(values.begin(), values.end(), out);
    return DFNO_OK;
  });
}

void dfno_run_options_init(dfno_run_options* options) {
  if (!options) return;
  options->seed = 0;
  options->has_seed = 0;
  options->workers = 1;
  options->log = nullptr;
  options->log_user = nullptr;
}

dfno_status dfno_selftest(const char* config_path, const dfno_run_options* options) {
  return guarded([&] {
    auto report = dfno::selftest_cmd(config_or_null(config_path), run_options(options));
    if (report.passed()) return DFNO_OK;
    g_last_error = "selftest: one or more suites failed";
    return DFNO_CHECK_FAILED;
  });
}

dfno_status dfno_gen_data(const char* config_path, const dfno_run_options* options) {
  if (!config_path) return null_argument("config_path");
  return guarded([&] {
    dfno::gen_data_cmd(dfno::load_config(config_path), run_options(options));
    return DFNO_OK;
  });
}

dfno_status dfno_train(const char* config_path, const dfno_run_options* options) {
  if (!config_path) return null_argument("config_path");
  return guarded([&] {
    dfno::train_cmd(dfno::load_config(config_path), run_options(options));
    return DFNO_OK;
  });
}

dfno_status dfno_infer(const char* config_path, const dfno_run_options* options) {
  if (!config_path) return null_argument("config_path");
  return guarded([&] {
    dfno::infer_cmd(dfno::load_config(config_path), run_options(options));
    return DFNO_OK;
  });
}

dfno_status dfno_bench(const char* config_path, const dfno_run_options* options) {
  if (!config_path) return null_argument("config_path");
  return guarded([&] {
    dfno::bench_cmd(dfno::load_config(config_path), run_options(options));
    return DFNO_OK;
  });
}

void dfno_debug_set_corrupt_adjoint(int on) { dfno::debug::set_corrupt_adjoint(on != 0); }

}  // extern "C"
