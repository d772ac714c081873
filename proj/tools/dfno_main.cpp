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
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "dfno/dfno.h"

namespace {

void print_line(const char* line, void*) {
  std::fputs(line, stdout);
  std::fputc('\n', stdout);
  std::fflush(stdout);
}

int env_workers() {
  const char* v = std::getenv("DFNO_WORKERS");
  if (!v || !*v) return 1;
  char* end = nullptr;
  long n = std::strtol(v, &end, 10);
  if (*end != '\0' || n < 1 || n > 4096) {
    std::fprintf(stderr, "dfno: ignoring invalid DFNO_WORKERS=%s\n", v);
    return 1;
  }
  return static_cast<int>(n);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Domain-decomposed Fourier neural operator toolkit"};
  app.require_subcommand(1);

  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<int> workers;
  bool corrupt_adjoint = false;

  auto add = [&](const char* name, const char* help, bool config_required) {
    auto* cmd = app.add_subcommand(name, help);
    auto* opt = cmd->add_option("--config", config, "JSON run configuration");
    if (config_required) opt->required()->check(CLI::ExistingFile);
    cmd->add_option("--seed", seed, "override the configured seed");
    cmd->add_option("--workers", workers, "worker count (default: DFNO_WORKERS or 1)")
        ->check(CLI::Range(1, 4096));
    return cmd;
  };
  auto* selftest = add("selftest", "run the invariant suites", false);
  selftest->add_flag("--debug-corrupt-adjoint", corrupt_adjoint)->group("");
  auto* gen = add("gen-data", "generate the synthetic heat-equation dataset", true);
  auto* train = add("train", "train a model and write a loss history and checkpoint", true);
  auto* infer = add("infer", "apply a checkpoint to one input file", true);
  auto* bench = add("bench", "weak-scaling timing runs", true);

  CLI11_PARSE(app, argc, argv);

  dfno_run_options options;
  dfno_run_options_init(&options);
  options.workers = workers ? *workers : env_workers();
  options.has_seed = seed.has_value();
  options.seed = seed.value_or(0);
  options.log = print_line;

  const char* path = config.empty() ? nullptr : config.c_str();
  dfno_status status = DFNO_OK;
  if (selftest->parsed()) {
    dfno_debug_set_corrupt_adjoint(corrupt_adjoint ? 1 : 0);
    status = dfno_selftest(path, &options);
  } else if (gen->parsed()) {
    status = dfno_gen_data(path, &options);
  } else if (train->parsed()) {
    status = dfno_train(path, &options);
  } else if (infer->parsed()) {
    status = dfno_infer(path, &options);
  } else if (bench->parsed()) {
    status = dfno_bench(path, &options);
  }
  if (status != DFNO_OK) {
    std::fprintf(stderr, "dfno: %s: %s\n", dfno_status_name(status), dfno_last_error());
    return static_cast<int>(status);
  }
  return 0;
}
