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
#include <stdio.h>
#include <stdlib.h>
#include <string.h>

#include "dfno/dfno.h"

static int failures = 0;

#define CHECK(cond)                                                  \
  do {                                                               \
    if (!(cond)) {                                                   \
      fprintf(stderr, "%s:%d: check failed: %s\n", __FILE__, __LINE__, #cond); \
      ++failures;                                                    \
    }                                                                \
  } while (0)

static void write_text(const char* path, const char* text) {
  FILE* f = fopen(path, "w");
  if (!f) {
    perror(path);
    exit(2);
  }
  fputs(text, f);
  fclose(f);
}

static int lines_logged = 0;

static void count_line(const char* line, void* user) {
  (void)line;
  ++*(int*)user;
}

static void test_partitions(void) {
  int dims[2] = {2, 3};
  dfno_partition* p = NULL;
  CHECK(dfno_partition_create(dims, 2, &p) == DFNO_OK);
  int n = 0;
  CHECK(dfno_partition_size(p, &n) == DFNO_OK && n == 6);

  int64_t shape[2] = {5, 7}, start[2], stop[2];
  CHECK(dfno_partition_local_region(p, 4, shape, 2, start, stop) == DFNO_OK);
  /* rank 4 = coords (1, 1): rows [3,5), cols [3,5) */
  CHECK(start[0] == 3 && stop[0] == 5 && start[1] == 3 && stop[1] == 5);
  CHECK(dfno_partition_local_region(p, 6, shape, 2, start, stop) == DFNO_INVALID_ARGUMENT);
  CHECK(strlen(dfno_last_error()) > 0);
  dfno_partition_destroy(p);

  int bad[2] = {2, 0};
  p = NULL;
  CHECK(dfno_partition_create(bad, 2, &p) == DFNO_INVALID_ARGUMENT);
  CHECK(p == NULL);
  CHECK(dfno_partition_create(dims, 2, NULL) == DFNO_INVALID_ARGUMENT);
}

static void test_tensor_files(const char* dir) {
  char path[512];
  snprintf(path, sizeof path, "%s/capi_enum.dfno", dir);
  double values[16];
  for (int i = 0; i < 16; ++i) values[i] = i;
  int64_t dims[2] = {4, 4}, chunk[2] = {2, 2};
  CHECK(dfno_tensor_write(path, dims, chunk, 2, values) == DFNO_OK);

  size_t nd = 0;
  int64_t hd[4], hc[4];
  CHECK(dfno_tensor_read_header(path, &nd, hd, hc, 4) == DFNO_OK);
  CHECK(nd == 2 && hd[0] == 4 && hd[1] == 4 && hc[0] == 2 && hc[1] == 2);

  double out[16];
  int64_t start[2] = {1, 1}, stop[2] = {3, 3};
  CHECK(dfno_tensor_read(path, start, stop, out, 16) == DFNO_OK);
  CHECK(out[0] == 5 && out[1] == 6 && out[2] == 9 && out[3] == 10);
  CHECK(dfno_tensor_read(path, NULL, NULL, out, 16) == DFNO_OK);
  CHECK(memcmp(out, values, sizeof values) == 0);
  CHECK(dfno_tensor_read(path, NULL, NULL, out, 8) == DFNO_INVALID_ARGUMENT);

  int64_t oob[2] = {0, 5};
  CHECK(dfno_tensor_read(path, start, oob, out, 16) == DFNO_INVALID_ARGUMENT);

  char missing[512];
  snprintf(missing, sizeof missing, "%s/does_not_exist.dfno", dir);
  CHECK(dfno_tensor_read(missing, NULL, NULL, out, 16) == DFNO_IO);

  char text[512];
  snprintf(text, sizeof text, "%s/not_a_tensor.dfno", dir);
  write_text(text, "hello, this is not a tensor file");
  CHECK(dfno_tensor_read(text, NULL, NULL, out, 16) == DFNO_FORMAT);
}

static void test_commands(const char* dir) {
  dfno_run_options o;
  dfno_run_options_init(&o);
  CHECK(o.workers == 1 && o.has_seed == 0 && o.log == NULL);
  o.log = count_line;
  o.log_user = &lines_logged;

  char config[512], body[1024];
  snprintf(config, sizeof config, "%s/capi_gen.json", dir);
  snprintf(body, sizeof body, "{\"out_dir\": \"%s/capi_data\", \"samples\": 2, \"n\": 8, \"n_t\": 2}",
           dir);
  write_text(config, body);
  CHECK(dfno_gen_data(config, &o) == DFNO_OK);
  CHECK(lines_logged > 0);

  snprintf(body, sizeof body, "{\"out_dir\": \"%s/capi_data\", \"sampels\": 2}", dir);
  write_text(config, body);
  CHECK(dfno_gen_data(config, &o) == DFNO_INVALID_ARGUMENT);
  CHECK(strstr(dfno_last_error(), "sampels") != NULL);

  write_text(config, "{ not json");
  CHECK(dfno_gen_data(config, &o) == DFNO_INVALID_ARGUMENT);
  CHECK(dfno_train(NULL, &o) == DFNO_INVALID_ARGUMENT);

  snprintf(config, sizeof config, "%s/capi_bench.json", dir);
  write_text(config, "{\"workers\": [1, 2]}");
  CHECK(dfno_bench(config, &o) == DFNO_INVALID_ARGUMENT);
}

int main(int argc, char** argv) {
  const char* dir = argc > 1 ? argv[1] : ".";
  CHECK(strcmp(dfno_status_name(DFNO_FORMAT), "format") == 0);
  CHECK(strlen(dfno_version()) > 0);
  test_partitions();
  test_tensor_files(dir);
  test_commands(dir);
  if (failures) {
    fprintf(stderr, "%d check(s) failed\n", failures);
    return 1;
  }
  printf("capi: all checks passed\n");
  return 0;
}
