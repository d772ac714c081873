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
#ifndef DFNO_DFNO_H_
#define DFNO_DFNO_H_

#include <stddef.h>
#include <stdint.h>

#if defined(DFNO_BUILDING_LIBRARY) && defined(__GNUC__)
#define DFNO_API __attribute__((visibility("default")))
#else
#define DFNO_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum dfno_status {
  DFNO_OK = 0,
  DFNO_INVALID_ARGUMENT = 1,
  DFNO_PROTOCOL = 2,
  DFNO_PLAN = 3,
  DFNO_FORMAT = 4,
  DFNO_IO = 5,
  DFNO_INVALID_STATE = 6,
  DFNO_NUMERIC = 7,
  DFNO_INTERNAL = 8,
  DFNO_CHECK_FAILED = 9 /* selftest ran but at least one suite failed */
} dfno_status;

DFNO_API const char* dfno_status_name(dfno_status status);
/* Message of the last failure on the calling thread; empty after success. */
DFNO_API const char* dfno_last_error(void);
DFNO_API const char* dfno_version(void);

/* ---- partitions ---- */

typedef struct dfno_partition dfno_partition;

DFNO_API dfno_status dfno_partition_create(const int* dims, size_t ndim, dfno_partition** out);
DFNO_API void dfno_partition_destroy(dfno_partition* partition);
DFNO_API dfno_status dfno_partition_size(const dfno_partition* partition, int* workers);
/* Half-open block [start, stop) owned by `rank` of a tensor of `shape`. */
DFNO_API dfno_status dfno_partition_local_region(const dfno_partition* partition, int rank,
                                        const int64_t* shape, size_t ndim, int64_t* start,
                                        int64_t* stop);

/* ---- chunked tensor files (real64) ---- */

DFNO_API dfno_status dfno_tensor_write(const char* path, const int64_t* dims, const int64_t* chunk,
                              size_t ndim, const double* values);
/* Writes up to `capacity` entries of dims and chunk; `ndim` receives the rank. */
DFNO_API dfno_status dfno_tensor_read_header(const char* path, size_t* ndim, int64_t* dims,
                                    int64_t* chunk, size_t capacity);
/* Reads the box [start, stop) (whole tensor when both are NULL) into `out`,
 * which must hold `capacity` >= box volume values. */
DFNO_API dfno_status dfno_tensor_read(const char* path, const int64_t* start, const int64_t* stop,
                             double* out, size_t capacity);

/* ---- commands ---- */

typedef void (*dfno_log_fn)(const char* line, void* user);

typedef struct dfno_run_options {
  uint64_t seed;
  int has_seed; /* nonzero: `seed` overrides the config */
  int workers;  /* <= 0 means 1 */
  dfno_log_fn log;
  void* log_user;
} dfno_run_options;

DFNO_API void dfno_run_options_init(dfno_run_options* options);

/* `config_path` may be NULL for selftest. */
DFNO_API dfno_status dfno_selftest(const char* config_path, const dfno_run_options* options);
DFNO_API dfno_status dfno_gen_data(const char* config_path, const dfno_run_options* options);
DFNO_API dfno_status dfno_train(const char* config_path, const dfno_run_options* options);
DFNO_API dfno_status dfno_infer(const char* config_path, const dfno_run_options* options);
DFNO_API dfno_status dfno_bench(const char* config_path, const dfno_run_options* options);

/* Debug hook: makes the repartition adjoint deliberately wrong. */
DFNO_API void dfno_debug_set_corrupt_adjoint(int on);

#ifdef __cplusplus
}
#endif

#endif /* DFNO_DFNO_H_ */
