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
#pragma once

// Chunked n-dimensional tensor files.
//
// Layout (little-endian): "DFNO", u16 version, u8 dtype (0 real64,
// 1 complex128), u8 ndim, u64 dims[ndim], u64 chunk[ndim], then every chunk in
// row-major chunk-grid order. Each chunk is stored row-major; chunks on the
// upper edge are truncated to the tensor bounds.

#include <complex>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dfno/partition.hpp"

namespace dfno {

enum class DType : std::uint8_t { real64 = 0, complex128 = 1 };

inline constexpr std::uint16_t kTensorFileVersion = 1;

struct TensorHeader {
  DType dtype = DType::real64;
  Shape dims;
  Shape chunk;

  std::uint64_t header_bytes() const;
  std::uint64_t file_bytes() const;
  std::size_t scalar_bytes() const { return dtype == DType::real64 ? 8 : 16; }
};

void write_tensor(const std::string& path, const Shape& dims, const Shape& chunk,
                  std::span<const double> values);
void write_tensor(const std::string& path, const Shape& dims, const Shape& chunk,
                  std::span<const std::complex<double>> values);

TensorHeader read_header(const std::string& path);

/// Reads `region` (the whole tensor when absent), touching only the chunks
/// that intersect it.
std::vector<double> read_tensor(const std::string& path,
                                const std::optional<RegionBox>& region = std::nullopt);
std::vector<std::complex<double>> read_tensor_complex(
    const std::string& path, const std::optional<RegionBox>& region = std::nullopt);

/// Chunk-read counter for the calling thread, used to confirm region reads
/// stay local.
std::uint64_t chunks_read();

}  // namespace dfno
