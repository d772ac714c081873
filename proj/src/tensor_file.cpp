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
#include "dfno/tensor_file.hpp"

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "dfno/box_copy.hpp"
#include "dfno/error.hpp"

namespace dfno {

static_assert(std::endian::native == std::endian::little,
              "tensor files are little-endian; add byte swapping for this host");

namespace {

thread_local std::uint64_t g_chunks_read = 0;

template <class T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

template <class T>
T get(const char*& p) {
  T v;
  std::memcpy(&v, p, sizeof(T));
  p += sizeof(T);
  return v;
}

RegionBox chunk_box(const TensorHeader& h, std::span<const Index> c) {
  RegionBox b{std::vector<IndexRange>(h.dims.size())};
  for (std::size_t d = 0; d < c.size(); ++d) {
    Index start = c[d] * h.chunk[d];
    b.ranges[d] = {start, std::min(start + h.chunk[d], h.dims[d])};
  }
  return b;
}

// Element offset of chunk `c`: the volume of every chunk before it in row-major order.
Index chunk_offset(const TensorHeader& h, std::span<const Index> c) {
  const std::size_t nd = c.size();
  Index offset = 0;
  Index before = 1;  // product of this chunk's extents in dims < d
  for (std::size_t d = 0; d < nd; ++d) {
    Index after = 1;
    for (std::size_t e = d + 1; e < nd; ++e) after *= h.dims[e];
    offset += before * c[d] * h.chunk[d] * after;
    before *= std::min(h.chunk[d], h.dims[d] - c[d] * h.chunk[d]);
  }
  return offset;
}

void check_header(const TensorHeader& h) {
  require(h.dims.size() == h.chunk.size(), "tensor file: dims and chunk rank differ");
  require(h.dims.size() <= 255, "tensor file: at most 255 dimensions");
  for (std::size_t d = 0; d < h.dims.size(); ++d) {
    require(h.dims[d] >= 0, "tensor file: negative dimension");
    require(h.chunk[d] >= 1, "tensor file: chunk extents must be positive");
  }
}

// Visits chunk-grid coordinates of every chunk intersecting `region` in row-major order.
template <class F>
void for_each_chunk(const TensorHeader& h, const RegionBox& region, F&& visit) {
  const std::size_t nd = h.dims.size();
  if (region.empty()) return;
  std::vector<Index> lo(nd), hi(nd), c(nd);
  for (std::size_t d = 0; d < nd; ++d) {
    lo[d] = region.ranges[d].start / h.chunk[d];
    hi[d] = (region.ranges[d].stop - 1) / h.chunk[d] + 1;
    c[d] = lo[d];
  }
  while (true) {
    visit(std::span<const Index>(c));
    std::size_t d = nd;
    bool done = true;
    while (d-- > 0) {
      if (++c[d] < hi[d]) {
        done = false;
        break;
      }
      c[d] = lo[d];
    }
    if (done) return;
  }
}

template <class T>
void write_impl(const std::string& path, DType dtype, const Shape& dims, const Shape& chunk,
                std::span<const T> values) {
  TensorHeader h{dtype, dims, chunk};
  check_header(h);
  require(static_cast<Index>(values.size()) == volume(dims),
          "write_tensor: " + std::to_string(values.size()) + " values for shape " +
              to_string(dims));
  std::string head = "DFNO";
  put<std::uint16_t>(head, kTensorFileVersion);
  put<std::uint8_t>(head, static_cast<std::uint8_t>(dtype));
  put<std::uint8_t>(head, static_cast<std::uint8_t>(dims.size()));
  for (Index v : dims) put<std::uint64_t>(head, static_cast<std::uint64_t>(v));
  for (Index v : chunk) put<std::uint64_t>(head, static_cast<std::uint64_t>(v));

  // Unlink first: truncating an existing file in place is far slower on some
  // overlay filesystems.
  std::error_code ec;
  std::filesystem::remove(path, ec);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(Errc::io, "cannot open " + path + " for writing");
  out.write(head.data(), static_cast<std::streamsize>(head.size()));
  RegionBox full = full_box(dims);
  std::vector<T> buf;
  for_each_chunk(h, full, [&](std::span<const Index> c) {
    RegionBox box = chunk_box(h, c);
    buf.resize(static_cast<std::size_t>(box.volume()));
    copy_region(values.data(), full, buf.data(), box, box);
    out.write(reinterpret_cast<const char*>(buf.data()),
              static_cast<std::streamsize>(buf.size() * sizeof(T)));
  });
  out.flush();
  if (!out) fail(Errc::io, "write to " + path + " failed");
}

TensorHeader parse_header(std::ifstream& in, const std::string& path) {
  char fixed[8];
  in.read(fixed, 8);
  if (in.gcount() < 4 || std::memcmp(fixed, "DFNO", 4) != 0)
    fail(Errc::format, path + ": not a tensor file (bad magic)");
  if (in.gcount() < 8) fail(Errc::io, path + ": truncated header");
  const char* p = fixed + 4;
  auto version = get<std::uint16_t>(p);
  if (version != kTensorFileVersion)
    fail(Errc::format, path + ": unsupported format version " + std::to_string(version));
  auto dtype = get<std::uint8_t>(p);
  if (dtype > 1) fail(Errc::format, path + ": unknown dtype code " + std::to_string(dtype));
  auto nd = get<std::uint8_t>(p);
  std::vector<char> rest(16 * static_cast<std::size_t>(nd));
  in.read(rest.data(), static_cast<std::streamsize>(rest.size()));
  if (static_cast<std::size_t>(in.gcount()) != rest.size())
    fail(Errc::io, path + ": truncated header");
  TensorHeader h;
  h.dtype = static_cast<DType>(dtype);
  p = rest.data();
  for (int d = 0; d < nd; ++d) h.dims.push_back(static_cast<Index>(get<std::uint64_t>(p)));
  for (int d = 0; d < nd; ++d) h.chunk.push_back(static_cast<Index>(get<std::uint64_t>(p)));
  for (int d = 0; d < nd; ++d)
    if (h.chunk[d] < 1 || h.dims[d] < 0) fail(Errc::format, path + ": invalid chunk shape");
  return h;
}

template <class T>
std::vector<T> read_impl(const std::string& path, DType want,
                         const std::optional<RegionBox>& region) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(Errc::io, "cannot open " + path);
  TensorHeader h = parse_header(in, path);
  if (h.dtype != want)
    fail(Errc::format, path + ": stored dtype does not match the requested scalar type");
  in.seekg(0, std::ios::end);
  const auto size = static_cast<std::uint64_t>(in.tellg());
  if (size < h.file_bytes())
    fail(Errc::io, path + ": truncated (" + std::to_string(size) + " of " +
                       std::to_string(h.file_bytes()) + " bytes)");

  RegionBox want_box = region ? *region : full_box(h.dims);
  if (want_box.ndim() != h.dims.size())
    fail(Errc::invalid_argument, path + ": region rank does not match tensor rank");
  for (std::size_t d = 0; d < h.dims.size(); ++d) {
    const auto& r = want_box.ranges[d];
    if (r.start < 0 || r.stop < r.start || r.stop > h.dims[d])
      fail(Errc::invalid_argument, path + ": region out of bounds in dimension " +
                                       std::to_string(d));
  }
  std::vector<T> out(static_cast<std::size_t>(want_box.volume()));
  std::vector<T> buf;
  for_each_chunk(h, want_box, [&](std::span<const Index> c) {
    RegionBox box = chunk_box(h, c);
    buf.resize(static_cast<std::size_t>(box.volume()));
    in.seekg(static_cast<std::streamoff>(h.header_bytes() +
                                         static_cast<std::uint64_t>(chunk_offset(h, c)) * sizeof(T)));
    in.read(reinterpret_cast<char*>(buf.data()),
            static_cast<std::streamsize>(buf.size() * sizeof(T)));
    if (!in) fail(Errc::io, path + ": short read");
    ++g_chunks_read;
    copy_region(buf.data(), box, out.data(), want_box, intersect(box, want_box));
  });
  return out;
}

}  // namespace

std::uint64_t TensorHeader::header_bytes() const { return 8 + 16 * dims.size(); }

std::uint64_t TensorHeader::file_bytes() const {
  return header_bytes() + static_cast<std::uint64_t>(volume(dims)) * scalar_bytes();
}

void write_tensor(const std::string& path, const Shape& dims, const Shape& chunk,
                  std::span<const double> values) {
  write_impl(path, DType::real64, dims, chunk, values);
}

void write_tensor(const std::string& path, const Shape& dims, const Shape& chunk,
                  std::span<const std::complex<double>> values) {
  write_impl(path, DType::complex128, dims, chunk, values);
}

TensorHeader read_header(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(Errc::io, "cannot open " + path);
  return parse_header(in, path);
}

std::vector<double> read_tensor(const std::string& path, const std::optional<RegionBox>& region) {
  return read_impl<double>(path, DType::real64, region);
}

std::vector<std::complex<double>> read_tensor_complex(const std::string& path,
                                                      const std::optional<RegionBox>& region) {
  return read_impl<std::complex<double>>(path, DType::complex128, region);
}

std::uint64_t chunks_read() { return g_chunks_read; }

}  // namespace dfno
