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

#include <cstring>

#include "dfno/partition.hpp"

namespace dfno {

/// Row-major strides for a box extent.
inline Shape row_major_strides(std::span<const Index> extent) {
  Shape strides(extent.size(), 1);
  for (std::size_t d = extent.size(); d-- > 1;) strides[d - 1] = strides[d] * extent[d];
  return strides;
}

/// Copies `region` (global coordinates) from a buffer laid out over `src_box`
/// into a buffer laid out over `dst_box`. Both boxes must contain `region`.
template <class T>
void copy_region(const T* src, const RegionBox& src_box, T* dst, const RegionBox& dst_box,
                 const RegionBox& region) {
  const std::size_t nd = region.ndim();
  if (region.empty()) return;
  if (nd == 0) {
    *dst = *src;
    return;
  }
  const Shape src_stride = row_major_strides(src_box.extent());
  const Shape dst_stride = row_major_strides(dst_box.extent());
  const Shape ext = region.extent();
  const Index run = ext[nd - 1];

  Shape idx(nd, 0);
  while (true) {
    Index so = 0, doff = 0;
    for (std::size_t d = 0; d < nd; ++d) {
      Index g = region.ranges[d].start + idx[d];
      so += (g - src_box.ranges[d].start) * src_stride[d];
      doff += (g - dst_box.ranges[d].start) * dst_stride[d];
    }
    std::memcpy(dst + doff, src + so, sizeof(T) * static_cast<std::size_t>(run));
    // advance all but the innermost dimension
    std::size_t d = nd - 1;
    while (d-- > 0) {
      if (++idx[d] < ext[d]) break;
      idx[d] = 0;
    }
    if (d == static_cast<std::size_t>(-1)) break;
  }
}

}  // namespace dfno
