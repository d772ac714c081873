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
#include "dfno/error.hpp"

namespace dfno {

const char* errc_name(Errc code) noexcept {
  switch (code) {
    case Errc::invalid_argument: return "invalid-argument";
    case Errc::protocol: return "protocol-error";
    case Errc::plan: return "plan-error";
    case Errc::format: return "format-error";
    case Errc::io: return "io-error";
    case Errc::invalid_state: return "invalid-state";
    case Errc::numeric: return "numeric-error";
    case Errc::cancelled: return "cancelled";
    case Errc::internal: return "internal-error";
  }
  return "unknown";
}

}  // namespace dfno
