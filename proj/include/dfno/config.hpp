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
// Strict access to JSON run configurations: every key must be consumed, so a
// misspelled option is an error instead of a silent default.

#include <set>
#include <string>
#include <vector>

#include "json.hpp"

namespace dfno {

class ConfigReader {
 public:
  ConfigReader(const nlohmann::json& doc, std::string where);

  bool has(const std::string& key) const;

  template <class T>
  T get(const std::string& key, T fallback) {
    used_.insert(key);
    return has(key) ? required<T>(key) : fallback;
  }

  template <class T>
  T required(const std::string& key);

  /// Positive integer list, e.g. a shape or a partition.
  std::vector<long long> dims(const std::string& key);

  ConfigReader child(const std::string& key);

  /// Throws Errc::invalid_argument naming any key that was never read.
  void finish() const;

 private:
  const nlohmann::json& at(const std::string& key);

  const nlohmann::json* doc_;
  std::string where_;
  std::set<std::string> used_;
};

nlohmann::json load_config(const std::string& path);

}  // namespace dfno
