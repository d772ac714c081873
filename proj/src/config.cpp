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
#include "dfno/config.hpp"

#include <fstream>

#include "dfno/error.hpp"

namespace dfno {

ConfigReader::ConfigReader(const nlohmann::json& doc, std::string where)
    : doc_(&doc), where_(std::move(where)) {
  if (!doc.is_object()) fail(Errc::invalid_argument, where_ + ": expected a JSON object");
}

bool ConfigReader::has(const std::string& key) const {
  return doc_->contains(key) && !(*doc_)[key].is_null();
}

const nlohmann::json& ConfigReader::at(const std::string& key) {
  used_.insert(key);
  if (!doc_->contains(key)) fail(Errc::invalid_argument, where_ + ": missing key \"" + key + "\"");
  return (*doc_)[key];
}

template <class T>
T ConfigReader::required(const std::string& key) {
  const auto& v = at(key);
  try {
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) throw nlohmann::json::type_error::create(302, "not a boolean", nullptr);
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_integer())
        throw nlohmann::json::type_error::create(302, "not an integer", nullptr);
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!v.is_number()) throw nlohmann::json::type_error::create(302, "not a number", nullptr);
    }
    return v.get<T>();
  } catch (const nlohmann::json::exception& e) {
    fail(Errc::invalid_argument, where_ + "." + key + ": " + e.what());
  }
}

template bool ConfigReader::required<bool>(const std::string&);
template int ConfigReader::required<int>(const std::string&);
template long long ConfigReader::required<long long>(const std::string&);
template unsigned long long ConfigReader::required<unsigned long long>(const std::string&);
template unsigned long ConfigReader::required<unsigned long>(const std::string&);
template double ConfigReader::required<double>(const std::string&);
template std::string ConfigReader::required<std::string>(const std::string&);
template std::vector<std::string> ConfigReader::required<std::vector<std::string>>(
    const std::string&);

std::vector<long long> ConfigReader::dims(const std::string& key) {
  const auto& v = at(key);
  if (!v.is_array()) fail(Errc::invalid_argument, where_ + "." + key + ": expected a list");
  std::vector<long long> out;
  for (const auto& e : v) {
    if (!e.is_number_integer() || e.get<long long>() < 1)
      fail(Errc::invalid_argument, where_ + "." + key + ": entries must be positive integers");
    out.push_back(e.get<long long>());
  }
  return out;
}

ConfigReader ConfigReader::child(const std::string& key) {
  return ConfigReader(at(key), where_ + "." + key);
}

void ConfigReader::finish() const {
  std::string unknown;
  for (const auto& [key, value] : doc_->items())
    if (!used_.count(key)) unknown += (unknown.empty() ? "\"" : ", \"") + key + "\"";
  if (!unknown.empty()) fail(Errc::invalid_argument, where_ + ": unknown key(s) " + unknown);
}

nlohmann::json load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(Errc::io, "cannot open config " + path);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    fail(Errc::invalid_argument, path + ": " + e.what());
  }
}

}  // namespace dfno
