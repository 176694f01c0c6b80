// Copyright 2026 The lknn Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <map>
#include <set>
#include <string>
#include <string_view>
#include <variant>

namespace lknn {

using StringSet = std::set<std::string>;
using AttributeValue = std::variant<std::string, StringSet>;

/// Named provenance attributes of a document: plain strings (project,
/// subdirectory, section title) or string sets (categories).
class AttributeSet {
 public:
  AttributeSet() = default;

  void set(std::string name, std::string value);
  void set(std::string name, StringSet values);
  void erase(std::string_view name);

  bool contains(std::string_view name) const;
  const AttributeValue* find(std::string_view name) const;
  const std::string* find_string(std::string_view name) const;
  const StringSet* find_set(std::string_view name) const;

  const std::map<std::string, AttributeValue, std::less<>>& values() const noexcept {
    return values_;
  }
  bool empty() const noexcept { return values_.empty(); }
  std::size_t size() const noexcept { return values_.size(); }

  /// Compact JSON object: strings map to strings, sets to sorted arrays.
  std::string to_json() const;
  static AttributeSet from_json(std::string_view text);

  friend bool operator==(const AttributeSet&, const AttributeSet&) = default;

 private:
  std::map<std::string, AttributeValue, std::less<>> values_;
};

}  // namespace lknn
