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

#include "lknn/attributes.hpp"

#include <json.hpp>

#include "json_convert.hpp"
#include "lknn/types.hpp"

namespace lknn {

void AttributeSet::set(std::string name, std::string value) {
  values_.insert_or_assign(std::move(name), AttributeValue{std::move(value)});
}

void AttributeSet::set(std::string name, StringSet values) {
  values_.insert_or_assign(std::move(name), AttributeValue{std::move(values)});
}

void AttributeSet::erase(std::string_view name) {
  if (auto it = values_.find(name); it != values_.end()) values_.erase(it);
}

bool AttributeSet::contains(std::string_view name) const {
  return values_.find(name) != values_.end();
}

const AttributeValue* AttributeSet::find(std::string_view name) const {
  auto it = values_.find(name);
  return it == values_.end() ? nullptr : &it->second;
}

const std::string* AttributeSet::find_string(std::string_view name) const {
  const AttributeValue* v = find(name);
  return v ? std::get_if<std::string>(v) : nullptr;
}

const StringSet* AttributeSet::find_set(std::string_view name) const {
  const AttributeValue* v = find(name);
  return v ? std::get_if<StringSet>(v) : nullptr;
}

std::string AttributeSet::to_json() const { return detail::attributes_to_json(*this).dump(); }

AttributeSet AttributeSet::from_json(std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError(std::string("attributes: invalid JSON: ") + e.what());
  }
  return detail::attributes_from_json(j);
}

namespace detail {

nlohmann::json attributes_to_json(const AttributeSet& attrs) {
  nlohmann::json out = nlohmann::json::object();
  for (const auto& [name, value] : attrs.values()) {
    if (const auto* s = std::get_if<std::string>(&value)) {
      out[name] = *s;
    } else {
      const auto& set = std::get<StringSet>(value);
      out[name] = nlohmann::json(std::vector<std::string>(set.begin(), set.end()));
    }
  }
  return out;
}

AttributeSet attributes_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw DataError("attributes must be a JSON object");
  AttributeSet attrs;
  for (const auto& [name, value] : j.items()) {
    if (value.is_string()) {
      attrs.set(name, value.get<std::string>());
    } else if (value.is_array()) {
      StringSet set;
      for (const auto& item : value) {
        if (!item.is_string()) {
          throw DataError("attribute '" + name + "': set members must be strings");
        }
        set.insert(item.get<std::string>());
      }
      attrs.set(name, std::move(set));
    } else {
      throw DataError("attribute '" + name + "' must be a string or an array of strings");
    }
  }
  return attrs;
}

}  // namespace detail
}  // namespace lknn
