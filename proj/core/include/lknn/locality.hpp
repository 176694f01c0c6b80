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

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "lknn/attributes.hpp"
#include "lknn/corpus.hpp"
#include "lknn/datastore.hpp"

namespace lknn {

enum class Predicate {
  kEqual,       // both present and identical (strings or sets)
  kIntersects,  // both present sets with at least one common member
};

struct AttributeTest {
  std::string attribute;
  Predicate predicate = Predicate::kEqual;
};

/// One locality level: every `requires` test holds and no `forbids` test does.
struct LevelRule {
  std::uint32_t index = 0;
  std::vector<AttributeTest> requires_all;
  std::vector<AttributeTest> forbids;
};

/// Ordered, mutually exclusive locality levels. Rules are evaluated from the
/// most specific index n down to 1; the first match wins and level 0 ("no
/// locality") is the fallback, so every pair gets exactly one level.
class LocalityScheme {
 public:
  /// Validates the rules: indices 1..n each appear once, and every attribute
  /// a rule references is declared. Throws ConfigError otherwise.
  LocalityScheme(std::string name, std::vector<std::string> attributes,
                 std::vector<LevelRule> rules);

  const std::string& name() const noexcept { return name_; }
  const std::vector<std::string>& attributes() const noexcept { return attributes_; }
  /// Highest level index n; levels are 0..n.
  std::uint32_t max_level() const noexcept { return static_cast<std::uint32_t>(rules_.size()); }
  std::uint32_t level_count() const noexcept { return max_level() + 1; }
  /// Rules ordered by descending index.
  const std::vector<LevelRule>& rules() const noexcept { return rules_; }

  std::uint32_t assign_level(const AttributeSet& a, const AttributeSet& b) const;

  /// {"name", "attributes": [...], "levels": [{"index", "requires": {attr:
  /// "equal"|"intersects"}, "forbids": {...}}]}
  static LocalityScheme from_json(std::string_view text);
  static LocalityScheme load(const std::string& path);
  std::string to_json() const;

  /// Wikipedia sections: 3 = same title and shared category, 2 = same title,
  /// 1 = shared category, 0 = neither.
  static LocalityScheme wikipedia();
  /// Source code: 2 = same project and subdirectory, 1 = same project.
  static LocalityScheme java();
  /// A shipped scheme by name ("wikipedia"/"wiki", "java"/"code") or a path
  /// to a scheme JSON file.
  static LocalityScheme resolve(const std::string& name_or_path);

 private:
  std::string name_;
  std::vector<std::string> attributes_;
  std::vector<LevelRule> rules_;
};

bool evaluate(const AttributeTest& test, const AttributeSet& a, const AttributeSet& b);

/// Splits a full file path into {"project", "subdirectory"}. The project is
/// the first segment after `corpus_prefix`; the subdirectory is the rest of
/// the directory path with a trailing '/', or "" for files at the project root.
AttributeSet extract_code_attributes(std::string_view full_path,
                                     std::string_view corpus_prefix = {});

/// {"section_title", "categories"}. An empty title is left absent so it never
/// matches; sources missing from the map get an empty category set.
AttributeSet extract_text_attributes(std::string_view section_title, SourceId source,
                                     const CategoryMap& category_map);

/// Fills in neighbor levels against the stored attributes of each neighbor's
/// source.
void annotate_neighbors(NeighborSet& ns, const AttributeSet& query_attrs,
                        const LocalityScheme& scheme, const Datastore& store);

/// Derives scheme attributes a document does not carry yet: "project" and
/// "subdirectory" from a "path" attribute, categories from a category map.
void derive_attributes(Document& doc, std::string_view path_prefix,
                       const CategoryMap* category_map);

}  // namespace lknn
