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

#include "lknn/locality.hpp"

#include <algorithm>
#include <json.hpp>
#include <set>

#include "binary_io.hpp"

namespace lknn {

namespace {

using nlohmann::json;

const char* predicate_name(Predicate p) {
  return p == Predicate::kEqual ? "equal" : "intersects";
}

Predicate parse_predicate(const json& j, const std::string& attr) {
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "equal") return Predicate::kEqual;
    if (s == "intersects") return Predicate::kIntersects;
  }
  throw ConfigError("scheme: predicate for '" + attr + "' must be \"equal\" or \"intersects\"");
}

std::vector<AttributeTest> parse_tests(const json& j, const char* what) {
  std::vector<AttributeTest> tests;
  if (j.is_null()) return tests;
  if (!j.is_object()) throw ConfigError(std::string("scheme: '") + what + "' must be an object");
  for (const auto& [attr, pred] : j.items()) tests.push_back({attr, parse_predicate(pred, attr)});
  return tests;
}

json tests_to_json(const std::vector<AttributeTest>& tests) {
  json out = json::object();
  for (const auto& t : tests) out[t.attribute] = predicate_name(t.predicate);
  return out;
}

bool sets_intersect(const StringSet& a, const StringSet& b) {
  auto ia = a.begin();
  auto ib = b.begin();
  while (ia != a.end() && ib != b.end()) {
    if (*ia < *ib) {
      ++ia;
    } else if (*ib < *ia) {
      ++ib;
    } else {
      return true;
    }
  }
  return false;
}

}  // namespace

bool evaluate(const AttributeTest& test, const AttributeSet& a, const AttributeSet& b) {
  const AttributeValue* va = a.find(test.attribute);
  const AttributeValue* vb = b.find(test.attribute);
  if (va == nullptr || vb == nullptr) return false;
  switch (test.predicate) {
    case Predicate::kEqual: {
      const auto* sa = std::get_if<std::string>(va);
      const auto* sb = std::get_if<std::string>(vb);
      if (sa && sb) return *sa == *sb;
      const auto* ta = std::get_if<StringSet>(va);
      const auto* tb = std::get_if<StringSet>(vb);
      return ta && tb && !ta->empty() && *ta == *tb;
    }
    case Predicate::kIntersects: {
      const auto* ta = std::get_if<StringSet>(va);
      const auto* tb = std::get_if<StringSet>(vb);
      return ta && tb && sets_intersect(*ta, *tb);
    }
  }
  return false;
}

LocalityScheme::LocalityScheme(std::string name, std::vector<std::string> attributes,
                               std::vector<LevelRule> rules)
    : name_(std::move(name)), attributes_(std::move(attributes)) {
  const std::set<std::string> declared(attributes_.begin(), attributes_.end());
  if (declared.size() != attributes_.size()) {
    throw ConfigError("scheme '" + name_ + "': duplicate attribute declaration");
  }
  std::vector<LevelRule> levels;
  for (auto& rule : rules) {
    if (rule.index == 0) {
      if (!rule.requires_all.empty() || !rule.forbids.empty()) {
        throw ConfigError("scheme '" + name_ + "': level 0 is the fallback and takes no tests");
      }
      continue;
    }
    for (const auto* tests : {&rule.requires_all, &rule.forbids}) {
      for (const auto& t : *tests) {
        if (!declared.contains(t.attribute)) {
          throw ConfigError("scheme '" + name_ + "': level " + std::to_string(rule.index) +
                            " references undeclared attribute '" + t.attribute + "'");
        }
      }
    }
    if (rule.requires_all.empty()) {
      throw ConfigError("scheme '" + name_ + "': level " + std::to_string(rule.index) +
                        " has no required tests");
    }
    levels.push_back(std::move(rule));
  }
  std::sort(levels.begin(), levels.end(),
            [](const LevelRule& a, const LevelRule& b) { return a.index > b.index; });
  for (std::size_t i = 0; i < levels.size(); ++i) {
    const auto expected = static_cast<std::uint32_t>(levels.size() - i);
    if (levels[i].index != expected) {
      throw ConfigError("scheme '" + name_ + "': level indices must be 1..n without gaps or repeats");
    }
  }
  rules_ = std::move(levels);
}

std::uint32_t LocalityScheme::assign_level(const AttributeSet& a, const AttributeSet& b) const {
  for (const auto& rule : rules_) {
    const bool required = std::all_of(rule.requires_all.begin(), rule.requires_all.end(),
                                      [&](const AttributeTest& t) { return evaluate(t, a, b); });
    if (!required) continue;
    const bool forbidden = std::any_of(rule.forbids.begin(), rule.forbids.end(),
                                       [&](const AttributeTest& t) { return evaluate(t, a, b); });
    if (!forbidden) return rule.index;
  }
  return 0;
}

LocalityScheme LocalityScheme::from_json(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("scheme: invalid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("scheme must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (key != "name" && key != "attributes" && key != "levels") {
      throw ConfigError("scheme: unknown key '" + key + "'");
    }
  }
  if (!j.contains("name") || !j["name"].is_string()) throw ConfigError("scheme: missing name");
  if (!j.contains("attributes") || !j["attributes"].is_array()) {
    throw ConfigError("scheme: missing attributes array");
  }
  if (!j.contains("levels") || !j["levels"].is_array()) {
    throw ConfigError("scheme: missing levels array");
  }
  std::vector<std::string> attributes;
  for (const auto& a : j["attributes"]) {
    if (!a.is_string()) throw ConfigError("scheme: attribute names must be strings");
    attributes.push_back(a.get<std::string>());
  }
  std::vector<LevelRule> rules;
  for (const auto& level : j["levels"]) {
    if (!level.is_object() || !level.contains("index") || !level["index"].is_number_unsigned()) {
      throw ConfigError("scheme: each level needs a non-negative integer index");
    }
    for (const auto& [key, value] : level.items()) {
      if (key != "index" && key != "requires" && key != "forbids") {
        throw ConfigError("scheme: unknown level key '" + key + "'");
      }
    }
    LevelRule rule;
    rule.index = level["index"].get<std::uint32_t>();
    rule.requires_all = parse_tests(level.value("requires", json()), "requires");
    rule.forbids = parse_tests(level.value("forbids", json()), "forbids");
    rules.push_back(std::move(rule));
  }
  return LocalityScheme(j["name"].get<std::string>(), std::move(attributes), std::move(rules));
}

LocalityScheme LocalityScheme::load(const std::string& path) {
  std::string text;
  try {
    text = detail::read_file(path);
  } catch (const DataError& e) {
    throw ConfigError(e.what());
  }
  return from_json(text);
}

std::string LocalityScheme::to_json() const {
  json levels = json::array();
  levels.push_back({{"index", 0}});
  for (auto it = rules_.rbegin(); it != rules_.rend(); ++it) {
    json level;
    level["index"] = it->index;
    level["requires"] = tests_to_json(it->requires_all);
    if (!it->forbids.empty()) level["forbids"] = tests_to_json(it->forbids);
    levels.push_back(std::move(level));
  }
  return json{{"name", name_}, {"attributes", attributes_}, {"levels", levels}}.dump();
}

LocalityScheme LocalityScheme::wikipedia() {
  const AttributeTest title{"section_title", Predicate::kEqual};
  const AttributeTest category{"categories", Predicate::kIntersects};
  return LocalityScheme("wikipedia", {"section_title", "categories"},
                        {
                            {3, {title, category}, {}},
                            {2, {title}, {category}},
                            {1, {category}, {title}},
                        });
}

LocalityScheme LocalityScheme::java() {
  const AttributeTest project{"project", Predicate::kEqual};
  const AttributeTest subdir{"subdirectory", Predicate::kEqual};
  return LocalityScheme("java", {"project", "subdirectory"},
                        {
                            {2, {project, subdir}, {}},
                            {1, {project}, {subdir}},
                        });
}

LocalityScheme LocalityScheme::resolve(const std::string& name_or_path) {
  if (name_or_path == "wikipedia" || name_or_path == "wiki") return wikipedia();
  if (name_or_path == "java" || name_or_path == "code") return java();
  return load(name_or_path);
}

AttributeSet extract_code_attributes(std::string_view full_path, std::string_view corpus_prefix) {
  std::string_view rest = full_path;
  if (!corpus_prefix.empty() && rest.starts_with(corpus_prefix)) rest.remove_prefix(corpus_prefix.size());
  while (rest.starts_with('/')) rest.remove_prefix(1);
  const auto slash = rest.find('/');
  if (slash == std::string_view::npos || slash == 0) {
    throw DataError("path '" + std::string(full_path) + "' has no project segment");
  }
  AttributeSet attrs;
  attrs.set("project", std::string(rest.substr(0, slash)));
  const std::string_view inside = rest.substr(slash + 1);
  const auto last = inside.rfind('/');
  attrs.set("subdirectory",
            last == std::string_view::npos ? std::string() : std::string(inside.substr(0, last + 1)));
  return attrs;
}

AttributeSet extract_text_attributes(std::string_view section_title, SourceId source,
                                     const CategoryMap& category_map) {
  AttributeSet attrs;
  if (!section_title.empty()) attrs.set("section_title", std::string(section_title));
  auto it = category_map.find(source);
  attrs.set("categories", it == category_map.end() ? StringSet{} : it->second);
  return attrs;
}

void annotate_neighbors(NeighborSet& ns, const AttributeSet& query_attrs,
                        const LocalityScheme& scheme, const Datastore& store) {
  // Neighbors cluster in few sources; reuse the level of the previous source.
  bool have_last = false;
  SourceId last_source = 0;
  std::uint32_t last_level = 0;
  for (auto& n : ns.neighbors) {
    if (!have_last || n.source != last_source) {
      last_level = scheme.assign_level(store.attributes_of(n.source), query_attrs);
      last_source = n.source;
      have_last = true;
    }
    n.level = last_level;
  }
}

void derive_attributes(Document& doc, std::string_view path_prefix,
                       const CategoryMap* category_map) {
  if (const auto* path = doc.attributes.find_string("path");
      path != nullptr && !doc.attributes.contains("project")) {
    const auto derived = extract_code_attributes(*path, path_prefix);
    for (const auto& [name, value] : derived.values()) {
      doc.attributes.set(name, std::get<std::string>(value));
    }
  }
  if (const auto* title = doc.attributes.find_string("section_title");
      title != nullptr && title->empty()) {
    doc.attributes.erase("section_title");
  }
  if (category_map != nullptr && !doc.attributes.contains("categories")) {
    auto it = category_map->find(doc.source_id);
    doc.attributes.set("categories", it == category_map->end() ? StringSet{} : it->second);
  }
}

}  // namespace lknn
