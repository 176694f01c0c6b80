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

#include "lknn/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <istream>
#include <json.hpp>
#include <limits>
#include <ostream>

#include "json_convert.hpp"

namespace lknn {

namespace {

using nlohmann::json;

std::string at_line(std::size_t line) { return "line " + std::to_string(line) + ": "; }

SourceId parse_source_id(const json& j, std::size_t line) {
  if (!j.is_number_integer()) throw DataError(at_line(line) + "source_id must be an integer");
  if (j.is_number_unsigned()) return j.get<SourceId>();
  const auto v = j.get<std::int64_t>();
  if (v < 0) throw DataError(at_line(line) + "source_id must be non-negative");
  return static_cast<SourceId>(v);
}

Document parse_document(const json& j, std::size_t line) {
  if (!j.is_object()) throw DataError(at_line(line) + "expected a JSON object");
  Document doc;
  for (const auto& [key, value] : j.items()) {
    if (key == "source_id") {
      doc.source_id = parse_source_id(value, line);
    } else if (key == "tokens") {
      if (!value.is_array()) throw DataError(at_line(line) + "tokens must be an array");
      doc.tokens.reserve(value.size());
      for (const auto& t : value) {
        if (!t.is_number_integer() || t.get<std::int64_t>() < 0 ||
            t.get<std::int64_t>() > std::numeric_limits<TokenId>::max()) {
          throw DataError(at_line(line) + "token ids must be non-negative 32-bit integers");
        }
        doc.tokens.push_back(t.get<TokenId>());
      }
    } else if (key == "attributes") {
      try {
        doc.attributes = detail::attributes_from_json(value);
      } catch (const DataError& e) {
        throw DataError(at_line(line) + e.what());
      }
    } else if (key == "fulltoken_spans") {
      if (value.is_null()) continue;
      if (!value.is_array()) throw DataError(at_line(line) + "fulltoken_spans must be an array");
      std::vector<TokenSpan> spans;
      for (const auto& s : value) {
        if (!s.is_array() || s.size() != 2 || !s[0].is_number_unsigned() ||
            !s[1].is_number_unsigned()) {
          throw DataError(at_line(line) + "each span must be [start, end)");
        }
        spans.push_back({s[0].get<std::size_t>(), s[1].get<std::size_t>()});
      }
      doc.fulltoken_spans = std::move(spans);
    } else {
      throw DataError(at_line(line) + "unknown field '" + key + "'");
    }
  }
  if (!j.contains("source_id")) throw DataError(at_line(line) + "missing source_id");
  if (!j.contains("tokens")) throw DataError(at_line(line) + "missing tokens");
  if (doc.fulltoken_spans) {
    try {
      validate_spans(*doc.fulltoken_spans, doc.tokens.size());
    } catch (const DataError& e) {
      throw DataError(at_line(line) + e.what());
    }
  }
  return doc;
}

bool blank(const std::string& s) {
  return std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c); });
}

}  // namespace

void validate_spans(const std::vector<TokenSpan>& spans, std::size_t token_count) {
  std::size_t expected = 0;
  for (std::size_t i = 0; i < spans.size(); ++i) {
    const auto& s = spans[i];
    if (s.begin >= s.end) {
      throw DataError("span " + std::to_string(i) + " is empty or reversed");
    }
    if (s.end > token_count) {
      throw DataError("span " + std::to_string(i) + " references position " +
                      std::to_string(s.end - 1) + " beyond " + std::to_string(token_count) +
                      " tokens");
    }
    if (s.begin != expected) {
      throw DataError("span " + std::to_string(i) +
                      " leaves a gap or overlaps its predecessor (starts at " +
                      std::to_string(s.begin) + ", expected " + std::to_string(expected) + ")");
    }
    expected = s.end;
  }
  if (expected != token_count) {
    throw DataError("spans cover " + std::to_string(expected) + " of " +
                    std::to_string(token_count) + " positions");
  }
}

Corpus read_corpus_jsonl(std::istream& in) {
  Corpus corpus;
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (blank(text)) continue;
    json j;
    try {
      j = json::parse(text);
    } catch (const json::parse_error& e) {
      throw DataError(at_line(line) + "malformed JSON (" + e.what() + ")");
    }
    corpus.push_back(parse_document(j, line));
  }
  return corpus;
}

Corpus read_corpus_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open corpus '" + path + "'");
  try {
    return read_corpus_jsonl(in);
  } catch (const DataError& e) {
    throw DataError(path + ": " + e.what());
  }
}

std::string document_to_json(const Document& doc) {
  json j;
  j["source_id"] = doc.source_id;
  j["tokens"] = doc.tokens;
  j["attributes"] = detail::attributes_to_json(doc.attributes);
  if (doc.fulltoken_spans) {
    json spans = json::array();
    for (const auto& s : *doc.fulltoken_spans) spans.push_back({s.begin, s.end});
    j["fulltoken_spans"] = std::move(spans);
  }
  return j.dump();
}

void write_corpus_jsonl(std::ostream& out, const Corpus& corpus) {
  for (const auto& doc : corpus) out << document_to_json(doc) << '\n';
}

void write_corpus_jsonl(const std::string& path, const Corpus& corpus) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot open '" + path + "' for writing");
  write_corpus_jsonl(out, corpus);
}

CategoryMap read_category_map(std::istream& in) {
  CategoryMap map;
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (blank(text)) continue;
    json j;
    try {
      j = json::parse(text);
    } catch (const json::parse_error& e) {
      throw DataError(at_line(line) + "malformed JSON (" + e.what() + ")");
    }
    if (!j.is_object() || !j.contains("source_id") || !j.contains("categories") ||
        !j["categories"].is_array()) {
      throw DataError(at_line(line) + "expected {\"source_id\": int, \"categories\": [string]}");
    }
    StringSet cats;
    for (const auto& c : j["categories"]) {
      if (!c.is_string()) throw DataError(at_line(line) + "categories must be strings");
      cats.insert(c.get<std::string>());
    }
    auto& slot = map[parse_source_id(j["source_id"], line)];
    slot.insert(cats.begin(), cats.end());
  }
  return map;
}

CategoryMap read_category_map(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open category map '" + path + "'");
  return read_category_map(in);
}

TokenId infer_vocab_size(const Corpus& corpus) {
  TokenId vocab = 0;
  for (const auto& doc : corpus) {
    for (TokenId t : doc.tokens) vocab = std::max<TokenId>(vocab, t + 1);
  }
  return vocab;
}

}  // namespace lknn
