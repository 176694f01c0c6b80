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

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "lknn/attributes.hpp"
#include "lknn/types.hpp"

namespace lknn {

/// Half-open subtoken range [begin, end) forming one full token.
struct TokenSpan {
  std::size_t begin = 0;
  std::size_t end = 0;

  friend bool operator==(const TokenSpan&, const TokenSpan&) = default;
};

/// One document of a corpus, and equally one evaluation unit (a source file
/// or an article section).
struct Document {
  SourceId source_id = 0;
  std::vector<TokenId> tokens;
  AttributeSet attributes;
  std::optional<std::vector<TokenSpan>> fulltoken_spans;
};

using Corpus = std::vector<Document>;

/// Validates spans: sorted, disjoint, in bounds and covering every position
/// exactly once. Throws DataError naming the first violation.
void validate_spans(const std::vector<TokenSpan>& spans, std::size_t token_count);

/// Reads JSON-lines, one document per line. Blank lines are ignored. Errors
/// name the 1-based line number.
Corpus read_corpus_jsonl(std::istream& in);
Corpus read_corpus_jsonl(const std::string& path);

std::string document_to_json(const Document& doc);
void write_corpus_jsonl(std::ostream& out, const Corpus& corpus);
void write_corpus_jsonl(const std::string& path, const Corpus& corpus);

/// source_id -> category ids, loaded from JSON-lines
/// {"source_id": int, "categories": [string]}.
using CategoryMap = std::unordered_map<SourceId, StringSet>;

CategoryMap read_category_map(std::istream& in);
CategoryMap read_category_map(const std::string& path);

/// Largest token id in the corpus plus one (0 for an empty corpus).
TokenId infer_vocab_size(const Corpus& corpus);

}  // namespace lknn
