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
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "lknn/corpus.hpp"
#include "lknn/types.hpp"

namespace lknn {

/// The parametric next-token distribution p_LM(. | tokens[0, position)).
class LanguageModel {
 public:
  virtual ~LanguageModel() = default;

  virtual TokenId vocab_size() const noexcept = 0;

  /// Writes the dense distribution for the token at `position` into `out`
  /// (size vocab_size()). Rows sum to 1 and are strictly positive.
  virtual void distribution(SourceId source, std::span<const TokenId> tokens, std::size_t position,
                            std::span<double> out) const = 0;

  std::vector<double> distribution(SourceId source, std::span<const TokenId> tokens,
                                   std::size_t position) const {
    std::vector<double> row(vocab_size());
    distribution(source, tokens, position, row);
    return row;
  }
};

struct NgramConfig {
  std::uint32_t order = 3;
  double add_k = 1.0;
};

/// Add-k smoothed n-gram model. The history is the previous order-1 tokens;
/// near a document start the shorter available history is used, which is the
/// same as padding the document with begin-of-sequence markers.
///
///   p(w | h) = (c(h w) + k) / (c(h) + k V)
class NgramLM final : public LanguageModel {
 public:
  NgramLM(NgramConfig config, TokenId vocab_size, const Corpus& training);

  TokenId vocab_size() const noexcept override { return vocab_size_; }
  const NgramConfig& config() const noexcept { return config_; }

  void distribution(SourceId source, std::span<const TokenId> tokens, std::size_t position,
                    std::span<double> out) const override;
  using LanguageModel::distribution;

  /// p(target | context) where the context is the whole sequence so far.
  double prob(std::span<const TokenId> context, TokenId target) const;
  void dist(std::span<const TokenId> context, std::span<double> out) const;

 private:
  struct HistoryHash {
    std::size_t operator()(const std::vector<TokenId>& h) const noexcept;
  };
  struct HistoryCounts {
    std::uint64_t total = 0;
    std::unordered_map<TokenId, std::uint64_t> next;
  };

  std::span<const TokenId> history_of(std::span<const TokenId> context) const noexcept;
  const HistoryCounts* find(std::span<const TokenId> history) const;

  NgramConfig config_;
  TokenId vocab_size_;
  std::unordered_map<std::vector<TokenId>, HistoryCounts, HistoryHash> counts_;
};

/// Per-position log-probability rows imported from an external model, keyed
/// by (source_id, position). Truncated top-M rows spread their stated tail
/// mass uniformly over the unlisted tokens.
class ImportedLogprobs final : public LanguageModel {
 public:
  struct Row {
    float tail_mass = 0.0f;
    std::vector<std::pair<TokenId, float>> logprobs;  // dense rows list every token
  };

  ImportedLogprobs(TokenId vocab_size, std::uint32_t top_m);

  TokenId vocab_size() const noexcept override { return vocab_size_; }
  std::uint32_t top_m() const noexcept { return top_m_; }

  void distribution(SourceId source, std::span<const TokenId> tokens, std::size_t position,
                    std::span<double> out) const override;
  using LanguageModel::distribution;

  /// Validates and stores a row. Throws DataError for negative tail mass,
  /// probabilities exceeding 1, duplicate or out-of-range tokens.
  void insert(SourceId source, std::uint32_t position, Row row);
  std::size_t rows() const noexcept { return rows_.size(); }

 private:
  using Key = std::pair<SourceId, std::uint32_t>;
  struct KeyHash {
    std::size_t operator()(const Key& k) const noexcept;
  };

  TokenId vocab_size_;
  std::uint32_t top_m_;
  std::unordered_map<Key, Row, KeyHash> rows_;
  std::vector<Key> order_;

  friend void write_lm_logprobs(const std::string& path, const ImportedLogprobs& lm);
};

/// Log-prob import format: "LKNNLP01", u32 vocab_size, u32 top_m (0 = dense),
/// u64 rows; each row is u64 source_id, u32 position, f32 tail_mass, then
/// either f32 logprob[vocab_size] or top_m pairs of (u32 token, f32 logprob).
ImportedLogprobs import_lm_logprobs(const std::string& path);
void write_lm_logprobs(const std::string& path, const ImportedLogprobs& lm);

}  // namespace lknn
