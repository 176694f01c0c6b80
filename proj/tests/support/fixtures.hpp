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
#include <map>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "lknn/corpus.hpp"
#include "lknn/datastore.hpp"
#include "lknn/encoder.hpp"
#include "lknn/language_model.hpp"

namespace lknn::testing {

Document make_doc(SourceId source, std::vector<TokenId> tokens, AttributeSet attrs = {});
AttributeSet code_attrs(const std::string& project, const std::string& subdir);

// Keys on a quarter-integer grid in [-2, 2]: every squared distance is a
// multiple of 1/16 small enough to be exact in float, so a double-precision
// oracle sees the same values and the same ties as the search kernel.
struct GridStore {
  std::uint32_t dim = 0;
  std::vector<float> keys;
  std::vector<TokenId> targets;
  std::vector<SourceId> sources;
  Datastore store;
};

std::vector<float> grid_vector(std::uint32_t dim, std::mt19937_64& rng);
GridStore make_grid_store(std::size_t count, std::uint32_t dim, std::uint64_t seed,
                          TokenId vocab = 100, SourceId source_count = 50);

// Full scan, full sort by (distance, index).
std::vector<std::uint64_t> brute_force_knn(std::span<const float> keys,
                                           std::span<const SourceId> sources, std::uint32_t dim,
                                           std::span<const float> query, std::size_t k,
                                           std::optional<SourceId> exclude);

// Encodes a context as a fixed vector chosen by its last token.
class LastTokenEncoder final : public ContextEncoder {
 public:
  LastTokenEncoder(std::uint32_t dim, std::map<TokenId, std::vector<float>> table)
      : dim_(dim), table_(std::move(table)) {}

  std::uint32_t dim() const noexcept override { return dim_; }
  void encode_at(SourceId source, std::span<const TokenId> tokens, std::size_t position,
                 std::span<float> out) const override;
  using ContextEncoder::encode_at;

 private:
  std::uint32_t dim_;
  std::map<TokenId, std::vector<float>> table_;
};

// A fixed next-token distribution per previous token.
class LastTokenLM final : public LanguageModel {
 public:
  LastTokenLM(TokenId vocab, std::map<TokenId, std::vector<double>> rows)
      : vocab_(vocab), rows_(std::move(rows)) {}

  TokenId vocab_size() const noexcept override { return vocab_; }
  void distribution(SourceId source, std::span<const TokenId> tokens, std::size_t position,
                    std::span<double> out) const override;
  using LanguageModel::distribution;

 private:
  TokenId vocab_;
  std::map<TokenId, std::vector<double>> rows_;
};

}  // namespace lknn::testing
