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

#include "lknn/types.hpp"

namespace lknn {

using ContextVector = std::vector<float>;

/// Produces the representation of the context that precedes `position` in a
/// document, i.e. of tokens[0, position).
class ContextEncoder {
 public:
  virtual ~ContextEncoder() = default;

  virtual std::uint32_t dim() const noexcept = 0;

  /// Writes dim() values into `out`. `position` must be in [1, tokens.size()].
  virtual void encode_at(SourceId source, std::span<const TokenId> tokens, std::size_t position,
                         std::span<float> out) const = 0;

  ContextVector encode_at(SourceId source, std::span<const TokenId> tokens,
                          std::size_t position) const {
    ContextVector v(dim());
    encode_at(source, tokens, position, v);
    return v;
  }
};

struct HashedNgramConfig {
  std::uint32_t dim = 1024;
  std::uint32_t window = 3;  // longest n-gram, ending at the context tail
  std::uint64_t seed = 0;
};

/// Deterministic feature-hashing encoder. Every n-gram (n = 1..window) that
/// ends at the last context token is hashed to one coordinate with a +/-1
/// sign; the accumulated vector is L2-normalized.
class HashedNgramEncoder final : public ContextEncoder {
 public:
  explicit HashedNgramEncoder(HashedNgramConfig config);

  std::uint32_t dim() const noexcept override { return config_.dim; }
  const HashedNgramConfig& config() const noexcept { return config_; }

  void encode_at(SourceId source, std::span<const TokenId> tokens, std::size_t position,
                 std::span<float> out) const override;
  using ContextEncoder::encode_at;

  /// Encodes a whole token sequence as a context. Throws DataError if empty.
  ContextVector encode(std::span<const TokenId> context) const;

  /// The accumulated +/-1 counts before normalization.
  std::vector<std::int32_t> raw_features(std::span<const TokenId> context) const;

  /// Coordinate and sign that the n-gram hashes to.
  struct Feature {
    std::uint32_t coordinate;
    std::int32_t sign;
  };
  Feature hash_ngram(std::span<const TokenId> ngram) const noexcept;

 private:
  HashedNgramConfig config_;
};

/// Externally computed context vectors keyed by (source_id, position).
class ImportedVectors final : public ContextEncoder {
 public:
  explicit ImportedVectors(std::uint32_t dim) : dim_(dim) {}

  std::uint32_t dim() const noexcept override { return dim_; }

  void encode_at(SourceId source, std::span<const TokenId> tokens, std::size_t position,
                 std::span<float> out) const override;
  using ContextEncoder::encode_at;

  void insert(SourceId source, std::uint32_t position, std::span<const float> values);
  std::span<const float> lookup(SourceId source, std::uint32_t position) const;
  std::size_t rows() const noexcept { return index_.size(); }

 private:
  using Key = std::pair<SourceId, std::uint32_t>;
  struct KeyHash {
    std::size_t operator()(const Key& k) const noexcept;
  };

  std::uint32_t dim_;
  std::vector<float> values_;
  std::unordered_map<Key, std::size_t, KeyHash> index_;
  std::vector<Key> keys_;

  friend void write_vectors(const std::string& path, const ImportedVectors& vectors);
};

/// Vector import format: "LKNNVEC1", u32 dim, u64 rows, then rows of
/// (u64 source_id, u32 position, f32[dim]), little-endian.
ImportedVectors import_vectors(const std::string& path);
void write_vectors(const std::string& path, const ImportedVectors& vectors);

}  // namespace lknn
