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
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lknn/attributes.hpp"
#include "lknn/corpus.hpp"
#include "lknn/encoder.hpp"
#include "lknn/mapped_file.hpp"
#include "lknn/types.hpp"

namespace lknn {

enum class DistanceKind : std::uint8_t { kSquaredL2 = 0 };

struct Neighbor {
  std::uint64_t entry = 0;
  double distance = 0.0;  // squared L2, as computed in float and widened
  TokenId target = 0;
  SourceId source = 0;
  std::uint32_t level = 0;  // locality level, filled in by annotate_neighbors

  friend bool operator==(const Neighbor&, const Neighbor&) = default;
};

/// The retrieved neighbors of one query, ascending by (distance, entry).
struct NeighborSet {
  std::size_t query_index = 0;
  std::size_t k_requested = 0;
  std::vector<Neighbor> neighbors;

  bool empty() const noexcept { return neighbors.empty(); }
  std::size_t size() const noexcept { return neighbors.size(); }
};

/// Key/value datastore: row-major f32 keys plus columnar targets and source
/// ids, and one attribute set per distinct source. Read-only once built;
/// concurrent queries are safe. Move-only because the column views may point
/// into a memory-mapped file.
class Datastore {
 public:
  static constexpr char kMagic[8] = {'L', 'K', 'N', 'N', 'D', 'S', '0', '1'};

  Datastore(Datastore&&) noexcept = default;
  Datastore& operator=(Datastore&&) noexcept = default;
  Datastore(const Datastore&) = delete;
  Datastore& operator=(const Datastore&) = delete;

  std::uint32_t dim() const noexcept { return dim_; }
  std::uint64_t size() const noexcept { return count_; }
  TokenId vocab_size() const noexcept { return vocab_size_; }
  DistanceKind distance_kind() const noexcept { return DistanceKind::kSquaredL2; }
  bool is_mapped() const noexcept { return file_.size() > 0; }

  std::span<const float> keys() const noexcept { return keys_; }
  std::span<const float> key(std::uint64_t i) const noexcept {
    return keys_.subspan(i * dim_, dim_);
  }
  std::span<const TokenId> targets() const noexcept { return targets_; }
  std::span<const SourceId> source_ids() const noexcept { return sources_; }

  /// Attributes recorded for `source`; an empty set for unknown sources.
  const AttributeSet& attributes_of(SourceId source) const;
  const std::map<SourceId, AttributeSet>& attribute_table() const noexcept { return attributes_; }

  /// Binary layout (little-endian): magic "LKNNDS01", u32 dim, u64 count,
  /// u32 vocab_size, u8 distance kind, zero padding to offset 32; then the
  /// f32 key block, the u32 target block and the u64 source block, each
  /// padded to an 8-byte boundary; then a u64-length-prefixed attribute
  /// table with one JSON line per distinct source, ascending by source id.
  void save(const std::string& path) const;
  std::string serialize() const;

  /// Memory-maps a store file. Throws FormatError naming the bad field.
  static Datastore load(const std::string& path);

 private:
  friend class DatastoreBuilder;
  Datastore() = default;

  std::uint32_t dim_ = 0;
  std::uint64_t count_ = 0;
  TokenId vocab_size_ = 0;

  MappedFile file_;
  std::vector<float> owned_keys_;
  std::vector<TokenId> owned_targets_;
  std::vector<SourceId> owned_sources_;

  std::span<const float> keys_;
  std::span<const TokenId> targets_;
  std::span<const SourceId> sources_;
  std::map<SourceId, AttributeSet> attributes_;
};

/// Field-for-field comparison of two stores (keys compared bitwise).
bool same_contents(const Datastore& a, const Datastore& b);

/// Single-writer incremental construction.
class DatastoreBuilder {
 public:
  DatastoreBuilder(std::uint32_t dim, TokenId vocab_size);

  void add(std::span<const float> key, TokenId target, SourceId source);
  /// Records the attributes of a source. A source seen again must carry the
  /// same attributes.
  void set_attributes(SourceId source, const AttributeSet& attrs);

  std::uint64_t size() const noexcept { return targets_.size(); }
  Datastore finish() &&;

 private:
  std::uint32_t dim_;
  TokenId vocab_size_;
  std::vector<float> keys_;
  std::vector<TokenId> targets_;
  std::vector<SourceId> sources_;
  std::map<SourceId, AttributeSet> attributes_;
};

/// One entry per position t >= 1 of every document: key = f(tokens[0, t)),
/// value = tokens[t]. Position 0 has no preceding context and is skipped.
Datastore build_datastore(const Corpus& corpus, const ContextEncoder& encoder,
                          TokenId vocab_size);

/// Number of entries build_datastore produces for `corpus`.
std::uint64_t count_entries(const Corpus& corpus) noexcept;

float squared_l2(std::span<const float> a, std::span<const float> b) noexcept;

/// Exact k nearest neighbors by squared L2 among entries whose source differs
/// from `exclude`. Ties are broken by lower entry index.
NeighborSet knn_query(const Datastore& store, std::span<const float> query, std::size_t k,
                      std::optional<SourceId> exclude = std::nullopt);

/// Runs `queries.size() / dim` queries. Queries are scanned in blocks so each
/// key block is reused across several queries while it is hot in cache, and
/// the batch is split across `threads` workers. Results equal knn_query.
std::vector<NeighborSet> knn_query_batch(const Datastore& store, std::span<const float> queries,
                                         std::size_t k,
                                         std::span<const std::optional<SourceId>> excludes,
                                         unsigned threads = 1);

}  // namespace lknn
