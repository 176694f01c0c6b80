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

#include "lknn/datastore.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <json.hpp>
#include <limits>
#include <thread>

#include "binary_io.hpp"
#include "json_convert.hpp"

namespace lknn {

namespace {

constexpr std::size_t kHeaderSize = 32;

// Candidate ordering shared by the heap and the final sort.
struct Candidate {
  float distance;
  std::uint64_t entry;

  friend bool operator<(const Candidate& a, const Candidate& b) noexcept {
    return a.distance < b.distance || (a.distance == b.distance && a.entry < b.entry);
  }
};

// Bounded max-heap keeping the k smallest candidates. Entries are offered in
// increasing index order, so a newcomer that ties the current worst loses.
class TopK {
 public:
  explicit TopK(std::size_t k) : k_(k) { heap_.reserve(k); }

  float worst() const noexcept {
    return heap_.size() < k_ ? std::numeric_limits<float>::infinity() : heap_.front().distance;
  }

  void offer(float distance, std::uint64_t entry) {
    if (heap_.size() < k_) {
      heap_.push_back({distance, entry});
      std::push_heap(heap_.begin(), heap_.end());
    } else if (distance < heap_.front().distance) {
      std::pop_heap(heap_.begin(), heap_.end());
      heap_.back() = {distance, entry};
      std::push_heap(heap_.begin(), heap_.end());
    }
  }

  std::vector<Candidate> sorted() && {
    std::sort_heap(heap_.begin(), heap_.end());
    return std::move(heap_);
  }

 private:
  std::size_t k_;
  std::vector<Candidate> heap_;
};

NeighborSet to_neighbor_set(const Datastore& store, std::vector<Candidate> best,
                            std::size_t query_index, std::size_t k) {
  NeighborSet out;
  out.query_index = query_index;
  out.k_requested = k;
  out.neighbors.reserve(best.size());
  const auto targets = store.targets();
  const auto sources = store.source_ids();
  for (const auto& c : best) {
    out.neighbors.push_back({c.entry, static_cast<double>(c.distance), targets[c.entry],
                             sources[c.entry], 0});
  }
  return out;
}

void check_query(const Datastore& store, std::span<const float> query) {
  if (query.size() != store.dim()) {
    throw DataError("query dim " + std::to_string(query.size()) + " does not match store dim " +
                    std::to_string(store.dim()));
  }
}

std::uint64_t checked_mul(std::uint64_t a, std::uint64_t b, const char* field) {
  if (a != 0 && b > std::numeric_limits<std::uint64_t>::max() / a) {
    throw FormatError(field, std::string("size overflow in ") + field);
  }
  return a * b;
}

}  // namespace

float squared_l2(std::span<const float> a, std::span<const float> b) noexcept {
  // Sixteen independent lanes let the compiler vectorize without reassociating
  // a single running sum; the lane reduction order is fixed.
  constexpr std::size_t kLanes = 16;
  const std::size_t n = a.size();
  const float* pa = a.data();
  const float* pb = b.data();
  float acc[kLanes] = {};
  std::size_t i = 0;
  for (; i + kLanes <= n; i += kLanes) {
    for (std::size_t j = 0; j < kLanes; ++j) {
      const float d = pa[i + j] - pb[i + j];
      acc[j] += d * d;
    }
  }
  float tail = 0.0f;
  for (; i < n; ++i) {
    const float d = pa[i] - pb[i];
    tail += d * d;
  }
  for (std::size_t width = kLanes / 2; width > 0; width /= 2) {
    for (std::size_t j = 0; j < width; ++j) acc[j] += acc[j + width];
  }
  return acc[0] + tail;
}

const AttributeSet& Datastore::attributes_of(SourceId source) const {
  static const AttributeSet kEmpty;
  auto it = attributes_.find(source);
  return it == attributes_.end() ? kEmpty : it->second;
}

std::string Datastore::serialize() const {
  detail::ByteWriter w;
  w.put_bytes(std::string_view(kMagic, sizeof(kMagic)));
  w.put<std::uint32_t>(dim_);
  w.put<std::uint64_t>(count_);
  w.put<std::uint32_t>(vocab_size_);
  w.put<std::uint8_t>(static_cast<std::uint8_t>(DistanceKind::kSquaredL2));
  w.pad_to(kHeaderSize);
  w.put_block(keys_);
  w.pad_to(8);
  w.put_block(targets_);
  w.pad_to(8);
  w.put_block(sources_);
  w.pad_to(8);
  std::string table;
  for (const auto& [source, attrs] : attributes_) {
    nlohmann::json line;
    line["source_id"] = source;
    line["attributes"] = detail::attributes_to_json(attrs);
    table += line.dump();
    table += '\n';
  }
  w.put<std::uint64_t>(table.size());
  w.put_bytes(table);
  return w.release();
}

void Datastore::save(const std::string& path) const { detail::write_file(path, serialize()); }

Datastore Datastore::load(const std::string& path) {
  Datastore store;
  store.file_ = MappedFile(path);
  detail::ByteReader in(store.file_.bytes());

  auto magic = in.take(sizeof(kMagic), "magic");
  if (std::memcmp(magic.data(), kMagic, sizeof(kMagic)) != 0) {
    throw FormatError("magic", "bad magic in store file '" + path + "'");
  }
  store.dim_ = in.get<std::uint32_t>("dim");
  store.count_ = in.get<std::uint64_t>("count");
  store.vocab_size_ = in.get<std::uint32_t>("vocab_size");
  const auto kind = in.get<std::uint8_t>("distance_kind");
  if (kind != static_cast<std::uint8_t>(DistanceKind::kSquaredL2)) {
    throw FormatError("distance_kind", "unsupported distance kind " + std::to_string(kind));
  }
  if (store.dim_ == 0) throw FormatError("dim", "store dim must be positive");
  in.align_to(kHeaderSize, "header");

  const std::uint64_t key_bytes =
      checked_mul(checked_mul(store.count_, store.dim_, "count"), sizeof(float), "count");
  if (key_bytes > in.remaining()) {
    throw FormatError("count", "truncated payload: header count " + std::to_string(store.count_) +
                                   " needs more key data than the file holds");
  }
  const auto key_raw = in.take(key_bytes, "keys");
  in.align_to(8, "keys");
  const auto target_raw = in.take(store.count_ * sizeof(TokenId), "targets");
  in.align_to(8, "targets");
  const auto source_raw = in.take(store.count_ * sizeof(SourceId), "source_ids");
  in.align_to(8, "source_ids");

  store.keys_ = {reinterpret_cast<const float*>(key_raw.data()), store.count_ * store.dim_};
  store.targets_ = {reinterpret_cast<const TokenId*>(target_raw.data()), store.count_};
  store.sources_ = {reinterpret_cast<const SourceId*>(source_raw.data()), store.count_};

  const auto table_len = in.get<std::uint64_t>("attribute_table");
  const auto table_raw = in.take(table_len, "attribute_table");
  if (in.remaining() != 0) throw FormatError("attribute_table", "trailing bytes after table");
  std::string_view table(reinterpret_cast<const char*>(table_raw.data()), table_raw.size());
  while (!table.empty()) {
    const auto nl = table.find('\n');
    const auto line = table.substr(0, nl);
    table = nl == std::string_view::npos ? std::string_view{} : table.substr(nl + 1);
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      store.attributes_.emplace(j.at("source_id").get<SourceId>(),
                                detail::attributes_from_json(j.at("attributes")));
    } catch (const nlohmann::json::exception& e) {
      throw FormatError("attribute_table", std::string("malformed attribute table: ") + e.what());
    }
  }

  for (TokenId t : store.targets_) {
    if (t >= store.vocab_size_) {
      throw FormatError("targets", "target id " + std::to_string(t) + " >= vocab size " +
                                       std::to_string(store.vocab_size_));
    }
  }
  return store;
}

bool same_contents(const Datastore& a, const Datastore& b) {
  if (a.dim() != b.dim() || a.size() != b.size() || a.vocab_size() != b.vocab_size()) return false;
  const auto ka = a.keys();
  const auto kb = b.keys();
  return std::memcmp(ka.data(), kb.data(), ka.size_bytes()) == 0 &&
         std::ranges::equal(a.targets(), b.targets()) &&
         std::ranges::equal(a.source_ids(), b.source_ids()) &&
         a.attribute_table() == b.attribute_table();
}

DatastoreBuilder::DatastoreBuilder(std::uint32_t dim, TokenId vocab_size)
    : dim_(dim), vocab_size_(vocab_size) {
  if (dim_ == 0) throw ConfigError("datastore dim must be positive");
}

void DatastoreBuilder::add(std::span<const float> key, TokenId target, SourceId source) {
  if (key.size() != dim_) {
    throw DataError("key dim " + std::to_string(key.size()) + " does not match store dim " +
                    std::to_string(dim_));
  }
  if (target >= vocab_size_) {
    throw DataError("token id " + std::to_string(target) + " >= vocab size " +
                    std::to_string(vocab_size_));
  }
  for (float v : key) {
    if (!std::isfinite(v)) throw DataError("key vector contains a non-finite value");
  }
  keys_.insert(keys_.end(), key.begin(), key.end());
  targets_.push_back(target);
  sources_.push_back(source);
}

void DatastoreBuilder::set_attributes(SourceId source, const AttributeSet& attrs) {
  auto [it, inserted] = attributes_.emplace(source, attrs);
  if (!inserted && !(it->second == attrs)) {
    throw DataError("source " + std::to_string(source) + " appears with conflicting attributes");
  }
}

Datastore DatastoreBuilder::finish() && {
  Datastore store;
  store.dim_ = dim_;
  store.count_ = targets_.size();
  store.vocab_size_ = vocab_size_;
  store.owned_keys_ = std::move(keys_);
  store.owned_targets_ = std::move(targets_);
  store.owned_sources_ = std::move(sources_);
  store.keys_ = store.owned_keys_;
  store.targets_ = store.owned_targets_;
  store.sources_ = store.owned_sources_;
  store.attributes_ = std::move(attributes_);
  return store;
}

std::uint64_t count_entries(const Corpus& corpus) noexcept {
  std::uint64_t n = 0;
  for (const auto& doc : corpus) n += doc.tokens.empty() ? 0 : doc.tokens.size() - 1;
  return n;
}

Datastore build_datastore(const Corpus& corpus, const ContextEncoder& encoder,
                          TokenId vocab_size) {
  DatastoreBuilder builder(encoder.dim(), vocab_size);
  std::vector<float> key(encoder.dim());
  for (const auto& doc : corpus) {
    builder.set_attributes(doc.source_id, doc.attributes);
    const std::span<const TokenId> tokens(doc.tokens);
    for (TokenId t : tokens) {
      if (t >= vocab_size) {
        throw DataError("source " + std::to_string(doc.source_id) + ": token id " +
                        std::to_string(t) + " >= vocab size " + std::to_string(vocab_size));
      }
    }
    for (std::size_t pos = 1; pos < tokens.size(); ++pos) {
      encoder.encode_at(doc.source_id, tokens, pos, key);
      builder.add(key, tokens[pos], doc.source_id);
    }
  }
  return std::move(builder).finish();
}

NeighborSet knn_query(const Datastore& store, std::span<const float> query, std::size_t k,
                      std::optional<SourceId> exclude) {
  check_query(store, query);
  if (k == 0) throw DataError("k must be at least 1");
  TopK best(k);
  const auto sources = store.source_ids();
  for (std::uint64_t i = 0; i < store.size(); ++i) {
    if (exclude && sources[i] == *exclude) continue;
    best.offer(squared_l2(store.key(i), query), i);
  }
  return to_neighbor_set(store, std::move(best).sorted(), 0, k);
}

std::vector<NeighborSet> knn_query_batch(const Datastore& store, std::span<const float> queries,
                                         std::size_t k,
                                         std::span<const std::optional<SourceId>> excludes,
                                         unsigned threads) {
  const std::size_t dim = store.dim();
  if (queries.size() % dim != 0) throw DataError("query batch is not a multiple of store dim");
  const std::size_t n = queries.size() / dim;
  if (!excludes.empty() && excludes.size() != n) {
    throw DataError("exclusion list does not match the number of queries");
  }
  if (k == 0) throw DataError("k must be at least 1");

  std::vector<NeighborSet> results(n);
  const auto sources = store.source_ids();

  // Scans entries [0, count) for queries [first, last) a block at a time.
  auto run = [&](std::size_t first, std::size_t last) {
    constexpr std::size_t kQueryBlock = 8;
    constexpr std::size_t kEntryBlock = 256;
    for (std::size_t q0 = first; q0 < last; q0 += kQueryBlock) {
      const std::size_t q1 = std::min(last, q0 + kQueryBlock);
      std::vector<TopK> best;
      best.reserve(q1 - q0);
      for (std::size_t q = q0; q < q1; ++q) best.emplace_back(k);
      for (std::uint64_t e0 = 0; e0 < store.size(); e0 += kEntryBlock) {
        const std::uint64_t e1 = std::min<std::uint64_t>(store.size(), e0 + kEntryBlock);
        for (std::size_t q = q0; q < q1; ++q) {
          const auto query = queries.subspan(q * dim, dim);
          const auto& ex = excludes.empty() ? std::optional<SourceId>{} : excludes[q];
          auto& top = best[q - q0];
          for (std::uint64_t e = e0; e < e1; ++e) {
            if (ex && sources[e] == *ex) continue;
            top.offer(squared_l2(store.key(e), query), e);
          }
        }
      }
      for (std::size_t q = q0; q < q1; ++q) {
        results[q] = to_neighbor_set(store, std::move(best[q - q0]).sorted(), q, k);
      }
    }
  };

  threads = std::max(1U, std::min<unsigned>(threads, static_cast<unsigned>(std::max<std::size_t>(n, 1))));
  if (threads == 1) {
    run(0, n);
  } else {
    std::vector<std::jthread> workers;
    const std::size_t chunk = (n + threads - 1) / threads;
    for (unsigned t = 0; t < threads; ++t) {
      const std::size_t first = t * chunk;
      const std::size_t last = std::min(n, first + chunk);
      if (first >= last) break;
      workers.emplace_back(run, first, last);
    }
  }
  return results;
}

}  // namespace lknn
