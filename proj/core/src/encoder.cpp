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

#include "lknn/encoder.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "binary_io.hpp"
#include "hash.hpp"
#include "lknn/mapped_file.hpp"

namespace lknn {

namespace {

constexpr std::uint64_t kCoordinateSalt = 0xA0761D6478BD642FULL;
constexpr std::uint64_t kSignSalt = 0xE7037ED1A0B428DBULL;
constexpr char kVectorMagic[8] = {'L', 'K', 'N', 'N', 'V', 'E', 'C', '1'};

}  // namespace

HashedNgramEncoder::HashedNgramEncoder(HashedNgramConfig config) : config_(config) {
  if (config_.dim == 0) throw ConfigError("encoder dim must be positive");
  if (config_.window == 0) throw ConfigError("encoder window must be positive");
}

HashedNgramEncoder::Feature HashedNgramEncoder::hash_ngram(
    std::span<const TokenId> ngram) const noexcept {
  std::uint64_t h = detail::mix64(config_.seed ^ (0x51ED270B27C1D8A3ULL * (ngram.size() + 1)));
  for (TokenId t : ngram) h = detail::mix64(h ^ (static_cast<std::uint64_t>(t) + 1));
  const std::uint64_t coordinate = detail::mix64(h ^ kCoordinateSalt);
  const std::uint64_t sign = detail::mix64(h ^ kSignSalt);
  return {static_cast<std::uint32_t>(coordinate % config_.dim), (sign & 1U) ? 1 : -1};
}

std::vector<std::int32_t> HashedNgramEncoder::raw_features(
    std::span<const TokenId> context) const {
  std::vector<std::int32_t> acc(config_.dim, 0);
  const std::size_t longest = std::min<std::size_t>(config_.window, context.size());
  for (std::size_t n = 1; n <= longest; ++n) {
    const Feature f = hash_ngram(context.last(n));
    acc[f.coordinate] += f.sign;
  }
  return acc;
}

ContextVector HashedNgramEncoder::encode(std::span<const TokenId> context) const {
  if (context.empty()) throw DataError("cannot encode an empty context");
  ContextVector out(config_.dim);
  encode_at(0, context, context.size(), out);
  return out;
}

void HashedNgramEncoder::encode_at(SourceId /*source*/, std::span<const TokenId> tokens,
                                   std::size_t position, std::span<float> out) const {
  if (position == 0 || position > tokens.size()) {
    throw DataError("context position " + std::to_string(position) + " out of range");
  }
  if (out.size() != config_.dim) throw DataError("output span does not match encoder dim");
  auto acc = raw_features(tokens.first(position));
  double norm2 = 0.0;
  for (std::int32_t v : acc) norm2 += static_cast<double>(v) * v;
  if (norm2 == 0.0) {
    // Every n-gram cancelled out; fall back to the unigram feature alone.
    std::fill(acc.begin(), acc.end(), 0);
    const Feature f = hash_ngram(tokens.subspan(position - 1, 1));
    acc[f.coordinate] = f.sign;
    norm2 = 1.0;
  }
  const double inv = 1.0 / std::sqrt(norm2);
  for (std::size_t i = 0; i < acc.size(); ++i) out[i] = static_cast<float>(acc[i] * inv);
}

std::size_t ImportedVectors::KeyHash::operator()(const Key& k) const noexcept {
  return static_cast<std::size_t>(detail::mix64(k.first * 0x9E3779B97F4A7C15ULL ^ k.second));
}

void ImportedVectors::insert(SourceId source, std::uint32_t position,
                             std::span<const float> values) {
  if (values.size() != dim_) {
    throw DataError("imported vector has dim " + std::to_string(values.size()) + ", expected " +
                    std::to_string(dim_));
  }
  for (float v : values) {
    if (!std::isfinite(v)) throw DataError("imported vector contains a non-finite value");
  }
  const Key k{source, position};
  if (auto it = index_.find(k); it != index_.end()) {
    std::copy(values.begin(), values.end(), values_.begin() + it->second * dim_);
    return;
  }
  index_.emplace(k, keys_.size());
  keys_.push_back(k);
  values_.insert(values_.end(), values.begin(), values.end());
}

std::span<const float> ImportedVectors::lookup(SourceId source, std::uint32_t position) const {
  auto it = index_.find(Key{source, position});
  if (it == index_.end()) {
    throw DataError("no imported vector for source " + std::to_string(source) + " position " +
                    std::to_string(position));
  }
  return std::span<const float>(values_).subspan(it->second * dim_, dim_);
}

void ImportedVectors::encode_at(SourceId source, std::span<const TokenId> tokens,
                                std::size_t position, std::span<float> out) const {
  if (position == 0 || position > tokens.size()) {
    throw DataError("context position " + std::to_string(position) + " out of range");
  }
  const auto row = lookup(source, static_cast<std::uint32_t>(position));
  std::copy(row.begin(), row.end(), out.begin());
}

ImportedVectors import_vectors(const std::string& path) {
  MappedFile file(path);
  detail::ByteReader in(file.bytes());
  auto magic = in.take(sizeof(kVectorMagic), "magic");
  if (std::memcmp(magic.data(), kVectorMagic, sizeof(kVectorMagic)) != 0) {
    throw FormatError("magic", "bad magic in vector file '" + path + "'");
  }
  const auto dim = in.get<std::uint32_t>("dim");
  const auto rows = in.get<std::uint64_t>("rows");
  if (dim == 0) throw FormatError("dim", "vector file dim must be positive");
  const std::uint64_t row_bytes = 8 + 4 + 4ULL * dim;
  if (rows > in.remaining() / row_bytes) {
    throw FormatError("rows", "truncated payload: header declares " + std::to_string(rows) +
                                  " rows");
  }
  ImportedVectors out(dim);
  std::vector<float> buf(dim);
  for (std::uint64_t r = 0; r < rows; ++r) {
    const auto source = in.get<std::uint64_t>("source_id");
    const auto position = in.get<std::uint32_t>("position");
    auto raw = in.take(4ULL * dim, "values");
    std::memcpy(buf.data(), raw.data(), raw.size());
    out.insert(source, position, buf);
  }
  if (in.remaining() != 0) throw FormatError("rows", "trailing bytes after declared rows");
  return out;
}

void write_vectors(const std::string& path, const ImportedVectors& vectors) {
  detail::ByteWriter w;
  w.put_bytes(std::string_view(kVectorMagic, sizeof(kVectorMagic)));
  w.put<std::uint32_t>(vectors.dim_);
  w.put<std::uint64_t>(vectors.keys_.size());
  for (std::size_t i = 0; i < vectors.keys_.size(); ++i) {
    w.put<std::uint64_t>(vectors.keys_[i].first);
    w.put<std::uint32_t>(vectors.keys_[i].second);
    w.put_block(std::span<const float>(vectors.values_).subspan(i * vectors.dim_, vectors.dim_));
  }
  detail::write_file(path, w.buffer());
}

}  // namespace lknn
