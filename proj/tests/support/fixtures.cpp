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

#include "fixtures.hpp"

#include <algorithm>
#include <numeric>

namespace lknn::testing {

Document make_doc(SourceId source, std::vector<TokenId> tokens, AttributeSet attrs) {
  Document doc;
  doc.source_id = source;
  doc.tokens = std::move(tokens);
  doc.attributes = std::move(attrs);
  return doc;
}

AttributeSet code_attrs(const std::string& project, const std::string& subdir) {
  AttributeSet attrs;
  attrs.set("project", project);
  attrs.set("subdirectory", subdir);
  return attrs;
}

std::vector<float> grid_vector(std::uint32_t dim, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> step(-8, 8);
  std::vector<float> v(dim);
  for (auto& x : v) x = static_cast<float>(step(rng)) * 0.25f;
  return v;
}

GridStore make_grid_store(std::size_t count, std::uint32_t dim, std::uint64_t seed, TokenId vocab,
                          SourceId source_count) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<TokenId> any_token(0, vocab - 1);
  std::uniform_int_distribution<SourceId> any_source(0, source_count - 1);
  DatastoreBuilder builder(dim, vocab);
  GridStore g{dim, {}, {}, {}, DatastoreBuilder(dim, vocab).finish()};
  for (std::size_t i = 0; i < count; ++i) {
    const auto key = grid_vector(dim, rng);
    const TokenId target = any_token(rng);
    const SourceId source = any_source(rng);
    builder.add(key, target, source);
    g.keys.insert(g.keys.end(), key.begin(), key.end());
    g.targets.push_back(target);
    g.sources.push_back(source);
  }
  g.store = std::move(builder).finish();
  return g;
}

std::vector<std::uint64_t> brute_force_knn(std::span<const float> keys,
                                           std::span<const SourceId> sources, std::uint32_t dim,
                                           std::span<const float> query, std::size_t k,
                                           std::optional<SourceId> exclude) {
  std::vector<std::pair<double, std::uint64_t>> all;
  for (std::uint64_t i = 0; i < sources.size(); ++i) {
    if (exclude && sources[i] == *exclude) continue;
    double d = 0.0;
    for (std::uint32_t j = 0; j < dim; ++j) {
      const double diff = static_cast<double>(keys[i * dim + j]) - static_cast<double>(query[j]);
      d += diff * diff;
    }
    all.emplace_back(d, i);
  }
  std::sort(all.begin(), all.end());
  std::vector<std::uint64_t> out;
  for (std::size_t r = 0; r < std::min(k, all.size()); ++r) out.push_back(all[r].second);
  return out;
}

void LastTokenEncoder::encode_at(SourceId, std::span<const TokenId> tokens, std::size_t position,
                                 std::span<float> out) const {
  const auto& v = table_.at(tokens[position - 1]);
  std::copy(v.begin(), v.end(), out.begin());
}

void LastTokenLM::distribution(SourceId, std::span<const TokenId> tokens, std::size_t position,
                               std::span<double> out) const {
  const auto& row = rows_.at(tokens[position - 1]);
  std::copy(row.begin(), row.end(), out.begin());
}

}  // namespace lknn::testing
