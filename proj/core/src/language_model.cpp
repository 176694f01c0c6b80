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

#include "lknn/language_model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <unordered_set>

#include "binary_io.hpp"
#include "hash.hpp"
#include "lknn/mapped_file.hpp"

namespace lknn {

namespace {

constexpr char kLogprobMagic[8] = {'L', 'K', 'N', 'N', 'L', 'P', '0', '1'};

// Tolerance for float32 rows whose probabilities should sum to one.
constexpr double kRowSumTolerance = 1e-4;

}  // namespace

std::size_t NgramLM::HistoryHash::operator()(const std::vector<TokenId>& h) const noexcept {
  std::uint64_t x = detail::mix64(h.size());
  for (TokenId t : h) x = detail::mix64(x ^ t);
  return static_cast<std::size_t>(x);
}

NgramLM::NgramLM(NgramConfig config, TokenId vocab_size, const Corpus& training)
    : config_(config), vocab_size_(vocab_size) {
  if (config_.order == 0) throw ConfigError("n-gram order must be at least 1");
  if (!(config_.add_k > 0.0)) throw ConfigError("add-k smoothing constant must be positive");
  if (vocab_size_ == 0) throw ConfigError("language model vocabulary is empty");
  for (const auto& doc : training) {
    const std::span<const TokenId> tokens(doc.tokens);
    for (std::size_t t = 0; t < tokens.size(); ++t) {
      if (tokens[t] >= vocab_size_) {
        throw DataError("token id " + std::to_string(tokens[t]) + " >= vocab size " +
                        std::to_string(vocab_size_));
      }
      const auto h = history_of(tokens.first(t));
      auto& slot = counts_[std::vector<TokenId>(h.begin(), h.end())];
      ++slot.total;
      ++slot.next[tokens[t]];
    }
  }
}

std::span<const TokenId> NgramLM::history_of(std::span<const TokenId> context) const noexcept {
  const std::size_t n = std::min<std::size_t>(config_.order - 1, context.size());
  return context.last(n);
}

const NgramLM::HistoryCounts* NgramLM::find(std::span<const TokenId> history) const {
  auto it = counts_.find(std::vector<TokenId>(history.begin(), history.end()));
  return it == counts_.end() ? nullptr : &it->second;
}

double NgramLM::prob(std::span<const TokenId> context, TokenId target) const {
  if (target >= vocab_size_) throw DataError("target id out of vocabulary");
  const double k = config_.add_k;
  const double kv = k * vocab_size_;
  const HistoryCounts* h = find(history_of(context));
  if (h == nullptr) return 1.0 / vocab_size_;
  auto it = h->next.find(target);
  const double c = it == h->next.end() ? 0.0 : static_cast<double>(it->second);
  return (c + k) / (static_cast<double>(h->total) + kv);
}

void NgramLM::dist(std::span<const TokenId> context, std::span<double> out) const {
  if (out.size() != vocab_size_) throw DataError("distribution buffer does not match vocab size");
  const HistoryCounts* h = find(history_of(context));
  if (h == nullptr) {
    std::fill(out.begin(), out.end(), 1.0 / vocab_size_);
    return;
  }
  const double k = config_.add_k;
  const double denom = static_cast<double>(h->total) + k * vocab_size_;
  std::fill(out.begin(), out.end(), k / denom);
  for (const auto& [token, count] : h->next) out[token] = (static_cast<double>(count) + k) / denom;
}

void NgramLM::distribution(SourceId /*source*/, std::span<const TokenId> tokens,
                           std::size_t position, std::span<double> out) const {
  if (position > tokens.size()) throw DataError("position out of range");
  dist(tokens.first(position), out);
}

std::size_t ImportedLogprobs::KeyHash::operator()(const Key& k) const noexcept {
  return static_cast<std::size_t>(detail::mix64(k.first * 0x9E3779B97F4A7C15ULL ^ k.second));
}

ImportedLogprobs::ImportedLogprobs(TokenId vocab_size, std::uint32_t top_m)
    : vocab_size_(vocab_size), top_m_(top_m) {
  if (vocab_size_ == 0) throw ConfigError("imported log-probs: vocab size must be positive");
  if (top_m_ > vocab_size_) throw ConfigError("imported log-probs: top_m exceeds vocab size");
}

void ImportedLogprobs::insert(SourceId source, std::uint32_t position, Row row) {
  const std::string where =
      "log-prob row (source " + std::to_string(source) + ", position " + std::to_string(position) + ")";
  if (!std::isfinite(row.tail_mass) || row.tail_mass < 0.0f) {
    throw DataError(where + ": negative or non-finite tail mass");
  }
  if (row.tail_mass > 1.0f + kRowSumTolerance) throw DataError(where + ": tail mass exceeds 1");
  const std::size_t expected = top_m_ == 0 ? vocab_size_ : top_m_;
  if (row.logprobs.size() != expected) {
    throw DataError(where + ": expected " + std::to_string(expected) + " entries");
  }
  std::unordered_set<TokenId> seen;
  double sum = 0.0;
  for (const auto& [token, lp] : row.logprobs) {
    if (token >= vocab_size_) throw DataError(where + ": token id out of vocabulary");
    if (!seen.insert(token).second) throw DataError(where + ": duplicate token id");
    if (std::isnan(lp) || lp > 0.0f) throw DataError(where + ": log-probability above 0");
    sum += std::exp(static_cast<double>(lp));
  }
  if (sum > 1.0 + kRowSumTolerance) throw DataError(where + ": probabilities exceed 1");
  if (sum + row.tail_mass > 1.0 + kRowSumTolerance) {
    throw DataError(where + ": probabilities plus tail mass exceed 1");
  }
  if (expected == vocab_size_ && row.tail_mass > kRowSumTolerance) {
    throw DataError(where + ": row lists every token but states a tail mass");
  }
  if (expected < vocab_size_ && !(row.tail_mass > 0.0f)) {
    throw DataError(where + ": truncated row needs a positive tail mass");
  }
  const Key k{source, position};
  if (rows_.find(k) == rows_.end()) order_.push_back(k);
  rows_.insert_or_assign(k, std::move(row));
}

void ImportedLogprobs::distribution(SourceId source, std::span<const TokenId> /*tokens*/,
                                    std::size_t position, std::span<double> out) const {
  if (out.size() != vocab_size_) throw DataError("distribution buffer does not match vocab size");
  auto it = rows_.find(Key{source, static_cast<std::uint32_t>(position)});
  if (it == rows_.end()) {
    throw DataError("no imported log-probs for source " + std::to_string(source) + " position " +
                    std::to_string(position));
  }
  const Row& row = it->second;
  const std::size_t unlisted = vocab_size_ - row.logprobs.size();
  const double fill = unlisted == 0 ? 0.0 : static_cast<double>(row.tail_mass) / unlisted;
  std::fill(out.begin(), out.end(), fill);
  for (const auto& [token, lp] : row.logprobs) out[token] = std::exp(static_cast<double>(lp));
  // float32 rows are only normalized to ~1e-7; rescale so rows sum to 1.
  double total = 0.0;
  for (double p : out) total += p;
  for (double& p : out) p /= total;
}

ImportedLogprobs import_lm_logprobs(const std::string& path) {
  MappedFile file(path);
  detail::ByteReader in(file.bytes());
  auto magic = in.take(sizeof(kLogprobMagic), "magic");
  if (std::memcmp(magic.data(), kLogprobMagic, sizeof(kLogprobMagic)) != 0) {
    throw FormatError("magic", "bad magic in log-prob file '" + path + "'");
  }
  const auto vocab = in.get<std::uint32_t>("vocab_size");
  const auto top_m = in.get<std::uint32_t>("top_m");
  const auto rows = in.get<std::uint64_t>("rows");
  ImportedLogprobs lm(vocab, top_m);
  const std::uint64_t entries = top_m == 0 ? vocab : top_m;
  const std::uint64_t row_bytes = 8 + 4 + 4 + entries * (top_m == 0 ? 4 : 8);
  if (rows > in.remaining() / row_bytes) {
    throw FormatError("rows", "truncated payload: header declares " + std::to_string(rows) +
                                  " rows");
  }
  for (std::uint64_t r = 0; r < rows; ++r) {
    const auto source = in.get<std::uint64_t>("source_id");
    const auto position = in.get<std::uint32_t>("position");
    ImportedLogprobs::Row row;
    row.tail_mass = in.get<float>("tail_mass");
    row.logprobs.reserve(entries);
    for (std::uint64_t e = 0; e < entries; ++e) {
      const TokenId token = top_m == 0 ? static_cast<TokenId>(e) : in.get<std::uint32_t>("token");
      row.logprobs.emplace_back(token, in.get<float>("logprob"));
    }
    lm.insert(source, position, std::move(row));
  }
  if (in.remaining() != 0) throw FormatError("rows", "trailing bytes after declared rows");
  return lm;
}

void write_lm_logprobs(const std::string& path, const ImportedLogprobs& lm) {
  detail::ByteWriter w;
  w.put_bytes(std::string_view(kLogprobMagic, sizeof(kLogprobMagic)));
  w.put<std::uint32_t>(lm.vocab_size_);
  w.put<std::uint32_t>(lm.top_m_);
  w.put<std::uint64_t>(lm.order_.size());
  for (const auto& key : lm.order_) {
    const auto& row = lm.rows_.at(key);
    w.put<std::uint64_t>(key.first);
    w.put<std::uint32_t>(key.second);
    w.put<float>(row.tail_mass);
    if (lm.top_m_ == 0) {
      std::vector<float> dense(lm.vocab_size_, 0.0f);
      for (const auto& [token, lp] : row.logprobs) dense[token] = lp;
      w.put_block(std::span<const float>(dense));
    } else {
      for (const auto& [token, lp] : row.logprobs) {
        w.put<std::uint32_t>(token);
        w.put<float>(lp);
      }
    }
  }
  detail::write_file(path, w.buffer());
}

}  // namespace lknn
