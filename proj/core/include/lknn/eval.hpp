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

#include <array>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lknn/corpus.hpp"
#include "lknn/datastore.hpp"
#include "lknn/encoder.hpp"
#include "lknn/language_model.hpp"
#include "lknn/locality.hpp"
#include "lknn/model.hpp"

namespace lknn {

/// Cutoffs reported for top-k accuracy.
inline constexpr std::array<std::uint32_t, 4> kTopK = {1, 5, 10, 20};

enum class EvalMode {
  kLmOnly,       // p = p_LM
  kKnn,          // kNN-LM with identity params
  kKnnLocality,  // kNN-LM with tuned locality params
};

const char* eval_mode_name(EvalMode mode) noexcept;
/// Accepts "lm_only"/"lm-only", "knn", "knn_locality"/"knn-locality".
EvalMode parse_eval_mode(const std::string& name);

struct EvalConfig {
  EvalMode mode = EvalMode::kKnn;
  std::size_t k = 1024;
  double lambda = 0.25;
  unsigned threads = 1;

  void validate() const;
};

/// 0-based rank of `gold`: the number of tokens with higher probability, or
/// equal probability and a lower id.
std::size_t gold_rank(std::span<const double> distribution, TokenId gold);

/// True iff gold is among the k most probable tokens, ties broken by lower id.
bool topk_hit(std::span<const double> distribution, TokenId gold, std::size_t k);

/// Score of one predicted (sub)token. Bit j of `hits` is set when the gold
/// token is within the top kTopK[j].
struct ScoredToken {
  double logprob = 0.0;
  std::uint32_t hits = 0;
};

std::uint32_t hit_mask(std::size_t rank) noexcept;

/// Full-token scores: the sum of member log-probs and the AND of member hits.
/// Spans must be non-empty, sorted, disjoint and within `subtokens`; throws
/// DataError otherwise.
std::vector<ScoredToken> fulltoken_aggregate(std::span<const ScoredToken> subtokens,
                                             std::span<const TokenSpan> spans);

struct UnitReport {
  std::size_t unit_index = 0;
  SourceId source_id = 0;
  std::size_t tokens = 0;   // scored tokens (full tokens when spans are given)
  std::size_t skipped = 0;  // unscored tokens: the first token has no context
  double nll_sum = 0.0;
  std::array<std::size_t, kTopK.size()> hits{};

  double mean_nll() const noexcept;
  double perplexity() const noexcept;
};

struct EvalReport {
  EvalMode mode = EvalMode::kKnn;
  std::size_t k = 0;
  double lambda = 0.0;
  std::size_t tokens = 0;
  std::size_t skipped = 0;
  double nll_sum = 0.0;
  std::array<std::size_t, kTopK.size()> hits{};
  /// Ordered by (source_id, unit index).
  std::vector<UnitReport> units;

  double mean_nll() const noexcept;
  double perplexity() const noexcept;
  double accuracy(std::size_t j) const noexcept;
};

/// One scored subtoken position.
struct PositionTrace {
  std::size_t unit_index = 0;
  SourceId source_id = 0;
  std::size_t position = 0;
  TokenId gold = 0;
  double p_lm = 0.0;
  double p_knn = 0.0;
  double p_final = 0.0;
  double logprob = 0.0;
  std::size_t rank = 0;
  std::size_t neighbor_count = 0;
  std::optional<double> min_distance;
  std::optional<std::uint32_t> min_level;  // level of the nearest neighbor
};

/// Scores every position >= 1 of every unit: the context is encoded, the
/// store is queried with the unit's own source excluded, neighbors are
/// annotated and p_kNN is interpolated with the LM row. `store` may be null
/// only in lm-only mode; `params` is required in knn-locality mode. Units run
/// concurrently and are reduced in (source_id, unit index) order. When
/// `trace` is given it receives one row per scored subtoken in the same order.
EvalReport evaluate(const Corpus& units, const Datastore* store, const ContextEncoder* encoder,
                    const LanguageModel& lm, const LocalityScheme& scheme,
                    const LocalityParams* params, const EvalConfig& config,
                    std::vector<PositionTrace>* trace = nullptr);

/// {"mode", "k", "lambda", "perplexity", "mean_nll", "token_count",
/// "skipped", "top_k_accuracy": {"1": ..}, "units": [...]}
std::string report_to_json(const EvalReport& report);

void write_trace_csv(std::ostream& out, std::span<const PositionTrace> trace);

}  // namespace lknn
