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

#include "lknn/eval.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <cmath>
#include <json.hpp>
#include <limits>
#include <mutex>
#include <ostream>
#include <thread>

namespace lknn {

namespace {

// Queries encoded and searched together within one unit.
constexpr std::size_t kQueryBlock = 256;

struct UnitResult {
  UnitReport report;
  std::vector<PositionTrace> trace;
};

void add_hits(std::array<std::size_t, kTopK.size()>& counts, std::uint32_t mask) {
  for (std::size_t j = 0; j < kTopK.size(); ++j) counts[j] += (mask >> j) & 1U;
}

class UnitScorer {
 public:
  UnitScorer(const Datastore* store, const ContextEncoder* encoder, const LanguageModel& lm,
             const LocalityScheme& scheme, const LocalityParams& params, const EvalConfig& config)
      : store_(store), encoder_(encoder), lm_(lm), scheme_(scheme), params_(params), config_(config) {}

  UnitResult score(const Document& doc, std::size_t unit_index) const {
    UnitResult out;
    out.report.unit_index = unit_index;
    out.report.source_id = doc.source_id;
    const std::size_t n = doc.tokens.size();
    std::vector<ScoredToken> scores(n);
    out.trace.reserve(n == 0 ? 0 : n - 1);

    const bool retrieve = config_.mode != EvalMode::kLmOnly;
    const std::size_t dim = retrieve ? encoder_->dim() : 0;
    std::vector<float> queries;
    std::vector<double> row(lm_.vocab_size());

    for (std::size_t first = 1; first < n; first += kQueryBlock) {
      const std::size_t last = std::min(n, first + kQueryBlock);
      std::vector<NeighborSet> sets;
      if (retrieve) {
        queries.assign((last - first) * dim, 0.0f);
        for (std::size_t pos = first; pos < last; ++pos) {
          encoder_->encode_at(doc.source_id, doc.tokens, pos,
                              std::span<float>(queries).subspan((pos - first) * dim, dim));
        }
        const std::vector<std::optional<SourceId>> excludes(last - first, doc.source_id);
        sets = knn_query_batch(*store_, queries, config_.k, excludes, 1);
      }
      for (std::size_t pos = first; pos < last; ++pos) {
        const TokenId gold = doc.tokens[pos];
        if (gold >= row.size()) {
          throw DataError("token " + std::to_string(gold) + " at position " + std::to_string(pos) +
                          " of source " + std::to_string(doc.source_id) +
                          " is outside the LM vocabulary");
        }
        lm_.distribution(doc.source_id, doc.tokens, pos, row);
        PositionTrace t;
        t.unit_index = unit_index;
        t.source_id = doc.source_id;
        t.position = pos;
        t.gold = gold;
        t.p_lm = row[gold];
        std::vector<double> final_row;
        std::span<const double> dist = row;
        if (retrieve) {
          NeighborSet& ns = sets[pos - first];
          annotate_neighbors(ns, doc.attributes, scheme_, *store_);
          const KnnDistribution p_knn = knn_distribution(ns, params_);
          t.p_knn = p_knn.prob(gold);
          t.neighbor_count = ns.size();
          if (!ns.empty()) {
            t.min_distance = ns.neighbors.front().distance;
            t.min_level = ns.neighbors.front().level;
          }
          final_row = interpolate(p_knn, row, config_.lambda);
          dist = final_row;
        }
        t.p_final = dist[gold];
        t.logprob = std::log(t.p_final);
        t.rank = gold_rank(dist, gold);
        scores[pos] = {t.logprob, hit_mask(t.rank)};
        out.trace.push_back(std::move(t));
      }
    }

    UnitReport& r = out.report;
    auto tally = [&r](const ScoredToken& s) {
      r.nll_sum -= s.logprob;
      add_hits(r.hits, s.hits);
      ++r.tokens;
    };
    if (doc.fulltoken_spans) {
      std::vector<TokenSpan> spans;
      for (const auto& span : *doc.fulltoken_spans) {
        if (span.begin == 0) {
          ++r.skipped;
        } else {
          spans.push_back(span);
        }
      }
      for (const auto& s : fulltoken_aggregate(scores, spans)) tally(s);
    } else {
      r.skipped = n == 0 ? 0 : 1;
      for (std::size_t pos = 1; pos < n; ++pos) tally(scores[pos]);
    }
    return out;
  }

 private:
  const Datastore* store_;
  const ContextEncoder* encoder_;
  const LanguageModel& lm_;
  const LocalityScheme& scheme_;
  const LocalityParams& params_;
  const EvalConfig& config_;
};

double safe_perplexity(double nll_sum, std::size_t tokens) {
  if (tokens == 0) return std::numeric_limits<double>::quiet_NaN();
  return std::exp(nll_sum / static_cast<double>(tokens));
}

nlohmann::json accuracy_json(const std::array<std::size_t, kTopK.size()>& hits, std::size_t tokens) {
  nlohmann::json j = nlohmann::json::object();
  for (std::size_t i = 0; i < kTopK.size(); ++i) {
    j[std::to_string(kTopK[i])] =
        tokens == 0 ? std::numeric_limits<double>::quiet_NaN()
                    : static_cast<double>(hits[i]) / static_cast<double>(tokens);
  }
  return j;
}

}  // namespace

const char* eval_mode_name(EvalMode mode) noexcept {
  switch (mode) {
    case EvalMode::kLmOnly:
      return "lm_only";
    case EvalMode::kKnn:
      return "knn";
    case EvalMode::kKnnLocality:
      return "knn_locality";
  }
  return "unknown";
}

EvalMode parse_eval_mode(const std::string& name) {
  if (name == "lm_only" || name == "lm-only" || name == "lm") return EvalMode::kLmOnly;
  if (name == "knn") return EvalMode::kKnn;
  if (name == "knn_locality" || name == "knn-locality" || name == "locality") {
    return EvalMode::kKnnLocality;
  }
  throw ConfigError("unknown eval mode '" + name + "' (expected lm_only, knn or knn_locality)");
}

void EvalConfig::validate() const {
  if (k == 0) throw ConfigError("k must be at least 1");
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw ConfigError("lambda must lie in [0, 1]");
}

std::size_t gold_rank(std::span<const double> distribution, TokenId gold) {
  const double p = distribution[gold];
  std::size_t rank = 0;
  for (std::size_t v = 0; v < distribution.size(); ++v) {
    rank += distribution[v] > p || (distribution[v] == p && v < gold);
  }
  return rank;
}

bool topk_hit(std::span<const double> distribution, TokenId gold, std::size_t k) {
  return gold_rank(distribution, gold) < k;
}

std::uint32_t hit_mask(std::size_t rank) noexcept {
  std::uint32_t mask = 0;
  for (std::size_t j = 0; j < kTopK.size(); ++j) {
    if (rank < kTopK[j]) mask |= 1U << j;
  }
  return mask;
}

std::vector<ScoredToken> fulltoken_aggregate(std::span<const ScoredToken> subtokens,
                                             std::span<const TokenSpan> spans) {
  std::vector<ScoredToken> out;
  out.reserve(spans.size());
  std::size_t floor = 0;
  for (const auto& span : spans) {
    if (span.begin >= span.end || span.end > subtokens.size() || span.begin < floor) {
      throw DataError("full-token span [" + std::to_string(span.begin) + ", " +
                      std::to_string(span.end) + ") is empty, overlapping or out of range");
    }
    ScoredToken s{0.0, ~0U};
    for (std::size_t i = span.begin; i < span.end; ++i) {
      s.logprob += subtokens[i].logprob;
      s.hits &= subtokens[i].hits;
    }
    out.push_back(s);
    floor = span.end;
  }
  return out;
}

double UnitReport::mean_nll() const noexcept {
  return tokens == 0 ? std::numeric_limits<double>::quiet_NaN()
                     : nll_sum / static_cast<double>(tokens);
}

double UnitReport::perplexity() const noexcept { return safe_perplexity(nll_sum, tokens); }

double EvalReport::mean_nll() const noexcept {
  return tokens == 0 ? std::numeric_limits<double>::quiet_NaN()
                     : nll_sum / static_cast<double>(tokens);
}

double EvalReport::perplexity() const noexcept { return safe_perplexity(nll_sum, tokens); }

double EvalReport::accuracy(std::size_t j) const noexcept {
  return tokens == 0 ? std::numeric_limits<double>::quiet_NaN()
                     : static_cast<double>(hits.at(j)) / static_cast<double>(tokens);
}

EvalReport evaluate(const Corpus& units, const Datastore* store, const ContextEncoder* encoder,
                    const LanguageModel& lm, const LocalityScheme& scheme,
                    const LocalityParams* params, const EvalConfig& config,
                    std::vector<PositionTrace>* trace) {
  config.validate();
  const LocalityParams identity = LocalityParams::identity(scheme.max_level());
  const LocalityParams* effective = &identity;
  if (config.mode != EvalMode::kLmOnly) {
    if (store == nullptr || encoder == nullptr) {
      throw ConfigError("kNN evaluation needs a datastore and an encoder");
    }
    if (store->vocab_size() != lm.vocab_size()) {
      throw DataError("vocabulary mismatch: store has " + std::to_string(store->vocab_size()) +
                      " tokens, LM has " + std::to_string(lm.vocab_size()));
    }
    if (encoder->dim() != store->dim()) {
      throw DataError("encoder dimension " + std::to_string(encoder->dim()) +
                      " does not match store dimension " + std::to_string(store->dim()));
    }
  } else if (store != nullptr && store->vocab_size() != lm.vocab_size()) {
    throw DataError("vocabulary mismatch between LM and store");
  }
  if (config.mode == EvalMode::kKnnLocality) {
    if (params == nullptr) throw ConfigError("knn_locality mode requires a params file");
    if (params->max_level() != scheme.max_level()) {
      throw ConfigError("params have " + std::to_string(params->max_level() + 1) +
                        " levels but scheme '" + scheme.name() + "' has " +
                        std::to_string(scheme.level_count()));
    }
    effective = params;
  }

  const UnitScorer scorer(store, encoder, lm, scheme, *effective, config);
  std::vector<UnitResult> results(units.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto work = [&] {
    for (std::size_t i = next++; i < units.size(); i = next++) {
      try {
        results[i] = scorer.score(units[i], i);
      } catch (...) {
        const std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next = units.size();
      }
    }
  };
  const unsigned workers =
      std::max(1U, std::min<unsigned>(config.threads, static_cast<unsigned>(units.size())));
  if (workers <= 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < workers; ++t) pool.emplace_back(work);
  }
  if (failure) std::rethrow_exception(failure);

  std::vector<std::size_t> order(units.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return units[a].source_id < units[b].source_id;
  });

  EvalReport report;
  report.mode = config.mode;
  report.k = config.k;
  report.lambda = config.lambda;
  report.units.reserve(units.size());
  for (std::size_t i : order) {
    UnitResult& r = results[i];
    report.tokens += r.report.tokens;
    report.skipped += r.report.skipped;
    report.nll_sum += r.report.nll_sum;
    for (std::size_t j = 0; j < kTopK.size(); ++j) report.hits[j] += r.report.hits[j];
    report.units.push_back(r.report);
    if (trace != nullptr) {
      trace->insert(trace->end(), std::make_move_iterator(r.trace.begin()),
                    std::make_move_iterator(r.trace.end()));
    }
  }
  return report;
}

std::string report_to_json(const EvalReport& report) {
  nlohmann::json j;
  j["mode"] = eval_mode_name(report.mode);
  j["k"] = report.k;
  j["lambda"] = report.lambda;
  j["perplexity"] = report.perplexity();
  j["mean_nll"] = report.mean_nll();
  j["token_count"] = report.tokens;
  j["skipped"] = report.skipped;
  j["top_k_accuracy"] = accuracy_json(report.hits, report.tokens);
  nlohmann::json units = nlohmann::json::array();
  for (const auto& u : report.units) {
    units.push_back({{"unit", u.unit_index},
                     {"source_id", u.source_id},
                     {"token_count", u.tokens},
                     {"skipped", u.skipped},
                     {"mean_nll", u.mean_nll()},
                     {"perplexity", u.perplexity()},
                     {"top_k_accuracy", accuracy_json(u.hits, u.tokens)}});
  }
  j["units"] = std::move(units);
  return j.dump(2);
}

void write_trace_csv(std::ostream& out, std::span<const PositionTrace> trace) {
  out << "unit,source_id,position,gold,p_lm,p_knn,p_final,logprob";
  for (auto k : kTopK) out << ",top" << k;
  out << ",neighbor_count,min_distance,min_level\n";
  const auto old_precision = out.precision(17);
  for (const auto& t : trace) {
    out << t.unit_index << ',' << t.source_id << ',' << t.position << ',' << t.gold << ','
        << t.p_lm << ',' << t.p_knn << ',' << t.p_final << ',' << t.logprob;
    for (auto k : kTopK) out << ',' << (t.rank < k ? 1 : 0);
    out << ',' << t.neighbor_count << ',';
    if (t.min_distance) out << *t.min_distance;
    out << ',';
    if (t.min_level) out << *t.min_level;
    out << '\n';
  }
  out.precision(old_precision);
}

}  // namespace lknn
