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

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <thread>

#include "lknn/model.hpp"

namespace lknn {

namespace {

// Fixed chunk size for loss/gradient accumulation. Chunk sums are added in
// chunk order, so the result is independent of the thread count.
constexpr std::size_t kChunk = 256;

// Compact copy of one usable example.
struct PackedExample {
  std::vector<double> distance;
  std::vector<std::uint32_t> level;
  std::vector<std::uint8_t> gold;
};

struct Accumulator {
  double loss = 0.0;
  std::vector<double> grad;
};

// Loss and gradient of one packed example, added into `acc`. `scratch` holds
// the per-neighbor softmax weights.
void accumulate_example(const PackedExample& ex, const LocalityParams& params,
                        std::uint32_t levels, Accumulator& acc, std::vector<double>& scratch) {
  const std::size_t n = ex.distance.size();
  scratch.resize(n);
  double top = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) {
    scratch[i] = -modified_distance(ex.distance[i], ex.level[i], params);
    top = std::max(top, scratch[i]);
  }
  double total = 0.0;
  double gold_total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    scratch[i] = std::exp(scratch[i] - top);
    total += scratch[i];
    if (ex.gold[i]) gold_total += scratch[i];
  }
  acc.loss += std::log(total) - std::log(gold_total);
  // dL/ds_i = q_i - qhat_i with s_i = -(w_l d_i + b_l).
  for (std::size_t i = 0; i < n; ++i) {
    const double q = scratch[i] / total;
    const double qhat = ex.gold[i] ? scratch[i] / gold_total : 0.0;
    const double ds = q - qhat;
    const std::uint32_t l = ex.level[i];
    acc.grad[l] -= ds * ex.distance[i];
    if (l > 0) acc.grad[levels + l - 1] -= ds;
  }
}

std::optional<PackedExample> pack(const TuningExample& example, std::uint32_t max_level) {
  PackedExample out;
  bool any_gold = false;
  for (const auto& n : example.neighbors.neighbors) {
    if (n.level > max_level) {
      throw DataError("neighbor level " + std::to_string(n.level) + " exceeds parameter levels");
    }
    out.distance.push_back(n.distance);
    out.level.push_back(n.level);
    out.gold.push_back(n.target == example.gold ? 1 : 0);
    any_gold = any_gold || n.target == example.gold;
  }
  if (!any_gold) return std::nullopt;
  return out;
}

// Sum of loss and gradient over examples[indices], chunked in fixed order.
Accumulator accumulate(std::span<const PackedExample> examples,
                       std::span<const std::size_t> indices, const LocalityParams& params,
                       unsigned threads) {
  const auto levels = params.max_level() + 1;
  const std::size_t dims = params.parameter_count();
  const std::size_t chunks = (indices.size() + kChunk - 1) / kChunk;
  std::vector<Accumulator> partial(chunks, Accumulator{0.0, std::vector<double>(dims, 0.0)});

  auto work = [&](std::size_t first_chunk, std::size_t stride) {
    std::vector<double> scratch;
    for (std::size_t c = first_chunk; c < chunks; c += stride) {
      const std::size_t end = std::min(indices.size(), (c + 1) * kChunk);
      for (std::size_t i = c * kChunk; i < end; ++i) {
        accumulate_example(examples[indices[i]], params, levels, partial[c], scratch);
      }
    }
  };
  const unsigned workers = std::max(1U, std::min<unsigned>(threads, static_cast<unsigned>(chunks)));
  if (workers <= 1) {
    work(0, 1);
  } else {
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < workers; ++t) pool.emplace_back(work, t, workers);
  }

  Accumulator total{0.0, std::vector<double>(dims, 0.0)};
  for (const auto& p : partial) {
    total.loss += p.loss;
    for (std::size_t d = 0; d < dims; ++d) total.grad[d] += p.grad[d];
  }
  return total;
}

}  // namespace

std::vector<TuningExample> collect_tuning_examples(const Corpus& units, const Datastore& store,
                                                   const ContextEncoder& encoder,
                                                   const LocalityScheme& scheme, std::size_t k,
                                                   unsigned threads) {
  if (encoder.dim() != store.dim()) {
    throw DataError("encoder dimension does not match store dimension");
  }
  const std::size_t dim = encoder.dim();
  std::vector<TuningExample> out;
  std::vector<float> queries;
  for (const auto& doc : units) {
    const std::size_t n = doc.tokens.size();
    if (n < 2) continue;
    queries.assign((n - 1) * dim, 0.0f);
    for (std::size_t pos = 1; pos < n; ++pos) {
      encoder.encode_at(doc.source_id, doc.tokens, pos,
                        std::span<float>(queries).subspan((pos - 1) * dim, dim));
    }
    const std::vector<std::optional<SourceId>> excludes(n - 1, doc.source_id);
    auto sets = knn_query_batch(store, queries, k, excludes, threads);
    for (std::size_t pos = 1; pos < n; ++pos) {
      NeighborSet& ns = sets[pos - 1];
      annotate_neighbors(ns, doc.attributes, scheme, store);
      out.push_back({std::move(ns), doc.tokens[pos]});
    }
  }
  return out;
}

std::optional<LossAndGradient> example_loss(const TuningExample& example,
                                            const LocalityParams& params) {
  auto packed = pack(example, params.max_level());
  if (!packed) return std::nullopt;
  Accumulator acc{0.0, std::vector<double>(params.parameter_count(), 0.0)};
  std::vector<double> scratch;
  accumulate_example(*packed, params, params.max_level() + 1, acc, scratch);
  return LossAndGradient{acc.loss, std::move(acc.grad)};
}

double mean_loss(std::span<const TuningExample> examples, const LocalityParams& params,
                 std::size_t* used) {
  double sum = 0.0;
  std::size_t count = 0;
  for (const auto& ex : examples) {
    const auto lp = knn_log_prob(ex.neighbors, params, ex.gold);
    if (!lp) continue;
    sum -= *lp;
    ++count;
  }
  if (used != nullptr) *used = count;
  return count == 0 ? std::numeric_limits<double>::quiet_NaN() : sum / static_cast<double>(count);
}

TuneResult tune(std::span<const TuningExample> examples, std::uint32_t max_level,
                const TunerConfig& config) {
  config.validate();
  if (examples.empty()) throw DataError("tuning set is empty");

  std::vector<PackedExample> packed;
  packed.reserve(examples.size());
  std::size_t skipped = 0;
  for (const auto& ex : examples) {
    if (auto p = pack(ex, max_level)) {
      packed.push_back(std::move(*p));
    } else {
      ++skipped;
    }
  }
  if (packed.empty()) {
    throw DataError("every tuning example was skipped: no gold token among retrieved neighbors");
  }

  LocalityParams params = LocalityParams::identity(max_level);
  const std::size_t levels = max_level + 1;
  const std::size_t dims = params.parameter_count();
  std::vector<bool> trainable(dims, true);
  if (config.freeze_nonlocal_weights) {
    for (std::size_t l = 1; l < levels; ++l) trainable[l] = false;
  }

  std::vector<std::size_t> order(packed.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const std::size_t batch = config.batch_size == 0 ? packed.size() : config.batch_size;
  std::mt19937_64 rng(config.shuffle_seed);

  std::vector<double> m(dims, 0.0);
  std::vector<double> v(dims, 0.0);
  std::uint64_t step = 0;
  const double inv_n = 1.0 / static_cast<double>(packed.size());

  TuneResult result{params, {}, 0.0, packed.size(), skipped};
  result.loss_trace.reserve(config.epochs);
  for (std::uint32_t epoch = 0; epoch < config.epochs; ++epoch) {
    result.loss_trace.push_back(accumulate(packed, order, params, config.threads).loss * inv_n);
    if (config.batch_size != 0) std::shuffle(order.begin(), order.end(), rng);

    for (std::size_t first = 0; first < order.size(); first += batch) {
      const std::size_t last = std::min(order.size(), first + batch);
      const auto indices = std::span<const std::size_t>(order).subspan(first, last - first);
      auto acc = accumulate(packed, indices, params, config.threads);
      const double scale = 1.0 / static_cast<double>(indices.size());

      ++step;
      const double c1 = 1.0 - std::pow(config.beta1, static_cast<double>(step));
      const double c2 = 1.0 - std::pow(config.beta2, static_cast<double>(step));
      auto flat = params.flatten();
      for (std::size_t d = 0; d < dims; ++d) {
        if (!trainable[d]) continue;
        const double g = acc.grad[d] * scale;
        m[d] = config.beta1 * m[d] + (1.0 - config.beta1) * g;
        v[d] = config.beta2 * v[d] + (1.0 - config.beta2) * g * g;
        flat[d] -= config.learning_rate * (m[d] / c1) / (std::sqrt(v[d] / c2) + config.epsilon);
      }
      params = LocalityParams::unflatten(flat);
    }
  }
  result.params = params;
  result.final_loss = accumulate(packed, order, params, config.threads).loss * inv_n;
  return result;
}

}  // namespace lknn
