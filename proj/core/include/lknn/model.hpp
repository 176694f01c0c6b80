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
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "lknn/datastore.hpp"
#include "lknn/encoder.hpp"
#include "lknn/locality.hpp"
#include "lknn/types.hpp"

namespace lknn {

/// Per-level affine distance transforms g_l(d) = w[l] * d + b[l] for levels
/// 0..n. b[0] is pinned to zero: a shared offset cancels in the softmax, so
/// only 2n+1 parameters are free.
class LocalityParams {
 public:
  /// w = 1, b = 0 at every level: g(d) = d, the plain kNN-LM.
  static LocalityParams identity(std::uint32_t max_level);

  /// Throws DataError unless sizes match, b[0] == 0 and all values are finite.
  LocalityParams(std::vector<double> weights, std::vector<double> biases);

  std::uint32_t max_level() const noexcept { return static_cast<std::uint32_t>(w_.size() - 1); }
  std::size_t parameter_count() const noexcept { return 2 * w_.size() - 1; }

  double weight(std::uint32_t level) const { return w_.at(level); }
  double bias(std::uint32_t level) const { return b_.at(level); }
  const std::vector<double>& weights() const noexcept { return w_; }
  const std::vector<double>& biases() const noexcept { return b_; }

  void set_weight(std::uint32_t level, double value);
  /// Throws for level 0.
  void set_bias(std::uint32_t level, double value);

  /// Free parameters in a flat vector: w[0..n] followed by b[1..n].
  std::vector<double> flatten() const;
  static LocalityParams unflatten(std::span<const double> flat);

  friend bool operator==(const LocalityParams&, const LocalityParams&) = default;

 private:
  LocalityParams() = default;
  std::vector<double> w_;
  std::vector<double> b_;
};

/// g = w[level] * d + b[level]. May be negative.
double modified_distance(double distance, std::uint32_t level, const LocalityParams& params);

/// Sparse p_kNN over the targets present in a neighbor set, ascending by
/// token id. Empty means "no retrieval".
struct KnnDistribution {
  std::vector<std::pair<TokenId, double>> probs;

  bool empty() const noexcept { return probs.empty(); }
  double prob(TokenId token) const noexcept;
};

/// p(v) = sum_{i: target_i = v} exp(-g_i) / sum_i exp(-g_i), via max-shifted
/// log-sum-exp.
KnnDistribution knn_distribution(const NeighborSet& ns, const LocalityParams& params);

/// log p_kNN(gold), or nullopt when gold is not among the retrieved targets.
std::optional<double> knn_log_prob(const NeighborSet& ns, const LocalityParams& params,
                                   TokenId gold);

/// lambda * p_kNN + (1 - lambda) * p_LM. With no retrieval the LM row is
/// returned unchanged.
std::vector<double> interpolate(const KnnDistribution& p_knn, std::span<const double> p_lm,
                                double lambda);

struct TunerConfig {
  double learning_rate = 1e-4;
  std::uint32_t epochs = 200;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  /// Keep w[1..n] at 1 and tune only w[0] and the biases.
  bool freeze_nonlocal_weights = false;
  /// Examples per Adam step; 0 means one full-batch step per epoch.
  std::uint32_t batch_size = 32;
  /// Seed of the per-epoch example shuffle (mini-batch mode only).
  std::uint64_t shuffle_seed = 0;
  double lambda = 0.25;
  std::uint32_t k = 1024;
  unsigned threads = 1;

  void validate() const;
};

/// One tuning example: annotated neighbors of a context and its gold token.
struct TuningExample {
  NeighborSet neighbors;
  TokenId gold = 0;
};

/// Negative log-likelihood of the gold token and its gradient with respect
/// to the flattened parameters (see LocalityParams::flatten).
struct LossAndGradient {
  double loss = 0.0;
  std::vector<double> gradient;
};

/// One example per position >= 1 of every unit: the k nearest neighbors of
/// its context with the unit's own source excluded, annotated with levels.
std::vector<TuningExample> collect_tuning_examples(const Corpus& units, const Datastore& store,
                                                   const ContextEncoder& encoder,
                                                   const LocalityScheme& scheme, std::size_t k,
                                                   unsigned threads = 1);

/// nullopt when the gold token was not retrieved (loss undefined).
std::optional<LossAndGradient> example_loss(const TuningExample& example,
                                            const LocalityParams& params);

struct TuneResult {
  LocalityParams params;
  /// Mean NLL over the used examples, evaluated before each epoch's updates;
  /// loss_trace[0] is the loss of the initial (identity) parameters.
  std::vector<double> loss_trace;
  double final_loss = 0.0;
  std::size_t used = 0;
  std::size_t skipped = 0;
};

/// Adam on the mean kNN NLL of the gold tokens, starting from identity
/// parameters. Examples whose gold token was not retrieved are skipped and
/// counted. Throws DataError for an empty set or when every example is
/// skipped. Loss accumulation is chunked in a fixed order, so results do not
/// depend on `config.threads`.
TuneResult tune(std::span<const TuningExample> examples, std::uint32_t max_level,
                const TunerConfig& config);

/// Mean NLL over the examples whose gold token was retrieved.
double mean_loss(std::span<const TuningExample> examples, const LocalityParams& params,
                 std::size_t* used = nullptr);

/// Parameters file: {"kind": "linear", "scheme", "n", "w": [...], "b": [...],
/// "config": {...}, "loss_trace": [...], ...}. Extra top-level fields are
/// carried in `extra_json` (a JSON object text) when writing.
struct ParamsFile {
  std::string scheme;
  LocalityParams params = LocalityParams::identity(0);
  std::vector<double> loss_trace;
  std::string config_json = "{}";
  std::string extra_json = "{}";
};

std::string params_to_json(const ParamsFile& file);
ParamsFile params_from_json(std::string_view text);
void save_params(const std::string& path, const ParamsFile& file);
ParamsFile load_params(const std::string& path);

}  // namespace lknn
