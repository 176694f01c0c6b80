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

#include "lknn/model.hpp"

#include <algorithm>
#include <cmath>
#include <json.hpp>
#include <limits>

#include "binary_io.hpp"

namespace lknn {

LocalityParams LocalityParams::identity(std::uint32_t max_level) {
  LocalityParams p;
  p.w_.assign(max_level + 1, 1.0);
  p.b_.assign(max_level + 1, 0.0);
  return p;
}

LocalityParams::LocalityParams(std::vector<double> weights, std::vector<double> biases)
    : w_(std::move(weights)), b_(std::move(biases)) {
  if (w_.empty() || w_.size() != b_.size()) {
    throw DataError("locality params: w and b must be non-empty and of equal length");
  }
  if (b_[0] != 0.0) throw DataError("locality params: b[0] must be 0");
  for (std::size_t i = 0; i < w_.size(); ++i) {
    if (!std::isfinite(w_[i]) || !std::isfinite(b_[i])) {
      throw DataError("locality params: non-finite value at level " + std::to_string(i));
    }
  }
}

void LocalityParams::set_weight(std::uint32_t level, double value) { w_.at(level) = value; }

void LocalityParams::set_bias(std::uint32_t level, double value) {
  if (level == 0) throw DataError("locality params: b[0] is fixed at 0");
  b_.at(level) = value;
}

std::vector<double> LocalityParams::flatten() const {
  std::vector<double> flat(w_);
  flat.insert(flat.end(), b_.begin() + 1, b_.end());
  return flat;
}

LocalityParams LocalityParams::unflatten(std::span<const double> flat) {
  if (flat.size() % 2 != 1) throw DataError("flattened params must have 2n+1 entries");
  const std::size_t levels = (flat.size() + 1) / 2;
  std::vector<double> w(flat.begin(), flat.begin() + static_cast<std::ptrdiff_t>(levels));
  std::vector<double> b{0.0};
  b.insert(b.end(), flat.begin() + static_cast<std::ptrdiff_t>(levels), flat.end());
  return LocalityParams(std::move(w), std::move(b));
}

double modified_distance(double distance, std::uint32_t level, const LocalityParams& params) {
  return params.weight(level) * distance + params.bias(level);
}

double KnnDistribution::prob(TokenId token) const noexcept {
  auto it = std::lower_bound(probs.begin(), probs.end(), token,
                             [](const auto& entry, TokenId t) { return entry.first < t; });
  return it != probs.end() && it->first == token ? it->second : 0.0;
}

namespace {

// exp(-g_i - M) for every neighbor, where M = max_i(-g_i); returns the sum.
double shifted_weights(const NeighborSet& ns, const LocalityParams& params,
                       std::vector<double>& weights) {
  weights.resize(ns.size());
  double top = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < ns.size(); ++i) {
    const auto& n = ns.neighbors[i];
    weights[i] = -modified_distance(n.distance, n.level, params);
    top = std::max(top, weights[i]);
  }
  double total = 0.0;
  for (double& w : weights) {
    w = std::exp(w - top);
    total += w;
  }
  return total;
}

}  // namespace

KnnDistribution knn_distribution(const NeighborSet& ns, const LocalityParams& params) {
  KnnDistribution out;
  if (ns.empty()) return out;
  std::vector<double> weights;
  const double total = shifted_weights(ns, params, weights);

  std::vector<std::size_t> order(ns.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return ns.neighbors[a].target < ns.neighbors[b].target;
  });
  for (std::size_t i : order) {
    const TokenId t = ns.neighbors[i].target;
    if (out.probs.empty() || out.probs.back().first != t) out.probs.emplace_back(t, 0.0);
    out.probs.back().second += weights[i];
  }
  for (auto& [token, p] : out.probs) p /= total;
  return out;
}

std::optional<double> knn_log_prob(const NeighborSet& ns, const LocalityParams& params,
                                   TokenId gold) {
  if (ns.empty()) return std::nullopt;
  std::vector<double> weights;
  const double total = shifted_weights(ns, params, weights);
  double gold_mass = 0.0;
  bool found = false;
  for (std::size_t i = 0; i < ns.size(); ++i) {
    if (ns.neighbors[i].target == gold) {
      gold_mass += weights[i];
      found = true;
    }
  }
  if (!found) return std::nullopt;
  return std::log(gold_mass) - std::log(total);
}

std::vector<double> interpolate(const KnnDistribution& p_knn, std::span<const double> p_lm,
                                double lambda) {
  std::vector<double> out(p_lm.begin(), p_lm.end());
  if (p_knn.empty()) return out;
  const double keep = 1.0 - lambda;
  for (double& p : out) p *= keep;
  for (const auto& [token, p] : p_knn.probs) {
    if (token >= out.size()) throw DataError("kNN target outside the LM vocabulary");
    out[token] += lambda * p;
  }
  return out;
}

void TunerConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError("tuner: learning rate must be positive");
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw ConfigError("lambda must lie in [0, 1]");
  if (k == 0) throw ConfigError("k must be at least 1");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw ConfigError("tuner: Adam betas must lie in [0, 1)");
  }
  if (!(epsilon > 0.0)) throw ConfigError("tuner: Adam epsilon must be positive");
}

std::string params_to_json(const ParamsFile& file) {
  nlohmann::json j = nlohmann::json::parse(file.extra_json);
  if (!j.is_object()) throw DataError("params extra fields must be a JSON object");
  j["kind"] = "linear";
  j["scheme"] = file.scheme;
  j["n"] = file.params.max_level();
  j["w"] = file.params.weights();
  j["b"] = file.params.biases();
  j["config"] = nlohmann::json::parse(file.config_json);
  j["loss_trace"] = file.loss_trace;
  return j.dump(2);
}

ParamsFile params_from_json(std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError(std::string("params: invalid JSON: ") + e.what());
  }
  try {
    if (j.value("kind", std::string("linear")) != "linear") {
      throw DataError("params: unsupported kind '" + j["kind"].get<std::string>() + "'");
    }
    ParamsFile file;
    file.scheme = j.value("scheme", std::string());
    auto w = j.at("w").get<std::vector<double>>();
    auto b = j.at("b").get<std::vector<double>>();
    if (j.contains("n") && j["n"].get<std::size_t>() + 1 != w.size()) {
      throw DataError("params: n does not match the length of w");
    }
    file.params = LocalityParams(std::move(w), std::move(b));
    if (j.contains("loss_trace")) file.loss_trace = j["loss_trace"].get<std::vector<double>>();
    if (j.contains("config")) file.config_json = j["config"].dump();
    nlohmann::json extra = j;
    for (const char* key : {"kind", "scheme", "n", "w", "b", "config", "loss_trace"}) extra.erase(key);
    file.extra_json = extra.dump();
    return file;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("params: ") + e.what());
  }
}

void save_params(const std::string& path, const ParamsFile& file) {
  detail::write_file(path, params_to_json(file) + "\n");
}

ParamsFile load_params(const std::string& path) { return params_from_json(detail::read_file(path)); }

}  // namespace lknn
