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

#include "run_config.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

namespace lknn::cli {

using nlohmann::json;

namespace {

// Keys whose default is null but which hold integers when set.
bool nullable_integer(const std::string& key) { return key == "context_window"; }

bool same_kind(const json& def, const json& value, const std::string& key) {
  if (value.is_null()) return def.is_null();
  if (def.is_null()) return nullable_integer(key) ? value.is_number_unsigned() : value.is_string();
  if (def.is_number_float()) return value.is_number();
  if (def.is_number_unsigned()) return value.is_number_unsigned();
  if (def.is_number_integer()) return value.is_number_integer();
  if (def.is_boolean()) return value.is_boolean();
  if (def.is_string()) return value.is_string();
  if (def.is_object()) return value.is_object();
  return false;
}

std::optional<std::string> path_of(const json& j, const char* key) {
  const auto& v = j.at(key);
  if (v.is_null()) return std::nullopt;
  return v.get<std::string>();
}

}  // namespace

json default_config() {
  return json{
      {"corpus", nullptr},
      {"tune_corpus", nullptr},
      {"eval_corpus", nullptr},
      {"lm_corpus", nullptr},
      {"store", nullptr},
      {"params", nullptr},
      {"category_map", nullptr},
      {"vectors", nullptr},
      {"lm_logprobs", nullptr},
      {"report", nullptr},
      {"trace", nullptr},
      {"analysis_prefix", nullptr},
      {"scheme", "java"},
      {"path_prefix", ""},
      {"vocab_size", 0U},
      {"context_window", nullptr},
      {"k", 1024U},
      {"lambda", 0.25},
      {"mode", "knn"},
      {"threads", 1U},
      {"encoder", {{"dim", 1024U}, {"window", 3U}, {"seed", 0U}}},
      {"lm", {{"order", 3U}, {"add_k", 1.0}}},
      {"tuner",
       {{"learning_rate", 1e-4},
        {"epochs", 200U},
        {"beta1", 0.9},
        {"beta2", 0.999},
        {"epsilon", 1e-8},
        {"freeze_nonlocal_weights", false},
        {"batch_size", 32U},
        {"shuffle_seed", 0U}}},
      {"analysis", {{"max_rank", 200U}, {"bin_width", 0.0}, {"min_count", 10U}}},
  };
}

namespace {

void merge_into(json& base, const json& defaults, const json& overlay, const std::string& where) {
  if (!overlay.is_object()) throw ConfigError(where + ": config must be a JSON object");
  for (const auto& [key, value] : overlay.items()) {
    const std::string name = where.empty() ? key : where + "." + key;
    if (!defaults.contains(key)) throw ConfigError("unknown config key '" + name + "'");
    const json& def = defaults.at(key);
    if (!same_kind(def, value, key)) {
      throw ConfigError("config key '" + name + "' has the wrong type: " + value.dump());
    }
    if (def.is_object()) {
      merge_into(base[key], def, value, name);
    } else {
      base[key] = value;
    }
  }
}

}  // namespace

void merge_config(json& base, const json& overlay) {
  merge_into(base, default_config(), overlay, "");
}

void apply_override(json& config, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError("override '" + assignment + "' must look like key=value");
  }
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  json value = json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;
  json patch = value;
  std::vector<std::string> parts;
  std::istringstream in(key);
  for (std::string part; std::getline(in, part, '.');) parts.push_back(part);
  for (auto it = parts.rbegin(); it != parts.rend(); ++it) patch = json{{*it, patch}};
  merge_config(config, patch);
}

RunConfig resolve_config(const std::optional<std::string>& path,
                         const std::vector<std::string>& overrides) {
  json j = default_config();
  if (path) {
    std::ifstream in(*path);
    if (!in) throw ConfigError("cannot open config file '" + *path + "'");
    json file = json::parse(in, nullptr, false);
    if (file.is_discarded()) throw ConfigError("config file '" + *path + "' is not valid JSON");
    merge_config(j, file);
  }
  for (const auto& o : overrides) apply_override(j, o);

  RunConfig c;
  c.raw = j;
  c.corpus = path_of(j, "corpus");
  c.tune_corpus = path_of(j, "tune_corpus");
  c.eval_corpus = path_of(j, "eval_corpus");
  c.lm_corpus = path_of(j, "lm_corpus");
  c.store = path_of(j, "store");
  c.params = path_of(j, "params");
  c.category_map = path_of(j, "category_map");
  c.vectors = path_of(j, "vectors");
  c.lm_logprobs = path_of(j, "lm_logprobs");
  c.report = path_of(j, "report");
  c.trace = path_of(j, "trace");
  c.analysis_prefix = path_of(j, "analysis_prefix");
  c.scheme = j["scheme"].get<std::string>();
  c.path_prefix = j["path_prefix"].get<std::string>();
  c.vocab_size = j["vocab_size"].get<TokenId>();
  if (!j["context_window"].is_null()) {
    c.context_window = j["context_window"].get<std::uint32_t>();
    if (*c.context_window == 0) throw ConfigError("context_window must be at least 1");
  }

  const auto& e = j["encoder"];
  c.encoder = {e["dim"].get<std::uint32_t>(), e["window"].get<std::uint32_t>(),
               e["seed"].get<std::uint64_t>()};
  c.lm = {j["lm"]["order"].get<std::uint32_t>(), j["lm"]["add_k"].get<double>()};
  if (c.context_window) {
    c.encoder.window = std::min(c.encoder.window, *c.context_window);
    c.lm.order = std::min(c.lm.order, *c.context_window + 1);
  }

  const auto& t = j["tuner"];
  c.tuner.learning_rate = t["learning_rate"].get<double>();
  c.tuner.epochs = t["epochs"].get<std::uint32_t>();
  c.tuner.beta1 = t["beta1"].get<double>();
  c.tuner.beta2 = t["beta2"].get<double>();
  c.tuner.epsilon = t["epsilon"].get<double>();
  c.tuner.freeze_nonlocal_weights = t["freeze_nonlocal_weights"].get<bool>();
  c.tuner.batch_size = t["batch_size"].get<std::uint32_t>();
  c.tuner.shuffle_seed = t["shuffle_seed"].get<std::uint64_t>();
  c.tuner.lambda = j["lambda"].get<double>();
  c.tuner.k = j["k"].get<std::uint32_t>();
  c.tuner.threads = j["threads"].get<unsigned>();

  c.eval.mode = parse_eval_mode(j["mode"].get<std::string>());
  c.eval.k = j["k"].get<std::size_t>();
  c.eval.lambda = c.tuner.lambda;
  c.eval.threads = c.tuner.threads;

  const auto& a = j["analysis"];
  c.analysis.k = c.eval.k;
  // Ranks beyond k are never retrieved.
  c.analysis.max_rank = std::min(a["max_rank"].get<std::size_t>(), c.analysis.k);
  c.analysis.bin_width = a["bin_width"].get<double>();
  c.analysis.min_count = a["min_count"].get<std::size_t>();
  c.analysis.threads = c.tuner.threads;

  c.tuner.validate();
  c.eval.validate();
  c.analysis.validate();
  return c;
}

}  // namespace lknn::cli
