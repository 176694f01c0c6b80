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

#include <json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "lknn/analysis.hpp"
#include "lknn/encoder.hpp"
#include "lknn/eval.hpp"
#include "lknn/language_model.hpp"
#include "lknn/model.hpp"

namespace lknn::cli {

// Settings shared by every subcommand. Paths are optional; each command
// checks the ones it needs.
struct RunConfig {
  nlohmann::json raw;  // resolved config, embedded into every artifact

  std::optional<std::string> corpus;
  std::optional<std::string> tune_corpus;
  std::optional<std::string> eval_corpus;
  std::optional<std::string> lm_corpus;
  std::optional<std::string> store;
  std::optional<std::string> params;
  std::optional<std::string> category_map;
  std::optional<std::string> vectors;
  std::optional<std::string> lm_logprobs;
  std::optional<std::string> report;
  std::optional<std::string> trace;
  std::optional<std::string> analysis_prefix;

  std::string scheme = "java";
  std::string path_prefix;
  TokenId vocab_size = 0;  // 0: from the store, else inferred from corpora
  std::optional<std::uint32_t> context_window;

  HashedNgramConfig encoder;
  NgramConfig lm;
  TunerConfig tuner;
  EvalConfig eval;
  AnalysisConfig analysis;
};

nlohmann::json default_config();

// Merges `overlay` into `base`, rejecting keys absent from the defaults and
// values of the wrong type.
void merge_config(nlohmann::json& base, const nlohmann::json& overlay);

// Applies one "dotted.key=value" override. The value is parsed as JSON when
// possible and taken as a string otherwise.
void apply_override(nlohmann::json& config, const std::string& assignment);

RunConfig resolve_config(const std::optional<std::string>& path,
                         const std::vector<std::string>& overrides);

}  // namespace lknn::cli
