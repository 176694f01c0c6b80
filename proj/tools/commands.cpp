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

#include "commands.hpp"

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>

#include "lknn/analysis.hpp"
#include "lknn/datastore.hpp"
#include "lknn/eval.hpp"
#include "lknn/locality.hpp"
#include "sha256.hpp"

namespace lknn::cli {

using nlohmann::json;

namespace {

const std::string& require(const std::optional<std::string>& path, const char* key) {
  if (!path) throw ConfigError(std::string("config key '") + key + "' is required for this command");
  return *path;
}

// Records each input file's hash for the provenance block.
class Inputs {
 public:
  void add(const char* role, const std::string& path) {
    inputs_[role] = {{"path", path}, {"sha256", sha256_file(path)}};
  }
  const json& json_value() const { return inputs_; }

 private:
  json inputs_ = json::object();
};

json provenance(const char* command, const RunConfig& config, const Inputs& inputs) {
  return {{"command", command}, {"run_config", config.raw}, {"inputs", inputs.json_value()}};
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open '" + path + "' for writing");
  out << text;
  if (!out.flush()) throw DataError("failed writing '" + path + "'");
}

void write_manifest(const std::string& path, json manifest) {
  write_text(path, manifest.dump(2) + "\n");
}

Corpus load_corpus(const RunConfig& config, const std::string& path, Inputs& inputs,
                   const char* role) {
  inputs.add(role, path);
  Corpus corpus = read_corpus_jsonl(path);
  std::optional<CategoryMap> categories;
  if (config.category_map) categories = read_category_map(*config.category_map);
  for (auto& doc : corpus) {
    derive_attributes(doc, config.path_prefix, categories ? &*categories : nullptr);
  }
  return corpus;
}

std::unique_ptr<ContextEncoder> make_encoder(const RunConfig& config, Inputs& inputs) {
  if (config.vectors) {
    inputs.add("vectors", *config.vectors);
    return std::make_unique<ImportedVectors>(import_vectors(*config.vectors));
  }
  return std::make_unique<HashedNgramEncoder>(config.encoder);
}

Datastore load_store(const RunConfig& config, Inputs& inputs) {
  const auto& path = require(config.store, "store");
  inputs.add("store", path);
  return Datastore::load(path);
}

const std::string& units_path(const std::optional<std::string>& specific, const RunConfig& config,
                              const char* key) {
  if (specific) return *specific;
  if (config.corpus) return *config.corpus;
  throw ConfigError(std::string("config key '") + key + "' (or 'corpus') is required");
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

void cmd_build(const RunConfig& config) {
  const auto t0 = std::chrono::steady_clock::now();
  Inputs inputs;
  if (config.category_map) inputs.add("category_map", *config.category_map);
  const Corpus corpus = load_corpus(config, require(config.corpus, "corpus"), inputs, "corpus");
  const auto& out = require(config.store, "store");
  const auto encoder = make_encoder(config, inputs);
  const TokenId vocab = config.vocab_size != 0 ? config.vocab_size : infer_vocab_size(corpus);
  const Datastore store = build_datastore(corpus, *encoder, vocab);
  store.save(out);
  const double secs = seconds_since(t0);

  json manifest = provenance("build", config, inputs);
  manifest["output"] = {{"path", out}, {"sha256", sha256_file(out)}};
  manifest["count"] = store.size();
  manifest["dim"] = store.dim();
  manifest["vocab_size"] = store.vocab_size();
  write_manifest(out + ".manifest.json", manifest);
  std::printf("count %llu\ndim %u\nvocab_size %u\nentries_per_second %.1f\n",
              static_cast<unsigned long long>(store.size()), store.dim(), store.vocab_size(),
              secs > 0.0 ? static_cast<double>(store.size()) / secs : 0.0);
}

void cmd_tune(const RunConfig& config) {
  Inputs inputs;
  if (config.category_map) inputs.add("category_map", *config.category_map);
  const Corpus units =
      load_corpus(config, units_path(config.tune_corpus, config, "tune_corpus"), inputs, "tune_corpus");
  const auto& out = require(config.params, "params");
  const Datastore store = load_store(config, inputs);
  const auto encoder = make_encoder(config, inputs);
  const LocalityScheme scheme = LocalityScheme::resolve(config.scheme);

  const auto examples =
      collect_tuning_examples(units, store, *encoder, scheme, config.tuner.k, config.tuner.threads);
  std::fprintf(stderr, "tune: %zu examples, scheme %s with %u levels\n", examples.size(),
               scheme.name().c_str(), scheme.level_count());
  const TuneResult result = tune(examples, scheme.max_level(), config.tuner);

  ParamsFile file;
  file.scheme = scheme.name();
  file.params = result.params;
  file.loss_trace = result.loss_trace;
  file.config_json = config.raw["tuner"].dump();
  json extra = {{"provenance", provenance("tune", config, inputs)}};
  extra["used"] = result.used;
  extra["skipped"] = result.skipped;
  extra["initial_loss"] = result.loss_trace.empty() ? 0.0 : result.loss_trace.front();
  extra["final_loss"] = result.final_loss;
  file.extra_json = extra.dump();
  save_params(out, file);
  std::printf("used %zu\nskipped %zu\ninitial_loss %.6f\nfinal_loss %.6f\n", result.used,
              result.skipped, result.loss_trace.empty() ? 0.0 : result.loss_trace.front(),
              result.final_loss);
}

void cmd_eval(const RunConfig& config) {
  Inputs inputs;
  if (config.category_map) inputs.add("category_map", *config.category_map);
  const Corpus units =
      load_corpus(config, units_path(config.eval_corpus, config, "eval_corpus"), inputs, "eval_corpus");
  const bool retrieve = config.eval.mode != EvalMode::kLmOnly;
  std::optional<Datastore> store;
  std::unique_ptr<ContextEncoder> encoder;
  if (retrieve || config.store) store = load_store(config, inputs);
  if (retrieve) encoder = make_encoder(config, inputs);
  const LocalityScheme scheme = LocalityScheme::resolve(config.scheme);

  std::optional<LocalityParams> params;
  if (config.eval.mode == EvalMode::kKnnLocality) {
    const auto& path = require(config.params, "params");
    inputs.add("params", path);
    const ParamsFile file = load_params(path);
    if (!file.scheme.empty() && file.scheme != scheme.name()) {
      throw ConfigError("params were tuned for scheme '" + file.scheme + "', not '" +
                        scheme.name() + "'");
    }
    params = file.params;
  }

  std::unique_ptr<LanguageModel> lm;
  if (config.lm_logprobs) {
    inputs.add("lm_logprobs", *config.lm_logprobs);
    lm = std::make_unique<ImportedLogprobs>(import_lm_logprobs(*config.lm_logprobs));
  } else {
    const Corpus training =
        load_corpus(config, require(config.lm_corpus, "lm_corpus"), inputs, "lm_corpus");
    TokenId vocab = config.vocab_size;
    if (vocab == 0 && store) vocab = store->vocab_size();
    if (vocab == 0) vocab = std::max(infer_vocab_size(training), infer_vocab_size(units));
    lm = std::make_unique<NgramLM>(config.lm, vocab, training);
  }

  std::vector<PositionTrace> trace;
  const EvalReport report = evaluate(units, store ? &*store : nullptr, encoder.get(), *lm, scheme,
                                     params ? &*params : nullptr, config.eval,
                                     config.trace ? &trace : nullptr);
  json out = json::parse(report_to_json(report));
  out["scheme"] = scheme.name();
  out["provenance"] = provenance("eval", config, inputs);
  const std::string text = out.dump(2) + "\n";
  if (config.report) {
    write_text(*config.report, text);
  } else {
    std::fputs(text.c_str(), stdout);
  }
  if (config.trace) {
    std::ofstream t(*config.trace, std::ios::binary | std::ios::trunc);
    if (!t) throw DataError("cannot open '" + *config.trace + "' for writing");
    write_trace_csv(t, trace);
    if (!t.flush()) throw DataError("failed writing '" + *config.trace + "'");
    write_manifest(*config.trace + ".manifest.json", provenance("eval", config, inputs));
  }
  std::fprintf(stderr, "eval: mode %s, %zu tokens, perplexity %.6f, top-1 %.4f\n",
               eval_mode_name(report.mode), report.tokens, report.perplexity(), report.accuracy(0));
}

void cmd_analyze(const RunConfig& config) {
  Inputs inputs;
  if (config.category_map) inputs.add("category_map", *config.category_map);
  const Corpus units =
      load_corpus(config, units_path(config.eval_corpus, config, "eval_corpus"), inputs, "eval_corpus");
  const auto& prefix = require(config.analysis_prefix, "analysis_prefix");
  const Datastore store = load_store(config, inputs);
  const auto encoder = make_encoder(config, inputs);
  const LocalityScheme scheme = LocalityScheme::resolve(config.scheme);
  std::optional<LocalityParams> params;
  if (config.params) {
    inputs.add("params", *config.params);
    params = load_params(*config.params).params;
  }
  const StratifiedStats stats =
      collect_stats(units, store, *encoder, scheme, params ? &*params : nullptr, config.analysis);
  emit_csv(stats, prefix, config.analysis.min_count);
  json manifest = provenance("analyze", config, inputs);
  manifest["files"] = csv_file_names(stats);
  manifest["queries"] = stats.queries;
  manifest["bin_width"] = stats.bin_width;
  write_manifest(prefix + "manifest.json", manifest);
  for (const auto& name : csv_file_names(stats)) std::printf("%s%s\n", prefix.c_str(), name.c_str());
}

}  // namespace lknn::cli
