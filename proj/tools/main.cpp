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

#include <CLI11.hpp>
#include <cstdio>
#include <exception>
#include <string>
#include <vector>

#include "commands.hpp"
#include "run_config.hpp"

namespace {

constexpr int kConfigExit = 2;
constexpr int kDataExit = 3;

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Locality-aware kNN language model toolkit"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> overrides;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("-c,--config", config_path, "JSON run config");
    sub->add_option("-s,--set", overrides, "override a config key: key=value (dotted keys)")
        ->take_all();
  };
  using Command = void (*)(const lknn::cli::RunConfig&);
  struct Entry {
    const char* name;
    const char* help;
    Command run;
  };
  const Entry entries[] = {
      {"build", "build a datastore from a corpus", lknn::cli::cmd_build},
      {"tune", "tune locality parameters", lknn::cli::cmd_tune},
      {"eval", "evaluate perplexity and top-k accuracy", lknn::cli::cmd_eval},
      {"analyze", "write locality-stratified retrieval statistics", lknn::cli::cmd_analyze},
  };
  Command selected = nullptr;
  for (const auto& e : entries) {
    auto* sub = app.add_subcommand(e.name, e.help);
    add_common(sub);
    sub->callback([&selected, run = e.run] { selected = run; });
  }
  auto* show = app.add_subcommand("config", "print the resolved run config");
  add_common(show);
  bool show_config = false;
  show->callback([&show_config] { show_config = true; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kConfigExit;
  }

  try {
    const auto config = lknn::cli::resolve_config(
        config_path.empty() ? std::nullopt : std::optional<std::string>(config_path), overrides);
    if (show_config) {
      std::puts(config.raw.dump(2).c_str());
      return 0;
    }
    selected(config);
  } catch (const lknn::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kConfigExit;
  } catch (const lknn::DataError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return kDataExit;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
