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

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "lknn/corpus.hpp"
#include "lknn/datastore.hpp"
#include "lknn/encoder.hpp"
#include "lknn/locality.hpp"
#include "lknn/model.hpp"

namespace lknn {

struct AnalysisConfig {
  std::size_t k = 1024;
  std::size_t max_rank = 200;
  /// Distance bin width; 0 picks max observed distance / 50.
  double bin_width = 0.0;
  /// Cells with fewer entries are flagged "unstable" in the CSVs.
  std::size_t min_count = 10;
  unsigned threads = 1;

  void validate() const;
};

/// Sums for one (level, rank) cell.
struct RankCell {
  std::uint64_t count = 0;
  std::uint64_t hits = 0;
  double sum_neg_d = 0.0;
  double sumsq_neg_d = 0.0;
  double sum_neg_g = 0.0;
  double sumsq_neg_g = 0.0;

  double accuracy() const noexcept;
  double mean_neg_d() const noexcept;
  double mean_neg_g() const noexcept;
  /// Standard error of the mean; NaN below two entries.
  double se_neg_d() const noexcept;
  double se_neg_g() const noexcept;

  RankCell& operator+=(const RankCell& other) noexcept;
};

struct BinCell {
  std::uint64_t count = 0;
  std::uint64_t hits = 0;

  double accuracy() const noexcept;
  BinCell& operator+=(const BinCell& other) noexcept;
};

/// Retrieval statistics stratified by locality level. Bin keys are integers
/// i with upper edge i * bin_width; a value x falls in bin ceil(x / width).
struct StratifiedStats {
  std::uint32_t levels = 0;
  std::size_t max_rank = 0;
  double bin_width = 0.0;
  bool has_params = false;
  /// Queries scored, and queries with at least r neighbors at index r - 1.
  std::uint64_t queries = 0;
  std::vector<std::uint64_t> queries_with_rank;
  /// rank_cells[level * max_rank + (rank - 1)].
  std::vector<RankCell> rank_cells;
  std::map<std::pair<std::uint32_t, std::int64_t>, BinCell> dist_bins;
  std::map<std::pair<std::uint32_t, std::int64_t>, BinCell> moddist_bins;

  StratifiedStats() = default;
  StratifiedStats(std::uint32_t levels, std::size_t max_rank, double bin_width, bool has_params);

  RankCell& cell(std::uint32_t level, std::size_t rank);
  const RankCell& cell(std::uint32_t level, std::size_t rank) const;
  double bin_upper(std::int64_t bin) const noexcept { return static_cast<double>(bin) * bin_width; }
  std::int64_t bin_of(double value) const noexcept;

  /// Adds one query's neighbors (ascending distance, levels annotated).
  void add_query(const NeighborSet& ns, TokenId gold, const LocalityParams* params);
  /// Cell-wise sum; requires identical shape.
  StratifiedStats& operator+=(const StratifiedStats& other);
};

/// Queries every position >= 1 of every unit with the unit's own source
/// excluded and accumulates stats over ranks 1..max_rank. Per-unit results
/// are merged in unit order, so output does not depend on `threads`.
StratifiedStats collect_stats(const Corpus& units, const Datastore& store,
                              const ContextEncoder& encoder, const LocalityScheme& scheme,
                              const LocalityParams* params, const AnalysisConfig& config);

/// Files written by emit_csv, relative to its prefix.
std::vector<std::string> csv_file_names(const StratifiedStats& stats);

/// Writes rank_accuracy.csv, dist_accuracy.csv, rank_distance.csv and, with
/// params, moddist_accuracy.csv as `prefix + name`. Populated cells only,
/// sorted by (level, rank/bin); floats use 9 significant digits.
void emit_csv(const StratifiedStats& stats, const std::string& prefix, std::size_t min_count);

void write_rank_accuracy(std::ostream& out, const StratifiedStats& stats, std::size_t min_count);
void write_dist_accuracy(std::ostream& out, const StratifiedStats& stats,
                         const std::map<std::pair<std::uint32_t, std::int64_t>, BinCell>& bins,
                         std::size_t min_count);
void write_rank_distance(std::ostream& out, const StratifiedStats& stats, std::size_t min_count);

/// A parsed CSV: header names and rows of string fields.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(const std::string& name) const;
};

CsvTable read_csv(std::istream& in);
CsvTable read_csv(const std::string& path);

}  // namespace lknn
