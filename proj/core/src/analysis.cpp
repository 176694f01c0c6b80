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

#include "lknn/analysis.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <limits>
#include <mutex>
#include <sstream>
#include <thread>

namespace lknn {

namespace {

constexpr double kAutoBins = 50.0;

std::string fmt(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", x);
  return buf;
}

double mean(double sum, std::uint64_t n) {
  return n == 0 ? std::numeric_limits<double>::quiet_NaN() : sum / static_cast<double>(n);
}

double standard_error(double sum, double sumsq, std::uint64_t n) {
  if (n < 2) return std::numeric_limits<double>::quiet_NaN();
  const double nn = static_cast<double>(n);
  const double m = sum / nn;
  const double var = std::max(0.0, (sumsq - nn * m * m) / (nn - 1.0));
  return std::sqrt(var / nn);
}

// Neighbor summary kept when the bin width is only known after retrieval.
struct Record {
  double neg_g;
  float neg_d;
  std::uint16_t level;
  std::uint8_t hit;
};

struct UnitStats {
  StratifiedStats stats;
  std::vector<Record> records;
};

void add_bin(std::map<std::pair<std::uint32_t, std::int64_t>, BinCell>& bins, std::uint32_t level,
             std::int64_t bin, bool hit) {
  BinCell& c = bins[{level, bin}];
  ++c.count;
  c.hits += hit;
}

}  // namespace

void AnalysisConfig::validate() const {
  if (k == 0) throw ConfigError("analysis: k must be at least 1");
  if (max_rank == 0 || max_rank > k) throw ConfigError("analysis: max_rank must lie in [1, k]");
  if (!(bin_width >= 0.0) || !std::isfinite(bin_width)) {
    throw ConfigError("analysis: bin_width must be a finite non-negative number");
  }
}

double RankCell::accuracy() const noexcept { return mean(static_cast<double>(hits), count); }
double RankCell::mean_neg_d() const noexcept { return mean(sum_neg_d, count); }
double RankCell::mean_neg_g() const noexcept { return mean(sum_neg_g, count); }
double RankCell::se_neg_d() const noexcept { return standard_error(sum_neg_d, sumsq_neg_d, count); }
double RankCell::se_neg_g() const noexcept { return standard_error(sum_neg_g, sumsq_neg_g, count); }

RankCell& RankCell::operator+=(const RankCell& other) noexcept {
  count += other.count;
  hits += other.hits;
  sum_neg_d += other.sum_neg_d;
  sumsq_neg_d += other.sumsq_neg_d;
  sum_neg_g += other.sum_neg_g;
  sumsq_neg_g += other.sumsq_neg_g;
  return *this;
}

double BinCell::accuracy() const noexcept { return mean(static_cast<double>(hits), count); }

BinCell& BinCell::operator+=(const BinCell& other) noexcept {
  count += other.count;
  hits += other.hits;
  return *this;
}

StratifiedStats::StratifiedStats(std::uint32_t levels_, std::size_t max_rank_, double bin_width_,
                                 bool has_params_)
    : levels(levels_),
      max_rank(max_rank_),
      bin_width(bin_width_),
      has_params(has_params_),
      queries_with_rank(max_rank_, 0),
      rank_cells(static_cast<std::size_t>(levels_) * max_rank_) {}

RankCell& StratifiedStats::cell(std::uint32_t level, std::size_t rank) {
  return rank_cells.at(level * max_rank + (rank - 1));
}

const RankCell& StratifiedStats::cell(std::uint32_t level, std::size_t rank) const {
  return rank_cells.at(level * max_rank + (rank - 1));
}

std::int64_t StratifiedStats::bin_of(double value) const noexcept {
  return static_cast<std::int64_t>(std::ceil(value / bin_width));
}

void StratifiedStats::add_query(const NeighborSet& ns, TokenId gold, const LocalityParams* params) {
  ++queries;
  const std::size_t ranks = std::min(ns.size(), max_rank);
  for (std::size_t r = 1; r <= ranks; ++r) {
    const Neighbor& n = ns.neighbors[r - 1];
    if (n.level >= levels) throw DataError("neighbor level outside the scheme's levels");
    const bool hit = n.target == gold;
    const double neg_d = -n.distance;
    const double neg_g = params != nullptr ? -modified_distance(n.distance, n.level, *params) : neg_d;
    RankCell& c = cell(n.level, r);
    ++c.count;
    c.hits += hit;
    c.sum_neg_d += neg_d;
    c.sumsq_neg_d += neg_d * neg_d;
    c.sum_neg_g += neg_g;
    c.sumsq_neg_g += neg_g * neg_g;
    ++queries_with_rank[r - 1];
    if (bin_width > 0.0) {
      add_bin(dist_bins, n.level, bin_of(neg_d), hit);
      if (has_params) add_bin(moddist_bins, n.level, bin_of(neg_g), hit);
    }
  }
}

StratifiedStats& StratifiedStats::operator+=(const StratifiedStats& other) {
  if (other.levels != levels || other.max_rank != max_rank || other.bin_width != bin_width ||
      other.has_params != has_params) {
    throw DataError("cannot merge stats of different shape");
  }
  queries += other.queries;
  for (std::size_t i = 0; i < queries_with_rank.size(); ++i) {
    queries_with_rank[i] += other.queries_with_rank[i];
  }
  for (std::size_t i = 0; i < rank_cells.size(); ++i) rank_cells[i] += other.rank_cells[i];
  for (const auto& [key, c] : other.dist_bins) dist_bins[key] += c;
  for (const auto& [key, c] : other.moddist_bins) moddist_bins[key] += c;
  return *this;
}

StratifiedStats collect_stats(const Corpus& units, const Datastore& store,
                              const ContextEncoder& encoder, const LocalityScheme& scheme,
                              const LocalityParams* params, const AnalysisConfig& config) {
  config.validate();
  if (encoder.dim() != store.dim()) {
    throw DataError("encoder dimension does not match store dimension");
  }
  if (params != nullptr && params->max_level() != scheme.max_level()) {
    throw ConfigError("params do not match the scheme's level count");
  }
  const bool auto_width = config.bin_width == 0.0;
  const StratifiedStats empty(scheme.level_count(), config.max_rank, config.bin_width,
                              params != nullptr);

  auto run_unit = [&](const Document& doc) {
    UnitStats out{empty, {}};
    const std::size_t n = doc.tokens.size();
    std::vector<float> query(encoder.dim());
    for (std::size_t pos = 1; pos < n; ++pos) {
      encoder.encode_at(doc.source_id, doc.tokens, pos, query);
      NeighborSet ns = knn_query(store, query, config.k, doc.source_id);
      annotate_neighbors(ns, doc.attributes, scheme, store);
      const TokenId gold = doc.tokens[pos];
      out.stats.add_query(ns, gold, params);
      if (auto_width) {
        const std::size_t ranks = std::min(ns.size(), config.max_rank);
        for (std::size_t r = 0; r < ranks; ++r) {
          const Neighbor& nb = ns.neighbors[r];
          const double neg_g =
              params != nullptr ? -modified_distance(nb.distance, nb.level, *params) : -nb.distance;
          out.records.push_back({neg_g, static_cast<float>(-nb.distance),
                                 static_cast<std::uint16_t>(nb.level),
                                 static_cast<std::uint8_t>(nb.target == gold)});
        }
      }
    }
    return out;
  };

  std::vector<UnitStats> results(units.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto work = [&] {
    for (std::size_t i = next++; i < units.size(); i = next++) {
      try {
        results[i] = run_unit(units[i]);
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

  StratifiedStats total = empty;
  for (const auto& r : results) total += r.stats;
  if (auto_width) {
    double max_d = 0.0;
    for (const auto& r : results) {
      for (const auto& rec : r.records) max_d = std::max(max_d, -static_cast<double>(rec.neg_d));
    }
    total.bin_width = max_d > 0.0 ? max_d / kAutoBins : 1.0;
    for (const auto& r : results) {
      for (const auto& rec : r.records) {
        add_bin(total.dist_bins, rec.level, total.bin_of(rec.neg_d), rec.hit != 0);
        if (total.has_params) add_bin(total.moddist_bins, rec.level, total.bin_of(rec.neg_g), rec.hit != 0);
      }
    }
  }
  return total;
}

std::vector<std::string> csv_file_names(const StratifiedStats& stats) {
  std::vector<std::string> names = {"rank_accuracy.csv", "dist_accuracy.csv", "rank_distance.csv"};
  if (stats.has_params) names.emplace_back("moddist_accuracy.csv");
  return names;
}

void write_rank_accuracy(std::ostream& out, const StratifiedStats& stats, std::size_t min_count) {
  out << "level,rank,count,hits,accuracy,unstable\n";
  for (std::uint32_t level = 0; level < stats.levels; ++level) {
    for (std::size_t rank = 1; rank <= stats.max_rank; ++rank) {
      const RankCell& c = stats.cell(level, rank);
      if (c.count == 0) continue;
      out << level << ',' << rank << ',' << c.count << ',' << c.hits << ',' << fmt(c.accuracy())
          << ',' << (c.count < min_count ? 1 : 0) << '\n';
    }
  }
}

void write_dist_accuracy(std::ostream& out, const StratifiedStats& stats,
                         const std::map<std::pair<std::uint32_t, std::int64_t>, BinCell>& bins,
                         std::size_t min_count) {
  out << "level,bin_upper,count,hits,accuracy,unstable\n";
  for (const auto& [key, c] : bins) {
    if (c.count == 0) continue;
    out << key.first << ',' << fmt(stats.bin_upper(key.second)) << ',' << c.count << ',' << c.hits
        << ',' << fmt(c.accuracy()) << ',' << (c.count < min_count ? 1 : 0) << '\n';
  }
}

void write_rank_distance(std::ostream& out, const StratifiedStats& stats, std::size_t min_count) {
  out << "level,rank,count,mean_neg_d,se_neg_d,mean_neg_g,se_neg_g,unstable\n";
  for (std::uint32_t level = 0; level < stats.levels; ++level) {
    for (std::size_t rank = 1; rank <= stats.max_rank; ++rank) {
      const RankCell& c = stats.cell(level, rank);
      if (c.count == 0) continue;
      out << level << ',' << rank << ',' << c.count << ',' << fmt(c.mean_neg_d()) << ','
          << fmt(c.se_neg_d()) << ',' << fmt(c.mean_neg_g()) << ',' << fmt(c.se_neg_g()) << ','
          << (c.count < min_count ? 1 : 0) << '\n';
    }
  }
}

void emit_csv(const StratifiedStats& stats, const std::string& prefix, std::size_t min_count) {
  auto write = [&](const std::string& name, auto&& body) {
    const std::string path = prefix + name;
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot open '" + path + "' for writing");
    body(out);
    out.flush();
    if (!out) throw DataError("failed writing '" + path + "'");
  };
  write("rank_accuracy.csv", [&](std::ostream& o) { write_rank_accuracy(o, stats, min_count); });
  write("dist_accuracy.csv",
        [&](std::ostream& o) { write_dist_accuracy(o, stats, stats.dist_bins, min_count); });
  write("rank_distance.csv", [&](std::ostream& o) { write_rank_distance(o, stats, min_count); });
  if (stats.has_params) {
    write("moddist_accuracy.csv",
          [&](std::ostream& o) { write_dist_accuracy(o, stats, stats.moddist_bins, min_count); });
  }
}

std::size_t CsvTable::column(const std::string& name) const {
  auto it = std::find(header.begin(), header.end(), name);
  if (it == header.end()) throw DataError("CSV has no column '" + name + "'");
  return static_cast<std::size_t>(it - header.begin());
}

CsvTable read_csv(std::istream& in) {
  auto split = [](const std::string& line) {
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (!line.empty() && line.back() == ',') fields.emplace_back();
    return fields;
  };
  CsvTable table;
  std::string line;
  if (!std::getline(in, line)) return table;
  table.header = split(line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto fields = split(line);
    if (fields.size() != table.header.size()) {
      throw DataError("CSV row has " + std::to_string(fields.size()) + " fields, expected " +
                      std::to_string(table.header.size()));
    }
    table.rows.push_back(std::move(fields));
  }
  return table;
}

CsvTable read_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path + "'");
  return read_csv(in);
}

}  // namespace lknn
