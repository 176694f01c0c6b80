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

#include <benchmark/benchmark.h>

#include <map>
#include <memory>
#include <random>

#include "lknn/datastore.hpp"
#include "lknn/encoder.hpp"
#include "lknn/model.hpp"

namespace {

using lknn::Datastore;

// Stores are expensive to build, so each (entries, dim) pair is built once.
const Datastore& random_store(std::size_t entries, std::uint32_t dim) {
  static std::map<std::pair<std::size_t, std::uint32_t>, std::unique_ptr<Datastore>> cache;
  auto& slot = cache[{entries, dim}];
  if (!slot) {
    cache.clear();
    auto& fresh = cache[{entries, dim}];
    std::mt19937_64 rng(entries * 31 + dim);
    std::normal_distribution<float> n(0.0f, 1.0f);
    lknn::DatastoreBuilder b(dim, 50000);
    std::vector<float> key(dim);
    for (std::size_t i = 0; i < entries; ++i) {
      for (auto& x : key) x = n(rng);
      b.add(key, static_cast<lknn::TokenId>(i % 50000), i / 1000);
    }
    fresh = std::make_unique<Datastore>(std::move(b).finish());
    return *fresh;
  }
  return *slot;
}

std::vector<float> random_queries(std::size_t count, std::uint32_t dim) {
  std::mt19937_64 rng(99);
  std::normal_distribution<float> n(0.0f, 1.0f);
  std::vector<float> q(count * dim);
  for (auto& x : q) x = n(rng);
  return q;
}

// args: entries, dim, k, threads. One iteration answers a batch of 16 queries.
void BM_KnnQueryBatch(benchmark::State& state) {
  const auto entries = static_cast<std::size_t>(state.range(0));
  const auto dim = static_cast<std::uint32_t>(state.range(1));
  const auto k = static_cast<std::size_t>(state.range(2));
  const auto threads = static_cast<unsigned>(state.range(3));
  const Datastore& store = random_store(entries, dim);
  constexpr std::size_t kBatch = 16;
  const auto queries = random_queries(kBatch, dim);
  for (auto _ : state) {
    auto r = lknn::knn_query_batch(store, queries, k, {}, threads);
    benchmark::DoNotOptimize(r.data());
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * kBatch));
  state.counters["queries_per_second"] =
      benchmark::Counter(static_cast<double>(state.iterations() * kBatch), benchmark::Counter::kIsRate);
}
BENCHMARK(BM_KnnQueryBatch)
    ->Args({100000, 512, 1024, 1})
    ->Args({1000000, 512, 1024, 1})
    ->Args({1000000, 512, 1024, 2})
    ->Args({1000000, 512, 1024, 4})
    ->Unit(benchmark::kMillisecond)
    ->UseRealTime();

void BM_KnnQuerySingle(benchmark::State& state) {
  const Datastore& store = random_store(static_cast<std::size_t>(state.range(0)), 512);
  const auto query = random_queries(1, 512);
  for (auto _ : state) {
    auto r = lknn::knn_query(store, query, 1024);
    benchmark::DoNotOptimize(r.neighbors.data());
  }
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_KnnQuerySingle)->Arg(100000)->Unit(benchmark::kMillisecond);

void BM_SquaredL2(benchmark::State& state) {
  const auto dim = static_cast<std::size_t>(state.range(0));
  const auto a = random_queries(1, static_cast<std::uint32_t>(dim));
  auto b = a;
  b[0] += 1.0f;
  for (auto _ : state) benchmark::DoNotOptimize(lknn::squared_l2(a, b));
  state.SetBytesProcessed(static_cast<std::int64_t>(state.iterations() * dim * 2 * sizeof(float)));
}
BENCHMARK(BM_SquaredL2)->Arg(64)->Arg(512)->Arg(1024);

void BM_HashedEncode(benchmark::State& state) {
  const lknn::HashedNgramEncoder enc({1024, 3, 0});
  std::vector<lknn::TokenId> doc(4096);
  std::mt19937_64 rng(1);
  for (auto& t : doc) t = static_cast<lknn::TokenId>(rng() % 50000);
  std::vector<float> out(1024);
  std::size_t pos = 1;
  for (auto _ : state) {
    enc.encode_at(0, doc, pos, out);
    pos = pos % 4095 + 1;
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_HashedEncode);

}  // namespace

BENCHMARK_MAIN();
