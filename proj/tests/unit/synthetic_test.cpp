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

#include "synthetic.hpp"

#include <gtest/gtest.h>

#include <map>

#include "lknn/datastore.hpp"
#include "lknn/locality.hpp"

namespace lknn::testing {
namespace {

TEST(Synthetic, SplitsAndVocabulary) {
  SyntheticConfig c;
  c.keys = 10;
  const auto d = make_synthetic(c);
  const std::size_t files = c.projects * c.subdirs * c.files;
  EXPECT_EQ(d.corpus.size(), files * c.keys);
  EXPECT_EQ(d.lm_train.size(), c.projects * c.subdirs * 3 * c.keys);
  EXPECT_EQ(d.tune.size(), c.projects * c.subdirs * 2 * c.keys);
  EXPECT_EQ(d.test.size(), d.corpus.size() - d.lm_train.size() - d.tune.size());
  EXPECT_EQ(d.vocab_size, c.targets + c.keys);
  EXPECT_EQ(infer_vocab_size(d.corpus) <= d.vocab_size, true);
}

TEST(Synthetic, Deterministic) {
  SyntheticConfig c;
  c.keys = 5;
  const auto a = make_synthetic(c);
  const auto b = make_synthetic(c);
  ASSERT_EQ(a.corpus.size(), b.corpus.size());
  for (std::size_t i = 0; i < a.corpus.size(); ++i) {
    EXPECT_EQ(document_to_json(a.corpus[i]), document_to_json(b.corpus[i]));
  }
  c.seed = 8;
  EXPECT_NE(document_to_json(make_synthetic(c).corpus[0]) + document_to_json(make_synthetic(c).corpus[1]),
            document_to_json(a.corpus[0]) + document_to_json(a.corpus[1]));
}

TEST(Synthetic, AgreementRatesFollowTheHierarchy) {
  SyntheticConfig c;
  c.keys = 300;
  const auto d = make_synthetic(c);
  // target of (source, key)
  std::map<SourceId, std::map<TokenId, TokenId>> table;
  std::map<SourceId, AttributeSet> attrs;
  for (const auto& doc : d.corpus) {
    table[doc.source_id][doc.tokens[0]] = doc.tokens[1];
    attrs[doc.source_id] = doc.attributes;
  }
  const auto scheme = LocalityScheme::java();
  std::array<double, 3> agree{}, total{};
  for (auto a = table.begin(); a != table.end(); ++a) {
    for (auto b = std::next(a); b != table.end(); ++b) {
      const auto level = scheme.assign_level(attrs[a->first], attrs[b->first]);
      for (const auto& [key, target] : a->second) {
        agree[level] += b->second.at(key) == target;
        total[level] += 1;
      }
    }
  }
  const double coincidence = 1.0 / (c.targets - 1);
  EXPECT_NEAR(agree[2] / total[2], c.p_subdir, 0.05);
  EXPECT_NEAR(agree[1] / total[1], c.p_project, 0.1);
  EXPECT_NEAR(agree[0] / total[0], c.p_other, 0.05 + coincidence);
  EXPECT_GT(agree[2] / total[2], agree[1] / total[1]);
  EXPECT_GT(agree[1] / total[1], agree[0] / total[0]);
}

TEST(Synthetic, ContextDistancesAreZeroOrTwo) {
  SyntheticConfig c;
  c.keys = 12;
  c.shares = 2;
  c.files = 6;
  const auto d = make_synthetic(c);
  const HashedNgramEncoder enc(synthetic_encoder_config(d));
  const auto store = build_datastore(d.corpus, enc, d.vocab_size);
  for (std::size_t i = 0; i < 20; ++i) {
    const auto& doc = d.corpus[i];
    const auto q = enc.encode_at(doc.source_id, doc.tokens, 1);
    for (std::uint64_t e = 0; e < store.size(); ++e) {
      const float dist = squared_l2(q, store.key(e));
      const bool same = d.corpus[e].tokens[0] == doc.tokens[0];
      EXPECT_EQ(dist, same ? 0.0f : 2.0f);
    }
  }
}

TEST(Synthetic, RejectsBadConfig) {
  SyntheticConfig c;
  c.files = 5;
  EXPECT_THROW(make_synthetic(c), ConfigError);
  c = {};
  c.p_other = 0.6;
  EXPECT_THROW(make_synthetic(c), ConfigError);
}

}  // namespace
}  // namespace lknn::testing
