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

#include "lknn/attributes.hpp"

#include <gtest/gtest.h>

#include "lknn/types.hpp"

namespace lknn {
namespace {

TEST(AttributeSet, StoresStringsAndSets) {
  AttributeSet a;
  a.set("project", "Journal.IO");
  a.set("categories", StringSet{"Q5", "Q2"});
  ASSERT_NE(a.find_string("project"), nullptr);
  EXPECT_EQ(*a.find_string("project"), "Journal.IO");
  EXPECT_EQ(a.find_set("project"), nullptr);
  ASSERT_NE(a.find_set("categories"), nullptr);
  EXPECT_EQ(a.find_set("categories")->size(), 2U);
  EXPECT_FALSE(a.contains("section_title"));
  EXPECT_EQ(a.find("section_title"), nullptr);
}

TEST(AttributeSet, OverwriteAndErase) {
  AttributeSet a;
  a.set("x", "1");
  a.set("x", StringSet{"1"});
  EXPECT_NE(a.find_set("x"), nullptr);
  a.erase("x");
  EXPECT_TRUE(a.empty());
}

TEST(AttributeSet, JsonRoundTrip) {
  AttributeSet a;
  a.set("section_title", "Early life");
  a.set("categories", StringSet{"Q5", "Q215627"});
  a.set("empty", StringSet{});
  const auto text = a.to_json();
  EXPECT_EQ(AttributeSet::from_json(text), a);
}

TEST(AttributeSet, FromJsonRejectsNonStringValues) {
  EXPECT_THROW(AttributeSet::from_json(R"({"a": 3})"), DataError);
  EXPECT_THROW(AttributeSet::from_json(R"({"a": [1]})"), DataError);
  EXPECT_THROW(AttributeSet::from_json(R"([1])"), DataError);
}

}  // namespace
}  // namespace lknn
