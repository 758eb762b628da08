#include <gtest/gtest.h>

#include <fstream>

#include "json.hpp"

#include "hybridnet/text.hpp"
#include "support.hpp"

using namespace hybridnet;

TEST(WordCount, SharedVectors) {
  std::ifstream in(testing_support::data_path("word_count_vectors.json"));
  ASSERT_TRUE(in);
  auto doc = nlohmann::json::parse(in);
  ASSERT_FALSE(doc.at("vectors").empty());
  for (const auto& v : doc["vectors"]) {
    EXPECT_EQ(text::word_count(v.at("text").get<std::string>()), v.at("words").get<std::size_t>())
        << "text: " << v["text"];
  }
}

TEST(Text, Trim) {
  EXPECT_EQ(text::trim("  a b \n"), "a b");
  EXPECT_EQ(text::trim("   "), "");
  EXPECT_EQ(text::trim(""), "");
}

TEST(Text, TokenizeLowersAndMarksClauseBreaks) {
  auto toks = text::tokenize("Red meat, BUT not always; fine.");
  std::vector<std::string> words;
  int breaks = 0;
  for (const auto& t : toks) {
    if (t.clause_break) {
      ++breaks;
    } else {
      words.push_back(t.word);
    }
  }
  EXPECT_EQ(words, (std::vector<std::string>{"red", "meat", "not", "always", "fine"}));
  EXPECT_EQ(breaks, 4);
}

TEST(Text, TokenizeKeepsApostrophesAndHyphens) {
  auto toks = text::tokenize("doesn't well-known");
  ASSERT_EQ(toks.size(), 2u);
  EXPECT_EQ(toks[0].word, "doesn't");
  EXPECT_EQ(toks[1].word, "well-known");
}

TEST(Text, Fnv1aKnownValues) {
  EXPECT_EQ(text::fnv1a64(""), 0xcbf29ce484222325ULL);
  EXPECT_EQ(text::fnv1a64("a"), 0xaf63dc4c8601ec8cULL);
  EXPECT_EQ(text::hex64(0xabcULL), "0000000000000abc");
}
