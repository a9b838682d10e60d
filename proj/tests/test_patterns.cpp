#include <gtest/gtest.h>

#include <random>
#include <set>
#include <sstream>

#include "abam/patterns.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

namespace abam {
namespace {

std::vector<Token> tagged(const std::vector<std::pair<std::string, std::string>>& words) {
  std::vector<Token> out;
  for (const auto& [w, t] : words) out.push_back({w, t, ""});
  return out;
}

TEST(DefaultPatterns, MatchTheTableExactly) {
  const auto& set = default_patterns();
  EXPECT_EQ(set.size(), 44u);
  std::set<std::string> got, want(oracle::kTableRows.begin(), oracle::kTableRows.end());
  for (const auto& p : set.patterns()) got.insert(join(p));
  EXPECT_EQ(want.size(), 44u);
  EXPECT_EQ(got, want);
  EXPECT_TRUE(set.contains_key("JJ NN"));
  EXPECT_TRUE(set.contains_key("NN HYPH NN NNS"));
  EXPECT_LE(set.max_length(), 5u);
}

TEST(PatternSet, RejectsBadPatterns) {
  PatternSet set;
  EXPECT_THROW(set.add({}), PatternError);
  EXPECT_THROW(set.add({"NN", "NN", "NN", "NN", "NN", "NN"}), PatternError);
  set.add({"NN"});
  EXPECT_THROW(set.add({"NN"}), PatternError);
}

TEST(PatternSet, LoadsFromText) {
  std::istringstream in("# custom\nNN\n\nJJ NN\r\n");
  auto set = parse_patterns(in);
  EXPECT_EQ(set.size(), 2u);
  EXPECT_TRUE(set.contains_key("JJ NN"));
}

TEST(MatchAll, AdjectiveNoun) {
  auto toks = tagged({{"unsafe", "JJ"}, {"abortion", "NN"}});
  auto got = match_all(toks, default_patterns());
  ASSERT_EQ(got.size(), 2u);
  EXPECT_EQ(got[0].span, (Span{0, 2, SpanKind::ASP}));
  EXPECT_EQ(got[0].pattern, (PosPattern{"JJ", "NN"}));
  EXPECT_EQ(got[0].surface, "unsafe abortion");
  EXPECT_EQ(got[1].span, (Span{1, 2, SpanKind::ASP}));
  EXPECT_EQ(got[1].pattern, (PosPattern{"NN"}));
}

TEST(MatchAll, VerbsNeverMatch) {
  auto toks = tagged({{"run", "VB"}, {"go", "VB"}, {"eat", "VB"}});
  EXPECT_TRUE(match_all(toks, default_patterns()).empty());
}

TEST(MatchAll, TagsAreCaseSensitiveAndSurfaceIndependent) {
  auto lower = tagged({{"cost", "nn"}});
  EXPECT_TRUE(match_all(lower, default_patterns()).empty());
  auto a = tagged({{"x", "JJ"}, {"y", "NN"}, {"z", "NNS"}});
  auto b = tagged({{"Q", "JJ"}, {"R", "NN"}, {"S", "NNS"}});
  auto ma = match_all(a, default_patterns()), mb = match_all(b, default_patterns());
  ASSERT_EQ(ma.size(), mb.size());
  for (std::size_t i = 0; i < ma.size(); ++i) EXPECT_EQ(ma[i].span, mb[i].span);
}

TEST(MatchAll, EqualsExhaustiveWindowOracle) {
  std::mt19937_64 rng(44);
  for (int trial = 0; trial < 1000; ++trial) {
    const auto toks = testing::random_tokens(rng, 15);
    const auto got = match_all(toks, default_patterns());
    std::vector<Span> spans;
    for (const auto& c : got) {
      spans.push_back(c.span);
      ASSERT_GE(c.span.size(), 1u);
      ASSERT_LE(c.span.size(), 5u);
      for (std::size_t k = 0; k < c.pattern.size(); ++k) ASSERT_EQ(c.pattern[k], toks[c.span.start + k].pos);
    }
    ASSERT_EQ(spans, oracle::window_matches(toks));
  }
}

TEST(BaselineLabels, TokenUnionOfMatches) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 300; ++trial) {
    const auto toks = testing::random_tokens(rng, testing::uniform(rng, 1, 20));
    const auto flags = baseline_labels(toks, default_patterns());
    const auto cands = oracle::window_matches(toks);
    for (std::size_t i = 0; i < toks.size(); ++i) {
      bool covered = false;
      for (const auto& s : cands) covered = covered || (s.start <= i && i < s.end);
      ASSERT_EQ(flags[i] == Aspect::ASP, covered);
    }
  }
}

TEST(GenerateCandidates, SegmentMenu) {
  auto seg = tagged({{"unsafe", "JJ"}, {"abortion", "NN"}, {"kills", "VBZ"}, {"women", "NNS"}});
  auto menu = generate_candidates(seg, default_patterns());
  EXPECT_EQ(menu.options(), (std::vector<std::string>{"unsafe abortion", "abortion", "women", "NONE"}));
}

TEST(GenerateCandidates, NoMatchesLeavesOnlyNone) {
  auto seg = tagged({{"we", "PRP"}, {"must", "MD"}, {"act", "VB"}});
  EXPECT_EQ(generate_candidates(seg, default_patterns()).options(), (std::vector<std::string>{"NONE"}));
}

TEST(GenerateCandidates, RepeatedSurfaceListedOnce) {
  auto seg = tagged({{"Taxes", "NNS"}, {"raise", "VBP"}, {"taxes", "NNS"}});
  auto menu = generate_candidates(seg, default_patterns());
  ASSERT_EQ(menu.items.size(), 1u);
  EXPECT_EQ(menu.items[0].text, "Taxes");
  EXPECT_EQ(menu.items[0].occurrences.size(), 2u);
  EXPECT_EQ(menu.options().back(), "NONE");
}

TEST(GenerateCandidates, ShortSegmentRejected) {
  auto seg = tagged({{"a", "NN"}, {"b", "NN"}});
  EXPECT_THROW(generate_candidates(seg, default_patterns()), PatternError);
}

}  // namespace
}  // namespace abam
