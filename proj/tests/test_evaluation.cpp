#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "abam/evaluation.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

namespace abam {
namespace {

FlagSeq flags_of(std::size_t n, std::initializer_list<std::pair<std::size_t, std::size_t>> spans) {
  FlagSeq f(n, Aspect::O);
  for (auto [s, e] : spans)
    for (auto i = s; i < e; ++i) f[i] = Aspect::ASP;
  return f;
}

TEST(SpanF1, IdenticalIsPerfect) {
  std::vector<FlagSeq> g{flags_of(6, {{1, 3}})};
  EXPECT_DOUBLE_EQ(span_f1(g, g).macro_f1, 1.0);
}

TEST(SpanF1, OneHitOneMissOneSpurious) {
  std::vector<FlagSeq> g{flags_of(9, {{0, 3}, {5, 7}})}, p{flags_of(9, {{0, 3}, {6, 8}})};
  auto r = span_f1(g, p);
  const auto& asp = r.per_type.at("ASP");
  EXPECT_DOUBLE_EQ(asp.precision, 0.5);
  EXPECT_DOUBLE_EQ(asp.recall, 0.5);
  EXPECT_DOUBLE_EQ(asp.f1, 0.5);
  EXPECT_DOUBLE_EQ(r.macro_f1, 0.5);
}

TEST(SpanF1, ZeroDenominators) {
  std::vector<FlagSeq> g{flags_of(4, {{1, 2}})}, none{FlagSeq(4, Aspect::O)};
  auto r = span_f1(g, none);
  EXPECT_EQ(r.per_type.at("ASP").precision, 0.0);
  EXPECT_EQ(r.per_type.at("ASP").recall, 0.0);
  EXPECT_EQ(r.macro_f1, 0.0);
  EXPECT_EQ(span_f1(none, none).macro_f1, 1.0);
}

TEST(SpanF1, ShapeMismatch) {
  std::vector<FlagSeq> a{FlagSeq(3)}, b{FlagSeq(4)}, c;
  EXPECT_THROW(span_f1(a, b), EvalError);
  EXPECT_THROW(span_f1(a, c), EvalError);
}

TEST(Iob2, LenientChunking) {
  // I after O opens a chunk; a type change closes one.
  auto c = iob2_chunks({"I-ASP", "I-ASP", "O", "B-PRO", "I-CON", "B-CON"});
  std::vector<TypedSpan> want{{"ASP", 0, 2}, {"PRO", 3, 4}, {"CON", 4, 5}, {"CON", 5, 6}};
  EXPECT_EQ(c, want);
}

TEST(SpanF1, NestedMatchesBruteForceCounter) {
  std::mt19937_64 rng(500);
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<LabelSeq> g, p;
    const auto m = testing::uniform(rng, 1, 4);
    for (std::size_t k = 0; k < m; ++k) {
      const auto n = testing::uniform(rng, 1, 14);
      g.push_back(testing::random_labels(rng, n));
      p.push_back(testing::uniform(rng, 0, 3) == 0 ? g.back() : testing::random_labels(rng, n));
    }
    ASSERT_NEAR(span_f1(g, p).macro_f1, oracle::macro_f1(g, p), 1e-12);
  }
}

TEST(SpanF1, FlagsMatchBruteForceCounter) {
  std::mt19937_64 rng(501);
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<FlagSeq> g, p;
    std::vector<LabelSeq> gl, pl;
    for (int k = 0; k < 3; ++k) {
      const auto n = testing::uniform(rng, 1, 12);
      FlagSeq a(n), b(n);
      for (std::size_t i = 0; i < n; ++i) {
        a[i] = testing::uniform(rng, 0, 2) == 0 ? Aspect::ASP : Aspect::O;
        b[i] = testing::uniform(rng, 0, 2) == 0 ? Aspect::ASP : Aspect::O;
      }
      g.push_back(a);
      p.push_back(b);
      // Same flags on a uniform PRO layer so only ASP differs in the oracle.
      LabelSeq la, lb;
      for (std::size_t i = 0; i < n; ++i) {
        la.push_back(NestedLabel::make(Stance::PRO, a[i]));
        lb.push_back(NestedLabel::make(Stance::PRO, b[i]));
      }
      gl.push_back(la);
      pl.push_back(lb);
    }
    const auto r = span_f1(g, p);
    const auto nested = span_f1(gl, pl);
    ASSERT_NEAR(r.aspect_f1.value(), nested.per_type.count("ASP") ? nested.per_type.at("ASP").f1 : 1.0, 1e-12);
    ASSERT_NEAR(r.macro_f1, oracle::macro_f1(g, p), 1e-12);
  }
}

TEST(SpanF1, SwappingGoldAndPredSwapsPrecisionAndRecall) {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<LabelSeq> g{testing::random_labels(rng, 12)}, p{testing::random_labels(rng, 12)};
    auto a = span_f1(g, p), b = span_f1(p, g);
    ASSERT_NEAR(a.macro_f1, b.macro_f1, 1e-12);
    for (const auto& [t, prf] : a.per_type) {
      ASSERT_DOUBLE_EQ(prf.precision, b.per_type.at(t).recall);
      ASSERT_DOUBLE_EQ(prf.recall, b.per_type.at(t).precision);
    }
    ASSERT_EQ(a.macro_f1 == 1.0, oracle::typed_runs(g[0]) == oracle::typed_runs(p[0]));
  }
}

TEST(SpanF1, NestedReportCarriesLayers) {
  auto P = [](Aspect a = Aspect::O) { return NestedLabel::make(Stance::PRO, a); };
  auto N = NestedLabel::make(Stance::NON, Aspect::O);
  std::vector<LabelSeq> g{{P(), P(Aspect::ASP), P(), N}}, p{{P(), P(), P(), N}};
  auto r = span_f1(g, p);
  EXPECT_DOUBLE_EQ(r.per_type.at("PRO").f1, 1.0);
  EXPECT_DOUBLE_EQ(r.per_type.at("ASP").f1, 0.0);
  EXPECT_DOUBLE_EQ(r.macro_f1, 0.5);
  EXPECT_DOUBLE_EQ(r.stance_macro_f1.value(), 1.0);
  EXPECT_DOUBLE_EQ(r.aspect_f1.value(), 0.0);
}

TEST(TokenMetrics, Basics) {
  std::vector<FlagSeq> g{flags_of(4, {{1, 3}})};
  auto same = token_metrics(g, g);
  EXPECT_DOUBLE_EQ(same.accuracy, 1.0);
  std::vector<FlagSeq> neg{FlagSeq(4, Aspect::O)};
  auto m = token_metrics(g, neg);
  EXPECT_DOUBLE_EQ(m.recall, 0.0);
  EXPECT_DOUBLE_EQ(m.precision, 0.0);
  EXPECT_DOUBLE_EQ(m.accuracy, 0.5);
}

TEST(TokenMetrics, NestedPositiveIsAnythingButNonO) {
  auto P = NestedLabel::make(Stance::PRO, Aspect::O), C = NestedLabel::make(Stance::CON, Aspect::O),
       N = NestedLabel::make(Stance::NON, Aspect::O);
  std::vector<LabelSeq> g{{P, P, N}}, p{{C, P, P}};
  auto m = token_metrics(g, p);
  EXPECT_DOUBLE_EQ(m.accuracy, 1.0 / 3);
  EXPECT_DOUBLE_EQ(m.precision, 1.0 / 3);
  EXPECT_DOUBLE_EQ(m.recall, 0.5);
}

TEST(TokenMetrics, AddingPerfectSentenceNeverLowersAccuracy) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<LabelSeq> g{testing::random_labels(rng, 10)}, p{testing::random_labels(rng, 10)};
    const double before = token_metrics(g, p).accuracy;
    auto extra = testing::random_labels(rng, 7);
    g.push_back(extra);
    p.push_back(extra);
    ASSERT_GE(token_metrics(g, p).accuracy, before);
  }
}

std::vector<bool> select(std::size_t n, std::initializer_list<std::size_t> idx) {
  std::vector<bool> v(n, false);
  for (auto i : idx) v[i] = true;
  return v;
}

TEST(CohenKappa, Examples) {
  EXPECT_NEAR(cohen_kappa(select(10, {1, 2}), select(10, {2, 3})), 0.375, 1e-12);
  EXPECT_DOUBLE_EQ(cohen_kappa(select(2, {0}), select(2, {1})), -1.0);
  auto x = select(6, {0, 4});
  EXPECT_DOUBLE_EQ(cohen_kappa(x, x), 1.0);
  EXPECT_DOUBLE_EQ(cohen_kappa(std::vector<bool>(4, false), std::vector<bool>(4, false)), 1.0);
  EXPECT_THROW(cohen_kappa({}, {}), EvalError);
  EXPECT_THROW(cohen_kappa({true}, {true, false}), EvalError);
}

TEST(CohenKappa, MatchesContingencyFormula) {
  std::mt19937_64 rng(100);
  for (int trial = 0; trial < 100; ++trial) {
    const auto n = testing::uniform(rng, 1, 60);
    std::vector<bool> a(n), b(n), na(n), nb(n);
    for (std::size_t i = 0; i < n; ++i) {
      a[i] = testing::uniform(rng, 0, 1);
      b[i] = testing::uniform(rng, 0, 3) == 0 ? !a[i] : a[i];
      na[i] = !a[i];
      nb[i] = !b[i];
    }
    const double k = cohen_kappa(a, b);
    ASSERT_NEAR(k, oracle::kappa(a, b), 1e-12);
    ASSERT_NEAR(cohen_kappa(na, nb), k, 1e-12);
    ASSERT_GE(k, -1.0 - 1e-12);
    ASSERT_LE(k, 1.0 + 1e-12);
  }
}

}  // namespace
}  // namespace abam
