#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "mdembed/bm25.hpp"
#include "mdembed/rng.hpp"
#include "mdembed/textmatch.hpp"
#include "mdembed/vocab.hpp"

namespace {

using mdembed::Bm25Index;
using mdembed::Bm25Params;
using mdembed::Error;
using mdembed::Rng;

// Direct per-document BM25 evaluation, sharing only the formula definition.
double oracle_bm25(const std::string& query, const std::string& doc,
                   const std::vector<std::string>& corpus, Bm25Params p) {
  auto qterms = Bm25Index::unique_terms(query);
  auto dterms = mdembed::bm25_tokenize(doc);
  std::size_t n = corpus.size();
  double total_len = 0;
  for (const auto& d : corpus) total_len += mdembed::bm25_tokenize(d).size();
  double avg = total_len / double(n);
  double score = 0.0;
  for (const auto& t : qterms) {
    std::size_t tf = std::count(dterms.begin(), dterms.end(), t);
    if (tf == 0) continue;
    std::size_t df = 0;
    for (const auto& d : corpus) {
      auto dt = mdembed::bm25_tokenize(d);
      if (std::find(dt.begin(), dt.end(), t) != dt.end()) ++df;
    }
    double idf = std::log(1.0 + (double(n) - double(df) + 0.5) /
                                    (double(df) + 0.5));
    double norm = p.k1 * (1.0 - p.b + p.b * double(dterms.size()) / avg);
    score += idf * (double(tf) * (p.k1 + 1.0)) / (double(tf) + norm);
  }
  return score;
}

TEST(Bm25, SingleDocumentAverageLength) {
  Bm25Index index({"river stone bridge"});
  EXPECT_EQ(index.doc_count(), 1u);
  EXPECT_DOUBLE_EQ(index.avg_len(), 3.0);
}

TEST(Bm25, EmptyCorpusRejected) {
  EXPECT_THROW(Bm25Index({}), Error);
  EXPECT_THROW(Bm25Index({"...", "!!"}), Error);
}

TEST(Bm25, UniqueTermDocWins) {
  std::vector<std::string> docs = {"river stone bridge", "garden stone wall",
                                   "castle tower moat"};
  Bm25Index index(docs);
  auto top = index.top_k("bridge", 3);
  EXPECT_EQ(top[0].first, 0u);
  EXPECT_GT(top[0].second, 0.0);
  EXPECT_EQ(top[1].second, 0.0);
}

TEST(Bm25, NoOverlapGivesAllZeros) {
  Bm25Index index({"river stone", "garden wall"});
  auto scores = index.score_all("zeppelin quartz");
  for (double s : scores) EXPECT_EQ(s, 0.0);
}

TEST(Bm25, ScoresNonnegative) {
  Rng rng(1);
  mdembed::Vocab v = mdembed::Vocab::synthetic(256);
  auto content = v.content_range();
  std::vector<std::string> docs;
  for (int d = 0; d < 60; ++d) {
    std::string text;
    for (int w = 0; w < 12; ++w) {
      if (w) text += ' ';
      text += v.word(content.begin +
                     std::int32_t(rng.uniform_int(content.size())));
    }
    docs.push_back(text);
  }
  Bm25Index index(docs);
  auto scores = index.score_all(docs[7]);
  for (double s : scores) EXPECT_GE(s, 0.0);
}

// Index-based ranking equals brute-force per-document scoring, exactly.
TEST(Bm25, OracleEquivalenceRandomCorpora) {
  Rng rng(42);
  mdembed::Vocab v = mdembed::Vocab::synthetic(256);
  auto content = v.content_range();
  for (int trial = 0; trial < 25; ++trial) {
    std::size_t n_docs = 3 + rng.uniform_int(30);
    std::vector<std::string> docs;
    for (std::size_t d = 0; d < n_docs; ++d) {
      std::string text;
      std::size_t len = 3 + rng.uniform_int(15);
      for (std::size_t w = 0; w < len; ++w) {
        if (w) text += ' ';
        text += v.word(content.begin +
                       std::int32_t(rng.uniform_int(40)));  // small pool: overlaps
      }
      docs.push_back(text);
    }
    Bm25Index index(docs);
    std::string query = docs[rng.uniform_int(n_docs)];
    auto scores = index.score_all(query);
    for (std::size_t d = 0; d < n_docs; ++d)
      EXPECT_EQ(scores[d], oracle_bm25(query, docs[d], docs, Bm25Params{}))
          << "trial " << trial << " doc " << d;
  }
}

// ---- gestalt similarity ----------------------------------------------------------

TEST(SimilarityRatio, HandTracedDecomposition) {
  // Longest block "bcd", no further matches: 2*3 / (4+4) = 0.75.
  EXPECT_DOUBLE_EQ(mdembed::similarity_ratio("abcd", "bcde"), 0.75);
}

TEST(SimilarityRatio, IdentityAndDisjoint) {
  EXPECT_DOUBLE_EQ(mdembed::similarity_ratio("theorem", "theorem"), 1.0);
  EXPECT_DOUBLE_EQ(mdembed::similarity_ratio("abc", "xyz"), 0.0);
  EXPECT_DOUBLE_EQ(mdembed::similarity_ratio("", ""), 1.0);
  EXPECT_DOUBLE_EQ(mdembed::similarity_ratio("abc", ""), 0.0);
}

TEST(SimilarityRatio, OneExactlyMeansIdentical) {
  Rng rng(7);
  for (int trial = 0; trial < 200; ++trial) {
    std::string a, b;
    std::size_t la = 1 + rng.uniform_int(12), lb = 1 + rng.uniform_int(12);
    for (std::size_t i = 0; i < la; ++i)
      a.push_back(char('a' + rng.uniform_int(4)));
    for (std::size_t i = 0; i < lb; ++i)
      b.push_back(char('a' + rng.uniform_int(4)));
    double r = mdembed::similarity_ratio(a, b);
    if (a == b)
      EXPECT_DOUBLE_EQ(r, 1.0);
    else
      EXPECT_LT(r, 1.0);
  }
}

TEST(SimilarityRatio, SymmetricInArguments) {
  Rng rng(8);
  for (int trial = 0; trial < 300; ++trial) {
    std::string a, b;
    std::size_t la = rng.uniform_int(20), lb = rng.uniform_int(20);
    for (std::size_t i = 0; i < la; ++i)
      a.push_back(char('a' + rng.uniform_int(5)));
    for (std::size_t i = 0; i < lb; ++i)
      b.push_back(char('a' + rng.uniform_int(5)));
    EXPECT_EQ(mdembed::similarity_ratio(a, b), mdembed::similarity_ratio(b, a));
  }
}

TEST(LeakageCheck, ReportsMaxAndFlaggedPairs) {
  std::vector<std::string> candidates = {"the river is wide",
                                         "a completely different sentence",
                                         "the river is wide today"};
  std::vector<std::string> protected_set = {"the river is wide", "zzzz"};
  auto report = mdembed::leakage_check(candidates, protected_set, 0.8);
  EXPECT_DOUBLE_EQ(report.max_ratio, 1.0);
  EXPECT_EQ(report.max_candidate, 0u);
  EXPECT_EQ(report.max_protected, 0u);
  // Candidate 0 is identical, candidate 2 is a near-copy.
  EXPECT_GE(report.flagged.size(), 2u);
}

TEST(LeakageCheck, Validation) {
  EXPECT_THROW(mdembed::leakage_check({"a"}, {}, 0.8), Error);
  EXPECT_THROW(mdembed::leakage_check({"a"}, {"b"}, 0.0), Error);
  EXPECT_THROW(mdembed::leakage_check({"a"}, {"b"}, 1.5), Error);
}

}  // namespace
