#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "mdembed/concepts.hpp"
#include "mdembed/genclient.hpp"
#include "mdembed/prompts.hpp"
#include "mdembed/reasonaug.hpp"
#include "mdembed/rng.hpp"

namespace {

namespace fs = std::filesystem;
using mdembed::AugmentOptions;
using mdembed::Bm25Index;
using mdembed::ConceptCatalog;
using mdembed::Error;
using mdembed::GenerationRecord;
using mdembed::GenRequest;
using mdembed::Rng;
using mdembed::StubGenerator;

// ---- prompt templates -----------------------------------------------------------

TEST(Prompts, DefinitionRenderContainsBindingsAndNoBraces) {
  auto text = mdembed::render_prompt(
      "definition",
      {{"domain", "math theorem"}, {"theorem", "Pigeonhole Principle"}});
  EXPECT_NE(text.find("math theorem"), std::string::npos);
  EXPECT_NE(text.find("Pigeonhole Principle"), std::string::npos);
  EXPECT_EQ(text.find('{'), std::string::npos);
  EXPECT_EQ(text.find('}'), std::string::npos);
}

TEST(Prompts, MissingBindingNamesPlaceholder) {
  try {
    mdembed::render_prompt("definition", {{"domain", "math theorem"}});
    FAIL() << "expected error";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("theorem"), std::string::npos);
  }
}

TEST(Prompts, BraceInBindingPassesThroughLiterally) {
  auto text = mdembed::render_prompt(
      "definition", {{"domain", "math theorem"}, {"theorem", "X {unused} Y"}});
  EXPECT_NE(text.find("X {unused} Y"), std::string::npos);
}

TEST(Prompts, UnknownTemplateRejected) {
  EXPECT_THROW(mdembed::render_prompt("nope", {}), Error);
}

TEST(Prompts, HardNegativeRenderEmbedsQueryPositiveAndConcept) {
  auto text = mdembed::render_prompt("hard_negative",
                                     {{"instruction", "retrieve things"},
                                      {"domain", "math theorem"},
                                      {"theorem", "Bayes' Theorem"},
                                      {"query", "THE QUERY TEXT"},
                                      {"pos", "THE POSITIVE DOCUMENT"}});
  EXPECT_NE(text.find("THE QUERY TEXT"), std::string::npos);
  EXPECT_NE(text.find("THE POSITIVE DOCUMENT"), std::string::npos);
  EXPECT_NE(text.find("Bayes' Theorem"), std::string::npos);
}

// ---- concept catalog -------------------------------------------------------------

TEST(Concepts, BuiltinCounts) {
  const auto& cat = ConceptCatalog::builtin();
  EXPECT_EQ(cat.concepts("algorithm").size(), 60u);
  EXPECT_EQ(cat.concepts("math theorem").size(), 90u);
  EXPECT_EQ(cat.concepts("physics theorem").size(), 80u);
  EXPECT_EQ(cat.concepts("finance formula").size(), 30u);
  EXPECT_EQ(cat.total_count(), 260u);
  EXPECT_THROW(cat.concepts("astrology"), Error);
}

TEST(Concepts, SelectRoundRobinAcrossDomains) {
  const auto& cat = ConceptCatalog::builtin();
  auto sel = cat.select(8);
  ASSERT_EQ(sel.size(), 8u);
  EXPECT_EQ(sel[0].first, "algorithm");
  EXPECT_EQ(sel[1].first, "math theorem");
  EXPECT_EQ(sel[2].first, "physics theorem");
  EXPECT_EQ(sel[3].first, "finance formula");
  EXPECT_EQ(sel[4].first, "algorithm");
  EXPECT_THROW(cat.select(1000), Error);
}

TEST(Concepts, AliasesAndMentions) {
  auto a = ConceptCatalog::aliases("Depth First Search (DFS)");
  EXPECT_EQ(a.size(), 3u);
  EXPECT_TRUE(ConceptCatalog::mentions("we apply dfs here",
                                       "Depth First Search (DFS)"));
  EXPECT_TRUE(ConceptCatalog::mentions("use depth first search",
                                       "Depth First Search (DFS)"));
  EXPECT_FALSE(ConceptCatalog::mentions("breadth only", "Depth First Search "
                                                        "(DFS)"));
}

// ---- stub generator ----------------------------------------------------------------

TEST(StubGenerator, DeterministicPerRequest) {
  StubGenerator g1(7), g2(7), g3(8);
  Rng binding_rng(1);
  GenRequest req;
  req.template_id = "qa_math";
  req.bindings = mdembed::detail::qa_bindings("qa_math", "Bayes' Theorem",
                                              "math theorem", binding_rng);
  req.seed = 42;
  EXPECT_EQ(g1.complete(req), g2.complete(req));
  EXPECT_NE(g1.complete(req), g3.complete(req));
  GenRequest other = req;
  other.seed = 43;
  EXPECT_NE(g1.complete(req), g1.complete(other));
}

TEST(StubGenerator, DefinitionNamesConceptAndSignature) {
  StubGenerator g(1);
  GenRequest req;
  req.template_id = "definition";
  req.bindings = {{"theorem", "Ohm's Law"}, {"domain", "physics theorem"}};
  auto def = g.complete(req);
  EXPECT_NE(def.find("Ohm's Law"), std::string::npos);
  auto sig = mdembed::detail::concept_signature("Ohm's Law");
  for (const auto& w : sig) EXPECT_NE(def.find(w), std::string::npos);
}

TEST(StubGenerator, QuestionAvoidsConceptSolutionNamesIt) {
  StubGenerator g(3);
  Rng rng(5);
  auto rec = mdembed::generate_concept_pack("Pythagorean Theorem",
                                            "math theorem", g, rng, 8);
  EXPECT_EQ(rec.pairs.size(), 8u);
  EXPECT_FALSE(rec.definition.empty());
  for (const auto& p : rec.pairs)
    EXPECT_FALSE(ConceptCatalog::mentions(p.question, "Pythagorean Theorem"));
}

// ---- generation + quality gate ------------------------------------------------------

TEST(GeneratePack, ThreeConceptsGiveThreeDefinitionsAndTwentyFourPairs) {
  StubGenerator g(11);
  std::size_t defs = 0, pairs = 0;
  for (const char* c : {"Merge Sort", "Quick Sort", "Heap Sort"}) {
    Rng rng(mdembed::detail::fnv1a(c));
    auto rec = mdembed::generate_concept_pack(c, "algorithm", g, rng, 8);
    defs += !rec.definition.empty();
    pairs += rec.pairs.size();
  }
  EXPECT_EQ(defs, 3u);
  EXPECT_EQ(pairs, 24u);
}

// A client that returns unparseable generations.
struct MalformedClient final : mdembed::GeneratorClient {
  std::string complete(const GenRequest& req) override {
    if (req.template_id == "definition") return "a definition";
    return "no tags whatsoever";
  }
  std::string backend_id() const override { return "malformed"; }
};

TEST(GeneratePack, MalformedItemsFlaggedInvalidPackStillReturned) {
  MalformedClient client;
  Rng rng(1);
  auto rec =
      mdembed::generate_concept_pack("Merge Sort", "algorithm", client, rng, 4);
  EXPECT_EQ(rec.pairs.size(), 4u);
  for (const auto& p : rec.pairs) EXPECT_EQ(p.quality, "invalid");
}

struct FlakyClient final : mdembed::GeneratorClient {
  int failures_after = 2;
  int calls = 0;
  std::string complete(const GenRequest& req) override {
    if (++calls > failures_after)
      throw mdembed::transport_error("backend unreachable");
    if (req.template_id == "definition") return "def";
    return "**Problem**\nq\n**Solution**\ns";
  }
  std::string backend_id() const override { return "flaky"; }
};

TEST(GeneratePack, TransportFailureCarriesPartialResults) {
  FlakyClient client;
  Rng rng(1);
  GenerationRecord partial;
  try {
    mdembed::generate_concept_pack("Merge Sort", "algorithm", client, rng, 6,
                                   &partial);
    FAIL() << "expected transport error";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), Error::Kind::kTransport);
    EXPECT_NE(std::string(e.what()).find("1 of 6"), std::string::npos);
  }
  EXPECT_EQ(partial.definition, "def");
  EXPECT_EQ(partial.pairs.size(), 1u);
}

TEST(QualityCheck, StubRuleKeepsMentionsReplacesOthers) {
  StubGenerator g(2);
  GenerationRecord rec;
  rec.concept_name = "Binary Search";
  rec.domain = "algorithm";
  rec.seed = 9;
  rec.pairs.push_back({"find the target quickly",
                       "apply Binary Search . answer is 4", "pending"});
  rec.pairs.push_back({"find the target quickly", "count by hand", "pending"});
  mdembed::quality_check(rec, g);
  EXPECT_EQ(rec.pairs[0].quality, "keep");
  EXPECT_EQ(rec.pairs[1].quality, "replaced");
  // The adopted replacement must itself pass the stub rule.
  EXPECT_TRUE(ConceptCatalog::mentions(rec.pairs[1].solution, "Binary Search"));
}

TEST(QualityCheck, VerbatimYesKeeps) {
  struct YesClient final : mdembed::GeneratorClient {
    std::string complete(const GenRequest&) override { return "YES"; }
    std::string backend_id() const override { return "yes"; }
  } client;
  GenerationRecord rec;
  rec.concept_name = "X";
  rec.domain = "algorithm";
  rec.pairs.push_back({"q", "s", "pending"});
  mdembed::quality_check(rec, client);
  EXPECT_EQ(rec.pairs[0].quality, "keep");
}

TEST(QualityCheck, EmptyRecordRejected) {
  StubGenerator g(2);
  GenerationRecord rec;
  rec.concept_name = "X";
  rec.domain = "algorithm";
  EXPECT_THROW(mdembed::quality_check(rec, g), Error);
}

// ---- hard negative mining -------------------------------------------------------------

TEST(Mining, ExcludesQueryConceptAndDuplicates) {
  std::vector<std::string> docs = {
      "river stone puzzle",          // concept A (same as query)
      "river stone challenge",       // concept B
      "river stone second exercise",  // concept B, lower rank duplicate
      "castle tower moat"};          // concept C, no overlap
  Bm25Index index(docs);
  std::vector<std::string> concepts = {"A", "B", "B", "C"};
  auto mined =
      mdembed::mine_hard_negatives("river stone", "A", index, concepts, 3);
  ASSERT_EQ(mined.indices.size(), 1u);
  EXPECT_EQ(mined.indices[0], 1u);  // best foreign-concept lexical match
  EXPECT_TRUE(mined.shortfall);
}

TEST(Mining, OnlyMatchSharesConceptGivesEmptyWithShortfall) {
  std::vector<std::string> docs = {"quartz ember flux", "unrelated words here"};
  Bm25Index index(docs);
  auto mined = mdembed::mine_hard_negatives("quartz ember", "A", index,
                                            {"A", "B"}, 2);
  EXPECT_TRUE(mined.indices.empty());
  EXPECT_TRUE(mined.shortfall);
}

// Mined set equals a brute-force ranking plus the filter rules, exactly.
TEST(Mining, BruteForceEquivalenceOnSyntheticCorpus) {
  Rng rng(31);
  const auto& pool = mdembed::detail::content_words();
  std::vector<std::string> docs;
  std::vector<std::string> concepts;
  for (int d = 0; d < 50; ++d) {
    std::string text;
    for (int w = 0; w < 10; ++w) {
      if (w) text += ' ';
      text += pool[rng.uniform_int(30)];
    }
    docs.push_back(text);
    concepts.push_back("concept" + std::to_string(d % 7));
  }
  Bm25Index index(docs);
  std::string query = docs[13];
  auto mined = mdembed::mine_hard_negatives(query, concepts[13], index,
                                            concepts, 4);
  // Brute force: rank by (score desc, index asc), then filter.
  auto scores = index.score_all(query);
  std::vector<std::size_t> order(docs.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return a < b;
  });
  std::vector<std::size_t> expect;
  std::vector<std::string> used;
  for (auto d : order) {
    if (expect.size() == 4) break;
    if (scores[d] <= 0.0) break;
    if (concepts[d] == concepts[13]) continue;
    if (std::find(used.begin(), used.end(), concepts[d]) != used.end())
      continue;
    used.push_back(concepts[d]);
    expect.push_back(d);
  }
  EXPECT_EQ(mined.indices, expect);
}

TEST(GeneratedNegative, StubIsDeterministicAndOffConcept) {
  StubGenerator g(5);
  auto n1 = mdembed::generate_hard_negative("the query", "the positive",
                                            "instruction", "Snell's Law",
                                            "physics theorem", g, 3);
  auto n2 = mdembed::generate_hard_negative("the query", "the positive",
                                            "instruction", "Snell's Law",
                                            "physics theorem", g, 3);
  EXPECT_EQ(n1, n2);
  EXPECT_FALSE(ConceptCatalog::mentions(n1, "Snell's Law"));
  auto sig = mdembed::detail::concept_signature("Snell's Law");
  for (const auto& w : sig)
    EXPECT_EQ(n1.find(" " + w + " "), std::string::npos);
}

// ---- assembly ---------------------------------------------------------------------------

TEST(Assemble, SingleConceptCombinatorics) {
  StubGenerator g(17);
  Rng rng(3);
  auto rec = mdembed::generate_concept_pack("Kadane's Algorithm", "algorithm",
                                            g, rng, 8);
  mdembed::quality_check(rec, g);
  ASSERT_EQ(rec.kept_indices().size(), 8u);
  AugmentOptions opt;
  opt.q2q_per_query = 0;  // all ordered pairs
  mdembed::AssembleCounts counts;
  auto triplets = mdembed::assemble_triplets({rec}, opt, &g, &counts);
  // 8 question-to-concept and 8*7 ordered question-to-question pairs before
  // negative filtering; the stub client guarantees a generated negative, so
  // everything survives.
  EXPECT_EQ(counts.q2c + counts.excluded_without_negative * 0, 8u);
  EXPECT_EQ(counts.q2q, 56u);
  EXPECT_EQ(triplets.size(), 64u);
  for (const auto& t : triplets) {
    EXPECT_GE(t.hard_negatives.size(), 1u);
    EXPECT_EQ(t.concept_name, "Kadane's Algorithm");
  }
}

TEST(Assemble, WithoutClientSingleConceptHasNoNegatives) {
  StubGenerator g(18);
  Rng rng(4);
  auto rec = mdembed::generate_concept_pack("Bucket Sort", "algorithm", g, rng,
                                            4);
  mdembed::quality_check(rec, g);
  AugmentOptions opt;
  opt.q2q_per_query = 1;
  mdembed::AssembleCounts counts;
  auto triplets = mdembed::assemble_triplets({rec}, opt, nullptr, &counts);
  // Mining cannot leave the concept; with no generated negatives every
  // candidate is excluded and counted.
  EXPECT_TRUE(triplets.empty());
  EXPECT_GT(counts.excluded_without_negative, 0u);
}

TEST(Assemble, QuestionToQuestionPositiveSharesConcept) {
  StubGenerator g(19);
  mdembed::AugmentOptions opt;
  opt.q2q_per_query = 2;
  auto result = mdembed::run_reasonaug(ConceptCatalog::builtin(), 6, opt, g,
                                       123);
  EXPECT_EQ(result.records.size(), 6u);
  std::map<std::string, const GenerationRecord*> by_name;
  for (const auto& r : result.records) by_name[r.concept_name] = &r;
  for (const auto& t : result.triplets) {
    t.validate();
    if (t.task_type != "question_to_question") continue;
    // The positive document must be a kept question+solution of the same
    // concept, and never the query itself.
    const auto* rec = by_name.at(t.concept_name);
    bool found = false;
    for (auto idx : rec->kept_indices()) {
      const auto& p = rec->pairs[idx];
      found = found || t.positive == p.question + "\n" + p.solution;
    }
    EXPECT_TRUE(found);
    EXPECT_NE(t.positive, t.query);
  }
}

// ---- end-to-end determinism and files --------------------------------------------------

TEST(Pipeline, StubRunIsByteDeterministic) {
  fs::create_directories("reasonaug_test_tmp");
  auto run_once = [&](const std::string& path) {
    StubGenerator g(1234);
    AugmentOptions opt;
    opt.q2q_per_query = 1;
    auto result =
        mdembed::run_reasonaug(ConceptCatalog::builtin(), 5, opt, g, 1234);
    mdembed::write_triplets_jsonl(path, result.triplets);
  };
  run_once("reasonaug_test_tmp/a.jsonl");
  run_once("reasonaug_test_tmp/b.jsonl");
  auto read = [](const std::string& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(in)),
                       std::istreambuf_iterator<char>());
  };
  auto a = read("reasonaug_test_tmp/a.jsonl");
  EXPECT_FALSE(a.empty());
  EXPECT_EQ(a, read("reasonaug_test_tmp/b.jsonl"));
}

TEST(Pipeline, JsonlRoundtripAndValidation) {
  fs::create_directories("reasonaug_test_tmp");
  std::string path = "reasonaug_test_tmp/rt.jsonl";
  StubGenerator g(7);
  AugmentOptions opt;
  opt.q2q_per_query = 1;
  auto result = mdembed::run_reasonaug(ConceptCatalog::builtin(), 4, opt, g, 7);
  mdembed::write_triplets_jsonl(path, result.triplets);
  auto loaded = mdembed::load_triplets_jsonl(path);
  ASSERT_EQ(loaded.size(), result.triplets.size());
  EXPECT_EQ(loaded[0].query, result.triplets[0].query);

  std::ofstream(path, std::ios::trunc) << "{\"query\": \"only\"}\n";
  try {
    mdembed::load_triplets_jsonl(path);
    FAIL() << "expected format error";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find(":1"), std::string::npos);
  }

  std::ofstream(path, std::ios::trunc) << "";
  EXPECT_TRUE(mdembed::load_triplets_jsonl(path).empty());
}

TEST(Stats, HandComputedMeanAndStd) {
  fs::create_directories("reasonaug_test_tmp");
  std::string path = "reasonaug_test_tmp/stats.jsonl";
  std::ofstream out(path, std::ios::trunc);
  auto line = [&](int n_tokens) {
    std::string q;
    for (int i = 0; i < n_tokens; ++i) q += "w ";
    nlohmann::json j = {{"task_type", "question_to_concept"},
                        {"query", q},
                        {"instruction", ""},
                        {"positive", "p"},
                        {"negatives", nlohmann::json::array({"n"})},
                        {"concept", "c"},
                        {"domain", "d"}};
    out << j.dump() << "\n";
  };
  line(10);
  line(20);
  out.close();
  auto stats = mdembed::compute_dataset_stats(path, "whitespace");
  EXPECT_EQ(stats.n_triplets, 2u);
  EXPECT_DOUBLE_EQ(stats.query.mean, 15.0);
  EXPECT_DOUBLE_EQ(stats.query.stddev, 5.0);
  EXPECT_EQ(stats.tokenizer_name, "whitespace");

  std::ofstream(path, std::ios::trunc) << "";
  EXPECT_THROW(mdembed::compute_dataset_stats(path), Error);
}

// Stub-generated questions stay clear of a held-out protected set.
TEST(Leakage, StubDatasetVersusProtectedSet) {
  StubGenerator g(77);
  AugmentOptions opt;
  opt.q2q_per_query = 1;
  auto result = mdembed::run_reasonaug(ConceptCatalog::builtin(), 6, opt, g,
                                       77);
  std::vector<std::string> candidates;
  for (const auto& t : result.triplets) candidates.push_back(t.query);
  std::vector<std::string> protected_set = {
      "what is the passkey for alice",
      "find the garnet kayak near the summit trail with 3 ripples",
      "the anchor of the barrel equals the candle times the dagger"};
  auto report = mdembed::leakage_check(candidates, protected_set, 0.8);
  EXPECT_LT(report.max_ratio, 0.8);
  EXPECT_TRUE(report.flagged.empty());
}

}  // namespace
