#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mdembed/bm25.hpp"
#include "mdembed/concepts.hpp"
#include "mdembed/error.hpp"
#include "mdembed/genclient.hpp"
#include "mdembed/objectives.hpp"
#include "mdembed/rng.hpp"
#include "mdembed/textmatch.hpp"

namespace mdembed {

// Task instructions attached to the two triplet forms.
inline constexpr const char* kInstructionConceptRetrieval =
    "Given a problem, retrieve the relevant theorems that help solve the "
    "given problem.";
inline constexpr const char* kInstructionQuestionRetrieval =
    "Given a problem, retrieve the relevant problems that can be solved by "
    "the similar theorems.";

struct QaPair {
  std::string question;
  std::string solution;
  // pending -> keep | replaced | discarded | invalid
  std::string quality = "pending";
};

struct GenerationRecord {
  std::string concept_name;
  std::string domain;
  std::string definition;
  std::vector<QaPair> pairs;
  std::string backend_id;
  std::string template_id;
  std::uint64_t seed = 0;

  std::vector<std::size_t> kept_indices() const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < pairs.size(); ++i)
      if (pairs[i].quality == "keep" || pairs[i].quality == "replaced")
        out.push_back(i);
    return out;
  }
};

namespace gen_options {

inline const std::vector<std::string>& question_types() {
  static const std::vector<std::string> v = {"application", "multiple-choice",
                                             "theoretical"};
  return v;
}
inline const std::vector<std::string>& math_styles() {
  static const std::vector<std::string> v = {
      "The problem should be based on real world human activities but not a "
      "proof problem.",
      "The problem should be a multi-choice problem but not a proof problem.",
      "The problem should be theoretical and mathematical but not a proof "
      "problem."};
  return v;
}
inline const std::vector<std::string>& math_difficulties() {
  static const std::vector<std::string> v = {
      "American Mathematics Competitions",
      "International Mathematical Olympiad",
      "Scholastic Assessment Test Math Exam"};
  return v;
}
inline const std::vector<std::string>& coding_styles() {
  static const std::vector<std::string> v = {
      "The problem should be based on real world human activities.",
      "The problem should be based on a theoretical coding context.",
      "The problem should be about a company or a factory.",
      "The problem should be about a game or a puzzle.",
      "The problem should be about designing a system.",
      "The problem should be about a mathematical task needing automation.",
      "The problem should be about traffic or logistics.",
      "The problem should be about a city or a community.",
      "The problem should be about finance or business.",
      "The problem should be about software or mobile applications.",
      "The problem should be about education or e-learning.",
      "The problem should be about e-commerce or online marketplaces.",
      "The problem should be about agriculture or food production.",
      "The problem should be about health or fitness.",
      "The problem should be about customer service.",
      "The problem should be about environmental sustainability."};
  return v;
}
inline const std::vector<std::string>& coding_difficulties() {
  static const std::vector<std::string> v = {"LeetCode", "Codeforces Contests",
                                             "Google Code Jam"};
  return v;
}
inline const std::vector<std::string>& coding_languages() {
  static const std::vector<std::string> v = {"Python", "C++", "Java"};
  return v;
}
inline const std::vector<std::string>& physics_difficulties() {
  static const std::vector<std::string> v = {
      "International Physics Olympiad (IPhO)",
      "American Invitational Physics Exam (AIPMT)",
      "Scholastic Assessment Test (SAT) Physics Subject Test"};
  return v;
}

}  // namespace gen_options

// Extracts the question/solution span from a tagged generation.
inline std::optional<QaPair> parse_problem_solution(const std::string& text) {
  const std::string ptag = "**Problem**";
  const std::string stag = "**Solution**";
  auto p = text.find(ptag);
  auto s = text.find(stag);
  if (p == std::string::npos || s == std::string::npos || s < p)
    return std::nullopt;
  auto trim = [](std::string v) {
    std::size_t b = v.find_first_not_of(" \t\r\n");
    std::size_t e = v.find_last_not_of(" \t\r\n");
    return b == std::string::npos ? std::string() : v.substr(b, e - b + 1);
  };
  QaPair out;
  out.question = trim(text.substr(p + ptag.size(), s - p - ptag.size()));
  out.solution = trim(text.substr(s + stag.size()));
  if (out.question.empty() || out.solution.empty()) return std::nullopt;
  return out;
}

namespace detail {

inline std::map<std::string, std::string> qa_bindings(
    const std::string& template_id, const std::string& concept_name,
    const std::string& domain, Rng& rng) {
  auto pick = [&](const std::vector<std::string>& v) {
    return v[rng.uniform_int(v.size())];
  };
  std::map<std::string, std::string> b = {{"theorem", concept_name},
                                          {"domain", domain}};
  b["question_type"] = pick(gen_options::question_types());
  if (template_id == "qa_coding") {
    b["style_constraint"] = pick(gen_options::coding_styles());
    b["difficulty"] = pick(gen_options::coding_difficulties());
    b["language"] = pick(gen_options::coding_languages());
  } else if (template_id == "qa_physics") {
    b["style_constraint"] = gen_options::coding_styles().front();
    b["difficulty"] = pick(gen_options::physics_difficulties());
    b["solving_style"] = rng.bernoulli(0.5)
                             ? "in multiple steps"
                             : "by multiple " + domain + "s";
  } else {
    b["style_constraint"] = pick(gen_options::math_styles());
    b["difficulty"] = pick(gen_options::math_difficulties());
    b["solving_style"] = rng.bernoulli(0.5)
                             ? "in multiple steps"
                             : "by multiple " + domain + "s";
  }
  return b;
}

}  // namespace detail

// One definition plus up to n question-answer pairs for a seed concept.
// Malformed generations are flagged invalid but never sink the pack; a
// transport failure surfaces as an error after saving partial results into
// *partial (when provided).
inline GenerationRecord generate_concept_pack(
    const std::string& concept_name, const std::string& domain,
    GeneratorClient& client, Rng& rng, int n_pairs = 8,
    GenerationRecord* partial = nullptr) {
  GenerationRecord rec;
  rec.concept_name = concept_name;
  rec.domain = domain;
  rec.backend_id = client.backend_id();
  rec.template_id = qa_template_for_domain(domain);
  rec.seed = rng.next_u64();
  auto publish = [&]() {
    if (partial != nullptr) *partial = rec;
  };
  try {
    GenRequest def;
    def.template_id = "definition";
    def.bindings = {{"theorem", concept_name}, {"domain", domain}};
    def.seed = rec.seed;
    rec.definition = client.complete(def);
    publish();
    for (int i = 0; i < n_pairs; ++i) {
      Rng item_rng = rng.split(std::uint64_t(i));
      GenRequest qa;
      qa.template_id = rec.template_id;
      qa.bindings =
          detail::qa_bindings(rec.template_id, concept_name, domain, item_rng);
      qa.seed = item_rng.next_u64();
      std::string raw = client.complete(qa);
      auto parsed = parse_problem_solution(raw);
      QaPair pair;
      if (parsed) {
        pair = *parsed;
      } else {
        pair.question = raw;
        pair.quality = "invalid";
      }
      rec.pairs.push_back(std::move(pair));
      publish();
    }
  } catch (const Error& e) {
    if (e.kind() == Error::Kind::kTransport) {
      publish();
      throw transport_error(std::string(e.what()) + " (concept '" +
                            concept_name + "', " +
                            std::to_string(rec.pairs.size()) + " of " +
                            std::to_string(n_pairs) + " pairs completed)");
    }
    throw;
  }
  return rec;
}

// Relevance/correctness gate. A pair is kept when either checker answers YES;
// otherwise the question checker's replacement (if it parses and passes one
// re-check) substitutes for the pair. At most one replacement round runs.
inline void quality_check(GenerationRecord& record, GeneratorClient& client) {
  if (record.pairs.empty())
    throw value_error("quality_check: record for '" + record.concept_name +
                      "' has no question-answer pairs");
  auto ask = [&](const std::string& template_id, const QaPair& pair) {
    GenRequest req;
    req.template_id = template_id;
    req.bindings = {{"theorem", record.concept_name},
                    {"domain", record.domain},
                    {"question", pair.question}};
    if (template_id == "solution_check")
      req.bindings["solution"] = pair.solution;
    req.seed = record.seed;
    return client.complete(req);
  };
  auto trimmed_yes = [](const std::string& s) {
    auto b = s.find_first_not_of(" \t\r\n");
    auto e = s.find_last_not_of(" \t\r\n");
    return b != std::string::npos && s.substr(b, e - b + 1) == "YES";
  };
  for (auto& pair : record.pairs) {
    if (pair.quality == "invalid") continue;
    std::string qres = ask("question_check", pair);
    bool question_ok = trimmed_yes(qres);
    bool solution_ok = trimmed_yes(ask("solution_check", pair));
    if (question_ok || solution_ok) {
      pair.quality = "keep";
      continue;
    }
    auto replacement = parse_problem_solution(qres);
    if (replacement &&
        trimmed_yes(ask("solution_check", *replacement))) {
      pair.question = replacement->question;
      pair.solution = replacement->solution;
      pair.quality = "replaced";
    } else {
      pair.quality = "discarded";
    }
  }
}

// BM25 mining with the diversity rule: candidates must score above zero,
// must not share the query's concept, and at most one candidate per foreign
// concept survives.
struct MinedNegatives {
  std::vector<std::size_t> indices;
  bool shortfall = false;
};

inline MinedNegatives mine_hard_negatives(
    const std::string& query_text, const std::string& query_concept,
    const Bm25Index& index, const std::vector<std::string>& doc_concepts,
    std::size_t top_k) {
  if (doc_concepts.size() != index.doc_count())
    throw value_error("mine_hard_negatives: concept labels do not match the "
                      "index");
  MinedNegatives out;
  std::vector<std::string> used_concepts;
  for (const auto& [doc, score] : index.top_k(query_text, index.doc_count())) {
    if (out.indices.size() >= top_k) break;
    if (score <= 0.0) break;  // ranked list is sorted, the rest are zeros
    if (doc_concepts[doc] == query_concept) continue;
    bool dup = false;
    for (const auto& c : used_concepts) dup = dup || c == doc_concepts[doc];
    if (dup) continue;
    used_concepts.push_back(doc_concepts[doc]);
    out.indices.push_back(doc);
  }
  out.shortfall = out.indices.size() < top_k;
  return out;
}

inline std::string generate_hard_negative(const std::string& query,
                                          const std::string& positive,
                                          const std::string& instruction,
                                          const std::string& concept_name,
                                          const std::string& domain,
                                          GeneratorClient& client,
                                          std::uint64_t seed) {
  GenRequest req;
  req.template_id = "hard_negative";
  req.bindings = {{"instruction", instruction},
                  {"domain", domain},
                  {"theorem", concept_name},
                  {"query", query},
                  {"pos", positive}};
  req.seed = seed;
  return client.complete(req);
}

struct AugmentOptions {
  int pairs_per_concept = 8;
  int mined_negatives = 1;
  int generated_negatives = 1;
  // 0 emits every ordered same-concept pair; k > 0 emits k per query.
  int q2q_per_query = 0;
  bool include_q2c = true;
  bool include_q2q = true;
  std::size_t max_triplets = 0;  // 0 = unlimited
};

struct AssembleCounts {
  std::size_t q2c = 0;
  std::size_t q2q = 0;
  std::size_t excluded_without_negative = 0;
  std::size_t discarded_pairs = 0;
};

// Builds both triplet forms from quality-checked records. Question-to-question
// pairs a query with another kept question of the same concept; question-to-
// concept pairs a question with its concept's definition. Negatives come from
// BM25 mining plus, when a client is supplied, one-shot generation.
inline std::vector<Triplet> assemble_triplets(
    const std::vector<GenerationRecord>& records, const AugmentOptions& opt,
    GeneratorClient* client, AssembleCounts* counts_out = nullptr) {
  struct Item {
    std::size_t record;
    std::size_t pair;
    std::string question;
    std::string doc;  // question + solution
  };
  std::vector<Item> items;
  std::vector<std::string> item_concepts;
  std::vector<std::string> questions;
  for (std::size_t r = 0; r < records.size(); ++r) {
    for (auto idx : records[r].kept_indices()) {
      const auto& pair = records[r].pairs[idx];
      items.push_back(Item{r, idx, pair.question,
                           pair.question + "\n" + pair.solution});
      item_concepts.push_back(records[r].concept_name);
      questions.push_back(pair.question);
    }
  }
  AssembleCounts counts;
  for (const auto& rec : records)
    for (const auto& p : rec.pairs)
      counts.discarded_pairs +=
          (p.quality == "discarded" || p.quality == "invalid");

  std::vector<Triplet> out;
  if (!items.empty()) {
    Bm25Index question_index(questions);
    std::vector<std::string> definitions;
    std::vector<std::string> definition_concepts;
    for (const auto& rec : records) {
      definitions.push_back(rec.definition);
      definition_concepts.push_back(rec.concept_name);
    }
    std::optional<Bm25Index> definition_index;
    if (opt.include_q2c) definition_index.emplace(definitions);

    // Mined negatives come from the matching document pool (questions for
    // question-to-question, definitions for question-to-concept); generated
    // negatives see the actual positive so they can mirror its format.
    auto negatives_for = [&](std::size_t item_idx, bool to_concept,
                             const std::string& positive,
                             const std::string& instruction,
                             std::uint64_t tag) {
      const Item& item = items[item_idx];
      const auto& rec = records[item.record];
      std::vector<std::string> negs;
      const Bm25Index& index =
          to_concept ? *definition_index : question_index;
      const auto& labels = to_concept ? definition_concepts : item_concepts;
      auto mined = mine_hard_negatives(item.question, rec.concept_name, index,
                                       labels, opt.mined_negatives);
      for (auto di : mined.indices)
        negs.push_back(to_concept ? definitions[di] : items[di].doc);
      if (client != nullptr && opt.generated_negatives > 0) {
        for (int g = 0; g < opt.generated_negatives; ++g)
          negs.push_back(generate_hard_negative(
              item.question, positive, instruction, rec.concept_name,
              rec.domain, *client, detail::fnv1a(item.question, tag) + g));
      }
      return negs;
    };

    // Question-to-concept: each kept question against its definition.
    if (opt.include_q2c) {
      for (std::size_t i = 0; i < items.size(); ++i) {
        const auto& rec = records[items[i].record];
        if (rec.definition.empty()) continue;
        Triplet t;
        t.task_type = "question_to_concept";
        t.query = items[i].question;
        t.instruction = kInstructionConceptRetrieval;
        t.positive = rec.definition;
        t.hard_negatives = negatives_for(i, true, rec.definition,
                                         kInstructionConceptRetrieval,
                                         0x5eedc01du);
        t.concept_name = rec.concept_name;
        t.domain = rec.domain;
        if (t.hard_negatives.empty()) {
          ++counts.excluded_without_negative;
          continue;
        }
        out.push_back(std::move(t));
        ++counts.q2c;
      }
    }

    // Question-to-question: ordered same-concept pairs.
    if (opt.include_q2q) {
      std::map<std::string, std::vector<std::size_t>> by_concept;
      for (std::size_t i = 0; i < items.size(); ++i)
        by_concept[item_concepts[i]].push_back(i);
      for (const auto& [concept_name, members] : by_concept) {
        if (members.size() < 2) continue;
        std::size_t limit = opt.q2q_per_query == 0
                                ? members.size() - 1
                                : std::size_t(opt.q2q_per_query);
        for (std::size_t a = 0; a < members.size(); ++a) {
          std::size_t emitted = 0;
          for (std::size_t step = 1;
               step < members.size() && emitted < limit; ++step) {
            std::size_t b = members[(a + step) % members.size()];
            const Item& query_item = items[members[a]];
            const Item& positive_item = items[b];
            const auto& rec = records[query_item.record];
            Triplet t;
            t.task_type = "question_to_question";
            t.query = query_item.question;
            t.instruction = kInstructionQuestionRetrieval;
            t.positive = positive_item.doc;
            t.hard_negatives =
                negatives_for(members[a], false, positive_item.doc,
                              kInstructionQuestionRetrieval, 0x9e9e9e9eu + b);
            t.concept_name = rec.concept_name;
            t.domain = rec.domain;
            if (t.hard_negatives.empty()) {
              ++counts.excluded_without_negative;
              continue;
            }
            out.push_back(std::move(t));
            ++counts.q2q;
            ++emitted;
          }
        }
      }
    }
  }

  if (opt.max_triplets > 0 && out.size() > opt.max_triplets)
    out.resize(opt.max_triplets);
  for (const auto& t : out) t.validate();
  if (counts_out != nullptr) *counts_out = counts;
  return out;
}

struct AugmentResult {
  std::vector<GenerationRecord> records;
  std::vector<Triplet> triplets;
  AssembleCounts counts;
  std::string backend_id;
};

// Full pipeline: concept selection, generation, quality gate, negative
// mining/generation, triplet assembly.
inline AugmentResult run_reasonaug(const ConceptCatalog& catalog,
                                   std::size_t n_concepts,
                                   const AugmentOptions& opt,
                                   GeneratorClient& client,
                                   std::uint64_t seed) {
  AugmentResult result;
  result.backend_id = client.backend_id();
  Rng root(seed);
  for (const auto& [domain, concept_name] : catalog.select(n_concepts)) {
    Rng concept_rng = root.split(domain + "/" + concept_name);
    GenerationRecord rec = generate_concept_pack(
        concept_name, domain, client, concept_rng, opt.pairs_per_concept);
    quality_check(rec, client);
    result.records.push_back(std::move(rec));
  }
  result.triplets =
      assemble_triplets(result.records, opt, &client, &result.counts);
  return result;
}

// ---- JSONL and statistics -----------------------------------------------------

inline void write_triplets_jsonl(const std::string& path,
                                 const std::vector<Triplet>& triplets) {
  std::ofstream out(path, std::ios::trunc);
  if (!out)
    throw io_error("write_triplets_jsonl: cannot open '" + path + "'");
  for (const auto& t : triplets) {
    nlohmann::json j = t;
    out << j.dump() << "\n";
  }
  if (!out) throw io_error("write_triplets_jsonl: write failed");
}

inline std::vector<Triplet> load_triplets_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw io_error("load_triplets_jsonl: cannot open '" + path + "'");
  std::vector<Triplet> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      out.push_back(nlohmann::json::parse(line).get<Triplet>());
      out.back().validate();
    } catch (const nlohmann::json::exception& e) {
      throw format_error("load_triplets_jsonl: " + path + ":" +
                         std::to_string(lineno) + ": " + e.what());
    } catch (const Error& e) {
      throw format_error("load_triplets_jsonl: " + path + ":" +
                         std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

struct FieldStats {
  std::size_t count = 0;
  double mean = 0.0;
  double stddev = 0.0;  // population standard deviation
};

struct DatasetStats {
  std::string tokenizer_name;
  std::size_t n_triplets = 0;
  std::map<std::string, std::size_t> task_type_counts;
  FieldStats query;
  FieldStats positive;
  FieldStats negative;
};

namespace detail {

inline std::size_t whitespace_token_count(const std::string& text) {
  std::istringstream ss(text);
  std::string tok;
  std::size_t n = 0;
  while (ss >> tok) ++n;
  return n;
}

inline FieldStats field_stats(const std::vector<std::size_t>& lengths) {
  FieldStats s;
  s.count = lengths.size();
  if (lengths.empty()) return s;
  double sum = 0, sum2 = 0;
  for (auto l : lengths) {
    sum += double(l);
    sum2 += double(l) * double(l);
  }
  s.mean = sum / double(lengths.size());
  s.stddev = std::sqrt(std::max(0.0, sum2 / double(lengths.size()) -
                                         s.mean * s.mean));
  return s;
}

}  // namespace detail

// Token-length statistics of a triplet dataset under a pluggable tokenizer
// (whitespace by default; "vocab" counts alphanumeric runs).
inline DatasetStats compute_dataset_stats(const std::string& jsonl_path,
                                          const std::string& tokenizer =
                                              "whitespace") {
  auto count_tokens = [&](const std::string& text) -> std::size_t {
    if (tokenizer == "whitespace")
      return detail::whitespace_token_count(text);
    if (tokenizer == "vocab") return bm25_tokenize(text).size();
    throw config_error("compute_dataset_stats: unknown tokenizer '" +
                       tokenizer + "'");
  };
  auto triplets = load_triplets_jsonl(jsonl_path);
  if (triplets.empty())
    throw value_error("compute_dataset_stats: dataset '" + jsonl_path +
                      "' is empty");
  DatasetStats stats;
  stats.tokenizer_name = tokenizer;
  stats.n_triplets = triplets.size();
  std::vector<std::size_t> q, p, n;
  for (const auto& t : triplets) {
    ++stats.task_type_counts[t.task_type.empty() ? "unspecified"
                                                 : t.task_type];
    q.push_back(count_tokens(t.query));
    p.push_back(count_tokens(t.positive));
    for (const auto& neg : t.hard_negatives) n.push_back(count_tokens(neg));
  }
  stats.query = detail::field_stats(q);
  stats.positive = detail::field_stats(p);
  stats.negative = detail::field_stats(n);
  return stats;
}

inline void write_stats_tsv(std::ostream& out, const DatasetStats& stats) {
  out << "field\tcount\tavg_tokens\tstd_tokens\n";
  char buf[64];
  auto row = [&](const char* name, const FieldStats& f) {
    std::snprintf(buf, sizeof(buf), "%.6g\t%.6g", f.mean, f.stddev);
    out << name << "\t" << f.count << "\t" << buf << "\n";
  };
  row("query", stats.query);
  row("positive", stats.positive);
  row("negative", stats.negative);
  out << "# tokenizer\t" << stats.tokenizer_name << "\n";
  out << "# triplets\t" << stats.n_triplets << "\n";
  for (const auto& [k, v] : stats.task_type_counts)
    out << "# task_type\t" << k << "\t" << v << "\n";
}

}  // namespace mdembed
