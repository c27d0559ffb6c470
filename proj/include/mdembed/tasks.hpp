#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mdembed/error.hpp"
#include "mdembed/metrics.hpp"
#include "mdembed/objectives.hpp"
#include "mdembed/rng.hpp"
#include "mdembed/vocab.hpp"

namespace mdembed {

// A self-contained retrieval evaluation: queries with optional instructions,
// a document corpus, graded relevance and the metrics to report.
struct RetrievalTask {
  struct Query {
    std::string id;
    std::string text;
    std::string instruction;
  };
  struct Doc {
    std::string id;
    std::string text;
  };

  std::string name;
  std::vector<Query> queries;
  std::vector<Doc> corpus;
  Qrels qrels;
  std::vector<MetricSpec> metrics;

  void validate() const {
    std::set<std::string> qids, dids;
    for (const auto& q : queries) qids.insert(q.id);
    for (const auto& d : corpus) dids.insert(d.id);
    if (qids.size() != queries.size())
      throw value_error("RetrievalTask: duplicate query ids");
    if (dids.size() != corpus.size())
      throw value_error("RetrievalTask: duplicate doc ids");
    for (const auto& [qid, docs] : qrels.judgments) {
      if (!qids.count(qid))
        throw value_error("RetrievalTask: qrels reference unknown query '" +
                          qid + "'");
      for (const auto& [did, grade] : docs)
        if (!dids.count(did))
          throw value_error("RetrievalTask: qrels reference unknown doc '" +
                            did + "'");
    }
  }
};

namespace detail {

inline std::string padded_id(const char* prefix, std::size_t i) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%s%04zu", prefix, i);
  return buf;
}

inline std::string word_at(const Vocab& vocab, Vocab::Range range,
                           std::size_t offset) {
  return vocab.word(range.begin + std::int32_t(offset));
}

inline std::string sample_word(const Vocab& vocab, Vocab::Range range,
                               Rng& rng) {
  return word_at(vocab, range, rng.uniform_int(range.size()));
}

inline std::string join_words(const std::vector<std::string>& w) {
  std::string out;
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (i) out.push_back(' ');
    out += w[i];
  }
  return out;
}

// Boilerplate filler shared by every document of a task: one fixed sentence
// repeated cyclically, the way long-context needle benchmarks pad their
// haystacks. The pool length equals the clause length, so overwriting a
// clause-sized window removes the same word multiset at every position.
inline std::vector<std::string> filler_pool(const Vocab& vocab, Rng& rng,
                                            int pool_words) {
  auto content = vocab.content_range();
  auto common = vocab.common_range();
  std::vector<std::string> stream;
  for (int w = 0; w < pool_words; ++w) {
    bool pick_common = rng.bernoulli(0.3);
    stream.push_back(pick_common ? sample_word(vocab, common, rng)
                                 : sample_word(vocab, content, rng));
  }
  return stream;
}

// doc_len tokens of shared boilerplate filler with the clause overwriting a
// random window. Every document carries the identical filler stream at
// identical positions, so documents differ only inside the clause window,
// the way needle benchmarks hide one fact in repeated boilerplate.
inline std::string filler_doc_with_clause(const std::vector<std::string>& pool,
                                          int doc_len,
                                          const std::vector<std::string>& clause,
                                          Rng& rng) {
  std::vector<std::string> words;
  words.reserve(doc_len);
  for (int i = 0; i < doc_len; ++i) words.push_back(pool[i % pool.size()]);
  std::size_t at = rng.uniform_int(doc_len - clause.size() + 1);
  for (std::size_t i = 0; i < clause.size(); ++i) words[at + i] = clause[i];
  return join_words(words);
}

}  // namespace detail

// One document per entity hides "the passkey for <name> is <d d d d>" inside
// filler text; the query asks for that entity's passkey. Exactly one relevant
// document per query.
inline RetrievalTask gen_passkey_task(int n_docs, int doc_len_tokens,
                                      const Vocab& vocab, Rng& rng) {
  if (n_docs < 2) throw value_error("gen_passkey_task: need at least 2 docs");
  auto names_range = vocab.name_range();
  if (n_docs > names_range.size())
    throw value_error("gen_passkey_task: at most " +
                      std::to_string(names_range.size()) +
                      " docs (one name each)");
  constexpr int kClauseLen = 9;
  if (doc_len_tokens < kClauseLen + 1)
    throw value_error("gen_passkey_task: doc_len_tokens must exceed " +
                      std::to_string(kClauseLen) +
                      " to host the passkey clause");
  RetrievalTask task;
  task.name = "passkey";
  task.metrics = {MetricSpec::parse("acc@1"), MetricSpec::parse("mrr")};
  auto name_pick =
      rng.sample_without_replacement(names_range.size(), n_docs);
  auto digits = vocab.digit_range();
  auto pool = detail::filler_pool(vocab, rng, kClauseLen);
  for (int i = 0; i < n_docs; ++i) {
    std::string name = detail::word_at(vocab, names_range, name_pick[i]);
    std::vector<std::string> clause = {"the", "passkey", "for", name, "is"};
    for (int d = 0; d < 4; ++d)
      clause.push_back(detail::sample_word(vocab, digits, rng));
    RetrievalTask::Doc doc;
    doc.id = detail::padded_id("d", i);
    doc.text =
        detail::filler_doc_with_clause(pool, doc_len_tokens, clause, rng);
    task.corpus.push_back(doc);

    RetrievalTask::Query q;
    q.id = detail::padded_id("q", i);
    q.text = "what is the passkey for " + name;
    q.instruction =
        "Given a question, retrieve the document containing the requested "
        "passkey.";
    task.queries.push_back(q);
    task.qrels.judgments[q.id][doc.id] = 1;
  }
  task.validate();
  return task;
}

// Entity-attribute-value facts hidden in filler; the query paraphrases the
// attribute question.
inline RetrievalTask gen_needle_task(int n_docs, int doc_len_tokens,
                                     const Vocab& vocab, Rng& rng) {
  if (n_docs < 2) throw value_error("gen_needle_task: need at least 2 docs");
  auto names_range = vocab.name_range();
  if (n_docs > names_range.size())
    throw value_error("gen_needle_task: at most " +
                      std::to_string(names_range.size()) +
                      " docs (one name each)");
  constexpr int kClauseLen = 6;
  if (doc_len_tokens < kClauseLen + 1)
    throw value_error("gen_needle_task: doc_len_tokens must exceed " +
                      std::to_string(kClauseLen) + " to host the fact");
  RetrievalTask task;
  task.name = "needle";
  task.metrics = {MetricSpec::parse("acc@1"), MetricSpec::parse("mrr")};
  auto name_pick =
      rng.sample_without_replacement(names_range.size(), n_docs);
  auto content = vocab.content_range();
  auto pool = detail::filler_pool(vocab, rng, kClauseLen);
  for (int i = 0; i < n_docs; ++i) {
    std::string name = detail::word_at(vocab, names_range, name_pick[i]);
    std::string attr = detail::sample_word(vocab, content, rng);
    std::string value = detail::sample_word(vocab, content, rng);
    std::vector<std::string> clause = {"the", attr, "of", name, "is", value};
    RetrievalTask::Doc doc;
    doc.id = detail::padded_id("d", i);
    doc.text =
        detail::filler_doc_with_clause(pool, doc_len_tokens, clause, rng);
    task.corpus.push_back(doc);

    RetrievalTask::Query q;
    q.id = detail::padded_id("q", i);
    q.text = "what " + attr + " has " + name;
    q.instruction =
        "Given a question, retrieve the document containing the relevant "
        "fact.";
    task.queries.push_back(q);
    task.qrels.judgments[q.id][doc.id] = 1;
  }
  task.validate();
  return task;
}

struct ClusterSpec {
  int signature_size = 4;
  int distractor_pool = 16;
  int item_len = 18;
  int signature_tokens = 10;  // of item_len, how many come from the signature
};

// Latent-concept retrieval: every concept owns a disjoint signature word set;
// items mix signature tokens with distractors shared across the whole task.
// The first item of each concept is held out as the query; documents are
// relevant iff they share the query's concept.
inline RetrievalTask gen_concept_cluster_task(int n_concepts,
                                              int items_per_concept,
                                              const ClusterSpec& spec,
                                              const Vocab& vocab, Rng& rng) {
  if (n_concepts < 2 || items_per_concept < 2)
    throw value_error(
        "gen_concept_cluster_task: need >= 2 concepts and >= 2 items each");
  if (spec.signature_tokens > spec.item_len)
    throw value_error("gen_concept_cluster_task: signature_tokens exceeds "
                      "item_len");
  auto content = vocab.content_range();
  std::size_t needed = std::size_t(n_concepts) * spec.signature_size;
  if (needed > std::size_t(content.size()))
    throw value_error("gen_concept_cluster_task: vocabulary too small for " +
                      std::to_string(n_concepts) + " disjoint signatures of " +
                      std::to_string(spec.signature_size) + " words");
  RetrievalTask task;
  task.name = "concept_cluster";
  task.metrics = {MetricSpec::parse("ndcg@10")};

  auto sig_words_flat =
      rng.sample_without_replacement(content.size(), needed);
  auto common = vocab.common_range();
  std::vector<std::string> distractors;
  for (auto idx : rng.sample_without_replacement(
           common.size(),
           std::min<std::size_t>(spec.distractor_pool, common.size())))
    distractors.push_back(detail::word_at(vocab, common, idx));

  std::size_t doc_counter = 0;
  for (int c = 0; c < n_concepts; ++c) {
    std::vector<std::string> sig;
    for (int s = 0; s < spec.signature_size; ++s)
      sig.push_back(detail::word_at(
          vocab, content, sig_words_flat[c * spec.signature_size + s]));
    auto make_item = [&]() {
      std::vector<std::string> words;
      for (int t = 0; t < spec.signature_tokens; ++t)
        words.push_back(sig[rng.uniform_int(sig.size())]);
      for (int t = spec.signature_tokens; t < spec.item_len; ++t)
        words.push_back(distractors[rng.uniform_int(distractors.size())]);
      rng.shuffle(words);
      return detail::join_words(words);
    };
    RetrievalTask::Query q;
    q.id = detail::padded_id("q", c);
    q.text = make_item();
    q.instruction =
        "Given a problem, retrieve the relevant problems that can be solved "
        "by the similar concepts.";
    task.queries.push_back(q);
    for (int k = 1; k < items_per_concept; ++k) {
      RetrievalTask::Doc doc;
      doc.id = detail::padded_id("d", doc_counter++);
      doc.text = make_item();
      task.corpus.push_back(doc);
      task.qrels.judgments[q.id][doc.id] = 1;
    }
  }
  task.validate();
  return task;
}

// General-purpose contrastive training pairs: the desk-scale stand-in for a
// broad public embedding dataset. Mixes needle-style retrieval (passkey and
// entity facts hidden in shared boilerplate, negatives from the same
// boilerplate with other entities) with concept-style pairs (items sharing a
// latent signature word set). Fine-tuning on this mix is what the generated
// passkey/needle tasks evaluate.
inline std::vector<Triplet> gen_embedding_mix_triplets(const Vocab& vocab,
                                                       int n, Rng& rng) {
  if (n < 1)
    throw value_error("gen_embedding_mix_triplets: n must be positive");
  std::vector<Triplet> out;
  auto names = vocab.name_range();
  auto digits = vocab.digit_range();
  auto content = vocab.content_range();
  auto common = vocab.common_range();
  while (int(out.size()) < n) {
    double u = rng.uniform();
    if (u < 0.5) {
      auto pool = detail::filler_pool(vocab, rng, 9);
      int doc_len = 48 + int(rng.uniform_int(3)) * 8;
      auto name_pick = rng.sample_without_replacement(names.size(), 3);
      auto doc_for = [&](std::size_t ni) {
        std::vector<std::string> clause = {
            "the", "passkey", "for",
            detail::word_at(vocab, names, name_pick[ni]), "is"};
        for (int d = 0; d < 4; ++d)
          clause.push_back(detail::sample_word(vocab, digits, rng));
        return detail::filler_doc_with_clause(pool, doc_len, clause, rng);
      };
      Triplet t;
      t.task_type = "needle_pair";
      t.query = "what is the passkey for " +
                detail::word_at(vocab, names, name_pick[0]);
      t.instruction =
          "Given a question, retrieve the document containing the requested "
          "passkey.";
      t.positive = doc_for(0);
      t.hard_negatives = {doc_for(1), doc_for(2)};
      out.push_back(std::move(t));
    } else if (u < 0.75) {
      auto pool = detail::filler_pool(vocab, rng, 6);
      int doc_len = 48;
      auto name_pick = rng.sample_without_replacement(names.size(), 3);
      std::string attr = detail::sample_word(vocab, content, rng);
      auto doc_for = [&](std::size_t ni) {
        std::vector<std::string> clause = {
            "the", attr, "of", detail::word_at(vocab, names, name_pick[ni]),
            "is", detail::sample_word(vocab, content, rng)};
        return detail::filler_doc_with_clause(pool, doc_len, clause, rng);
      };
      Triplet t;
      t.task_type = "needle_pair";
      t.query = "what " + attr + " has " +
                detail::word_at(vocab, names, name_pick[0]);
      t.instruction =
          "Given a question, retrieve the document containing the relevant "
          "fact.";
      t.positive = doc_for(0);
      t.hard_negatives = {doc_for(1), doc_for(2)};
      out.push_back(std::move(t));
    } else {
      auto sig_pick = rng.sample_without_replacement(content.size(), 8);
      auto item = [&](bool own_signature) {
        std::vector<std::string> words;
        std::size_t base = own_signature ? 0 : 4;
        for (int i = 0; i < 11; ++i)
          words.push_back(detail::word_at(
              vocab, content, sig_pick[base + rng.uniform_int(4)]));
        for (int i = 0; i < 7; ++i)
          words.push_back(detail::sample_word(vocab, common, rng));
        rng.shuffle(words);
        return detail::join_words(words);
      };
      Triplet t;
      t.task_type = "concept_pair";
      t.query = item(true);
      t.instruction =
          "Given a problem, retrieve the relevant problems that can be solved "
          "by the similar concepts.";
      t.positive = item(true);
      t.hard_negatives = {item(false)};
      out.push_back(std::move(t));
    }
  }
  return out;
}

// ---- task directory layout -----------------------------------------------------
// queries.jsonl: {query_id, text, instruction?}
// corpus.jsonl:  {doc_id, text}
// qrels.tsv:     query_id <TAB> doc_id <TAB> grade
// task.json:     {name, metrics} (optional; defaults apply when absent)

inline void save_task(const RetrievalTask& task, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  {
    std::ofstream out(fs::path(dir) / "queries.jsonl", std::ios::trunc);
    if (!out) throw io_error("save_task: cannot write queries.jsonl");
    for (const auto& q : task.queries) {
      nlohmann::json j = {{"query_id", q.id}, {"text", q.text}};
      if (!q.instruction.empty()) j["instruction"] = q.instruction;
      out << j.dump() << "\n";
    }
  }
  {
    std::ofstream out(fs::path(dir) / "corpus.jsonl", std::ios::trunc);
    if (!out) throw io_error("save_task: cannot write corpus.jsonl");
    for (const auto& d : task.corpus) {
      nlohmann::json j = {{"doc_id", d.id}, {"text", d.text}};
      out << j.dump() << "\n";
    }
  }
  task.qrels.save_tsv((fs::path(dir) / "qrels.tsv").string());
  {
    std::ofstream out(fs::path(dir) / "task.json", std::ios::trunc);
    if (!out) throw io_error("save_task: cannot write task.json");
    nlohmann::json metrics = nlohmann::json::array();
    for (const auto& m : task.metrics) metrics.push_back(m.str());
    out << nlohmann::json{{"name", task.name}, {"metrics", metrics}}.dump(2)
        << "\n";
  }
}

inline RetrievalTask load_task(const std::string& dir) {
  namespace fs = std::filesystem;
  RetrievalTask task;
  auto parse_jsonl = [&](const std::string& file, auto&& handler) {
    std::ifstream in(fs::path(dir) / file);
    if (!in) throw io_error("load_task: cannot open " + dir + "/" + file);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty()) continue;
      try {
        handler(nlohmann::json::parse(line));
      } catch (const nlohmann::json::exception& e) {
        throw format_error("load_task: " + file + ":" +
                           std::to_string(lineno) + ": " + e.what());
      }
    }
  };
  parse_jsonl("queries.jsonl", [&](const nlohmann::json& j) {
    RetrievalTask::Query q;
    q.id = j.at("query_id").get<std::string>();
    q.text = j.at("text").get<std::string>();
    q.instruction = j.value("instruction", "");
    task.queries.push_back(std::move(q));
  });
  parse_jsonl("corpus.jsonl", [&](const nlohmann::json& j) {
    RetrievalTask::Doc d;
    d.id = j.at("doc_id").get<std::string>();
    d.text = j.at("text").get<std::string>();
    task.corpus.push_back(std::move(d));
  });
  task.qrels = Qrels::load_tsv((fs::path(dir) / "qrels.tsv").string());

  auto meta_path = fs::path(dir) / "task.json";
  if (fs::exists(meta_path)) {
    std::ifstream in(meta_path);
    try {
      auto j = nlohmann::json::parse(in);
      task.name = j.value("name", fs::path(dir).filename().string());
      for (const auto& m : j.value("metrics", std::vector<std::string>{}))
        task.metrics.push_back(MetricSpec::parse(m));
    } catch (const nlohmann::json::exception& e) {
      throw format_error(std::string("load_task: task.json: ") + e.what());
    }
  } else {
    task.name = fs::path(dir).filename().string();
  }
  if (task.metrics.empty())
    task.metrics = {MetricSpec::parse("ndcg@10")};
  task.validate();
  return task;
}

}  // namespace mdembed
