#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include "mdembed/embedder.hpp"
#include "mdembed/metrics.hpp"
#include "mdembed/tasks.hpp"

namespace mdembed {

template <typename S>
struct RetrievalRunResult {
  MetricsReport report;
  std::vector<RankedList> rankings;
};

// Embeds queries (with their instruction) and the corpus, ranks every
// document per query by cosine similarity with ties broken by ascending doc
// id, computes the task's metrics and optionally writes a TSV run file.
template <typename S>
RetrievalRunResult<S> run_retrieval(const Embedder<S>& embedder,
                                    const RetrievalTask& task,
                                    AttentionMode mode,
                                    const std::string& run_path = "",
                                    int threads = 1) {
  task.validate();
  std::vector<EmbedInput> query_inputs, doc_inputs;
  for (const auto& q : task.queries)
    query_inputs.push_back({q.text, q.instruction});
  for (const auto& d : task.corpus) doc_inputs.push_back({d.text, ""});

  std::vector<EmbeddingVector<S>> query_embs, doc_embs;
  try {
    query_embs = embedder.embed_batch(query_inputs, mode, threads);
  } catch (const Error& e) {
    throw value_error("run_retrieval: query embedding failed: " +
                      std::string(e.what()));
  }
  try {
    doc_embs = embedder.embed_batch(doc_inputs, mode, threads);
  } catch (const Error& e) {
    throw value_error("run_retrieval: corpus embedding failed: " +
                      std::string(e.what()));
  }

  RetrievalRunResult<S> result;
  for (std::size_t qi = 0; qi < task.queries.size(); ++qi) {
    struct Scored {
      double score;
      std::size_t doc;
    };
    std::vector<Scored> scored;
    scored.reserve(task.corpus.size());
    for (std::size_t di = 0; di < task.corpus.size(); ++di)
      scored.push_back({cosine_similarity(query_embs[qi], doc_embs[di]), di});
    std::stable_sort(scored.begin(), scored.end(),
                     [&](const Scored& a, const Scored& b) {
                       if (a.score != b.score) return a.score > b.score;
                       return task.corpus[a.doc].id < task.corpus[b.doc].id;
                     });
    RankedList r;
    r.query_id = task.queries[qi].id;
    for (const auto& s : scored) {
      r.doc_ids.push_back(task.corpus[s.doc].id);
      r.scores.push_back(s.score);
    }
    result.rankings.push_back(std::move(r));
  }
  if (!run_path.empty()) write_run_tsv(run_path, result.rankings);
  result.report = compute_metrics(result.rankings, task.qrels, task.metrics);
  return result;
}

struct AblationDelta {
  std::string metric;
  double bidirectional = 0.0;
  double causal = 0.0;
  double delta = 0.0;  // bidirectional - causal
};

template <typename S>
struct AblationResult {
  RetrievalRunResult<S> bidirectional;
  RetrievalRunResult<S> causal;
  std::vector<AblationDelta> deltas;
};

// Evaluates the same weights under both attention directions and reports the
// signed difference per metric.
template <typename S>
AblationResult<S> ablate_attention(const Embedder<S>& embedder,
                                   const RetrievalTask& task,
                                   const std::string& run_prefix = "",
                                   int threads = 1) {
  AblationResult<S> out;
  out.bidirectional = run_retrieval(
      embedder, task, AttentionMode::kBidirectional,
      run_prefix.empty() ? "" : run_prefix + ".bidirectional.run.tsv",
      threads);
  out.causal = run_retrieval(
      embedder, task, AttentionMode::kCausal,
      run_prefix.empty() ? "" : run_prefix + ".causal.run.tsv", threads);
  for (std::size_t i = 0; i < out.bidirectional.report.results.size(); ++i) {
    AblationDelta d;
    d.metric = out.bidirectional.report.results[i].spec.str();
    d.bidirectional = out.bidirectional.report.results[i].values.mean;
    d.causal = out.causal.report.results[i].values.mean;
    d.delta = d.bidirectional - d.causal;
    out.deltas.push_back(d);
  }
  return out;
}

}  // namespace mdembed
