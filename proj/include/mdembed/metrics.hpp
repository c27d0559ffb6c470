#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "mdembed/error.hpp"

namespace mdembed {

// Graded relevance judgments: query id -> (doc id -> grade). A query with no
// positive grade is treated as unjudged and excluded from macro averages.
struct Qrels {
  std::map<std::string, std::map<std::string, int>> judgments;

  bool has_query(const std::string& qid) const {
    return judgments.count(qid) > 0;
  }
  bool has_positive(const std::string& qid) const {
    auto it = judgments.find(qid);
    if (it == judgments.end()) return false;
    for (const auto& [d, g] : it->second)
      if (g > 0) return true;
    return false;
  }
  int grade(const std::string& qid, const std::string& did) const {
    auto it = judgments.find(qid);
    if (it == judgments.end()) return 0;
    auto jt = it->second.find(did);
    return jt == it->second.end() ? 0 : jt->second;
  }

  // TSV schema: query_id <TAB> doc_id <TAB> grade.
  static Qrels load_tsv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw io_error("Qrels::load_tsv: cannot open '" + path + "'");
    Qrels out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty()) continue;
      std::istringstream ss(line);
      std::string qid, did, grade_str;
      if (!std::getline(ss, qid, '\t') || !std::getline(ss, did, '\t') ||
          !std::getline(ss, grade_str, '\t'))
        throw format_error("Qrels::load_tsv: " + path + ":" +
                           std::to_string(lineno) +
                           ": expected query_id<TAB>doc_id<TAB>grade");
      int grade = 0;
      try {
        grade = std::stoi(grade_str);
      } catch (...) {
        throw format_error("Qrels::load_tsv: " + path + ":" +
                           std::to_string(lineno) + ": bad grade '" +
                           grade_str + "'");
      }
      if (grade < 0)
        throw format_error("Qrels::load_tsv: " + path + ":" +
                           std::to_string(lineno) + ": negative grade");
      out.judgments[qid][did] = grade;
    }
    return out;
  }

  void save_tsv(const std::string& path) const {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw io_error("Qrels::save_tsv: cannot open '" + path + "'");
    for (const auto& [qid, docs] : judgments)
      for (const auto& [did, grade] : docs)
        out << qid << "\t" << did << "\t" << grade << "\n";
  }
};

// One query's ranking, best first. Scores must be nonincreasing and doc ids
// unique; ties in score are broken by ascending doc id before any metric is
// computed.
struct RankedList {
  std::string query_id;
  std::vector<std::string> doc_ids;
  std::vector<double> scores;

  void validate() const {
    if (doc_ids.size() != scores.size())
      throw value_error("RankedList: ids/scores length mismatch for query '" +
                        query_id + "'");
    for (std::size_t i = 1; i < scores.size(); ++i)
      if (scores[i] > scores[i - 1])
        throw value_error("RankedList: scores increase at rank " +
                          std::to_string(i + 1) + " for query '" + query_id +
                          "'");
    std::vector<std::string> sorted = doc_ids;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
      throw value_error("RankedList: duplicate doc id for query '" + query_id +
                        "'");
  }
};

namespace detail {

// Deterministic tie handling: equal scores ordered by ascending doc id.
inline RankedList canonicalize(const RankedList& r) {
  RankedList out = r;
  std::vector<std::size_t> idx(r.doc_ids.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    if (r.scores[a] != r.scores[b]) return r.scores[a] > r.scores[b];
    return r.doc_ids[a] < r.doc_ids[b];
  });
  for (std::size_t i = 0; i < idx.size(); ++i) {
    out.doc_ids[i] = r.doc_ids[idx[i]];
    out.scores[i] = r.scores[idx[i]];
  }
  return out;
}

}  // namespace detail

// Per-query metric values plus the macro average over judged queries.
struct PerQueryMetric {
  std::vector<std::pair<std::string, double>> values;
  double mean = 0.0;
  std::vector<std::string> excluded;  // unjudged queries

  void finalize() {
    double sum = 0.0;
    for (const auto& [q, v] : values) sum += v;
    mean = values.empty() ? 0.0 : sum / double(values.size());
  }
};

inline PerQueryMetric acc_at_1(const std::vector<RankedList>& ranked,
                               const Qrels& qrels) {
  PerQueryMetric out;
  for (const auto& raw : ranked) {
    raw.validate();
    if (!qrels.has_positive(raw.query_id)) {
      out.excluded.push_back(raw.query_id);
      continue;
    }
    if (raw.doc_ids.empty())
      throw value_error("acc_at_1: empty ranking for judged query '" +
                        raw.query_id + "'");
    RankedList r = detail::canonicalize(raw);
    double v = qrels.grade(r.query_id, r.doc_ids.front()) > 0 ? 1.0 : 0.0;
    out.values.emplace_back(r.query_id, v);
  }
  out.finalize();
  return out;
}

// nDCG@k with linear gain by default: DCG = sum rel_i / log2(i + 1); the
// ideal ranking sorts grades descending. Exponential gain (2^rel - 1) is
// available behind the flag.
inline PerQueryMetric ndcg_at_k(const std::vector<RankedList>& ranked,
                                const Qrels& qrels, int k,
                                bool exponential_gain = false) {
  if (k < 1) throw value_error("ndcg_at_k: k must be >= 1");
  auto gain = [&](int rel) {
    return exponential_gain ? std::pow(2.0, rel) - 1.0 : double(rel);
  };
  PerQueryMetric out;
  for (const auto& raw : ranked) {
    raw.validate();
    if (!qrels.has_positive(raw.query_id)) {
      out.excluded.push_back(raw.query_id);
      continue;
    }
    RankedList r = detail::canonicalize(raw);
    double dcg = 0.0;
    for (std::size_t i = 0; i < r.doc_ids.size() && i < std::size_t(k); ++i)
      dcg += gain(qrels.grade(r.query_id, r.doc_ids[i])) /
             std::log2(double(i) + 2.0);
    std::vector<int> grades;
    for (const auto& [d, g] : qrels.judgments.at(r.query_id))
      if (g > 0) grades.push_back(g);
    std::sort(grades.rbegin(), grades.rend());
    double idcg = 0.0;
    for (std::size_t i = 0; i < grades.size() && i < std::size_t(k); ++i)
      idcg += gain(grades[i]) / std::log2(double(i) + 2.0);
    out.values.emplace_back(r.query_id, dcg / idcg);
  }
  out.finalize();
  return out;
}

// MAP@k over binary relevance (grade > 0). The denominator is min(R, k)
// where R counts relevant documents for the query.
inline PerQueryMetric map_at_k(const std::vector<RankedList>& ranked,
                               const Qrels& qrels, int k) {
  if (k < 1) throw value_error("map_at_k: k must be >= 1");
  PerQueryMetric out;
  for (const auto& raw : ranked) {
    raw.validate();
    if (!qrels.has_positive(raw.query_id)) {
      out.excluded.push_back(raw.query_id);
      continue;
    }
    RankedList r = detail::canonicalize(raw);
    std::size_t relevant_total = 0;
    for (const auto& [d, g] : qrels.judgments.at(r.query_id))
      if (g > 0) ++relevant_total;
    double sum = 0.0;
    std::size_t hits = 0;
    for (std::size_t i = 0; i < r.doc_ids.size() && i < std::size_t(k); ++i) {
      if (qrels.grade(r.query_id, r.doc_ids[i]) > 0) {
        ++hits;
        sum += double(hits) / double(i + 1);
      }
    }
    double denom = double(std::min<std::size_t>(relevant_total, k));
    out.values.emplace_back(r.query_id, sum / denom);
  }
  out.finalize();
  return out;
}

inline PerQueryMetric mrr(const std::vector<RankedList>& ranked,
                          const Qrels& qrels) {
  PerQueryMetric out;
  for (const auto& raw : ranked) {
    raw.validate();
    if (!qrels.has_positive(raw.query_id)) {
      out.excluded.push_back(raw.query_id);
      continue;
    }
    RankedList r = detail::canonicalize(raw);
    double v = 0.0;
    for (std::size_t i = 0; i < r.doc_ids.size(); ++i) {
      if (qrels.grade(r.query_id, r.doc_ids[i]) > 0) {
        v = 1.0 / double(i + 1);
        break;
      }
    }
    out.values.emplace_back(r.query_id, v);
  }
  out.finalize();
  return out;
}

// Pairwise rank-movement score between an original and an instruction-
// modified run, in [-100, 100], positive when relevant documents improve.
// Per relevant document with ranks R_og and R_new:
//   score = R_og/R_new - 1   if the rank improved (R_og > R_new)
//         = 1 - R_new/R_og   if the rank worsened (R_new > R_og)
//         = 0                otherwise,
// clamped to [-1, 1]; the result is 100 times the macro mean over queries of
// the per-query mean over documents. Swapping the two runs negates it.
struct PMrrResult {
  double score = 0.0;
  std::vector<std::pair<std::string, double>> per_query;
  std::size_t skipped_docs = 0;  // relevant docs missing from a ranking
  std::vector<std::string> excluded;
  std::string formula =
      "100 * mean_q mean_d clamp(R_og/R_new - 1 if improved, "
      "1 - R_new/R_og if worsened, 0 if unchanged; [-1, 1])";
};

inline PMrrResult p_mrr(const std::vector<RankedList>& ranked_original,
                        const std::vector<RankedList>& ranked_instructed,
                        const Qrels& qrels) {
  std::map<std::string, const RankedList*> instructed;
  for (const auto& r : ranked_instructed) instructed[r.query_id] = &r;
  std::map<std::string, const RankedList*> original;
  for (const auto& r : ranked_original) original[r.query_id] = &r;
  for (const auto& r : ranked_instructed)
    if (!original.count(r.query_id))
      throw value_error("p_mrr: query '" + r.query_id +
                        "' present only in the instructed run");

  PMrrResult out;
  double total = 0.0;
  std::size_t counted_queries = 0;
  for (const auto& raw_og : ranked_original) {
    auto it = instructed.find(raw_og.query_id);
    if (it == instructed.end())
      throw value_error("p_mrr: query '" + raw_og.query_id +
                        "' present only in the original run");
    if (!qrels.has_positive(raw_og.query_id)) {
      out.excluded.push_back(raw_og.query_id);
      continue;
    }
    RankedList og = detail::canonicalize(raw_og);
    RankedList nw = detail::canonicalize(*it->second);
    auto rank_of = [](const RankedList& r,
                      const std::string& did) -> std::size_t {
      for (std::size_t i = 0; i < r.doc_ids.size(); ++i)
        if (r.doc_ids[i] == did) return i + 1;
      return 0;  // not retrieved
    };
    double qsum = 0.0;
    std::size_t qdocs = 0;
    for (const auto& [did, grade] : qrels.judgments.at(og.query_id)) {
      if (grade <= 0) continue;
      std::size_t r_og = rank_of(og, did);
      std::size_t r_new = rank_of(nw, did);
      if (r_og == 0 || r_new == 0) {
        ++out.skipped_docs;
        continue;
      }
      double s = 0.0;
      if (r_og > r_new)
        s = double(r_og) / double(r_new) - 1.0;
      else if (r_new > r_og)
        s = 1.0 - double(r_new) / double(r_og);
      s = std::clamp(s, -1.0, 1.0);
      qsum += s;
      ++qdocs;
    }
    if (qdocs == 0) {
      out.excluded.push_back(og.query_id);
      continue;
    }
    double qv = qsum / double(qdocs);
    out.per_query.emplace_back(og.query_id, 100.0 * qv);
    total += qv;
    ++counted_queries;
  }
  out.score = counted_queries ? 100.0 * total / double(counted_queries) : 0.0;
  return out;
}

// ---- metric dispatch --------------------------------------------------------

struct MetricSpec {
  std::string name;  // "acc", "ndcg", "map", "mrr"
  int k = 0;         // 0 = no cutoff

  std::string str() const {
    return k > 0 ? name + "@" + std::to_string(k) : name;
  }

  static MetricSpec parse(const std::string& s) {
    MetricSpec spec;
    auto at = s.find('@');
    spec.name = s.substr(0, at);
    if (at != std::string::npos) {
      try {
        spec.k = std::stoi(s.substr(at + 1));
      } catch (...) {
        throw config_error("MetricSpec: bad cutoff in '" + s + "'");
      }
      if (spec.k < 1) throw config_error("MetricSpec: cutoff must be >= 1");
    }
    if (spec.name == "acc" && spec.k == 0) spec.k = 1;
    if (spec.name != "acc" && spec.name != "ndcg" && spec.name != "map" &&
        spec.name != "mrr")
      throw config_error("MetricSpec: unknown metric '" + s + "'");
    if (spec.name == "acc" && spec.k != 1)
      throw config_error("MetricSpec: only acc@1 is supported");
    if ((spec.name == "ndcg" || spec.name == "map") && spec.k == 0)
      throw config_error("MetricSpec: '" + s + "' needs a cutoff, e.g. " +
                         spec.name + "@10");
    return spec;
  }
};

struct MetricResult {
  MetricSpec spec;
  PerQueryMetric values;
};

struct MetricsReport {
  std::vector<MetricResult> results;
  std::map<std::string, std::string> notes;

  double mean_of(const std::string& spec_str) const {
    for (const auto& r : results)
      if (r.spec.str() == spec_str) return r.values.mean;
    throw value_error("MetricsReport: no metric '" + spec_str + "'");
  }
};

inline MetricsReport compute_metrics(const std::vector<RankedList>& ranked,
                                     const Qrels& qrels,
                                     const std::vector<MetricSpec>& specs) {
  MetricsReport report;
  for (const auto& spec : specs) {
    MetricResult r;
    r.spec = spec;
    if (spec.name == "acc")
      r.values = acc_at_1(ranked, qrels);
    else if (spec.name == "ndcg")
      r.values = ndcg_at_k(ranked, qrels, spec.k);
    else if (spec.name == "map")
      r.values = map_at_k(ranked, qrels, spec.k);
    else if (spec.name == "mrr")
      r.values = mrr(ranked, qrels);
    else
      throw config_error("compute_metrics: unknown metric '" + spec.name + "'");
    report.results.push_back(std::move(r));
  }
  return report;
}

// ---- run files --------------------------------------------------------------

// TSV run schema: query_id <TAB> doc_id <TAB> rank <TAB> score. Scores are
// printed with 17 significant digits so a reread reproduces them exactly.
inline void write_run_tsv(const std::string& path,
                          const std::vector<RankedList>& ranked) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw io_error("write_run_tsv: cannot open '" + path + "'");
  char buf[64];
  for (const auto& r : ranked) {
    for (std::size_t i = 0; i < r.doc_ids.size(); ++i) {
      std::snprintf(buf, sizeof(buf), "%.17g", r.scores[i]);
      out << r.query_id << "\t" << r.doc_ids[i] << "\t" << (i + 1) << "\t"
          << buf << "\n";
    }
  }
  if (!out) throw io_error("write_run_tsv: write failed for '" + path + "'");
}

inline std::vector<RankedList> read_run_tsv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw io_error("read_run_tsv: cannot open '" + path + "'");
  std::vector<RankedList> out;
  std::map<std::string, std::size_t> index;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string qid, did, rank_str, score_str;
    if (!std::getline(ss, qid, '\t') || !std::getline(ss, did, '\t') ||
        !std::getline(ss, rank_str, '\t') || !std::getline(ss, score_str, '\t'))
      throw format_error("read_run_tsv: " + path + ":" +
                         std::to_string(lineno) + ": expected 4 fields");
    std::size_t rank = 0;
    double score = 0.0;
    try {
      rank = std::stoul(rank_str);
      score = std::stod(score_str);
    } catch (...) {
      throw format_error("read_run_tsv: " + path + ":" +
                         std::to_string(lineno) + ": bad rank or score");
    }
    auto [it, inserted] = index.emplace(qid, out.size());
    if (inserted) out.push_back(RankedList{qid, {}, {}});
    RankedList& r = out[it->second];
    if (rank != r.doc_ids.size() + 1)
      throw format_error("read_run_tsv: " + path + ":" +
                         std::to_string(lineno) + ": rank " + rank_str +
                         " out of order for query '" + qid + "'");
    r.doc_ids.push_back(did);
    r.scores.push_back(score);
  }
  for (const auto& r : out) r.validate();
  return out;
}

}  // namespace mdembed
