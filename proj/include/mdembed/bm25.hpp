#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "mdembed/error.hpp"

namespace mdembed {

// Okapi BM25 defaults with +1 IDF smoothing, which keeps every score
// nonnegative: idf = ln(1 + (N - df + 0.5) / (df + 0.5)).
struct Bm25Params {
  double k1 = 1.2;
  double b = 0.75;
};

// Lowercase alphanumeric-run tokenization shared by indexing and querying.
inline std::vector<std::string> bm25_tokenize(const std::string& text) {
  std::vector<std::string> out;
  std::string run;
  for (char c : text) {
    if (std::isalnum(static_cast<unsigned char>(c))) {
      run.push_back(char(std::tolower(static_cast<unsigned char>(c))));
    } else if (!run.empty()) {
      out.push_back(std::move(run));
      run.clear();
    }
  }
  if (!run.empty()) out.push_back(std::move(run));
  return out;
}

// Inverted index over a fixed document set. Scores accumulate per query term
// in first-appearance order, so index-based ranking is bit-identical to a
// direct per-document evaluation of the same formula.
class Bm25Index {
 public:
  explicit Bm25Index(const std::vector<std::string>& documents,
                     Bm25Params params = {})
      : params_(params) {
    if (documents.empty()) throw value_error("Bm25Index: no documents");
    doc_len_.reserve(documents.size());
    std::size_t total = 0;
    for (std::size_t d = 0; d < documents.size(); ++d) {
      auto terms = bm25_tokenize(documents[d]);
      doc_len_.push_back(terms.size());
      total += terms.size();
      std::map<std::string, std::uint32_t> tf;
      for (const auto& t : terms) ++tf[t];
      for (const auto& [t, f] : tf) postings_[t].push_back({d, f});
    }
    if (total == 0)
      throw value_error("Bm25Index: every document tokenizes to nothing");
    avg_len_ = double(total) / double(documents.size());
  }

  std::size_t doc_count() const { return doc_len_.size(); }
  double avg_len() const { return avg_len_; }
  std::size_t doc_len(std::size_t d) const { return doc_len_.at(d); }
  std::size_t df(const std::string& term) const {
    auto it = postings_.find(term);
    return it == postings_.end() ? 0 : it->second.size();
  }

  double idf(const std::string& term) const {
    double n = double(doc_count());
    double d = double(df(term));
    return std::log(1.0 + (n - d + 0.5) / (d + 0.5));
  }

  // Scores of all documents for the query, zeros included.
  std::vector<double> score_all(const std::string& query) const {
    std::vector<double> scores(doc_count(), 0.0);
    for (const auto& term : unique_terms(query)) {
      auto it = postings_.find(term);
      if (it == postings_.end()) continue;
      double w = idf(term);
      for (const auto& [d, tf] : it->second) {
        double norm = params_.k1 * (1.0 - params_.b +
                                    params_.b * double(doc_len_[d]) / avg_len_);
        scores[d] += w * (double(tf) * (params_.k1 + 1.0)) /
                     (double(tf) + norm);
      }
    }
    return scores;
  }

  // Best k documents, score descending, ties broken by ascending index.
  std::vector<std::pair<std::size_t, double>> top_k(const std::string& query,
                                                    std::size_t k) const {
    auto scores = score_all(query);
    std::vector<std::size_t> idx(scores.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
      if (scores[a] != scores[b]) return scores[a] > scores[b];
      return a < b;
    });
    std::vector<std::pair<std::size_t, double>> out;
    for (std::size_t i = 0; i < idx.size() && i < k; ++i)
      out.emplace_back(idx[i], scores[idx[i]]);
    return out;
  }

  // Query terms in first-appearance order, duplicates dropped.
  static std::vector<std::string> unique_terms(const std::string& query) {
    std::vector<std::string> out;
    for (auto& t : bm25_tokenize(query))
      if (std::find(out.begin(), out.end(), t) == out.end())
        out.push_back(std::move(t));
    return out;
  }

 private:
  Bm25Params params_;
  std::map<std::string, std::vector<std::pair<std::size_t, std::uint32_t>>>
      postings_;
  std::vector<std::size_t> doc_len_;
  double avg_len_ = 0.0;
};

}  // namespace mdembed
