#pragma once

#include <algorithm>
#include <string>
#include <string_view>
#include <vector>

#include "mdembed/error.hpp"

namespace mdembed {

namespace detail {

struct MatchBlock {
  std::size_t a = 0, b = 0, len = 0;
};

// Longest contiguous common block between a[a0,a1) and b[b0,b1); ties prefer
// the smallest position in a, then in b.
inline MatchBlock longest_match(std::string_view a, std::string_view b,
                                std::size_t a0, std::size_t a1, std::size_t b0,
                                std::size_t b1) {
  MatchBlock best;
  std::vector<std::size_t> prev(b1 - b0 + 1, 0), cur(b1 - b0 + 1, 0);
  for (std::size_t i = a0; i < a1; ++i) {
    for (std::size_t j = b0; j < b1; ++j) {
      std::size_t jj = j - b0 + 1;
      if (a[i] == b[j]) {
        cur[jj] = prev[jj - 1] + 1;
        std::size_t len = cur[jj];
        if (len > best.len) {
          best.len = len;
          best.a = i + 1 - len;
          best.b = j + 1 - len;
        }
      } else {
        cur[jj] = 0;
      }
    }
    std::swap(prev, cur);
  }
  return best;
}

inline std::size_t matched_chars(std::string_view a, std::string_view b,
                                 std::size_t a0, std::size_t a1, std::size_t b0,
                                 std::size_t b1) {
  if (a0 >= a1 || b0 >= b1) return 0;
  MatchBlock m = longest_match(a, b, a0, a1, b0, b1);
  if (m.len == 0) return 0;
  return m.len + matched_chars(a, b, a0, m.a, b0, m.b) +
         matched_chars(a, b, m.a + m.len, a1, m.b + m.len, b1);
}

}  // namespace detail

// Gestalt similarity: recursively extract the longest contiguous common
// block, recurse on the pieces to the left and right, and report
// 2*M / (|a| + |b|) where M counts all matched characters. The pair is
// ordered canonically first, which makes the ratio symmetric in its
// arguments. 1.0 iff the strings are identical.
inline double similarity_ratio(std::string_view a, std::string_view b) {
  if (a.empty() && b.empty()) return 1.0;
  if (a.empty() || b.empty()) return 0.0;
  if (b < a) std::swap(a, b);
  std::size_t m = detail::matched_chars(a, b, 0, a.size(), 0, b.size());
  return 2.0 * double(m) / double(a.size() + b.size());
}

struct LeakagePair {
  std::size_t candidate_index = 0;
  std::size_t protected_index = 0;
  double ratio = 0.0;
};

struct LeakageReport {
  double threshold = 0.0;
  double max_ratio = 0.0;
  std::size_t max_candidate = 0;
  std::size_t max_protected = 0;
  std::vector<LeakagePair> flagged;  // pairs with ratio >= threshold
};

// Audits candidate texts against a protected set (for instance, generated
// training questions against evaluation queries). Pairs at or above the
// threshold are reported as leaks.
inline LeakageReport leakage_check(const std::vector<std::string>& candidates,
                                   const std::vector<std::string>& protected_texts,
                                   double threshold) {
  if (threshold <= 0.0 || threshold > 1.0)
    throw value_error("leakage_check: threshold must lie in (0, 1]");
  if (protected_texts.empty())
    throw value_error("leakage_check: protected set is empty");
  LeakageReport report;
  report.threshold = threshold;
  for (std::size_t c = 0; c < candidates.size(); ++c) {
    for (std::size_t p = 0; p < protected_texts.size(); ++p) {
      double r = similarity_ratio(candidates[c], protected_texts[p]);
      if (r > report.max_ratio) {
        report.max_ratio = r;
        report.max_candidate = c;
        report.max_protected = p;
      }
      if (r >= threshold) report.flagged.push_back({c, p, r});
    }
  }
  return report;
}

}  // namespace mdembed
