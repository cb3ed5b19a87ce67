#pragma once

#include <array>
#include <cstdint>
#include <unordered_map>
#include <vector>

#include "seqcheck/interactions.hpp"

namespace seqcheck {

// Count tables for consecutive item n-grams (n = 2 or 3). Windows never
// cross user boundaries.
struct NGramTable {
  int n = 2;
  // n-gram key packed little-endian: item_0 | item_1 << 21 | item_2 << 42.
  std::unordered_map<std::uint64_t, std::int64_t> counts;
  std::unordered_map<std::int64_t, std::int64_t> unigram_counts;
  // Consecutive-pair counts, filled only for n = 3 (confidence denominator).
  std::unordered_map<std::uint64_t, std::int64_t> prefix_counts;

  static std::uint64_t pack2(int a, int b) {
    return static_cast<std::uint64_t>(a) | (static_cast<std::uint64_t>(b) << 21);
  }
  static std::uint64_t pack3(int a, int b, int c) {
    return pack2(a, b) | (static_cast<std::uint64_t>(c) << 42);
  }
};

// Shuffle-normalized rule-count comparison for one n-gram order.
struct RuleStats {
  int order = 2;  // L+1, i.e. n-gram size
  int min_support = 5;
  double min_confidence = 0.1;
  std::int64_t rules_before = 0;
  std::vector<std::int64_t> per_seed_after;
  double rules_after_mean = 0.0;
  bool relative_change_defined = false;
  double relative_change = 0.0;  // (after_mean - before) / before
};

NGramTable count_ngrams(const std::vector<std::vector<int>>& sequences, int n);

// Number of n-grams passing both thresholds (inclusive). Confidence of a
// 2-gram (j,k) is support / total occurrences of j anywhere; of a 3-gram
// (j,k,l) it is support / consecutive-pair count of (j,k).
std::int64_t count_rules(const NGramTable& table, int min_support, double min_confidence);

RuleStats rule_shuffle_delta(const InteractionLog& log, int n, int min_support,
                             double min_confidence,
                             const std::vector<std::uint64_t>& seeds);

}  // namespace seqcheck
