#include "seqcheck/rules.hpp"

#include <numeric>

#include "seqcheck/common.hpp"
#include "seqcheck/split.hpp"

namespace seqcheck {

NGramTable count_ngrams(const std::vector<std::vector<int>>& sequences, int n) {
  if (n != 2 && n != 3) throw ConfigError("count_ngrams: n must be 2 or 3");
  NGramTable table;
  table.n = n;
  for (const auto& seq : sequences) {
    for (int item : seq) {
      if (item >= (1 << 21)) throw DataError("count_ngrams: item index exceeds 2^21");
      ++table.unigram_counts[item];
    }
    if (n == 2) {
      for (std::size_t i = 0; i + 1 < seq.size(); ++i)
        ++table.counts[NGramTable::pack2(seq[i], seq[i + 1])];
    } else {
      for (std::size_t i = 0; i + 1 < seq.size(); ++i)
        ++table.prefix_counts[NGramTable::pack2(seq[i], seq[i + 1])];
      for (std::size_t i = 0; i + 2 < seq.size(); ++i)
        ++table.counts[NGramTable::pack3(seq[i], seq[i + 1], seq[i + 2])];
    }
  }
  return table;
}

std::int64_t count_rules(const NGramTable& table, int min_support, double min_confidence) {
  if (min_support <= 0 || min_confidence <= 0.0)
    throw ConfigError("count_rules: thresholds must be positive");
  constexpr std::uint64_t kMask = (1ULL << 21) - 1;
  std::int64_t rules = 0;
  for (const auto& [key, support] : table.counts) {
    if (support < min_support) continue;
    std::int64_t denom = 0;
    if (table.n == 2) {
      denom = table.unigram_counts.at(static_cast<std::int64_t>(key & kMask));
    } else {
      denom = table.prefix_counts.at(key & ((1ULL << 42) - 1));
    }
    const double confidence = static_cast<double>(support) / static_cast<double>(denom);
    if (confidence >= min_confidence) ++rules;
  }
  return rules;
}

RuleStats rule_shuffle_delta(const InteractionLog& log, int n, int min_support,
                             double min_confidence,
                             const std::vector<std::uint64_t>& seeds) {
  if (seeds.empty()) throw ConfigError("rule_shuffle_delta: need at least one seed");
  RuleStats stats;
  stats.order = n;
  stats.min_support = min_support;
  stats.min_confidence = min_confidence;
  stats.rules_before = count_rules(count_ngrams(user_sequences(log), n),
                                   min_support, min_confidence);
  for (std::uint64_t seed : seeds) {
    const InteractionLog shuffled = shuffle_log(log, seed);
    stats.per_seed_after.push_back(count_rules(count_ngrams(user_sequences(shuffled), n),
                                               min_support, min_confidence));
  }
  stats.rules_after_mean =
      static_cast<double>(std::accumulate(stats.per_seed_after.begin(),
                                          stats.per_seed_after.end(), std::int64_t{0})) /
      static_cast<double>(stats.per_seed_after.size());
  if (stats.rules_before > 0) {
    stats.relative_change_defined = true;
    stats.relative_change = (stats.rules_after_mean - static_cast<double>(stats.rules_before)) /
                            static_cast<double>(stats.rules_before);
  }
  return stats;
}

}  // namespace seqcheck
