#pragma once

#include <optional>
#include <string>
#include <vector>

#include "seqcheck/models.hpp"

namespace seqcheck {

// 1 iff target is among the top-k recommended items.
int hit_rate_at_k(const ScoredList& recs, int target, int k);

// Single-relevant-item NDCG: 1/log2(rank+1) when target ranks within k
// (1-based), else 0. Ideal DCG is 1.
double ndcg_at_k(const ScoredList& recs, int target, int k);

// Set overlap of the two top-k lists.
double jaccard_at_k(const ScoredList& a, const ScoredList& b, int k);

// (after - before) / before; nullopt when before is 0 (never silently zero).
std::optional<double> relative_change(double before, double after);

// Spearman rank correlation with average ranks for ties; nullopt when either
// side has zero rank variance.
std::optional<double> spearman(const std::vector<double>& xs, const std::vector<double>& ys);

struct EvalResult {
  double hit_rate = 0.0;   // mean over evaluated instances
  double ndcg = 0.0;
  std::size_t evaluated = 0;
  std::size_t skipped = 0;
  std::vector<ScoredList> lists;          // one per evaluated instance
  std::vector<int> evaluated_users;       // parallel to lists
};

// Scores every instance (optionally shuffling inputs first with the given
// seed) and averages HR@k / NDCG@k over instances the model could score.
EvalResult evaluate_split(const TrainedModel& model, const std::vector<EvalInstance>& instances,
                          int k, std::optional<std::uint64_t> shuffle_seed = std::nullopt);

// Average ranks, 1 = smallest value; nullopt (undefined) values rank last,
// sharing the mean of the positions they occupy.
std::vector<double> rank_values(const std::vector<std::optional<double>>& values);

// One dataset's diagnostic values, all oriented so that smaller = stronger
// sequential structure.
struct DatasetDiagnostics {
  std::string name;
  std::vector<std::pair<std::string, std::optional<double>>> metrics;
};

struct RankMatrix {
  std::vector<std::string> metric_names;
  std::vector<std::string> dataset_names;        // in overall order, rank 1 first
  std::vector<std::vector<double>> ranks;        // [dataset][metric]
  std::vector<double> overall;                   // mean of the ordering metrics' ranks
};

// Per-metric ranks plus an overall ordering by the mean rank of the metrics
// named in ordering_metrics (the two models' NDCG relative changes).
RankMatrix rank_datasets(const std::vector<DatasetDiagnostics>& rows,
                         const std::vector<std::string>& ordering_metrics);

}  // namespace seqcheck
