#include "seqcheck/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_set>

#include "seqcheck/common.hpp"

namespace seqcheck {

namespace {

// 1-based rank of target within the list, or 0 when absent.
long rank_in_list(const ScoredList& recs, int target, int k) {
  const std::size_t limit = std::min<std::size_t>(recs.items.size(), k);
  for (std::size_t i = 0; i < limit; ++i)
    if (recs.items[i] == target) return static_cast<long>(i) + 1;
  return 0;
}

}  // namespace

int hit_rate_at_k(const ScoredList& recs, int target, int k) {
  if (k < 1) throw ConfigError("hit_rate_at_k: k must be >= 1");
  return rank_in_list(recs, target, k) > 0 ? 1 : 0;
}

double ndcg_at_k(const ScoredList& recs, int target, int k) {
  if (k < 1) throw ConfigError("ndcg_at_k: k must be >= 1");
  const long rank = rank_in_list(recs, target, k);
  if (rank == 0) return 0.0;
  return 1.0 / std::log2(static_cast<double>(rank) + 1.0);
}

double jaccard_at_k(const ScoredList& a, const ScoredList& b, int k) {
  if (k < 1) throw ConfigError("jaccard_at_k: k must be >= 1");
  if (a.items.empty() || b.items.empty())
    throw DataError("jaccard_at_k: empty recommendation list");
  std::unordered_set<int> sa(a.items.begin(),
                             a.items.begin() + std::min<std::size_t>(a.items.size(), k));
  std::unordered_set<int> sb(b.items.begin(),
                             b.items.begin() + std::min<std::size_t>(b.items.size(), k));
  std::size_t inter = 0;
  for (int item : sa) inter += sb.count(item);
  const std::size_t uni = sa.size() + sb.size() - inter;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

std::optional<double> relative_change(double before, double after) {
  if (before == 0.0) return std::nullopt;
  return (after - before) / before;
}

namespace {

std::vector<double> average_ranks(const std::vector<double>& xs) {
  const std::size_t n = xs.size();
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(),
                   [&](std::size_t a, std::size_t b) { return xs[a] < xs[b]; });
  std::vector<double> ranks(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && xs[idx[j + 1]] == xs[idx[i]]) ++j;
    const double shared = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t t = i; t <= j; ++t) ranks[idx[t]] = shared;
    i = j + 1;
  }
  return ranks;
}

}  // namespace

std::optional<double> spearman(const std::vector<double>& xs, const std::vector<double>& ys) {
  if (xs.size() != ys.size() || xs.size() < 2)
    throw ConfigError("spearman: inputs must have equal length >= 2");
  const std::vector<double> rx = average_ranks(xs);
  const std::vector<double> ry = average_ranks(ys);
  const double n = static_cast<double>(xs.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    mx += rx[i];
    my += ry[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return std::nullopt;
  return sxy / std::sqrt(sxx * syy);
}

EvalResult evaluate_split(const TrainedModel& model, const std::vector<EvalInstance>& instances,
                          int k, std::optional<std::uint64_t> shuffle_seed) {
  if (instances.empty()) throw DataError("evaluate_split: no instances");
  EvalResult result;
  double hr_sum = 0.0, ndcg_sum = 0.0;
  for (const EvalInstance& inst : instances) {
    const EvalInstance scored_inst =
        shuffle_seed ? shuffle_instance(inst, *shuffle_seed) : inst;
    auto recs = recommend_top_k(model, scored_inst, k);
    if (!recs) {
      ++result.skipped;
      continue;
    }
    hr_sum += hit_rate_at_k(*recs, inst.target, k);
    ndcg_sum += ndcg_at_k(*recs, inst.target, k);
    result.evaluated_users.push_back(inst.user);
    result.lists.push_back(std::move(*recs));
    ++result.evaluated;
  }
  if (result.evaluated == 0) throw DataError("evaluate_split: every instance was skipped");
  result.hit_rate = hr_sum / static_cast<double>(result.evaluated);
  result.ndcg = ndcg_sum / static_cast<double>(result.evaluated);
  return result;
}

std::vector<double> rank_values(const std::vector<std::optional<double>>& values) {
  // Defined values get average ranks among themselves; undefined values share
  // the mean of the trailing positions.
  std::vector<double> defined;
  for (const auto& v : values)
    if (v) defined.push_back(*v);
  const std::vector<double> defined_ranks = average_ranks(defined);
  const std::size_t n = values.size();
  const std::size_t n_undef = n - defined.size();
  const double undef_rank =
      n_undef == 0 ? 0.0
                   : (static_cast<double>(defined.size()) + 1.0 + static_cast<double>(n)) / 2.0;
  std::vector<double> out(n);
  std::size_t di = 0;
  for (std::size_t i = 0; i < n; ++i)
    out[i] = values[i] ? defined_ranks[di++] : undef_rank;
  return out;
}

RankMatrix rank_datasets(const std::vector<DatasetDiagnostics>& rows,
                         const std::vector<std::string>& ordering_metrics) {
  if (rows.size() < 2) throw ConfigError("rank_datasets: need at least 2 datasets");
  RankMatrix matrix;
  for (const auto& [name, value] : rows[0].metrics) matrix.metric_names.push_back(name);
  for (const auto& row : rows) {
    if (row.metrics.size() != matrix.metric_names.size())
      throw DataError("rank_datasets: inconsistent metric sets across datasets");
  }

  // ranks_by_metric[m][d]
  std::vector<std::vector<double>> ranks_by_metric;
  for (std::size_t m = 0; m < matrix.metric_names.size(); ++m) {
    std::vector<std::optional<double>> column;
    for (const auto& row : rows) column.push_back(row.metrics[m].second);
    ranks_by_metric.push_back(rank_values(column));
  }

  std::vector<double> overall(rows.size(), 0.0);
  for (const std::string& name : ordering_metrics) {
    const auto it = std::find(matrix.metric_names.begin(), matrix.metric_names.end(), name);
    if (it == matrix.metric_names.end())
      throw ConfigError("rank_datasets: unknown ordering metric '" + name + "'");
    const std::size_t m = it - matrix.metric_names.begin();
    for (std::size_t d = 0; d < rows.size(); ++d) overall[d] += ranks_by_metric[m][d];
  }
  for (double& v : overall) v /= static_cast<double>(ordering_metrics.size());

  std::vector<std::size_t> order(rows.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return overall[a] < overall[b]; });
  for (std::size_t d : order) {
    matrix.dataset_names.push_back(rows[d].name);
    matrix.overall.push_back(overall[d]);
    std::vector<double> row_ranks;
    for (std::size_t m = 0; m < matrix.metric_names.size(); ++m)
      row_ranks.push_back(ranks_by_metric[m][d]);
    matrix.ranks.push_back(std::move(row_ranks));
  }
  return matrix;
}

}  // namespace seqcheck
