#pragma once

#include <optional>
#include <string>
#include <vector>

#include "seqcheck/interactions.hpp"
#include "seqcheck/metrics.hpp"
#include "seqcheck/models.hpp"
#include "seqcheck/rules.hpp"

namespace seqcheck {

struct DatasetConfig {
  std::string name;
  std::string path;
  ParseSchema schema;
  std::string event_filter;   // keep only this event type; empty = none
  int k_core = 5;             // 0 disables
  int min_interactions = 0;   // alternative preprocessing mode; 0 disables
};

struct ClassifyThresholds {
  double accuracy_weak = -0.10;   // relative NDCG change above this = small drop
  double jaccard_weak = 1.0 / 3.0;
  double rules_weak = -0.90;
  double accuracy_strong = -0.30;
};

struct RunConfig {
  std::vector<DatasetConfig> datasets;
  // Protocol.
  double q = 0.9;
  double val_user_fraction = 0.1;
  std::uint64_t split_seed = 42;
  std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
  // Rules.
  std::vector<int> rule_orders = {2, 3};
  int min_support = 5;
  double min_confidence = 0.1;
  // Models.
  std::vector<Architecture> architectures = {Architecture::attention,
                                             Architecture::recurrent};
  ModelHParams model_defaults;  // arch and seed overridden per run
  // Metrics.
  int k = 10;
  ClassifyThresholds thresholds;
  std::string output_dir = "out";

  // Parses and schema-checks a versioned JSON config (version 1; unknown
  // keys rejected). Honors the SEQCHECK_OUTPUT_ROOT environment variable as
  // a prefix for relative output_dir values.
  static RunConfig from_json_file(const std::string& path);
  void validate() const;
};

enum class Verdict { weak, strong, inconclusive };
const char* verdict_name(Verdict verdict);

// Per-(dataset, model) aggregate over run seeds.
struct ModelAggregate {
  std::string arch;
  std::vector<double> hr_before_seeds, hr_after_seeds;
  std::vector<double> ndcg_before_seeds, ndcg_after_seeds;
  std::vector<double> jaccard_seeds;
  std::size_t skipped = 0;
  double hr_before = 0, hr_after = 0, hr_std_before = 0, hr_std_after = 0;
  double ndcg_before = 0, ndcg_after = 0, ndcg_std_before = 0, ndcg_std_after = 0;
  double jaccard = 0, jaccard_std = 0;
  std::optional<double> hr_rel, ndcg_rel;
  bool weak_accuracy = false;  // ndcg_rel above the weak threshold
  bool weak_jaccard = false;
};

struct DatasetResult {
  std::string name;
  bool failed = false;
  std::string error;
  DatasetStats stats;
  std::vector<RuleStats> rules;       // per configured order
  std::vector<bool> rules_weak;      // parallel to rules
  std::vector<ModelAggregate> models;
  std::size_t dropped_unseen_test_targets = 0;
  Verdict verdict = Verdict::inconclusive;
  std::string verdict_reason;
};

struct SequentialityReport {
  RunConfig config;
  std::vector<DatasetResult> datasets;
  std::optional<RankMatrix> ranks;  // needs >= 2 successful datasets
  // Spearman correlation between diagnostics across datasets; entries are
  // nullopt when undefined (ties everywhere or too few defined pairs).
  std::vector<std::string> corr_metrics;
  std::vector<std::vector<std::optional<double>>> corr;
};

// The codified verdict rule (printed in the report header): weak iff the
// NDCG relative change exceeds accuracy_weak for at least one model AND a
// second diagnostic confirms (any model Jaccard above jaccard_weak, or
// 2-gram rule change above rules_weak); strong iff the NDCG change is at or
// below accuracy_strong for every model; otherwise inconclusive.
Verdict classify(const DatasetResult& row, const ClassifyThresholds& thresholds,
                 std::string* reason = nullptr);

// Full pipeline for every dataset: preprocess -> split -> rules -> train ->
// evaluate original and shuffled -> aggregate. Every stage persists its
// artifact under <output_dir>/<dataset>/ and is skipped when the artifact
// already exists (resumable). A failing dataset is recorded and the others
// proceed.
SequentialityReport run_analysis(const RunConfig& config);

// report.json (machine), report.txt (human tables), ranks.tsv, spearman.tsv.
void emit_report(const SequentialityReport& report, const std::string& dir);

// Re-derives every aggregate from the persisted per-seed artifacts and
// compares against report.json. Appends one message per mismatch.
bool verify_report(const RunConfig& config, std::vector<std::string>& problems);

}  // namespace seqcheck
