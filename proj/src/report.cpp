#include "seqcheck/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "seqcheck/common.hpp"
#include "seqcheck/split.hpp"

namespace seqcheck {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void check_keys(const json& obj, const char* where,
                std::initializer_list<const char*> allowed) {
  for (const auto& [key, value] : obj.items()) {
    if (std::find_if(allowed.begin(), allowed.end(),
                     [&](const char* a) { return key == a; }) == allowed.end())
      throw ConfigError(std::string("config: unknown key '") + key + "' in " + where);
  }
}

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path);
  return json::parse(in);
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot open output file: " + path);
  out << text;
  if (!out) throw DataError("write failed: " + path);
}

void write_json_file(const std::string& path, const json& j) {
  write_text_file(path, j.dump(2) + "\n");
}

double mean_of(const std::vector<double>& xs) {
  double s = 0.0;
  for (double x : xs) s += x;
  return xs.empty() ? 0.0 : s / static_cast<double>(xs.size());
}

double sample_std(const std::vector<double>& xs) {
  if (xs.size() < 2) return 0.0;
  const double m = mean_of(xs);
  double s = 0.0;
  for (double x : xs) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(xs.size() - 1));
}

std::string fmt(double v, int precision = 4) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", precision, v);
  return buf;
}

std::string fmt_pct(const std::optional<double>& rel) {
  if (!rel) return "undef";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%+.0f%%", *rel * 100.0);
  return buf;
}

}  // namespace

const char* verdict_name(Verdict verdict) {
  switch (verdict) {
    case Verdict::weak: return "weak";
    case Verdict::strong: return "strong";
    default: return "inconclusive";
  }
}

// ---------------------------------------------------------------------------
// Config
// ---------------------------------------------------------------------------

void RunConfig::validate() const {
  if (datasets.empty()) throw ConfigError("config: at least one dataset required");
  if (seeds.empty()) throw ConfigError("config: at least one seed required");
  if (!(q > 0.0 && q < 1.0)) throw ConfigError("config: q must be in (0,1)");
  if (!(val_user_fraction >= 0.0 && val_user_fraction < 1.0))
    throw ConfigError("config: val_user_fraction must be in [0,1)");
  if (k < 1) throw ConfigError("config: k must be >= 1");
  if (min_support < 1 || min_confidence <= 0.0)
    throw ConfigError("config: rule thresholds must be positive");
  for (int order : rule_orders)
    if (order != 2 && order != 3) throw ConfigError("config: rule orders must be 2 or 3");
  if (architectures.empty()) throw ConfigError("config: at least one architecture required");
  model_defaults.validate();
  for (const DatasetConfig& ds : datasets) {
    if (ds.name.empty()) throw ConfigError("config: dataset name must be non-empty");
    if (!fs::exists(ds.path))
      throw ConfigError("config: dataset path does not exist: " + ds.path);
  }
}

RunConfig RunConfig::from_json_file(const std::string& path) {
  const json j = read_json_file(path);
  check_keys(j, "top level",
             {"version", "output_dir", "protocol", "rules", "models", "metrics", "datasets"});
  if (j.value("version", 0) != 1)
    throw ConfigError("config: unsupported or missing version (expected 1)");

  RunConfig cfg;
  cfg.output_dir = j.value("output_dir", cfg.output_dir);
  if (const char* root = std::getenv("SEQCHECK_OUTPUT_ROOT");
      root && *root && fs::path(cfg.output_dir).is_relative())
    cfg.output_dir = (fs::path(root) / cfg.output_dir).string();

  if (j.contains("protocol")) {
    const json& p = j.at("protocol");
    check_keys(p, "protocol", {"q", "val_user_fraction", "split_seed", "seeds"});
    cfg.q = p.value("q", cfg.q);
    cfg.val_user_fraction = p.value("val_user_fraction", cfg.val_user_fraction);
    cfg.split_seed = p.value("split_seed", cfg.split_seed);
    if (p.contains("seeds")) cfg.seeds = p.at("seeds").get<std::vector<std::uint64_t>>();
  }
  if (j.contains("rules")) {
    const json& r = j.at("rules");
    check_keys(r, "rules", {"orders", "min_support", "min_confidence"});
    if (r.contains("orders")) cfg.rule_orders = r.at("orders").get<std::vector<int>>();
    cfg.min_support = r.value("min_support", cfg.min_support);
    cfg.min_confidence = r.value("min_confidence", cfg.min_confidence);
  }
  if (j.contains("models")) {
    const json& m = j.at("models");
    check_keys(m, "models",
               {"architectures", "hidden", "blocks", "heads", "max_len", "batch", "lr",
                "dropout", "grad_clip", "patience", "max_epochs"});
    if (m.contains("architectures")) {
      cfg.architectures.clear();
      for (const auto& a : m.at("architectures"))
        cfg.architectures.push_back(architecture_from_name(a.get<std::string>()));
    }
    ModelHParams& hp = cfg.model_defaults;
    hp.hidden = m.value("hidden", hp.hidden);
    hp.blocks = m.value("blocks", hp.blocks);
    hp.heads = m.value("heads", hp.heads);
    hp.max_len = m.value("max_len", hp.max_len);
    hp.batch = m.value("batch", hp.batch);
    hp.lr = m.value("lr", hp.lr);
    hp.dropout = m.value("dropout", hp.dropout);
    hp.grad_clip = m.value("grad_clip", hp.grad_clip);
    hp.patience = m.value("patience", hp.patience);
    hp.max_epochs = m.value("max_epochs", hp.max_epochs);
  }
  if (j.contains("metrics")) {
    const json& m = j.at("metrics");
    check_keys(m, "metrics",
               {"k", "accuracy_weak", "jaccard_weak", "rules_weak", "accuracy_strong"});
    cfg.k = m.value("k", cfg.k);
    cfg.thresholds.accuracy_weak = m.value("accuracy_weak", cfg.thresholds.accuracy_weak);
    cfg.thresholds.jaccard_weak = m.value("jaccard_weak", cfg.thresholds.jaccard_weak);
    cfg.thresholds.rules_weak = m.value("rules_weak", cfg.thresholds.rules_weak);
    cfg.thresholds.accuracy_strong =
        m.value("accuracy_strong", cfg.thresholds.accuracy_strong);
  }
  if (!j.contains("datasets")) throw ConfigError("config: missing 'datasets'");
  for (const json& d : j.at("datasets")) {
    check_keys(d, "datasets[]",
               {"name", "path", "delimiter", "has_header", "user_col", "item_col", "time_col",
                "event_col", "event_filter", "k_core", "min_interactions", "fail_fast"});
    DatasetConfig ds;
    ds.name = d.value("name", "");
    ds.path = d.value("path", "");
    const std::string delim = d.value("delimiter", ",");
    if (delim.size() != 1 && delim != "\\t")
      throw ConfigError("config: delimiter must be a single character");
    ds.schema.delimiter = delim == "\\t" ? '\t' : delim[0];
    ds.schema.has_header = d.value("has_header", false);
    ds.schema.user_col = d.value("user_col", ds.schema.user_col);
    ds.schema.item_col = d.value("item_col", ds.schema.item_col);
    ds.schema.time_col = d.value("time_col", ds.schema.time_col);
    ds.schema.event_col = d.value("event_col", "");
    ds.schema.fail_fast = d.value("fail_fast", true);
    ds.event_filter = d.value("event_filter", "");
    ds.k_core = d.value("k_core", 5);
    ds.min_interactions = d.value("min_interactions", 0);
    cfg.datasets.push_back(std::move(ds));
  }
  cfg.validate();
  return cfg;
}

// ---------------------------------------------------------------------------
// Classification
// ---------------------------------------------------------------------------

Verdict classify(const DatasetResult& row, const ClassifyThresholds& thresholds,
                 std::string* reason) {
  auto note = [&](const std::string& text) {
    if (reason) *reason = text;
  };
  if (row.models.empty()) {
    note("no model diagnostics");
    return Verdict::inconclusive;
  }
  bool any_small_drop = false, all_large_drop = true;
  for (const ModelAggregate& m : row.models) {
    if (!m.ndcg_rel) {
      note("missing NDCG relative change for model " + m.arch);
      return Verdict::inconclusive;
    }
    if (*m.ndcg_rel > thresholds.accuracy_weak) any_small_drop = true;
    if (*m.ndcg_rel > thresholds.accuracy_strong) all_large_drop = false;
  }
  if (any_small_drop) {
    bool confirmed = false;
    std::string by;
    for (const ModelAggregate& m : row.models) {
      if (m.jaccard > thresholds.jaccard_weak) {
        confirmed = true;
        by = "jaccard(" + m.arch + ")";
        break;
      }
    }
    if (!confirmed) {
      for (std::size_t i = 0; i < row.rules.size(); ++i) {
        if (row.rules[i].order == 2 && row.rules[i].relative_change_defined &&
            row.rules[i].relative_change > thresholds.rules_weak) {
          confirmed = true;
          by = "2-gram rule change";
          break;
        }
      }
    }
    if (confirmed) {
      note("small accuracy drop confirmed by " + by);
      return Verdict::weak;
    }
  }
  if (all_large_drop) {
    note("large accuracy drop for every model");
    return Verdict::strong;
  }
  note("between the weak and strong bands");
  return Verdict::inconclusive;
}

// ---------------------------------------------------------------------------
// Pipeline stages
// ---------------------------------------------------------------------------

namespace {

json rule_stats_to_json(const RuleStats& rs) {
  json j{{"order", rs.order},
         {"min_support", rs.min_support},
         {"min_confidence", rs.min_confidence},
         {"rules_before", rs.rules_before},
         {"per_seed_after", rs.per_seed_after},
         {"rules_after_mean", rs.rules_after_mean}};
  if (rs.relative_change_defined)
    j["relative_change"] = rs.relative_change;
  else
    j["relative_change"] = nullptr;
  return j;
}

RuleStats rule_stats_from_json(const json& j) {
  RuleStats rs;
  rs.order = j.at("order").get<int>();
  rs.min_support = j.at("min_support").get<int>();
  rs.min_confidence = j.at("min_confidence").get<double>();
  rs.rules_before = j.at("rules_before").get<std::int64_t>();
  rs.per_seed_after = j.at("per_seed_after").get<std::vector<std::int64_t>>();
  rs.rules_after_mean = j.at("rules_after_mean").get<double>();
  rs.relative_change_defined = !j.at("relative_change").is_null();
  if (rs.relative_change_defined) rs.relative_change = j.at("relative_change").get<double>();
  return rs;
}

struct SeedEval {
  double hr_before = 0, hr_after = 0, ndcg_before = 0, ndcg_after = 0, jaccard = 0;
  std::size_t evaluated = 0, skipped = 0;
};

json seed_eval_to_json(const SeedEval& e) {
  return json{{"hr_before", e.hr_before},     {"hr_after", e.hr_after},
              {"ndcg_before", e.ndcg_before}, {"ndcg_after", e.ndcg_after},
              {"jaccard", e.jaccard},         {"evaluated", e.evaluated},
              {"skipped", e.skipped}};
}

SeedEval seed_eval_from_json(const json& j) {
  SeedEval e;
  e.hr_before = j.at("hr_before").get<double>();
  e.hr_after = j.at("hr_after").get<double>();
  e.ndcg_before = j.at("ndcg_before").get<double>();
  e.ndcg_after = j.at("ndcg_after").get<double>();
  e.jaccard = j.at("jaccard").get<double>();
  e.evaluated = j.at("evaluated").get<std::size_t>();
  e.skipped = j.at("skipped").get<std::size_t>();
  return e;
}

InteractionLog preprocess_dataset(const DatasetConfig& ds) {
  ParseReport preport;
  InteractionLog log = parse_interactions_file(ds.path, ds.schema, &preport);
  if (!ds.event_filter.empty()) log = filter_event_type(log, ds.event_filter, &preport);
  if (ds.min_interactions > 0)
    log = min_interactions_filter(log, ds.min_interactions);
  else if (ds.k_core > 0)
    log = k_core_filter(log, ds.k_core);
  return dedup_consecutive(log);
}

json stats_to_json(const DatasetStats& s, const DatasetConfig& ds) {
  return json{{"n_users", s.n_users},
              {"n_items", s.n_items},
              {"n_interactions", s.n_interactions},
              {"avg_length", s.avg_length},
              {"density", s.density},
              {"pipeline", ds.min_interactions > 0
                               ? "event_filter -> min_interactions -> sort -> dedup"
                               : "event_filter -> k_core -> sort -> dedup"}};
}

DatasetStats stats_from_json(const json& j) {
  DatasetStats s;
  s.n_users = j.at("n_users").get<std::size_t>();
  s.n_items = j.at("n_items").get<std::size_t>();
  s.n_interactions = j.at("n_interactions").get<std::size_t>();
  s.avg_length = j.at("avg_length").get<double>();
  s.density = j.at("density").get<double>();
  return s;
}

SeedEval evaluate_model_seed(const TrainedModel& model, const SplitBundle& split, int k,
                             std::uint64_t seed) {
  const EvalResult before = evaluate_split(model, split.test_instances, k);
  const EvalResult after = evaluate_split(model, split.test_instances, k, seed);
  SeedEval e;
  e.hr_before = before.hit_rate;
  e.hr_after = after.hit_rate;
  e.ndcg_before = before.ndcg;
  e.ndcg_after = after.ndcg;
  e.evaluated = before.evaluated;
  e.skipped = before.skipped;
  // Shuffling preserves the input multiset, so the two runs evaluate the same
  // instances in the same order.
  if (before.lists.size() != after.lists.size())
    throw DataError("evaluate: original and shuffled runs evaluated different instances");
  double jsum = 0.0;
  for (std::size_t i = 0; i < before.lists.size(); ++i)
    jsum += jaccard_at_k(before.lists[i], after.lists[i], k);
  e.jaccard = before.lists.empty() ? 0.0 : jsum / static_cast<double>(before.lists.size());
  return e;
}

ModelAggregate aggregate_model(const std::string& arch, const std::vector<SeedEval>& evals,
                               const ClassifyThresholds& thresholds) {
  ModelAggregate agg;
  agg.arch = arch;
  for (const SeedEval& e : evals) {
    agg.hr_before_seeds.push_back(e.hr_before);
    agg.hr_after_seeds.push_back(e.hr_after);
    agg.ndcg_before_seeds.push_back(e.ndcg_before);
    agg.ndcg_after_seeds.push_back(e.ndcg_after);
    agg.jaccard_seeds.push_back(e.jaccard);
    agg.skipped = std::max(agg.skipped, e.skipped);
  }
  agg.hr_before = mean_of(agg.hr_before_seeds);
  agg.hr_after = mean_of(agg.hr_after_seeds);
  agg.ndcg_before = mean_of(agg.ndcg_before_seeds);
  agg.ndcg_after = mean_of(agg.ndcg_after_seeds);
  agg.jaccard = mean_of(agg.jaccard_seeds);
  agg.hr_std_before = sample_std(agg.hr_before_seeds);
  agg.hr_std_after = sample_std(agg.hr_after_seeds);
  agg.ndcg_std_before = sample_std(agg.ndcg_before_seeds);
  agg.ndcg_std_after = sample_std(agg.ndcg_after_seeds);
  agg.jaccard_std = sample_std(agg.jaccard_seeds);
  agg.hr_rel = relative_change(agg.hr_before, agg.hr_after);
  agg.ndcg_rel = relative_change(agg.ndcg_before, agg.ndcg_after);
  agg.weak_accuracy = agg.ndcg_rel && *agg.ndcg_rel > thresholds.accuracy_weak;
  agg.weak_jaccard = agg.jaccard > thresholds.jaccard_weak;
  return agg;
}

DatasetResult analyze_dataset(const RunConfig& cfg, const DatasetConfig& ds) {
  DatasetResult result;
  result.name = ds.name;
  const fs::path dir = fs::path(cfg.output_dir) / ds.name;
  fs::create_directories(dir);

  // Stage 1: preprocess.
  const std::string preproc_path = (dir / "preprocessed.tsv").string();
  const std::string stats_path = (dir / "stats.json").string();
  InteractionLog log;
  if (fs::exists(preproc_path) && fs::exists(stats_path)) {
    log = load_canonical(preproc_path);
    result.stats = stats_from_json(read_json_file(stats_path));
  } else {
    log = preprocess_dataset(ds);
    save_canonical(log, preproc_path);
    // Reload so that resumed and fresh runs see identical index assignment.
    log = load_canonical(preproc_path);
    result.stats = compute_stats(log);
    write_json_file(stats_path, stats_to_json(result.stats, ds));
  }
  if (log.interactions.empty()) throw DataError("preprocessing left an empty log");

  // Stage 2: rules (both orders, all seeds).
  for (int order : cfg.rule_orders) {
    const std::string path = (dir / ("rules_" + std::to_string(order) + ".json")).string();
    RuleStats rs;
    if (fs::exists(path)) {
      rs = rule_stats_from_json(read_json_file(path));
    } else {
      rs = rule_shuffle_delta(log, order, cfg.min_support, cfg.min_confidence, cfg.seeds);
      write_json_file(path, rule_stats_to_json(rs));
    }
    result.rules_weak.push_back(rs.relative_change_defined &&
                                rs.relative_change > cfg.thresholds.rules_weak);
    result.rules.push_back(std::move(rs));
  }

  // Stage 3: split.
  const std::string split_dir = (dir / "split").string();
  SplitBundle split;
  if (fs::exists(split_dir + "/manifest.json")) {
    split = load_split(split_dir);
  } else {
    split = build_split(log, cfg.q, cfg.val_user_fraction, cfg.split_seed);
    save_split(split, split_dir);
  }
  split.n_items = log.n_items();
  result.dropped_unseen_test_targets = split.dropped_unseen_test_targets;

  // Stage 4: train and evaluate, per architecture and seed.
  for (Architecture arch : cfg.architectures) {
    const std::string arch_name = architecture_name(arch);
    std::vector<SeedEval> evals;
    for (std::uint64_t seed : cfg.seeds) {
      const std::string tag = std::string(arch_name) + "_s" + std::to_string(seed);
      const std::string eval_path = (dir / ("eval_" + tag + ".json")).string();
      if (fs::exists(eval_path)) {
        evals.push_back(seed_eval_from_json(read_json_file(eval_path)));
        continue;
      }
      const std::string ckpt_path = (dir / ("model_" + tag + ".ckpt")).string();
      TrainedModel model;
      if (fs::exists(ckpt_path)) {
        model = load_checkpoint(ckpt_path);
      } else {
        ModelHParams hp = cfg.model_defaults;
        hp.arch = arch;
        hp.seed = seed;
        model = build_model(hp, static_cast<int>(log.n_items()) + 1);
        train_model(model, split);
        save_checkpoint(model, ckpt_path);
      }
      const SeedEval e = evaluate_model_seed(model, split, cfg.k, seed);
      write_json_file(eval_path, seed_eval_to_json(e));
      evals.push_back(seed_eval_from_json(read_json_file(eval_path)));
    }
    result.models.push_back(aggregate_model(arch_name, evals, cfg.thresholds));
  }

  result.verdict = classify(result, cfg.thresholds, &result.verdict_reason);
  return result;
}

// Diagnostic columns, all oriented so that smaller = stronger structure.
DatasetDiagnostics diagnostics_row(const DatasetResult& r) {
  DatasetDiagnostics row;
  row.name = r.name;
  for (const ModelAggregate& m : r.models) {
    row.metrics.emplace_back("hr_rel_" + m.arch, m.hr_rel);
    row.metrics.emplace_back("ndcg_rel_" + m.arch, m.ndcg_rel);
  }
  for (const ModelAggregate& m : r.models)
    row.metrics.emplace_back("jaccard_" + m.arch, std::optional<double>(m.jaccard));
  for (const RuleStats& rs : r.rules)
    row.metrics.emplace_back(
        "rules_rel_" + std::to_string(rs.order),
        rs.relative_change_defined ? std::optional<double>(rs.relative_change) : std::nullopt);
  return row;
}

void fill_cross_dataset(SequentialityReport& report) {
  std::vector<DatasetDiagnostics> rows;
  for (const DatasetResult& r : report.datasets)
    if (!r.failed) rows.push_back(diagnostics_row(r));
  if (rows.empty()) return;

  for (const auto& [name, value] : rows[0].metrics) report.corr_metrics.push_back(name);
  const std::size_t n_metrics = report.corr_metrics.size();
  report.corr.assign(n_metrics, std::vector<std::optional<double>>(n_metrics, std::nullopt));
  for (std::size_t a = 0; a < n_metrics; ++a) {
    for (std::size_t b = 0; b < n_metrics; ++b) {
      std::vector<double> xs, ys;
      for (const auto& row : rows) {
        const auto& va = row.metrics[a].second;
        const auto& vb = row.metrics[b].second;
        if (va && vb) {
          xs.push_back(*va);
          ys.push_back(*vb);
        }
      }
      if (xs.size() >= 2) report.corr[a][b] = spearman(xs, ys);
    }
  }

  if (rows.size() >= 2) {
    std::vector<std::string> ordering;
    for (const ModelAggregate& m : report.datasets.front().models)
      ordering.push_back("ndcg_rel_" + m.arch);
    // Ordering metrics come from the first successful dataset's model list.
    for (const DatasetResult& r : report.datasets) {
      if (!r.failed) {
        ordering.clear();
        for (const ModelAggregate& m : r.models) ordering.push_back("ndcg_rel_" + m.arch);
        break;
      }
    }
    report.ranks = rank_datasets(rows, ordering);
  }
}

}  // namespace

SequentialityReport run_analysis(const RunConfig& config) {
  config.validate();
  fs::create_directories(config.output_dir);
  SequentialityReport report;
  report.config = config;
  for (const DatasetConfig& ds : config.datasets) {
    try {
      report.datasets.push_back(analyze_dataset(config, ds));
    } catch (const std::exception& e) {
      DatasetResult failed;
      failed.name = ds.name;
      failed.failed = true;
      failed.error = e.what();
      report.datasets.push_back(std::move(failed));
    }
  }
  fill_cross_dataset(report);
  return report;
}

// ---------------------------------------------------------------------------
// Emission
// ---------------------------------------------------------------------------

namespace {

json opt_to_json(const std::optional<double>& v) {
  return v ? json(*v) : json(nullptr);
}

json model_agg_to_json(const ModelAggregate& m) {
  return json{{"arch", m.arch},
              {"hr_before", m.hr_before},
              {"hr_after", m.hr_after},
              {"hr_std_before", m.hr_std_before},
              {"hr_std_after", m.hr_std_after},
              {"hr_rel", opt_to_json(m.hr_rel)},
              {"ndcg_before", m.ndcg_before},
              {"ndcg_after", m.ndcg_after},
              {"ndcg_std_before", m.ndcg_std_before},
              {"ndcg_std_after", m.ndcg_std_after},
              {"ndcg_rel", opt_to_json(m.ndcg_rel)},
              {"jaccard", m.jaccard},
              {"jaccard_std", m.jaccard_std},
              {"skipped", m.skipped},
              {"weak_accuracy", m.weak_accuracy},
              {"weak_jaccard", m.weak_jaccard},
              {"per_seed",
               {{"hr_before", m.hr_before_seeds},
                {"hr_after", m.hr_after_seeds},
                {"ndcg_before", m.ndcg_before_seeds},
                {"ndcg_after", m.ndcg_after_seeds},
                {"jaccard", m.jaccard_seeds}}}};
}

json config_to_json(const RunConfig& cfg) {
  json datasets = json::array();
  for (const DatasetConfig& ds : cfg.datasets)
    datasets.push_back({{"name", ds.name},
                        {"path", ds.path},
                        {"event_filter", ds.event_filter},
                        {"k_core", ds.k_core},
                        {"min_interactions", ds.min_interactions}});
  std::vector<std::string> archs;
  for (Architecture a : cfg.architectures) archs.push_back(architecture_name(a));
  return json{
      {"output_dir", cfg.output_dir},
      {"protocol",
       {{"q", cfg.q},
        {"val_user_fraction", cfg.val_user_fraction},
        {"split_seed", cfg.split_seed},
        {"seeds", cfg.seeds}}},
      {"rules",
       {{"orders", cfg.rule_orders},
        {"min_support", cfg.min_support},
        {"min_confidence", cfg.min_confidence}}},
      {"models",
       {{"architectures", archs},
        {"hidden", cfg.model_defaults.hidden},
        {"blocks", cfg.model_defaults.blocks},
        {"heads", cfg.model_defaults.heads},
        {"max_len", cfg.model_defaults.max_len},
        {"batch", cfg.model_defaults.batch},
        {"lr", cfg.model_defaults.lr},
        {"dropout", cfg.model_defaults.dropout},
        {"grad_clip", cfg.model_defaults.grad_clip},
        {"patience", cfg.model_defaults.patience},
        {"max_epochs", cfg.model_defaults.max_epochs}}},
      {"metrics",
       {{"k", cfg.k},
        {"accuracy_weak", cfg.thresholds.accuracy_weak},
        {"jaccard_weak", cfg.thresholds.jaccard_weak},
        {"rules_weak", cfg.thresholds.rules_weak},
        {"accuracy_strong", cfg.thresholds.accuracy_strong}}},
      {"datasets", datasets}};
}

json report_to_json(const SequentialityReport& report) {
  json j;
  j["format"] = "seqcheck-report-v1";
  j["verdict_rule"] =
      "weak iff NDCG relative change exceeds accuracy_weak for at least one model and a "
      "second diagnostic confirms (Jaccard above jaccard_weak or 2-gram rule change above "
      "rules_weak); strong iff NDCG change is at or below accuracy_strong for every model; "
      "otherwise inconclusive";
  j["config"] = config_to_json(report.config);
  json datasets = json::array();
  for (const DatasetResult& r : report.datasets) {
    json d;
    d["name"] = r.name;
    d["failed"] = r.failed;
    if (r.failed) {
      d["error"] = r.error;
      datasets.push_back(std::move(d));
      continue;
    }
    d["stats"] = {{"n_users", r.stats.n_users},
                  {"n_items", r.stats.n_items},
                  {"n_interactions", r.stats.n_interactions},
                  {"avg_length", r.stats.avg_length},
                  {"density", r.stats.density}};
    json rules = json::array();
    for (std::size_t i = 0; i < r.rules.size(); ++i) {
      json rj = rule_stats_to_json(r.rules[i]);
      rj["weak_flag"] = static_cast<bool>(r.rules_weak[i]);
      rules.push_back(std::move(rj));
    }
    d["rules"] = std::move(rules);
    json models = json::array();
    for (const ModelAggregate& m : r.models) models.push_back(model_agg_to_json(m));
    d["models"] = std::move(models);
    d["dropped_unseen_test_targets"] = r.dropped_unseen_test_targets;
    d["verdict"] = verdict_name(r.verdict);
    d["verdict_reason"] = r.verdict_reason;
    datasets.push_back(std::move(d));
  }
  j["datasets"] = std::move(datasets);
  if (report.ranks) {
    json ranks;
    ranks["metrics"] = report.ranks->metric_names;
    ranks["datasets"] = report.ranks->dataset_names;
    ranks["ranks"] = report.ranks->ranks;
    ranks["overall"] = report.ranks->overall;
    j["ranks"] = std::move(ranks);
  } else {
    j["ranks"] = nullptr;
  }
  json corr;
  corr["metrics"] = report.corr_metrics;
  json matrix = json::array();
  for (const auto& row : report.corr) {
    json jrow = json::array();
    for (const auto& v : row) jrow.push_back(opt_to_json(v));
    matrix.push_back(std::move(jrow));
  }
  corr["spearman"] = std::move(matrix);
  j["correlations"] = std::move(corr);
  return j;
}

std::string render_text_report(const SequentialityReport& report) {
  std::ostringstream os;
  os << "Sequential-structure diagnostic report\n";
  os << "Verdict rule: weak iff NDCG relative change > "
     << fmt(report.config.thresholds.accuracy_weak * 100, 0)
     << "% for >=1 model AND (Jaccard@" << report.config.k << " > "
     << fmt(report.config.thresholds.jaccard_weak, 4) << " OR 2-gram rule change > "
     << fmt(report.config.thresholds.rules_weak * 100, 0) << "%); strong iff NDCG change <= "
     << fmt(report.config.thresholds.accuracy_strong * 100, 0) << "% for all models.\n\n";

  os << "== Dataset statistics ==\n";
  os << "dataset\tusers\titems\tinteractions\tavg_len\tdensity\n";
  for (const DatasetResult& r : report.datasets) {
    if (r.failed) {
      os << r.name << "\tFAILED: " << r.error << '\n';
      continue;
    }
    os << r.name << '\t' << r.stats.n_users << '\t' << r.stats.n_items << '\t'
       << r.stats.n_interactions << '\t' << fmt(r.stats.avg_length, 1) << '\t'
       << fmt(r.stats.density * 100, 4) << "%\n";
  }

  os << "\n== Model-based diagnostics (means over seeds) ==\n";
  os << "dataset\tmodel\thr_before\thr_after\thr_rel\tndcg_before\tndcg_after\tndcg_rel"
     << "\tjaccard@" << report.config.k << "\tverdict\n";
  for (const DatasetResult& r : report.datasets) {
    if (r.failed) continue;
    for (const ModelAggregate& m : r.models) {
      os << r.name << '\t' << m.arch << '\t' << fmt(m.hr_before) << '\t' << fmt(m.hr_after)
         << '\t' << fmt_pct(m.hr_rel) << '\t' << fmt(m.ndcg_before) << '\t'
         << fmt(m.ndcg_after) << '\t' << fmt_pct(m.ndcg_rel) << '\t' << fmt(m.jaccard, 2)
         << '\t' << verdict_name(r.verdict) << '\n';
    }
  }

  os << "\n== Sequential rules ==\n";
  os << "dataset\torder\tbefore\tafter_mean\trelative_change\tweak_flag\n";
  for (const DatasetResult& r : report.datasets) {
    if (r.failed) continue;
    for (std::size_t i = 0; i < r.rules.size(); ++i) {
      const RuleStats& rs = r.rules[i];
      os << r.name << '\t' << rs.order << '\t' << rs.rules_before << '\t'
         << fmt(rs.rules_after_mean, 1) << '\t'
         << fmt_pct(rs.relative_change_defined ? std::optional<double>(rs.relative_change)
                                               : std::nullopt)
         << '\t' << (r.rules_weak[i] ? "weak" : "-") << '\n';
    }
  }

  if (report.ranks) {
    os << "\n== Dataset ranks (1 = strongest sequential structure) ==\n";
    os << "dataset";
    for (const std::string& m : report.ranks->metric_names) os << '\t' << m;
    os << "\toverall\n";
    for (std::size_t d = 0; d < report.ranks->dataset_names.size(); ++d) {
      os << report.ranks->dataset_names[d];
      for (double rank : report.ranks->ranks[d]) os << '\t' << fmt(rank, 1);
      os << '\t' << fmt(report.ranks->overall[d], 2) << '\n';
    }
  }
  return os.str();
}

}  // namespace

void emit_report(const SequentialityReport& report, const std::string& dir) {
  fs::create_directories(dir);
  write_json_file(dir + "/report.json", report_to_json(report));
  write_text_file(dir + "/report.txt", render_text_report(report));

  std::ostringstream ranks;
  if (report.ranks) {
    ranks << "dataset";
    for (const std::string& m : report.ranks->metric_names) ranks << '\t' << m;
    ranks << "\toverall\n";
    for (std::size_t d = 0; d < report.ranks->dataset_names.size(); ++d) {
      ranks << report.ranks->dataset_names[d];
      for (double rank : report.ranks->ranks[d]) ranks << '\t' << rank;
      ranks << '\t' << report.ranks->overall[d] << '\n';
    }
  }
  write_text_file(dir + "/ranks.tsv", ranks.str());

  std::ostringstream corr;
  corr << "metric";
  for (const std::string& m : report.corr_metrics) corr << '\t' << m;
  corr << '\n';
  for (std::size_t a = 0; a < report.corr_metrics.size(); ++a) {
    corr << report.corr_metrics[a];
    for (std::size_t b = 0; b < report.corr_metrics.size(); ++b) {
      corr << '\t';
      if (report.corr[a][b])
        corr << *report.corr[a][b];
      else
        corr << "nan";
    }
    corr << '\n';
  }
  write_text_file(dir + "/spearman.tsv", corr.str());
}

bool verify_report(const RunConfig& config, std::vector<std::string>& problems) {
  const std::string report_path = config.output_dir + "/report.json";
  if (!fs::exists(report_path)) {
    problems.push_back("missing " + report_path + " (run analyze first)");
    return false;
  }
  const json persisted = read_json_file(report_path);
  // Re-derive every aggregate from the persisted per-seed artifacts; with all
  // artifacts present no training or mining reruns.
  const SequentialityReport rederived = run_analysis(config);
  const json fresh = report_to_json(rederived);
  if (persisted == fresh) return true;
  for (const auto& [key, value] : fresh.items()) {
    if (!persisted.contains(key))
      problems.push_back("report.json missing section '" + key + "'");
    else if (persisted.at(key) != value)
      problems.push_back("section '" + key + "' does not match re-derived values");
  }
  if (problems.empty()) problems.push_back("report.json has extra sections");
  return false;
}

}  // namespace seqcheck
