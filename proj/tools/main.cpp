// Command-line front end for the sequential-structure diagnostic library.

#include <cstdlib>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "seqcheck/common.hpp"
#include "seqcheck/interactions.hpp"
#include "seqcheck/metrics.hpp"
#include "seqcheck/models.hpp"
#include "seqcheck/report.hpp"
#include "seqcheck/rules.hpp"
#include "seqcheck/split.hpp"
#include "seqcheck/synth.hpp"

using nlohmann::json;
using namespace seqcheck;

namespace {

struct SchemaOpts {
  std::string delimiter = "\t";
  bool has_header = false;
  std::string user_col = "0";
  std::string item_col = "1";
  std::string time_col = "2";
  std::string event_col;
  bool lenient = false;

  void attach(CLI::App* cmd) {
    cmd->add_option("--delimiter", delimiter, "field delimiter (single char, or \\t)");
    cmd->add_flag("--header", has_header, "first row is a header");
    cmd->add_option("--user-col", user_col, "user column (name or 0-based index)");
    cmd->add_option("--item-col", item_col, "item column");
    cmd->add_option("--time-col", time_col, "timestamp column");
    cmd->add_option("--event-col", event_col, "event-type column (optional)");
    cmd->add_flag("--lenient", lenient, "skip malformed rows instead of failing");
  }

  ParseSchema schema() const {
    ParseSchema s;
    if (delimiter == "\\t")
      s.delimiter = '\t';
    else if (delimiter.size() == 1)
      s.delimiter = delimiter[0];
    else
      throw ConfigError("delimiter must be a single character");
    s.has_header = has_header;
    s.user_col = user_col;
    s.item_col = item_col;
    s.time_col = time_col;
    s.event_col = event_col;
    s.fail_fast = !lenient;
    return s;
  }
};

std::vector<std::uint64_t> parse_seeds(const std::string& csv) {
  std::vector<std::uint64_t> seeds;
  std::stringstream ss(csv);
  std::string tok;
  while (std::getline(ss, tok, ','))
    if (!tok.empty()) seeds.push_back(std::stoull(tok));
  if (seeds.empty()) throw ConfigError("at least one seed required");
  return seeds;
}

json stats_json(const DatasetStats& s) {
  return json{{"n_users", s.n_users},
              {"n_items", s.n_items},
              {"n_interactions", s.n_interactions},
              {"avg_length", s.avg_length},
              {"density", s.density}};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Shuffle-based sequential-structure diagnostics for interaction logs"};
  app.require_subcommand(1);

  // --- stats ---
  auto* c_stats = app.add_subcommand("stats", "dataset statistics for a log file");
  std::string st_input;
  SchemaOpts st_schema;
  c_stats->add_option("--input", st_input, "log file")->required();
  st_schema.attach(c_stats);

  // --- preprocess ---
  auto* c_prep = app.add_subcommand("preprocess", "filter a raw log into canonical form");
  std::string pp_input, pp_out, pp_event;
  int pp_kcore = 5, pp_min = 0;
  SchemaOpts pp_schema;
  c_prep->add_option("--input", pp_input)->required();
  c_prep->add_option("--out", pp_out, "canonical TSV output")->required();
  c_prep->add_option("--event-filter", pp_event, "keep only this event type");
  c_prep->add_option("--k-core", pp_kcore, "k-core threshold (0 disables)");
  c_prep->add_option("--min-interactions", pp_min,
                     "min user interactions; replaces k-core when > 0");
  pp_schema.attach(c_prep);

  // --- split ---
  auto* c_split = app.add_subcommand("split", "temporal + leave-one-out split");
  std::string sp_input, sp_out;
  double sp_q = 0.9, sp_val = 0.1;
  std::uint64_t sp_seed = 42;
  c_split->add_option("--input", sp_input, "canonical TSV log")->required();
  c_split->add_option("--out", sp_out, "split output directory")->required();
  c_split->add_option("--q", sp_q, "pre-boundary interaction quantile");
  c_split->add_option("--val-fraction", sp_val, "validation user fraction");
  c_split->add_option("--seed", sp_seed, "validation partition seed");

  // --- rules ---
  auto* c_rules = app.add_subcommand("rules", "sequential rule shuffle comparison");
  std::string ru_input, ru_seeds = "1,2,3,4,5";
  int ru_order = 2, ru_minsup = 5;
  double ru_minconf = 0.1;
  c_rules->add_option("--input", ru_input, "canonical TSV log")->required();
  c_rules->add_option("--order", ru_order, "n-gram order (2 or 3)");
  c_rules->add_option("--min-support", ru_minsup);
  c_rules->add_option("--min-confidence", ru_minconf);
  c_rules->add_option("--seeds", ru_seeds, "comma-separated shuffle seeds");

  // --- train ---
  auto* c_train = app.add_subcommand("train", "train a next-item model on a split");
  std::string tr_split, tr_arch = "attention", tr_out;
  std::uint64_t tr_seed = 1;
  ModelHParams tr_hp;
  c_train->add_option("--split", tr_split, "split directory")->required();
  c_train->add_option("--out", tr_out, "checkpoint output path")->required();
  c_train->add_option("--arch", tr_arch, "attention|recurrent");
  c_train->add_option("--seed", tr_seed);
  c_train->add_option("--hidden", tr_hp.hidden);
  c_train->add_option("--blocks", tr_hp.blocks);
  c_train->add_option("--heads", tr_hp.heads);
  c_train->add_option("--max-len", tr_hp.max_len);
  c_train->add_option("--batch", tr_hp.batch);
  c_train->add_option("--lr", tr_hp.lr);
  c_train->add_option("--dropout", tr_hp.dropout);
  c_train->add_option("--grad-clip", tr_hp.grad_clip);
  c_train->add_option("--patience", tr_hp.patience);
  c_train->add_option("--max-epochs", tr_hp.max_epochs);

  // --- evaluate ---
  auto* c_eval = app.add_subcommand("evaluate", "score a checkpoint on a split's test set");
  std::string ev_model, ev_split;
  int ev_k = 10;
  std::optional<std::uint64_t> ev_shuffle;
  c_eval->add_option("--model", ev_model, "checkpoint path")->required();
  c_eval->add_option("--split", ev_split, "split directory")->required();
  c_eval->add_option("--k", ev_k);
  c_eval->add_option("--shuffle-seed", ev_shuffle, "shuffle test inputs with this seed");

  // --- synth ---
  auto* c_synth = app.add_subcommand("synth", "generate a synthetic corpus");
  std::string sy_kind = "markov", sy_out;
  SynthConfig sy_cfg;
  c_synth->add_option("--kind", sy_kind, "markov|exchangeable")->required();
  c_synth->add_option("--out", sy_out, "canonical TSV output")->required();
  c_synth->add_option("--seed", sy_cfg.seed);
  c_synth->add_option("--users", sy_cfg.n_users);
  c_synth->add_option("--items", sy_cfg.n_items);
  c_synth->add_option("--length", sy_cfg.seq_length);
  c_synth->add_option("--dominant-prob", sy_cfg.dominant_prob);
  c_synth->add_option("--personal-items", sy_cfg.personal_items);
  c_synth->add_option("--shared-head", sy_cfg.shared_head);
  c_synth->add_option("--head-prob", sy_cfg.head_prob);

  // --- analyze / report / verify ---
  auto* c_analyze = app.add_subcommand("analyze", "full pipeline for every configured dataset");
  std::string an_config;
  c_analyze->add_option("--config", an_config, "run config JSON")->required();

  auto* c_report = app.add_subcommand("report", "re-emit report files from persisted artifacts");
  std::string rp_config;
  c_report->add_option("--config", rp_config, "run config JSON")->required();

  auto* c_verify = app.add_subcommand("verify",
                                      "re-derive aggregates from artifacts and compare");
  std::string vf_config;
  c_verify->add_option("--config", vf_config, "run config JSON")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*c_stats) {
      ParseReport rep;
      const InteractionLog log = parse_interactions_file(st_input, st_schema.schema(), &rep);
      json out = stats_json(compute_stats(log));
      out["rows_skipped"] = rep.rows_skipped;
      std::cout << out.dump(2) << '\n';
    } else if (*c_prep) {
      ParseReport rep;
      InteractionLog log = parse_interactions_file(pp_input, pp_schema.schema(), &rep);
      if (!pp_event.empty()) log = filter_event_type(log, pp_event, &rep);
      if (pp_min > 0)
        log = min_interactions_filter(log, pp_min);
      else if (pp_kcore > 0)
        log = k_core_filter(log, pp_kcore);
      log = dedup_consecutive(log);
      save_canonical(log, pp_out);
      json out = stats_json(compute_stats(log));
      out["rows_skipped"] = rep.rows_skipped;
      for (const std::string& w : rep.warnings) std::cerr << "warning: " << w << '\n';
      std::cout << out.dump(2) << '\n';
    } else if (*c_split) {
      const InteractionLog log = load_canonical(sp_input);
      const SplitBundle split = build_split(log, sp_q, sp_val, sp_seed);
      save_split(split, sp_out);
      std::cout << json{{"boundary_ts", split.boundary_ts},
                        {"train_users", split.train_users.size()},
                        {"val_instances", split.val_instances.size()},
                        {"test_instances", split.test_instances.size()},
                        {"dropped_short_val_users", split.dropped_short_val_users},
                        {"dropped_empty_test_inputs", split.dropped_empty_test_inputs},
                        {"dropped_unseen_test_targets", split.dropped_unseen_test_targets}}
                       .dump(2)
                << '\n';
    } else if (*c_rules) {
      const InteractionLog log = load_canonical(ru_input);
      const RuleStats rs = rule_shuffle_delta(log, ru_order, ru_minsup, ru_minconf,
                                              parse_seeds(ru_seeds));
      json out{{"order", rs.order},
               {"min_support", rs.min_support},
               {"min_confidence", rs.min_confidence},
               {"rules_before", rs.rules_before},
               {"per_seed_after", rs.per_seed_after},
               {"rules_after_mean", rs.rules_after_mean}};
      out["relative_change"] =
          rs.relative_change_defined ? json(rs.relative_change) : json(nullptr);
      std::cout << out.dump(2) << '\n';
    } else if (*c_train) {
      const SplitBundle split = load_split(tr_split);
      tr_hp.arch = architecture_from_name(tr_arch);
      tr_hp.seed = tr_seed;
      TrainedModel model = build_model(tr_hp, static_cast<int>(split.n_items) + 1);
      train_model(model, split);
      save_checkpoint(model, tr_out);
      std::cout << json{{"epochs", model.history.epoch_loss.size()},
                        {"best_epoch", model.history.best_epoch},
                        {"epoch_loss", model.history.epoch_loss},
                        {"val_ndcg10", model.history.val_ndcg10}}
                       .dump(2)
                << '\n';
    } else if (*c_eval) {
      const TrainedModel model = load_checkpoint(ev_model);
      const SplitBundle split = load_split(ev_split);
      const EvalResult res = evaluate_split(model, split.test_instances, ev_k, ev_shuffle);
      std::cout << json{{"hit_rate", res.hit_rate},
                        {"ndcg", res.ndcg},
                        {"k", ev_k},
                        {"evaluated", res.evaluated},
                        {"skipped", res.skipped}}
                       .dump(2)
                << '\n';
    } else if (*c_synth) {
      InteractionLog log;
      if (sy_kind == "markov")
        log = gen_markov(sy_cfg);
      else if (sy_kind == "exchangeable")
        log = gen_exchangeable(sy_cfg);
      else
        throw ConfigError("synth: kind must be markov or exchangeable");
      save_canonical(log, sy_out);
      std::cout << stats_json(compute_stats(log)).dump(2) << '\n';
    } else if (*c_analyze || *c_report) {
      const RunConfig cfg =
          RunConfig::from_json_file(*c_analyze ? an_config : rp_config);
      const SequentialityReport report = run_analysis(cfg);
      emit_report(report, cfg.output_dir);
      bool any_failed = false;
      for (const DatasetResult& r : report.datasets) {
        if (r.failed) {
          any_failed = true;
          std::cerr << "dataset " << r.name << " failed: " << r.error << '\n';
        } else {
          std::cout << r.name << ": " << verdict_name(r.verdict) << " ("
                    << r.verdict_reason << ")\n";
        }
      }
      std::cout << "report written to " << cfg.output_dir << "/report.{json,txt}\n";
      return any_failed ? 1 : 0;
    } else if (*c_verify) {
      const RunConfig cfg = RunConfig::from_json_file(vf_config);
      std::vector<std::string> problems;
      if (verify_report(cfg, problems)) {
        std::cout << "report matches artifacts\n";
      } else {
        for (const std::string& p : problems) std::cerr << "mismatch: " << p << '\n';
        return 1;
      }
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
