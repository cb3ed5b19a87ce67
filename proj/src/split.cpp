#include "seqcheck/split.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include <json.hpp>

#include "seqcheck/common.hpp"
#include "seqcheck/rng.hpp"

namespace seqcheck {

double temporal_boundary(const InteractionLog& log, double q) {
  if (log.interactions.empty()) throw DataError("temporal_boundary: empty log");
  if (!(q > 0.0 && q < 1.0)) throw ConfigError("temporal_boundary: q must be in (0,1)");
  std::vector<double> ts;
  ts.reserve(log.size());
  for (const Interaction& in : log.interactions) ts.push_back(in.timestamp);
  std::sort(ts.begin(), ts.end());
  const std::size_t m =
      static_cast<std::size_t>(std::ceil(q * static_cast<double>(ts.size())));
  return ts[std::max<std::size_t>(m, 1) - 1];
}

SplitBundle build_split(const InteractionLog& log, double q, double val_user_fraction,
                        std::uint64_t seed) {
  if (!(val_user_fraction >= 0.0 && val_user_fraction < 1.0))
    throw ConfigError("build_split: val_user_fraction must be in [0,1)");
  SplitBundle out;
  out.q = q;
  out.val_user_fraction = val_user_fraction;
  out.seed = seed;
  out.n_items = log.n_items();
  out.boundary_ts = temporal_boundary(log, q);

  const auto rows = user_rows_sorted(log);
  bool any_post = false;
  std::unordered_set<int> train_items;

  // First pass: train/val partition over pre-boundary users.
  for (std::size_t u = 0; u < rows.size(); ++u) {
    std::vector<int> pre;
    for (std::size_t r : rows[u]) {
      if (log.interactions[r].timestamp <= out.boundary_ts)
        pre.push_back(log.interactions[r].item);
    }
    if (pre.empty()) continue;
    const bool is_val =
        Rng(Rng::derive(seed, u)).uniform() < val_user_fraction;
    if (is_val) {
      if (pre.size() < 2) {
        ++out.dropped_short_val_users;
        continue;
      }
      EvalInstance inst;
      inst.user = static_cast<int>(u);
      inst.target = pre.back();
      pre.pop_back();
      inst.input = std::move(pre);
      out.val_instances.push_back(std::move(inst));
    } else {
      out.train_users.push_back(static_cast<int>(u));
      for (int item : pre) train_items.insert(item);
      out.train_sequences.push_back(std::move(pre));
    }
  }

  // Second pass: every user with post-boundary activity is a test user;
  // target is the final interaction overall, input everything before it.
  for (std::size_t u = 0; u < rows.size(); ++u) {
    bool post = false;
    for (std::size_t r : rows[u]) {
      if (log.interactions[r].timestamp > out.boundary_ts) {
        post = true;
        break;
      }
    }
    if (!post) continue;
    any_post = true;
    EvalInstance inst;
    inst.user = static_cast<int>(u);
    inst.target = log.interactions[rows[u].back()].item;
    inst.input.reserve(rows[u].size() - 1);
    for (std::size_t i = 0; i + 1 < rows[u].size(); ++i)
      inst.input.push_back(log.interactions[rows[u][i]].item);
    if (inst.input.empty()) {
      ++out.dropped_empty_test_inputs;
      continue;
    }
    if (!train_items.count(inst.target)) {
      ++out.dropped_unseen_test_targets;
      continue;
    }
    out.test_instances.push_back(std::move(inst));
  }

  if (!any_post) throw DataError("build_split: no test users (no post-boundary interactions)");
  if (out.train_sequences.empty()) throw DataError("build_split: empty train partition");
  return out;
}

EvalInstance shuffle_instance(const EvalInstance& instance, std::uint64_t seed) {
  EvalInstance out = instance;
  Rng rng(Rng::derive(seed, static_cast<std::uint64_t>(instance.user)));
  rng.shuffle(out.input);
  return out;
}

InteractionLog shuffle_log(const InteractionLog& log, std::uint64_t seed) {
  InteractionLog out;
  out.user_ids = log.user_ids;
  out.item_ids = log.item_ids;
  out.user_index = log.user_index;
  out.item_index = log.item_index;
  out.interactions.reserve(log.size());
  const auto rows = user_rows_sorted(log);
  for (std::size_t u = 0; u < rows.size(); ++u) {
    std::vector<int> items;
    items.reserve(rows[u].size());
    for (std::size_t r : rows[u]) items.push_back(log.interactions[r].item);
    Rng rng(Rng::derive(seed, u));
    rng.shuffle(items);
    for (std::size_t i = 0; i < items.size(); ++i) {
      Interaction rec;
      rec.user = static_cast<int>(u);
      rec.item = items[i];
      rec.timestamp = log.interactions[rows[u][i]].timestamp;  // rows are ts-sorted
      out.interactions.push_back(rec);
    }
  }
  return out;
}

namespace {

void write_instances(const std::vector<EvalInstance>& instances, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot open output file: " + path);
  for (const EvalInstance& inst : instances) {
    out << inst.user << '\t' << inst.target << '\t';
    for (std::size_t i = 0; i < inst.input.size(); ++i) {
      if (i) out << ',';
      out << inst.input[i];
    }
    out << '\n';
  }
}

std::vector<EvalInstance> read_instances(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open split file: " + path);
  std::vector<EvalInstance> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    EvalInstance inst;
    std::string items;
    if (!(ss >> inst.user >> inst.target)) throw ParseError("bad instance row in " + path);
    std::getline(ss, items);
    if (!items.empty() && items.front() == '\t') items.erase(0, 1);
    std::size_t start = 0;
    while (start <= items.size() && !items.empty()) {
      const std::size_t pos = items.find(',', start);
      const std::string tok =
          items.substr(start, pos == std::string::npos ? std::string::npos : pos - start);
      if (!tok.empty()) inst.input.push_back(std::stoi(tok));
      if (pos == std::string::npos) break;
      start = pos + 1;
    }
    out.push_back(std::move(inst));
  }
  return out;
}

}  // namespace

void save_split(const SplitBundle& split, const std::string& dir) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream out(dir + "/train.tsv");
    if (!out) throw ConfigError("cannot open output file: " + dir + "/train.tsv");
    for (std::size_t i = 0; i < split.train_sequences.size(); ++i)
      for (int item : split.train_sequences[i])
        out << split.train_users[i] << '\t' << item << '\n';
  }
  write_instances(split.val_instances, dir + "/val.tsv");
  write_instances(split.test_instances, dir + "/test.tsv");
  nlohmann::json manifest{
      {"boundary_ts", split.boundary_ts},
      {"q", split.q},
      {"val_user_fraction", split.val_user_fraction},
      {"seed", split.seed},
      {"n_items", split.n_items},
      {"n_train_users", split.train_sequences.size()},
      {"n_val_instances", split.val_instances.size()},
      {"n_test_instances", split.test_instances.size()},
      {"dropped_short_val_users", split.dropped_short_val_users},
      {"dropped_empty_test_inputs", split.dropped_empty_test_inputs},
      {"dropped_unseen_test_targets", split.dropped_unseen_test_targets},
  };
  std::ofstream out(dir + "/manifest.json");
  out << manifest.dump(2) << '\n';
  if (!out) throw DataError("write failed: " + dir + "/manifest.json");
}

SplitBundle load_split(const std::string& dir) {
  SplitBundle split;
  std::ifstream mf(dir + "/manifest.json");
  if (!mf) throw ConfigError("cannot open split manifest: " + dir + "/manifest.json");
  nlohmann::json manifest = nlohmann::json::parse(mf);
  split.boundary_ts = manifest.at("boundary_ts").get<double>();
  split.q = manifest.at("q").get<double>();
  split.val_user_fraction = manifest.at("val_user_fraction").get<double>();
  split.seed = manifest.at("seed").get<std::uint64_t>();
  split.n_items = manifest.at("n_items").get<std::size_t>();
  split.dropped_short_val_users = manifest.at("dropped_short_val_users").get<std::size_t>();
  split.dropped_empty_test_inputs = manifest.at("dropped_empty_test_inputs").get<std::size_t>();
  split.dropped_unseen_test_targets =
      manifest.at("dropped_unseen_test_targets").get<std::size_t>();

  std::ifstream in(dir + "/train.tsv");
  if (!in) throw ConfigError("cannot open split file: " + dir + "/train.tsv");
  std::string line;
  int prev_user = -1;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    int user = 0, item = 0;
    if (!(ss >> user >> item)) throw ParseError("bad train row in " + dir + "/train.tsv");
    if (user != prev_user) {
      split.train_users.push_back(user);
      split.train_sequences.emplace_back();
      prev_user = user;
    }
    split.train_sequences.back().push_back(item);
  }
  split.val_instances = read_instances(dir + "/val.tsv");
  split.test_instances = read_instances(dir + "/test.tsv");
  return split;
}

}  // namespace seqcheck
