#include "seqcheck/synth.hpp"

#include <algorithm>
#include <string>

#include "seqcheck/common.hpp"
#include "seqcheck/rng.hpp"

namespace seqcheck {

namespace {

int intern(const std::string& id, std::unordered_map<std::string, int>& index,
           std::vector<std::string>& ids) {
  auto [it, inserted] = index.try_emplace(id, static_cast<int>(ids.size()));
  if (inserted) ids.push_back(id);
  return it->second;
}

void append_user_sequence(InteractionLog& log, std::size_t user, const std::vector<int>& items) {
  const int u = intern("u" + std::to_string(user), log.user_index, log.user_ids);
  for (std::size_t t = 0; t < items.size(); ++t) {
    Interaction rec;
    rec.user = u;
    rec.item = intern("i" + std::to_string(items[t]), log.item_index, log.item_ids);
    rec.timestamp = static_cast<double>(t + 1);  // unit-spaced per user
    log.interactions.push_back(rec);
  }
}

}  // namespace

void SynthConfig::validate(bool markov) const {
  if (n_users < 1) throw ConfigError("synth: n_users must be >= 1");
  if (n_items < 2) throw ConfigError("synth: n_items must be >= 2");
  if (seq_length < 2) throw ConfigError("synth: seq_length must be >= 2");
  if (markov) {
    if (!(dominant_prob > 0.0 && dominant_prob < 1.0))
      throw ConfigError("synth: dominant_prob must be in (0,1)");
  } else {
    if (personal_items < 1 || personal_items > n_items)
      throw ConfigError("synth: personal_items must be in [1, n_items]");
    if (shared_head < 0 || shared_head > personal_items)
      throw ConfigError("synth: shared_head must be in [0, personal_items]");
    if (head_prob < 0.0 || head_prob >= 1.0)
      throw ConfigError("synth: head_prob must be in [0,1)");
  }
}

std::vector<int> markov_successors(const SynthConfig& config) {
  Rng rng(Rng::derive(config.seed, 0x5375636365ULL));
  std::vector<int> succ(config.n_items);
  for (int i = 0; i < config.n_items; ++i) {
    int s = static_cast<int>(rng.uniform_int(config.n_items - 1));
    if (s >= i) ++s;  // successor differs from the item itself
    succ[i] = s;
  }
  return succ;
}

InteractionLog gen_markov(const SynthConfig& config) {
  config.validate(/*markov=*/true);
  const std::vector<int> succ = markov_successors(config);
  InteractionLog log;
  for (std::size_t u = 0; u < config.n_users; ++u) {
    Rng rng(Rng::derive(config.seed, u));
    std::vector<int> items(config.seq_length);
    items[0] = static_cast<int>(rng.uniform_int(config.n_items));
    for (int t = 1; t < config.seq_length; ++t) {
      const int prev = items[t - 1];
      if (rng.uniform() < config.dominant_prob) {
        items[t] = succ[prev];
      } else {
        // Uniform over items other than the dominant successor and the
        // current item (no consecutive repeats by construction).
        int pick = static_cast<int>(rng.uniform_int(config.n_items - 2));
        const int lo = std::min(prev, succ[prev]);
        const int hi = std::max(prev, succ[prev]);
        if (pick >= lo) ++pick;
        if (pick >= hi) ++pick;
        items[t] = pick;
      }
    }
    append_user_sequence(log, u, items);
  }
  return log;
}

InteractionLog gen_exchangeable(const SynthConfig& config) {
  config.validate(/*markov=*/false);
  const int head = config.shared_head;
  const int tail = config.personal_items - head;
  InteractionLog log;
  for (std::size_t u = 0; u < config.n_users; ++u) {
    Rng rng(Rng::derive(config.seed, u));
    // Personal subset: the shared head (items 0..head-1) plus `tail` items
    // sampled without replacement from the rest.
    std::vector<int> pool(config.n_items - head);
    for (int i = 0; i < static_cast<int>(pool.size()); ++i) pool[i] = head + i;
    std::vector<int> personal;
    for (int j = 0; j < tail; ++j) {
      const std::size_t pick = rng.uniform_int(pool.size() - j);
      personal.push_back(pool[pick]);
      std::swap(pool[pick], pool[pool.size() - 1 - j]);
    }
    std::vector<int> items(config.seq_length);
    for (int t = 0; t < config.seq_length; ++t) {
      if (head > 0 && rng.uniform() < config.head_prob)
        items[t] = static_cast<int>(rng.uniform_int(head));
      else if (tail > 0)
        items[t] = personal[rng.uniform_int(tail)];
      else
        items[t] = static_cast<int>(rng.uniform_int(head));
    }
    append_user_sequence(log, u, items);
  }
  return log;
}

}  // namespace seqcheck
