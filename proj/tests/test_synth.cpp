#include <doctest.h>

#include <cmath>
#include <string>
#include <vector>

#include "seqcheck/interactions.hpp"
#include "seqcheck/rules.hpp"
#include "seqcheck/synth.hpp"

using namespace seqcheck;

namespace {

// Generator item number for a dense index.
int raw_item(const InteractionLog& log, int item) {
  return std::stoi(log.item_ids[item].substr(1));
}

SynthConfig markov_default() {
  SynthConfig cfg;  // 2000 users, 200 items, length 50, p = 0.8
  cfg.seed = 1;
  return cfg;
}

SynthConfig exchangeable_default() {
  SynthConfig cfg;
  cfg.n_items = 500;
  cfg.seed = 1;
  return cfg;
}

}  // namespace

TEST_CASE("generators are deterministic") {
  const InteractionLog a = gen_markov(markov_default());
  const InteractionLog b = gen_markov(markov_default());
  REQUIRE(a.size() == b.size());
  CHECK(user_sequences(a) == user_sequences(b));

  const InteractionLog c = gen_exchangeable(exchangeable_default());
  const InteractionLog d = gen_exchangeable(exchangeable_default());
  CHECK(user_sequences(c) == user_sequences(d));
  CHECK(a.size() == 2000u * 50u);
}

TEST_CASE("markov dominant-transition frequency within 3 sigma of p") {
  const SynthConfig cfg = markov_default();
  const InteractionLog log = gen_markov(cfg);
  const std::vector<int> succ = markov_successors(cfg);
  long dominant = 0, total = 0;
  for (const auto& seq : user_sequences(log)) {
    for (std::size_t i = 0; i + 1 < seq.size(); ++i) {
      if (succ[raw_item(log, seq[i])] == raw_item(log, seq[i + 1])) ++dominant;
      ++total;
    }
  }
  const double expected = cfg.dominant_prob * static_cast<double>(total);
  const double sigma = std::sqrt(static_cast<double>(total) * cfg.dominant_prob *
                                 (1.0 - cfg.dominant_prob));
  CHECK(std::abs(static_cast<double>(dominant) - expected) < 3 * sigma);
}

TEST_CASE("no consecutive repeats in the markov corpus") {
  const InteractionLog log = gen_markov(markov_default());
  for (const auto& seq : user_sequences(log))
    for (std::size_t i = 0; i + 1 < seq.size(); ++i) CHECK(seq[i] != seq[i + 1]);
}

TEST_CASE("default corpora survive 5-core filtering nearly intact") {
  for (bool markov : {true, false}) {
    const InteractionLog log =
        markov ? gen_markov(markov_default()) : gen_exchangeable(exchangeable_default());
    const InteractionLog cored = k_core_filter(log, 5);
    CHECK(static_cast<double>(cored.n_users()) >= 0.95 * static_cast<double>(log.n_users()));
  }
}

TEST_CASE("markov corpus has abundant 2-gram rules before shuffling") {
  const SynthConfig cfg = markov_default();
  const InteractionLog log = gen_markov(cfg);
  const NGramTable t = count_ngrams(user_sequences(log), 2);
  CHECK(count_rules(t, 5, 0.1) >= cfg.n_items);
}

TEST_CASE("rule shuffle bands separate the two generators") {
  const std::vector<std::uint64_t> seeds = {1, 2};

  const InteractionLog markov = gen_markov(markov_default());
  const RuleStats m = rule_shuffle_delta(markov, 2, 5, 0.1, seeds);
  REQUIRE(m.relative_change_defined);
  CHECK(m.relative_change <= -0.90);

  const InteractionLog exch = gen_exchangeable(exchangeable_default());
  const RuleStats e = rule_shuffle_delta(exch, 2, 5, 0.1, seeds);
  REQUIRE(e.relative_change_defined);
  CHECK(e.relative_change >= -0.50);
  CHECK(e.relative_change <= 0.50);
}

TEST_CASE("config validation") {
  SynthConfig bad = markov_default();
  bad.dominant_prob = 1.0;
  CHECK_THROWS(gen_markov(bad));
  SynthConfig bad2 = exchangeable_default();
  bad2.personal_items = 0;
  CHECK_THROWS(gen_exchangeable(bad2));
}
