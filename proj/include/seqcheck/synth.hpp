#pragma once

#include <cstdint>
#include <vector>

#include "seqcheck/interactions.hpp"

namespace seqcheck {

// Defaults match the acceptance-scale corpora: minutes-scale CPU training
// with clearly separated outcomes.
struct SynthConfig {
  std::size_t n_users = 2000;
  int n_items = 200;          // 500 for the exchangeable generator
  int seq_length = 50;        // fixed length; timestamps unit-spaced per user
  double dominant_prob = 0.8; // markov: probability of the dominant successor
  int personal_items = 20;    // exchangeable: personal subset size
  int shared_head = 2;        // exchangeable: globally shared popular items
  double head_prob = 0.3;     // exchangeable: mass on the shared head
  std::uint64_t seed = 0;

  void validate(bool markov) const;
};

// Strong sequential structure: a random successor map assigns each item one
// dominant successor, followed with probability dominant_prob; otherwise a
// uniformly random other item.
InteractionLog gen_markov(const SynthConfig& config);

// No sequential structure: items drawn independently per step from a static
// per-user preference distribution (a personal item subset that includes a
// small globally shared popular head).
InteractionLog gen_exchangeable(const SynthConfig& config);

// The dominant-successor map gen_markov uses for the given config; oracle
// for tests that predict the next item.
std::vector<int> markov_successors(const SynthConfig& config);

}  // namespace seqcheck
