#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "seqcheck/interactions.hpp"

namespace seqcheck {

// One evaluation unit: the user's chronologically ordered input sequence and
// the single held-out target (the user's final interaction within scope).
struct EvalInstance {
  int user = 0;
  std::vector<int> input;
  int target = 0;
};

// Hybrid global-temporal + leave-one-out split.
struct SplitBundle {
  std::vector<int> train_users;                    // original user index per row below
  std::vector<std::vector<int>> train_sequences;   // pre-boundary items of train users
  std::vector<EvalInstance> val_instances;
  std::vector<EvalInstance> test_instances;
  double boundary_ts = 0.0;
  // Config echo.
  double q = 0.0;
  double val_user_fraction = 0.0;
  std::uint64_t seed = 0;
  // Drop accounting.
  std::size_t dropped_short_val_users = 0;
  std::size_t dropped_empty_test_inputs = 0;
  std::size_t dropped_unseen_test_targets = 0;
  // Catalog size of the source log (item indices are 0..n_items-1).
  std::size_t n_items = 0;
};

// Smallest timestamp T such that at least ceil(q * N) interactions have
// timestamp <= T.
double temporal_boundary(const InteractionLog& log, double q);

SplitBundle build_split(const InteractionLog& log, double q, double val_user_fraction,
                        std::uint64_t seed);

// Uniform seeded permutation of the input; target untouched. The generator is
// keyed by (seed, user) so instances can be processed in any order.
EvalInstance shuffle_instance(const EvalInstance& instance, std::uint64_t seed);

// Permutes every user's item sequence independently, reassigning that user's
// original timestamps in sorted order.
InteractionLog shuffle_log(const InteractionLog& log, std::uint64_t seed);

void save_split(const SplitBundle& split, const std::string& dir);
SplitBundle load_split(const std::string& dir);

}  // namespace seqcheck
