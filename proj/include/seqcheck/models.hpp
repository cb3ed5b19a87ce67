#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "seqcheck/optim.hpp"
#include "seqcheck/split.hpp"
#include "seqcheck/tensor.hpp"

namespace seqcheck {

enum class Architecture { attention, recurrent };

const char* architecture_name(Architecture arch);
Architecture architecture_from_name(const std::string& name);

struct ModelHParams {
  Architecture arch = Architecture::attention;
  int hidden = 64;
  int blocks = 2;      // attention only
  int heads = 2;       // attention only
  int rnn_layers = 1;  // recurrent only
  int max_len = 128;
  int batch = 128;
  double lr = 1e-3;
  double dropout = 0.1;
  double grad_clip = 0.0;  // 0 disables
  int patience = 5;
  int max_epochs = 100;
  std::uint64_t seed = 0;

  void validate() const;
};

struct TrainHistory {
  std::vector<double> epoch_loss;
  // Validation NDCG@10 per epoch; -1 marks epochs without a validation set.
  std::vector<double> val_ndcg10;
  int best_epoch = -1;  // 0-based; -1 before training
};

// Next-item scorer over a catalog of `catalog_size` tokens, where token 0 is
// padding and token i = item index i-1.
struct TrainedModel {
  ModelHParams hparams;
  int catalog_size = 0;
  diff::ParamSet params;
  TrainHistory history;
  std::vector<char> seen;  // token-indexed; items observed in training data
};

struct ScoredList {
  int user = 0;
  std::vector<int> items;   // item indices, descending score
  std::vector<double> scores;
};

// Seeded construction; same (hparams, catalog) twice gives bit-identical
// initial parameters.
TrainedModel build_model(const ModelHParams& hparams, int catalog_size);

// Shift-by-one next-item training with early stopping on validation NDCG@10.
// Restores the best-epoch parameters before returning. With an empty
// validation set, trains for exactly max_epochs.
void train_model(TrainedModel& model, const SplitBundle& split);

// Full-catalog scores from the final position. Items unseen in training are
// dropped from the input first; nullopt when the input becomes empty
// (instance skipped). Deterministic: dropout off.
std::optional<std::vector<double>> score_next(const TrainedModel& model,
                                              const std::vector<int>& input);

// Top-k by score, ties broken by ascending item index, k clamped to catalog.
std::optional<ScoredList> recommend_top_k(const TrainedModel& model,
                                          const EvalInstance& instance, int k);

void save_checkpoint(const TrainedModel& model, const std::string& path);
TrainedModel load_checkpoint(const std::string& path);

// 1-based rank of target under (score desc, item index asc); used by both
// recommendation and validation scoring so tie handling cannot drift.
long rank_of_item(const std::vector<double>& scores, int target);

}  // namespace seqcheck
