#include "seqcheck/models.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

#include <Eigen/Core>
#include <json.hpp>

#include "seqcheck/common.hpp"
#include "seqcheck/rng.hpp"

namespace seqcheck {

namespace diffns = seqcheck::diff;
using diffns::Tensor;

const char* architecture_name(Architecture arch) {
  return arch == Architecture::attention ? "attention" : "recurrent";
}

Architecture architecture_from_name(const std::string& name) {
  if (name == "attention") return Architecture::attention;
  if (name == "recurrent") return Architecture::recurrent;
  throw ConfigError("unknown architecture '" + name + "' (want attention|recurrent)");
}

void ModelHParams::validate() const {
  if (hidden < 1) throw ConfigError("hparams: hidden must be >= 1");
  if (arch == Architecture::attention) {
    if (heads < 1 || hidden % heads != 0)
      throw ConfigError("hparams: hidden (" + std::to_string(hidden) +
                        ") must be divisible by heads (" + std::to_string(heads) + ")");
    if (blocks < 1) throw ConfigError("hparams: blocks must be >= 1");
  }
  if (rnn_layers != 1) throw ConfigError("hparams: only rnn_layers = 1 is supported");
  if (max_len < 1) throw ConfigError("hparams: max_len must be >= 1");
  if (batch < 1) throw ConfigError("hparams: batch must be >= 1");
  if (!(lr > 0.0)) throw ConfigError("hparams: lr must be positive");
  if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("hparams: dropout must be in [0,1)");
  if (patience < 1) throw ConfigError("hparams: patience must be >= 1");
  if (max_epochs < 1) throw ConfigError("hparams: max_epochs must be >= 1");
}

namespace {

constexpr int kValK = 10;  // validation metric cutoff

Tensor make_param(diffns::Shape shape, Rng& rng, double bound) {
  Tensor t = Tensor::zeros(std::move(shape), /*requires_grad=*/true);
  for (double& v : t.values()) v = rng.uniform(-bound, bound);
  return t;
}

void add_layer_norm_params(diffns::ParamSet& params, const std::string& prefix, int h) {
  params.add(prefix + ".g", Tensor::full({h}, 1.0, true));
  params.add(prefix + ".b", Tensor::zeros({h}, true));
}

// Forward to per-position hidden states [B, T, H]. tokens is row-major B*T,
// right-padded with 0.
Tensor forward_hidden(const TrainedModel& model, const std::vector<int>& tokens, long b,
                      long t, bool training, Rng& drop_rng) {
  const ModelHParams& hp = model.hparams;
  const diffns::ParamSet& cparams = model.params;
  auto& params = const_cast<diffns::ParamSet&>(cparams);
  const int h = hp.hidden;
  const double p = hp.dropout;

  if (hp.arch == Architecture::attention) {
    Tensor x = diffns::embedding(params.at("emb"), tokens, b, t);
    x = diffns::affine(x, std::sqrt(static_cast<double>(h)), 0.0);
    x = diffns::add(x, diffns::slice(params.at("pos"), 0, 0, t));
    x = diffns::dropout(x, p, drop_rng, training);
    for (int blk = 0; blk < hp.blocks; ++blk) {
      const std::string pre = "blk" + std::to_string(blk);
      Tensor hn = diffns::layer_norm(x, params.at(pre + ".ln1.g"), params.at(pre + ".ln1.b"));
      Tensor q = diffns::add(diffns::matmul(hn, params.at(pre + ".wq")), params.at(pre + ".bq"));
      Tensor k = diffns::add(diffns::matmul(hn, params.at(pre + ".wk")), params.at(pre + ".bk"));
      Tensor v = diffns::add(diffns::matmul(hn, params.at(pre + ".wv")), params.at(pre + ".bv"));
      q = diffns::split_heads(q, hp.heads);
      k = diffns::split_heads(k, hp.heads);
      v = diffns::split_heads(v, hp.heads);
      Tensor scores = diffns::matmul(q, diffns::transpose_last2(k));
      scores = diffns::affine(scores, 1.0 / std::sqrt(static_cast<double>(h / hp.heads)), 0.0);
      Tensor weights = diffns::causal_masked_softmax(scores);
      Tensor ctx = diffns::merge_heads(diffns::matmul(weights, v), hp.heads);
      Tensor att = diffns::add(diffns::matmul(ctx, params.at(pre + ".wo")), params.at(pre + ".bo"));
      x = diffns::add(x, diffns::dropout(att, p, drop_rng, training));
      Tensor fn = diffns::layer_norm(x, params.at(pre + ".ln2.g"), params.at(pre + ".ln2.b"));
      Tensor ff = diffns::relu(
          diffns::add(diffns::matmul(fn, params.at(pre + ".ff1.w")), params.at(pre + ".ff1.b")));
      ff = diffns::add(diffns::matmul(ff, params.at(pre + ".ff2.w")), params.at(pre + ".ff2.b"));
      x = diffns::add(x, diffns::dropout(ff, p, drop_rng, training));
    }
    return diffns::layer_norm(x, params.at("final_ln.g"), params.at("final_ln.b"));
  }

  // Recurrent: one gated recurrent layer unrolled over time.
  Tensor x = diffns::embedding(params.at("emb"), tokens, b, t);
  x = diffns::dropout(x, p, drop_rng, training);
  Tensor xg = diffns::add(diffns::matmul(x, params.at("gru.wx")), params.at("gru.bx"));
  Tensor hidden = Tensor::zeros({b, h});
  std::vector<Tensor> steps;
  steps.reserve(t);
  for (long step = 0; step < t; ++step) {
    Tensor xg_t = diffns::reshape(diffns::slice(xg, 1, step, 1), {b, 3 * h});
    Tensor hg = diffns::add(diffns::matmul(hidden, params.at("gru.wh")), params.at("gru.bh"));
    Tensor r = diffns::sigmoid(
        diffns::add(diffns::slice(xg_t, 1, 0, h), diffns::slice(hg, 1, 0, h)));
    Tensor z = diffns::sigmoid(
        diffns::add(diffns::slice(xg_t, 1, h, h), diffns::slice(hg, 1, h, h)));
    Tensor n = diffns::tanh_act(diffns::add(diffns::slice(xg_t, 1, 2 * h, h),
                                            diffns::mul(r, diffns::slice(hg, 1, 2 * h, h))));
    // h' = (1-z)*n + z*h, written as n + z*(h-n)
    hidden = diffns::add(n, diffns::mul(z, diffns::sub(hidden, n)));
    steps.push_back(diffns::reshape(hidden, {b, 1, h}));
  }
  Tensor all = diffns::concat(steps, 1);
  return diffns::dropout(all, p, drop_rng, training);
}

// Full-catalog logits [B, T, V] for training.
Tensor forward_logits(const TrainedModel& model, const Tensor& hidden) {
  auto& params = const_cast<diffns::ParamSet&>(model.params);
  if (model.hparams.arch == Architecture::attention) {
    // Output layer tied to the item embedding.
    return diffns::matmul(hidden, diffns::transpose_last2(params.at("emb")));
  }
  return diffns::add(diffns::matmul(hidden, params.at("out.w")), params.at("out.b"));
}

// No-grad scoring of a group of token sequences (each non-empty, length <=
// max_len). Returns token-space score rows of length catalog_size.
std::vector<std::vector<double>> score_token_group(
    const TrainedModel& model, const std::vector<std::vector<int>>& inputs) {
  using MatRM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  const long b = static_cast<long>(inputs.size());
  long t = 0;
  for (const auto& in : inputs) t = std::max<long>(t, static_cast<long>(in.size()));
  std::vector<int> tokens(b * t, 0);
  for (long i = 0; i < b; ++i)
    std::copy(inputs[i].begin(), inputs[i].end(), tokens.begin() + i * t);
  Rng no_drop(0);
  const Tensor hidden = forward_hidden(model, tokens, b, t, /*training=*/false, no_drop);
  const int h = model.hparams.hidden;
  const long v = model.catalog_size;

  // Gather the final real position of every row, then one dense product.
  MatRM final_hidden(b, h);
  for (long i = 0; i < b; ++i) {
    const long last = static_cast<long>(inputs[i].size()) - 1;
    const double* src = hidden.values().data() + (i * t + last) * h;
    for (int j = 0; j < h; ++j) final_hidden(i, j) = src[j];
  }
  MatRM scores(b, v);
  if (model.hparams.arch == Architecture::attention) {
    Eigen::Map<const MatRM> emb(model.params.at("emb").values().data(), v, h);
    scores.noalias() = final_hidden * emb.transpose();
  } else {
    Eigen::Map<const MatRM> wout(model.params.at("out.w").values().data(), h, v);
    Eigen::Map<const Eigen::VectorXd> bout(model.params.at("out.b").values().data(), v);
    scores.noalias() = final_hidden * wout;
    scores.rowwise() += bout.transpose();
  }
  std::vector<std::vector<double>> out(b);
  for (long i = 0; i < b; ++i) {
    out[i].assign(v, 0.0);
    for (long j = 0; j < v; ++j) out[i][j] = scores(i, j);
  }
  return out;
}

// Drops unseen items and converts to tokens truncated to the last max_len.
std::vector<int> prepare_input_tokens(const TrainedModel& model,
                                      const std::vector<int>& input) {
  std::vector<int> tokens;
  tokens.reserve(input.size());
  for (int item : input) {
    const int token = item + 1;
    if (token >= 1 && token < model.catalog_size && model.seen[token])
      tokens.push_back(token);
  }
  if (static_cast<int>(tokens.size()) > model.hparams.max_len)
    tokens.erase(tokens.begin(), tokens.end() - model.hparams.max_len);
  return tokens;
}

}  // namespace

TrainedModel build_model(const ModelHParams& hparams, int catalog_size) {
  hparams.validate();
  if (catalog_size < 2) throw ConfigError("build_model: catalog_size must be >= 2");
  TrainedModel model;
  model.hparams = hparams;
  model.catalog_size = catalog_size;
  model.seen.assign(catalog_size, 0);
  const int h = hparams.hidden;
  const double bound = 1.0 / std::sqrt(static_cast<double>(h));
  Rng rng(Rng::derive(hparams.seed, 1));
  auto& params = model.params;
  params.add("emb", make_param({catalog_size, h}, rng, bound));
  if (hparams.arch == Architecture::attention) {
    params.add("pos", make_param({hparams.max_len, h}, rng, bound));
    for (int blk = 0; blk < hparams.blocks; ++blk) {
      const std::string pre = "blk" + std::to_string(blk);
      add_layer_norm_params(params, pre + ".ln1", h);
      for (const char* w : {"wq", "wk", "wv", "wo"}) {
        params.add(pre + "." + w, make_param({h, h}, rng, bound));
        params.add(pre + ".b" + std::string(1, w[1]), Tensor::zeros({h}, true));
      }
      add_layer_norm_params(params, pre + ".ln2", h);
      params.add(pre + ".ff1.w", make_param({h, h}, rng, bound));
      params.add(pre + ".ff1.b", Tensor::zeros({h}, true));
      params.add(pre + ".ff2.w", make_param({h, h}, rng, bound));
      params.add(pre + ".ff2.b", Tensor::zeros({h}, true));
    }
    add_layer_norm_params(params, "final_ln", h);
  } else {
    params.add("gru.wx", make_param({h, 3 * h}, rng, bound));
    params.add("gru.wh", make_param({h, 3 * h}, rng, bound));
    params.add("gru.bx", Tensor::zeros({3 * h}, true));
    params.add("gru.bh", Tensor::zeros({3 * h}, true));
    params.add("out.w", make_param({h, catalog_size}, rng, bound));
    params.add("out.b", Tensor::zeros({catalog_size}, true));
  }
  return model;
}

void train_model(TrainedModel& model, const SplitBundle& split) {
  const ModelHParams& hp = model.hparams;
  if (split.train_sequences.empty()) throw DataError("train: empty train set");

  // Mark training-visible items; validation scoring filters on this too.
  std::fill(model.seen.begin(), model.seen.end(), 0);
  for (const auto& seq : split.train_sequences)
    for (int item : seq)
      if (item + 1 < model.catalog_size) model.seen[item + 1] = 1;

  // Shift-by-one examples: inputs s[0..n-2], targets s[1..n-1], windowed to
  // the most recent max_len transitions.
  struct Example {
    std::vector<int> inputs, targets;
  };
  std::vector<Example> examples;
  for (const auto& seq : split.train_sequences) {
    if (seq.size() < 2) continue;
    const std::size_t window = std::min<std::size_t>(seq.size(),
                                                     static_cast<std::size_t>(hp.max_len) + 1);
    const std::size_t begin = seq.size() - window;
    Example ex;
    for (std::size_t i = begin; i + 1 < seq.size(); ++i) {
      ex.inputs.push_back(seq[i] + 1);
      ex.targets.push_back(seq[i + 1] + 1);
    }
    examples.push_back(std::move(ex));
  }
  if (examples.empty()) throw DataError("train: no sequence has length >= 2");

  const bool has_val = !split.val_instances.empty();
  Rng order_rng(Rng::derive(hp.seed, 2));
  Rng drop_rng(Rng::derive(hp.seed, 3));
  diffns::Adam adam({hp.lr, 0.9, 0.999, 1e-8, hp.grad_clip});
  model.params.zero_grad();

  std::vector<std::size_t> order(examples.size());
  std::iota(order.begin(), order.end(), 0);

  double best_ndcg = -1.0;
  int epochs_since_best = 0;
  std::vector<std::vector<double>> best_params;
  model.history = TrainHistory{};

  for (int epoch = 0; epoch < hp.max_epochs; ++epoch) {
    order_rng.shuffle(order);
    double loss_sum = 0.0;
    long batches = 0;
    for (std::size_t start = 0; start < order.size(); start += hp.batch) {
      const std::size_t end = std::min(order.size(), start + hp.batch);
      const long b = static_cast<long>(end - start);
      long t = 0;
      for (std::size_t i = start; i < end; ++i)
        t = std::max<long>(t, static_cast<long>(examples[order[i]].inputs.size()));
      std::vector<int> tokens(b * t, 0);
      std::vector<int> targets(b * t, 0);
      for (long i = 0; i < b; ++i) {
        const Example& ex = examples[order[start + i]];
        std::copy(ex.inputs.begin(), ex.inputs.end(), tokens.begin() + i * t);
        std::copy(ex.targets.begin(), ex.targets.end(), targets.begin() + i * t);
      }
      Tensor loss;
      try {
        const Tensor hidden = forward_hidden(model, tokens, b, t, true, drop_rng);
        loss = diffns::cross_entropy_logits(forward_logits(model, hidden), targets, 0);
        diffns::backward(loss);
        adam.step(model.params);
      } catch (const DataError& e) {
        throw DataError("train: divergence at epoch " + std::to_string(epoch) + ", batch " +
                        std::to_string(batches) + ": " + e.what());
      }
      loss_sum += loss.scalar();
      ++batches;
    }
    model.history.epoch_loss.push_back(loss_sum / static_cast<double>(batches));

    if (has_val) {
      // Mean NDCG@10 over scoreable validation instances.
      double ndcg_sum = 0.0;
      long evaluated = 0;
      std::vector<std::vector<int>> group;
      std::vector<int> group_targets;
      auto flush = [&]() {
        if (group.empty()) return;
        const auto score_rows = score_token_group(model, group);
        for (std::size_t i = 0; i < score_rows.size(); ++i) {
          // Token-space rank over real items only.
          std::vector<double> item_scores(score_rows[i].begin() + 1, score_rows[i].end());
          const long rank = rank_of_item(item_scores, group_targets[i]);
          if (rank <= kValK) ndcg_sum += 1.0 / std::log2(static_cast<double>(rank) + 1.0);
          ++evaluated;
        }
        group.clear();
        group_targets.clear();
      };
      for (const EvalInstance& inst : split.val_instances) {
        std::vector<int> tokens = prepare_input_tokens(model, inst.input);
        if (tokens.empty()) continue;
        group.push_back(std::move(tokens));
        group_targets.push_back(inst.target);
        if (group.size() == static_cast<std::size_t>(hp.batch)) flush();
      }
      flush();
      const double ndcg = evaluated > 0 ? ndcg_sum / static_cast<double>(evaluated) : 0.0;
      model.history.val_ndcg10.push_back(ndcg);
      if (ndcg > best_ndcg) {
        best_ndcg = ndcg;
        model.history.best_epoch = epoch;
        best_params = model.params.snapshot();
        epochs_since_best = 0;
      } else if (++epochs_since_best >= hp.patience) {
        break;
      }
    } else {
      model.history.val_ndcg10.push_back(-1.0);
      model.history.best_epoch = epoch;
    }
  }
  if (has_val && !best_params.empty()) model.params.restore(best_params);
}

long rank_of_item(const std::vector<double>& scores, int target) {
  const double st = scores[target];
  long rank = 1;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (scores[i] > st) ++rank;
    else if (scores[i] == st && static_cast<int>(i) < target) ++rank;
  }
  return rank;
}

std::optional<std::vector<double>> score_next(const TrainedModel& model,
                                              const std::vector<int>& input) {
  if (input.empty()) throw DataError("score_next: empty input");
  const std::vector<int> tokens = prepare_input_tokens(model, input);
  if (tokens.empty()) return std::nullopt;
  const auto rows = score_token_group(model, {tokens});
  // Strip the padding token: raw item i scored by token i+1.
  return std::vector<double>(rows[0].begin() + 1, rows[0].end());
}

std::optional<ScoredList> recommend_top_k(const TrainedModel& model,
                                          const EvalInstance& instance, int k) {
  if (k < 1) throw ConfigError("recommend_top_k: k must be >= 1");
  const auto scores = score_next(model, instance.input);
  if (!scores) return std::nullopt;
  const int n = static_cast<int>(scores->size());
  std::vector<int> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  const int kk = std::min(k, n);
  std::partial_sort(idx.begin(), idx.begin() + kk, idx.end(), [&](int a, int b) {
    if ((*scores)[a] != (*scores)[b]) return (*scores)[a] > (*scores)[b];
    return a < b;
  });
  ScoredList out;
  out.user = instance.user;
  out.items.assign(idx.begin(), idx.begin() + kk);
  out.scores.reserve(kk);
  for (int i : out.items) out.scores.push_back((*scores)[i]);
  return out;
}

void save_checkpoint(const TrainedModel& model, const std::string& path) {
  nlohmann::json header;
  header["format"] = "seqcheck-checkpoint-v1";
  const ModelHParams& hp = model.hparams;
  header["hparams"] = {
      {"arch", architecture_name(hp.arch)}, {"hidden", hp.hidden},
      {"blocks", hp.blocks},                {"heads", hp.heads},
      {"rnn_layers", hp.rnn_layers},        {"max_len", hp.max_len},
      {"batch", hp.batch},                  {"lr", hp.lr},
      {"dropout", hp.dropout},              {"grad_clip", hp.grad_clip},
      {"patience", hp.patience},            {"max_epochs", hp.max_epochs},
      {"seed", hp.seed},
  };
  header["catalog_size"] = model.catalog_size;
  header["history"] = {{"epoch_loss", model.history.epoch_loss},
                       {"val_ndcg10", model.history.val_ndcg10},
                       {"best_epoch", model.history.best_epoch}};
  header["seen"] = std::vector<int>(model.seen.begin(), model.seen.end());
  nlohmann::json params = nlohmann::json::array();
  for (const auto& [name, t] : model.params.entries())
    params.push_back({{"name", name}, {"shape", t.shape()}});
  header["params"] = params;

  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot open checkpoint for writing: " + path);
  const std::string head = header.dump();
  const std::uint64_t head_len = head.size();
  out.write(reinterpret_cast<const char*>(&head_len), sizeof(head_len));
  out.write(head.data(), static_cast<std::streamsize>(head.size()));
  for (const auto& [name, t] : model.params.entries())
    out.write(reinterpret_cast<const char*>(t.values().data()),
              static_cast<std::streamsize>(t.values().size() * sizeof(double)));
  if (!out) throw DataError("checkpoint write failed: " + path);
}

TrainedModel load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open checkpoint: " + path);
  std::uint64_t head_len = 0;
  in.read(reinterpret_cast<char*>(&head_len), sizeof(head_len));
  std::string head(head_len, '\0');
  in.read(head.data(), static_cast<std::streamsize>(head_len));
  if (!in) throw ParseError("truncated checkpoint header: " + path);
  nlohmann::json header = nlohmann::json::parse(head);
  if (header.value("format", "") != "seqcheck-checkpoint-v1")
    throw ParseError("unrecognized checkpoint format in " + path);

  ModelHParams hp;
  const auto& jh = header.at("hparams");
  hp.arch = architecture_from_name(jh.at("arch").get<std::string>());
  hp.hidden = jh.at("hidden").get<int>();
  hp.blocks = jh.at("blocks").get<int>();
  hp.heads = jh.at("heads").get<int>();
  hp.rnn_layers = jh.at("rnn_layers").get<int>();
  hp.max_len = jh.at("max_len").get<int>();
  hp.batch = jh.at("batch").get<int>();
  hp.lr = jh.at("lr").get<double>();
  hp.dropout = jh.at("dropout").get<double>();
  hp.grad_clip = jh.at("grad_clip").get<double>();
  hp.patience = jh.at("patience").get<int>();
  hp.max_epochs = jh.at("max_epochs").get<int>();
  hp.seed = jh.at("seed").get<std::uint64_t>();

  TrainedModel model = build_model(hp, header.at("catalog_size").get<int>());
  model.history.epoch_loss = header.at("history").at("epoch_loss").get<std::vector<double>>();
  model.history.val_ndcg10 = header.at("history").at("val_ndcg10").get<std::vector<double>>();
  model.history.best_epoch = header.at("history").at("best_epoch").get<int>();
  const auto seen = header.at("seen").get<std::vector<int>>();
  model.seen.assign(seen.begin(), seen.end());

  const auto& jparams = header.at("params");
  if (jparams.size() != model.params.size())
    throw ParseError("checkpoint parameter list does not match architecture: " + path);
  for (std::size_t i = 0; i < jparams.size(); ++i) {
    auto& [name, t] = model.params.entries()[i];
    if (jparams[i].at("name").get<std::string>() != name ||
        jparams[i].at("shape").get<diffns::Shape>() != t.shape())
      throw ParseError("checkpoint parameter mismatch at '" + name + "': " + path);
    in.read(reinterpret_cast<char*>(t.values().data()),
            static_cast<std::streamsize>(t.values().size() * sizeof(double)));
  }
  if (!in) throw ParseError("truncated checkpoint data: " + path);
  return model;
}

}  // namespace seqcheck
