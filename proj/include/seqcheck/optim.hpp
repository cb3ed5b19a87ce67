#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "seqcheck/tensor.hpp"

namespace seqcheck::diff {

// Named parameter list. Order is fixed at insertion and is part of the
// checkpoint format.
class ParamSet {
 public:
  Tensor& add(const std::string& name, Tensor t);
  Tensor& at(const std::string& name);
  const Tensor& at(const std::string& name) const;
  bool contains(const std::string& name) const;
  std::size_t size() const { return params_.size(); }
  const std::vector<std::pair<std::string, Tensor>>& entries() const { return params_; }
  std::vector<std::pair<std::string, Tensor>>& entries() { return params_; }

  long total_count() const;
  void zero_grad();
  // Deep copies of parameter values, in entry order (best-epoch snapshots).
  std::vector<std::vector<double>> snapshot() const;
  void restore(const std::vector<std::vector<double>>& snap);

 private:
  std::vector<std::pair<std::string, Tensor>> params_;
};

// Bias-corrected Adam.
struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double grad_clip = 0.0;  // global-norm clip; 0 disables
};

class Adam {
 public:
  explicit Adam(AdamConfig config) : config_(config) {}

  // Applies one update from the accumulated gradients, then zeroes them.
  // Throws on non-finite gradients.
  void step(ParamSet& params);

  std::int64_t step_count() const { return t_; }

 private:
  AdamConfig config_;
  std::int64_t t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

// Compares reverse-mode gradients of a scalar-valued graph builder against
// central finite differences. Checks at most max_coords_per_param sampled
// coordinates per parameter (seeded). Returns the max relative error.
double grad_check(const std::function<Tensor()>& build_loss, ParamSet& params,
                  double step = 1e-5, int max_coords_per_param = 24,
                  std::uint64_t seed = 0);

}  // namespace seqcheck::diff
