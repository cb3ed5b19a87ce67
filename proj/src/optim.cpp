#include "seqcheck/optim.hpp"

#include <algorithm>
#include <cmath>

#include "seqcheck/common.hpp"

namespace seqcheck::diff {

Tensor& ParamSet::add(const std::string& name, Tensor t) {
  if (contains(name)) throw ConfigError("ParamSet: duplicate parameter '" + name + "'");
  params_.emplace_back(name, std::move(t));
  return params_.back().second;
}

Tensor& ParamSet::at(const std::string& name) {
  for (auto& [n, t] : params_)
    if (n == name) return t;
  throw ConfigError("ParamSet: unknown parameter '" + name + "'");
}

const Tensor& ParamSet::at(const std::string& name) const {
  for (const auto& [n, t] : params_)
    if (n == name) return t;
  throw ConfigError("ParamSet: unknown parameter '" + name + "'");
}

bool ParamSet::contains(const std::string& name) const {
  for (const auto& [n, t] : params_)
    if (n == name) return true;
  return false;
}

long ParamSet::total_count() const {
  long n = 0;
  for (const auto& [name, t] : params_) n += t.numel();
  return n;
}

void ParamSet::zero_grad() {
  for (auto& [name, t] : params_) {
    auto& g = t.grad();
    std::fill(g.begin(), g.end(), 0.0);
  }
}

std::vector<std::vector<double>> ParamSet::snapshot() const {
  std::vector<std::vector<double>> snap;
  snap.reserve(params_.size());
  for (const auto& [name, t] : params_) snap.push_back(t.values());
  return snap;
}

void ParamSet::restore(const std::vector<std::vector<double>>& snap) {
  if (snap.size() != params_.size()) throw DataError("ParamSet::restore: size mismatch");
  for (std::size_t i = 0; i < snap.size(); ++i) params_[i].second.values() = snap[i];
}

void Adam::step(ParamSet& params) {
  auto& entries = params.entries();
  if (m_.empty()) {
    m_.resize(entries.size());
    v_.resize(entries.size());
    for (std::size_t i = 0; i < entries.size(); ++i) {
      m_[i].assign(entries[i].second.values().size(), 0.0);
      v_[i].assign(entries[i].second.values().size(), 0.0);
    }
  }
  if (m_.size() != entries.size()) throw DataError("Adam: parameter set changed size");

  double sq_norm = 0.0;
  for (auto& [name, t] : entries) {
    for (double g : t.grad()) {
      if (!std::isfinite(g)) throw DataError("Adam: non-finite gradient in '" + name + "'");
      sq_norm += g * g;
    }
  }
  double clip_scale = 1.0;
  if (config_.grad_clip > 0.0) {
    const double norm = std::sqrt(sq_norm);
    if (norm > config_.grad_clip) clip_scale = config_.grad_clip / norm;
  }

  ++t_;
  const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < entries.size(); ++i) {
    auto& values = entries[i].second.values();
    auto& grads = entries[i].second.grad();
    for (std::size_t j = 0; j < values.size(); ++j) {
      const double g = grads[j] * clip_scale;
      m_[i][j] = config_.beta1 * m_[i][j] + (1.0 - config_.beta1) * g;
      v_[i][j] = config_.beta2 * v_[i][j] + (1.0 - config_.beta2) * g * g;
      const double mhat = m_[i][j] / bc1;
      const double vhat = v_[i][j] / bc2;
      values[j] -= config_.lr * mhat / (std::sqrt(vhat) + config_.eps);
      grads[j] = 0.0;
    }
  }
}

double grad_check(const std::function<Tensor()>& build_loss, ParamSet& params,
                  double step, int max_coords_per_param, std::uint64_t seed) {
  params.zero_grad();
  backward(build_loss());
  // Freeze the analytic gradients before perturbing values.
  std::vector<std::vector<double>> analytic;
  for (auto& [name, t] : params.entries()) analytic.push_back(t.grad());

  double max_rel_err = 0.0;
  Rng coord_rng(Rng::derive(seed, 0x67726164ULL));
  for (std::size_t pi = 0; pi < params.entries().size(); ++pi) {
    auto& values = params.entries()[pi].second.values();
    const long count = static_cast<long>(values.size());
    std::vector<long> coords;
    if (count <= max_coords_per_param) {
      coords.resize(count);
      for (long j = 0; j < count; ++j) coords[j] = j;
    } else {
      for (int j = 0; j < max_coords_per_param; ++j)
        coords.push_back(static_cast<long>(coord_rng.uniform_int(count)));
    }
    for (long j : coords) {
      const double saved = values[j];
      values[j] = saved + step;
      const double up = build_loss().scalar();
      values[j] = saved - step;
      const double down = build_loss().scalar();
      values[j] = saved;
      const double fd = (up - down) / (2.0 * step);
      const double an = analytic[pi][j];
      const double denom = std::max({std::abs(fd), std::abs(an), 1e-6});
      max_rel_err = std::max(max_rel_err, std::abs(fd - an) / denom);
    }
  }
  params.zero_grad();
  return max_rel_err;
}

}  // namespace seqcheck::diff
