#include "seqcheck/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_set>

#include <Eigen/Core>

#include "seqcheck/common.hpp"

namespace seqcheck::diff {

namespace {

using MatRM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapM = Eigen::Map<MatRM>;
using MapCM = Eigen::Map<const MatRM>;

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
  os << ']';
  return os.str();
}

[[noreturn]] void shape_error(const char* op, const Shape& a, const Shape& b) {
  throw DataError(std::string(op) + ": incompatible shapes " + shape_str(a) + " and " +
                  shape_str(b));
}

NodePtr make_node(Shape shape, bool requires_grad) {
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->requires_grad = requires_grad;
  node->value.resize(static_cast<std::size_t>(node->numel()));
  return node;
}

void check_finite(const char* op, const Node& node) {
  for (double v : node.value) {
    if (!std::isfinite(v))
      throw DataError(std::string(op) + ": non-finite value in output " +
                      shape_str(node.shape));
  }
}

Tensor finish(NodePtr node, const char* op, std::vector<NodePtr> parents,
              std::function<void(Node&)> backprop) {
  check_finite(op, *node);
  if (node->requires_grad) {
    node->parents = std::move(parents);
    node->backprop = std::move(backprop);
  }
  return Tensor(std::move(node));
}

bool any_grad(const Tensor& a) { return a.requires_grad(); }
bool any_grad(const Tensor& a, const Tensor& b) {
  return a.requires_grad() || b.requires_grad();
}

// Elementwise unary op; dfn receives (input value, output value).
template <typename F, typename DF>
Tensor unary_op(const char* name, const Tensor& a, F fn, DF dfn) {
  NodePtr node = make_node(a.shape(), any_grad(a));
  const auto& x = a.values();
  for (std::size_t i = 0; i < x.size(); ++i) node->value[i] = fn(x[i]);
  NodePtr pa = a.node();
  return finish(node, name, {pa}, [pa, dfn](Node& n) {
    if (!pa->requires_grad) return;
    pa->ensure_grad();
    for (std::size_t i = 0; i < n.grad.size(); ++i)
      pa->grad[i] += n.grad[i] * dfn(pa->value[i], n.value[i]);
  });
}

}  // namespace

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return Tensor(make_node(std::move(shape), requires_grad));
}

Tensor Tensor::full(Shape shape, double fill, bool requires_grad) {
  NodePtr node = make_node(std::move(shape), requires_grad);
  std::fill(node->value.begin(), node->value.end(), fill);
  return Tensor(std::move(node));
}

Tensor Tensor::from_values(Shape shape, std::vector<double> values, bool requires_grad) {
  NodePtr node = make_node(std::move(shape), requires_grad);
  if (static_cast<long>(values.size()) != node->numel())
    throw DataError("from_values: value count does not match shape " +
                    shape_str(node->shape));
  node->value = std::move(values);
  return Tensor(std::move(node));
}

double Tensor::scalar() const {
  if (numel() != 1) throw DataError("scalar(): tensor is not a scalar");
  return node_->value[0];
}

void backward(const Tensor& loss) {
  if (loss.numel() != 1) throw DataError("backward: loss must be scalar");
  if (!loss.requires_grad()) return;
  // Iterative post-order DFS; reverse gives a valid topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack{{loss.node().get(), 0}};
  seen.insert(loss.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* parent = node->parents[next++].get();
      if (parent->requires_grad && seen.insert(parent).second) stack.push_back({parent, 0});
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  loss.node()->ensure_grad();
  loss.node()->grad[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* node = *it;
    if (node->backprop) {
      node->ensure_grad();
      node->backprop(*node);
    }
  }
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  long batches = 1, m = 0, k = 0, n = 0;
  bool shared_b = false;
  if (sa.size() == 2 && sb.size() == 2) {
    m = sa[0], k = sa[1], n = sb[1];
    if (sb[0] != k) shape_error("matmul", sa, sb);
  } else if (sa.size() == 3 && sb.size() == 3) {
    batches = sa[0], m = sa[1], k = sa[2], n = sb[2];
    if (sb[0] != batches || sb[1] != k) shape_error("matmul", sa, sb);
  } else if (sa.size() == 3 && sb.size() == 2) {
    batches = sa[0], m = sa[1], k = sa[2], n = sb[1];
    if (sb[0] != k) shape_error("matmul", sa, sb);
    shared_b = true;
  } else {
    shape_error("matmul", sa, sb);
  }
  Shape out_shape = sa.size() == 2 ? Shape{m, n} : Shape{batches, m, n};
  NodePtr node = make_node(std::move(out_shape), any_grad(a, b));
  const double* pa = a.values().data();
  const double* pb = b.values().data();
  double* pc = node->value.data();
  for (long i = 0; i < batches; ++i) {
    MapCM ma(pa + i * m * k, m, k);
    MapCM mb(shared_b ? pb : pb + i * k * n, k, n);
    MapM mc(pc + i * m * n, m, n);
    mc.noalias() = ma * mb;
  }
  NodePtr na = a.node(), nb = b.node();
  return finish(node, "matmul", {na, nb},
                [na, nb, batches, m, k, n, shared_b](Node& node) {
    const double* pa = na->value.data();
    const double* pb = nb->value.data();
    const double* pg = node.grad.data();
    if (na->requires_grad) {
      na->ensure_grad();
      double* pda = na->grad.data();
      for (long i = 0; i < batches; ++i) {
        MapCM mg(pg + i * m * n, m, n);
        MapCM mb(shared_b ? pb : pb + i * k * n, k, n);
        MapM mda(pda + i * m * k, m, k);
        mda.noalias() += mg * mb.transpose();
      }
    }
    if (nb->requires_grad) {
      nb->ensure_grad();
      double* pdb = nb->grad.data();
      for (long i = 0; i < batches; ++i) {
        MapCM ma(pa + i * m * k, m, k);
        MapCM mg(pg + i * m * n, m, n);
        MapM mdb(shared_b ? pdb : pdb + i * k * n, k, n);
        mdb.noalias() += ma.transpose() * mg;
      }
    }
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  const bool same = sa == sb;
  // Otherwise b must be a trailing suffix of a's shape (bias broadcast).
  if (!same) {
    if (sb.size() > sa.size()) shape_error("add", sa, sb);
    for (std::size_t i = 0; i < sb.size(); ++i)
      if (sb[sb.size() - 1 - i] != sa[sa.size() - 1 - i]) shape_error("add", sa, sb);
  }
  NodePtr node = make_node(sa, any_grad(a, b));
  const auto& xa = a.values();
  const auto& xb = b.values();
  const std::size_t nb_count = xb.size();
  for (std::size_t i = 0; i < xa.size(); ++i)
    node->value[i] = xa[i] + xb[i % nb_count];
  NodePtr na = a.node(), nbp = b.node();
  return finish(node, "add", {na, nbp}, [na, nbp, nb_count](Node& n) {
    if (na->requires_grad) {
      na->ensure_grad();
      for (std::size_t i = 0; i < n.grad.size(); ++i) na->grad[i] += n.grad[i];
    }
    if (nbp->requires_grad) {
      nbp->ensure_grad();
      for (std::size_t i = 0; i < n.grad.size(); ++i)
        nbp->grad[i % nb_count] += n.grad[i];
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) shape_error("sub", a.shape(), b.shape());
  NodePtr node = make_node(a.shape(), any_grad(a, b));
  const auto& xa = a.values();
  const auto& xb = b.values();
  for (std::size_t i = 0; i < xa.size(); ++i) node->value[i] = xa[i] - xb[i];
  NodePtr na = a.node(), nb = b.node();
  return finish(node, "sub", {na, nb}, [na, nb](Node& n) {
    if (na->requires_grad) {
      na->ensure_grad();
      for (std::size_t i = 0; i < n.grad.size(); ++i) na->grad[i] += n.grad[i];
    }
    if (nb->requires_grad) {
      nb->ensure_grad();
      for (std::size_t i = 0; i < n.grad.size(); ++i) nb->grad[i] -= n.grad[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) shape_error("mul", a.shape(), b.shape());
  NodePtr node = make_node(a.shape(), any_grad(a, b));
  const auto& xa = a.values();
  const auto& xb = b.values();
  for (std::size_t i = 0; i < xa.size(); ++i) node->value[i] = xa[i] * xb[i];
  NodePtr na = a.node(), nb = b.node();
  return finish(node, "mul", {na, nb}, [na, nb](Node& n) {
    if (na->requires_grad) {
      na->ensure_grad();
      for (std::size_t i = 0; i < n.grad.size(); ++i)
        na->grad[i] += n.grad[i] * nb->value[i];
    }
    if (nb->requires_grad) {
      nb->ensure_grad();
      for (std::size_t i = 0; i < n.grad.size(); ++i)
        nb->grad[i] += n.grad[i] * na->value[i];
    }
  });
}

Tensor affine(const Tensor& a, double mul, double add) {
  return unary_op("affine", a,
                  [mul, add](double x) { return mul * x + add; },
                  [mul](double, double) { return mul; });
}

Tensor relu(const Tensor& a) {
  return unary_op("relu", a,
                  [](double x) { return x > 0.0 ? x : 0.0; },
                  [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor gelu(const Tensor& a) {
  constexpr double c = 0.7978845608028654;  // sqrt(2/pi)
  constexpr double k = 0.044715;
  return unary_op("gelu", a,
                  [](double x) {
                    const double u = c * (x + k * x * x * x);
                    return 0.5 * x * (1.0 + std::tanh(u));
                  },
                  [](double x, double) {
                    const double u = c * (x + k * x * x * x);
                    const double t = std::tanh(u);
                    const double sech2 = 1.0 - t * t;
                    return 0.5 * (1.0 + t) + 0.5 * x * sech2 * c * (1.0 + 3.0 * k * x * x);
                  });
}

Tensor sigmoid(const Tensor& a) {
  return unary_op("sigmoid", a,
                  [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
                  [](double, double y) { return y * (1.0 - y); });
}

Tensor tanh_act(const Tensor& a) {
  return unary_op("tanh", a,
                  [](double x) { return std::tanh(x); },
                  [](double, double y) { return 1.0 - y * y; });
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  const Shape& sx = x.shape();
  const long d = sx.back();
  if (gamma.shape() != Shape{d} || beta.shape() != Shape{d})
    shape_error("layer_norm", sx, gamma.shape());
  const long rows = x.numel() / d;
  NodePtr node = make_node(sx, x.requires_grad() || gamma.requires_grad() ||
                                   beta.requires_grad());
  // Cache per-row inverse stddev and normalized values for the backward pass.
  auto inv_std = std::make_shared<std::vector<double>>(rows);
  auto xhat = std::make_shared<std::vector<double>>(rows * d);
  const auto& xv = x.values();
  const auto& gv = gamma.values();
  const auto& bv = beta.values();
  for (long r = 0; r < rows; ++r) {
    const double* row = xv.data() + r * d;
    double mean = 0.0;
    for (long j = 0; j < d; ++j) mean += row[j];
    mean /= d;
    double var = 0.0;
    for (long j = 0; j < d; ++j) var += (row[j] - mean) * (row[j] - mean);
    var /= d;
    const double inv = 1.0 / std::sqrt(var + eps);
    (*inv_std)[r] = inv;
    for (long j = 0; j < d; ++j) {
      const double xh = (row[j] - mean) * inv;
      (*xhat)[r * d + j] = xh;
      node->value[r * d + j] = gv[j] * xh + bv[j];
    }
  }
  NodePtr nx = x.node(), ng = gamma.node(), nb = beta.node();
  return finish(node, "layer_norm", {nx, ng, nb},
                [nx, ng, nb, rows, d, inv_std, xhat](Node& n) {
    for (long r = 0; r < rows; ++r) {
      const double* dy = n.grad.data() + r * d;
      const double* xh = xhat->data() + r * d;
      if (ng->requires_grad) {
        ng->ensure_grad();
        for (long j = 0; j < d; ++j) ng->grad[j] += dy[j] * xh[j];
      }
      if (nb->requires_grad) {
        nb->ensure_grad();
        for (long j = 0; j < d; ++j) nb->grad[j] += dy[j];
      }
      if (nx->requires_grad) {
        nx->ensure_grad();
        double mean_dxhat = 0.0, mean_dxhat_xhat = 0.0;
        for (long j = 0; j < d; ++j) {
          const double dxh = dy[j] * ng->value[j];
          mean_dxhat += dxh;
          mean_dxhat_xhat += dxh * xh[j];
        }
        mean_dxhat /= d;
        mean_dxhat_xhat /= d;
        const double inv = (*inv_std)[r];
        double* dx = nx->grad.data() + r * d;
        for (long j = 0; j < d; ++j) {
          const double dxh = dy[j] * ng->value[j];
          dx[j] += inv * (dxh - mean_dxhat - xh[j] * mean_dxhat_xhat);
        }
      }
    }
  });
}

Tensor softmax(const Tensor& x) {
  const long d = x.shape().back();
  const long rows = x.numel() / d;
  NodePtr node = make_node(x.shape(), x.requires_grad());
  const auto& xv = x.values();
  for (long r = 0; r < rows; ++r) {
    const double* row = xv.data() + r * d;
    double* out = node->value.data() + r * d;
    double mx = row[0];
    for (long j = 1; j < d; ++j) mx = std::max(mx, row[j]);
    double z = 0.0;
    for (long j = 0; j < d; ++j) z += (out[j] = std::exp(row[j] - mx));
    for (long j = 0; j < d; ++j) out[j] /= z;
  }
  NodePtr nx = x.node();
  return finish(node, "softmax", {nx}, [nx, rows, d](Node& n) {
    if (!nx->requires_grad) return;
    nx->ensure_grad();
    for (long r = 0; r < rows; ++r) {
      const double* y = n.value.data() + r * d;
      const double* dy = n.grad.data() + r * d;
      double dot = 0.0;
      for (long j = 0; j < d; ++j) dot += y[j] * dy[j];
      double* dx = nx->grad.data() + r * d;
      for (long j = 0; j < d; ++j) dx[j] += y[j] * (dy[j] - dot);
    }
  });
}

Tensor causal_masked_softmax(const Tensor& scores) {
  const Shape& s = scores.shape();
  if (s.size() != 3 || s[1] != s[2])
    throw DataError("causal_masked_softmax: expected [B,T,T], got " + shape_str(s));
  const long b = s[0], t = s[1];
  NodePtr node = make_node(s, scores.requires_grad());
  const auto& xv = scores.values();
  for (long i = 0; i < b; ++i) {
    for (long p = 0; p < t; ++p) {
      const double* row = xv.data() + (i * t + p) * t;
      double* out = node->value.data() + (i * t + p) * t;
      double mx = row[0];
      for (long q = 1; q <= p; ++q) mx = std::max(mx, row[q]);
      double z = 0.0;
      for (long q = 0; q <= p; ++q) z += (out[q] = std::exp(row[q] - mx));
      for (long q = 0; q <= p; ++q) out[q] /= z;
      for (long q = p + 1; q < t; ++q) out[q] = 0.0;
    }
  }
  NodePtr nx = scores.node();
  return finish(node, "causal_masked_softmax", {nx}, [nx, b, t](Node& n) {
    if (!nx->requires_grad) return;
    nx->ensure_grad();
    for (long i = 0; i < b; ++i) {
      for (long p = 0; p < t; ++p) {
        const double* y = n.value.data() + (i * t + p) * t;
        const double* dy = n.grad.data() + (i * t + p) * t;
        double dot = 0.0;
        for (long q = 0; q <= p; ++q) dot += y[q] * dy[q];
        double* dx = nx->grad.data() + (i * t + p) * t;
        for (long q = 0; q <= p; ++q) dx[q] += y[q] * (dy[q] - dot);
      }
    }
  });
}

Tensor transpose_last2(const Tensor& x) {
  const Shape& s = x.shape();
  if (s.size() < 2) throw DataError("transpose_last2: rank must be >= 2");
  Shape out_shape = s;
  std::swap(out_shape[s.size() - 1], out_shape[s.size() - 2]);
  const long m = s[s.size() - 2], n = s[s.size() - 1];
  const long batches = x.numel() / (m * n);
  NodePtr node = make_node(std::move(out_shape), x.requires_grad());
  const auto& xv = x.values();
  for (long i = 0; i < batches; ++i)
    for (long r = 0; r < m; ++r)
      for (long c = 0; c < n; ++c)
        node->value[i * m * n + c * m + r] = xv[i * m * n + r * n + c];
  NodePtr nx = x.node();
  return finish(node, "transpose_last2", {nx}, [nx, batches, m, n](Node& node) {
    if (!nx->requires_grad) return;
    nx->ensure_grad();
    for (long i = 0; i < batches; ++i)
      for (long r = 0; r < m; ++r)
        for (long c = 0; c < n; ++c)
          nx->grad[i * m * n + r * n + c] += node.grad[i * m * n + c * m + r];
  });
}

namespace {

// Shared mover for split_heads/merge_heads index permutation.
template <bool kForward>
void move_heads(const double* src, double* dst, long b, long t, long h, long heads) {
  const long dh = h / heads;
  for (long i = 0; i < b; ++i)
    for (long a = 0; a < heads; ++a)
      for (long p = 0; p < t; ++p)
        for (long j = 0; j < dh; ++j) {
          const long split_idx = (((i * heads + a) * t) + p) * dh + j;
          const long full_idx = (i * t + p) * h + a * dh + j;
          if constexpr (kForward)
            dst[split_idx] = src[full_idx];
          else
            dst[full_idx] = src[split_idx];
        }
}

}  // namespace

Tensor split_heads(const Tensor& x, int heads) {
  const Shape& s = x.shape();
  if (s.size() != 3 || s[2] % heads != 0)
    throw DataError("split_heads: expected [B,T,H] with H divisible by heads, got " +
                    shape_str(s));
  const long b = s[0], t = s[1], h = s[2];
  NodePtr node = make_node({b * heads, t, h / heads}, x.requires_grad());
  move_heads<true>(x.values().data(), node->value.data(), b, t, h, heads);
  NodePtr nx = x.node();
  return finish(node, "split_heads", {nx}, [nx, b, t, h, heads](Node& node) {
    if (!nx->requires_grad) return;
    nx->ensure_grad();
    // Accumulate by moving back: the permutation is a bijection, so direct
    // assignment of += through the inverse index is safe.
    std::vector<double> back(node.grad.size());
    move_heads<false>(node.grad.data(), back.data(), b, t, h, heads);
    for (std::size_t i = 0; i < back.size(); ++i) nx->grad[i] += back[i];
  });
}

Tensor merge_heads(const Tensor& x, int heads) {
  const Shape& s = x.shape();
  if (s.size() != 3 || s[0] % heads != 0)
    throw DataError("merge_heads: expected [B*heads,T,Dh], got " + shape_str(s));
  const long b = s[0] / heads, t = s[1], h = s[2] * heads;
  NodePtr node = make_node({b, t, h}, x.requires_grad());
  move_heads<false>(x.values().data(), node->value.data(), b, t, h, heads);
  NodePtr nx = x.node();
  return finish(node, "merge_heads", {nx}, [nx, b, t, h, heads](Node& node) {
    if (!nx->requires_grad) return;
    nx->ensure_grad();
    std::vector<double> back(node.grad.size());
    move_heads<true>(node.grad.data(), back.data(), b, t, h, heads);
    for (std::size_t i = 0; i < back.size(); ++i) nx->grad[i] += back[i];
  });
}

Tensor embedding(const Tensor& table, const std::vector<int>& ids, long batch, long len) {
  const Shape& s = table.shape();
  if (s.size() != 2) throw DataError("embedding: table must be 2D");
  if (static_cast<long>(ids.size()) != batch * len)
    throw DataError("embedding: id count does not match batch*len");
  const long v = s[0], h = s[1];
  for (int id : ids)
    if (id < 0 || id >= v) throw DataError("embedding: id out of range");
  NodePtr node = make_node({batch, len, h}, table.requires_grad());
  const auto& tv = table.values();
  for (std::size_t i = 0; i < ids.size(); ++i)
    std::copy_n(tv.data() + static_cast<long>(ids[i]) * h, h, node->value.data() + i * h);
  NodePtr nt = table.node();
  auto ids_copy = std::make_shared<std::vector<int>>(ids);
  return finish(node, "embedding", {nt}, [nt, ids_copy, h](Node& node) {
    if (!nt->requires_grad) return;
    nt->ensure_grad();
    for (std::size_t i = 0; i < ids_copy->size(); ++i) {
      const double* g = node.grad.data() + i * h;
      double* dst = nt->grad.data() + static_cast<long>((*ids_copy)[i]) * h;
      for (long j = 0; j < h; ++j) dst[j] += g[j];
    }
  });
}

Tensor dropout(const Tensor& x, double p, Rng& rng, bool training) {
  if (p < 0.0 || p >= 1.0) throw ConfigError("dropout: p must be in [0,1)");
  if (!training || p == 0.0) return x;
  const double scale = 1.0 / (1.0 - p);
  auto mask = std::make_shared<std::vector<double>>(x.values().size());
  NodePtr node = make_node(x.shape(), x.requires_grad());
  const auto& xv = x.values();
  for (std::size_t i = 0; i < xv.size(); ++i) {
    (*mask)[i] = rng.uniform() < p ? 0.0 : scale;
    node->value[i] = xv[i] * (*mask)[i];
  }
  NodePtr nx = x.node();
  return finish(node, "dropout", {nx}, [nx, mask](Node& node) {
    if (!nx->requires_grad) return;
    nx->ensure_grad();
    for (std::size_t i = 0; i < node.grad.size(); ++i)
      nx->grad[i] += node.grad[i] * (*mask)[i];
  });
}

Tensor concat(const std::vector<Tensor>& parts, int axis) {
  if (parts.empty()) throw DataError("concat: no inputs");
  const Shape& s0 = parts[0].shape();
  const int rank = static_cast<int>(s0.size());
  const int ax = axis < 0 ? rank + axis : axis;
  if (ax < 0 || ax >= rank) throw DataError("concat: axis out of range");
  Shape out_shape = s0;
  out_shape[ax] = 0;
  bool rg = false;
  for (const Tensor& part : parts) {
    const Shape& s = part.shape();
    if (static_cast<int>(s.size()) != rank) shape_error("concat", s0, s);
    for (int i = 0; i < rank; ++i)
      if (i != ax && s[i] != s0[i]) shape_error("concat", s0, s);
    out_shape[ax] += s[ax];
    rg = rg || part.requires_grad();
  }
  long outer = 1, inner = 1;
  for (int i = 0; i < ax; ++i) outer *= s0[i];
  for (int i = ax + 1; i < rank; ++i) inner *= s0[i];
  NodePtr node = make_node(out_shape, rg);
  const long out_stride = out_shape[ax] * inner;
  long offset = 0;
  std::vector<NodePtr> parents;
  std::vector<long> offsets, strides;
  for (const Tensor& part : parts) {
    const long stride = part.shape()[ax] * inner;
    for (long o = 0; o < outer; ++o)
      std::copy_n(part.values().data() + o * stride, stride,
                  node->value.data() + o * out_stride + offset);
    parents.push_back(part.node());
    offsets.push_back(offset);
    strides.push_back(stride);
    offset += stride;
  }
  return finish(node, "concat", parents,
                [parents, offsets, strides, outer, out_stride](Node& node) {
    for (std::size_t pi = 0; pi < parents.size(); ++pi) {
      const NodePtr& parent = parents[pi];
      if (!parent->requires_grad) continue;
      parent->ensure_grad();
      for (long o = 0; o < outer; ++o) {
        const double* g = node.grad.data() + o * out_stride + offsets[pi];
        double* dst = parent->grad.data() + o * strides[pi];
        for (long j = 0; j < strides[pi]; ++j) dst[j] += g[j];
      }
    }
  });
}

Tensor slice(const Tensor& x, int axis, long start, long len) {
  const Shape& s = x.shape();
  const int rank = static_cast<int>(s.size());
  const int ax = axis < 0 ? rank + axis : axis;
  if (ax < 0 || ax >= rank || start < 0 || len < 1 || start + len > s[ax])
    throw DataError("slice: out-of-range slice of " + shape_str(s));
  long outer = 1, inner = 1;
  for (int i = 0; i < ax; ++i) outer *= s[i];
  for (int i = ax + 1; i < rank; ++i) inner *= s[i];
  Shape out_shape = s;
  out_shape[ax] = len;
  NodePtr node = make_node(out_shape, x.requires_grad());
  const long in_stride = s[ax] * inner;
  const long out_stride = len * inner;
  for (long o = 0; o < outer; ++o)
    std::copy_n(x.values().data() + o * in_stride + start * inner, out_stride,
                node->value.data() + o * out_stride);
  NodePtr nx = x.node();
  return finish(node, "slice", {nx},
                [nx, outer, inner, in_stride, out_stride, start](Node& node) {
    if (!nx->requires_grad) return;
    nx->ensure_grad();
    for (long o = 0; o < outer; ++o) {
      const double* g = node.grad.data() + o * out_stride;
      double* dst = nx->grad.data() + o * in_stride + start * inner;
      for (long j = 0; j < out_stride; ++j) dst[j] += g[j];
    }
  });
}

Tensor reshape(const Tensor& x, Shape shape) {
  NodePtr node = make_node(std::move(shape), x.requires_grad());
  if (node->numel() != x.numel())
    throw DataError("reshape: element count mismatch " + shape_str(x.shape()) + " -> " +
                    shape_str(node->shape));
  node->value = x.values();
  NodePtr nx = x.node();
  return finish(node, "reshape", {nx}, [nx](Node& node) {
    if (!nx->requires_grad) return;
    nx->ensure_grad();
    for (std::size_t i = 0; i < node.grad.size(); ++i) nx->grad[i] += node.grad[i];
  });
}

Tensor sum(const Tensor& x) {
  NodePtr node = make_node({1}, x.requires_grad());
  double acc = 0.0;
  for (double v : x.values()) acc += v;
  node->value[0] = acc;
  NodePtr nx = x.node();
  return finish(node, "sum", {nx}, [nx](Node& node) {
    if (!nx->requires_grad) return;
    nx->ensure_grad();
    for (double& g : nx->grad) g += node.grad[0];
  });
}

Tensor cross_entropy_logits(const Tensor& logits, const std::vector<int>& targets,
                            int ignore_index) {
  const Shape& s = logits.shape();
  if (s.size() != 2 && s.size() != 3)
    throw DataError("cross_entropy_logits: logits must be [N,V] or [B,T,V]");
  const long v = s.back();
  const long rows = logits.numel() / v;
  if (static_cast<long>(targets.size()) != rows)
    throw DataError("cross_entropy_logits: target count does not match positions");
  long n_eval = 0;
  double loss = 0.0;
  // Cached softmax rows for the backward pass (only evaluated rows).
  auto probs = std::make_shared<std::vector<double>>();
  if (logits.requires_grad()) probs->resize(rows * v);
  const auto& xv = logits.values();
  for (long r = 0; r < rows; ++r) {
    const int target = targets[r];
    if (target == ignore_index) continue;
    if (target < 0 || target >= v)
      throw DataError("cross_entropy_logits: target out of range");
    const double* row = xv.data() + r * v;
    double mx = row[0];
    for (long j = 1; j < v; ++j) mx = std::max(mx, row[j]);
    double z = 0.0;
    for (long j = 0; j < v; ++j) z += std::exp(row[j] - mx);
    loss += std::log(z) + mx - row[target];
    if (logits.requires_grad()) {
      double* p = probs->data() + r * v;
      for (long j = 0; j < v; ++j) p[j] = std::exp(row[j] - mx) / z;
    }
    ++n_eval;
  }
  if (n_eval == 0) throw DataError("cross_entropy_logits: all positions ignored");
  NodePtr node = make_node({1}, logits.requires_grad());
  node->value[0] = loss / static_cast<double>(n_eval);
  NodePtr nx = logits.node();
  auto targets_copy = std::make_shared<std::vector<int>>(targets);
  return finish(node, "cross_entropy_logits", {nx},
                [nx, probs, targets_copy, v, rows, n_eval, ignore_index](Node& node) {
    if (!nx->requires_grad) return;
    nx->ensure_grad();
    const double upstream = node.grad[0] / static_cast<double>(n_eval);
    for (long r = 0; r < rows; ++r) {
      const int target = (*targets_copy)[r];
      if (target == ignore_index) continue;
      const double* p = probs->data() + r * v;
      double* dst = nx->grad.data() + r * v;
      for (long j = 0; j < v; ++j) dst[j] += upstream * p[j];
      dst[target] -= upstream;
    }
  });
}

}  // namespace seqcheck::diff
