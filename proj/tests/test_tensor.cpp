#include <doctest.h>

#include <cmath>
#include <functional>
#include <stdexcept>
#include <vector>

#include "seqcheck/optim.hpp"
#include "seqcheck/rng.hpp"
#include "seqcheck/tensor.hpp"

using namespace seqcheck;
using namespace seqcheck::diff;

namespace {

Tensor random_param(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t = Tensor::zeros(std::move(shape), /*requires_grad=*/true);
  for (double& v : t.values()) v = rng.uniform(lo, hi);
  return t;
}

// Fixed projection so the loss gradient is non-uniform across coordinates.
Tensor weighted_sum(const Tensor& x, Rng& rng) {
  Tensor w = Tensor::zeros(x.shape());
  for (double& v : w.values()) v = rng.uniform(0.5, 1.5);
  return sum(mul(x, w));
}

// Runs grad_check on loss = weighted_sum(op(params...)).
double check_op(const std::function<Tensor(ParamSet&)>& op, ParamSet& params,
                std::uint64_t seed) {
  Rng wrng(seed + 1000);
  // The projection weights must be identical across re-evaluations.
  Tensor probe = op(params);
  Tensor w = Tensor::zeros(probe.shape());
  for (double& v : w.values()) v = wrng.uniform(0.5, 1.5);
  return grad_check([&]() { return sum(mul(op(params), w)); }, params, 1e-5, 24, seed);
}

}  // namespace

TEST_CASE("matmul shapes and values") {
  const Tensor a = Tensor::from_values({2, 3}, {1, 2, 3, 4, 5, 6});
  const Tensor b = Tensor::from_values({3, 4}, {1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0});
  const Tensor c = matmul(a, b);
  REQUIRE(c.shape() == Shape{2, 4});
  CHECK(c.values()[0] == 1);
  CHECK(c.values()[1] == 2);
  CHECK(c.values()[2] == 3);
  CHECK(c.values()[3] == 0);
  CHECK(c.values()[4] == 4);

  CHECK_THROWS_AS(matmul(a, Tensor::zeros({4, 2})), std::runtime_error);
}

TEST_CASE("non-finite values are rejected") {
  const Tensor huge = Tensor::full({2, 2}, 1e200);
  CHECK_THROWS_AS(mul(huge, huge), std::runtime_error);
}

TEST_CASE("softmax rows sum to one") {
  Rng rng(1);
  ParamSet p;
  Tensor x = random_param({3, 5}, rng, -4.0, 4.0);
  const Tensor s = softmax(x);
  for (int r = 0; r < 3; ++r) {
    double row = 0;
    for (int c = 0; c < 5; ++c) row += s.values()[r * 5 + c];
    CHECK(row == doctest::Approx(1.0).epsilon(1e-6));
  }
}

TEST_CASE("causal mask yields exact zeros above the diagonal") {
  Rng rng(2);
  Tensor scores = random_param({2, 4, 4}, rng, -3.0, 3.0);
  const Tensor w = causal_masked_softmax(scores);
  for (int b = 0; b < 2; ++b)
    for (int i = 0; i < 4; ++i) {
      double row = 0;
      for (int j = 0; j < 4; ++j) {
        const double v = w.values()[(b * 4 + i) * 4 + j];
        if (j > i) CHECK(v == 0.0);
        row += v;
      }
      CHECK(row == doctest::Approx(1.0).epsilon(1e-6));
    }
}

TEST_CASE("split/merge heads round trip") {
  Rng rng(3);
  Tensor x = random_param({2, 3, 6}, rng);
  const Tensor y = merge_heads(split_heads(x, 2), 2);
  REQUIRE(y.shape() == x.shape());
  for (std::size_t i = 0; i < x.values().size(); ++i)
    CHECK(y.values()[i] == x.values()[i]);
}

TEST_CASE("cross entropy identities") {
  // Uniform logits over C classes -> ln(C).
  const int C = 7;
  const Tensor uniform = Tensor::zeros({2, C});
  const Tensor l1 = cross_entropy_logits(uniform, {3, 5}, -1);
  CHECK(l1.scalar() == doctest::Approx(std::log(double(C))).epsilon(1e-9));

  // Single position, logits (10, 0, 0), target 0.
  const Tensor peaked = Tensor::from_values({1, 3}, {10, 0, 0});
  const Tensor l2 = cross_entropy_logits(peaked, {0}, -1);
  CHECK(l2.scalar() == doctest::Approx(9.0799e-5).epsilon(1e-3));

  // Ignored positions are excluded from the mean.
  const Tensor two = Tensor::from_values({2, 3}, {0, 0, 10, 0, 0, 0});
  const Tensor l3 = cross_entropy_logits(two, {2, 0}, 0);
  // Second row has target 0 = ignore_index, so only the peaked row counts.
  CHECK(l3.scalar() == doctest::Approx(9.0799e-5).epsilon(1e-3));
}

TEST_CASE("cross entropy gradient equals softmax minus one-hot") {
  Tensor logits = Tensor::from_values({1, 4}, {0.5, -1.0, 2.0, 0.0}, true);
  const Tensor loss = cross_entropy_logits(logits, {2}, -1);
  backward(loss);
  // softmax of the row
  double denom = 0;
  std::vector<double> p(4);
  for (int i = 0; i < 4; ++i) denom += std::exp(logits.values()[i]);
  for (int i = 0; i < 4; ++i) p[i] = std::exp(logits.values()[i]) / denom;
  for (int i = 0; i < 4; ++i) {
    const double expected = p[i] - (i == 2 ? 1.0 : 0.0);
    CHECK(logits.grad()[i] == doctest::Approx(expected).epsilon(1e-8));
  }
}

TEST_CASE("all positions ignored is an error") {
  const Tensor logits = Tensor::zeros({1, 3});
  CHECK_THROWS_AS(cross_entropy_logits(logits, {0}, 0), std::runtime_error);
}

TEST_CASE("grad check x squared at 3") {
  ParamSet p;
  Tensor& x = p.add("x", Tensor::from_values({1}, {3.0}, true));
  const double err = grad_check([&]() { return sum(mul(x, x)); }, p, 1e-5, 8, 0);
  CHECK(err < 1e-8);
  // Analytic gradient: d(x^2)/dx = 6 at x = 3.
  p.zero_grad();
  Tensor loss = sum(mul(x, x));
  backward(loss);
  CHECK(x.grad()[0] == doctest::Approx(6.0).epsilon(1e-12));
}

TEST_CASE("per-op gradient checks") {
  Rng rng(100);
  const double tol = 1e-4;

  {
    ParamSet p;
    p.add("a", random_param({3, 4}, rng));
    p.add("b", random_param({4, 5}, rng));
    CHECK(check_op([&](ParamSet& q) { return matmul(q.at("a"), q.at("b")); }, p, 1) < tol);
  }
  {
    ParamSet p;
    p.add("a", random_param({2, 3, 4}, rng));
    p.add("b", random_param({2, 4, 3}, rng));
    CHECK(check_op([&](ParamSet& q) { return matmul(q.at("a"), q.at("b")); }, p, 2) < tol);
  }
  {
    ParamSet p;
    p.add("a", random_param({2, 3, 4}, rng));
    p.add("b", random_param({4, 5}, rng));
    CHECK(check_op([&](ParamSet& q) { return matmul(q.at("a"), q.at("b")); }, p, 3) < tol);
  }
  {
    ParamSet p;
    p.add("a", random_param({2, 3, 4}, rng));
    p.add("b", random_param({4}, rng));  // trailing-suffix broadcast
    CHECK(check_op([&](ParamSet& q) { return add(q.at("a"), q.at("b")); }, p, 4) < tol);
    CHECK(check_op([&](ParamSet& q) { return sub(q.at("a"), q.at("a")); }, p, 5) < tol);
    CHECK(check_op([&](ParamSet& q) { return mul(q.at("a"), q.at("a")); }, p, 6) < tol);
    CHECK(check_op([&](ParamSet& q) { return affine(q.at("a"), 2.5, -0.75); }, p, 7) < tol);
    CHECK(check_op([&](ParamSet& q) { return gelu(q.at("a")); }, p, 8) < tol);
    CHECK(check_op([&](ParamSet& q) { return sigmoid(q.at("a")); }, p, 9) < tol);
    CHECK(check_op([&](ParamSet& q) { return tanh_act(q.at("a")); }, p, 10) < tol);
    CHECK(check_op([&](ParamSet& q) { return softmax(q.at("a")); }, p, 11) < tol);
    CHECK(check_op([&](ParamSet& q) { return transpose_last2(q.at("a")); }, p, 12) < tol);
    CHECK(check_op([&](ParamSet& q) { return split_heads(q.at("a"), 2); }, p, 13) < tol);
    CHECK(check_op([&](ParamSet& q) { return reshape(q.at("a"), {6, 4}); }, p, 14) < tol);
    CHECK(check_op([&](ParamSet& q) { return slice(q.at("a"), 1, 1, 2); }, p, 15) < tol);
  }
  {
    // relu: shift values away from the kink so finite differences are valid.
    ParamSet p;
    Tensor t = random_param({3, 4}, rng);
    for (double& v : t.values()) v += (v >= 0 ? 0.2 : -0.2);
    p.add("a", t);
    CHECK(check_op([&](ParamSet& q) { return relu(q.at("a")); }, p, 16) < tol);
  }
  {
    ParamSet p;
    p.add("x", random_param({2, 3, 4}, rng));
    p.add("g", random_param({4}, rng, 0.5, 1.5));
    p.add("b", random_param({4}, rng));
    CHECK(check_op(
              [&](ParamSet& q) { return layer_norm(q.at("x"), q.at("g"), q.at("b")); }, p,
              17) < tol);
  }
  {
    ParamSet p;
    p.add("s", random_param({2, 3, 3}, rng));
    CHECK(check_op([&](ParamSet& q) { return causal_masked_softmax(q.at("s")); }, p, 18) <
          tol);
  }
  {
    ParamSet p;
    p.add("t", random_param({5, 4}, rng));
    const std::vector<int> ids = {0, 3, 1, 1, 4, 2};
    CHECK(check_op([&](ParamSet& q) { return embedding(q.at("t"), ids, 2, 3); }, p, 19) <
          tol);
  }
  {
    ParamSet p;
    p.add("a", random_param({2, 2, 3}, rng));
    p.add("b", random_param({2, 1, 3}, rng));
    CHECK(check_op(
              [&](ParamSet& q) {
                return concat({q.at("a"), q.at("b")}, 1);
              },
              p, 20) < tol);
  }
  {
    ParamSet p;
    p.add("l", random_param({2, 3, 5}, rng, -2.0, 2.0));
    const std::vector<int> targets = {1, 0, 4, 2, 0, 3};
    CHECK(grad_check([&]() { return cross_entropy_logits(p.at("l"), targets, 0); }, p,
                     1e-5, 24, 21) < tol);
  }
}

TEST_CASE("gradient check of a full attention block") {
  Rng rng(200);
  const int h = 4, heads = 2;
  const long b = 2, t = 3;
  ParamSet p;
  p.add("emb", random_param({6, h}, rng, -0.5, 0.5));
  p.add("ln1.g", random_param({h}, rng, 0.8, 1.2));
  p.add("ln1.b", random_param({h}, rng, -0.1, 0.1));
  for (const char* w : {"wq", "wk", "wv", "wo"}) p.add(w, random_param({h, h}, rng, -0.5, 0.5));
  p.add("ln2.g", random_param({h}, rng, 0.8, 1.2));
  p.add("ln2.b", random_param({h}, rng, -0.1, 0.1));
  p.add("ff1", random_param({h, h}, rng, -0.5, 0.5));
  p.add("ff2", random_param({h, h}, rng, -0.5, 0.5));
  const std::vector<int> tokens = {1, 2, 3, 4, 5, 1};
  const std::vector<int> targets = {2, 3, 1, 5, 1, 2};

  auto build = [&]() {
    Tensor x = embedding(p.at("emb"), tokens, b, t);
    Tensor hn = layer_norm(x, p.at("ln1.g"), p.at("ln1.b"));
    Tensor q = split_heads(matmul(hn, p.at("wq")), heads);
    Tensor k = split_heads(matmul(hn, p.at("wk")), heads);
    Tensor v = split_heads(matmul(hn, p.at("wv")), heads);
    Tensor scores = affine(matmul(q, transpose_last2(k)), 1.0 / std::sqrt(double(h / heads)), 0);
    Tensor ctx = merge_heads(matmul(causal_masked_softmax(scores), v), heads);
    x = add(x, matmul(ctx, p.at("wo")));
    Tensor fn = layer_norm(x, p.at("ln2.g"), p.at("ln2.b"));
    x = add(x, matmul(relu(matmul(fn, p.at("ff1"))), p.at("ff2")));
    Tensor logits = matmul(x, transpose_last2(p.at("emb")));
    return cross_entropy_logits(logits, targets, 0);
  };
  CHECK(grad_check(build, p, 1e-5, 24, 7) < 1e-4);
}

TEST_CASE("gradient check of a gated recurrent cell") {
  Rng rng(300);
  const int h = 4;
  const long b = 2, t = 2;
  ParamSet p;
  p.add("emb", random_param({5, h}, rng, -0.5, 0.5));
  p.add("wx", random_param({h, 3 * h}, rng, -0.5, 0.5));
  p.add("wh", random_param({h, 3 * h}, rng, -0.5, 0.5));
  p.add("bx", random_param({3 * h}, rng, -0.1, 0.1));
  p.add("bh", random_param({3 * h}, rng, -0.1, 0.1));
  p.add("wo", random_param({h, 5}, rng, -0.5, 0.5));
  const std::vector<int> tokens = {1, 2, 3, 4};
  const std::vector<int> targets = {2, 3, 4, 1};

  auto build = [&]() {
    Tensor x = embedding(p.at("emb"), tokens, b, t);
    Tensor xg = add(matmul(x, p.at("wx")), p.at("bx"));
    Tensor hidden = Tensor::zeros({b, h});
    std::vector<Tensor> steps;
    for (long step = 0; step < t; ++step) {
      Tensor xg_t = reshape(slice(xg, 1, step, 1), {b, 3 * h});
      Tensor hg = add(matmul(hidden, p.at("wh")), p.at("bh"));
      Tensor r = sigmoid(add(slice(xg_t, 1, 0, h), slice(hg, 1, 0, h)));
      Tensor z = sigmoid(add(slice(xg_t, 1, h, h), slice(hg, 1, h, h)));
      Tensor n = tanh_act(add(slice(xg_t, 1, 2 * h, h), mul(r, slice(hg, 1, 2 * h, h))));
      hidden = add(n, mul(z, sub(hidden, n)));
      steps.push_back(reshape(hidden, {b, 1, h}));
    }
    Tensor logits = matmul(concat(steps, 1), p.at("wo"));
    return cross_entropy_logits(logits, targets, 0);
  };
  CHECK(grad_check(build, p, 1e-5, 24, 8) < 1e-4);
}

TEST_CASE("adam first step, fixed point, and symmetry") {
  {
    ParamSet p;
    Tensor& x = p.add("x", Tensor::zeros({1}, true));
    x.grad()[0] = 1.0;
    Adam adam({1e-3, 0.9, 0.999, 1e-8, 0.0});
    adam.step(p);
    CHECK(x.values()[0] == doctest::Approx(-1e-3).epsilon(1e-6));
    CHECK(x.grad()[0] == 0.0);  // gradients zeroed after the step
  }
  {
    ParamSet p;
    Tensor& x = p.add("x", Tensor::from_values({2}, {0.5, -0.25}, true));
    Adam adam({1e-3, 0.9, 0.999, 1e-8, 0.0});
    for (int i = 0; i < 5; ++i) adam.step(p);  // zero gradients
    CHECK(x.values()[0] == 0.5);
    CHECK(x.values()[1] == -0.25);
  }
  {
    ParamSet p;
    Tensor& x = p.add("x", Tensor::from_values({2}, {1.0, 1.0}, true));
    x.grad()[0] = 0.37;
    x.grad()[1] = 0.37;
    Adam adam({1e-3, 0.9, 0.999, 1e-8, 0.0});
    adam.step(p);
    CHECK(x.values()[0] == x.values()[1]);
  }
  {
    ParamSet p;
    Tensor& x = p.add("x", Tensor::zeros({1}, true));
    x.grad()[0] = std::numeric_limits<double>::quiet_NaN();
    Adam adam({1e-3, 0.9, 0.999, 1e-8, 0.0});
    CHECK_THROWS_AS(adam.step(p), std::runtime_error);
  }
}

TEST_CASE("dropout identity in eval mode and unbiased in training mode") {
  Rng rng(400);
  Tensor x = Tensor::full({20000}, 1.0);
  Tensor eval_out = dropout(x, 0.3, rng, /*training=*/false);
  for (double v : eval_out.values()) CHECK(v == 1.0);

  Tensor train_out = dropout(x, 0.3, rng, /*training=*/true);
  double mean = 0;
  long zeros = 0;
  for (double v : train_out.values()) {
    mean += v;
    if (v == 0.0) ++zeros;
    else CHECK(v == doctest::Approx(1.0 / 0.7).epsilon(1e-9));
  }
  mean /= double(x.numel());
  CHECK(mean == doctest::Approx(1.0).epsilon(0.02));
  const double sigma = std::sqrt(20000 * 0.3 * 0.7);
  CHECK(std::abs(double(zeros) - 6000.0) < 3 * sigma);
}
