#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "asrlab/errors.hpp"
#include "asrlab/graph.hpp"
#include "asrlab/tensor.hpp"
#include "asrlab/util.hpp"

using namespace asrlab;

namespace {

Tensor random_tensor(Shape s, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(s));
  for (double& x : t.v) x = rng.uniform(lo, hi);
  return t;
}

}  // namespace

TEST_CASE("log_sum_exp basics") {
  // single element is exact
  double x = 1.2345678901234;
  std::vector<double> one{x};
  CHECK(log_sum_exp(one) == x);

  std::vector<double> two{0.0, 0.0};
  CHECK(log_sum_exp(two) == doctest::Approx(std::log(2.0)).epsilon(1e-15));

  // evaluated from the definition in extended precision
  std::vector<double> three{1.0, 2.0, 3.0};
  CHECK(log_sum_exp(three) == doctest::Approx(3.40760596444438).epsilon(1e-12));

  std::vector<double> empty;
  CHECK_THROWS_AS(log_sum_exp(empty), ArgError);
}

TEST_CASE("log_sum_exp stability under large shifts") {
  std::vector<double> v{1000.0, 1000.0};
  CHECK(log_sum_exp(v) == doctest::Approx(1000.0 + std::log(2.0)));
  std::vector<double> w{-1e9, -1e9 + 1.0};
  CHECK(std::isfinite(log_sum_exp(w)));
}

TEST_CASE("softmax examples and invariants") {
  auto p = softmax_vec(std::vector<double>{0.0, 0.0});
  CHECK(p[0] == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(p[1] == doctest::Approx(0.5).epsilon(1e-15));

  auto q = softmax_vec(std::vector<double>{std::log(1.0), std::log(3.0)});
  CHECK(q[0] == doctest::Approx(0.25).epsilon(1e-14));
  CHECK(q[1] == doctest::Approx(0.75).epsilon(1e-14));

  auto u = softmax_vec(std::vector<double>{5.0, 5.0, 5.0, 5.0});
  for (double x : u) CHECK(x == doctest::Approx(0.25).epsilon(1e-15));

  // sums to 1 within 1e-12, shift invariance, positivity
  Rng rng(7);
  for (int it = 0; it < 50; ++it) {
    std::vector<double> v(static_cast<size_t>(rng.uniform_int(1, 9)));
    for (double& x : v) x = rng.uniform(-30.0, 30.0);
    auto a = softmax_vec(v);
    double sum = 0.0;
    for (double x : a) {
      CHECK(x > 0.0);
      sum += x;
    }
    CHECK(std::abs(sum - 1.0) < 1e-12);
    std::vector<double> shifted = v;
    for (double& x : shifted) x += 123.456;
    auto b = softmax_vec(shifted);
    for (size_t i = 0; i < a.size(); ++i) CHECK(a[i] == doctest::Approx(b[i]).epsilon(1e-12));
  }
}

TEST_CASE("layer_norm examples") {
  {
    std::vector<double> x{1.0, 3.0}, gamma{1.0, 1.0}, beta{0.0, 0.0};
    auto y = layer_norm_vec(x, gamma, beta, 0.0);
    CHECK(y[0] == doctest::Approx(-1.0).epsilon(1e-12));
    CHECK(y[1] == doctest::Approx(1.0).epsilon(1e-12));
  }
  {
    // constant input with eps > 0 collapses to beta
    std::vector<double> x{4.0, 4.0, 4.0}, gamma{2.0, 2.0, 2.0}, beta{0.5, 0.5, 0.5};
    auto y = layer_norm_vec(x, gamma, beta, 1e-5);
    for (double v : y) CHECK(v == doctest::Approx(0.5).epsilon(1e-12));
  }
  {
    std::vector<double> x{0.0, 2.0, 4.0}, gamma{2.0, 2.0, 2.0}, beta{1.0, 1.0, 1.0};
    auto y = layer_norm_vec(x, gamma, beta, 0.0);
    CHECK(y[0] == doctest::Approx(-1.449).epsilon(1e-3));
    CHECK(y[1] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(y[2] == doctest::Approx(3.449).epsilon(1e-3));
  }
  {
    std::vector<double> x{1.0, 2.0}, gamma{1.0}, beta{0.0, 0.0};
    CHECK_THROWS_AS(layer_norm_vec(x, gamma, beta, 0.0), ArgError);
  }
}

TEST_CASE("grad_check on x^2") {
  Tensor point = Tensor::scalar(3.0);
  double err = grad_check(
      [](Graph& g, Var x) {
        (void)g;
        return mul(x, x);
      },
      point, 1e-5);
  CHECK(err <= 1e-8);
}

TEST_CASE("grad_check on weighted softmax, dim 5") {
  Rng rng(11);
  Tensor w = random_tensor({1, 5}, rng);
  Tensor point = random_tensor({1, 5}, rng);
  double err = grad_check(
      [&w](Graph& g, Var x) {
        (void)g;
        return dot_const(softmax_rows(x), w);
      },
      point, 1e-5);
  CHECK(err <= 1e-6);
}

TEST_CASE("grad_check rejects non-scalar functions and bad steps") {
  Tensor point = random_tensor({2, 2}, *new Rng(1));
  CHECK_THROWS_AS(grad_check([](Graph&, Var x) { return x; }, point, 1e-5), ArgError);
  CHECK_THROWS_AS(grad_check([](Graph&, Var x) { return sum_all(x); }, point, 1e-2), ArgError);
}

TEST_CASE("elementwise and matmul gradients") {
  Rng rng(42);
  for (int it = 0; it < 10; ++it) {
    Tensor a = random_tensor({3, 4}, rng);
    Tensor b = random_tensor({4, 2}, rng);
    Tensor w = random_tensor({3, 2}, rng);
    double err = grad_check(
        [&](Graph& g, Var x) {
          Var bb = g.leaf(b);
          return dot_const(matmul(x, bb), w);
        },
        a, 1e-5);
    CHECK(err <= 1e-7);
    // gradient wrt the right operand too
    double err2 = grad_check(
        [&](Graph& g, Var x) {
          Var aa = g.leaf(a);
          return dot_const(matmul(aa, x), w);
        },
        b, 1e-5);
    CHECK(err2 <= 1e-7);
  }
}

TEST_CASE("layer_norm / silu / sigmoid / log_softmax gradients") {
  Rng rng(5);
  Tensor x = random_tensor({4, 6}, rng);
  Tensor gamma = random_tensor({6}, rng, 0.5, 1.5);
  Tensor beta = random_tensor({6}, rng);
  Tensor w = random_tensor({4, 6}, rng);

  double e1 = grad_check(
      [&](Graph& g, Var xx) {
        Var gm = g.leaf(gamma);
        Var bt = g.leaf(beta);
        return dot_const(layer_norm_rows(xx, gm, bt, 1e-5), w);
      },
      x, 1e-5);
  CHECK(e1 <= 1e-6);

  double e2 = grad_check([&](Graph&, Var xx) { return dot_const(silu(xx), w); }, x, 1e-5);
  CHECK(e2 <= 1e-6);

  double e3 = grad_check([&](Graph&, Var xx) { return dot_const(sigmoid(xx), w); }, x, 1e-5);
  CHECK(e3 <= 1e-6);

  double e4 = grad_check([&](Graph&, Var xx) { return dot_const(log_softmax_rows(xx), w); }, x, 1e-5);
  CHECK(e4 <= 1e-6);
}

TEST_CASE("structural op gradients: concat, slice, unfold, dwconv, embedding") {
  Rng rng(9);
  Tensor x = random_tensor({5, 4}, rng);

  {
    Tensor w = random_tensor({5, 8}, rng);
    double e = grad_check(
        [&](Graph& g, Var xx) {
          Var other = g.leaf(random_tensor({5, 4}, *new Rng(77)));
          return dot_const(concat_cols({xx, other}), w);
        },
        x, 1e-5);
    CHECK(e <= 1e-7);
  }
  {
    Tensor w = random_tensor({5, 2}, rng);
    double e = grad_check([&](Graph&, Var xx) { return dot_const(slice_cols(xx, 1, 2), w); }, x, 1e-5);
    CHECK(e <= 1e-7);
  }
  {
    Tensor xt = random_tensor({9, 3}, rng);
    Tensor w = random_tensor({4, 9}, rng);
    double e = grad_check([&](Graph&, Var xx) { return dot_const(unfold_k3s2(xx), w); }, xt, 1e-5);
    CHECK(e <= 1e-7);
  }
  {
    Tensor xt = random_tensor({7, 3}, rng);
    Tensor kw = random_tensor({5, 3}, rng);
    Tensor kb = random_tensor({3}, rng);
    Tensor w = random_tensor({7, 3}, rng);
    double e = grad_check(
        [&](Graph& g, Var xx) {
          Var ww = g.leaf(kw);
          Var bb = g.leaf(kb);
          return dot_const(dwconv_time(xx, ww, bb), w);
        },
        xt, 1e-5);
    CHECK(e <= 1e-6);
    // and wrt the kernel
    double e2 = grad_check(
        [&](Graph& g, Var ww) {
          Var xx = g.leaf(xt);
          Var bb = g.leaf(kb);
          return dot_const(dwconv_time(xx, ww, bb), w);
        },
        kw, 1e-5);
    CHECK(e2 <= 1e-6);
  }
  {
    Tensor table = random_tensor({6, 3}, rng);
    std::vector<int> ids{1, 4, 1};
    Tensor w = random_tensor({3, 3}, rng);
    double e = grad_check(
        [&](Graph&, Var tb) { return dot_const(embedding_rows(tb, ids, 2.0), w); }, table, 1e-5);
    CHECK(e <= 1e-7);

    // grad flows only to looked-up rows
    Graph g;
    Var tb = g.leaf(table);
    Var out = dot_const(embedding_rows(tb, ids, 2.0), w);
    g.backward(out);
    const Tensor& gt = g.grad(tb);
    for (int c = 0; c < 3; ++c) {
      CHECK(gt.at(0, c) == 0.0);
      CHECK(gt.at(2, c) == 0.0);
      CHECK(gt.at(3, c) == 0.0);
      CHECK(gt.at(5, c) == 0.0);
    }
  }
}

TEST_CASE("bce_mean gradient and mask behaviour") {
  Rng rng(13);
  Tensor logits = random_tensor({3, 4}, rng);
  Tensor targets({3, 4});
  for (double& t : targets.v) t = rng.uniform() < 0.5 ? 1.0 : 0.0;
  std::vector<uint8_t> keep{1, 0, 1};

  double e = grad_check(
      [&](Graph&, Var x) { return bce_mean(sigmoid(x), targets, keep); }, logits, 1e-5);
  CHECK(e <= 1e-6);

  // perturbing a masked row leaves the loss unchanged
  Graph g1(false);
  double base = bce_mean(sigmoid(g1.leaf(logits)), targets, keep).val().v[0];
  Tensor perturbed = logits;
  perturbed.at(1, 2) += 5.0;
  Graph g2(false);
  double after = bce_mean(sigmoid(g2.leaf(perturbed)), targets, keep).val().v[0];
  CHECK(base == after);
}

TEST_CASE("forward determinism") {
  Rng rng(21);
  Tensor a = random_tensor({4, 4}, rng);
  Tensor b = random_tensor({4, 4}, rng);
  auto run = [&]() {
    Graph g(false);
    Var x = g.leaf(a);
    Var y = g.leaf(b);
    return layer_norm_rows(softmax_rows(matmul(x, y)), g.leaf(Tensor::full({4}, 1.0)),
                           g.leaf(Tensor::zeros({4})), 1e-5)
        .val();
  };
  Tensor r1 = run();
  Tensor r2 = run();
  for (size_t i = 0; i < r1.v.size(); ++i) CHECK(r1.v[i] == r2.v[i]);
}

TEST_CASE("no NaN/Inf on bounded inputs") {
  Rng rng(31);
  for (int it = 0; it < 20; ++it) {
    Tensor x = random_tensor({6, 8}, rng, -10.0, 10.0);
    Graph g(false);
    Var xx = g.leaf(x);
    Var y = softmax_rows(xx);
    Var z = log_softmax_rows(xx);
    Var s = silu(xx);
    CHECK(y.val().all_finite());
    CHECK(z.val().all_finite());
    CHECK(s.val().all_finite());
  }
}

TEST_CASE("f32 precision switch rounds forward values") {
  set_precision(Precision::f32);
  Graph g(false);
  Var x = g.leaf(Tensor::scalar(0.1));
  CHECK(x.val().v[0] == static_cast<double>(static_cast<float>(0.1)));
  set_precision(Precision::f64);
  Graph g2(false);
  Var y = g2.leaf(Tensor::scalar(0.1));
  CHECK(y.val().v[0] == 0.1);
}

TEST_CASE("parameter gradients accumulate across graphs") {
  Parameter p("w", Tensor::scalar(2.0));
  for (int i = 0; i < 2; ++i) {
    Graph g;
    Var w = g.param(p);
    Var loss = mul(w, w);
    g.backward(loss);
  }
  CHECK(p.grad.v[0] == doctest::Approx(8.0));  // d(w^2)/dw = 4, twice
  p.zero_grad();
  CHECK(p.grad.v[0] == 0.0);
}
