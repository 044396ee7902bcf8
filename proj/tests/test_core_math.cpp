#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "grouppool/tape.hpp"
#include "support/finite_diff.hpp"

using grouppool::Matrix;
using grouppool::ShapeError;
using grouppool::Tape;
using grouppool::Value;

namespace {

std::vector<double> rand_vec(std::mt19937& rng, int n, double lo = -2.0,
                             double hi = 2.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

}  // namespace

TEST_CASE("matvec matches hand-computed products") {
  Tape t;
  Matrix w(2, 2);
  w.data = {1, 2, 3, 4};
  auto x = t.vec(std::vector<double>{1, 1});
  auto y = t.matvec(t.mat(w), x);
  auto v = t.value(y);
  CHECK(v[0] == doctest::Approx(3.0).epsilon(1e-15));
  CHECK(v[1] == doctest::Approx(7.0).epsilon(1e-15));

  auto z = t.matvec(t.mat(Matrix::identity(2)), x);
  CHECK(t.value(z)[0] == 1.0);
  CHECK(t.value(z)[1] == 1.0);
}

TEST_CASE("matvec is linear in its vector argument") {
  std::mt19937 rng(11);
  Matrix w(3, 4);
  w.data = rand_vec(rng, 12);
  auto a = rand_vec(rng, 4);
  auto b = rand_vec(rng, 4);

  Tape t;
  auto mw = t.mat(w);
  auto va = t.vec(a);
  auto vb = t.vec(b);
  auto lhs = t.matvec(mw, t.add(va, vb));
  auto rhs = t.add(t.matvec(mw, va), t.matvec(mw, vb));
  for (int i = 0; i < 3; ++i)
    CHECK(std::abs(t.value(lhs)[i] - t.value(rhs)[i]) < 1e-10);
}

TEST_CASE("tanh and sigmoid hit frozen reference points") {
  Tape t;
  auto y = t.tanh(t.vec(std::vector<double>{0.0, 1.0, -1.0}));
  CHECK(t.value(y)[0] == 0.0);
  CHECK(t.value(y)[1] == doctest::Approx(0.7615941559557649).epsilon(1e-15));
  CHECK(t.value(y)[2] == doctest::Approx(-0.7615941559557649).epsilon(1e-15));

  auto sat = t.tanh(t.vec(std::vector<double>{50.0}));
  CHECK(std::abs(t.value(sat)[0] - 1.0) < 1e-12);
  CHECK(t.value(sat)[0] < 1.0);

  std::mt19937 rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    auto xs = rand_vec(rng, 3);
    auto neg = xs;
    for (auto& v : neg) v = -v;
    Tape t2;
    auto pos_y = t2.tanh(t2.vec(xs));
    auto neg_y = t2.tanh(t2.vec(neg));
    for (int i = 0; i < 3; ++i) {
      CHECK(std::abs(t2.value(pos_y)[i] + t2.value(neg_y)[i]) < 1e-12);
      CHECK(std::abs(t2.value(pos_y)[i]) < 1.0);
    }
  }

  auto s = t.sigmoid(t.vec(std::vector<double>{0.0, 1000.0, -1000.0}));
  CHECK(t.value(s)[0] == 0.5);
  CHECK(t.value(s)[1] == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(t.value(s)[2] == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(std::isfinite(t.value(s)[1]));
  CHECK(std::isfinite(t.value(s)[2]));
}

TEST_CASE("softmax normalizes, resists overflow, and is shift invariant") {
  Tape t;
  auto p = t.softmax(t.vec(std::vector<double>{0.0, std::log(2.0)}));
  CHECK(t.value(p)[0] == doctest::Approx(1.0 / 3.0).epsilon(1e-14));
  CHECK(t.value(p)[1] == doctest::Approx(2.0 / 3.0).epsilon(1e-14));

  auto q = t.softmax(t.vec(std::vector<double>{1000.0, 0.0}));
  CHECK(std::isfinite(t.value(q)[0]));
  CHECK(t.value(q)[0] == doctest::Approx(1.0).epsilon(1e-15));

  std::mt19937 rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    auto s = rand_vec(rng, 5);
    auto shifted = s;
    for (auto& x : shifted) x += 123.456;
    Tape t2;
    auto a = t2.softmax(t2.vec(s));
    auto b = t2.softmax(t2.vec(shifted));
    double total = 0.0;
    for (int i = 0; i < 5; ++i) {
      CHECK(std::abs(t2.value(a)[i] - t2.value(b)[i]) < 1e-10);
      total += t2.value(a)[i];
    }
    CHECK(std::abs(total - 1.0) < 1e-12);
  }
}

TEST_CASE("backward of dot(x, x) yields 2x") {
  Tape t;
  auto x = t.vec(std::vector<double>{1.0, 2.0});
  auto loss = t.dot(x, x);
  t.backward(loss);
  auto g = t.grad(x);
  CHECK(g[0] == doctest::Approx(2.0).epsilon(1e-15));
  CHECK(g[1] == doctest::Approx(4.0).epsilon(1e-15));
}

TEST_CASE("leaves not on the path to the loss get zero gradient") {
  Tape t;
  auto x = t.vec(std::vector<double>{1.0, 2.0});
  auto unused = t.vec(std::vector<double>{5.0, 5.0, 5.0});
  auto loss = t.dot(x, x);
  t.backward(loss);
  for (double g : t.grad(unused)) CHECK(g == 0.0);
}

TEST_CASE("backward rejects non-scalar losses and grads require backward") {
  Tape t;
  auto x = t.vec(std::vector<double>{1.0, 2.0});
  CHECK_THROWS_AS(t.backward(x), ShapeError);
  auto loss = t.dot(x, x);
  CHECK_THROWS_AS((void)t.grad(x), ShapeError);
  t.backward(loss);
  CHECK_NOTHROW((void)t.grad(x));
}

TEST_CASE("shape errors name the offending operation") {
  Tape t;
  CHECK_THROWS_AS(t.vec(std::vector<double>{}), ShapeError);
  Matrix w(2, 3);
  auto x = t.vec(std::vector<double>{1.0, 2.0});
  CHECK_THROWS_AS(t.matvec(t.mat(w), x), ShapeError);
  auto y = t.vec(std::vector<double>{1.0, 2.0, 3.0});
  CHECK_THROWS_AS(t.add(x, y), ShapeError);
  CHECK_THROWS_AS(t.dot(x, y), ShapeError);
  auto p = t.softmax(x);
  CHECK_THROWS_AS(t.cross_entropy(p, 2), ShapeError);
  CHECK_THROWS_AS(t.cross_entropy(p, -1), ShapeError);
}

TEST_CASE("max pool keeps coordinate-wise maxima; ties route grad to lowest index") {
  Tape t;
  auto a = t.vec(std::vector<double>{3.0, 1.0});
  auto b = t.vec(std::vector<double>{3.0, 2.0});
  std::vector<Value> xs{a, b};
  auto m = t.max_pool(xs);
  CHECK(t.value(m)[0] == 3.0);
  CHECK(t.value(m)[1] == 2.0);
  auto loss = t.dot(m, t.vec(std::vector<double>{1.0, 1.0}));
  t.backward(loss);
  CHECK(t.grad(a)[0] == 1.0);  // tie at coordinate 0 goes to the first input
  CHECK(t.grad(b)[0] == 0.0);
  CHECK(t.grad(a)[1] == 0.0);
  CHECK(t.grad(b)[1] == 1.0);
}

TEST_CASE("cross entropy floors probabilities near zero") {
  Tape t;
  auto p = t.vec(std::vector<double>{1.0, 0.0});
  auto ce = t.cross_entropy(p, 1);
  CHECK(t.scalar(ce) == doctest::Approx(-std::log(1e-12)).epsilon(1e-12));
  auto ce0 = t.cross_entropy(p, 0);
  CHECK(t.scalar(ce0) == 0.0);
}

// Each analytic gradient is checked against a central finite difference of
// the same composed forward pass, rebuilt from scratch at each probe point.
TEST_CASE("per-op gradients match finite differences at random points") {
  std::mt19937 rng(1234);
  constexpr double kTol = 1e-5;

  auto check_op = [&](int n_inputs, int dim,
                      auto&& build) {  // build(tape, leaves) -> scalar Value
    for (int trial = 0; trial < 5; ++trial) {
      std::vector<double> flat;
      for (int i = 0; i < n_inputs * dim; ++i) flat.push_back(0.0);
      flat = rand_vec(rng, n_inputs * dim);

      auto eval = [&](const std::vector<double>& params) {
        Tape t;
        std::vector<Value> leaves;
        for (int i = 0; i < n_inputs; ++i)
          leaves.push_back(t.vec(std::span<const double>(
              params.data() + static_cast<std::size_t>(i) * dim, dim)));
        return t.scalar(build(t, leaves));
      };

      Tape t;
      std::vector<Value> leaves;
      for (int i = 0; i < n_inputs; ++i)
        leaves.push_back(t.vec(std::span<const double>(
            flat.data() + static_cast<std::size_t>(i) * dim, dim)));
      t.backward(build(t, leaves));
      std::vector<double> analytic;
      for (auto v : leaves)
        for (double g : t.grad(v)) analytic.push_back(g);

      auto fd = testsupport::finite_diff_grad(eval, flat);
      CHECK(testsupport::max_rel_err(analytic, fd) < kTol);
    }
  };

  std::vector<double> probe = rand_vec(rng, 4);

  SUBCASE("add") {
    check_op(2, 4, [&](Tape& t, std::vector<Value>& xs) {
      return t.dot(t.add(xs[0], xs[1]), t.vec(probe));
    });
  }
  SUBCASE("mul") {
    check_op(2, 4, [&](Tape& t, std::vector<Value>& xs) {
      return t.dot(t.mul(xs[0], xs[1]), t.vec(probe));
    });
  }
  SUBCASE("tanh") {
    check_op(1, 4, [&](Tape& t, std::vector<Value>& xs) {
      return t.dot(t.tanh(xs[0]), t.vec(probe));
    });
  }
  SUBCASE("sigmoid") {
    check_op(1, 4, [&](Tape& t, std::vector<Value>& xs) {
      return t.dot(t.sigmoid(xs[0]), t.vec(probe));
    });
  }
  SUBCASE("softmax then cross entropy") {
    check_op(1, 4, [&](Tape& t, std::vector<Value>& xs) {
      return t.cross_entropy(t.softmax(xs[0]), 2);
    });
  }
  SUBCASE("scale") {
    check_op(1, 4, [&](Tape& t, std::vector<Value>& xs) {
      return t.dot(t.scale(xs[0], -1.7), t.vec(probe));
    });
  }
  SUBCASE("dot") {
    check_op(2, 4, [&](Tape& t, std::vector<Value>& xs) {
      return t.dot(xs[0], xs[1]);
    });
  }
  SUBCASE("sum") {
    check_op(3, 4, [&](Tape& t, std::vector<Value>& xs) {
      return t.dot(t.sum(xs), t.vec(probe));
    });
  }
  SUBCASE("avg pool") {
    check_op(3, 4, [&](Tape& t, std::vector<Value>& xs) {
      return t.dot(t.avg_pool(xs), t.vec(probe));
    });
  }
  SUBCASE("max pool") {
    check_op(3, 4, [&](Tape& t, std::vector<Value>& xs) {
      return t.dot(t.max_pool(xs), t.vec(probe));
    });
  }
  SUBCASE("concat") {
    std::vector<double> wide = rand_vec(rng, 8);
    check_op(2, 4, [&](Tape& t, std::vector<Value>& xs) {
      return t.dot(t.concat(xs), t.vec(wide));
    });
  }
  SUBCASE("weighted sum") {
    // last leaf supplies the weights: dims force n_inputs == dim here
    check_op(4, 3, [&](Tape& t, std::vector<Value>& xs) {
      std::vector<Value> items{xs[0], xs[1], xs[2]};
      auto alpha = t.softmax(xs[3]);
      return t.dot(t.weighted_sum(items, alpha),
                   t.vec(std::span<const double>(probe.data(), 3)));
    });
  }
  SUBCASE("matvec") {
    // treat one leaf as a flattened 2x2 matrix via explicit mat leaf
    for (int trial = 0; trial < 5; ++trial) {
      auto flat = rand_vec(rng, 6);
      auto eval = [&](const std::vector<double>& p) {
        Tape t;
        Matrix w(2, 2);
        w.data = {p[0], p[1], p[2], p[3]};
        auto x = t.vec(std::vector<double>{p[4], p[5]});
        return t.scalar(t.dot(t.matvec(t.mat(w), x),
                              t.vec(std::span<const double>(probe.data(), 2))));
      };
      Tape t;
      Matrix w(2, 2);
      w.data = {flat[0], flat[1], flat[2], flat[3]};
      auto mw = t.mat(w);
      auto x = t.vec(std::vector<double>{flat[4], flat[5]});
      t.backward(t.dot(t.matvec(mw, x),
                       t.vec(std::span<const double>(probe.data(), 2))));
      std::vector<double> analytic;
      for (double g : t.grad(mw)) analytic.push_back(g);
      for (double g : t.grad(x)) analytic.push_back(g);
      auto fd = testsupport::finite_diff_grad(eval, flat);
      CHECK(testsupport::max_rel_err(analytic, fd) < kTol);
    }
  }
}

TEST_CASE("gradients accumulate across fan-out") {
  Tape t;
  auto x = t.vec(std::vector<double>{3.0});
  auto y = t.add(x, x);  // y = 2x, dy/dx = 2
  t.backward(y);
  CHECK(t.grad(x)[0] == doctest::Approx(2.0).epsilon(1e-15));
}

TEST_CASE("reset clears the tape for reuse") {
  Tape t;
  auto x = t.vec(std::vector<double>{1.0});
  t.backward(t.dot(x, x));
  CHECK(t.node_count() > 0);
  t.reset();
  CHECK(t.node_count() == 0);
  auto y = t.vec(std::vector<double>{4.0});
  t.backward(t.dot(y, y));
  CHECK(t.grad(y)[0] == doctest::Approx(8.0).epsilon(1e-15));
}
