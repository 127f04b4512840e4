#include <doctest.h>

#include <cmath>
#include <random>

#include "lhc/gradcheck.hpp"
#include "lhc/ops.hpp"

using namespace lhc;

namespace {

Tensor random_tensor(Shape shape, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> g(0.0, scale);
  Tensor t = Tensor::zeros(std::move(shape));
  for (double& v : t.data) v = g(rng);
  return t;
}

// Positive entries, rows normalized in pairs.
Tensor random_pairs(std::size_t rows, std::size_t pairs, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.05, 0.95);
  Tensor t = Tensor::zeros({rows, 2 * pairs});
  for (std::size_t i = 0; i < t.numel(); i += 2) {
    t[i] = u(rng);
    t[i + 1] = 1.0 - t[i];
  }
  return t;
}

}  // namespace

TEST_CASE("forward values of elementwise ops") {
  Tape tape;
  Var a = tape.constant(Tensor({2, 2}, {1, -2, 3, 0.5}));
  Var b = tape.constant(Tensor({2, 2}, {2, 2, -1, 4}));
  CHECK((a + b).value().data == std::vector<double>{3, 0, 2, 4.5});
  CHECK((a - b).value().data == std::vector<double>{-1, -4, 4, -3.5});
  CHECK((a * b).value().data == std::vector<double>{2, -4, -3, 2});
  CHECK(scale(a, 2.0).value().data == std::vector<double>{2, -4, 6, 1});
  CHECK(square(a).value().data == std::vector<double>{1, 4, 9, 0.25});
  CHECK(sum(a).item() == doctest::Approx(2.5));
  CHECK(lhc::tanh(a).value()[0] == doctest::Approx(std::tanh(1.0)));
  CHECK(sigmoid(a).value()[1] == doctest::Approx(1.0 / (1.0 + std::exp(2.0))));
}

TEST_CASE("sigmoid is stable for large magnitudes") {
  Tape tape;
  Var s = sigmoid(tape.constant(Tensor({3}, {-1000.0, 0.0, 1000.0})));
  CHECK(s.value()[0] == 0.0);
  CHECK(s.value()[1] == 0.5);
  CHECK(s.value()[2] == 1.0);
}

TEST_CASE("matmul matches hand computation") {
  Tape tape;
  Var a = tape.constant(Tensor({2, 3}, {1, 2, 3, 4, 5, 6}));
  Var b = tape.constant(Tensor({3, 2}, {7, 8, 9, 10, 11, 12}));
  CHECK(matmul(a, b).value().data == std::vector<double>{58, 64, 139, 154});
  Var bt = tape.constant(Tensor({2, 3}, {7, 9, 11, 8, 10, 12}));
  CHECK(matmul_bt(a, bt).value().data == std::vector<double>{58, 64, 139, 154});
}

TEST_CASE("gemm transpose variants agree with the naive product") {
  std::mt19937_64 rng(3);
  const std::size_t m = 5, n = 4, k = 7;
  Tensor a = random_tensor({m, k}, rng), b = random_tensor({k, n}, rng);
  Tensor at = Tensor::zeros({k, m}), bt = Tensor::zeros({n, k});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t p = 0; p < k; ++p) at.at(p, i) = a.at(i, p);
  for (std::size_t p = 0; p < k; ++p)
    for (std::size_t j = 0; j < n; ++j) bt.at(j, p) = b.at(p, j);
  std::vector<double> ref(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t p = 0; p < k; ++p) ref[i * n + j] += a.at(i, p) * b.at(p, j);
  for (bool ta : {false, true}) {
    for (bool tb : {false, true}) {
      std::vector<double> c(m * n, 1.0);
      gemm(ta, tb, m, n, k, ta ? at.data.data() : a.data.data(), tb ? bt.data.data() : b.data.data(), c.data(),
           false);
      for (std::size_t i = 0; i < c.size(); ++i) CHECK(c[i] == doctest::Approx(ref[i]).epsilon(1e-12));
      gemm(ta, tb, m, n, k, ta ? at.data.data() : a.data.data(), tb ? bt.data.data() : b.data.data(), c.data(),
           true);
      for (std::size_t i = 0; i < c.size(); ++i) CHECK(c[i] == doctest::Approx(2 * ref[i]).epsilon(1e-12));
    }
  }
}

TEST_CASE("shape mismatches raise DimensionError") {
  Tape tape;
  Var a = tape.constant(Tensor::zeros({2, 3}));
  Var b = tape.constant(Tensor::zeros({2, 2}));
  CHECK_THROWS_AS(a + b, DimensionError);
  CHECK_THROWS_AS(matmul(a, a), DimensionError);
  CHECK_THROWS_AS(softmax2(tape.constant(Tensor::zeros({2, 3}))), DimensionError);
  CHECK_THROWS_AS(add_rowvec(a, tape.constant(Tensor::zeros({2}))), DimensionError);
  CHECK_THROWS_AS(slice(a, 2, 4), DimensionError);
  CHECK_THROWS_AS(reshape(a, {5}), DimensionError);
  CHECK_THROWS_AS(cross_entropy_rows(a, b), DimensionError);
}

TEST_CASE("backward requires a scalar root") {
  Tape tape;
  Var a = tape.variable(Tensor::zeros({2}));
  CHECK_THROWS_AS(tape.backward(a), DimensionError);
}

TEST_CASE("gradient check on sum of squares is exact") {
  const double err = gradient_check([](Tape&, Var x) { return sum(square(x)); }, Tensor({3}, {1, 2, 3}), 1e-5);
  CHECK(err < 1e-8);
}

TEST_CASE("gradient check rejects bad steps and non-scalar outputs") {
  auto f = [](Tape&, Var x) { return sum(x); };
  CHECK_THROWS_AS(gradient_check(f, Tensor({1}, {1.0}), 1e-8), std::invalid_argument);
  CHECK_THROWS_AS(gradient_check(f, Tensor({1}, {1.0}), 1e-2), std::invalid_argument);
  CHECK_THROWS_AS(gradient_check([](Tape&, Var x) { return square(x); }, Tensor({2}, {1.0, 2.0}), 1e-5),
                  DimensionError);
}

TEST_CASE("matmul gradient on random 3x4 * 4x2") {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    std::mt19937_64 rng(seed);
    const Tensor b = random_tensor({4, 2}, rng);
    const Tensor a = random_tensor({3, 4}, rng);
    const double err_a = gradient_check(
        [&](Tape& t, Var x) { return sum(lhc::tanh(matmul(x, t.constant(b)))); }, a, 1e-5);
    const double err_b = gradient_check(
        [&](Tape& t, Var x) { return sum(lhc::tanh(matmul(t.constant(a), x))); }, b, 1e-5);
    CHECK(err_a < 1e-6);
    CHECK(err_b < 1e-6);
  }
}

TEST_CASE("every op passes a finite-difference check") {
  std::mt19937_64 rng(7);
  const Tensor w = random_tensor({3, 4}, rng);
  const Tensor v = random_tensor({4}, rng);
  const Tensor other = random_tensor({3, 4}, rng);
  const Tensor target = random_pairs(3, 2, rng);
  const Tensor x = random_tensor({3, 4}, rng);
  struct Case {
    const char* name;
    ScalarFn f;
  };
  const std::vector<Case> cases = {
      {"add", [&](Tape& t, Var a) { return sum(square(a + t.constant(other))); }},
      {"sub", [&](Tape& t, Var a) { return sum(square(t.constant(other) - a)); }},
      {"mul", [&](Tape& t, Var a) { return sum(a * a * t.constant(other)); }},
      {"scale", [&](Tape&, Var a) { return sum(square(scale(a, -1.7))); }},
      {"sigmoid", [&](Tape&, Var a) { return sum(square(sigmoid(a))); }},
      {"tanh", [&](Tape&, Var a) { return sum(square(lhc::tanh(a))); }},
      {"add_rowvec", [&](Tape& t, Var a) { return sum(square(add_rowvec(a, t.constant(v)))); }},
      {"mul_rowvec", [&](Tape& t, Var a) { return sum(square(mul_rowvec(a, t.constant(v)))); }},
      {"concat", [&](Tape& t, Var a) { return sum(square(concat({a, t.constant(other), a}))); }},
      {"slice", [&](Tape&, Var a) { return sum(square(slice(a, 1, 3))); }},
      {"softmax_rows", [&](Tape& t, Var a) { return sum(softmax_rows(a) * t.constant(other)); }},
      {"softmax2", [&](Tape& t, Var a) { return sum(softmax2(a) * t.constant(other)); }},
      {"ce pred", [&](Tape& t, Var a) { return cross_entropy(t.constant(target), softmax2(a)); }},
      {"ce target", [&](Tape& t, Var a) { return cross_entropy(softmax2(a), t.constant(target)); }},
      {"ce both", [&](Tape&, Var a) { return cross_entropy(softmax2(a), softmax2(scale(a, 0.5))); }},
      {"matmul_bt", [&](Tape& t, Var a) { return sum(square(matmul_bt(a, t.constant(w)))); }},
  };
  for (const auto& c : cases) {
    CAPTURE(c.name);
    CHECK(gradient_check(c.f, x, 1e-5) < 1e-6);
  }
  CHECK(gradient_check([&](Tape& t, Var a) { return sum(square(add_rowvec(t.constant(w), a))); }, v, 1e-5) < 1e-6);
  CHECK(gradient_check([&](Tape& t, Var a) { return sum(square(mul_rowvec(t.constant(w), a))); }, v, 1e-5) < 1e-6);
  CHECK(gradient_check([&](Tape&, Var a) { return sum(square(reshape(a, {2, 2}))); }, v, 1e-5) < 1e-6);
}

TEST_CASE("softmax rows are stochastic for arbitrary logits") {
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 100; ++trial) {
    const Tensor logits = random_tensor({5, 8}, rng, 30.0);
    Tape tape;
    const Tensor s = softmax_rows(tape.constant(logits)).value();
    const Tensor s2 = softmax2(tape.constant(logits)).value();
    for (std::size_t r = 0; r < 5; ++r) {
      double total = 0.0;
      for (std::size_t c = 0; c < 8; ++c) {
        CHECK(s.at(r, c) >= 0.0);
        CHECK(std::isfinite(s.at(r, c)));
        total += s.at(r, c);
      }
      CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
      for (std::size_t c = 0; c < 8; c += 2) CHECK(s2.at(r, c) + s2.at(r, c + 1) == doctest::Approx(1.0).epsilon(1e-12));
    }
  }
}

TEST_CASE("cross entropy clamps zero probabilities") {
  Tape tape;
  Var t = tape.constant(Tensor({1, 2}, {1.0, 0.0}));
  Var p = tape.constant(Tensor({1, 2}, {0.0, 1.0}));
  CHECK(cross_entropy(t, p).item() == doctest::Approx(-std::log(kLogClamp)));
}

TEST_CASE("parameter leaves accumulate into their source") {
  Tensor w({2}, {1.0, 2.0});
  for (int round = 0; round < 2; ++round) {
    Tape tape;
    Var x = tape.parameter(w);
    tape.backward(sum(square(x)));
  }
  CHECK(w.grad == std::vector<double>{4.0, 8.0});
  w.zero_grad();
  for (double g : w.grad) CHECK(g == 0.0);
}

TEST_CASE("untrainable parameter leaves receive no gradient") {
  Tensor w({2}, {1.0, 2.0});
  Tape tape;
  Var x = tape.parameter(w, false);
  Var y = tape.variable(Tensor({2}, {3.0, 4.0}));
  tape.backward(sum(x * y));
  CHECK_FALSE(w.has_grad());
  CHECK(y.grad() == std::vector<double>{1.0, 2.0});
}

TEST_CASE("replay recomputes from new leaf values") {
  Tape tape;
  Var x = tape.variable(Tensor({2}, {1.0, 2.0}));
  Var y = sum(square(x));
  CHECK(y.item() == 5.0);
  tape.set_leaf_value(x, Tensor({2}, {3.0, 4.0}));
  tape.replay();
  CHECK(y.item() == 25.0);
}

TEST_CASE("repeated backward does not double count interior nodes") {
  Tape tape;
  Var x = tape.variable(Tensor({1}, {3.0}));
  Var y = sum(square(x));
  tape.backward(y);
  tape.backward(y);
  CHECK(x.grad()[0] == doctest::Approx(6.0));
}
