#include <doctest.h>

#include <cmath>
#include <random>

#include "lhc/gradcheck.hpp"
#include "lhc/nn.hpp"
#include "lhc/ops.hpp"

using namespace lhc;

TEST_CASE("xavier bound for a 3136 -> 500 layer") {
  CHECK(xavier_bound(3136, 500) == doctest::Approx(std::sqrt(6.0 / 3636.0)));
  CHECK(xavier_bound(3136, 500) == doctest::Approx(0.04062).epsilon(1e-3));
}

TEST_CASE("init is deterministic per seed and bounded") {
  const LinearLayer layer{"fc", 30, 20};
  ParameterSet a, b, c;
  std::mt19937_64 r1(5), r2(5), r3(6);
  layer.init(a, r1);
  layer.init(b, r2);
  layer.init(c, r3);
  CHECK(a.same_values(b));
  CHECK_FALSE(a.same_values(c));
  const double bound = xavier_bound(30, 20);
  for (double w : a.at("fc.weight").data) CHECK(std::abs(w) <= bound);
  for (double v : a.at("fc.bias").data) CHECK(v == 0.0);
  CHECK(a.count() == layer.param_count());
}

TEST_CASE("parameter set freezing and counting") {
  ParameterSet p;
  p.add("enc.a", Tensor::zeros({2, 3}));
  p.add("enc.b", Tensor::zeros({3}));
  p.add("dec.a", Tensor::zeros({4}));
  CHECK(p.count() == 13);
  CHECK(p.count("enc.") == 9);
  p.freeze_prefix("enc.");
  CHECK(p.is_frozen("enc.a"));
  CHECK(p.trainable_names() == std::vector<std::string>{"dec.a"});
  CHECK_THROWS(p.add("dec.a", Tensor::zeros({1})));
  CHECK_THROWS(p.at("missing"));
}

TEST_CASE("linear forward computes x W^T + b") {
  ParameterSet p;
  p.add("l.weight", Tensor({2, 3}, {1, 0, 2, 0, 1, -1}));
  p.add("l.bias", Tensor({2}, {0.5, -0.5}));
  Tape tape;
  ParamBinder bind(tape, p);
  const LinearLayer layer{"l", 3, 2};
  Var y = layer.forward(bind, tape.constant(Tensor({1, 3}, {1, 2, 3})));
  CHECK(y.value().data == std::vector<double>{7.5, -1.5});
}

TEST_CASE("frozen parameters are bound as constants") {
  ParameterSet p;
  p.add("w", Tensor({1}, {2.0}));
  p.freeze("w");
  Tape tape;
  ParamBinder bind(tape, p);
  Var w = bind("w");
  CHECK_FALSE(w.requires_grad());
}

namespace {

LstmCell zero_cell(ParameterSet& p, std::size_t in, std::size_t hidden) {
  LstmCell cell{"cell", in, hidden};
  p.add(cell.w_ih_name(), Tensor::zeros({4 * hidden, in}));
  p.add(cell.w_hh_name(), Tensor::zeros({4 * hidden, hidden}));
  p.add(cell.bias_name(), Tensor::zeros({4 * hidden}));
  return cell;
}

}  // namespace

TEST_CASE("lstm step with zero weights and zero state stays at zero") {
  ParameterSet p;
  const LstmCell cell = zero_cell(p, 3, 2);
  Tape tape;
  ParamBinder bind(tape, p);
  auto [h, c] = cell.step(bind, tape.constant(Tensor({1, 3}, {1, 2, 3})), tape.constant(Tensor::zeros({1, 2})),
                          tape.constant(Tensor::zeros({1, 2})));
  CHECK(h.value().data == std::vector<double>{0.0, 0.0});
  CHECK(c.value().data == std::vector<double>{0.0, 0.0});
}

TEST_CASE("lstm step closed form with forget bias 1") {
  ParameterSet p;
  const LstmCell cell = zero_cell(p, 1, 1);
  p.at(cell.bias_name())[1] = 1.0;  // forget gate
  Tape tape;
  ParamBinder bind(tape, p);
  auto [h, c] = cell.step(bind, tape.constant(Tensor({1, 1}, {0.0})), tape.constant(Tensor({1, 1}, {0.0})),
                          tape.constant(Tensor({1, 1}, {1.0})));
  const double sig1 = 1.0 / (1.0 + std::exp(-1.0));
  CHECK(c.item() == doctest::Approx(sig1));
  CHECK(c.item() == doctest::Approx(0.731059).epsilon(1e-6));
  CHECK(h.item() == doctest::Approx(0.5 * std::tanh(sig1)));
}

TEST_CASE("lstm gradients over four unrolled steps") {
  std::mt19937_64 rng(11);
  ParameterSet p;
  const LstmCell cell{"cell", 3, 4};
  cell.init(p, rng);
  std::normal_distribution<double> g(0.0, 1.0);
  Tensor x = Tensor::zeros({2, 3});
  for (double& v : x.data) v = g(rng);
  const auto errors = gradient_check_params(
      [&](Tape& tape) {
        ParamBinder bind(tape, p);
        Var xv = tape.constant(x);
        Var h = tape.constant(Tensor::zeros({2, 4}));
        Var c = tape.constant(Tensor::zeros({2, 4}));
        Var acc = tape.constant(Tensor::scalar(0.0));
        for (int t = 0; t < 4; ++t) {
          std::tie(h, c) = cell.step(bind, xv, h, c);
          acc = acc + sum(square(h));
        }
        return std::vector<Var>{acc};
      },
      p, 1e-5);
  REQUIRE(errors.size() == 1);
  CHECK(errors[0] < 1e-5);
}

TEST_CASE("adam leaves a zero-gradient parameter unchanged") {
  ParameterSet p;
  Tensor& w = p.add("w", Tensor({2}, {1.0, -1.0}));
  w.grad = {0.0, 0.0};
  AdamState adam({.lr = 0.1});
  adam.update(p);
  CHECK(w.data == std::vector<double>{1.0, -1.0});
}

TEST_CASE("adam first step moves by lr against the gradient sign") {
  ParameterSet p;
  Tensor& w = p.add("w", Tensor({3}, {0.0, 0.0, 0.0}));
  w.grad = {3.0, -0.01, 100.0};
  AdamState adam({.lr = 0.01});
  adam.update(p);
  CHECK(w[0] == doctest::Approx(-0.01).epsilon(1e-6));
  CHECK(w[1] == doctest::Approx(0.01).epsilon(1e-4));
  CHECK(w[2] == doctest::Approx(-0.01).epsilon(1e-6));
  CHECK(adam.step() == 1);
}

TEST_CASE("adam two steps with constant gradient 1") {
  ParameterSet p;
  Tensor& w = p.add("w", Tensor({1}, {0.0}));
  AdamState adam({.lr = 0.1});
  for (int i = 0; i < 2; ++i) {
    w.grad = {1.0};
    adam.update(p);
  }
  CHECK(w[0] == doctest::Approx(-0.2).epsilon(1e-6));
}

TEST_CASE("adam skips frozen parameters and requires gradients on trainable ones") {
  ParameterSet p;
  Tensor& a = p.add("a", Tensor({1}, {1.0}));
  p.add("b", Tensor({1}, {1.0}));
  p.freeze("b");
  a.grad = {1.0};
  AdamState adam;
  adam.update(p);
  CHECK(p.at("b")[0] == 1.0);
  CHECK(a[0] < 1.0);
  ParameterSet q;
  q.add("c", Tensor({1}, {1.0}));
  AdamState adam2;
  CHECK_THROWS_AS(adam2.update(q), MissingGradientError);
}

TEST_CASE("adam updates are bitwise deterministic") {
  auto run = [] {
    std::mt19937_64 rng(2);
    ParameterSet p;
    const LinearLayer layer{"l", 4, 3};
    layer.init(p, rng);
    AdamState adam({.lr = 0.01});
    for (int step = 0; step < 5; ++step) {
      p.zero_grad();
      Tape tape;
      ParamBinder bind(tape, p);
      Var y = layer.forward(bind, tape.constant(Tensor({1, 4}, {1, -2, 0.5, 3})));
      tape.backward(sum(square(y)));
      adam.update(p);
    }
    return p;
  };
  CHECK(run().same_values(run()));
}
