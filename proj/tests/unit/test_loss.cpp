#include <doctest.h>

#include <cmath>

#include "lhc/loss.hpp"
#include "lhc/ops.hpp"
#include "lhc/training.hpp"

using namespace lhc;

namespace {

Tensor pairs(std::initializer_list<double> first) {
  Tensor t = Tensor::zeros({1, 2 * first.size()});
  std::size_t i = 0;
  for (double v : first) {
    t[i++] = v;
    t[i++] = 1.0 - v;
  }
  return t;
}

}  // namespace

TEST_CASE("cross entropy reference values") {
  Tape tape;
  auto h = [&](Tensor t, Tensor p) { return cross_entropy(tape.constant(t), tape.constant(p)).item(); };
  CHECK(h(Tensor({1, 2}, {0.5, 0.5}), Tensor({1, 2}, {0.5, 0.5})) == doctest::Approx(std::log(2.0)));
  CHECK(h(Tensor({1, 2}, {1, 0}), Tensor({1, 2}, {1, 0})) == doctest::Approx(0.0));
  CHECK(h(Tensor({1, 2}, {1, 0}), Tensor({1, 2}, {0.25, 0.75})) == doctest::Approx(1.386294).epsilon(1e-6));
}

TEST_CASE("bias regularizer values") {
  CHECK(bias_regularizer(std::vector<double>(8, 0.5)) == doctest::Approx(2.0));
  CHECK(bias_regularizer(std::vector<double>{1, 0, 0, 1, 1, 0, 0, 1}) == doctest::Approx(4.0));
  CHECK(bias_regularizer(std::vector<double>{0.9, 0.1}) == doctest::Approx(0.82));
  Tape tape;
  CHECK(bias_regularizer(tape.constant(pairs({0.9, 0.5}))).item() == doctest::Approx(1.32));
}

TEST_CASE("structured loss geometric weights") {
  // Per-bit CE of 1 nat: target one-hot, prediction e^-1 on the target side.
  const double e1 = std::exp(-1.0);
  Tape tape;
  Var p = tape.constant(pairs({1, 1, 1, 1}));
  Var q = tape.constant(pairs({e1, e1, e1, e1}));
  CHECK(structured_string_loss(q, p, 0.8, StringCeOrder::kEncoderTarget).item() ==
        doctest::Approx(2.3616).epsilon(1e-9));
  CHECK(structured_string_loss(p, q, 0.8, StringCeOrder::kPredictorTarget).item() ==
        doctest::Approx(2.3616).epsilon(1e-9));
}

TEST_CASE("structured loss is zero for matching one-hot pairs") {
  Tape tape;
  Var p = tape.constant(pairs({1, 0, 0, 1}));
  CHECK(structured_string_loss(p, p, 0.8).item() == doctest::Approx(0.0));
}

TEST_CASE("earlier bit errors cost more") {
  Tape tape;
  Var target = tape.constant(pairs({1, 1, 1, 1}));
  Var first = tape.constant(pairs({0.3, 1, 1, 1}));
  Var last = tape.constant(pairs({1, 1, 1, 0.3}));
  const double a = structured_string_loss(target, first, 0.8).item();
  const double b = structured_string_loss(target, last, 0.8).item();
  CHECK(a / b == doctest::Approx(std::pow(0.8, -3.0)).epsilon(1e-9));
  CHECK(a / b == doctest::Approx(1.953).epsilon(1e-3));
}

TEST_CASE("cross entropy order selects the target side") {
  Tape tape;
  Var p = tape.constant(pairs({0.9}));
  Var q = tape.constant(pairs({0.6}));
  const double hpq = -(0.9 * std::log(0.6) + 0.1 * std::log(0.4));
  const double hqp = -(0.6 * std::log(0.9) + 0.4 * std::log(0.1));
  CHECK(structured_string_loss(p, q, 0.5, StringCeOrder::kPredictorTarget).item() == doctest::Approx(0.5 * hpq));
  CHECK(structured_string_loss(p, q, 0.5, StringCeOrder::kEncoderTarget).item() == doctest::Approx(0.5 * hqp));
}

TEST_CASE("total loss special cases") {
  ParameterSet params;
  params.add("w", Tensor({2}, {1.0, 2.0}));
  Tape tape;
  ParamBinder bind(tape, params);
  Var l = tape.constant(Tensor({2, 2}, {1, 0, 0, 1}));
  Var lp = tape.constant(Tensor({2, 2}, {0.7, 0.3, 0.4, 0.6}));
  Var q = tape.constant(Tensor::full({2, 8}, 0.5));
  Var p = tape.constant(Tensor({2, 8}, {0.9, 0.1, 0.2, 0.8, 0.5, 0.5, 0.3, 0.7, 0.9, 0.1, 0.2, 0.8, 0.5, 0.5, 0.3, 0.7}));
  HyperParams hp;
  hp.length = 4;
  hp.num_classes = 2;
  hp.alpha = hp.beta = hp.gamma = hp.delta = 0.0;
  CHECK(total_loss(l, lp, p, q, bind, hp).total.item() == 0.0);
  hp.gamma = 1.0;
  CHECK(total_loss(l, lp, p, q, bind, hp).total.item() == doctest::Approx(-2.0));
  hp.gamma = 0.0;
  hp.delta = 0.5;
  CHECK(total_loss(l, lp, p, q, bind, hp).total.item() == doctest::Approx(2.5));
  hp.delta = 0.0;
  hp.alpha = 2.0;
  const double ce = -(std::log(0.7) + std::log(0.6)) / 2.0;
  const LossTerms terms = total_loss(l, lp, p, q, bind, hp);
  CHECK(terms.total.item() == doctest::Approx(2.0 * ce));
  CHECK(terms.report().term_class == doctest::Approx(2.0 * ce));
}

TEST_CASE("l2 penalty skips frozen parameters") {
  ParameterSet params;
  params.add("a", Tensor({2}, {1.0, 2.0}));
  params.add("b", Tensor({1}, {10.0}));
  params.freeze("b");
  Tape tape;
  ParamBinder bind(tape, params);
  CHECK(l2_penalty(bind).item() == doctest::Approx(5.0));
}

TEST_CASE("hyperparameter validation") {
  HyperParams hp;
  CHECK_NOTHROW(hp.validate());
  CHECK(min_string_length(10) == 4);
  CHECK(min_string_length(2) == 1);
  CHECK(min_string_length(8) == 3);
  hp.length = 3;
  CHECK_THROWS(hp.validate());
  hp.length = 4;
  hp.mu = 0.0;
  CHECK_THROWS(hp.validate());
  hp.mu = 1.5;
  CHECK_THROWS(hp.validate());
  hp.mu = 0.8;
  hp.gamma = -1.0;
  CHECK_THROWS(hp.validate());
}

TEST_CASE("full objective gradient check on the toy instance") {
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    const GradcheckReport report = loss_gradcheck(seed);
    CHECK(report.worst() < 1e-5);
    CHECK(report.terms.size() >= 4);
  }
}
