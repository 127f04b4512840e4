#include "lhc/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "lhc/nn.hpp"

namespace lhc {

namespace {

void check_step(double step) {
  if (!(step > 1e-7 && step < 1e-3)) {
    throw std::invalid_argument("gradient check step must lie in (1e-7, 1e-3)");
  }
}

void require_scalar(Var v) {
  if (v.value().numel() != 1) {
    throw DimensionError("gradient check needs a scalar function, got " +
                         shape_str(v.shape()));
  }
}

double rel_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max(1.0, std::abs(analytic));
}

}  // namespace

double gradient_check(const ScalarFn& f, const Tensor& point, double step) {
  check_step(step);
  Tape tape;
  Var x = tape.variable(Tensor(point.shape, point.data));
  Var y = f(tape, x);
  require_scalar(y);
  tape.backward(y);
  std::vector<double> analytic = x.grad();
  if (analytic.empty()) analytic.assign(point.numel(), 0.0);

  Tensor probe(point.shape, point.data);
  double worst = 0.0;
  for (std::size_t i = 0; i < point.numel(); ++i) {
    probe.data[i] = point.data[i] + step;
    tape.set_leaf_value(x, probe);
    tape.replay();
    const double up = y.item();
    probe.data[i] = point.data[i] - step;
    tape.set_leaf_value(x, probe);
    tape.replay();
    const double down = y.item();
    probe.data[i] = point.data[i];
    worst = std::max(worst, rel_error(analytic[i], (up - down) / (2.0 * step)));
  }
  return worst;
}

std::vector<double> gradient_check_params(const TermsFn& f, ParameterSet& params,
                                          double step) {
  check_step(step);
  Tape tape;
  std::vector<Var> terms = f(tape);
  for (Var t : terms) require_scalar(t);

  const std::vector<std::string> names = params.trainable_names();
  std::vector<std::vector<std::vector<double>>> analytic(terms.size());
  for (std::size_t t = 0; t < terms.size(); ++t) {
    params.zero_grad();
    tape.backward(terms[t]);
    for (const std::string& name : names) {
      Tensor& p = params.at(name);
      analytic[t].push_back(p.grad.empty() ? std::vector<double>(p.numel(), 0.0) : p.grad);
    }
  }
  params.zero_grad();

  std::vector<double> worst(terms.size(), 0.0);
  std::vector<double> up(terms.size());
  for (std::size_t n = 0; n < names.size(); ++n) {
    Tensor& p = params.at(names[n]);
    for (std::size_t i = 0; i < p.numel(); ++i) {
      const double orig = p.data[i];
      p.data[i] = orig + step;
      tape.replay();
      for (std::size_t t = 0; t < terms.size(); ++t) up[t] = terms[t].item();
      p.data[i] = orig - step;
      tape.replay();
      for (std::size_t t = 0; t < terms.size(); ++t) {
        const double numeric = (up[t] - terms[t].item()) / (2.0 * step);
        worst[t] = std::max(worst[t], rel_error(analytic[t][n][i], numeric));
      }
      p.data[i] = orig;
    }
  }
  tape.replay();
  return worst;
}

}  // namespace lhc
