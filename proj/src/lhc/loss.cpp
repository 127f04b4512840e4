#include "lhc/loss.hpp"

#include <cmath>
#include <stdexcept>

#include "lhc/ops.hpp"

namespace lhc {

void HyperParams::validate() const {
  if (alpha < 0 || beta < 0 || gamma < 0 || delta < 0) {
    throw std::invalid_argument("alpha, beta, gamma and delta must be non-negative");
  }
  if (!(mu > 0.0 && mu < 1.0)) throw std::invalid_argument("mu must lie strictly inside (0, 1)");
  if (num_classes < 2) throw std::invalid_argument("at least two classes are required");
  if (length < min_string_length(num_classes)) {
    throw std::invalid_argument("L=" + std::to_string(length) + " bits cannot encode " +
                                std::to_string(num_classes) + " classes one to one (need L >= " +
                                std::to_string(min_string_length(num_classes)) + ")");
  }
}

std::size_t min_string_length(std::size_t num_classes) {
  std::size_t bits = 0;
  while (bits < 64 && (std::uint64_t{1} << bits) < num_classes) ++bits;
  return bits;
}

double bias_regularizer(std::span<const double> q) {
  double s = 0.0;
  for (double x : q) s += x * x;
  return s;
}

Var bias_regularizer(Var q) { return sum(square(q)); }

Var structured_string_loss(Var p, Var q, double mu, StringCeOrder order) {
  if (p.shape() != q.shape()) {
    throw DimensionError("structured_string_loss: length mismatch " + shape_str(p.shape()) +
                         " vs " + shape_str(q.shape()));
  }
  if (!(mu > 0.0 && mu < 1.0)) throw std::invalid_argument("mu must lie strictly inside (0, 1)");
  const std::size_t batch = p.value().rows();
  const std::size_t length = p.value().cols() / 2;
  Var pairs_p = reshape(p, {batch * length, 2});
  Var pairs_q = reshape(q, {batch * length, 2});
  Var per_bit = order == StringCeOrder::kPredictorTarget ? cross_entropy_rows(pairs_p, pairs_q)
                                                         : cross_entropy_rows(pairs_q, pairs_p);
  Tensor weights = Tensor::zeros({length});
  double w = 1.0;
  for (std::size_t i = 0; i < length; ++i) {
    w *= mu;
    weights[i] = w;
  }
  Tape& tape = *p.tape();
  return sum(mul_rowvec(reshape(per_bit, {batch, length}), tape.constant(std::move(weights))));
}

Var l2_penalty(ParamBinder& bind) {
  Var total = bind.tape().constant(Tensor::scalar(0.0));
  for (const std::string& name : bind.params().trainable_names()) {
    total = add(total, sum(square(bind(name))));
  }
  return total;
}

LossReport LossTerms::report() const {
  return {total.item(), term_class.item(), term_string.item(), term_bias.item(), term_l2.item()};
}

LossTerms total_loss(Var l, Var l_prime, Var p, Var q, ParamBinder& bind, const HyperParams& hp) {
  if (l.shape() != l_prime.shape()) {
    throw DimensionError("total_loss: class distributions differ " + shape_str(l.shape()) +
                         " vs " + shape_str(l_prime.shape()));
  }
  if (p.shape() != q.shape()) {
    throw DimensionError("total_loss: string distributions differ " + shape_str(p.shape()) +
                         " vs " + shape_str(q.shape()));
  }
  if (l.value().rows() != p.value().rows()) {
    throw DimensionError("total_loss: batch sizes differ");
  }
  if (l.value().cols() != hp.num_classes || p.value().cols() != 2 * hp.length) {
    throw DimensionError("total_loss: inputs do not match C=" + std::to_string(hp.num_classes) +
                         ", L=" + std::to_string(hp.length));
  }
  const double inv_batch = 1.0 / static_cast<double>(l.value().rows());
  LossTerms t;
  t.term_class = scale(cross_entropy(l, l_prime), hp.alpha * inv_batch);
  t.term_string = scale(structured_string_loss(p, q, hp.mu, hp.ce_order), hp.beta * inv_batch);
  t.term_bias = scale(bias_regularizer(q), -hp.gamma * inv_batch);
  t.term_l2 = scale(l2_penalty(bind), hp.delta);
  t.total = t.term_class + t.term_string + t.term_bias + t.term_l2;
  return t;
}

}  // namespace lhc
