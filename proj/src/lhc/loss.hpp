#pragma once

#include <span>

#include "lhc/nn.hpp"

namespace lhc {

// Which distribution plays the target in the per-bit cross entropy term.
// kPredictorTarget uses H(p, q) with p from the LH classifier as the target;
// kEncoderTarget uses H(q, p).
enum class StringCeOrder { kPredictorTarget, kEncoderTarget };

struct HyperParams {
  double alpha = 1.0;
  double beta = 1.0;
  double gamma = 0.1;
  double delta = 1e-4;
  double mu = 0.8;
  std::size_t length = 4;       // L
  std::size_t num_classes = 10; // C
  StringCeOrder ce_order = StringCeOrder::kPredictorTarget;

  void validate() const;
};

// ceil(log2(C)), the shortest string length admitting a bijection.
std::size_t min_string_length(std::size_t num_classes);

struct LossReport {
  double total = 0.0;
  double term_class = 0.0;
  double term_string = 0.0;
  double term_bias = 0.0;
  double term_l2 = 0.0;
};

// sum_i q_i(0)^2 + q_i(1)^2 over L pairs.
double bias_regularizer(std::span<const double> q);
// Batched: sum over the batch of the per-row regularizer; q is [B x 2L].
Var bias_regularizer(Var q);

// mu^1 weights the first bit. Per-bit cross entropy ordered by `order`.
// Returns the sum over the batch; p and q are [B x 2L].
Var structured_string_loss(Var p, Var q, double mu,
                           StringCeOrder order = StringCeOrder::kPredictorTarget);

// sum of squares over every non-frozen parameter.
Var l2_penalty(ParamBinder& bind);

struct LossTerms {
  Var total;
  Var term_class;
  Var term_string;
  Var term_bias;
  Var term_l2;

  LossReport report() const;
};

// alpha H(l, l') + beta sum mu^i H(p^i, q^i) - gamma sum (q^i(0)^2 + q^i(1)^2)
// + delta L2(W). Batch terms are averaged over the batch rows; the L2 term is
// not. l, l_prime are [B x C]; p, q are [B x 2L].
LossTerms total_loss(Var l, Var l_prime, Var p, Var q, ParamBinder& bind,
                     const HyperParams& hp);

}  // namespace lhc
