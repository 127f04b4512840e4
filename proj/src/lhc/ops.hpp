#pragma once

#include <vector>

#include "lhc/tensor.hpp"

namespace lhc {

// C = A * B for row-major A (m x k) and B (k x n), with optional transposes.
// Accumulates into C when `accumulate` is set.
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n,
          std::size_t k, const double* a, const double* b, double* c,
          bool accumulate);

// Lower bound applied to probabilities before taking logs in cross entropy.
inline constexpr double kLogClamp = 1e-12;

Var matmul(Var a, Var b);     // [m x k] * [k x n]
Var matmul_bt(Var a, Var b);  // [m x k] * [n x k]^T

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double factor);
Var sigmoid(Var a);
Var tanh(Var a);
Var square(Var a);

// Adds / multiplies a length-cols vector into every row of a matrix view.
Var add_rowvec(Var a, Var v);
Var mul_rowvec(Var a, Var v);

// Joins matrix views with equal row counts along the trailing axis.
Var concat(const std::vector<Var>& parts);
// Columns [begin, end) of a matrix view.
Var slice(Var a, std::size_t begin, std::size_t end);
Var reshape(Var a, Shape shape);

Var sum(Var a);
Var softmax_rows(Var logits);
// Softmax over consecutive pairs of the trailing axis; the trailing extent
// must be even. [..., 2L] is treated as L two-way distributions.
Var softmax2(Var logits);

// Per-row -sum_x target(x) ln(max(pred(x), kLogClamp)) over the trailing
// axis. Gradients flow into both arguments.
Var cross_entropy_rows(Var target, Var pred);
// Sum of cross_entropy_rows.
Var cross_entropy(Var target, Var pred);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }
inline Var operator*(double s, Var a) { return scale(a, s); }

}  // namespace lhc
