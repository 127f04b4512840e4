#include "lhc/ops.hpp"

#include <algorithm>
#include <cmath>

namespace lhc {

namespace {

void prepare(Tensor& out, Shape shape) {
  out.data.assign(shape_numel(shape), 0.0);
  out.shape = std::move(shape);
}

void require_same_shape(const char* op, Var a, Var b) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " +
                         shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
}

void require_matrix(const char* op, Var a) {
  if (a.shape().size() != 2) {
    throw DimensionError(std::string(op) + ": expected a matrix, got " +
                         shape_str(a.shape()));
  }
}

Tape& tape_of(Var a) {
  if (!a.valid()) throw std::logic_error("operation on an unbound variable");
  return *a.tape();
}

template <typename F, typename DF>
Var unary(const char* op, Var a, F f, DF df) {
  return tape_of(a).record(
      op, {a},
      [f](TensorRefs in, Tensor& out) {
        prepare(out, in[0]->shape);
        for (std::size_t i = 0; i < out.numel(); ++i) out.data[i] = f(in[0]->data[i]);
      },
      [df](TensorRefs in, const Tensor& out, const std::vector<double>& g,
           GradRefs dg) {
        if (!dg[0]) return;
        auto& d = *dg[0];
        for (std::size_t i = 0; i < g.size(); ++i) {
          d[i] += g[i] * df(in[0]->data[i], out.data[i]);
        }
      });
}

void transpose_into(const double* src, std::size_t rows, std::size_t cols,
                    std::vector<double>& dst) {
  dst.resize(rows * cols);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) dst[c * rows + r] = src[r * cols + c];
  }
}

}  // namespace

void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n,
          std::size_t k, const double* a, const double* b, double* c,
          bool accumulate) {
  if (!accumulate) std::fill(c, c + m * n, 0.0);
  std::vector<double> tmp;
  if (trans_b) {
    // b is n x k; bring it to k x n so the inner loop runs along contiguous rows.
    transpose_into(b, n, k, tmp);
    b = tmp.data();
  }
  if (!trans_a) {
    for (std::size_t i = 0; i < m; ++i) {
      double* crow = c + i * n;
      const double* arow = a + i * k;
      for (std::size_t p = 0; p < k; ++p) {
        const double av = arow[p];
        if (av == 0.0) continue;
        const double* brow = b + p * n;
        for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
      }
    }
  } else {
    // a is k x m.
    for (std::size_t p = 0; p < k; ++p) {
      const double* arow = a + p * m;
      const double* brow = b + p * n;
      for (std::size_t i = 0; i < m; ++i) {
        const double av = arow[i];
        if (av == 0.0) continue;
        double* crow = c + i * n;
        for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
      }
    }
  }
}

Var matmul(Var a, Var b) {
  require_matrix("matmul", a);
  require_matrix("matmul", b);
  if (a.shape()[1] != b.shape()[0]) {
    throw DimensionError("matmul: inner extents differ for " +
                         shape_str(a.shape()) + " and " + shape_str(b.shape()));
  }
  return tape_of(a).record(
      "matmul", {a, b},
      [](TensorRefs in, Tensor& out) {
        const std::size_t m = in[0]->shape[0], k = in[0]->shape[1], n = in[1]->shape[1];
        prepare(out, {m, n});
        gemm(false, false, m, n, k, in[0]->data.data(), in[1]->data.data(),
             out.data.data(), false);
      },
      [](TensorRefs in, const Tensor&, const std::vector<double>& g, GradRefs dg) {
        const std::size_t m = in[0]->shape[0], k = in[0]->shape[1], n = in[1]->shape[1];
        // dA = dC * B^T, dB = A^T * dC
        if (dg[0]) gemm(false, true, m, k, n, g.data(), in[1]->data.data(), dg[0]->data(), true);
        if (dg[1]) gemm(true, false, k, n, m, in[0]->data.data(), g.data(), dg[1]->data(), true);
      });
}

Var matmul_bt(Var a, Var b) {
  require_matrix("matmul_bt", a);
  require_matrix("matmul_bt", b);
  if (a.shape()[1] != b.shape()[1]) {
    throw DimensionError("matmul_bt: inner extents differ for " +
                         shape_str(a.shape()) + " and transposed " +
                         shape_str(b.shape()));
  }
  return tape_of(a).record(
      "matmul_bt", {a, b},
      [](TensorRefs in, Tensor& out) {
        const std::size_t m = in[0]->shape[0], k = in[0]->shape[1], n = in[1]->shape[0];
        prepare(out, {m, n});
        gemm(false, true, m, n, k, in[0]->data.data(), in[1]->data.data(),
             out.data.data(), false);
      },
      [](TensorRefs in, const Tensor&, const std::vector<double>& g, GradRefs dg) {
        const std::size_t m = in[0]->shape[0], k = in[0]->shape[1], n = in[1]->shape[0];
        // C = A B^T: dA = dC * B, dB = dC^T * A
        if (dg[0]) gemm(false, false, m, k, n, g.data(), in[1]->data.data(), dg[0]->data(), true);
        if (dg[1]) gemm(true, false, n, k, m, g.data(), in[0]->data.data(), dg[1]->data(), true);
      });
}

Var add(Var a, Var b) {
  require_same_shape("add", a, b);
  return tape_of(a).record(
      "add", {a, b},
      [](TensorRefs in, Tensor& out) {
        prepare(out, in[0]->shape);
        for (std::size_t i = 0; i < out.numel(); ++i) out.data[i] = in[0]->data[i] + in[1]->data[i];
      },
      [](TensorRefs, const Tensor&, const std::vector<double>& g, GradRefs dg) {
        for (auto* d : dg) {
          if (!d) continue;
          for (std::size_t i = 0; i < g.size(); ++i) (*d)[i] += g[i];
        }
      });
}

Var sub(Var a, Var b) {
  require_same_shape("sub", a, b);
  return tape_of(a).record(
      "sub", {a, b},
      [](TensorRefs in, Tensor& out) {
        prepare(out, in[0]->shape);
        for (std::size_t i = 0; i < out.numel(); ++i) out.data[i] = in[0]->data[i] - in[1]->data[i];
      },
      [](TensorRefs, const Tensor&, const std::vector<double>& g, GradRefs dg) {
        if (dg[0]) for (std::size_t i = 0; i < g.size(); ++i) (*dg[0])[i] += g[i];
        if (dg[1]) for (std::size_t i = 0; i < g.size(); ++i) (*dg[1])[i] -= g[i];
      });
}

Var mul(Var a, Var b) {
  require_same_shape("mul", a, b);
  return tape_of(a).record(
      "mul", {a, b},
      [](TensorRefs in, Tensor& out) {
        prepare(out, in[0]->shape);
        for (std::size_t i = 0; i < out.numel(); ++i) out.data[i] = in[0]->data[i] * in[1]->data[i];
      },
      [](TensorRefs in, const Tensor&, const std::vector<double>& g, GradRefs dg) {
        if (dg[0]) for (std::size_t i = 0; i < g.size(); ++i) (*dg[0])[i] += g[i] * in[1]->data[i];
        if (dg[1]) for (std::size_t i = 0; i < g.size(); ++i) (*dg[1])[i] += g[i] * in[0]->data[i];
      });
}

Var scale(Var a, double factor) {
  return unary(
      "scale", a, [factor](double x) { return factor * x; },
      [factor](double, double) { return factor; });
}

Var sigmoid(Var a) {
  return unary(
      "sigmoid", a,
      [](double x) {
        if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
        const double e = std::exp(x);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Var tanh(Var a) {
  return unary(
      "tanh", a, [](double x) { return std::tanh(x); },
      [](double, double y) { return 1.0 - y * y; });
}

Var square(Var a) {
  return unary(
      "square", a, [](double x) { return x * x; },
      [](double x, double) { return 2.0 * x; });
}

Var add_rowvec(Var a, Var v) {
  const std::size_t cols = a.value().cols();
  if (v.value().numel() != cols) {
    throw DimensionError("add_rowvec: vector " + shape_str(v.shape()) +
                         " does not match trailing extent of " + shape_str(a.shape()));
  }
  return tape_of(a).record(
      "add_rowvec", {a, v},
      [](TensorRefs in, Tensor& out) {
        prepare(out, in[0]->shape);
        const std::size_t n = in[0]->cols();
        for (std::size_t i = 0; i < out.numel(); ++i) out.data[i] = in[0]->data[i] + in[1]->data[i % n];
      },
      [](TensorRefs in, const Tensor&, const std::vector<double>& g, GradRefs dg) {
        const std::size_t n = in[0]->cols();
        if (dg[0]) for (std::size_t i = 0; i < g.size(); ++i) (*dg[0])[i] += g[i];
        if (dg[1]) for (std::size_t i = 0; i < g.size(); ++i) (*dg[1])[i % n] += g[i];
      });
}

Var mul_rowvec(Var a, Var v) {
  const std::size_t cols = a.value().cols();
  if (v.value().numel() != cols) {
    throw DimensionError("mul_rowvec: vector " + shape_str(v.shape()) +
                         " does not match trailing extent of " + shape_str(a.shape()));
  }
  return tape_of(a).record(
      "mul_rowvec", {a, v},
      [](TensorRefs in, Tensor& out) {
        prepare(out, in[0]->shape);
        const std::size_t n = in[0]->cols();
        for (std::size_t i = 0; i < out.numel(); ++i) out.data[i] = in[0]->data[i] * in[1]->data[i % n];
      },
      [](TensorRefs in, const Tensor&, const std::vector<double>& g, GradRefs dg) {
        const std::size_t n = in[0]->cols();
        if (dg[0]) for (std::size_t i = 0; i < g.size(); ++i) (*dg[0])[i] += g[i] * in[1]->data[i % n];
        if (dg[1]) for (std::size_t i = 0; i < g.size(); ++i) (*dg[1])[i % n] += g[i] * in[0]->data[i];
      });
}

Var concat(const std::vector<Var>& parts) {
  if (parts.empty()) throw DimensionError("concat: no inputs");
  const std::size_t rows = parts.front().value().rows();
  std::size_t total = 0;
  for (const Var& p : parts) {
    if (p.value().rows() != rows) {
      throw DimensionError("concat: row count mismatch " +
                           shape_str(parts.front().shape()) + " vs " + shape_str(p.shape()));
    }
    total += p.value().cols();
  }
  return tape_of(parts.front()).record(
      "concat", parts,
      [rows, total](TensorRefs in, Tensor& out) {
        prepare(out, {rows, total});
        std::size_t offset = 0;
        for (const Tensor* t : in) {
          const std::size_t c = t->cols();
          for (std::size_t r = 0; r < rows; ++r) {
            std::copy_n(t->data.data() + r * c, c, out.data.data() + r * total + offset);
          }
          offset += c;
        }
      },
      [rows, total](TensorRefs in, const Tensor&, const std::vector<double>& g, GradRefs dg) {
        std::size_t offset = 0;
        for (std::size_t k = 0; k < in.size(); ++k) {
          const std::size_t c = in[k]->cols();
          if (dg[k]) {
            auto& d = *dg[k];
            for (std::size_t r = 0; r < rows; ++r) {
              for (std::size_t j = 0; j < c; ++j) d[r * c + j] += g[r * total + offset + j];
            }
          }
          offset += c;
        }
      });
}

Var slice(Var a, std::size_t begin, std::size_t end) {
  const std::size_t cols = a.value().cols();
  if (begin >= end || end > cols) {
    throw DimensionError("slice: columns [" + std::to_string(begin) + ", " +
                         std::to_string(end) + ") out of bounds for " + shape_str(a.shape()));
  }
  const std::size_t rows = a.value().rows();
  return tape_of(a).record(
      "slice", {a},
      [rows, cols, begin, end](TensorRefs in, Tensor& out) {
        const std::size_t w = end - begin;
        prepare(out, {rows, w});
        for (std::size_t r = 0; r < rows; ++r) {
          std::copy_n(in[0]->data.data() + r * cols + begin, w, out.data.data() + r * w);
        }
      },
      [rows, cols, begin, end](TensorRefs, const Tensor&, const std::vector<double>& g, GradRefs dg) {
        if (!dg[0]) return;
        const std::size_t w = end - begin;
        for (std::size_t r = 0; r < rows; ++r) {
          for (std::size_t j = 0; j < w; ++j) (*dg[0])[r * cols + begin + j] += g[r * w + j];
        }
      });
}

Var reshape(Var a, Shape shape) {
  if (shape_numel(shape) != a.value().numel()) {
    throw DimensionError("reshape: cannot view " + shape_str(a.shape()) + " as " +
                         shape_str(shape));
  }
  return tape_of(a).record(
      "reshape", {a},
      [shape](TensorRefs in, Tensor& out) {
        out.shape = shape;
        out.data = in[0]->data;
      },
      [](TensorRefs, const Tensor&, const std::vector<double>& g, GradRefs dg) {
        if (!dg[0]) return;
        for (std::size_t i = 0; i < g.size(); ++i) (*dg[0])[i] += g[i];
      });
}

Var sum(Var a) {
  return tape_of(a).record(
      "sum", {a},
      [](TensorRefs in, Tensor& out) {
        prepare(out, {1});
        double s = 0.0;
        for (double x : in[0]->data) s += x;
        out.data[0] = s;
      },
      [](TensorRefs, const Tensor&, const std::vector<double>& g, GradRefs dg) {
        if (!dg[0]) return;
        for (double& d : *dg[0]) d += g[0];
      });
}

namespace {

void softmax_forward(const Tensor& x, Tensor& out, std::size_t group) {
  prepare(out, x.shape);
  const std::size_t groups = x.numel() / group;
  for (std::size_t r = 0; r < groups; ++r) {
    const double* xr = x.data.data() + r * group;
    double* yr = out.data.data() + r * group;
    const double mx = *std::max_element(xr, xr + group);
    double z = 0.0;
    for (std::size_t j = 0; j < group; ++j) {
      yr[j] = std::exp(xr[j] - mx);
      z += yr[j];
    }
    for (std::size_t j = 0; j < group; ++j) yr[j] /= z;
  }
}

void softmax_backward(const Tensor& y, const std::vector<double>& g,
                      std::vector<double>& d, std::size_t group) {
  const std::size_t groups = y.numel() / group;
  for (std::size_t r = 0; r < groups; ++r) {
    const double* yr = y.data.data() + r * group;
    const double* gr = g.data() + r * group;
    double dot = 0.0;
    for (std::size_t j = 0; j < group; ++j) dot += gr[j] * yr[j];
    for (std::size_t j = 0; j < group; ++j) d[r * group + j] += yr[j] * (gr[j] - dot);
  }
}

Var softmax_groups(const char* op, Var logits, std::size_t group) {
  return tape_of(logits).record(
      op, {logits},
      [group](TensorRefs in, Tensor& out) { softmax_forward(*in[0], out, group); },
      [group](TensorRefs, const Tensor& out, const std::vector<double>& g, GradRefs dg) {
        if (dg[0]) softmax_backward(out, g, *dg[0], group);
      });
}

}  // namespace

Var softmax_rows(Var logits) {
  return softmax_groups("softmax", logits, logits.value().cols());
}

Var softmax2(Var logits) {
  if (logits.value().cols() % 2 != 0) {
    throw DimensionError("softmax2: trailing extent must be even, got " +
                         shape_str(logits.shape()));
  }
  return softmax_groups("softmax2", logits, 2);
}

Var cross_entropy_rows(Var target, Var pred) {
  if (target.shape() != pred.shape()) {
    throw DimensionError("cross_entropy: support mismatch " + shape_str(target.shape()) +
                         " vs " + shape_str(pred.shape()));
  }
  const std::size_t rows = target.value().rows();
  const std::size_t cols = target.value().cols();
  return tape_of(target).record(
      "cross_entropy", {target, pred},
      [rows, cols](TensorRefs in, Tensor& out) {
        prepare(out, {rows});
        for (std::size_t r = 0; r < rows; ++r) {
          double h = 0.0;
          for (std::size_t j = 0; j < cols; ++j) {
            const std::size_t i = r * cols + j;
            h -= in[0]->data[i] * std::log(std::max(in[1]->data[i], kLogClamp));
          }
          out.data[r] = h;
        }
      },
      [cols](TensorRefs in, const Tensor&, const std::vector<double>& g, GradRefs dg) {
        for (std::size_t i = 0; i < in[0]->numel(); ++i) {
          const double gr = g[i / cols];
          const double p = in[1]->data[i];
          if (dg[0]) (*dg[0])[i] -= gr * std::log(std::max(p, kLogClamp));
          if (dg[1] && p > kLogClamp) (*dg[1])[i] -= gr * in[0]->data[i] / p;
        }
      });
}

Var cross_entropy(Var target, Var pred) { return sum(cross_entropy_rows(target, pred)); }

}  // namespace lhc
