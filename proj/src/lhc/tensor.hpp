#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace lhc {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Dense row-major float64 array. A tensor of rank >= 1 is viewed as a matrix
// of rows() x cols(), where cols() is the trailing extent.
struct Tensor {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty when no gradient has been accumulated
  bool requires_grad = false;

  Tensor() = default;
  Tensor(Shape shape, std::vector<double> data, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value);
  static Tensor scalar(double value);

  std::size_t numel() const { return data.size(); }
  std::size_t cols() const { return shape.empty() ? 1 : shape.back(); }
  std::size_t rows() const { return shape.empty() ? 1 : numel() / cols(); }
  bool has_grad() const { return !grad.empty(); }
  void zero_grad();

  double& operator[](std::size_t i) { return data[i]; }
  double operator[](std::size_t i) const { return data[i]; }
  double& at(std::size_t r, std::size_t c) { return data[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const { return data[r * cols() + c]; }
};

class Tape;

// Handle to an entry on a Tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape; }
  double item() const;
  const std::vector<double>& grad() const;
  bool requires_grad() const;

  Tape* tape() const { return tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

using TensorRefs = std::span<const Tensor* const>;
using GradRefs = std::span<std::vector<double>* const>;

// Computes the output value from the input values.
using ForwardFn = std::function<void(TensorRefs inputs, Tensor& out)>;
// Accumulates (+=) adjoints into the input gradient buffers. A null entry in
// `input_grads` marks an input that does not need a gradient.
using BackwardFn = std::function<void(TensorRefs inputs, const Tensor& out,
                                      const std::vector<double>& out_grad,
                                      GradRefs input_grads)>;

// Ordered record of executed operations. Entries are appended in topological
// order; backward() walks them once in reverse.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  Var variable(Tensor value);
  // Leaf bound to an external tensor. Its value is copied at creation and
  // re-read on replay(); backward() accumulates into `source.grad`.
  Var parameter(Tensor& source, bool trainable = true);

  Var record(std::string_view op, std::vector<Var> inputs, ForwardFn forward,
             BackwardFn backward);

  // Reverse sweep from a scalar root. Gradients on tape entries are reset
  // first, so repeated calls do not double count interior nodes; bound
  // parameters still accumulate.
  void backward(Var root);

  // Recompute every non-leaf entry from the current leaf values.
  void replay();

  void set_leaf_value(Var leaf, const Tensor& value);

  const Tensor& value(Var v) const;
  const std::vector<double>& grad(Var v) const;
  bool requires_grad(Var v) const;
  std::string_view op_name(Var v) const;
  std::size_t size() const { return entries_.size(); }

 private:
  struct Entry {
    std::string_view op;
    std::vector<std::size_t> inputs;
    Tensor out;
    ForwardFn forward;
    BackwardFn backward;
    Tensor* source = nullptr;
    bool leaf = false;
  };

  Var push_leaf(Tensor value, bool requires_grad, Tensor* source,
                std::string_view op);
  void check_owned(Var v) const;

  std::vector<Entry> entries_;
};

}  // namespace lhc
