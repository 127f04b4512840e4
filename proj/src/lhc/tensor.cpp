#include "lhc/tensor.hpp"

#include <numeric>
#include <sstream>

namespace lhc {

std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor::Tensor(Shape s, std::vector<double> d, bool req)
    : shape(std::move(s)), data(std::move(d)), requires_grad(req) {
  for (std::size_t extent : shape) {
    if (extent == 0) {
      throw DimensionError("tensor extents must be positive, got " +
                           shape_str(shape));
    }
  }
  if (shape_numel(shape) != data.size()) {
    throw DimensionError("tensor shape " + shape_str(shape) + " needs " +
                         std::to_string(shape_numel(shape)) +
                         " values, got " + std::to_string(data.size()));
  }
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  const std::size_t n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
}

Tensor Tensor::full(Shape shape, double value) {
  const std::size_t n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value));
}

Tensor Tensor::scalar(double value) { return Tensor({1}, {value}); }

void Tensor::zero_grad() {
  if (requires_grad) {
    grad.assign(data.size(), 0.0);
  } else {
    grad.clear();
  }
}

const Tensor& Var::value() const { return tape_->value(*this); }

double Var::item() const {
  const Tensor& t = value();
  if (t.numel() != 1) {
    throw DimensionError("item() on non-scalar tensor " + shape_str(t.shape));
  }
  return t.data[0];
}

const std::vector<double>& Var::grad() const { return tape_->grad(*this); }

bool Var::requires_grad() const { return tape_->requires_grad(*this); }

Var Tape::push_leaf(Tensor value, bool requires_grad, Tensor* source,
                    std::string_view op) {
  Entry e;
  e.op = op;
  e.out = std::move(value);
  e.out.requires_grad = requires_grad;
  e.out.grad.clear();
  e.source = source;
  e.leaf = true;
  entries_.push_back(std::move(e));
  return Var(this, entries_.size() - 1);
}

Var Tape::constant(Tensor value) {
  return push_leaf(std::move(value), false, nullptr, "constant");
}

Var Tape::variable(Tensor value) {
  return push_leaf(std::move(value), true, nullptr, "variable");
}

Var Tape::parameter(Tensor& source, bool trainable) {
  Tensor copy(source.shape, source.data);
  return push_leaf(std::move(copy), trainable, &source, "parameter");
}

void Tape::check_owned(Var v) const {
  if (v.tape_ != this || v.id_ >= entries_.size()) {
    throw std::logic_error("variable does not belong to this tape");
  }
}

Var Tape::record(std::string_view op, std::vector<Var> inputs,
                 ForwardFn forward, BackwardFn backward) {
  Entry e;
  e.op = op;
  e.inputs.reserve(inputs.size());
  std::vector<const Tensor*> refs;
  refs.reserve(inputs.size());
  bool needs_grad = false;
  for (const Var& v : inputs) {
    check_owned(v);
    e.inputs.push_back(v.id_);
    refs.push_back(&entries_[v.id_].out);
    needs_grad = needs_grad || entries_[v.id_].out.requires_grad;
  }
  forward(refs, e.out);
  e.out.requires_grad = needs_grad;
  e.forward = std::move(forward);
  e.backward = std::move(backward);
  entries_.push_back(std::move(e));
  return Var(this, entries_.size() - 1);
}

void Tape::backward(Var root) {
  check_owned(root);
  Entry& top = entries_[root.id_];
  if (top.out.numel() != 1) {
    throw DimensionError("backward() needs a scalar root, got " +
                         shape_str(top.out.shape));
  }
  for (Entry& e : entries_) e.out.grad.clear();
  if (!top.out.requires_grad) return;
  top.out.grad.assign(1, 1.0);

  std::vector<const Tensor*> refs;
  std::vector<std::vector<double>*> grads;
  for (std::size_t idx = root.id_ + 1; idx-- > 0;) {
    Entry& e = entries_[idx];
    if (e.out.grad.empty() || !e.out.requires_grad) continue;
    if (e.leaf) {
      if (e.source != nullptr) {
        Tensor& src = *e.source;
        if (src.grad.size() != src.data.size()) src.grad.assign(src.data.size(), 0.0);
        for (std::size_t i = 0; i < src.grad.size(); ++i) src.grad[i] += e.out.grad[i];
      }
      continue;
    }
    refs.clear();
    grads.clear();
    for (std::size_t in : e.inputs) {
      Entry& ie = entries_[in];
      refs.push_back(&ie.out);
      if (ie.out.requires_grad) {
        if (ie.out.grad.empty()) ie.out.grad.assign(ie.out.numel(), 0.0);
        grads.push_back(&ie.out.grad);
      } else {
        grads.push_back(nullptr);
      }
    }
    e.backward(refs, e.out, e.out.grad, grads);
  }
}

void Tape::replay() {
  std::vector<const Tensor*> refs;
  for (Entry& e : entries_) {
    if (e.leaf) {
      if (e.source != nullptr) e.out.data = e.source->data;
      continue;
    }
    refs.clear();
    for (std::size_t in : e.inputs) refs.push_back(&entries_[in].out);
    const bool req = e.out.requires_grad;
    e.forward(refs, e.out);
    e.out.requires_grad = req;
    e.out.grad.clear();
  }
}

void Tape::set_leaf_value(Var leaf, const Tensor& value) {
  check_owned(leaf);
  Entry& e = entries_[leaf.id_];
  if (!e.leaf) throw std::logic_error("set_leaf_value on a non-leaf entry");
  if (value.shape != e.out.shape) {
    throw DimensionError("leaf shape " + shape_str(e.out.shape) +
                         " cannot take value of shape " + shape_str(value.shape));
  }
  e.out.data = value.data;
}

const Tensor& Tape::value(Var v) const {
  check_owned(v);
  return entries_[v.id_].out;
}

const std::vector<double>& Tape::grad(Var v) const {
  check_owned(v);
  return entries_[v.id_].out.grad;
}

bool Tape::requires_grad(Var v) const {
  check_owned(v);
  return entries_[v.id_].out.requires_grad;
}

std::string_view Tape::op_name(Var v) const {
  check_owned(v);
  return entries_[v.id_].op;
}

}  // namespace lhc
