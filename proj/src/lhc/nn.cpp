#include "lhc/nn.hpp"

#include <cmath>
#include <cstring>

#include "lhc/ops.hpp"

namespace lhc {

Tensor& ParameterSet::add(const std::string& name, Tensor value) {
  auto [it, inserted] = params_.emplace(name, std::move(value));
  if (!inserted) throw std::invalid_argument("duplicate parameter name: " + name);
  return it->second;
}

Tensor& ParameterSet::at(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw std::out_of_range("unknown parameter: " + name);
  return it->second;
}

const Tensor& ParameterSet::at(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw std::out_of_range("unknown parameter: " + name);
  return it->second;
}

void ParameterSet::freeze(const std::string& name) {
  if (!contains(name)) throw std::out_of_range("cannot freeze unknown parameter: " + name);
  frozen_.insert(name);
}

void ParameterSet::freeze_prefix(const std::string& prefix) {
  for (const auto& [name, _] : params_) {
    if (name.starts_with(prefix)) frozen_.insert(name);
  }
}

void ParameterSet::merge(const ParameterSet& other, const std::string& prefix) {
  for (const auto& [name, t] : other.params_) {
    if (!name.starts_with(prefix)) continue;
    add(name, Tensor(t.shape, t.data));
    if (other.is_frozen(name)) frozen_.insert(name);
  }
}

std::vector<std::string> ParameterSet::names() const {
  std::vector<std::string> out;
  for (const auto& [name, _] : params_) out.push_back(name);
  return out;
}

std::vector<std::string> ParameterSet::trainable_names() const {
  std::vector<std::string> out;
  for (const auto& [name, _] : params_) {
    if (!is_frozen(name)) out.push_back(name);
  }
  return out;
}

std::size_t ParameterSet::count(const std::string& prefix) const {
  std::size_t n = 0;
  for (const auto& [name, t] : params_) {
    if (name.starts_with(prefix)) n += t.numel();
  }
  return n;
}

void ParameterSet::zero_grad() {
  for (auto& [_, t] : params_) t.grad.clear();
}

bool ParameterSet::same_values(const ParameterSet& other, const std::string& prefix) const {
  auto collect = [&prefix](const ParameterSet& ps) {
    std::vector<const std::pair<const std::string, Tensor>*> out;
    for (const auto& e : ps.params_) {
      if (e.first.starts_with(prefix)) out.push_back(&e);
    }
    return out;
  };
  const auto mine = collect(*this);
  const auto theirs = collect(other);
  if (mine.size() != theirs.size()) return false;
  for (std::size_t i = 0; i < mine.size(); ++i) {
    const auto& [na, ta] = *mine[i];
    const auto& [nb, tb] = *theirs[i];
    if (na != nb || ta.shape != tb.shape) return false;
    // Bitwise, so -0.0 vs 0.0 and NaN payloads count as differences.
    if (std::memcmp(ta.data.data(), tb.data.data(), ta.numel() * sizeof(double)) != 0) {
      return false;
    }
  }
  return true;
}

Var ParamBinder::operator()(const std::string& name) {
  auto it = bound_.find(name);
  if (it != bound_.end()) return it->second;
  Var v;
  if (mutable_ != nullptr) {
    v = tape_.parameter(mutable_->at(name), !mutable_->is_frozen(name));
  } else {
    const Tensor& t = params_.at(name);
    v = tape_.constant(Tensor(t.shape, t.data));
  }
  bound_.emplace(name, v);
  return v;
}

double xavier_bound(std::size_t fan_in, std::size_t fan_out) {
  return std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
}

namespace {

Tensor xavier(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
  const double bound = xavier_bound(cols, rows);
  std::uniform_real_distribution<double> dist(-bound, bound);
  Tensor t = Tensor::zeros({rows, cols});
  for (double& x : t.data) x = dist(rng);
  return t;
}

}  // namespace

void LinearLayer::init(ParameterSet& params, std::mt19937_64& rng) const {
  if (in == 0 || out == 0) throw DimensionError("linear layer " + name + " has a zero extent");
  params.add(weight_name(), xavier(out, in, rng));
  params.add(bias_name(), Tensor::zeros({out}));
}

Var LinearLayer::forward(ParamBinder& bind, Var x) const {
  if (x.value().cols() != in) {
    throw DimensionError(name + ": expected input width " + std::to_string(in) +
                         ", got " + shape_str(x.shape()));
  }
  return add_rowvec(matmul_bt(x, bind(weight_name())), bind(bias_name()));
}

void LstmCell::init(ParameterSet& params, std::mt19937_64& rng) const {
  if (in == 0 || hidden == 0) throw DimensionError("lstm cell " + name + " has a zero extent");
  params.add(w_ih_name(), xavier(4 * hidden, in, rng));
  params.add(w_hh_name(), xavier(4 * hidden, hidden, rng));
  Tensor bias = Tensor::zeros({4 * hidden});
  for (std::size_t j = hidden; j < 2 * hidden; ++j) bias[j] = 1.0;
  params.add(bias_name(), std::move(bias));
}

std::pair<Var, Var> LstmCell::step(ParamBinder& bind, Var x, Var h_prev, Var c_prev) const {
  if (x.value().cols() != in || h_prev.value().cols() != hidden ||
      c_prev.value().cols() != hidden || h_prev.value().rows() != x.value().rows() ||
      c_prev.value().rows() != x.value().rows()) {
    throw DimensionError(name + ": step shapes x" + shape_str(x.shape()) + " h" +
                         shape_str(h_prev.shape()) + " c" + shape_str(c_prev.shape()) +
                         " do not fit in=" + std::to_string(in) +
                         " hidden=" + std::to_string(hidden));
  }
  Var gates = add_rowvec(matmul_bt(x, bind(w_ih_name())) + matmul_bt(h_prev, bind(w_hh_name())),
                         bind(bias_name()));
  const std::size_t h = hidden;
  Var i = sigmoid(slice(gates, 0, h));
  Var f = sigmoid(slice(gates, h, 2 * h));
  Var g = lhc::tanh(slice(gates, 2 * h, 3 * h));
  Var o = sigmoid(slice(gates, 3 * h, 4 * h));
  Var c = f * c_prev + i * g;
  Var hn = o * lhc::tanh(c);
  return {hn, c};
}

void AdamState::update(ParameterSet& params) {
  const auto names = params.trainable_names();
  for (const std::string& name : names) {
    if (params.at(name).grad.size() != params.at(name).numel()) {
      throw MissingGradientError("no gradient for trainable parameter " + name);
    }
  }
  ++step_;
  const double b1 = options_.beta1, b2 = options_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(step_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(step_));
  for (const std::string& name : names) {
    Tensor& p = params.at(name);
    Moments& mom = moments_[name];
    if (mom.m.size() != p.numel()) {
      mom.m.assign(p.numel(), 0.0);
      mom.v.assign(p.numel(), 0.0);
    }
    for (std::size_t i = 0; i < p.numel(); ++i) {
      const double g = p.grad[i];
      mom.m[i] = b1 * mom.m[i] + (1.0 - b1) * g;
      mom.v[i] = b2 * mom.v[i] + (1.0 - b2) * g * g;
      const double mhat = mom.m[i] / c1;
      const double vhat = mom.v[i] / c2;
      p.data[i] -= options_.lr * mhat / (std::sqrt(vhat) + options_.epsilon);
    }
  }
}

}  // namespace lhc
