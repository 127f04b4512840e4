#pragma once

#include <cstdint>
#include <map>
#include <random>
#include <set>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "lhc/tensor.hpp"

namespace lhc {

// Named parameters plus the subset excluded from optimizer updates.
class ParameterSet {
 public:
  Tensor& add(const std::string& name, Tensor value);
  Tensor& at(const std::string& name);
  const Tensor& at(const std::string& name) const;
  bool contains(const std::string& name) const { return params_.count(name) != 0; }

  void freeze(const std::string& name);
  void freeze_prefix(const std::string& prefix);
  bool is_frozen(const std::string& name) const { return frozen_.count(name) != 0; }

  // Copies every parameter under `prefix` from `other`, keeping names.
  void merge(const ParameterSet& other, const std::string& prefix = "");

  const std::map<std::string, Tensor>& entries() const { return params_; }
  std::vector<std::string> names() const;
  std::vector<std::string> trainable_names() const;

  std::size_t count(const std::string& prefix = "") const;
  void zero_grad();

  // Bitwise equality of names, shapes and values.
  bool same_values(const ParameterSet& other, const std::string& prefix = "") const;

 private:
  std::map<std::string, Tensor> params_;
  std::set<std::string> frozen_;
};

// Binds parameters onto a tape lazily; each name maps to one leaf per tape.
// Frozen parameters become constants. A binder over a const set binds every
// parameter as a constant (inference).
class ParamBinder {
 public:
  ParamBinder(Tape& tape, ParameterSet& params)
      : tape_(tape), mutable_(&params), params_(params) {}
  ParamBinder(Tape& tape, const ParameterSet& params) : tape_(tape), params_(params) {}

  Var operator()(const std::string& name);
  Tape& tape() { return tape_; }
  const ParameterSet& params() const { return params_; }

 private:
  Tape& tape_;
  ParameterSet* mutable_ = nullptr;
  const ParameterSet& params_;
  std::unordered_map<std::string, Var> bound_;
};

// sqrt(6 / (fan_in + fan_out))
double xavier_bound(std::size_t fan_in, std::size_t fan_out);

struct LinearLayer {
  std::string name;
  std::size_t in = 0;
  std::size_t out = 0;

  std::string weight_name() const { return name + ".weight"; }
  std::string bias_name() const { return name + ".bias"; }

  void init(ParameterSet& params, std::mt19937_64& rng) const;
  Var forward(ParamBinder& bind, Var x) const;  // [B x in] -> [B x out]
  std::size_t param_count() const { return out * in + out; }
};

// Gate rows are stacked as (input, forget, cell candidate, output).
struct LstmCell {
  std::string name;
  std::size_t in = 0;
  std::size_t hidden = 0;

  std::string w_ih_name() const { return name + ".w_ih"; }
  std::string w_hh_name() const { return name + ".w_hh"; }
  std::string bias_name() const { return name + ".bias"; }

  void init(ParameterSet& params, std::mt19937_64& rng) const;
  // x [B x in], h_prev/c_prev [B x hidden] -> (h, c)
  std::pair<Var, Var> step(ParamBinder& bind, Var x, Var h_prev, Var c_prev) const;
  std::size_t param_count() const { return 4 * hidden * (in + hidden) + 4 * hidden; }
};

struct AdamOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

class MissingGradientError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class AdamState {
 public:
  explicit AdamState(AdamOptions options = {}) : options_(options) {}

  // One bias-corrected step over every non-frozen parameter. Frozen
  // parameters are not touched.
  void update(ParameterSet& params);

  std::uint64_t step() const { return step_; }
  const AdamOptions& options() const { return options_; }
  void set_lr(double lr) { options_.lr = lr; }

 private:
  struct Moments {
    std::vector<double> m;
    std::vector<double> v;
  };

  AdamOptions options_;
  std::uint64_t step_ = 0;
  std::map<std::string, Moments> moments_;
};

}  // namespace lhc
