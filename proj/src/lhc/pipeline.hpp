#pragma once

#include <compare>
#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "lhc/nn.hpp"

namespace lhc {

using ClassId = std::size_t;

// Fixed-length binary string; bit 0 is the first (root-level) bit.
struct BitString {
  std::vector<std::uint8_t> bits;

  std::size_t size() const { return bits.size(); }
  std::string str() const;
  static BitString parse(std::string_view text);
  static BitString from_index(std::uint64_t value, std::size_t length);  // MSB first

  auto operator<=>(const BitString&) const = default;
};

// Per-bit argmax over L consecutive (P(0), P(1)) pairs; an exact tie gives 0.
BitString string_of(std::span<const double> pairs);

class CollisionError : public std::runtime_error {
 public:
  CollisionError(const std::string& what, std::vector<std::pair<ClassId, ClassId>> pairs)
      : std::runtime_error(what), pairs_(std::move(pairs)) {}
  const std::vector<std::pair<ClassId, ClassId>>& pairs() const { return pairs_; }

 private:
  std::vector<std::pair<ClassId, ClassId>> pairs_;
};

// Bijection between class ids 0..C-1 and C distinct strings of one length.
class StringLookupTable {
 public:
  // Throws CollisionError naming every colliding pair, or std::invalid_argument
  // when lengths differ.
  explicit StringLookupTable(std::vector<BitString> class_to_string,
                             std::vector<std::string> class_names = {});

  std::size_t num_classes() const { return class_to_string_.size(); }
  std::size_t length() const { return class_to_string_.front().size(); }
  const BitString& string_for(ClassId c) const { return class_to_string_.at(c); }
  const std::vector<BitString>& strings() const { return class_to_string_; }
  const std::string& class_name(ClassId c) const { return class_names_.at(c); }
  const std::vector<std::string>& class_names() const { return class_names_; }
  std::optional<ClassId> find(const BitString& s) const;

  nlohmann::json to_json() const;
  static StringLookupTable from_json(const nlohmann::json& j);

 private:
  std::vector<BitString> class_to_string_;
  std::vector<std::string> class_names_;
  std::map<BitString, ClassId> string_to_class_;
};

// Pairs of classes sharing a string, in ascending order.
std::vector<std::pair<ClassId, ClassId>> find_collisions(const std::vector<BitString>& strings);

// All-bits-match lookup; std::nullopt when s(p) is not in the table.
std::optional<ClassId> lookup_predict(const StringLookupTable& table, std::span<const double> p);

// Bijective table with C distinct uniformly drawn L-bit strings.
StringLookupTable random_lookup_table(std::size_t num_classes, std::size_t length,
                                      std::uint64_t seed);

// Shared tanh trunk C -> hidden, then L independent hidden -> 2 heads.
struct Class2StrNet {
  std::size_t num_classes = 0;
  std::size_t length = 0;
  std::size_t hidden = 0;

  static std::size_t default_hidden(std::size_t num_classes);

  LinearLayer trunk() const { return {"c2s.trunk", num_classes, hidden}; }
  LinearLayer head(std::size_t bit) const {
    return {"c2s.head" + std::to_string(bit), hidden, 2};
  }
  void init(ParameterSet& params, std::mt19937_64& rng) const;
  // labels [B x C] -> q [B x 2L]
  Var forward(ParamBinder& bind, Var labels) const;
};

// 2L -> hidden (tanh) -> C, softmax over classes.
struct Str2ClassNet {
  std::size_t num_classes = 0;
  std::size_t length = 0;
  std::size_t hidden = 0;

  LinearLayer first() const { return {"s2c.fc0", 2 * length, hidden}; }
  LinearLayer second() const { return {"s2c.fc1", hidden, num_classes}; }
  void init(ParameterSet& params, std::mt19937_64& rng) const;
  // q [B x 2L] -> l' [B x C]
  Var forward(ParamBinder& bind, Var q) const;
};

// Projection feature_dim -> hidden, an LSTM stack unrolled for L steps with
// the projected features as the input at every step, and a shared per-step
// head hidden -> 2.
struct LhClassifierNet {
  std::size_t feature_dim = 0;
  std::size_t hidden = 0;
  std::size_t layers = 1;
  std::size_t length = 0;

  LinearLayer projection() const { return {"lh.proj", feature_dim, hidden}; }
  LstmCell cell(std::size_t layer) const {
    return {"lh.lstm" + std::to_string(layer), hidden, hidden};
  }
  LinearLayer head() const { return {"lh.head", hidden, 2}; }
  void init(ParameterSet& params, std::mt19937_64& rng) const;
  // features [B x feature_dim] -> p [B x 2L]
  Var forward(ParamBinder& bind, Var features) const;
  std::size_t param_count() const;
};

// Encodes each one-hot class through Class2Str and reads off s(q).
// Throws CollisionError when two classes share a string.
StringLookupTable freeze_lookup(const Class2StrNet& net, const ParameterSet& params,
                                std::vector<std::string> class_names = {});

// q rows for every class (identity input), [C x 2L].
Tensor class_string_distributions(const Class2StrNet& net, const ParameterSet& params);

}  // namespace lhc
