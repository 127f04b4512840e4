#include "lhc/pipeline.hpp"

#include <algorithm>
#include <set>

#include "lhc/ops.hpp"

namespace lhc {

using nlohmann::json;

std::string BitString::str() const {
  std::string s;
  s.reserve(bits.size());
  for (auto b : bits) s.push_back(b ? '1' : '0');
  return s;
}

BitString BitString::parse(std::string_view text) {
  BitString out;
  for (char ch : text) {
    if (ch != '0' && ch != '1') {
      throw std::invalid_argument("bit string may only contain 0/1: \"" + std::string(text) + "\"");
    }
    out.bits.push_back(ch == '1');
  }
  return out;
}

BitString BitString::from_index(std::uint64_t value, std::size_t length) {
  BitString out;
  out.bits.resize(length);
  for (std::size_t i = 0; i < length; ++i) {
    out.bits[length - 1 - i] = static_cast<std::uint8_t>((value >> i) & 1u);
  }
  return out;
}

BitString string_of(std::span<const double> pairs) {
  if (pairs.size() % 2 != 0) throw DimensionError("string_of: odd number of probabilities");
  BitString out;
  out.bits.resize(pairs.size() / 2);
  for (std::size_t i = 0; i < out.bits.size(); ++i) {
    out.bits[i] = pairs[2 * i + 1] > pairs[2 * i] ? 1 : 0;
  }
  return out;
}

std::vector<std::pair<ClassId, ClassId>> find_collisions(const std::vector<BitString>& strings) {
  std::vector<std::pair<ClassId, ClassId>> out;
  for (ClassId a = 0; a < strings.size(); ++a) {
    for (ClassId b = a + 1; b < strings.size(); ++b) {
      if (strings[a] == strings[b]) out.emplace_back(a, b);
    }
  }
  return out;
}

StringLookupTable::StringLookupTable(std::vector<BitString> class_to_string,
                                     std::vector<std::string> class_names)
    : class_to_string_(std::move(class_to_string)), class_names_(std::move(class_names)) {
  if (class_to_string_.empty()) throw std::invalid_argument("lookup table needs at least one class");
  const std::size_t len = class_to_string_.front().size();
  if (len == 0) throw std::invalid_argument("lookup table strings must be non-empty");
  for (const auto& s : class_to_string_) {
    if (s.size() != len) {
      throw std::invalid_argument("lookup table strings must share one length; got \"" +
                                  class_to_string_.front().str() + "\" and \"" + s.str() + "\"");
    }
  }
  auto collisions = find_collisions(class_to_string_);
  if (!collisions.empty()) {
    std::string msg = "class to string map is not one to one:";
    for (auto [a, b] : collisions) {
      msg += " (" + std::to_string(a) + ", " + std::to_string(b) + ")=" + class_to_string_[a].str();
    }
    throw CollisionError(msg, std::move(collisions));
  }
  if (class_names_.empty()) {
    for (ClassId c = 0; c < class_to_string_.size(); ++c) class_names_.push_back(std::to_string(c));
  }
  if (class_names_.size() != class_to_string_.size()) {
    throw std::invalid_argument("lookup table: class name count differs from class count");
  }
  for (ClassId c = 0; c < class_to_string_.size(); ++c) string_to_class_.emplace(class_to_string_[c], c);
}

std::optional<ClassId> StringLookupTable::find(const BitString& s) const {
  auto it = string_to_class_.find(s);
  if (it == string_to_class_.end()) return std::nullopt;
  return it->second;
}

json StringLookupTable::to_json() const {
  json entries = json::array();
  for (ClassId c = 0; c < class_to_string_.size(); ++c) {
    entries.push_back({{"class_id", c}, {"class_name", class_names_[c]}, {"string", class_to_string_[c].str()}});
  }
  return {{"version", 1}, {"L", length()}, {"C", num_classes()}, {"entries", entries}};
}

StringLookupTable StringLookupTable::from_json(const json& j) {
  const auto c = j.at("C").get<std::size_t>();
  const auto len = j.at("L").get<std::size_t>();
  std::vector<BitString> strings(c);
  std::vector<std::string> names(c);
  std::vector<bool> seen(c, false);
  for (const json& e : j.at("entries")) {
    const auto id = e.at("class_id").get<std::size_t>();
    if (id >= c || seen[id]) throw std::invalid_argument("lookup table: bad or repeated class_id");
    seen[id] = true;
    strings[id] = BitString::parse(e.at("string").get<std::string>());
    if (strings[id].size() != len) throw std::invalid_argument("lookup table: string length differs from L");
    names[id] = e.value("class_name", std::to_string(id));
  }
  if (std::find(seen.begin(), seen.end(), false) != seen.end()) {
    throw std::invalid_argument("lookup table: missing class entries");
  }
  return StringLookupTable(std::move(strings), std::move(names));
}

std::optional<ClassId> lookup_predict(const StringLookupTable& table, std::span<const double> p) {
  if (p.size() != 2 * table.length()) {
    throw DimensionError("lookup_predict: expected " + std::to_string(2 * table.length()) +
                         " probabilities, got " + std::to_string(p.size()));
  }
  return table.find(string_of(p));
}

StringLookupTable random_lookup_table(std::size_t num_classes, std::size_t length,
                                      std::uint64_t seed) {
  if (length < 64 && (std::uint64_t{1} << length) < num_classes) {
    throw std::invalid_argument("random_lookup_table: " + std::to_string(length) +
                                " bits cannot encode " + std::to_string(num_classes) + " classes");
  }
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution coin(0.5);
  std::set<BitString> used;
  std::vector<BitString> strings;
  while (strings.size() < num_classes) {
    BitString s;
    s.bits.resize(length);
    for (auto& b : s.bits) b = coin(rng) ? 1 : 0;
    if (used.insert(s).second) strings.push_back(std::move(s));
  }
  return StringLookupTable(std::move(strings));
}

std::size_t Class2StrNet::default_hidden(std::size_t num_classes) {
  return std::max<std::size_t>(500, 2 * num_classes);
}

void Class2StrNet::init(ParameterSet& params, std::mt19937_64& rng) const {
  trunk().init(params, rng);
  for (std::size_t i = 0; i < length; ++i) head(i).init(params, rng);
}

Var Class2StrNet::forward(ParamBinder& bind, Var labels) const {
  if (labels.value().cols() != num_classes) {
    throw DimensionError("class2str: expected " + std::to_string(num_classes) +
                         " classes, got " + shape_str(labels.shape()));
  }
  Var z = lhc::tanh(trunk().forward(bind, labels));
  std::vector<Var> logits;
  logits.reserve(length);
  for (std::size_t i = 0; i < length; ++i) logits.push_back(head(i).forward(bind, z));
  return softmax2(concat(logits));
}

void Str2ClassNet::init(ParameterSet& params, std::mt19937_64& rng) const {
  first().init(params, rng);
  second().init(params, rng);
}

Var Str2ClassNet::forward(ParamBinder& bind, Var q) const {
  if (q.value().cols() != 2 * length) {
    throw DimensionError("str2class: expected " + std::to_string(length) +
                         " bit pairs, got " + shape_str(q.shape()));
  }
  return softmax_rows(second().forward(bind, lhc::tanh(first().forward(bind, q))));
}

void LhClassifierNet::init(ParameterSet& params, std::mt19937_64& rng) const {
  if (layers < 1 || layers > 2) throw std::invalid_argument("lh classifier supports 1 or 2 LSTM layers");
  projection().init(params, rng);
  for (std::size_t l = 0; l < layers; ++l) cell(l).init(params, rng);
  head().init(params, rng);
}

Var LhClassifierNet::forward(ParamBinder& bind, Var features) const {
  if (features.value().cols() != feature_dim) {
    throw DimensionError("lh classifier: expected feature width " + std::to_string(feature_dim) +
                         ", got " + shape_str(features.shape()));
  }
  Tape& tape = bind.tape();
  const std::size_t batch = features.value().rows();
  Var x = projection().forward(bind, features);
  std::vector<Var> h(layers), c(layers);
  for (std::size_t l = 0; l < layers; ++l) {
    h[l] = tape.constant(Tensor::zeros({batch, hidden}));
    c[l] = tape.constant(Tensor::zeros({batch, hidden}));
  }
  std::vector<Var> logits;
  logits.reserve(length);
  for (std::size_t t = 0; t < length; ++t) {
    Var input = x;
    for (std::size_t l = 0; l < layers; ++l) {
      std::tie(h[l], c[l]) = cell(l).step(bind, input, h[l], c[l]);
      input = h[l];
    }
    logits.push_back(head().forward(bind, input));
  }
  return softmax2(concat(logits));
}

std::size_t LhClassifierNet::param_count() const {
  std::size_t n = projection().param_count() + head().param_count();
  for (std::size_t l = 0; l < layers; ++l) n += cell(l).param_count();
  return n;
}

Tensor class_string_distributions(const Class2StrNet& net, const ParameterSet& params) {
  Tape tape;
  ParamBinder bind(tape, params);
  Tensor eye = Tensor::zeros({net.num_classes, net.num_classes});
  for (std::size_t c = 0; c < net.num_classes; ++c) eye.at(c, c) = 1.0;
  Var q = net.forward(bind, tape.constant(std::move(eye)));
  return Tensor(q.shape(), q.value().data);
}

StringLookupTable freeze_lookup(const Class2StrNet& net, const ParameterSet& params,
                                std::vector<std::string> class_names) {
  const Tensor q = class_string_distributions(net, params);
  std::vector<BitString> strings;
  const std::size_t w = 2 * net.length;
  for (std::size_t c = 0; c < net.num_classes; ++c) {
    strings.push_back(string_of(std::span<const double>(q.data.data() + c * w, w)));
  }
  return StringLookupTable(std::move(strings), std::move(class_names));
}

}  // namespace lhc
