#include "lhc/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>
#include <set>

#include "lhc/gradcheck.hpp"
#include "lhc/io.hpp"
#include "lhc/ops.hpp"

namespace lhc {

using nlohmann::json;

namespace {

template <typename T>
void read_key(const json& j, const char* key, T& out, std::set<std::string>& seen) {
  seen.insert(key);
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config key \"") + key + "\": " + e.what());
  }
}

json planted_json(const PlantedHierarchySpec& p) {
  return {{"depth", p.depth},
          {"dim", p.dim},
          {"samples_per_class", p.samples_per_class},
          {"test_samples_per_class", p.test_samples_per_class},
          {"sigma_level", p.sigma_level},
          {"sigma_within", p.sigma_within},
          {"seed", p.seed}};
}

PlantedHierarchySpec planted_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("config key \"planted\" must be an object");
  PlantedHierarchySpec p;
  std::set<std::string> seen;
  read_key(j, "depth", p.depth, seen);
  read_key(j, "dim", p.dim, seen);
  read_key(j, "samples_per_class", p.samples_per_class, seen);
  read_key(j, "test_samples_per_class", p.test_samples_per_class, seen);
  read_key(j, "sigma_level", p.sigma_level, seen);
  read_key(j, "sigma_within", p.sigma_within, seen);
  read_key(j, "seed", p.seed, seen);
  for (const auto& [key, _] : j.items()) {
    if (!seen.count(key)) throw ConfigError("unknown planted config key \"" + key + "\"");
  }
  return p;
}

std::string format_double(double x) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

void check_finite(const LossReport& r, std::size_t epoch) {
  if (!std::isfinite(r.total)) {
    throw DivergenceError("non-finite loss in epoch " + std::to_string(epoch) +
                          " (class=" + format_double(r.term_class) +
                          ", string=" + format_double(r.term_string) +
                          ", bias=" + format_double(r.term_bias) +
                          ", l2=" + format_double(r.term_l2) + ")");
  }
}

void accumulate(LossReport& acc, const LossReport& r) {
  acc.total += r.total;
  acc.term_class += r.term_class;
  acc.term_string += r.term_string;
  acc.term_bias += r.term_bias;
  acc.term_l2 += r.term_l2;
}

LossReport averaged(LossReport acc, std::size_t n) {
  const double inv = 1.0 / static_cast<double>(std::max<std::size_t>(n, 1));
  acc.total *= inv;
  acc.term_class *= inv;
  acc.term_string *= inv;
  acc.term_bias *= inv;
  acc.term_l2 *= inv;
  return acc;
}

std::size_t argmax_row(const Tensor& t, std::size_t r) {
  const std::size_t n = t.cols();
  const double* row = t.data.data() + r * n;
  return static_cast<std::size_t>(std::max_element(row, row + n) - row);
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

// Accuracy against per-class strings that need not be distinct; a class
// whose string is shared is never scored correct.
double string_match_accuracy(const std::vector<BitString>& class_strings, const Tensor& p,
                             std::span<const std::uint16_t> labels) {
  std::map<BitString, std::size_t> multiplicity;
  for (const auto& s : class_strings) ++multiplicity[s];
  const std::size_t w = p.cols();
  std::size_t correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const BitString& target = class_strings[labels[i]];
    if (multiplicity[target] != 1) continue;
    if (string_of(std::span<const double>(p.data.data() + i * w, w)) == target) ++correct;
  }
  return labels.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(labels.size());
}

std::vector<BitString> strings_of_rows(const Tensor& q) {
  std::vector<BitString> out;
  const std::size_t w = q.cols();
  for (std::size_t r = 0; r < q.rows(); ++r) {
    out.push_back(string_of(std::span<const double>(q.data.data() + r * w, w)));
  }
  return out;
}

}  // namespace

RunConfig RunConfig::from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("run config must be a JSON object");
  RunConfig c;
  std::set<std::string> seen;
  read_key(j, "seed", c.seed, seen);
  read_key(j, "dataset", c.dataset, seen);
  read_key(j, "extractor_dims", c.extractor_dims, seen);
  read_key(j, "fc_hidden", c.fc_hidden, seen);
  read_key(j, "lstm_hidden", c.lstm_hidden, seen);
  read_key(j, "lstm_layers", c.lstm_layers, seen);
  read_key(j, "L", c.L, seen);
  read_key(j, "mu", c.mu, seen);
  read_key(j, "alpha", c.alpha, seen);
  read_key(j, "beta", c.beta, seen);
  read_key(j, "gamma", c.gamma, seen);
  read_key(j, "delta", c.delta, seen);
  read_key(j, "lr", c.lr, seen);
  read_key(j, "batch_size", c.batch_size, seen);
  read_key(j, "epochs", c.epochs, seen);
  read_key(j, "base_epochs", c.base_epochs, seen);
  read_key(j, "early_stop_patience", c.early_stop_patience, seen);
  read_key(j, "gamma_decay", c.gamma_decay, seen);
  read_key(j, "gamma_decay_every", c.gamma_decay_every, seen);
  read_key(j, "c2s_hidden", c.c2s_hidden, seen);
  read_key(j, "s2c_hidden", c.s2c_hidden, seen);
  read_key(j, "string_ce_order", c.string_ce_order, seen);
  read_key(j, "val_size", c.val_size, seen);
  seen.insert("planted");
  if (j.contains("planted")) c.planted = planted_from_json(j.at("planted"));
  for (const auto& [key, _] : j.items()) {
    if (!seen.count(key)) throw ConfigError("unknown config key \"" + key + "\"");
  }
  c.validate();
  return c;
}

json RunConfig::to_json() const {
  return {{"seed", seed},
          {"dataset", dataset},
          {"extractor_dims", extractor_dims},
          {"fc_hidden", fc_hidden},
          {"lstm_hidden", lstm_hidden},
          {"lstm_layers", lstm_layers},
          {"L", L},
          {"mu", mu},
          {"alpha", alpha},
          {"beta", beta},
          {"gamma", gamma},
          {"delta", delta},
          {"lr", lr},
          {"batch_size", batch_size},
          {"epochs", epochs},
          {"base_epochs", base_epochs},
          {"early_stop_patience", early_stop_patience},
          {"gamma_decay", gamma_decay},
          {"gamma_decay_every", gamma_decay_every},
          {"c2s_hidden", c2s_hidden},
          {"s2c_hidden", s2c_hidden},
          {"string_ce_order", string_ce_order},
          {"val_size", val_size},
          {"planted", planted_json(planted)}};
}

void RunConfig::validate() const {
  if (dataset != "mnist" && dataset != "features" && dataset != "planted") {
    throw ConfigError("dataset must be one of mnist, features, planted; got \"" + dataset + "\"");
  }
  for (auto d : extractor_dims) {
    if (d == 0) throw ConfigError("extractor_dims entries must be positive");
  }
  for (auto d : fc_hidden) {
    if (d == 0) throw ConfigError("fc_hidden entries must be positive");
  }
  if (lstm_hidden == 0) throw ConfigError("lstm_hidden must be positive");
  if (lstm_layers < 1 || lstm_layers > 2) throw ConfigError("lstm_layers must be 1 or 2");
  if (L == 0) throw ConfigError("L must be positive");
  if (!(mu > 0.0 && mu < 1.0)) throw ConfigError("mu must lie strictly inside (0, 1)");
  if (alpha < 0 || beta < 0 || gamma < 0 || delta < 0) {
    throw ConfigError("alpha, beta, gamma and delta must be non-negative");
  }
  if (!(lr > 0.0)) throw ConfigError("lr must be positive");
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  if (!(gamma_decay > 0.0 && gamma_decay <= 1.0)) throw ConfigError("gamma_decay must lie in (0, 1]");
  if (gamma_decay_every == 0) throw ConfigError("gamma_decay_every must be positive");
  if (s2c_hidden == 0) throw ConfigError("s2c_hidden must be positive");
  if (string_ce_order != "p_target" && string_ce_order != "q_target") {
    throw ConfigError("string_ce_order must be p_target or q_target");
  }
  try {
    planted.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

StringCeOrder RunConfig::ce_order() const {
  return string_ce_order == "q_target" ? StringCeOrder::kEncoderTarget
                                       : StringCeOrder::kPredictorTarget;
}

HyperParams RunConfig::hyper(std::size_t num_classes) const {
  HyperParams hp;
  hp.alpha = alpha;
  hp.beta = beta;
  hp.gamma = gamma;
  hp.delta = delta;
  hp.mu = mu;
  hp.length = L;
  hp.num_classes = num_classes;
  hp.ce_order = ce_order();
  try {
    hp.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return hp;
}

double RunConfig::gamma_at(std::size_t epoch) const {
  return gamma * std::pow(gamma_decay, static_cast<double>(epoch / gamma_decay_every));
}

DataSplits load_dataset(const RunConfig& config, const std::string& data_path) {
  DataSplits out;
  if (config.dataset == "mnist") {
    MnistData m = load_mnist(data_path);
    out.train = std::move(m.train);
    out.test = std::move(m.test);
  } else if (config.dataset == "features") {
    const std::filesystem::path dir(data_path);
    out.train = load_features(dir / "train.lhf1", Split::kTrain);
    out.test = load_features(dir / "test.lhf1", Split::kTest);
    if (std::filesystem::exists(dir / "tree.json")) {
      out.planted_tree = PrefixTree::from_json(json::parse(read_file(dir / "tree.json")));
    }
  } else {
    PlantedData p = generate_planted(config.planted);
    out.train = std::move(p.train);
    out.test = std::move(p.test);
    out.planted_tree = std::move(p.tree);
  }
  if (out.train.dim != out.test.dim || out.train.num_classes != out.test.num_classes) {
    throw FormatError("train and test splits disagree on feature width or class count");
  }
  return out;
}

std::pair<LabeledDataset, LabeledDataset> split_validation(const LabeledDataset& train,
                                                           std::size_t val_size) {
  std::size_t held = val_size;
  if (train.num_rows < 2 * val_size) held = std::max<std::size_t>(1, train.num_rows / 10);
  if (held >= train.num_rows) throw std::invalid_argument("training set too small to hold out validation rows");
  const std::size_t cut = train.num_rows - held;
  return {train.slice(0, cut), train.slice(cut, train.num_rows)};
}

std::vector<LinearLayer> BaseLayout::extractor_layers() const {
  std::vector<LinearLayer> out;
  std::size_t in = input_dim;
  for (std::size_t k = 0; k < extractor_dims.size(); ++k) {
    out.push_back({"extractor.fc" + std::to_string(k), in, extractor_dims[k]});
    in = extractor_dims[k];
  }
  return out;
}

std::vector<LinearLayer> BaseLayout::classifier_layers() const {
  std::vector<LinearLayer> out;
  std::size_t in = feature_dim();
  for (std::size_t k = 0; k < fc_hidden.size(); ++k) {
    out.push_back({"fc.fc" + std::to_string(k), in, fc_hidden[k]});
    in = fc_hidden[k];
  }
  out.push_back({"fc.fc" + std::to_string(fc_hidden.size()), in, num_classes});
  return out;
}

void BaseLayout::init(ParameterSet& params, std::uint64_t seed) const {
  std::mt19937_64 rng(seed);
  for (const auto& layer : extractor_layers()) layer.init(params, rng);
  for (const auto& layer : classifier_layers()) layer.init(params, rng);
}

Var BaseLayout::features(ParamBinder& bind, Var x) const {
  for (const auto& layer : extractor_layers()) x = lhc::tanh(layer.forward(bind, x));
  return x;
}

Var BaseLayout::classify(ParamBinder& bind, Var f) const {
  const auto layers = classifier_layers();
  for (std::size_t k = 0; k + 1 < layers.size(); ++k) f = lhc::tanh(layers[k].forward(bind, f));
  return softmax_rows(layers.back().forward(bind, f));
}

LabeledDataset extract_features(const BaseModel& base, const LabeledDataset& data) {
  LabeledDataset out;
  out.num_rows = data.num_rows;
  out.dim = base.layout.feature_dim();
  out.num_classes = data.num_classes;
  out.split = data.split;
  out.labels = data.labels;
  out.features.resize(out.num_rows * out.dim);
  constexpr std::size_t kChunk = 1000;
  std::vector<std::size_t> idx;
  for (std::size_t begin = 0; begin < data.num_rows; begin += kChunk) {
    const std::size_t end = std::min(begin + kChunk, data.num_rows);
    idx.resize(end - begin);
    std::iota(idx.begin(), idx.end(), begin);
    Tape tape;
    ParamBinder bind(tape, base.params);
    Var f = base.layout.features(bind, tape.constant(data.rows_tensor(idx)));
    std::copy(f.value().data.begin(), f.value().data.end(),
              out.features.begin() + static_cast<std::ptrdiff_t>(begin * out.dim));
  }
  return out;
}

double base_accuracy(const BaseModel& base, const LabeledDataset& data) {
  constexpr std::size_t kChunk = 1000;
  std::size_t correct = 0;
  std::vector<std::size_t> idx;
  for (std::size_t begin = 0; begin < data.num_rows; begin += kChunk) {
    const std::size_t end = std::min(begin + kChunk, data.num_rows);
    idx.resize(end - begin);
    std::iota(idx.begin(), idx.end(), begin);
    Tape tape;
    ParamBinder bind(tape, base.params);
    Var probs = base.layout.classify(bind, base.layout.features(bind, tape.constant(data.rows_tensor(idx))));
    for (std::size_t r = 0; r < idx.size(); ++r) {
      if (argmax_row(probs.value(), r) == data.labels[idx[r]]) ++correct;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(data.num_rows);
}

std::string TrainReport::metrics_csv() const {
  std::string out = "epoch,term_class,term_string,term_bias,term_l2,total,train_acc,val_acc\n";
  for (const EpochRow& r : epochs) {
    out += std::to_string(r.epoch) + "," + format_double(r.loss.term_class) + "," +
           format_double(r.loss.term_string) + "," + format_double(r.loss.term_bias) + "," +
           format_double(r.loss.term_l2) + "," + format_double(r.loss.total) + "," +
           format_double(r.train_acc) + "," + format_double(r.val_acc) + "\n";
  }
  return out;
}

BaseTrainResult train_base(const LabeledDataset& train_all, const LabeledDataset& test,
                           const RunConfig& config, const EpochCallback& on_epoch) {
  config.validate();
  train_all.validate();
  const auto start = std::chrono::steady_clock::now();
  auto [train, val] = split_validation(train_all, config.val_size);

  BaseTrainResult result;
  BaseModel& model = result.model;
  model.layout = {train.dim, train.num_classes, config.extractor_dims, config.fc_hidden};
  model.layout.init(model.params, config.seed);
  for (std::size_t c = 0; c < train.num_classes; ++c) model.class_names.push_back(std::to_string(c));

  AdamState adam({config.lr});
  BatchIterator batches(train, std::min(config.batch_size, train.num_rows), config.seed);
  TrainReport& report = result.report;
  report.seed = config.seed;
  report.hyperparameters = config.to_json();

  ParameterSet best = model.params;
  double best_val = -1.0;
  std::size_t since_best = 0;
  for (std::size_t epoch = 0; epoch < config.base_epochs; ++epoch) {
    batches.start_epoch(epoch);
    Batch batch;
    LossReport acc;
    std::size_t n_batches = 0, correct = 0, seen = 0;
    while (batches.next(batch)) {
      Tape tape;
      ParamBinder bind(tape, model.params);
      Var l = tape.constant(batch.one_hot);
      Var probs = model.layout.classify(bind, model.layout.features(bind, tape.constant(batch.features)));
      const double inv_batch = 1.0 / static_cast<double>(batch.labels.size());
      Var term_class = scale(cross_entropy(l, probs), config.alpha * inv_batch);
      Var term_l2 = scale(l2_penalty(bind), config.delta);
      Var total = term_class + term_l2;
      LossReport r{total.item(), term_class.item(), 0.0, 0.0, term_l2.item()};
      check_finite(r, epoch + 1);
      model.params.zero_grad();
      tape.backward(total);
      adam.update(model.params);
      accumulate(acc, r);
      ++n_batches;
      for (std::size_t i = 0; i < batch.labels.size(); ++i) {
        if (argmax_row(probs.value(), i) == batch.labels[i]) ++correct;
      }
      seen += batch.labels.size();
    }
    EpochRow row;
    row.epoch = epoch + 1;
    row.loss = averaged(acc, n_batches);
    row.train_acc = static_cast<double>(correct) / static_cast<double>(seen);
    row.val_acc = base_accuracy(model, val);
    report.epochs.push_back(row);
    if (on_epoch) on_epoch(row);
    if (row.val_acc > best_val) {
      best_val = row.val_acc;
      best = model.params;
      report.best_epoch = row.epoch;
      since_best = 0;
    } else if (++since_best >= config.early_stop_patience) {
      break;
    }
  }
  if (best_val >= 0.0) model.params = std::move(best);
  model.params.zero_grad();
  report.train_accuracy = base_accuracy(model, train);
  report.test_accuracy = base_accuracy(model, test);
  report.wall_seconds = seconds_since(start);
  return result;
}

ParameterSet LhModel::base_params() const {
  ParameterSet out;
  out.merge(params, "extractor.");
  out.merge(params, "fc.");
  return out;
}

Tensor predict_strings(const LhClassifierNet& lh, const ParameterSet& params, const Tensor& features) {
  const std::size_t n = features.rows();
  const std::size_t w = 2 * lh.length;
  Tensor out = Tensor::zeros({n, w});
  constexpr std::size_t kChunk = 2000;
  for (std::size_t begin = 0; begin < n; begin += kChunk) {
    const std::size_t end = std::min(begin + kChunk, n);
    Tensor chunk = Tensor::zeros({end - begin, features.cols()});
    std::copy(features.data.begin() + static_cast<std::ptrdiff_t>(begin * features.cols()),
              features.data.begin() + static_cast<std::ptrdiff_t>(end * features.cols()),
              chunk.data.begin());
    Tape tape;
    ParamBinder bind(tape, params);
    Var p = lh.forward(bind, tape.constant(std::move(chunk)));
    std::copy(p.value().data.begin(), p.value().data.end(),
              out.data.begin() + static_cast<std::ptrdiff_t>(begin * w));
  }
  return out;
}

EvalResult evaluate_predictions(const StringLookupTable& table, const Tensor& p,
                                std::span<const std::uint16_t> labels) {
  const std::size_t len = table.length();
  if (p.cols() != 2 * len || p.rows() != labels.size()) {
    throw DimensionError("evaluate: predictions " + shape_str(p.shape) + " do not match " +
                         std::to_string(labels.size()) + " labels of " + std::to_string(len) + " bits");
  }
  EvalResult r;
  r.samples = labels.size();
  r.bit_accuracy.assign(len, 0.0);
  std::size_t correct = 0;
  std::vector<std::size_t> bit_correct(len, 0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    std::span<const double> row(p.data.data() + i * 2 * len, 2 * len);
    const BitString s = string_of(row);
    const BitString& target = table.string_for(labels[i]);
    for (std::size_t b = 0; b < len; ++b) bit_correct[b] += s.bits[b] == target.bits[b];
    const auto predicted = table.find(s);
    if (!predicted) {
      ++r.no_match;
    } else if (*predicted == labels[i]) {
      ++correct;
    }
  }
  const double n = static_cast<double>(std::max<std::size_t>(r.samples, 1));
  r.accuracy = static_cast<double>(correct) / n;
  for (std::size_t b = 0; b < len; ++b) r.bit_accuracy[b] = static_cast<double>(bit_correct[b]) / n;
  return r;
}

EvalResult evaluate(const LhModel& model, const LabeledDataset& data) {
  if (!model.table) throw std::logic_error("evaluate: model has no one-to-one lookup table");
  BaseModel base{model.base_layout, model.base_params(), model.class_names};
  const LabeledDataset feats = extract_features(base, data);
  const Tensor features({feats.num_rows, feats.dim}, feats.features);
  return evaluate_predictions(*model.table, predict_strings(model.lh, model.params, features), data.labels);
}

double mean_bit_bias(const Tensor& class_q) {
  double s = 0.0;
  const std::size_t pairs = class_q.numel() / 2;
  for (std::size_t i = 0; i < pairs; ++i) s += std::max(class_q[2 * i], class_q[2 * i + 1]);
  return pairs == 0 ? 0.0 : s / static_cast<double>(pairs);
}

namespace {

LhTrainResult train_lh_impl(const BaseModel& base, const StringLookupTable* fixed,
                            const LabeledDataset& train_raw, const LabeledDataset& test_raw,
                            const RunConfig& config, const EpochCallback& on_epoch) {
  config.validate();
  const auto start = std::chrono::steady_clock::now();
  const std::size_t num_classes = base.layout.num_classes;
  if (train_raw.num_classes != num_classes) {
    throw DimensionError("dataset has " + std::to_string(train_raw.num_classes) +
                         " classes but the base model has " + std::to_string(num_classes));
  }
  HyperParams hp = config.hyper(num_classes);
  if (fixed != nullptr && fixed->length() != config.L) {
    throw DimensionError("fixed table length differs from L");
  }

  LhTrainResult result;
  LhModel& model = result.model;
  model.config = config;
  model.base_layout = base.layout;
  model.class_names = base.class_names;
  model.params.merge(base.params, "extractor.");
  model.params.merge(base.params, "fc.");
  model.params.freeze_prefix("extractor.");
  model.params.freeze_prefix("fc.");
  std::mt19937_64 rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
  model.lh = {base.layout.feature_dim(), config.lstm_hidden, config.lstm_layers, config.L};
  model.lh.init(model.params, rng);
  if (fixed == nullptr) {
    const std::size_t c2s_hidden = config.c2s_hidden ? config.c2s_hidden : Class2StrNet::default_hidden(num_classes);
    model.c2s = {num_classes, config.L, c2s_hidden};
    model.s2c = {num_classes, config.L, config.s2c_hidden};
    model.c2s.init(model.params, rng);
    model.s2c.init(model.params, rng);
  }

  const LabeledDataset train_feats_all = extract_features(base, train_raw);
  auto [train, val] = split_validation(train_feats_all, config.val_size);
  const Tensor val_x({val.num_rows, val.dim}, val.features);

  // Fixed-embedding targets: one-hot pairs per class.
  Tensor fixed_q;
  if (fixed != nullptr) {
    fixed_q = Tensor::zeros({num_classes, 2 * config.L});
    for (std::size_t c = 0; c < num_classes; ++c) {
      for (std::size_t b = 0; b < config.L; ++b) fixed_q.at(c, 2 * b + fixed->string_for(c).bits[b]) = 1.0;
    }
  }
  auto current_strings = [&]() {
    if (fixed != nullptr) return fixed->strings();
    return strings_of_rows(class_string_distributions(model.c2s, model.params));
  };

  AdamState adam({config.lr});
  BatchIterator batches(train, std::min(config.batch_size, train.num_rows), config.seed);
  TrainReport& report = result.report;
  report.seed = config.seed;
  report.hyperparameters = config.to_json();

  ParameterSet best = model.params;
  double best_val = -1.0;
  std::size_t since_best = 0;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    HyperParams ehp = hp;
    ehp.gamma = config.gamma_at(epoch);
    batches.start_epoch(epoch);
    Batch batch;
    LossReport acc;
    std::size_t n_batches = 0, correct = 0, seen = 0;
    while (batches.next(batch)) {
      Tape tape;
      ParamBinder bind(tape, model.params);
      const std::size_t bsz = batch.labels.size();
      Var x = tape.constant(batch.features);
      Var p = model.lh.forward(bind, x);
      LossReport r;
      Var total;
      Var q;
      if (fixed == nullptr) {
        Var l = tape.constant(batch.one_hot);
        q = model.c2s.forward(bind, l);
        Var l_prime = model.s2c.forward(bind, q);
        LossTerms terms = total_loss(l, l_prime, p, q, bind, ehp);
        r = terms.report();
        total = terms.total;
      } else {
        Tensor targets = Tensor::zeros({bsz, 2 * config.L});
        for (std::size_t i = 0; i < bsz; ++i) {
          std::copy_n(fixed_q.data.data() + batch.labels[i] * 2 * config.L, 2 * config.L,
                      targets.data.data() + i * 2 * config.L);
        }
        q = tape.constant(std::move(targets));
        Var term_string = scale(structured_string_loss(p, q, hp.mu, StringCeOrder::kEncoderTarget),
                                hp.beta / static_cast<double>(bsz));
        Var term_l2 = scale(l2_penalty(bind), hp.delta);
        total = term_string + term_l2;
        r = {total.item(), 0.0, term_string.item(), 0.0, term_l2.item()};
      }
      check_finite(r, epoch + 1);
      model.params.zero_grad();
      tape.backward(total);
      adam.update(model.params);
      accumulate(acc, r);
      ++n_batches;
      const std::size_t w = 2 * config.L;
      for (std::size_t i = 0; i < bsz; ++i) {
        std::span<const double> pr(p.value().data.data() + i * w, w);
        std::span<const double> qr(q.value().data.data() + i * w, w);
        if (string_of(pr) == string_of(qr)) ++correct;
      }
      seen += bsz;
    }
    EpochRow row;
    row.epoch = epoch + 1;
    row.loss = averaged(acc, n_batches);
    row.train_acc = static_cast<double>(correct) / static_cast<double>(seen);
    const std::vector<BitString> strings = current_strings();
    row.val_acc = string_match_accuracy(strings, predict_strings(model.lh, model.params, val_x), val.labels);
    report.epochs.push_back(row);
    if (on_epoch) on_epoch(row);
    // Patience starts once the class strings are first one to one.
    const bool bijective = find_collisions(strings).empty();
    if (!bijective && best_val < 0.0) continue;
    if (bijective && row.val_acc > best_val) {
      best_val = row.val_acc;
      best = model.params;
      report.best_epoch = row.epoch;
      since_best = 0;
    } else if (++since_best >= config.early_stop_patience) {
      break;
    }
  }
  if (best_val >= 0.0) model.params = std::move(best);
  model.params.zero_grad();

  const std::vector<BitString> strings = current_strings();
  if (fixed == nullptr) {
    result.mean_bit_bias = mean_bit_bias(class_string_distributions(model.c2s, model.params));
  } else {
    result.mean_bit_bias = 1.0;
  }
  result.collisions = find_collisions(strings);
  const Tensor train_x({train.num_rows, train.dim}, train.features);
  report.train_accuracy = string_match_accuracy(strings, predict_strings(model.lh, model.params, train_x),
                                                train.labels);
  if (result.collisions.empty()) {
    model.table = fixed != nullptr ? *fixed : StringLookupTable(strings, model.class_names);
    const LabeledDataset test_feats = extract_features(base, test_raw);
    const Tensor test_x({test_feats.num_rows, test_feats.dim}, test_feats.features);
    result.test_eval = evaluate_predictions(*model.table, predict_strings(model.lh, model.params, test_x),
                                            test_feats.labels);
    report.test_accuracy = result.test_eval->accuracy;
  }
  report.wall_seconds = seconds_since(start);
  return result;
}

}  // namespace

LhTrainResult train_lh(const BaseModel& base, const LabeledDataset& train, const LabeledDataset& test,
                       const RunConfig& config, const EpochCallback& on_epoch) {
  return train_lh_impl(base, nullptr, train, test, config, on_epoch);
}

LhTrainResult train_lh_fixed(const BaseModel& base, const StringLookupTable& table,
                             const LabeledDataset& train, const LabeledDataset& test,
                             const RunConfig& config, const EpochCallback& on_epoch) {
  if (table.num_classes() != base.layout.num_classes) {
    throw DimensionError("fixed table class count differs from the base model");
  }
  return train_lh_impl(base, &table, train, test, config, on_epoch);
}

AblationResult ablate_random_embedding(const BaseModel& base, const LabeledDataset& train,
                                       const LabeledDataset& test, const RunConfig& config,
                                       std::uint64_t seed) {
  RunConfig cfg = config;
  cfg.seed = seed;
  config.hyper(base.layout.num_classes);  // rejects L < ceil(log2 C)
  AblationResult out{0.0, 0.0, false, random_lookup_table(base.layout.num_classes, cfg.L, seed)};
  const LhTrainResult learned = train_lh(base, train, test, cfg);
  out.learned_one_to_one = learned.collisions.empty();
  out.learned_accuracy = learned.test_eval ? learned.test_eval->accuracy : 0.0;
  const LhTrainResult random = train_lh_fixed(base, out.random_table, train, test, cfg);
  out.random_accuracy = random.test_eval ? random.test_eval->accuracy : 0.0;
  return out;
}

std::vector<SweepRow> sweep_string_length(const BaseModel& base, const LabeledDataset& train,
                                          const LabeledDataset& test, const RunConfig& config,
                                          const std::vector<std::size_t>& lengths) {
  const std::size_t need = min_string_length(base.layout.num_classes);
  for (std::size_t len : lengths) {
    if (len < need) {
      throw ConfigError("L=" + std::to_string(len) + " cannot encode " +
                        std::to_string(base.layout.num_classes) + " classes one to one (need L >= " +
                        std::to_string(need) + ")");
    }
  }
  std::vector<SweepRow> rows;
  for (std::size_t len : lengths) {
    RunConfig cfg = config;
    cfg.L = len;
    const LhTrainResult r = train_lh(base, train, test, cfg);
    rows.push_back({len, r.test_eval ? r.test_eval->accuracy : 0.0, r.collisions.empty()});
  }
  return rows;
}

std::string sweep_csv(const std::vector<SweepRow>& rows) {
  std::string out = "L,accuracy,one_to_one\n";
  for (const auto& r : rows) {
    out += std::to_string(r.L) + "," + format_double(r.accuracy) + "," + (r.one_to_one ? "1" : "0") + "\n";
  }
  return out;
}

ParamCount count_params(const ParameterSet& params,
                        const std::vector<std::pair<std::string, std::string>>& parts) {
  ParamCount out;
  for (const auto& [name, prefix] : parts) {
    const std::size_t n = prefix.empty() ? 0 : params.count(prefix);
    out.parts.emplace_back(name, n);
    out.total += n;
  }
  return out;
}

HeadComparison compare_heads(std::size_t feature_dim, const std::vector<std::size_t>& fc_hidden,
                             std::size_t num_classes, std::size_t lstm_hidden, std::size_t lstm_layers) {
  ParameterSet params;
  std::mt19937_64 rng(0);
  BaseLayout layout{feature_dim, num_classes, {}, fc_hidden};
  for (const auto& layer : layout.classifier_layers()) layer.init(params, rng);
  LhClassifierNet lh{feature_dim, lstm_hidden, lstm_layers, 1};
  lh.init(params, rng);
  const ParamCount counts = count_params(params, {{"fc", "fc."}, {"lh", "lh."}});
  HeadComparison out;
  out.fc_params = counts.parts[0].second;
  out.lh_params = counts.parts[1].second;
  out.reduction = 1.0 - static_cast<double>(out.lh_params) / static_cast<double>(out.fc_params);
  return out;
}

double GradcheckReport::worst() const {
  double w = 0.0;
  for (const auto& [_, e] : terms) w = std::max(w, e);
  return w;
}

GradcheckReport loss_gradcheck(std::uint64_t seed) {
  constexpr std::size_t kClasses = 4, kBits = 2, kHidden = 5, kFeatures = 6, kBatch = 3;
  std::mt19937_64 rng(seed);
  ParameterSet params;
  const Class2StrNet c2s{kClasses, kBits, Class2StrNet::default_hidden(kClasses)};
  const Str2ClassNet s2c{kClasses, kBits, 500};
  const LhClassifierNet lh{kFeatures, kHidden, 1, kBits};
  c2s.init(params, rng);
  s2c.init(params, rng);
  lh.init(params, rng);

  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_int_distribution<int> label(0, kClasses - 1);
  Tensor x = Tensor::zeros({kBatch, kFeatures});
  for (double& v : x.data) v = gauss(rng);
  std::vector<std::uint16_t> labels(kBatch);
  for (auto& l : labels) l = static_cast<std::uint16_t>(label(rng));
  const Tensor l = one_hot(labels, kClasses);

  HyperParams hp;
  hp.alpha = 1.0;
  hp.beta = 1.0;
  hp.gamma = 0.5;
  hp.delta = 1e-2;
  hp.mu = 0.8;
  hp.length = kBits;
  hp.num_classes = kClasses;

  const std::vector<double> errors = gradient_check_params(
      [&](Tape& tape) {
        ParamBinder bind(tape, params);
        Var lv = tape.constant(l);
        Var q = c2s.forward(bind, lv);
        Var lp = s2c.forward(bind, q);
        Var p = lh.forward(bind, tape.constant(x));
        LossTerms t = total_loss(lv, lp, p, q, bind, hp);
        return std::vector<Var>{t.term_class, t.term_string, t.term_bias, t.term_l2, t.total};
      },
      params, 1e-5);
  GradcheckReport report;
  const char* names[] = {"class", "string", "bias", "l2", "total"};
  for (std::size_t i = 0; i < errors.size(); ++i) report.terms.emplace_back(names[i], errors[i]);
  return report;
}

namespace {

json layout_json(const BaseLayout& b) {
  return {{"input_dim", b.input_dim},
          {"num_classes", b.num_classes},
          {"extractor_dims", b.extractor_dims},
          {"fc_hidden", b.fc_hidden}};
}

BaseLayout layout_from_json(const json& j) {
  BaseLayout b;
  b.input_dim = j.at("input_dim").get<std::size_t>();
  b.num_classes = j.at("num_classes").get<std::size_t>();
  b.extractor_dims = j.at("extractor_dims").get<std::vector<std::size_t>>();
  b.fc_hidden = j.at("fc_hidden").get<std::vector<std::size_t>>();
  return b;
}

void require_params(const ParameterSet& params, const std::vector<LinearLayer>& layers) {
  for (const auto& layer : layers) {
    const Shape w{layer.out, layer.in};
    if (params.at(layer.weight_name()).shape != w || params.at(layer.bias_name()).shape != Shape{layer.out}) {
      throw FormatError("checkpoint: parameter shapes do not match layer " + layer.name);
    }
  }
}

}  // namespace

std::string checkpoint_kind(const Checkpoint& ckpt) { return ckpt.model.value("kind", std::string()); }

Checkpoint to_checkpoint(const BaseModel& base, const RunConfig& config) {
  Checkpoint ckpt;
  ckpt.params = base.params;
  ckpt.hyperparameters = config.to_json();
  ckpt.model = {{"kind", "base"}, {"base", layout_json(base.layout)}, {"class_names", base.class_names}};
  return ckpt;
}

Checkpoint to_checkpoint(const LhModel& model) {
  Checkpoint ckpt;
  ckpt.params = model.params;
  ckpt.hyperparameters = model.config.to_json();
  ckpt.model = {{"kind", "lh"},
                {"base", layout_json(model.base_layout)},
                {"class_names", model.class_names},
                {"lh", {{"feature_dim", model.lh.feature_dim}, {"hidden", model.lh.hidden},
                        {"layers", model.lh.layers}, {"L", model.lh.length}}},
                {"c2s_hidden", model.c2s.hidden},
                {"s2c_hidden", model.s2c.hidden},
                {"has_encoder", model.has_encoder()},
                {"lookup", model.table ? model.table->to_json() : json(nullptr)}};
  return ckpt;
}

BaseModel base_from_checkpoint(const Checkpoint& ckpt) {
  if (checkpoint_kind(ckpt) != "base" && checkpoint_kind(ckpt) != "lh") {
    throw FormatError("checkpoint does not hold a base model");
  }
  try {
    BaseModel base;
    base.layout = layout_from_json(ckpt.model.at("base"));
    base.class_names = ckpt.model.at("class_names").get<std::vector<std::string>>();
    base.params.merge(ckpt.params, "extractor.");
    base.params.merge(ckpt.params, "fc.");
    require_params(base.params, base.layout.extractor_layers());
    require_params(base.params, base.layout.classifier_layers());
    return base;
  } catch (const json::exception& e) {
    throw FormatError(std::string("checkpoint: bad model description: ") + e.what());
  } catch (const std::out_of_range& e) {
    throw FormatError(std::string("checkpoint: ") + e.what());
  }
}

LhModel lh_from_checkpoint(const Checkpoint& ckpt) {
  if (checkpoint_kind(ckpt) != "lh") throw FormatError("checkpoint does not hold an LH model");
  try {
    LhModel m;
    m.config = RunConfig::from_json(ckpt.hyperparameters);
    m.base_layout = layout_from_json(ckpt.model.at("base"));
    m.class_names = ckpt.model.at("class_names").get<std::vector<std::string>>();
    const json& lh = ckpt.model.at("lh");
    m.lh = {lh.at("feature_dim").get<std::size_t>(), lh.at("hidden").get<std::size_t>(),
            lh.at("layers").get<std::size_t>(), lh.at("L").get<std::size_t>()};
    const std::size_t c = m.base_layout.num_classes;
    if (ckpt.model.at("has_encoder").get<bool>()) {
      m.c2s = {c, m.lh.length, ckpt.model.at("c2s_hidden").get<std::size_t>()};
      m.s2c = {c, m.lh.length, ckpt.model.at("s2c_hidden").get<std::size_t>()};
    }
    m.params = ckpt.params;
    if (!ckpt.model.at("lookup").is_null()) m.table = StringLookupTable::from_json(ckpt.model.at("lookup"));
    return m;
  } catch (const json::exception& e) {
    throw FormatError(std::string("checkpoint: bad model description: ") + e.what());
  }
}

}  // namespace lhc
