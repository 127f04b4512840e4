#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "lhc/checkpoint.hpp"
#include "lhc/datasets.hpp"
#include "lhc/loss.hpp"
#include "lhc/pipeline.hpp"

namespace lhc {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct RunConfig {
  std::uint64_t seed = 1;
  std::string dataset = "mnist";  // mnist | features | planted
  std::vector<std::size_t> extractor_dims = {256, 128};
  std::vector<std::size_t> fc_hidden = {};
  std::size_t lstm_hidden = 10;
  std::size_t lstm_layers = 1;
  std::size_t L = 4;
  double mu = 0.8;
  double alpha = 1.0;
  double beta = 1.0;
  double gamma = 0.1;
  double delta = 1e-4;
  double lr = 1e-3;
  std::size_t batch_size = 64;
  std::size_t epochs = 30;       // LH phase
  std::size_t base_epochs = 20;  // base model phase
  std::size_t early_stop_patience = 5;
  double gamma_decay = 0.5;
  std::size_t gamma_decay_every = 10;
  std::size_t c2s_hidden = 0;  // 0 selects max(500, 2C)
  std::size_t s2c_hidden = 500;
  std::string string_ce_order = "p_target";  // p_target: H(p, q); q_target: H(q, p)
  std::size_t val_size = 5000;
  PlantedHierarchySpec planted;

  // Unknown keys and invalid values raise ConfigError.
  static RunConfig from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
  void validate() const;

  StringCeOrder ce_order() const;
  HyperParams hyper(std::size_t num_classes) const;
  // gamma after the decay schedule for a 0-based epoch.
  double gamma_at(std::size_t epoch) const;
};

// Resolves config.dataset into train/test splits. `data_path` is the MNIST
// directory, or a directory holding train.lhf1 / test.lhf1; unused for planted.
struct DataSplits {
  LabeledDataset train;
  LabeledDataset test;
  std::optional<PrefixTree> planted_tree;
};
DataSplits load_dataset(const RunConfig& config, const std::string& data_path);

// Splits off the trailing validation rows used for early stopping.
std::pair<LabeledDataset, LabeledDataset> split_validation(const LabeledDataset& train,
                                                           std::size_t val_size);

struct BaseLayout {
  std::size_t input_dim = 0;
  std::size_t num_classes = 0;
  std::vector<std::size_t> extractor_dims;
  std::vector<std::size_t> fc_hidden;

  std::size_t feature_dim() const { return extractor_dims.empty() ? input_dim : extractor_dims.back(); }
  std::vector<LinearLayer> extractor_layers() const;   // "extractor.fcK"
  std::vector<LinearLayer> classifier_layers() const;  // "fc.fcK"
  void init(ParameterSet& params, std::uint64_t seed) const;

  Var features(ParamBinder& bind, Var x) const;       // tanh after every layer
  Var classify(ParamBinder& bind, Var features) const;  // class probabilities
};

struct BaseModel {
  BaseLayout layout;
  ParameterSet params;
  std::vector<std::string> class_names;
};

// Frozen feature map over a whole dataset; labels are carried over.
LabeledDataset extract_features(const BaseModel& base, const LabeledDataset& data);

struct EpochRow {
  std::size_t epoch = 0;  // 1-based
  LossReport loss;        // batch-mean of each term
  double train_acc = 0.0;
  double val_acc = 0.0;
};

struct TrainReport {
  std::vector<EpochRow> epochs;
  double train_accuracy = 0.0;
  double test_accuracy = 0.0;
  double wall_seconds = 0.0;
  std::uint64_t seed = 0;
  nlohmann::json hyperparameters;
  std::size_t best_epoch = 0;

  // epoch,term_class,term_string,term_bias,term_l2,total,train_acc,val_acc
  std::string metrics_csv() const;
};

using EpochCallback = std::function<void(const EpochRow&)>;

struct BaseTrainResult {
  BaseModel model;
  TrainReport report;
};

// Extractor + FC classifier trained with alpha * cross entropy + delta * L2.
BaseTrainResult train_base(const LabeledDataset& train, const LabeledDataset& test,
                           const RunConfig& config, const EpochCallback& on_epoch = {});

// Base classifier accuracy.
double base_accuracy(const BaseModel& base, const LabeledDataset& data);

struct LhModel {
  RunConfig config;
  BaseLayout base_layout;
  Class2StrNet c2s;  // absent (num_classes == 0) for fixed-embedding models
  Str2ClassNet s2c;
  LhClassifierNet lh;
  ParameterSet params;
  std::vector<std::string> class_names;
  std::optional<StringLookupTable> table;

  bool has_encoder() const { return c2s.num_classes != 0; }
  ParameterSet base_params() const;  // extractor.* and fc.*
};

struct EvalResult {
  double accuracy = 0.0;
  std::vector<double> bit_accuracy;
  std::size_t samples = 0;
  std::size_t no_match = 0;
};

struct LhTrainResult {
  LhModel model;
  TrainReport report;
  std::vector<std::pair<ClassId, ClassId>> collisions;  // empty when one to one
  double mean_bit_bias = 0.0;  // mean over classes and bits of max(q(0), q(1))
  std::optional<EvalResult> test_eval;  // absent on collision
};

// Phase 2: extractor frozen; LH classifier, Class2Str and Str2Class trained
// jointly on the full objective. A collision after training is reported in
// `collisions`, not thrown.
LhTrainResult train_lh(const BaseModel& base, const LabeledDataset& train,
                       const LabeledDataset& test, const RunConfig& config,
                       const EpochCallback& on_epoch = {});

// LH classifier alone against a fixed one-to-one table, with the per-bit
// structured loss (table bits as targets) plus delta * L2.
LhTrainResult train_lh_fixed(const BaseModel& base, const StringLookupTable& table,
                             const LabeledDataset& train, const LabeledDataset& test,
                             const RunConfig& config, const EpochCallback& on_epoch = {});

// p for every row of an already-extracted feature set, [N x 2L].
Tensor predict_strings(const LhClassifierNet& lh, const ParameterSet& params, const Tensor& features);

// All-bits-match accuracy plus per-bit accuracy against the table strings.
EvalResult evaluate_predictions(const StringLookupTable& table, const Tensor& p,
                                std::span<const std::uint16_t> labels);
// Runs extractor and LH classifier over raw data.
EvalResult evaluate(const LhModel& model, const LabeledDataset& data);

// mean over classes and bits of max(q(0), q(1)).
double mean_bit_bias(const Tensor& class_q);

struct AblationResult {
  double learned_accuracy = 0.0;
  double random_accuracy = 0.0;
  bool learned_one_to_one = false;
  StringLookupTable random_table;
  double delta() const { return learned_accuracy - random_accuracy; }
};

AblationResult ablate_random_embedding(const BaseModel& base, const LabeledDataset& train,
                                       const LabeledDataset& test, const RunConfig& config,
                                       std::uint64_t seed);

struct SweepRow {
  std::size_t L = 0;
  double accuracy = 0.0;
  bool one_to_one = false;
};

// Every L must be >= ceil(log2 C); otherwise ConfigError before any training.
std::vector<SweepRow> sweep_string_length(const BaseModel& base, const LabeledDataset& train,
                                          const LabeledDataset& test, const RunConfig& config,
                                          const std::vector<std::size_t>& lengths);
std::string sweep_csv(const std::vector<SweepRow>& rows);

struct ParamCount {
  std::vector<std::pair<std::string, std::size_t>> parts;
  std::size_t total = 0;
};

// Counts weights and biases per named part; each part is a name prefix.
ParamCount count_params(const ParameterSet& params,
                        const std::vector<std::pair<std::string, std::string>>& parts);

struct HeadComparison {
  std::size_t fc_params = 0;
  std::size_t lh_params = 0;
  double reduction = 0.0;  // 1 - lh / fc
};

// Builds an FC classifier feature_dim -> fc_hidden... -> C and an LH
// classifier (projection to lstm_hidden, LSTM stack, 2-way head) and counts both.
HeadComparison compare_heads(std::size_t feature_dim, const std::vector<std::size_t>& fc_hidden,
                             std::size_t num_classes, std::size_t lstm_hidden,
                             std::size_t lstm_layers);

struct GradcheckReport {
  std::vector<std::pair<std::string, double>> terms;  // term name -> max relative error
  double worst() const;
};

// Toy instance (C=4, L=2, LSTM hidden 5) of the full objective checked
// against central differences at step 1e-5.
GradcheckReport loss_gradcheck(std::uint64_t seed);

Checkpoint to_checkpoint(const BaseModel& base, const RunConfig& config);
Checkpoint to_checkpoint(const LhModel& model);
BaseModel base_from_checkpoint(const Checkpoint& ckpt);
LhModel lh_from_checkpoint(const Checkpoint& ckpt);
std::string checkpoint_kind(const Checkpoint& ckpt);

}  // namespace lhc
