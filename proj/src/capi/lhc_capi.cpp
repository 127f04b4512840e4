#include "lhc/lhc.h"

#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <string>

#include "lhc/io.hpp"
#include "lhc/training.hpp"

using nlohmann::json;

struct lhc_config {
  lhc::RunConfig value;
};

struct lhc_dataset {
  lhc::DataSplits splits;
};

struct lhc_model {
  lhc_model_kind kind = LHC_MODEL_BASE;
  lhc::BaseModel base;
  std::optional<lhc::LhModel> lh;
  lhc::RunConfig config;
  std::optional<lhc::TrainReport> report;
};

namespace {

thread_local std::string g_last_error;

lhc_status fail(lhc_status status, const std::string& message) {
  g_last_error = message;
  return status;
}

// Maps library exceptions onto status codes.
template <typename F>
lhc_status guarded(F&& body) {
  try {
    g_last_error.clear();
    return body();
  } catch (const lhc::CollisionError& e) {
    return fail(LHC_ERR_COLLISION, e.what());
  } catch (const lhc::DivergenceError& e) {
    return fail(LHC_ERR_DIVERGED, e.what());
  } catch (const lhc::DimensionError& e) {
    return fail(LHC_ERR_DIMENSION, e.what());
  } catch (const lhc::FormatError& e) {
    return fail(LHC_ERR_FORMAT, e.what());
  } catch (const json::exception& e) {
    return fail(LHC_ERR_FORMAT, e.what());
  } catch (const lhc::IoError& e) {
    return fail(LHC_ERR_IO, e.what());
  } catch (const std::invalid_argument& e) {
    return fail(LHC_ERR_INVALID_ARGUMENT, e.what());
  } catch (const std::bad_alloc&) {
    return fail(LHC_ERR_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return fail(LHC_ERR_INTERNAL, e.what());
  }
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (out == nullptr) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

#define LHC_REQUIRE(cond, what)                                            \
  do {                                                                     \
    if (!(cond)) return fail(LHC_ERR_INVALID_ARGUMENT, what);              \
  } while (0)

lhc::EpochCallback wrap(lhc_epoch_callback cb, void* user) {
  if (cb == nullptr) return {};
  return [cb, user](const lhc::EpochRow& row) {
    lhc_epoch_info info{row.epoch,          row.loss.total,    row.loss.term_class,
                        row.loss.term_string, row.loss.term_bias, row.loss.term_l2,
                        row.train_acc,      row.val_acc};
    cb(&info, user);
  };
}

const lhc::LabeledDataset& split_of(const lhc_dataset* d, lhc_split s) {
  return s == LHC_SPLIT_TEST ? d->splits.test : d->splits.train;
}

std::string collision_message(const lhc::LhTrainResult& r) {
  std::string msg = "learned class strings collide:";
  const auto strings = r.model.has_encoder()
                           ? lhc::class_string_distributions(r.model.c2s, r.model.params)
                           : lhc::Tensor();
  for (auto [a, b] : r.collisions) {
    msg += " (" + std::to_string(a) + ", " + std::to_string(b) + ")";
    if (!strings.data.empty()) {
      const std::size_t w = strings.cols();
      msg += "=" + lhc::string_of(std::span<const double>(strings.data.data() + a * w, w)).str();
    }
  }
  return msg;
}

}  // namespace

extern "C" {

const char* lhc_last_error(void) { return g_last_error.c_str(); }

const char* lhc_version(void) { return "1.0.0"; }

const char* lhc_status_name(lhc_status status) {
  switch (status) {
    case LHC_OK: return "ok";
    case LHC_ERR_INVALID_ARGUMENT: return "invalid argument";
    case LHC_ERR_IO: return "i/o error";
    case LHC_ERR_FORMAT: return "format error";
    case LHC_ERR_DIMENSION: return "dimension error";
    case LHC_ERR_COLLISION: return "collision";
    case LHC_ERR_DIVERGED: return "diverged";
    case LHC_ERR_INTERNAL: return "internal error";
  }
  return "unknown";
}

void lhc_string_free(char* s) { std::free(s); }

lhc_status lhc_config_default(lhc_config** out) {
  LHC_REQUIRE(out != nullptr, "out is NULL");
  return guarded([&] {
    *out = new lhc_config{};
    return LHC_OK;
  });
}

lhc_status lhc_config_from_json(const char* json_text, lhc_config** out) {
  LHC_REQUIRE(json_text != nullptr && out != nullptr, "NULL argument");
  return guarded([&] {
    json j;
    try {
      j = json::parse(json_text);
    } catch (const json::parse_error& e) {
      throw lhc::FormatError(std::string("config is not valid JSON: ") + e.what());
    }
    *out = new lhc_config{lhc::RunConfig::from_json(j)};
    return LHC_OK;
  });
}

lhc_status lhc_config_load(const char* path, lhc_config** out) {
  LHC_REQUIRE(path != nullptr && out != nullptr, "NULL argument");
  return guarded([&] {
    const std::string text = lhc::read_file(path);
    return lhc_config_from_json(text.c_str(), out);
  });
}

lhc_status lhc_config_set(lhc_config* config, const char* key, const char* json_value) {
  LHC_REQUIRE(config != nullptr && key != nullptr && json_value != nullptr, "NULL argument");
  return guarded([&] {
    json j = config->value.to_json();
    json v;
    try {
      v = json::parse(json_value);
    } catch (const json::parse_error&) {
      throw lhc::FormatError(std::string("value for \"") + key + "\" is not valid JSON: " + json_value);
    }
    j[key] = v;
    config->value = lhc::RunConfig::from_json(j);
    return LHC_OK;
  });
}

lhc_status lhc_config_to_json(const lhc_config* config, char** out_json) {
  LHC_REQUIRE(config != nullptr && out_json != nullptr, "NULL argument");
  return guarded([&] {
    *out_json = dup_string(config->value.to_json().dump(2) + "\n");
    return LHC_OK;
  });
}

void lhc_config_free(lhc_config* config) { delete config; }

lhc_status lhc_dataset_load(const lhc_config* config, const char* data_path, lhc_dataset** out) {
  LHC_REQUIRE(config != nullptr && out != nullptr, "NULL argument");
  LHC_REQUIRE(data_path != nullptr || config->value.dataset == "planted",
              "a data path is required for dataset kind " + config->value.dataset);
  return guarded([&] {
    *out = new lhc_dataset{lhc::load_dataset(config->value, data_path ? data_path : "")};
    return LHC_OK;
  });
}

lhc_status lhc_dataset_save(const lhc_dataset* data, const char* dir) {
  LHC_REQUIRE(data != nullptr && dir != nullptr, "NULL argument");
  return guarded([&] {
    const std::filesystem::path d(dir);
    lhc::save_features(d / "train.lhf1", data->splits.train);
    lhc::save_features(d / "test.lhf1", data->splits.test);
    if (data->splits.planted_tree) {
      lhc::write_file(d / "tree.json", data->splits.planted_tree->to_json().dump(2) + "\n");
    }
    return LHC_OK;
  });
}

size_t lhc_dataset_rows(const lhc_dataset* data, lhc_split split) {
  return data ? split_of(data, split).num_rows : 0;
}

size_t lhc_dataset_dim(const lhc_dataset* data) { return data ? data->splits.train.dim : 0; }

size_t lhc_dataset_classes(const lhc_dataset* data) { return data ? data->splits.train.num_classes : 0; }

lhc_status lhc_dataset_planted_tree(const lhc_dataset* data, char** out_json) {
  LHC_REQUIRE(data != nullptr && out_json != nullptr, "NULL argument");
  LHC_REQUIRE(data->splits.planted_tree.has_value(), "dataset has no planted hierarchy");
  return guarded([&] {
    *out_json = dup_string(data->splits.planted_tree->to_json().dump(2) + "\n");
    return LHC_OK;
  });
}

void lhc_dataset_free(lhc_dataset* data) { delete data; }

lhc_status lhc_train_base(const lhc_config* config, const lhc_dataset* data, lhc_epoch_callback cb,
                          void* user, lhc_model** out, lhc_train_summary* summary) {
  LHC_REQUIRE(config != nullptr && data != nullptr && out != nullptr, "NULL argument");
  return guarded([&] {
    lhc::BaseTrainResult r = lhc::train_base(data->splits.train, data->splits.test, config->value, wrap(cb, user));
    if (summary != nullptr) {
      *summary = {r.report.train_accuracy, r.report.test_accuracy, r.report.wall_seconds,
                  r.report.epochs.size(), r.report.best_epoch, 0.0, 0};
    }
    auto* m = new lhc_model;
    m->kind = LHC_MODEL_BASE;
    m->base = std::move(r.model);
    m->config = config->value;
    m->report = std::move(r.report);
    *out = m;
    return LHC_OK;
  });
}

lhc_status lhc_train_lh(const lhc_config* config, const lhc_model* base, const lhc_dataset* data,
                        lhc_epoch_callback cb, void* user, lhc_model** out, lhc_train_summary* summary) {
  LHC_REQUIRE(config != nullptr && base != nullptr && data != nullptr && out != nullptr, "NULL argument");
  return guarded([&] {
    lhc::LhTrainResult r = lhc::train_lh(base->base, data->splits.train, data->splits.test, config->value,
                                         wrap(cb, user));
    if (summary != nullptr) {
      *summary = {r.report.train_accuracy, r.report.test_accuracy, r.report.wall_seconds,
                  r.report.epochs.size(), r.report.best_epoch, r.mean_bit_bias, r.collisions.size()};
    }
    auto* m = new lhc_model;
    m->kind = LHC_MODEL_LH;
    m->base = base->base;
    m->config = config->value;
    m->report = r.report;
    const bool collided = !r.collisions.empty();
    const std::string msg = collided ? collision_message(r) : std::string();
    m->lh = std::move(r.model);
    *out = m;
    return collided ? fail(LHC_ERR_COLLISION, msg) : LHC_OK;
  });
}

lhc_status lhc_model_save(const lhc_model* model, const char* path) {
  LHC_REQUIRE(model != nullptr && path != nullptr, "NULL argument");
  return guarded([&] {
    const lhc::Checkpoint ckpt = model->lh ? lhc::to_checkpoint(*model->lh)
                                           : lhc::to_checkpoint(model->base, model->config);
    lhc::save_checkpoint(path, ckpt);
    return LHC_OK;
  });
}

lhc_status lhc_model_load(const char* path, lhc_model** out) {
  LHC_REQUIRE(path != nullptr && out != nullptr, "NULL argument");
  return guarded([&] {
    const lhc::Checkpoint ckpt = lhc::load_checkpoint(path);
    auto m = std::make_unique<lhc_model>();
    m->base = lhc::base_from_checkpoint(ckpt);
    m->config = lhc::RunConfig::from_json(ckpt.hyperparameters);
    if (lhc::checkpoint_kind(ckpt) == "lh") {
      m->kind = LHC_MODEL_LH;
      m->lh = lhc::lh_from_checkpoint(ckpt);
    }
    *out = m.release();
    return LHC_OK;
  });
}

lhc_model_kind lhc_model_get_kind(const lhc_model* model) { return model ? model->kind : LHC_MODEL_BASE; }

lhc_status lhc_model_metrics_csv(const lhc_model* model, char** out_csv) {
  LHC_REQUIRE(model != nullptr && out_csv != nullptr, "NULL argument");
  LHC_REQUIRE(model->report.has_value(), "model was loaded from disk and carries no training log");
  return guarded([&] {
    *out_csv = dup_string(model->report->metrics_csv());
    return LHC_OK;
  });
}

lhc_status lhc_model_config_json(const lhc_model* model, char** out_json) {
  LHC_REQUIRE(model != nullptr && out_json != nullptr, "NULL argument");
  return guarded([&] {
    *out_json = dup_string(model->config.to_json().dump(2) + "\n");
    return LHC_OK;
  });
}

lhc_status lhc_model_lookup_json(const lhc_model* model, char** out_json) {
  LHC_REQUIRE(model != nullptr && out_json != nullptr, "NULL argument");
  LHC_REQUIRE(model->lh.has_value(), "base models have no lookup table");
  if (!model->lh->table) return fail(LHC_ERR_COLLISION, "model has no one-to-one lookup table");
  return guarded([&] {
    *out_json = dup_string(model->lh->table->to_json().dump(2) + "\n");
    return LHC_OK;
  });
}

void lhc_model_free(lhc_model* model) { delete model; }

lhc_status lhc_evaluate(const lhc_model* model, const lhc_dataset* data, lhc_split split, lhc_eval_result* out) {
  LHC_REQUIRE(model != nullptr && data != nullptr && out != nullptr, "NULL argument");
  return guarded([&] {
    const lhc::LabeledDataset& ds = split_of(data, split);
    *out = lhc_eval_result{};
    out->samples = ds.num_rows;
    if (!model->lh) {
      out->accuracy = lhc::base_accuracy(model->base, ds);
      return LHC_OK;
    }
    if (!model->lh->table) return fail(LHC_ERR_COLLISION, "model has no one-to-one lookup table");
    const lhc::EvalResult r = lhc::evaluate(*model->lh, ds);
    if (r.bit_accuracy.size() > LHC_MAX_BITS) throw lhc::DimensionError("string longer than LHC_MAX_BITS");
    out->accuracy = r.accuracy;
    out->no_match = r.no_match;
    out->num_bits = r.bit_accuracy.size();
    for (std::size_t b = 0; b < r.bit_accuracy.size(); ++b) out->bit_accuracy[b] = r.bit_accuracy[b];
    return LHC_OK;
  });
}

lhc_status lhc_export_tree(const lhc_model* model, lhc_tree_format format, char** out_text) {
  LHC_REQUIRE(model != nullptr && out_text != nullptr, "NULL argument");
  LHC_REQUIRE(format == LHC_TREE_DOT || format == LHC_TREE_JSON, "unknown tree format");
  LHC_REQUIRE(model->lh.has_value(), "base models have no hierarchy");
  if (!model->lh->table) return fail(LHC_ERR_COLLISION, "model has no one-to-one lookup table");
  return guarded([&] {
    const lhc::PrefixTree tree = lhc::PrefixTree::build(*model->lh->table);
    *out_text = dup_string(lhc::export_tree(tree, format == LHC_TREE_DOT ? lhc::TreeFormat::kDot
                                                                          : lhc::TreeFormat::kJson));
    return LHC_OK;
  });
}

lhc_status lhc_tree_compare(const char* tree_json, const char* reference_json, int* equal, double* shared_fraction) {
  LHC_REQUIRE(tree_json != nullptr && reference_json != nullptr, "NULL argument");
  return guarded([&] {
    const auto a = lhc::canonicalize(lhc::PrefixTree::from_json(json::parse(tree_json)));
    const auto b = lhc::canonicalize(lhc::PrefixTree::from_json(json::parse(reference_json)));
    const lhc::TreeComparison cmp = lhc::tree_distance(b, a);
    if (equal != nullptr) *equal = cmp.equal ? 1 : 0;
    if (shared_fraction != nullptr) *shared_fraction = cmp.shared_fraction();
    return LHC_OK;
  });
}

lhc_status lhc_ablate(const lhc_config* config, const lhc_model* base, const lhc_dataset* data, uint64_t seed,
                      lhc_ablation_result* out, char** out_random_lookup_json) {
  LHC_REQUIRE(config != nullptr && base != nullptr && data != nullptr && out != nullptr, "NULL argument");
  return guarded([&] {
    const lhc::AblationResult r =
        lhc::ablate_random_embedding(base->base, data->splits.train, data->splits.test, config->value, seed);
    *out = {r.learned_accuracy, r.random_accuracy, r.learned_one_to_one ? 1 : 0};
    if (out_random_lookup_json != nullptr) *out_random_lookup_json = dup_string(r.random_table.to_json().dump(2) + "\n");
    return LHC_OK;
  });
}

lhc_status lhc_sweep_length(const lhc_config* config, const lhc_model* base, const lhc_dataset* data,
                            const size_t* lengths, size_t count, char** out_csv) {
  LHC_REQUIRE(config != nullptr && base != nullptr && data != nullptr && out_csv != nullptr, "NULL argument");
  LHC_REQUIRE(lengths != nullptr && count > 0, "at least one length is required");
  return guarded([&] {
    const std::vector<std::size_t> ls(lengths, lengths + count);
    *out_csv = dup_string(lhc::sweep_csv(
        lhc::sweep_string_length(base->base, data->splits.train, data->splits.test, config->value, ls)));
    return LHC_OK;
  });
}

lhc_status lhc_gradcheck(uint64_t seed, char** out_json) {
  LHC_REQUIRE(out_json != nullptr, "NULL argument");
  return guarded([&] {
    const lhc::GradcheckReport r = lhc::loss_gradcheck(seed);
    json terms = json::object();
    for (const auto& [name, err] : r.terms) terms[name] = err;
    *out_json = dup_string(json{{"seed", seed}, {"terms", terms}, {"worst", r.worst()}}.dump(2) + "\n");
    return LHC_OK;
  });
}

lhc_status lhc_compare_heads(size_t feature_dim, const size_t* fc_hidden, size_t fc_hidden_count, size_t num_classes,
                             size_t lstm_hidden, size_t lstm_layers, lhc_head_counts* out) {
  LHC_REQUIRE(out != nullptr, "NULL argument");
  LHC_REQUIRE(fc_hidden != nullptr || fc_hidden_count == 0, "fc_hidden is NULL");
  return guarded([&] {
    const std::vector<std::size_t> hidden(fc_hidden, fc_hidden + fc_hidden_count);
    const lhc::HeadComparison h = lhc::compare_heads(feature_dim, hidden, num_classes, lstm_hidden, lstm_layers);
    *out = {h.fc_params, h.lh_params, h.reduction};
    return LHC_OK;
  });
}

}  // extern "C"
