// Command-line front end over the lhc C API.
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "lhc/lhc.h"

namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitUsage = 2;

struct Failure {
  int code;
  std::string message;
};

struct ConfigDeleter {
  void operator()(lhc_config* c) const { lhc_config_free(c); }
};
struct DatasetDeleter {
  void operator()(lhc_dataset* d) const { lhc_dataset_free(d); }
};
struct ModelDeleter {
  void operator()(lhc_model* m) const { lhc_model_free(m); }
};
using ConfigPtr = std::unique_ptr<lhc_config, ConfigDeleter>;
using DatasetPtr = std::unique_ptr<lhc_dataset, DatasetDeleter>;
using ModelPtr = std::unique_ptr<lhc_model, ModelDeleter>;

void check(lhc_status status, const std::string& context) {
  if (status != LHC_OK) {
    throw Failure{kExitFailure, context + ": " + lhc_status_name(status) + ": " + lhc_last_error()};
  }
}

std::string take(char* s) {
  std::string out = s ? s : "";
  lhc_string_free(s);
  return out;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary);
  f << text;
  if (!f) throw Failure{kExitFailure, "cannot write " + path.string()};
}

struct Options {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string data_dir;
  std::string out;
  std::string checkpoint;
  std::string format = "dot";
  std::optional<std::size_t> L;
  std::optional<double> mu;
  std::vector<std::size_t> l_values;
};

// Resolved config: the file (or `fallback`, or defaults) with flag overrides applied.
ConfigPtr resolve_config(const Options& o, const lhc_model* fallback = nullptr) {
  lhc_config* raw = nullptr;
  if (!o.config_path.empty()) {
    check(lhc_config_load(o.config_path.c_str(), &raw), "config " + o.config_path);
  } else if (fallback != nullptr) {
    char* text = nullptr;
    check(lhc_model_config_json(fallback, &text), "checkpoint config");
    const std::string j = take(text);
    check(lhc_config_from_json(j.c_str(), &raw), "checkpoint config");
  } else {
    check(lhc_config_default(&raw), "default config");
  }
  ConfigPtr cfg(raw);
  if (o.seed) check(lhc_config_set(cfg.get(), "seed", std::to_string(*o.seed).c_str()), "--seed");
  if (o.L) check(lhc_config_set(cfg.get(), "L", std::to_string(*o.L).c_str()), "--L");
  if (o.mu) {
    std::ostringstream s;
    s.precision(17);
    s << *o.mu;
    check(lhc_config_set(cfg.get(), "mu", s.str().c_str()), "--mu");
  }
  return cfg;
}

std::string config_text(const lhc_config* cfg) {
  char* text = nullptr;
  check(lhc_config_to_json(cfg, &text), "config");
  return take(text);
}

std::string dataset_kind(const lhc_config* cfg) {
  return nlohmann::json::parse(config_text(cfg)).at("dataset").get<std::string>();
}

DatasetPtr load_data(const lhc_config* cfg, const Options& o) {
  const std::string kind = dataset_kind(cfg);
  if (kind != "planted" && o.data_dir.empty()) {
    throw Failure{kExitUsage, "--data-dir is required for dataset kind " + kind};
  }
  lhc_dataset* raw = nullptr;
  check(lhc_dataset_load(cfg, o.data_dir.empty() ? nullptr : o.data_dir.c_str(), &raw), "dataset");
  return DatasetPtr(raw);
}

ModelPtr load_model(const std::string& path) {
  if (path.empty()) throw Failure{kExitUsage, "--checkpoint is required"};
  lhc_model* raw = nullptr;
  check(lhc_model_load(path.c_str(), &raw), "checkpoint " + path);
  return ModelPtr(raw);
}

void print_epoch(const lhc_epoch_info* e, void*) {
  std::printf("epoch %3zu  loss %.6f  train_acc %.4f  val_acc %.4f\n", e->epoch, e->loss_total, e->train_acc,
              e->val_acc);
  std::fflush(stdout);
}

fs::path require_out(const Options& o) {
  if (o.out.empty()) throw Failure{kExitUsage, "--out is required"};
  return fs::path(o.out);
}

void save_run(const fs::path& out, const lhc_config* cfg, const lhc_model* model) {
  write_text(out / "config.json", config_text(cfg));
  check(lhc_model_save(model, (out / "model.lhc1").c_str()), "save checkpoint");
  char* csv = nullptr;
  check(lhc_model_metrics_csv(model, &csv), "metrics");
  write_text(out / "metrics.csv", take(csv));
}

int cmd_train_base(const Options& o) {
  const fs::path out = require_out(o);
  ConfigPtr cfg = resolve_config(o);
  DatasetPtr data = load_data(cfg.get(), o);
  lhc_model* raw = nullptr;
  lhc_train_summary s{};
  check(lhc_train_base(cfg.get(), data.get(), print_epoch, nullptr, &raw, &s), "train-base");
  ModelPtr model(raw);
  save_run(out, cfg.get(), model.get());
  std::printf("base model: train_acc %.4f  test_acc %.4f  epochs %zu (best %zu)  %.1fs\n", s.train_accuracy,
              s.test_accuracy, s.epochs_run, s.best_epoch, s.wall_seconds);
  std::printf("wrote %s\n", out.c_str());
  return kExitOk;
}

int cmd_train_lh(const Options& o) {
  const fs::path out = require_out(o);
  ModelPtr base = load_model(o.checkpoint);
  if (lhc_model_get_kind(base.get()) != LHC_MODEL_BASE) {
    throw Failure{kExitFailure, "train-lh needs a base-model checkpoint"};
  }
  ConfigPtr cfg = resolve_config(o, base.get());
  DatasetPtr data = load_data(cfg.get(), o);
  lhc_model* raw = nullptr;
  lhc_train_summary s{};
  const lhc_status status = lhc_train_lh(cfg.get(), base.get(), data.get(), print_epoch, nullptr, &raw, &s);
  if (status != LHC_OK && status != LHC_ERR_COLLISION) check(status, "train-lh");
  const std::string collision = status == LHC_ERR_COLLISION ? lhc_last_error() : "";
  ModelPtr model(raw);
  save_run(out, cfg.get(), model.get());
  std::printf("lh model: mean bit bias %.4f  epochs %zu (best %zu)  %.1fs\n", s.mean_bit_bias, s.epochs_run,
              s.best_epoch, s.wall_seconds);
  if (!collision.empty()) {
    std::fprintf(stderr, "warning: %s\n", collision.c_str());
    return kExitFailure;
  }
  char* text = nullptr;
  check(lhc_model_lookup_json(model.get(), &text), "lookup");
  write_text(out / "lookup.json", take(text));
  check(lhc_export_tree(model.get(), LHC_TREE_DOT, &text), "tree");
  write_text(out / "tree.dot", take(text));
  check(lhc_export_tree(model.get(), LHC_TREE_JSON, &text), "tree");
  write_text(out / "tree.json", take(text));
  std::printf("test string accuracy %.4f\n", s.test_accuracy);
  std::printf("wrote %s\n", out.c_str());
  return kExitOk;
}

int cmd_eval(const Options& o) {
  ModelPtr model = load_model(o.checkpoint);
  ConfigPtr cfg = resolve_config(o, model.get());
  DatasetPtr data = load_data(cfg.get(), o);
  lhc_eval_result r{};
  check(lhc_evaluate(model.get(), data.get(), LHC_SPLIT_TEST, &r), "eval");
  std::printf("accuracy %.6f  samples %zu\n", r.accuracy, r.samples);
  if (r.num_bits > 0) {
    std::printf("no_match %zu\n", r.no_match);
    for (std::size_t b = 0; b < r.num_bits; ++b) std::printf("bit %zu accuracy %.6f\n", b + 1, r.bit_accuracy[b]);
  }
  if (!o.out.empty()) {
    std::ostringstream csv;
    csv.precision(17);
    csv << "metric,value\naccuracy," << r.accuracy << "\nsamples," << r.samples << "\nno_match," << r.no_match << "\n";
    for (std::size_t b = 0; b < r.num_bits; ++b) csv << "bit" << b + 1 << "," << r.bit_accuracy[b] << "\n";
    write_text(fs::path(o.out) / "eval.csv", csv.str());
  }
  return kExitOk;
}

int cmd_export_tree(const Options& o) {
  ModelPtr model = load_model(o.checkpoint);
  const lhc_tree_format format = o.format == "json" ? LHC_TREE_JSON : LHC_TREE_DOT;
  char* text = nullptr;
  check(lhc_export_tree(model.get(), format, &text), "export-tree");
  const std::string tree = take(text);
  if (o.out.empty()) {
    std::fwrite(tree.data(), 1, tree.size(), stdout);
  } else {
    write_text(o.out, tree);
  }
  return kExitOk;
}

int cmd_ablate(const Options& o) {
  const fs::path out = require_out(o);
  ModelPtr base = load_model(o.checkpoint);
  ConfigPtr cfg = resolve_config(o, base.get());
  DatasetPtr data = load_data(cfg.get(), o);
  const std::uint64_t seed = o.seed.value_or(1);
  lhc_ablation_result r{};
  char* table = nullptr;
  check(lhc_ablate(cfg.get(), base.get(), data.get(), seed, &r, &table), "ablate");
  write_text(out / "random_lookup.json", take(table));
  write_text(out / "config.json", config_text(cfg.get()));
  std::ostringstream csv;
  csv.precision(17);
  csv << "seed,learned_accuracy,random_accuracy,learned_one_to_one\n"
      << seed << "," << r.learned_accuracy << "," << r.random_accuracy << "," << r.learned_one_to_one << "\n";
  write_text(out / "ablation.csv", csv.str());
  std::printf("learned %.4f  random %.4f  delta %+.4f\n", r.learned_accuracy, r.random_accuracy,
              r.learned_accuracy - r.random_accuracy);
  return kExitOk;
}

int cmd_sweep(const Options& o) {
  const fs::path out = require_out(o);
  ModelPtr base = load_model(o.checkpoint);
  ConfigPtr cfg = resolve_config(o, base.get());
  DatasetPtr data = load_data(cfg.get(), o);
  if (o.l_values.empty()) throw Failure{kExitUsage, "--L-values is required"};
  char* csv = nullptr;
  check(lhc_sweep_length(cfg.get(), base.get(), data.get(), o.l_values.data(), o.l_values.size(), &csv), "sweep-l");
  const std::string text = take(csv);
  write_text(out / "sweep.csv", text);
  write_text(out / "config.json", config_text(cfg.get()));
  std::fwrite(text.data(), 1, text.size(), stdout);
  return kExitOk;
}

int cmd_gradcheck(const Options& o) {
  const std::uint64_t seed = o.seed.value_or(1);
  char* text = nullptr;
  check(lhc_gradcheck(seed, &text), "gradcheck");
  const std::string report = take(text);
  std::fwrite(report.data(), 1, report.size(), stdout);
  const double worst = nlohmann::json::parse(report).at("worst").get<double>();
  constexpr double kTolerance = 1e-5;
  return worst < kTolerance ? kExitOk : kExitFailure;
}

int cmd_synth_gen(const Options& o) {
  const fs::path out = require_out(o);
  ConfigPtr cfg = resolve_config(o);
  check(lhc_config_set(cfg.get(), "dataset", "\"planted\""), "synth-gen");
  if (o.seed) {
    // --seed also reseeds the generator.
    nlohmann::json planted = nlohmann::json::parse(config_text(cfg.get())).at("planted");
    planted["seed"] = *o.seed;
    check(lhc_config_set(cfg.get(), "planted", planted.dump().c_str()), "--seed");
  }
  DatasetPtr data = load_data(cfg.get(), o);
  check(lhc_dataset_save(data.get(), out.c_str()), "synth-gen");
  write_text(out / "config.json", config_text(cfg.get()));
  std::printf("planted data: %zu train / %zu test rows, %zu classes, dim %zu\n",
              lhc_dataset_rows(data.get(), LHC_SPLIT_TRAIN), lhc_dataset_rows(data.get(), LHC_SPLIT_TEST),
              lhc_dataset_classes(data.get()), lhc_dataset_dim(data.get()));
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Latent-hierarchy classifier: train, evaluate and extract class hierarchies"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(lhc_version()));
  Options o;

  auto add_config = [&](CLI::App* c) {
    c->add_option("--config", o.config_path, "Run config JSON")->check(CLI::ExistingFile);
  };
  auto add_seed = [&](CLI::App* c) { c->add_option("--seed", o.seed, "Seed (overrides config)"); };
  auto add_data = [&](CLI::App* c) { c->add_option("--data-dir", o.data_dir, "MNIST or LHF1 directory"); };
  auto add_out = [&](CLI::App* c, bool required) {
    auto* opt = c->add_option("--out", o.out, "Output directory");
    if (required) opt->required();
  };
  auto add_ckpt = [&](CLI::App* c) {
    c->add_option("--checkpoint", o.checkpoint, "LHC1 checkpoint")->required()->check(CLI::ExistingFile);
  };
  auto add_lh_overrides = [&](CLI::App* c) {
    c->add_option("--L", o.L, "String length (overrides config)");
    c->add_option("--mu", o.mu, "Structured-loss decay (overrides config)");
  };

  CLI::App* train_base = app.add_subcommand("train-base", "Train extractor + FC classifier");
  add_config(train_base);
  add_seed(train_base);
  add_data(train_base);
  add_out(train_base, true);

  CLI::App* train_lh = app.add_subcommand("train-lh", "Train the LH classifier on a frozen base model");
  add_config(train_lh);
  add_seed(train_lh);
  add_data(train_lh);
  add_out(train_lh, true);
  add_ckpt(train_lh);
  add_lh_overrides(train_lh);

  CLI::App* eval = app.add_subcommand("eval", "Evaluate a checkpoint on the test split");
  add_config(eval);
  add_data(eval);
  add_out(eval, false);
  add_ckpt(eval);

  CLI::App* export_tree = app.add_subcommand("export-tree", "Print the learned hierarchy");
  add_ckpt(export_tree);
  export_tree->add_option("--format", o.format, "dot or json")->check(CLI::IsMember({"dot", "json"}));
  add_out(export_tree, false);

  CLI::App* ablate = app.add_subcommand("ablate", "Learned vs random class embedding");
  add_config(ablate);
  add_seed(ablate);
  add_data(ablate);
  add_out(ablate, true);
  add_ckpt(ablate);
  add_lh_overrides(ablate);

  CLI::App* sweep = app.add_subcommand("sweep-l", "Accuracy per string length");
  add_config(sweep);
  add_seed(sweep);
  add_data(sweep);
  add_out(sweep, true);
  add_ckpt(sweep);
  add_lh_overrides(sweep);
  sweep->add_option("--L-values", o.l_values, "String lengths to train")->delimiter(',')->required();

  CLI::App* gradcheck = app.add_subcommand("gradcheck", "Finite-difference check of every loss term");
  add_seed(gradcheck);

  CLI::App* synth = app.add_subcommand("synth-gen", "Write planted-hierarchy data as LHF1");
  add_config(synth);
  add_seed(synth);
  add_out(synth, true);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*train_base) return cmd_train_base(o);
    if (*train_lh) return cmd_train_lh(o);
    if (*eval) return cmd_eval(o);
    if (*export_tree) return cmd_export_tree(o);
    if (*ablate) return cmd_ablate(o);
    if (*sweep) return cmd_sweep(o);
    if (*gradcheck) return cmd_gradcheck(o);
    if (*synth) return cmd_synth_gen(o);
  } catch (const Failure& f) {
    std::fprintf(stderr, "error: %s\n", f.message.c_str());
    return f.code;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitFailure;
  }
  return kExitUsage;
}
