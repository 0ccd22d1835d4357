#include "mrb/cli.hpp"

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "mrb/corpus.hpp"
#include "mrb/data_io.hpp"

namespace mrb {

// ---------------------------------------------------------------------------
// Config

CliConfig cli_config_from_json(const nlohmann::json& j, std::vector<std::string>* errors) {
  std::vector<std::string> local;
  auto& errs = errors ? *errors : local;
  const std::size_t before = errs.size();
  CliConfig cfg;
  if (!j.is_object()) {
    errs.push_back("config must be a JSON object");
  } else {
    for (const auto& [key, value] : j.items()) {
      if (key != "model" && key != "training" && key != "paths") {
        errs.push_back("unknown top-level key '" + key + "'");
      }
    }
    if (j.contains("model")) {
      std::vector<std::string> model_errs;
      cfg.model = model_config_from_json(j.at("model"), &model_errs);
      if (model_errs.empty()) model_errs = validate(cfg.model);
      for (auto& e : model_errs) errs.push_back("model." + e);
    }
    if (j.contains("training")) {
      std::vector<std::string> train_errs;
      cfg.training = train_config_from_json(j.at("training"), &train_errs);
      for (auto& e : train_errs) errs.push_back("training." + e);
    }
    if (j.contains("paths")) {
      const auto& p = j.at("paths");
      auto read = [&](const char* key, std::string& out) {
        if (!p.is_object() || !p.contains(key)) return;
        if (p.at(key).is_string()) {
          out = p.at(key).get<std::string>();
        } else {
          errs.push_back(std::string("paths.") + key + " must be a string");
        }
      };
      if (!p.is_object()) errs.push_back("paths must be an object");
      read("bart_embeddings", cfg.paths.bart_embeddings);
      read("roberta_embeddings", cfg.paths.roberta_embeddings);
      read("labels", cfg.paths.labels);
      read("out", cfg.paths.out);
    }
  }
  if (!errors && errs.size() > before) {
    std::string msg = "invalid config:";
    for (const auto& e : errs) msg += "\n  " + e;
    throw ConfigError(msg);
  }
  return cfg;
}

CliConfig load_cli_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open config '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(buf.str());
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("'" + path + "': JSON parse error at byte " + std::to_string(e.byte) + ": " +
                      e.what());
  }
  std::vector<std::string> errors;
  auto cfg = cli_config_from_json(j, &errors);
  if (!errors.empty()) {
    std::string msg = "'" + path + "' is invalid:";
    for (const auto& e : errors) msg += "\n  " + e;
    throw ConfigError(msg);
  }
  return cfg;
}

nlohmann::json to_json(const CliConfig& cfg) {
  return {{"model", to_json(cfg.model)},
          {"training", to_json(cfg.training)},
          {"paths",
           {{"bart_embeddings", cfg.paths.bart_embeddings},
            {"roberta_embeddings", cfg.paths.roberta_embeddings},
            {"labels", cfg.paths.labels},
            {"out", cfg.paths.out}}}};
}

// ---------------------------------------------------------------------------
// Subcommands

namespace {

struct DataFlags {
  std::string bart;
  std::string roberta;
  std::string labels;
};

void add_data_flags(CLI::App* cmd, DataFlags& f) {
  cmd->add_option("--bart-emb", f.bart, "BART embeddings (MREB)");
  cmd->add_option("--roberta-emb", f.roberta, "RoBERTa embeddings (MREB)");
  cmd->add_option("--labels", f.labels, "labels CSV (id,label)");
}

EmbeddingDataset load_data(const DataFlags& f, const CliPaths& paths) {
  const std::string bart = f.bart.empty() ? paths.bart_embeddings : f.bart;
  const std::string roberta = f.roberta.empty() ? paths.roberta_embeddings : f.roberta;
  const std::string labels = f.labels.empty() ? paths.labels : f.labels;
  if (bart.empty() || roberta.empty() || labels.empty()) {
    throw ConfigError("--bart-emb, --roberta-emb and --labels are required (or set them in the "
                      "config's paths section)");
  }
  return load_dataset(bart, roberta, labels);
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot open '" + path + "' for writing");
  out << text;
  if (!out) throw DataError("write to '" + path + "' failed");
}

/// Options shared by train/rounds/ablate.
struct RunFlags {
  DataFlags data;
  std::string config;
  std::uint64_t seed = 0;
  int rounds = 0;
  int epochs = 0;
  unsigned threads = 0;
  std::string csv;
  double bart_hours = 0.0;
  double roberta_hours = 0.0;
};

CliConfig resolve_config(const RunFlags& f, const CLI::App* cmd) {
  CliConfig cfg = f.config.empty() ? CliConfig{} : load_cli_config(f.config);
  if (cmd->count("--seed")) cfg.training.seed = f.seed;
  if (cmd->get_option_no_throw("--rounds") && cmd->count("--rounds")) cfg.training.rounds = f.rounds;
  if (cmd->get_option_no_throw("--epochs") && cmd->count("--epochs")) {
    cfg.training.max_epochs = f.epochs;
  }
  if (cmd->get_option_no_throw("--threads") && cmd->count("--threads")) {
    cfg.training.threads = f.threads;
  }
  check(cfg.training);
  return cfg;
}

void add_run_flags(CLI::App* cmd, RunFlags& f, bool rounds) {
  add_data_flags(cmd, f.data);
  cmd->add_option("--config", f.config, "JSON config (model, training, paths)");
  cmd->add_option("--seed", f.seed, "base seed (overrides the config)");
  cmd->add_option("--epochs", f.epochs, "maximum epochs (overrides the config)");
  if (rounds) {
    cmd->add_option("--rounds", f.rounds, "rounds per configuration (overrides the config)");
    cmd->add_option("--threads", f.threads, "worker threads, 0 = all cores");
    cmd->add_option("--csv", f.csv, "also write the report as CSV");
    cmd->add_option("--bart-hours", f.bart_hours, "BART embedding time, for the time breakdown");
    cmd->add_option("--roberta-hours", f.roberta_hours,
                    "RoBERTa embedding time, for the time breakdown");
  }
}

std::string timing_line(const RoundsReport& report, double bart_hours, double roberta_hours) {
  double training = 0.0;
  for (const auto& r : report.rounds) training += r.seconds / 3600.0;
  const TimingBreakdown t{bart_hours, roberta_hours, training};
  char buf[160];
  std::snprintf(buf, sizeof buf,
                "time (hours): bart embeddings %.2f, roberta embeddings %.2f, training %.4f, "
                "total %.4f\n",
                t.bart_embedding_hours, t.roberta_embedding_hours, t.training_hours,
                t.total_hours());
  return buf;
}

int run_synth(const SynthSpec& spec, const std::string& dir, std::ostream& out) {
  std::filesystem::create_directories(dir);
  const auto ds = gen_synthetic(spec);
  const auto base = std::filesystem::path(dir);
  write_embeddings((base / "bart.mreb").string(), ds.bart);
  write_embeddings((base / "roberta.mreb").string(), ds.roberta);
  LabelTable table;
  for (std::size_t i = 0; i < ds.size(); ++i) table.ids.push_back("r" + std::to_string(i));
  table.labels = ds.labels;
  table.class_names = ds.class_names;
  write_labels((base / "labels.csv").string(), table);
  out << "wrote " << ds.size() << " records (" << spec.n_classes << " classes, dims "
      << spec.bart_dim << "/" << spec.roberta_dim << ") to " << dir << '\n';
  return exit_code::ok;
}

int run_train(const RunFlags& f, const CLI::App* cmd, const std::string& model_out,
              const std::string& history_out, std::ostream& out) {
  auto cfg = resolve_config(f, cmd);
  const auto data = load_data(f.data, cfg.paths);
  SeededRng split_rng = SeededRng(cfg.training.seed).fork(10);
  const auto split = stratified_split(data.labels, split_rng, cfg.training.split);
  out << "records " << data.size() << ": train " << split.train.size() << ", validation "
      << split.validation.size() << ", test " << split.test.size() << '\n';
  auto result = train(cfg.training, cfg.model, data, split, [&](const EpochRecord& r) {
    char buf[128];
    std::snprintf(buf, sizeof buf, "epoch %d  train_loss %.4f  val_loss %.4f  (%.1fs)\n", r.epoch,
                  r.train_loss, r.val_loss, r.seconds);
    out << buf << std::flush;
  });
  out << "best epoch " << result.best_epoch << (result.stopped_early ? " (stopped early)" : "")
      << '\n';
  const auto eval = evaluate(result.model, data, split.test);
  out << "test metrics (%)\n" << format_report(eval.metrics);
  const std::string path = model_out.empty() ? cfg.paths.out : model_out;
  if (!path.empty()) {
    save_model(result.model, path);
    out << "saved model to " << path << '\n';
  }
  if (!history_out.empty()) write_text(history_out, history_csv(result.history));
  return exit_code::ok;
}

int run_evaluate(const std::string& model_path, const DataFlags& f, std::ostream& out) {
  const auto loaded = load_model(model_path);
  const auto model = Model<float>::from_weights(loaded.config, loaded.weights);
  const auto data = load_data(f, {});
  const auto eval = evaluate(model, data, all_indices(data));
  out << "records " << data.size() << ", loss " << eval.loss << '\n';
  out << format_report(eval.metrics);
  return exit_code::ok;
}

int run_rounds_cmd(const RunFlags& f, const CLI::App* cmd, std::ostream& out) {
  auto cfg = resolve_config(f, cmd);
  const auto data = load_data(f.data, cfg.paths);
  const auto report = run_rounds(cfg.training, cfg.model, data, [&](const RoundResult& r) {
    out << "round " << r.round << " (seed " << r.seed << "): accuracy "
        << format_percent(r.metrics.accuracy) << ", epochs " << r.epochs_run << '\n'
        << std::flush;
  });
  out << format_rounds_report(report);
  out << timing_line(report, f.bart_hours, f.roberta_hours);
  if (!f.csv.empty()) write_text(f.csv, rounds_csv(report));
  return exit_code::ok;
}

int run_ablate(const RunFlags& f, const CLI::App* cmd, const std::string& grid,
               std::ostream& out) {
  auto cfg = resolve_config(f, cmd);
  const auto data = load_data(f.data, cfg.paths);
  const auto configs = grid == "full" ? ablation_grid(cfg.model) : smoke_grid(cfg.model);
  out << "ablation grid '" << grid << "': " << configs.size() << " configs, "
      << cfg.training.rounds << " rounds each\n";
  std::vector<AblationRow> rows;
  for (std::size_t i = 0; i < configs.size(); ++i) {
    const auto& model_cfg = configs[i];
    rows.push_back({model_cfg, run_rounds(cfg.training, model_cfg, data)});
    const auto& c = model_cfg;
    out << "[" << i + 1 << "/" << configs.size() << "] " << to_string(c.bart.cell) << " "
        << c.bart.units << " units " << c.bart.depth << "/" << c.roberta.depth << "/"
        << c.ensemble.depth << ": accuracy "
        << format_mean_std(rows.back().report.metrics[0].mean, rows.back().report.metrics[0].std)
        << '\n'
        << std::flush;
  }
  out << '\n' << format_ablation_report(rows);
  if (!f.csv.empty()) write_text(f.csv, ablation_csv(rows));
  return exit_code::ok;
}

int run_analyze(const std::string& corpus, const std::vector<std::string>& vectors,
                const std::string& out_dir, const AnalysisOptions& options, std::ostream& out) {
  const auto docs = read_jsonl_corpus(corpus);
  std::vector<NamedVectors> tables;
  for (const auto& spec : vectors) {
    const auto eq = spec.find('=');
    const std::string name =
        eq == std::string::npos ? std::filesystem::path(spec).stem().string() : spec.substr(0, eq);
    const std::string path = eq == std::string::npos ? spec : spec.substr(eq + 1);
    tables.push_back({name, load_word_vectors(path)});
  }
  const auto report = analyze_corpus(docs, options, tables);
  out << format_corpus_report(report);
  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    const auto base = std::filesystem::path(out_dir);
    write_text((base / "token_stats.csv").string(), token_stats_csv(report.stats));
    write_text((base / "unigrams.csv").string(), term_rows_csv(report.unigrams, report.vector_names));
    write_text((base / "topics.csv").string(), term_rows_csv(report.topics, report.vector_names));
    out << "wrote token_stats.csv, unigrams.csv and topics.csv to " << out_dir << '\n';
  }
  return exit_code::ok;
}

int run_shapes(const std::string& config, std::ostream& out) {
  const CliConfig cfg = config.empty() ? CliConfig{} : load_cli_config(config);
  const auto trace = shape_trace(cfg.model);
  out << format_trace(trace);
  return exit_code::ok;
}

}  // namespace

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Dual-branch BiLSTM-CNN ensemble classifier over sentence embeddings", "mrb"};
  app.require_subcommand(1);
  app.fallthrough(false);

  SynthSpec synth;
  std::string synth_dir;
  auto* synth_cmd = app.add_subcommand("synth", "write a synthetic class-separable dataset");
  synth_cmd->add_option("--out-dir", synth_dir, "output directory")->required();
  synth_cmd->add_option("--classes", synth.n_classes, "number of classes")->capture_default_str();
  synth_cmd->add_option("--per-class", synth.per_class, "records per class")->capture_default_str();
  synth_cmd->add_option("--bart-dim", synth.bart_dim, "BART dimension")->capture_default_str();
  synth_cmd->add_option("--roberta-dim", synth.roberta_dim, "RoBERTa dimension")
      ->capture_default_str();
  synth_cmd->add_option("--separation", synth.separation, "class-mean norm in sigmas")
      ->capture_default_str();
  synth_cmd->add_option("--seed", synth.seed, "seed")->capture_default_str();

  RunFlags train_flags;
  std::string model_out, history_out;
  auto* train_cmd = app.add_subcommand("train", "train one model on a stratified split");
  add_run_flags(train_cmd, train_flags, false);
  train_cmd->add_option("--out", model_out, "model file to write");
  train_cmd->add_option("--history", history_out, "per-epoch history CSV");

  std::string model_in;
  DataFlags eval_flags;
  auto* eval_cmd = app.add_subcommand("evaluate", "evaluate a saved model on a dataset");
  eval_cmd->add_option("--model", model_in, "model file")->required();
  add_data_flags(eval_cmd, eval_flags);

  RunFlags rounds_flags;
  auto* rounds_cmd = app.add_subcommand("rounds", "repeat split/train/test and report mean ± std");
  add_run_flags(rounds_cmd, rounds_flags, true);

  RunFlags ablate_flags;
  std::string grid = "smoke";
  auto* ablate_cmd = app.add_subcommand("ablate", "run the cell/depth/units ablation grid");
  add_run_flags(ablate_cmd, ablate_flags, true);
  ablate_cmd->add_option("--grid", grid, "full (162 configs) or smoke (6 configs)")
      ->check(CLI::IsMember({"full", "smoke"}))
      ->capture_default_str();

  std::string corpus, analysis_dir;
  std::vector<std::string> vectors;
  AnalysisOptions analysis;
  auto* analyze_cmd = app.add_subcommand("analyze", "token statistics, unigrams and topics");
  analyze_cmd->add_option("--corpus", corpus, "JSONL corpus (id, text, label)")->required();
  analyze_cmd->add_option("--vectors", vectors, "word-vector table, optionally NAME=PATH");
  analyze_cmd->add_option("--out-dir", analysis_dir, "write the CSV reports here");
  analyze_cmd->add_option("--top", analysis.top_n, "terms per list")->capture_default_str();
  analyze_cmd->add_option("--topics", analysis.nmf.k, "NMF rank")->capture_default_str();
  analyze_cmd->add_option("--nmf-iter", analysis.nmf.max_iter, "NMF iterations")
      ->capture_default_str();
  analyze_cmd->add_option("--max-features", analysis.tfidf.max_features,
                          "TFIDF vocabulary cap, 0 = none")
      ->capture_default_str();
  analyze_cmd->add_option("--seed", analysis.seed, "NMF seed")->capture_default_str();

  std::string shapes_config;
  auto* shapes_cmd = app.add_subcommand("shapes", "print the per-layer shape trace");
  shapes_cmd->add_option("--config", shapes_config, "JSON config");

  std::vector<const char*> argv{"mrb"};
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    if (code == 0) return exit_code::ok;
    // Show the usage of the subcommand that failed, or the top level.
    const CLI::App* failed = &app;
    for (const CLI::App* sub : app.get_subcommands()) failed = sub;
    err << failed->help();
    return exit_code::usage;
  }

  try {
    if (synth_cmd->parsed()) return run_synth(synth, synth_dir, out);
    if (train_cmd->parsed()) return run_train(train_flags, train_cmd, model_out, history_out, out);
    if (eval_cmd->parsed()) return run_evaluate(model_in, eval_flags, out);
    if (rounds_cmd->parsed()) return run_rounds_cmd(rounds_flags, rounds_cmd, out);
    if (ablate_cmd->parsed()) return run_ablate(ablate_flags, ablate_cmd, grid, out);
    if (analyze_cmd->parsed()) {
      return run_analyze(corpus, vectors, analysis_dir, analysis, out);
    }
    if (shapes_cmd->parsed()) return run_shapes(shapes_config, out);
  } catch (const NumericError& e) {
    err << "numeric error: " << e.what() << '\n';
    return exit_code::numeric;
  } catch (const DimensionError& e) {
    err << "dimension error: " << e.what() << '\n';
    return exit_code::data;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return exit_code::data;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return exit_code::data;
  }
  err << app.help();
  return exit_code::usage;
}

int dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return dispatch(args, out, err);
}

}  // namespace mrb
