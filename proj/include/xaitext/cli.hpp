#pragma once

#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "xaitext/workflow.hpp"

namespace xaitext {

// Binds every RunConfig field to an option of the same name, so the same
// keys work on the command line and in a --config file.
inline void add_run_options(CLI::App& app, RunConfig& c) {
  const char* group = "Run configuration (also accepted as config file keys)";
  app.add_option("--dataset", c.dataset, "CSV with text,label columns, or 'synthetic'")->group(group);
  app.add_option("--synthetic_documents", c.synthetic_documents)->group(group);
  app.add_option("--vocab_capacity", c.vocab_capacity)->group(group);
  app.add_option("--sequence_length", c.sequence_length)->group(group);
  app.add_option("--embedding_dim", c.embedding_dim)->group(group);
  app.add_option("--cnn_filters", c.cnn_filters)->group(group);
  app.add_option("--cnn_kernel_width", c.cnn_kernel_width)->group(group);
  app.add_option("--cnn_dropout", c.cnn_dropout)->group(group);
  app.add_option("--cnn_activation", c.cnn_activation)->group(group);
  app.add_option("--lstm_hidden_units", c.lstm_hidden_units)->group(group);
  app.add_option("--lstm_dropout", c.lstm_dropout)->group(group);
  app.add_option("--lstm_recurrent_dropout", c.lstm_recurrent_dropout)->group(group);
  app.add_option("--epochs", c.epochs)->group(group);
  app.add_option("--batch_size", c.batch_size)->group(group);
  app.add_option("--learning_rate", c.learning_rate)->group(group);
  app.add_option("--ig_steps", c.ig_steps)->group(group);
  app.add_option("--shap_coalitions", c.shap_coalitions)->group(group);
  app.add_option("--lime_samples", c.lime_samples)->group(group);
  app.add_option("--lime_top_k", c.lime_top_k)->group(group);
  app.add_option("--lime_kernel_width", c.lime_kernel_width, "0 = 0.75*sqrt(tokens)")->group(group);
  app.add_option("--lime_ridge", c.lime_ridge)->group(group);
  app.add_option("--eval_k", c.eval_k)->group(group);
  app.add_option("--eval_m", c.eval_m, "0 = eval_k")->group(group);
  app.add_option("--eval_instances", c.eval_instances)->group(group);
  app.add_option("--class_mode", c.class_mode, "predicted or positive")->group(group);
  app.add_option("--record_time", c.record_time, "write wall times (false gives byte-stable outputs)")
      ->group(group);

  app.add_option("--seed", c.seed, "master seed");
  app.add_option("--out", c.out, "output directory");
  app.add_option("--model", c.model, "cnn or lstm");
  app.add_option("--methods", c.methods, "comma-separated subset of ig,shap,lime")->delimiter(',');
  app.add_option("--instances", c.instances, "count, or comma-separated test ids");
}

// Entry point of the xaitext tool. Returns the process exit code:
// 0 success, 1 internal failure, 2 usage or configuration error.
inline int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Train text classifiers, explain their predictions and score the explanations."};
  app.name("xaitext");
  app.set_config("--config", "", "flat key = value run configuration");
  app.allow_config_extras(CLI::config_extras_mode::error);
  app.require_subcommand(1, 1);
  app.fallthrough();
  RunConfig cfg;
  add_run_options(app, cfg);
  auto* prepare = app.add_subcommand("prepare", "build the vocabulary and the train/validation/test split");
  auto* train_cmd = app.add_subcommand("train", "train the configured model and report test accuracy");
  auto* explain_cmd = app.add_subcommand("explain", "write attribution JSON and heatmaps for test instances");
  auto* eval_cmd = app.add_subcommand("eval", "score every method with the faithfulness metrics");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error [stage config]: " << e.what() << "\n";
    return 2;
  }

  const bool instances_given = app.count("--instances") > 0;
  try {
    if (prepare->parsed()) cmd_prepare(cfg, out);
    else if (train_cmd->parsed()) cmd_train(cfg, out);
    else if (explain_cmd->parsed()) cmd_explain(cfg, out, instances_given);
    else if (eval_cmd->parsed()) cmd_eval(cfg, out, instances_given);
  } catch (const StageError& e) {
    err << "error [stage " << e.stage() << "]: " << e.message() << "\n";
    return e.exit_code();
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace xaitext
