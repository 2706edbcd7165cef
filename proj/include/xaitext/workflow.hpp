#pragma once

// prepare -> train -> explain -> eval over one output directory. Every
// command is a pure function of the RunConfig: same config, same bytes
// (with record_time off; wall times are the only nondeterministic output).

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "xaitext/attribution/explain.hpp"
#include "xaitext/faithfulness.hpp"
#include "xaitext/model/checkpoint.hpp"
#include "xaitext/model/training.hpp"
#include "xaitext/report.hpp"
#include "xaitext/synthetic_corpus.hpp"
#include "xaitext/text_pipeline.hpp"

namespace xaitext {

// A command failed in a named stage. user_error separates bad input or
// configuration (exit 2) from internal failures (exit 1).
class StageError : public Error {
 public:
  StageError(std::string stage, const std::string& what, bool user_error)
      : Error(stage + ": " + what), stage_(std::move(stage)), message_(what), user_error_(user_error) {}
  const std::string& stage() const noexcept { return stage_; }
  const std::string& message() const noexcept { return message_; }
  bool user_error() const noexcept { return user_error_; }
  int exit_code() const noexcept { return user_error_ ? 2 : 1; }

 private:
  std::string stage_;
  std::string message_;
  bool user_error_;
};

inline constexpr std::string_view kSyntheticDataset = "synthetic";

struct RunConfig {
  std::string dataset = std::string(kSyntheticDataset);  // CSV path or "synthetic"
  std::size_t synthetic_documents = 2000;
  std::size_t vocab_capacity = kDefaultVocabularyCapacity;
  std::size_t sequence_length = kDefaultSequenceLength;

  std::string model = "cnn";
  std::size_t embedding_dim = 128;
  std::size_t cnn_filters = 128;
  std::size_t cnn_kernel_width = 5;
  double cnn_dropout = 0.5;
  std::string cnn_activation = "relu";
  std::size_t lstm_hidden_units = 128;
  double lstm_dropout = 0.2;
  double lstm_recurrent_dropout = 0.2;

  std::size_t epochs = 10;
  std::size_t batch_size = 64;
  double learning_rate = 1e-3;

  std::vector<std::string> methods = {"ig", "shap", "lime"};
  std::size_t ig_steps = 50;
  std::size_t shap_coalitions = 100;
  std::size_t lime_samples = 1000;
  std::size_t lime_top_k = 20;
  double lime_kernel_width = 0.0;  // 0 selects 0.75 * sqrt(tokens)
  double lime_ridge = 1e-3;

  std::size_t eval_k = 20;
  std::size_t eval_m = 0;  // 0 selects eval_k
  std::size_t eval_instances = 60;
  std::string class_mode = "predicted";

  // "n" selects n test instances; "a,b,c" (or "a,") lists test ids.
  std::string instances = "1";

  std::filesystem::path out = "run";
  std::uint64_t seed = 42;
  bool record_time = true;

  void validate() const;
  nlohmann::json to_json() const;
};

inline nlohmann::json RunConfig::to_json() const {
  return {{"dataset", dataset},
          {"synthetic_documents", synthetic_documents},
          {"vocab_capacity", vocab_capacity},
          {"sequence_length", sequence_length},
          {"model", model},
          {"embedding_dim", embedding_dim},
          {"cnn_filters", cnn_filters},
          {"cnn_kernel_width", cnn_kernel_width},
          {"cnn_dropout", cnn_dropout},
          {"cnn_activation", cnn_activation},
          {"lstm_hidden_units", lstm_hidden_units},
          {"lstm_dropout", lstm_dropout},
          {"lstm_recurrent_dropout", lstm_recurrent_dropout},
          {"epochs", epochs},
          {"batch_size", batch_size},
          {"learning_rate", learning_rate},
          {"methods", methods},
          {"ig_steps", ig_steps},
          {"shap_coalitions", shap_coalitions},
          {"lime_samples", lime_samples},
          {"lime_top_k", lime_top_k},
          {"lime_kernel_width", lime_kernel_width},
          {"lime_ridge", lime_ridge},
          {"eval_k", eval_k},
          {"eval_m", eval_m},
          {"eval_instances", eval_instances},
          {"class_mode", class_mode},
          {"instances", instances},
          {"seed", seed},
          {"record_time", record_time}};
}

namespace detail {

inline ConvActivation parse_activation(const std::string& s) {
  if (s == "relu") return ConvActivation::relu;
  if (s == "tanh") return ConvActivation::tanh;
  if (s == "identity") return ConvActivation::identity;
  throw ConfigError("cnn_activation must be relu, tanh or identity, got '" + s + "'");
}

inline ClassMode parse_class_mode(const std::string& s) {
  if (s == "predicted") return ClassMode::predicted;
  if (s == "positive") return ClassMode::positive;
  throw ConfigError("class_mode must be predicted or positive, got '" + s + "'");
}

}  // namespace detail

inline void RunConfig::validate() const {
  if (model != "cnn" && model != "lstm") throw ConfigError("model must be cnn or lstm, got '" + model + "'");
  if (sequence_length < 1) throw ConfigError("sequence_length must be >= 1");
  if (vocab_capacity < 1) throw ConfigError("vocab_capacity must be >= 1");
  if (dataset.empty()) throw ConfigError("dataset must be a CSV path or 'synthetic'");
  if (dataset == kSyntheticDataset && synthetic_documents < 10) {
    throw ConfigError("synthetic_documents must be >= 10");
  }
  if (embedding_dim < 1 || cnn_filters < 1 || lstm_hidden_units < 1) {
    throw ConfigError("model dimensions must be >= 1");
  }
  if (model == "cnn" && (cnn_kernel_width < 1 || cnn_kernel_width > sequence_length)) {
    throw ConfigError("cnn_kernel_width must be in [1, sequence_length]");
  }
  for (double p : {cnn_dropout, lstm_dropout, lstm_recurrent_dropout}) {
    if (!(p >= 0.0 && p < 1.0)) throw ConfigError("dropout rates must be in [0, 1)");
  }
  detail::parse_activation(cnn_activation);
  detail::parse_class_mode(class_mode);
  if (methods.empty()) throw ConfigError("methods must name at least one of ig, shap, lime");
  for (const auto& m : methods) parse_method(m);
  if (!(lime_kernel_width >= 0.0)) throw ConfigError("lime_kernel_width must be >= 0");
  if (out.empty()) throw ConfigError("out must name a directory");
}

inline TrainConfig train_config(const RunConfig& c) {
  TrainConfig t;
  t.epochs = c.epochs;
  t.batch_size = c.batch_size;
  t.learning_rate = c.learning_rate;
  t.seed = derive_seed(c.seed, "train." + c.model);
  return t;
}

inline ExplainerConfigs explainer_configs(const RunConfig& c) {
  ExplainerConfigs e;
  e.ig.steps = c.ig_steps;
  e.shap.n_coalitions = c.shap_coalitions;
  e.shap.seed = derive_seed(c.seed, "shap");
  e.lime.n_samples = c.lime_samples;
  e.lime.top_k = c.lime_top_k;
  if (c.lime_kernel_width > 0.0) e.lime.kernel_width = c.lime_kernel_width;
  e.lime.ridge = c.lime_ridge;
  e.lime.seed = derive_seed(c.seed, "lime");
  return e;
}

inline EvalConfig eval_config(const RunConfig& c) {
  EvalConfig e;
  e.k = c.eval_k;
  if (c.eval_m > 0) e.m = c.eval_m;
  e.n_instances = c.eval_instances;
  e.seed = derive_seed(c.seed, "eval");
  e.mode = detail::parse_class_mode(c.class_mode);
  return e;
}

inline AnyClassifier make_model(const RunConfig& c, std::size_t vocab_size) {
  const auto seed = derive_seed(c.seed, "init." + c.model);
  if (c.model == "cnn") {
    CnnConfig m;
    m.vocab_size = vocab_size;
    m.embedding_dim = c.embedding_dim;
    m.filters = c.cnn_filters;
    m.kernel_width = c.cnn_kernel_width;
    m.dropout = c.cnn_dropout;
    m.activation = detail::parse_activation(c.cnn_activation);
    return CnnClassifier(m, seed);
  }
  LstmConfig m;
  m.vocab_size = vocab_size;
  m.embedding_dim = c.embedding_dim;
  m.hidden_units = c.lstm_hidden_units;
  m.dropout = c.lstm_dropout;
  m.recurrent_dropout = c.lstm_recurrent_dropout;
  return LstmClassifier(m, seed);
}

// Output file names, relative to RunConfig::out.
namespace paths {
inline std::string vocabulary() { return "vocabulary.json"; }
inline std::string split_manifest() { return "split_manifest.json"; }
inline std::string manifest() { return "manifest.json"; }
inline std::string checkpoint(const std::string& kind) { return "model_" + kind + ".ckpt"; }
inline std::string history(const std::string& kind) { return "history_" + kind + ".json"; }
inline std::string explanation(const std::string& kind, std::size_t id, std::string_view method,
                               std::string_view ext) {
  return "explanations/" + kind + "_" + std::to_string(id) + "_" + std::string(method) + "." +
         std::string(ext);
}
inline std::string records(const std::string& kind) { return "records_" + kind + ".jsonl"; }
inline std::string metrics_csv(const std::string& kind) { return "metrics_" + kind + ".csv"; }
inline std::string metrics_md(const std::string& kind) { return "metrics_" + kind + ".md"; }
inline std::string eval_summary(const std::string& kind) { return "eval_" + kind + ".json"; }
}  // namespace paths

struct CommandResult {
  std::vector<std::string> files;     // relative to the output directory
  std::vector<std::string> warnings;  // per-instance failures that did not stop the run
};

namespace detail {

// Runs one stage, converting library errors into StageError.
template <class F>
auto run_stage(const std::string& stage, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const StageError&) {
    throw;
  } catch (const ConfigError& e) {
    throw StageError(stage, e.what(), true);
  } catch (const DataError& e) {
    throw StageError(stage, e.what(), true);
  } catch (const CheckpointError& e) {
    throw StageError(stage, e.what(), true);
  } catch (const std::exception& e) {
    throw StageError(stage, e.what(), false);
  }
}

inline void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
  write_text_file(path, j.dump(2) + "\n");
}

inline nlohmann::json read_json(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string() + " (run the earlier command first)");
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed JSON in " + path.string() + ": " + e.what());
  }
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

// Fingerprint of everything that determines the encoded split.
inline std::string data_fingerprint(const RunConfig& c) {
  const nlohmann::json j = {{"dataset", c.dataset},
                            {"synthetic_documents", c.synthetic_documents},
                            {"vocab_capacity", c.vocab_capacity},
                            {"sequence_length", c.sequence_length},
                            {"seed", c.seed}};
  return hex64(fnv1a64(j.dump()));
}

inline std::vector<LabeledExample> load_dataset(const RunConfig& c) {
  if (c.dataset == kSyntheticDataset) {
    SyntheticCorpusConfig s;
    s.documents = c.synthetic_documents;
    s.seed = derive_seed(c.seed, "corpus");
    return generate_synthetic_corpus(s);
  }
  if (!std::filesystem::exists(c.dataset)) throw DataError("dataset not found: " + c.dataset);
  return load_csv(c.dataset);
}

inline void record_in_manifest(const RunConfig& c, const std::string& command,
                               const CommandResult& r) {
  const auto path = c.out / paths::manifest();
  nlohmann::json m = std::filesystem::exists(path) ? read_json(path) : nlohmann::json::object();
  m["format"] = "xaitext.run-manifest";
  m["commands"][command] = {{"files", r.files}, {"warnings", r.warnings}};
  write_json(path, m);
}

struct PreparedData {
  Vocabulary vocab;
  DatasetSplit<EncodedExample> split;
};

// Re-encodes the dataset with the saved vocabulary and rebuilds the split
// from the manifest ids.
inline PreparedData load_prepared(const RunConfig& c) {
  PreparedData d;
  const auto manifest = read_json(c.out / paths::split_manifest());
  if (manifest.value("config_fingerprint", "") != data_fingerprint(c)) {
    throw ConfigError("split manifest was prepared with a different configuration; rerun prepare");
  }
  d.vocab = Vocabulary::load(c.out / paths::vocabulary());
  const auto corpus = load_dataset(c);
  const auto encoded = encode_corpus(corpus, d.vocab, c.sequence_length);
  auto pick = [&](const char* key) {
    std::vector<EncodedExample> out;
    for (const auto id : manifest.at(key).get<std::vector<std::size_t>>()) {
      if (id >= encoded.size()) throw DataError("split manifest id " + std::to_string(id) + " out of range");
      out.push_back(encoded[id]);
    }
    return out;
  };
  d.split.train = pick("train");
  d.split.validation = pick("validation");
  d.split.test = pick("test");
  d.split.seed = manifest.at("seed").get<std::uint64_t>();
  return d;
}

inline std::vector<EncodedExample> select_instances(const std::vector<EncodedExample>& test,
                                                    const std::string& selector, std::size_t count_default,
                                                    std::uint64_t seed, bool selector_given) {
  if (selector_given && selector.find(',') != std::string::npos) {
    std::vector<EncodedExample> out;
    std::stringstream ss(selector);
    std::string item;
    while (std::getline(ss, item, ',')) {
      if (item.empty()) continue;
      std::size_t id = 0;
      try {
        std::size_t used = 0;
        id = std::stoul(item, &used);
        if (used != item.size()) throw std::invalid_argument(item);
      } catch (const std::exception&) {
        throw ConfigError("instances: '" + item + "' is not an id");
      }
      const auto it = std::find_if(test.begin(), test.end(), [&](const auto& e) { return e.id == id; });
      if (it == test.end()) throw ConfigError("instances: id " + item + " is not in the test partition");
      out.push_back(*it);
    }
    if (out.empty()) throw ConfigError("instances: empty id list");
    return out;
  }
  std::size_t n = count_default;
  if (selector_given) {
    try {
      std::size_t used = 0;
      n = std::stoul(selector, &used);
      if (used != selector.size() || n == 0) throw std::invalid_argument(selector);
    } catch (const std::exception&) {
      throw ConfigError("instances must be a positive count or a comma-separated id list, got '" +
                        selector + "'");
    }
  }
  return sample_instances(std::span<const EncodedExample>(test), n, seed);
}

}  // namespace detail

inline CommandResult cmd_prepare(const RunConfig& c, std::ostream& log) {
  detail::run_stage("config", [&] { c.validate(); });
  const auto corpus = detail::run_stage("load", [&] { return detail::load_dataset(c); });
  const auto vocab = detail::run_stage("vocabulary", [&] {
    return Vocabulary::build(std::span<const LabeledExample>(corpus), c.vocab_capacity);
  });
  const auto encoded = detail::run_stage("encode", [&] {
    return encode_corpus(std::span<const LabeledExample>(corpus), vocab, c.sequence_length);
  });
  const auto split = detail::run_stage("split", [&] {
    return split_dataset(encoded, SplitRatios{}, derive_seed(c.seed, "split"));
  });
  CommandResult r;
  detail::run_stage("write", [&] {
    std::filesystem::create_directories(c.out);
    vocab.save(c.out / paths::vocabulary());
    auto ids = [](const std::vector<EncodedExample>& part) {
      std::vector<std::size_t> v;
      for (const auto& e : part) v.push_back(e.id);
      return v;
    };
    const nlohmann::json manifest = {
        {"format", "xaitext.split-manifest"},
        {"config_fingerprint", detail::data_fingerprint(c)},
        {"seed", split.seed},
        {"documents", corpus.size()},
        {"sequence_length", c.sequence_length},
        {"vocabulary_size", vocab.size()},
        {"sizes", {{"train", split.train.size()}, {"validation", split.validation.size()}, {"test", split.test.size()}}},
        {"train", ids(split.train)},
        {"validation", ids(split.validation)},
        {"test", ids(split.test)}};
    detail::write_json(c.out / paths::split_manifest(), manifest);
    r.files = {paths::vocabulary(), paths::split_manifest()};
    detail::record_in_manifest(c, "prepare", r);
  });
  log << "prepare: " << corpus.size() << " documents, vocabulary " << vocab.size() << " ids, split "
      << split.train.size() << "/" << split.validation.size() << "/" << split.test.size() << "\n";
  return r;
}

inline CommandResult cmd_train(const RunConfig& c, std::ostream& log) {
  detail::run_stage("config", [&] { c.validate(); });
  const auto data = detail::run_stage("load", [&] { return detail::load_prepared(c); });
  auto model = detail::run_stage("init", [&] { return make_model(c, data.vocab.size()); });
  const auto tc = train_config(c);
  const auto history = detail::run_stage("train", [&] {
    return std::visit([&](auto& m) { return train(m, data.split, tc); }, model);
  });
  // The test partition is only touched once training is complete.
  const auto test = detail::run_stage("evaluate", [&] {
    return std::visit(
        [&](const auto& m) { return evaluate(m, std::span<const EncodedExample>(data.split.test)); }, model);
  });
  CommandResult r;
  detail::run_stage("write", [&] {
    save_model(c.out / paths::checkpoint(c.model), model);
    nlohmann::json h = history.to_json();
    h["model"] = c.model;
    h["train_config"] = tc;
    h["test"] = {{"accuracy", test.accuracy}, {"loss", test.mean_loss}, {"examples", data.split.test.size()}};
    detail::write_json(c.out / paths::history(c.model), h);
    r.files = {paths::checkpoint(c.model), paths::history(c.model)};
    detail::record_in_manifest(c, "train." + c.model, r);
  });
  char line[128];
  std::snprintf(line, sizeof line, "train: %s test accuracy %.4f (loss %.4f) on %zu examples\n",
                c.model.c_str(), test.accuracy, test.mean_loss, data.split.test.size());
  log << line;
  return r;
}

namespace detail {

struct LoadedRun {
  PreparedData data;
  AnyClassifier model;
};

inline LoadedRun load_run(const RunConfig& c) {
  auto data = run_stage("load", [&] { return load_prepared(c); });
  auto model = run_stage("load", [&] { return load_any_model(c.out / paths::checkpoint(c.model)); });
  const bool is_cnn = std::holds_alternative<CnnClassifier>(model);
  if (is_cnn != (c.model == "cnn")) {
    throw StageError("load", "checkpoint architecture does not match model = " + c.model, true);
  }
  return {std::move(data), std::move(model)};
}

inline std::vector<ExplainMethod> methods(const RunConfig& c) {
  std::vector<ExplainMethod> out;
  for (const auto& m : c.methods) out.push_back(parse_method(m));
  return out;
}

}  // namespace detail

inline CommandResult cmd_explain(const RunConfig& c, std::ostream& log, bool instances_given = true) {
  detail::run_stage("config", [&] { c.validate(); });
  const auto run = detail::load_run(c);
  const auto selected = detail::run_stage("select", [&] {
    return detail::select_instances(run.data.split.test, c.instances, 1, derive_seed(c.seed, "explain"),
                                    instances_given);
  });
  const auto ecfg = explainer_configs(c);
  CommandResult r;
  detail::run_stage("write", [&] { std::filesystem::create_directories(c.out / "explanations"); });
  for (const auto& ex : selected) {
    for (const auto method : detail::methods(c)) {
      const auto name = method_name(method);
      AttributionVector attr;
      try {
        attr = std::visit([&](const auto& m) { return explain(m, ex.sequence, method, ecfg); }, run.model);
      } catch (const Error& e) {
        const std::string msg = "instance " + std::to_string(ex.id) + " " + std::string(name) + ": " + e.what();
        log << "explain: skipped " << msg << "\n";
        r.warnings.push_back(msg);
        continue;
      }
      const double p = std::visit([&](const auto& m) { return m.predict_positive(ex.sequence); }, run.model);
      const std::uint64_t seed = method == ExplainMethod::shap ? ecfg.shap.seed
                                 : method == ExplainMethod::lime ? ecfg.lime.seed
                                                                 : 0;
      detail::run_stage("write", [&] {
        auto record = attribution_record(attr, ex.sequence, run.data.vocab, c.model, seed,
                                         ecfg.for_method(method), c.record_time);
        record["instance_id"] = ex.id;
        record["label"] = ex.label;
        record["p_positive"] = p;
        const auto json_path = paths::explanation(c.model, ex.id, name, "json");
        const auto html_path = paths::explanation(c.model, ex.id, name, "html");
        detail::write_json(c.out / json_path, record);
        HeatmapCaption cap{std::string(name), c.model,
                           "instance " + std::to_string(ex.id) + ", label " + std::to_string(ex.label) +
                               ", P(true) = " + fixed(p, 4)};
        write_text_file(c.out / html_path, render_heatmap(ex.sequence, attr, run.data.vocab, cap));
        r.files.push_back(json_path);
        r.files.push_back(html_path);
      });
    }
  }
  detail::run_stage("write", [&] { detail::record_in_manifest(c, "explain." + c.model, r); });
  log << "explain: " << r.files.size() / 2 << " explanations for " << selected.size() << " instances\n";
  return r;
}

inline CommandResult cmd_eval(const RunConfig& c, std::ostream& log, bool instances_given = false) {
  detail::run_stage("config", [&] { c.validate(); });
  const auto run = detail::load_run(c);
  const auto ev_cfg = eval_config(c);
  const auto selected = detail::run_stage("select", [&] {
    return detail::select_instances(run.data.split.test, c.instances, ev_cfg.n_instances, ev_cfg.seed,
                                    instances_given);
  });
  const auto ecfg = explainer_configs(c);
  std::vector<AggregateRow> rows;
  std::string jsonl;
  nlohmann::json summary = {{"model", c.model}, {"eval_config", ev_cfg}, {"instances", selected.size()}};
  CommandResult r;
  for (const auto method : detail::methods(c)) {
    const auto name = std::string(method_name(method));
    const auto result = detail::run_stage("eval", [&] {
      return std::visit(
          [&](const auto& m) {
            return evaluate_explainer(
                m, std::span<const EncodedExample>(selected),
                [&](const TokenSequence& s) { return explain(m, s, method, ecfg); }, name, ev_cfg);
          },
          run.model);
    });
    for (const auto& rec : result.records) jsonl += metrics_record_json(rec, c.record_time).dump() + "\n";
    for (const auto& f : result.failures) {
      const std::string msg = "instance " + std::to_string(f.instance_id) + " " + name + ": " + f.message;
      log << "eval: excluded " << msg << "\n";
      r.warnings.push_back(msg);
    }
    auto row = result.aggregate;
    if (!c.record_time) row.time_s = 0.0;
    summary["methods"][name] = {{"evaluated", row.evaluated}, {"excluded", row.excluded}, {"no_flip", row.no_flip}};
    if (row.evaluated > 0) rows.push_back(row);
  }
  if (rows.empty()) throw StageError("eval", "every explanation failed; no aggregate rows", false);
  detail::run_stage("write", [&] {
    write_text_file(c.out / paths::records(c.model), jsonl);
    write_text_file(c.out / paths::metrics_csv(c.model), render_metrics_table(rows, TableFormat::csv));
    write_text_file(c.out / paths::metrics_md(c.model), render_metrics_table(rows, TableFormat::markdown));
    detail::write_json(c.out / paths::eval_summary(c.model), summary);
    r.files = {paths::records(c.model), paths::metrics_csv(c.model), paths::metrics_md(c.model),
               paths::eval_summary(c.model)};
    detail::record_in_manifest(c, "eval." + c.model, r);
  });
  log << "eval: " << c.model << " over " << selected.size() << " instances\n"
      << render_metrics_table(rows, TableFormat::markdown);
  return r;
}

}  // namespace xaitext
