// canids: generate | ingest | train | evaluate | detect | report
//
// Exit codes: 0 ok, 1 usage, 2 data error, 3 training failure.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "canids/experiment.hpp"
#include "canids/frame.hpp"
#include "canids/metrics.hpp"
#include "canids/monitor.hpp"
#include "canids/pipeline.hpp"
#include "canids/traffic.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace canids;

namespace {

enum Exit { kOk = 0, kUsage = 1, kData = 2, kTraining = 3 };

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Values as given on the command line; unset members fall back to the config file.
struct Flags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_dir;
  std::string features;
  std::string models;
  std::vector<std::string> hp;

  std::string scenario;
  std::string data;
  std::vector<std::string> attack;
  std::vector<std::string> normal;
  bool matrices = false;
  std::string model;
  std::string input = "-";
  std::string alerts;
  std::optional<double> threshold;
  std::string report;
  bool csv = false;
};

// Effective settings after merging config file and flags (flags win).
struct RunConfig {
  std::uint64_t seed = 1;
  bool seed_given = false;
  fs::path out_dir = "out";
  std::string features = "both";
  std::vector<ModelKind> models{kHeadlineModels.begin(), kHeadlineModels.end()};
  Hyperparams hp;
  EvalOptions eval;
  std::optional<json> scenario;
  std::string data;
  LocalClock clock;
  double threshold = 0.5;
};

json read_json_file(const std::string& path, const char* what) {
  std::ifstream in(path);
  if (!in) throw DataError(std::string("cannot open ") + what + " " + path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw DataError(std::string(what) + " " + path + ": " + e.what());
  }
}

std::vector<ModelKind> parse_models(const std::string& list) {
  std::vector<ModelKind> out;
  std::stringstream ss(list);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    auto k = model_from_name(item);
    if (!k) throw UsageError("unknown model '" + item + "' (expected logreg, svm, tree, rf, gboost, ffnn, lstm)");
    if (std::find(out.begin(), out.end(), *k) == out.end()) out.push_back(*k);
  }
  if (out.empty()) throw UsageError("--models needs at least one model");
  return out;
}

std::vector<FeatureMode> feature_modes(const std::string& f) {
  if (f == "with") return {FeatureMode::With};
  if (f == "without") return {FeatureMode::Without};
  return {FeatureMode::With, FeatureMode::Without};
}

// "--hp forest.trees=50" becomes {"forest": {"trees": 50}}.
json hp_overrides(const std::vector<std::string>& items) {
  json out = json::object();
  for (const auto& it : items) {
    const auto eq = it.find('=');
    const auto dot = it.find('.');
    if (eq == std::string::npos || dot == std::string::npos || dot > eq) {
      throw UsageError("--hp expects section.key=value, got '" + it + "'");
    }
    const auto value = it.substr(eq + 1);
    json v = json::parse(value, nullptr, false);
    if (v.is_discarded()) v = value;
    out[it.substr(0, dot)][it.substr(dot + 1, eq - dot - 1)] = v;
  }
  return out;
}

RunConfig resolve(const Flags& f) {
  RunConfig rc;
  json cfg = json::object();
  if (!f.config.empty()) cfg = read_json_file(f.config, "config");
  try {
    rc.seed_given = f.seed || cfg.contains("seed");
    rc.seed = f.seed ? *f.seed : cfg.value("seed", std::uint64_t{1});
    rc.out_dir = f.out_dir ? *f.out_dir : cfg.value("out_dir", std::string("out"));
    rc.features = !f.features.empty() ? f.features : cfg.value("features", std::string("both"));
    if (rc.features != "with" && rc.features != "without" && rc.features != "both") {
      throw UsageError("features must be with, without or both");
    }
    if (!f.models.empty()) {
      rc.models = parse_models(f.models);
    } else if (cfg.contains("models")) {
      std::string joined;
      for (const auto& m : cfg.at("models")) joined += m.get<std::string>() + ",";
      rc.models = parse_models(joined);
    }
    if (cfg.contains("hyperparams")) rc.hp = hyperparams_from_json(cfg.at("hyperparams"));
    rc.hp = hyperparams_from_json(hp_overrides(f.hp), rc.hp);
    rc.hp.validate();

    const json ev = cfg.value("evaluation", json::object());
    rc.eval.seed = rc.seed;
    rc.eval.test_fraction = ev.value("test_fraction", 0.2);
    rc.eval.max_train_rows = ev.value("max_train_rows", std::size_t{0});
    rc.eval.max_test_rows = ev.value("max_test_rows", std::size_t{0});
    rc.eval.cv_k = ev.value("cv_k", std::size_t{3});
    rc.eval.cv_repeats = ev.value("cv_repeats", std::size_t{1});
    rc.eval.cv_rows = ev.value("cv_rows", std::size_t{30000});
    rc.eval.prep.smote = ev.value("smote", false);
    rc.eval.prep.smote_k = ev.value("smote_k", std::size_t{5});
    rc.eval.prep.seed = rc.seed;
    if (!(rc.eval.test_fraction > 0.0 && rc.eval.test_fraction < 1.0)) {
      throw UsageError("evaluation.test_fraction must be in (0, 1)");
    }
    if (rc.eval.cv_repeats > 0 && rc.eval.cv_k < 2) throw UsageError("evaluation.cv_k must be >= 2");

    if (!f.scenario.empty()) rc.scenario = read_json_file(f.scenario, "scenario");
    else if (cfg.contains("scenario")) rc.scenario = cfg.at("scenario");
    rc.clock.utc_offset_seconds = cfg.value("utc_offset_seconds", std::int64_t{0});
    rc.data = !f.data.empty() ? f.data : cfg.value("data", std::string{});
    rc.threshold = f.threshold ? *f.threshold : cfg.value("alert_threshold", 0.5);
    if (!(rc.threshold > 0.0 && rc.threshold <= 1.0)) throw UsageError("threshold must be in (0, 1]");
  } catch (const json::exception& e) {
    throw DataError(std::string("config: ") + e.what());
  }
  return rc;
}

fs::path dataset_path(const RunConfig& rc) { return rc.data.empty() ? rc.out_dir / "dataset.csv" : fs::path(rc.data); }

fs::path model_path(const RunConfig& rc, ModelKind k, FeatureMode m) {
  return rc.out_dir / "models" / (std::string(model_name(k)) + "_" + std::string(feature_mode_name(m)) + ".json");
}

void ensure_dir(const fs::path& p) {
  std::error_code ec;
  fs::create_directories(p, ec);
  if (ec) throw DataError("cannot create directory " + p.string() + ": " + ec.message());
}

void print_counts(std::ostream& os, std::span<const CanFrame> frames) {
  std::array<std::size_t, kNumClasses> c{};
  for (const auto& f : frames) ++c[static_cast<std::size_t>(ordinal(f.label))];
  os << "rows " << frames.size() << '\n';
  for (auto l : kAllLabels) os << "  " << label_name(l) << ' ' << c[static_cast<std::size_t>(ordinal(l))] << '\n';
}

void write_frames(const fs::path& path, std::span<const CanFrame> frames) {
  ensure_dir(path.parent_path().empty() ? fs::path(".") : path.parent_path());
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  write_unified_csv(out, frames);
  if (!out) throw DataError("write failed: " + path.string());
}

std::vector<CanFrame> load_dataset(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open dataset " + path.string());
  auto r = read_unified_csv(in);
  if (!r.errors.empty()) {
    const auto& e = r.errors.front();
    throw DataError(path.string() + ": " + std::to_string(r.errors.size()) + " malformed rows, first at line " +
                    std::to_string(e.line_number()) + ": " + e.what());
  }
  for (const auto& w : r.warnings) std::cerr << "warning: " << w << '\n';
  auto cleaned = clean(std::span<const CanFrame>(r.frames));
  if (cleaned.frames.empty()) throw DataError(path.string() + ": no usable rows");
  return std::move(cleaned.frames);
}

// ---- subcommands ---------------------------------------------------------------------

int cmd_generate(const RunConfig& rc) {
  ExperimentConfig cfg = rc.scenario ? experiment_config_from_json(*rc.scenario) : default_experiment_config(rc.seed);
  if (!rc.scenario || rc.seed_given) cfg.reseed(rc.seed);
  const auto frames = build_experiment_dataset(cfg);
  const auto path = rc.out_dir / "dataset.csv";
  write_frames(path, frames);
  std::cout << "wrote " << path.string() << '\n';
  print_counts(std::cout, frames);
  return kOk;
}

int cmd_ingest(const RunConfig& rc, const Flags& f) {
  if (f.attack.empty() && f.normal.empty()) throw UsageError("ingest needs --attack and/or --normal inputs");
  struct Input {
    std::string path;
    std::optional<ClassLabel> label;
  };
  std::vector<Input> inputs;
  for (const auto& a : f.attack) {
    const auto eq = a.find('=');
    if (eq == std::string::npos) throw UsageError("--attack expects LABEL=PATH, got '" + a + "'");
    auto label = label_from_name(a.substr(0, eq));
    if (!label || *label == ClassLabel::Normal) throw UsageError("--attack label must be DoS, Fuzzy, RpmSpoof or GearSpoof");
    inputs.push_back({a.substr(eq + 1), label});
  }
  for (const auto& n : f.normal) inputs.push_back({n, std::nullopt});
  for (const auto& in : inputs) {
    if (!fs::is_regular_file(in.path)) throw DataError("input not found: " + in.path);
  }

  std::vector<CanFrame> all;
  std::size_t errors = 0;
  for (const auto& in : inputs) {
    std::ifstream is(in.path);
    if (!is) throw DataError("cannot open " + in.path);
    auto r = in.label ? read_attack_csv(is, *in.label) : read_normal_log(is);
    for (const auto& e : r.errors) std::cerr << in.path << ":" << e.line_number() << ": " << e.what() << '\n';
    for (const auto& w : r.warnings) std::cerr << in.path << ": warning: " << w << '\n';
    errors += r.errors.size();
    all.insert(all.end(), r.frames.begin(), r.frames.end());
  }
  auto cleaned = clean(std::span<const CanFrame>(all));
  detail::sort_frames(cleaned.frames);
  if (cleaned.frames.empty()) throw DataError("no usable frames in the inputs");
  const auto path = rc.out_dir / "dataset.csv";
  write_frames(path, cleaned.frames);
  std::cout << "wrote " << path.string() << " (" << errors << " malformed lines skipped, "
            << cleaned.report.removed << " rows removed)\n";
  print_counts(std::cout, cleaned.frames);
  if (f.matrices) {
    const auto pd = prepare_data(cleaned.frames, rc.clock);
    for (auto mode : {FeatureMode::With, FeatureMode::Without}) {
      const auto mp = rc.out_dir / ("features_" + std::string(feature_mode_name(mode)) + ".csv");
      std::ofstream out(mp);
      if (!out) throw DataError("cannot write " + mp.string());
      write_matrix_csv(out, pd.get(mode));
    }
  }
  return kOk;
}

int cmd_train(const RunConfig& rc) {
  const auto frames = load_dataset(dataset_path(rc));
  const auto pd = prepare_data(frames, rc.clock);
  const auto split = make_holdout(pd.with_time, rc.eval);
  ensure_dir(rc.out_dir / "models");
  json log = json::array();
  bool failed = false;
  for (auto mode : feature_modes(rc.features)) {
    const auto& data = pd.get(mode);
    for (auto kind : rc.models) {
      json entry{{"model", model_name(kind)}, {"features", feature_mode_name(mode)}};
      try {
        const auto fp = fit_pipeline(kind, rc.hp, data, split.train, rc.eval.prep);
        const auto path = model_path(rc, kind, mode);
        save_pipeline(fp, path.string());
        const auto& info = fp.model.info();
        entry.update({{"status", "ok"}, {"file", path.filename().string()}, {"seed", info.seed},
                      {"epochs", info.epochs_run}, {"final_loss", info.final_loss},
                      {"train_rows", split.train.size()}, {"smote_rows", fp.synthesized}});
        std::cout << model_name(kind) << " (" << feature_mode_name(mode) << " time features): epochs "
                  << info.epochs_run << ", final loss " << info.final_loss << '\n';
      } catch (const TrainingError& e) {
        failed = true;
        entry.update({{"status", "failed"}, {"message", e.what()}});
        std::cerr << model_name(kind) << " (" << feature_mode_name(mode) << "): training failed: " << e.what() << '\n';
      }
      log.push_back(entry);
    }
  }
  std::ofstream out(rc.out_dir / "training_log.json");
  out << json{{"seed", rc.seed}, {"runs", log}}.dump(2) << '\n';
  return failed ? kTraining : kOk;
}

json report_metadata(const RunConfig& rc, const Dataset& data, const HoldoutSplit& split) {
  const auto counts = data.class_counts();
  json cc = json::object();
  for (auto l : kAllLabels) cc[std::string(label_name(l))] = counts[static_cast<std::size_t>(ordinal(l))];
  return {{"seed", rc.seed},
          {"dataset_rows", data.size()},
          {"class_counts", cc},
          {"test_fraction", rc.eval.test_fraction},
          {"train_rows", split.train.size()},
          {"test_rows", split.test.size()},
          {"accuracy_source", "held-out stratified test split"},
          {"cv", {{"scheme", "repeated stratified k-fold"}, {"k", rc.eval.cv_k}, {"repeats", rc.eval.cv_repeats},
                  {"rows", rc.eval.cv_rows}}},
          {"smote", rc.eval.prep.smote},
          {"utc_offset_seconds", rc.clock.utc_offset_seconds}};
}

int cmd_evaluate(const RunConfig& rc) {
  // Validate every model file up front so a bad path fails before any work.
  std::map<std::pair<ModelKind, FeatureMode>, FittedPipeline> loaded;
  const auto modes = feature_modes(rc.features);
  for (auto mode : modes) {
    for (auto kind : rc.models) {
      const auto p = model_path(rc, kind, mode);
      if (!fs::exists(p)) {
        std::cerr << "warning: " << p.string() << " missing; block marked skipped\n";
        continue;
      }
      loaded.emplace(std::pair{kind, mode}, load_pipeline(p.string()));
    }
  }
  if (loaded.empty()) throw DataError("no model files found under " + (rc.out_dir / "models").string());

  const auto frames = load_dataset(dataset_path(rc));
  const auto pd = prepare_data(frames, rc.clock);
  const auto split = make_holdout(pd.with_time, rc.eval);
  std::vector<std::string> names;
  for (auto k : rc.models) names.emplace_back(model_name(k));
  auto report = build_report(report_metadata(rc, pd.with_time, split), names);
  for (auto& b : report.results) {
    if (std::find(modes.begin(), modes.end(), b.features) == modes.end()) b.message = "feature mode not requested";
  }

  bool failed = false;
  for (auto mode : modes) {
    const auto& data = pd.get(mode);
    const auto truth = gather(data.y, split.test);
    for (auto kind : rc.models) {
      auto it = loaded.find({kind, mode});
      if (it == loaded.end()) {
        ResultBlock b;
        b.model = std::string(model_name(kind));
        b.features = mode;
        b.message = "model file missing";
        add_result(report, std::move(b));
        continue;
      }
      const auto& fp = it->second;
      if (fp.model.kind() != kind || fp.model.columns() != data.column_names) {
        throw DataError(model_path(rc, kind, mode).string() + " does not match the requested model or feature set");
      }
      const auto proba = score_rows(fp, data, split.test);
      auto block = make_result(std::string(model_name(kind)), mode, truth, proba, predict_from_proba(proba));
      if (rc.eval.cv_repeats > 0) {
        try {
          const auto rows = stratified_subsample(data.y, split.train, rc.eval.cv_rows, rc.seed + 3);
          block.cv = cross_validate(kind, rc.hp, data, rows, rc.eval.cv_k, rc.eval.cv_repeats, rc.seed, rc.eval.prep);
        } catch (const TrainingError& e) {
          failed = true;
          block.message = std::string("cross-validation failed: ") + e.what();
        }
      }
      std::cout << model_name(kind) << " (" << feature_mode_name(mode) << " time features): accuracy "
                << block.metrics.accuracy << ", macro F1 " << block.metrics.macro_f1 << ", macro AUC "
                << block.roc.macro_auc << '\n';
      add_result(report, std::move(block));
    }
  }

  const auto rp = rc.out_dir / "report.json";
  std::ofstream(rp) << report_to_json(report).dump(2) << '\n';
  std::ofstream roc(rc.out_dir / "roc.csv");
  write_roc_csv(roc, report);
  std::ofstream cm(rc.out_dir / "confusion.csv");
  write_confusion_csv(cm, report);
  std::cout << "wrote " << rp.string() << ", roc.csv, confusion.csv\n";
  return failed ? kTraining : kOk;
}

int cmd_detect(const RunConfig& rc, const Flags& f) {
  fs::path mp;
  if (!f.model.empty()) {
    mp = f.model;
  } else {
    const auto mode = rc.features == "without" ? FeatureMode::Without : FeatureMode::With;
    mp = model_path(rc, rc.models.front(), mode);
  }
  auto fp = load_pipeline(mp.string());
  std::ifstream file;
  std::istream* in = &std::cin;
  if (f.input != "-") {
    file.open(f.input);
    if (!file) throw DataError("cannot open input " + f.input);
    in = &file;
  }
  std::ofstream alert_file;
  std::ostream* sink = &std::cout;
  if (!f.alerts.empty()) {
    alert_file.open(f.alerts);
    if (!alert_file) throw DataError("cannot write " + f.alerts);
    sink = &alert_file;
  }
  DetectorState state(std::move(fp.model), std::move(fp.scaler), rc.clock, rc.threshold);
  const auto summary = run_stream(*in, state, sink);
  std::cout << summary_to_json(summary).dump() << '\n';
  return kOk;
}

int cmd_report(const RunConfig& rc, const Flags& f) {
  const fs::path path = f.report.empty() ? rc.out_dir / "report.json" : fs::path(f.report);
  const auto report = report_from_json(read_json_file(path.string(), "report"));
  auto cell = [](const ResultBlock* b, auto get) -> std::string {
    if (!b || b->status != "ok") return b ? b->status : "absent";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4f", get(*b));
    return buf;
  };
  std::vector<std::string> seen;
  for (const auto& b : report.results) {
    if (std::find(seen.begin(), seen.end(), b.model) == seen.end()) seen.push_back(b.model);
  }
  struct Column {
    const char* title;
    double (*get)(const ResultBlock&);
  };
  const Column cols[] = {
      {"accuracy", [](const ResultBlock& b) { return b.metrics.accuracy; }},
      {"macro F1", [](const ResultBlock& b) { return b.metrics.macro_f1; }},
      {"macro AUC", [](const ResultBlock& b) { return b.roc.macro_auc; }},
      {"CV mean", [](const ResultBlock& b) { return b.cv ? b.cv->mean() : 0.0; }},
  };
  for (const auto& c : cols) {
    std::printf("%-10s %12s %12s\n", c.title, "without-time", "with-time");
    for (const auto& m : seen) {
      std::printf("%-10s %12s %12s\n", m.c_str(), cell(report.find(m, FeatureMode::Without), c.get).c_str(),
                  cell(report.find(m, FeatureMode::With), c.get).c_str());
    }
    std::printf("\n");
  }
  if (f.csv) {
    std::ofstream roc(rc.out_dir / "roc.csv");
    write_roc_csv(roc, report);
    std::ofstream cm(rc.out_dir / "confusion.csv");
    write_confusion_csv(cm, report);
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"CAN bus intrusion detection: data generation, training, evaluation and streaming detection"};
  app.require_subcommand(1);
  app.fallthrough();
  Flags f;
  app.add_option("--config", f.config, "JSON config file; command-line flags take precedence")->check(CLI::ExistingFile);
  app.add_option("--seed", f.seed, "Random seed (default 1)");
  app.add_option("--out-dir", f.out_dir, "Output directory (default ./out)");
  app.add_option("--features", f.features, "Time-feature mode (default both)")
      ->check(CLI::IsMember({"with", "without", "both"}));
  app.add_option("--models", f.models, "Comma-separated models: logreg,svm,rf,gboost,ffnn,lstm (tree also accepted)");
  app.add_option("--hp", f.hp, "Hyperparameter override section.key=value, e.g. forest.trees=50");

  auto* gen = app.add_subcommand("generate", "Write the synthetic experiment dataset (unified CSV)");
  gen->add_option("--scenario", f.scenario, "Experiment scenario JSON")->check(CLI::ExistingFile);

  auto* ing = app.add_subcommand("ingest", "Merge attack CSVs and normal candump logs into one dataset");
  ing->add_option("--attack", f.attack, "LABEL=PATH of a Car-Hacking style attack CSV (repeatable)");
  ing->add_option("--normal", f.normal, "Path of a candump style normal log (repeatable)");
  ing->add_flag("--matrices", f.matrices, "Also write the with/without-time feature matrices");

  auto* trn = app.add_subcommand("train", "Train models on the training split");
  trn->add_option("--data", f.data, "Dataset CSV (default <out-dir>/dataset.csv)")->check(CLI::ExistingFile);

  auto* evl = app.add_subcommand("evaluate", "Evaluate trained models and write the report");
  evl->add_option("--data", f.data, "Dataset CSV (default <out-dir>/dataset.csv)")->check(CLI::ExistingFile);

  auto* det = app.add_subcommand("detect", "Run the streaming detector over a frame stream");
  det->add_option("--model", f.model, "Model file (default <out-dir>/models/<first model>_with.json)");
  det->add_option("--input", f.input, "Unified CSV or candump lines; '-' reads stdin");
  det->add_option("--alerts", f.alerts, "Write alerts here instead of stdout");
  det->add_option("--threshold", f.threshold, "Alert threshold on the attack-class probability (default 0.5)");

  auto* rep = app.add_subcommand("report", "Print the side-by-side tables of a report");
  rep->add_option("--report", f.report, "Report JSON (default <out-dir>/report.json)");
  rep->add_flag("--csv", f.csv, "Re-export roc.csv and confusion.csv into the output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  try {
    const RunConfig rc = resolve(f);
    if (gen->parsed()) return cmd_generate(rc);
    if (ing->parsed()) return cmd_ingest(rc, f);
    if (trn->parsed()) return cmd_train(rc);
    if (evl->parsed()) return cmd_evaluate(rc);
    if (det->parsed()) return cmd_detect(rc, f);
    if (rep->parsed()) return cmd_report(rc, f);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kUsage;
  } catch (const TrainingError& e) {
    std::cerr << "training failure: " << e.what() << '\n';
    return kTraining;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kData;
  }
  return kUsage;
}
