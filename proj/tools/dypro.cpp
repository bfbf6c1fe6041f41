// dypro command-line front end.

#include <cmath>
#include <cstdio>
#include <stdexcept>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "dypro/cohort.hpp"
#include "dypro/config.hpp"
#include "dypro/crossval.hpp"
#include "dypro/error.hpp"
#include "dypro/random.hpp"
#include "dypro/training.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace dypro;

namespace {

enum ExitCode { kOk = 0, kUsage = 1, kData = 2, kTraining = 3 };

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string variant;
  std::string curves;
  std::string backbone;
  Eigen::Index latent = 8;
  Eigen::Index horizon = 4;
};

RunConfig resolve_config(const Options& o) {
  RunConfig c = o.config.empty() ? parse_run_config(json::object()) : load_run_config(o.config);
  if (o.seed) c.seed = *o.seed;
  if (!o.out.empty()) c.output_dir = o.out;
  return c;
}

Cohort cohort_of(const RunConfig& c) {
  if (c.cohort_path.empty()) throw ConfigError("paths.cohort is not set");
  return load_cohort(c.cohort_path);
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
}

void print_summary(const CvReport& r) {
  for (const auto& [task, table] : r.aggregate) {
    std::cout << task << ":";
    for (const char* m : kMetricNames) {
      const Aggregate& a = table.at(m);
      std::cout << ' ' << m << '=' << format_number(a.mean) << "+-" << format_number(a.std);
    }
    std::cout << '\n';
  }
  for (const auto& [task, ci] : r.cindex_ci) std::cout << ci.text << '\n';
  if (r.failed_folds > 0) {
    std::cout << r.failed_folds << " of " << r.folds.size() << " folds failed\n";
  }
}

int finish_run(const RunConfig& c, const CrossvalRun& run) {
  emit_report(run, c.model.bins, c.output_dir);
  print_summary(run.report);
  std::cout << "wrote " << (c.output_dir / "report.json").string() << '\n';
  return too_many_failures(run.report) ? kTraining : kOk;
}

int cmd_simulate(const Options& o) {
  const RunConfig c = resolve_config(o);
  const SimulatedCohort sim = simulate_cohort(c.simulate.n, c.seed, c.simulate.scenario);
  fs::create_directories(c.output_dir);
  save_cohort(sim.cohort, c.output_dir / "cohort.json");
  std::ostringstream groups;
  groups << "patient_id,group\n";
  for (std::size_t i = 0; i < sim.group.size(); ++i) {
    groups << sim.cohort.patients[i].id << ',' << sim.group[i] << '\n';
  }
  write_text(c.output_dir / "groups.csv", groups.str());
  std::printf("oracle C-index: OS %.4f, DFS %.4f\n", oracle_cindex(sim, Task::Os),
              oracle_cindex(sim, Task::Dfs));
  std::cout << "wrote " << (c.output_dir / "cohort.json").string() << '\n';
  return kOk;
}

int cmd_train(const Options& o) {
  const RunConfig c = resolve_config(o);
  const Cohort cohort = cohort_of(c);
  const auto os = cohort.labels(Task::Os);
  const auto dfs = cohort.labels(Task::Dfs);
  std::vector<std::size_t> everyone(cohort.patients.size());
  for (std::size_t i = 0; i < everyone.size(); ++i) everyone[i] = i;
  const Holdout split = stratified_holdout(everyone, os, dfs, derive_seed(c.seed, {0x7a1u}));

  fs::create_directories(c.output_dir);
  std::ofstream log(c.output_dir / "train_log.txt");
  log << "# epoch train_loss val_loss lr\n";
  DyProModel model(c.model, cohort.schema, derive_seed(c.seed, {1}));
  const TrainResult result =
      train_model(model, cohort, split.train, split.validation, c.train,
                  derive_seed(c.seed, {2}), &log);

  std::vector<const PatientGraph*> graphs;
  for (const auto& p : cohort.patients) graphs.push_back(&p.graph);
  const Predictions pred = model.predict(graphs, c.train.batch_size);
  OutOfFold all;
  for (const auto& p : cohort.patients) all.patient_ids.push_back(p.id);
  all.os_hazards = pred.os_hazards;
  all.dfs_hazards = pred.dfs_hazards;
  all.predicted.assign(cohort.patients.size(), true);
  write_text(c.output_dir / "curves.csv", curves_csv(all, c.model.bins));

  const json summary = {{"epochs", result.epochs.size()},
                        {"best_epoch", result.best_epoch},
                        {"best_val_loss", result.best_val_loss},
                        {"stopped_early", result.stopped_early},
                        {"config", to_json(c)}};
  write_text(c.output_dir / "train_summary.json", summary.dump(2) + "\n");
  std::printf("trained %zu epochs, best validation loss %.6g at epoch %zu\n",
              result.epochs.size(), result.best_val_loss, result.best_epoch);
  return kOk;
}

int cmd_crossval(const Options& o) {
  const RunConfig c = resolve_config(o);
  const Cohort cohort = cohort_of(c);
  fs::create_directories(c.output_dir);
  std::ofstream log(c.output_dir / "train_log.txt");
  return finish_run(c, run_crossval(c, cohort, &log));
}

int cmd_ablate(const Options& o) {
  const auto variant = ablation_from_name(o.variant);
  if (!variant) throw ConfigError("unknown ablation variant '" + o.variant + "'");
  const RunConfig c = resolve_config(o);
  const Cohort cohort = cohort_of(c);
  fs::create_directories(c.output_dir);
  std::ofstream log(c.output_dir / "train_log.txt");
  return finish_run(c, run_ablation(c, cohort, *variant, &log));
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        field += '"';
        ++i;
      } else if (ch == '"') {
        quoted = false;
      } else {
        field += ch;
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      fields.push_back(std::move(field));
      field.clear();
    } else {
      field += ch;
    }
  }
  fields.push_back(std::move(field));
  return fields;
}

int cmd_evaluate(const Options& o) {
  const RunConfig c = resolve_config(o);
  const Cohort cohort = cohort_of(c);
  const fs::path curves_path = o.curves.empty() ? c.output_dir / "curves.csv" : fs::path(o.curves);
  std::ifstream in(curves_path);
  if (!in) throw DataError("cannot open " + curves_path.string());

  const auto k_bins = static_cast<Eigen::Index>(c.model.bins.size());
  std::map<std::string, std::map<std::string, Eigen::VectorXd>> hazards;  // task -> id -> curve
  std::string line;
  std::getline(in, line);
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() != 5) {
      throw DataError(curves_path.string() + ":" + std::to_string(line_no) +
                      ": expected 5 fields");
    }
    const std::string where = curves_path.string() + ":" + std::to_string(line_no);
    long bin = 0;
    double hazard = 0.0;
    try {
      bin = std::stol(f[2]);
      hazard = std::stod(f[3]);
    } catch (const std::logic_error&) {
      throw DataError(where + ": malformed number");
    }
    if (bin < 0 || bin >= k_bins) throw DataError(where + ": bin out of range");
    auto& curve = hazards[f[1]][f[0]];
    if (curve.size() == 0) curve = Eigen::VectorXd::Constant(k_bins, std::nan(""));
    curve(bin) = hazard;
  }

  json out = json::object();
  for (Task task : kReportTasks) {
    const auto& by_id = hazards[task_name(task)];
    std::vector<SurvivalLabel> labels;
    std::vector<Eigen::VectorXd> rows;
    for (const auto& p : cohort.patients) {
      auto it = by_id.find(p.id);
      if (it == by_id.end()) continue;
      if (!it->second.allFinite()) throw DataError("incomplete curve for patient " + p.id);
      rows.push_back(it->second);
      labels.push_back(task == Task::Os ? p.os : p.dfs);
    }
    if (rows.empty()) {
      throw DataError(std::string("no ") + task_name(task) + " curves in " +
                      curves_path.string());
    }
    ad::Matrix h(static_cast<Eigen::Index>(rows.size()), k_bins);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      h.row(static_cast<Eigen::Index>(i)) = rows[i].transpose();
    }

    const TaskEvaluation ev = evaluate_task(h, labels, c.model.bins, c.eval, c.tau());
    json metrics = json::object();
    std::cout << task_name(task) << " (" << rows.size() << " patients):";
    for (std::size_t m = 0; m < kMetricNames.size(); ++m) {
      metrics[kMetricNames[m]] = ev.row[m] ? json(*ev.row[m]) : json(nullptr);
      std::cout << ' ' << kMetricNames[m] << '=' << format_number(ev.row[m]);
    }
    std::cout << '\n';
    try {
      const CiRecord ci = cindex_interval(h, labels, c.model.bins, task, c.eval.bootstrap,
                                          c.eval.level, derive_seed(c.seed, {0xe7a1u}));
      metrics["cindex_ci"] = {{"lo", ci.lo}, {"hi", ci.hi}, {"level", ci.level}, {"text", ci.text}};
      std::cout << ci.text << '\n';
    } catch (const DomainError& e) {
      std::cout << "no C-index interval: " << e.what() << '\n';
    }
    out[task_name(task)] = std::move(metrics);
  }
  fs::create_directories(c.output_dir);
  write_text(c.output_dir / "evaluation.json", out.dump(2) + "\n");
  return kOk;
}

int cmd_gradcheck(const Options& o) {
  Backbone backbone = Backbone::GraphSage;
  std::uint64_t seed = 42;
  if (!o.config.empty()) {
    const RunConfig c = resolve_config(o);
    backbone = c.model.backbone;
    seed = c.seed;
  }
  if (o.seed) seed = *o.seed;
  if (!o.backbone.empty()) {
    const auto b = backbone_from_name(o.backbone);
    if (!b) throw ConfigError("unknown backbone '" + o.backbone + "'");
    backbone = *b;
  }
  const ad::GradCheckResult r = toy_gradient_check(backbone, o.latent, o.horizon, seed);
  std::printf("%s: %zu coordinates, max relative error %.3e\n", backbone_name(backbone),
              r.coordinates, r.max_rel_error);
  return r.max_rel_error <= 1e-4 ? kOk : kTraining;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dynamic prognosis from patient graphs: simulate, train and cross-validate"};
  app.require_subcommand(1);
  Options o;

  auto common = [&](CLI::App* sub, bool config_required) {
    auto* opt = sub->add_option("--config", o.config, "run configuration (JSON)");
    if (config_required) opt->required();
    sub->add_option("--seed", o.seed, "master seed, overrides the config");
    sub->add_option("--out", o.out, "output directory, overrides the config");
  };

  auto* simulate = app.add_subcommand("simulate", "write a synthetic cohort");
  common(simulate, true);
  auto* train = app.add_subcommand("train", "train one model with a validation holdout");
  common(train, true);
  auto* crossval = app.add_subcommand("crossval", "repeated stratified cross-validation");
  common(crossval, true);
  auto* evaluate = app.add_subcommand("evaluate", "score a curves.csv against the cohort");
  common(evaluate, true);
  evaluate->add_option("--curves", o.curves, "curves file (default: <out>/curves.csv)");
  auto* ablate = app.add_subcommand("ablate", "cross-validate an ablation variant");
  common(ablate, true);
  ablate->add_option("--variant", o.variant, "full, static, mean_integrator or no_cascade")
      ->required();
  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference check of the pipeline");
  common(gradcheck, false);
  gradcheck->add_option("--backbone", o.backbone, "graphsage, gcn or gat");
  gradcheck->add_option("-d", o.latent, "latent width")->capture_default_str();
  gradcheck->add_option("-T", o.horizon, "evolution steps")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*simulate) return cmd_simulate(o);
    if (*train) return cmd_train(o);
    if (*crossval) return cmd_crossval(o);
    if (*evaluate) return cmd_evaluate(o);
    if (*ablate) return cmd_ablate(o);
    if (*gradcheck) return cmd_gradcheck(o);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kUsage;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kData;
  } catch (const TrainingError& e) {
    std::cerr << "training failed: " << e.what() << '\n';
    return kTraining;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  }
  return kUsage;
}
