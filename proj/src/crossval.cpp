#include "dypro/crossval.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include "dypro/error.hpp"
#include "dypro/random.hpp"
#include "dypro/training.hpp"

namespace dypro {

namespace {

std::vector<SurvivalCurve> curves_of(const ad::Matrix& hazards) {
  std::vector<SurvivalCurve> out;
  out.reserve(static_cast<std::size_t>(hazards.rows()));
  for (Eigen::Index r = 0; r < hazards.rows(); ++r) {
    out.push_back(survival_from_hazards(hazards.row(r).transpose()));
  }
  return out;
}

std::vector<double> risks_of(const std::vector<SurvivalCurve>& curves, const TimeBins& bins) {
  std::vector<double> risks;
  risks.reserve(curves.size());
  for (const auto& s : curves) risks.push_back(-point_estimate_time(s, bins));
  return risks;
}

template <typename F>
std::optional<double> defined(F&& f) {
  try {
    return f();
  } catch (const DomainError&) {
    return std::nullopt;
  }
}

}  // namespace

TaskEvaluation evaluate_task(const ad::Matrix& hazards, std::span<const SurvivalLabel> labels,
                             const TimeBins& bins, const EvalConfig& eval, double tau) {
  if (static_cast<std::size_t>(hazards.rows()) != labels.size()) {
    throw ShapeError("evaluate_task: " + std::to_string(hazards.rows()) + " curves for " +
                     std::to_string(labels.size()) + " labels");
  }
  const auto curves = curves_of(hazards);
  const auto risks = risks_of(curves, bins);

  TaskEvaluation out;
  out.row[0] = defined([&] { return harrell_cindex(risks, labels); });
  out.row[1] = defined([&] {
    const BrierResult b = integrated_brier(curves, labels, bins, tau, {eval.weight_cap, 100});
    out.capped_weights = b.capped_weights;
    return b.ibs;
  });
  for (std::size_t h = 0; h < eval.horizons.size(); ++h) {
    std::vector<double> scores;
    for (const auto& s : curves) scores.push_back(1.0 - survival_at(s, bins, eval.horizons[h]));
    out.row[2 + h] = time_dependent_auc(scores, labels, eval.horizons[h]);
  }
  std::vector<double> times;
  for (double r : risks) times.push_back(-r);
  out.row[5] = mae_uncensored(times, labels);
  return out;
}

std::map<std::string, std::map<std::string, Aggregate>> aggregate_folds(
    const std::vector<FoldRecord>& folds) {
  std::map<std::string, std::map<std::string, Aggregate>> out;
  for (Task task : kReportTasks) {
    auto& table = out[task_name(task)];
    for (std::size_t m = 0; m < kMetricNames.size(); ++m) {
      std::vector<double> values;
      for (const auto& f : folds) {
        if (!f.failed && f.row(task)[m]) values.push_back(*f.row(task)[m]);
      }
      Aggregate a;
      a.count = values.size();
      if (!values.empty()) {
        const double n = static_cast<double>(values.size());
        const double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
        a.mean = mean;
        if (values.size() > 1) {
          double ss = 0.0;
          for (double v : values) ss += (v - mean) * (v - mean);
          a.std = std::sqrt(ss / (n - 1.0));
        }
      }
      table[kMetricNames[m]] = a;
    }
  }
  return out;
}

CiRecord cindex_interval(const ad::Matrix& hazards, std::span<const SurvivalLabel> labels,
                         const TimeBins& bins, Task task, std::size_t resamples, double level,
                         std::uint64_t seed) {
  const auto risks = risks_of(curves_of(hazards), bins);
  const ResampleMetric metric = [&](std::span<const std::size_t> idx) -> std::optional<double> {
    std::vector<double> r;
    std::vector<SurvivalLabel> l;
    r.reserve(idx.size());
    l.reserve(idx.size());
    for (std::size_t i : idx) {
      r.push_back(risks[i]);
      l.push_back(labels[i]);
    }
    return defined([&] { return harrell_cindex(r, l); });
  };
  CiRecord rec;
  rec.estimate = harrell_cindex(risks, labels);
  const ConfidenceInterval ci = bootstrap_ci(metric, labels.size(), resamples, level, seed);
  rec.lo = ci.lo;
  rec.hi = ci.hi;
  rec.level = level;
  rec.resamples = resamples;
  rec.discarded = ci.discarded;
  rec.text = format_ci(std::string(task_name(task)) + " C-index", rec.estimate, ci, level);
  return rec;
}

namespace {

double cascade_probe(const RunConfig& config, const Cohort& cohort) {
  const DyProModel model(config.model, cohort.schema, derive_seed(config.seed, {0xcca5u}));
  const std::size_t n = std::min<std::size_t>(cohort.patients.size(), 64);
  std::vector<const PatientGraph*> graphs;
  std::vector<SurvivalLabel> os;
  for (std::size_t i = 0; i < n; ++i) {
    graphs.push_back(&cohort.patients[i].graph);
    os.push_back(cohort.patients[i].os);
  }
  const GraphBatch batch(graphs);
  ad::Tape tape(model.parameters());
  const ForwardResult f = model.forward(tape, batch);
  const ad::Var loss = batch_nll(f.os_logits, make_nll_targets(os, config.model.bins));
  const ad::Gradients grads = tape.backward(loss);
  return std::max(grads[model.heads().w_context].cwiseAbs().maxCoeff(),
                  grads[model.heads().b_context].cwiseAbs().maxCoeff());
}

}  // namespace

CrossvalRun run_crossval(const RunConfig& config, const Cohort& cohort, std::ostream* log) {
  validate(config);
  if (cohort.patients.empty()) throw DataError("cohort is empty");
  const auto start = std::chrono::steady_clock::now();
  const auto os = cohort.labels(Task::Os);
  const auto dfs = cohort.labels(Task::Dfs);
  const SplitPlan plan = stratified_repeated_kfold(os, dfs, config.cv.k, config.cv.repeats,
                                                   derive_seed(config.seed, {0x5b117u}));
  const auto n = static_cast<Eigen::Index>(cohort.patients.size());
  const auto k_bins = static_cast<Eigen::Index>(config.model.bins.size());
  const double tau = config.tau();

  CrossvalRun run;
  OutOfFold& oof = run.out_of_fold;
  for (const auto& p : cohort.patients) oof.patient_ids.push_back(p.id);
  oof.os_hazards = ad::Matrix::Zero(n, k_bins);
  oof.dfs_hazards = ad::Matrix::Zero(n, k_bins);
  oof.predicted.assign(cohort.patients.size(), false);

  CvReport& report = run.report;
  report.seed = config.seed;
  report.config = to_json(config);

  for (const FoldSplit& split : plan.folds) {
    FoldRecord rec;
    rec.repeat = split.repeat;
    rec.fold = split.fold;
    rec.seed = derive_seed(config.seed, {split.repeat, split.fold});
    try {
      DyProModel model(config.model, cohort.schema, derive_seed(rec.seed, {1}));
      if (log) *log << "# repeat " << split.repeat << " fold " << split.fold << '\n';
      const TrainResult trained = train_model(model, cohort, split.train, split.validation,
                                              config.train, derive_seed(rec.seed, {2}), log);
      rec.epochs = trained.epochs.size();
      rec.best_epoch = trained.best_epoch;
      rec.best_val_loss = trained.best_val_loss;

      std::vector<const PatientGraph*> graphs;
      std::vector<SurvivalLabel> test_os;
      std::vector<SurvivalLabel> test_dfs;
      for (std::size_t i : split.test) {
        graphs.push_back(&cohort.patients[i].graph);
        test_os.push_back(os[i]);
        test_dfs.push_back(dfs[i]);
      }
      const Predictions pred = model.predict(graphs, config.train.batch_size);
      const TaskEvaluation eval_os =
          evaluate_task(pred.os_hazards, test_os, config.model.bins, config.eval, tau);
      const TaskEvaluation eval_dfs =
          evaluate_task(pred.dfs_hazards, test_dfs, config.model.bins, config.eval, tau);
      rec.os = eval_os.row;
      rec.dfs = eval_dfs.row;
      rec.capped_weights = eval_os.capped_weights + eval_dfs.capped_weights;

      if (split.repeat == 0) {
        for (std::size_t j = 0; j < split.test.size(); ++j) {
          const auto row = static_cast<Eigen::Index>(split.test[j]);
          oof.os_hazards.row(row) = pred.os_hazards.row(static_cast<Eigen::Index>(j));
          oof.dfs_hazards.row(row) = pred.dfs_hazards.row(static_cast<Eigen::Index>(j));
          oof.predicted[split.test[j]] = true;
        }
      }
    } catch (const TrainingError& e) {
      rec.failed = true;
      rec.error = e.what();
      ++report.failed_folds;
    }
    report.folds.push_back(std::move(rec));
  }

  report.aggregate = aggregate_folds(report.folds);

  std::vector<std::size_t> pooled;
  for (std::size_t i = 0; i < oof.predicted.size(); ++i) {
    if (oof.predicted[i]) pooled.push_back(i);
  }
  if (pooled.size() >= 2) {
    for (Task task : kReportTasks) {
      const ad::Matrix& all = task == Task::Os ? oof.os_hazards : oof.dfs_hazards;
      ad::Matrix hazards(static_cast<Eigen::Index>(pooled.size()), k_bins);
      std::vector<SurvivalLabel> labels;
      for (std::size_t j = 0; j < pooled.size(); ++j) {
        hazards.row(static_cast<Eigen::Index>(j)) = all.row(static_cast<Eigen::Index>(pooled[j]));
        labels.push_back(task == Task::Os ? os[pooled[j]] : dfs[pooled[j]]);
      }
      try {
        report.cindex_ci[task_name(task)] = cindex_interval(
            hazards, labels, config.model.bins, task, config.eval.bootstrap, config.eval.level,
            derive_seed(config.seed, {0xb007u, static_cast<std::uint64_t>(task)}));
      } catch (const DomainError&) {
        // Left out of the report: too few comparable pairs to resample.
      }
    }
  }

  report.os_grad_wrt_dfs_context = cascade_probe(config, cohort);
  report.runtime_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return run;
}

const char* ablation_name(Ablation a) noexcept {
  switch (a) {
    case Ablation::Full: return "full";
    case Ablation::Static: return "static";
    case Ablation::MeanIntegrator: return "mean_integrator";
    case Ablation::NoCascade: return "no_cascade";
  }
  return "unknown";
}

std::optional<Ablation> ablation_from_name(std::string_view name) noexcept {
  for (Ablation a : {Ablation::Full, Ablation::Static, Ablation::MeanIntegrator,
                     Ablation::NoCascade}) {
    if (name == ablation_name(a)) return a;
  }
  return std::nullopt;
}

RunConfig ablated(const RunConfig& config, Ablation variant) {
  RunConfig c = config;
  switch (variant) {
    case Ablation::Full: break;
    case Ablation::Static: c.model.horizon = 1; break;
    case Ablation::MeanIntegrator: c.model.integrator = Integrator::Mean; break;
    case Ablation::NoCascade: c.model.cascade = false; break;
  }
  return c;
}

CrossvalRun run_ablation(const RunConfig& config, const Cohort& cohort, Ablation variant,
                         std::ostream* log) {
  CrossvalRun run = run_crossval(ablated(config, variant), cohort, log);
  run.report.variant = ablation_name(variant);
  return run;
}

bool too_many_failures(const CvReport& report) {
  return 3 * report.failed_folds > report.folds.size();
}

// ---------------------------------------------------------------------------

ad::GradCheckResult toy_gradient_check(Backbone backbone, Eigen::Index latent,
                                       Eigen::Index horizon, std::uint64_t seed, double step) {
  const SimulatedCohort sim = simulate_cohort(10, seed, SimulationScenario{});
  ModelConfig mc;
  mc.backbone = backbone;
  mc.latent = latent;
  mc.time_embed = std::max<Eigen::Index>(latent / 2, 1);
  mc.lstm_hidden = latent;
  mc.context = std::max<Eigen::Index>(latent / 2, 1);
  mc.horizon = horizon;
  DyProModel model(mc, sim.cohort.schema, seed);

  std::vector<const PatientGraph*> graphs;
  std::vector<SurvivalLabel> os;
  std::vector<SurvivalLabel> dfs;
  for (std::size_t i = 0; i < 3; ++i) {
    graphs.push_back(&sim.cohort.patients[i].graph);
    os.push_back(sim.cohort.patients[i].os);
    dfs.push_back(sim.cohort.patients[i].dfs);
  }
  const GraphBatch batch(graphs);
  return ad::grad_check(
      [&](ad::Tape& tape) { return model.loss(tape, batch, os, dfs, LossWeights{}); },
      model.parameters(), step);
}

}  // namespace dypro
