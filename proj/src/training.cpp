#include "dypro/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>

#include "dypro/error.hpp"
#include "dypro/random.hpp"

namespace dypro {

void validate(const TrainConfig& c) {
  if (!(c.optimizer.lr > 0.0)) throw ConfigError("train.lr must be > 0");
  if (!(c.optimizer.beta1 >= 0.0 && c.optimizer.beta1 < 1.0) ||
      !(c.optimizer.beta2 >= 0.0 && c.optimizer.beta2 < 1.0)) {
    throw ConfigError("train betas must be in [0, 1)");
  }
  if (!(c.optimizer.eps > 0.0)) throw ConfigError("train.eps must be > 0");
  if (!(c.optimizer.weight_decay >= 0.0)) throw ConfigError("train.weight_decay must be >= 0");
  if (c.batch_size < 1) throw ConfigError("train.batch must be >= 1");
  validate(c.weights);
  if (c.max_epochs < 1) throw ConfigError("train.max_epochs must be >= 1");
  if (c.patience < 1) throw ConfigError("train.patience must be >= 1");
  if (!(c.plateau_factor > 0.0 && c.plateau_factor < 1.0)) {
    throw ConfigError("train.scheduler_factor must be in (0, 1)");
  }
  if (c.plateau_patience < 1) throw ConfigError("train.scheduler_patience must be >= 1");
}

namespace {

struct Example {
  const PatientGraph* graph;
  SurvivalLabel os;
  SurvivalLabel dfs;
};

double batch_loss(const DyProModel& model, std::span<const Example> examples,
                  const LossWeights& weights, ad::Gradients* grads) {
  std::vector<const PatientGraph*> graphs;
  std::vector<SurvivalLabel> os;
  std::vector<SurvivalLabel> dfs;
  for (const auto& e : examples) {
    graphs.push_back(e.graph);
    os.push_back(e.os);
    dfs.push_back(e.dfs);
  }
  const GraphBatch batch(graphs);
  ad::Tape tape(model.parameters());
  const ad::Var loss = model.loss(tape, batch, os, dfs, weights);
  const double value = loss.value()(0, 0);
  if (!std::isfinite(value)) throw TrainingError("non-finite training loss");
  if (grads) *grads = tape.backward(loss);
  return value;
}

}  // namespace

double evaluate_loss(const DyProModel& model, const Cohort& cohort,
                     std::span<const std::size_t> patients, const LossWeights& weights,
                     std::size_t batch_size) {
  if (patients.empty()) throw DataError("evaluate_loss: no patients");
  std::vector<Example> examples;
  for (std::size_t i : patients) {
    const auto& p = cohort.patients.at(i);
    examples.push_back({&p.graph, p.os, p.dfs});
  }
  double total = 0.0;
  for (std::size_t start = 0; start < examples.size(); start += batch_size) {
    const std::size_t count = std::min(batch_size, examples.size() - start);
    total += static_cast<double>(count) *
             batch_loss(model, std::span(examples).subspan(start, count), weights, nullptr);
  }
  return total / static_cast<double>(examples.size());
}

TrainResult train_model(DyProModel& model, const Cohort& cohort,
                        std::span<const std::size_t> train,
                        std::span<const std::size_t> validation, const TrainConfig& config,
                        std::uint64_t seed, std::ostream* log) {
  validate(config);
  if (train.empty()) throw DataError("train_model: empty training set");
  if (validation.empty()) throw DataError("train_model: empty validation set");

  ad::ParameterSet& params = model.parameters();
  OptimizerState state = make_optimizer_state(params, config.optimizer.lr);
  std::vector<ad::Matrix> best = params.values();
  TrainResult result;

  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    std::vector<PatientGraph> graphs;
    std::vector<Example> examples;
    for (std::size_t i : train) {
      const auto& p = cohort.patients.at(i);
      if (config.augment) {
        for (auto& g : augment(p.graph, derive_seed(seed, {epoch, i}), config.augmentation)) {
          graphs.push_back(std::move(g));
        }
      } else {
        graphs.push_back(p.graph);
      }
    }
    const std::size_t copies = graphs.size() / train.size();
    for (std::size_t j = 0; j < graphs.size(); ++j) {
      const auto& p = cohort.patients[train[j / copies]];
      examples.push_back({&graphs[j], p.os, p.dfs});
    }
    std::mt19937_64 shuffler(derive_seed(seed, {epoch, 0x5fu}));
    std::shuffle(examples.begin(), examples.end(), shuffler);

    double train_total = 0.0;
    ad::Gradients grads;
    for (std::size_t start = 0; start < examples.size(); start += config.batch_size) {
      const std::size_t count = std::min(config.batch_size, examples.size() - start);
      const double value =
          batch_loss(model, std::span(examples).subspan(start, count), config.weights, &grads);
      try {
        adamw_step(params, grads, state, config.optimizer);
      } catch (const DomainError& e) {
        throw TrainingError(e.what());
      }
      train_total += static_cast<double>(count) * value;
    }

    const double val = evaluate_loss(model, cohort, validation, config.weights, config.batch_size);
    if (!std::isfinite(val)) throw TrainingError("non-finite validation loss");
    EpochRecord record{epoch, train_total / static_cast<double>(examples.size()), val, state.lr};
    result.epochs.push_back(record);
    if (log) {
      char line[128];
      std::snprintf(line, sizeof line, "%zu %.6g %.6g %.6g\n", record.epoch, record.train_loss,
                    record.val_loss, record.lr);
      *log << line;
    }

    plateau_schedule(state, val, config.plateau_factor, config.plateau_patience);
    const StopDecision decision = early_stop(state, val, config.patience);
    if (state.early.improved) best = params.values();
    if (decision == StopDecision::Stop) {
      result.stopped_early = true;
      break;
    }
  }

  params.values() = best;
  result.best_epoch = state.early.best_evaluation;
  result.best_val_loss = state.early.best;
  return result;
}

}  // namespace dypro
