#pragma once

#include <cstddef>
#include <cstdint>
#include <ostream>
#include <span>
#include <vector>

#include "dypro/cohort.hpp"
#include "dypro/model.hpp"
#include "dypro/objective.hpp"

namespace dypro {

struct TrainConfig {
  AdamWConfig optimizer;
  std::size_t batch_size = 64;
  LossWeights weights;
  std::size_t max_epochs = 500;
  std::size_t patience = 20;          // early stopping, in epochs
  double plateau_factor = 0.5;
  std::size_t plateau_patience = 5;
  bool augment = true;
  AugmentOptions augmentation;

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

void validate(const TrainConfig& config);

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_loss = 0.0;
  double lr = 0.0;
};

struct TrainResult {
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;
  double best_val_loss = 0.0;
  bool stopped_early = false;
};

/// Combined loss over `patients` in batches, weighted by batch size.
double evaluate_loss(const DyProModel& model, const Cohort& cohort,
                     std::span<const std::size_t> patients, const LossWeights& weights,
                     std::size_t batch_size);

/// AdamW on the train patients (each epoch materializes the augmented
/// copies under a seed derived from (seed, epoch, patient)), reduce-on-
/// plateau and early stopping on the validation loss. The parameters left
/// in `model` are those of the best validation epoch. Throws TrainingError
/// on a non-finite loss or gradient.
TrainResult train_model(DyProModel& model, const Cohort& cohort,
                        std::span<const std::size_t> train,
                        std::span<const std::size_t> validation, const TrainConfig& config,
                        std::uint64_t seed, std::ostream* log = nullptr);

}  // namespace dypro
