#pragma once

#include <cstdint>
#include <vector>

#include "dartvae/model.hpp"

namespace dartvae::model {

struct TrainConfig {
  std::size_t epochs = 40;
  std::size_t batch_size = 64;
  double learning_rate = 1e-3;
  double weight_decay = 1e-4;
  double beta = 1.0;        // KL weight
  double alpha_max = 0.15;  // rule weight after warmup
  double warmup_fraction = 0.5;
  std::size_t provisional_period = 5;  // refresh cluster-level targets every E epochs
  std::size_t provisional_k = 4;       // k for the provisional k-means
  std::uint64_t seed = 0;

  void validate() const;
};

/// Linear ramp: 0 at epoch 1, alpha_max at epoch ceil(warmup_fraction *
/// epochs) and beyond. warmup_fraction 0 means constant alpha_max.
double rule_weight_schedule(std::size_t epoch, const TrainConfig& config);

struct TrainResult {
  ModelParams params;
  /// Pre-training evaluation over the whole dataset (alpha = 0).
  LossBreakdown initial;
  /// One sample-weighted mean breakdown per epoch, epochs 1..T.
  std::vector<LossBreakdown> history;
};

/// Seeded end-to-end training (Stage 2). Violation targets for sample-level
/// rules are static; cluster-level columns are refreshed every
/// `provisional_period` epochs from a k-means run over the current latent
/// means, and are zero before the first refresh.
TrainResult train(const features::Dataset& dataset,
                  const rules::RuleSet& ruleset, const ModelConfig& model_config,
                  const TrainConfig& train_config);

}  // namespace dartvae::model
