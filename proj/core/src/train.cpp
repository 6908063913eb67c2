#include "dartvae/train.hpp"

#include <algorithm>
#include <cmath>

#include "dartvae/clustering.hpp"
#include "dartvae/errors.hpp"
#include "dartvae/optimizer.hpp"

namespace dartvae::model {

using diffnet::Matrix;

void TrainConfig::validate() const {
  if (epochs < 1) throw UsageError("TrainConfig: epochs must be >= 1");
  if (batch_size < 1) throw UsageError("TrainConfig: batch_size must be >= 1");
  if (warmup_fraction < 0.0 || warmup_fraction > 1.0) {
    throw UsageError("TrainConfig: warmup_fraction must be in [0, 1]");
  }
  if (alpha_max < 0.0) throw UsageError("TrainConfig: alpha_max must be >= 0");
  if (beta < 0.0) throw UsageError("TrainConfig: beta must be >= 0");
  if (provisional_period < 1) {
    throw UsageError("TrainConfig: provisional_cluster_period must be >= 1");
  }
}

double rule_weight_schedule(std::size_t epoch, const TrainConfig& config) {
  if (epoch < 1 || epoch > config.epochs) {
    throw UsageError("rule_weight_schedule: epoch " + std::to_string(epoch) +
                     " outside [1, " + std::to_string(config.epochs) + "]");
  }
  const auto warmup_end = static_cast<std::size_t>(
      std::ceil(config.warmup_fraction * static_cast<double>(config.epochs)));
  if (warmup_end <= 1 || epoch >= warmup_end) return config.alpha_max;
  return config.alpha_max * static_cast<double>(epoch - 1) /
         static_cast<double>(warmup_end - 1);
}

namespace {

Matrix draw_noise(std::size_t rows, std::size_t cols, Rng& rng) {
  Matrix eps(rows, cols);
  for (double& x : eps.values()) x = rng.normal();
  return eps;
}

LossBreakdown weighted_mean(const std::vector<LossBreakdown>& parts,
                            const std::vector<std::size_t>& sizes) {
  LossBreakdown out;
  double total_weight = 0.0;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    total_weight += static_cast<double>(sizes[i]);
  }
  for (std::size_t i = 0; i < parts.size(); ++i) {
    const double w = static_cast<double>(sizes[i]) / total_weight;
    out.recon += w * parts[i].recon;
    out.kl += w * parts[i].kl;
    out.consistency += w * parts[i].consistency;
    out.violation += w * parts[i].violation;
    out.total += w * parts[i].total;
  }
  out.alpha = parts.empty() ? 0.0 : parts.front().alpha;
  out.beta = parts.empty() ? 1.0 : parts.front().beta;
  return out;
}

}  // namespace

TrainResult train(const features::Dataset& dataset,
                  const rules::RuleSet& ruleset,
                  const ModelConfig& model_config,
                  const TrainConfig& train_config) {
  train_config.validate();
  if (dataset.size() < 1) throw UsageError("train: empty dataset");
  if (!(dataset.schema == ruleset.schema)) {
    throw UsageError("train: dataset and ruleset schemas differ");
  }

  ModelConfig config = model_config;
  config.visual_dim = dataset.visual_dim;
  config.semantic_raw_dim = dataset.semantic_dim;
  config.attr_width = rules::encoded_width(dataset.schema);
  config.rule_count = ruleset.rule_count();
  config.validate();

  const std::size_t n = dataset.size();
  const Matrix visual = features::visual_matrix(dataset);
  const Matrix semantic = features::semantic_matrix(dataset);
  const auto attr_vectors = dataset.attribute_vectors();
  const Matrix attrs = rules::encode_attributes(dataset.schema, attr_vectors);

  Rng rng(train_config.seed);
  ModelParams params = ModelParams::init(config, rng);

  // sample-level columns are static; cluster-level columns start zero
  Matrix v_target = rules::violation_targets(ruleset, attr_vectors);

  diffnet::OptimizerConfig opt_config;
  opt_config.learning_rate = train_config.learning_rate;
  opt_config.weight_decay = train_config.weight_decay;
  const auto sizes = params.param_sizes();
  auto opt_state = diffnet::OptimizerState::init(sizes, opt_config);

  TrainResult result;

  // pre-training evaluation over the whole dataset (own rng, alpha 0)
  {
    Rng eval_rng(train_config.seed ^ 0x9e3779b97f4a7c15ULL);
    Batch full{visual, semantic, attrs, v_target};
    result.initial =
        total_loss(params, full, 0.0, train_config.beta, eval_rng);
  }

  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;

  const std::size_t provisional_k = std::min(
      std::max<std::size_t>(1, train_config.provisional_k), n);

  for (std::size_t epoch = 1; epoch <= train_config.epochs; ++epoch) {
    const double alpha = rule_weight_schedule(epoch, train_config);

    if (ruleset.has_cluster_level_rules() && epoch > 1 &&
        (epoch - 1) % train_config.provisional_period == 0) {
      const Matrix latent = embed(params, dataset);
      const auto provisional = clustering::kmeans(
          latent, provisional_k,
          train_config.seed * 1000003ULL + epoch);
      v_target = rules::violation_targets(ruleset, attr_vectors,
                                          provisional.labels, provisional_k);
    }

    rng.shuffle(order);

    std::vector<LossBreakdown> batch_losses;
    std::vector<std::size_t> batch_sizes;
    for (std::size_t start = 0; start < n; start += train_config.batch_size) {
      const std::size_t end = std::min(n, start + train_config.batch_size);
      const std::span<const std::size_t> idx(order.data() + start,
                                             end - start);
      Batch batch{visual.take_rows(idx), semantic.take_rows(idx),
                  attrs.take_rows(idx), v_target.take_rows(idx)};
      const Matrix eps = draw_noise(idx.size(), config.latent_dim, rng);

      try {
        LossGraph graph =
            build_loss_graph(params, batch, alpha, train_config.beta, eps);
        const LossBreakdown loss = graph.breakdown(alpha, train_config.beta);
        if (!std::isfinite(loss.total)) {
          throw NumericError("non-finite loss");
        }
        batch_losses.push_back(loss);
        batch_sizes.push_back(idx.size());

        auto grads = diffnet::compute_gradients(graph.total, graph.params);
        auto spans = params.param_spans();
        diffnet::adamw_step(spans, grads, opt_state);
      } catch (const NumericError& e) {
        throw TrainingError("epoch " + std::to_string(epoch) + ", batch " +
                            std::to_string(start / train_config.batch_size) +
                            ": " + e.what());
      }
    }
    result.history.push_back(weighted_mean(batch_losses, batch_sizes));
  }

  result.params = std::move(params);
  return result;
}

}  // namespace dartvae::model
