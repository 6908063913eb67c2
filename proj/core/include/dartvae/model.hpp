#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "dartvae/autodiff.hpp"
#include "dartvae/features.hpp"
#include "dartvae/mlp.hpp"
#include "dartvae/rng.hpp"
#include "dartvae/rules.hpp"

namespace dartvae::model {

/// Network dimensions. The joint width is visual + encoded semantic +
/// encoded rule features; every other size is configurable, with defaults
/// matching the reference architecture.
struct ModelConfig {
  std::size_t visual_dim = 0;
  std::size_t semantic_raw_dim = 0;
  std::size_t semantic_dim = 256;
  std::size_t rule_dim = 16;
  std::size_t semantic_hidden = 256;
  std::size_t rule_hidden = 32;
  std::size_t predictor_hidden = 32;
  std::size_t hidden1 = 512;
  std::size_t hidden2 = 256;
  std::size_t latent_dim = 64;
  std::size_t attr_width = 0;   // numeric-encoded attribute width
  std::size_t rule_count = 0;   // M, rule predictor outputs

  std::size_t joint_dim() const {
    return visual_dim + semantic_dim + rule_dim;
  }
  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

/// All trainable weights. Tensor layout order (weights then biases per
/// layer, stacks in declaration order) is the canonical order used by the
/// optimizer, gradient sets and the checkpoint format.
struct ModelParams {
  std::array<diffnet::MlpLayer, 2> semantic_mlp;
  std::array<diffnet::MlpLayer, 2> rule_mlp;
  std::array<diffnet::MlpLayer, 2> encoder;
  diffnet::MlpLayer mu_head;
  diffnet::MlpLayer logvar_head;
  std::array<diffnet::MlpLayer, 3> decoder;
  std::array<diffnet::MlpLayer, 2> rule_predictor;
  ModelConfig config;

  static ModelParams init(const ModelConfig& config, Rng& rng);

  std::vector<diffnet::MlpLayer*> layers();
  std::vector<const diffnet::MlpLayer*> layers() const;
  std::vector<std::span<double>> param_spans();
  std::vector<std::span<const double>> param_spans() const;
  std::vector<std::size_t> param_sizes() const;

  bool operator==(const ModelParams&) const = default;
};

// --- inference (deterministic, no graph) -----------------------------------

diffnet::Matrix semantic_encode(const ModelParams& p,
                                const diffnet::Matrix& semantic_raw);
diffnet::Matrix rule_encode(const ModelParams& p,
                            const diffnet::Matrix& attrs_encoded);
diffnet::Matrix build_joint(const diffnet::Matrix& visual,
                            const diffnet::Matrix& semantic_features,
                            const diffnet::Matrix& rule_features);

struct EncodeResult {
  diffnet::Matrix mu;
  diffnet::Matrix logvar;
};
EncodeResult encode(const ModelParams& p, const diffnet::Matrix& joint);

/// z = mu + exp(logvar/2) * eps, eps ~ N(0, I) from the given rng.
diffnet::Matrix reparameterize(const diffnet::Matrix& mu,
                               const diffnet::Matrix& logvar, Rng& rng);

diffnet::Matrix decode(const ModelParams& p, const diffnet::Matrix& z);
diffnet::Matrix rule_predict(const ModelParams& p, const diffnet::Matrix& z);

/// Latent means for every record (no sampling): the clustering input.
diffnet::Matrix embed(const ModelParams& p, const features::Dataset& ds);

// --- loss components (plain evaluation) ------------------------------------

/// Mean over the batch of -1/2 sum_i (1 + logvar - mu^2 - sigma^2).
double loss_kl(const diffnet::Matrix& mu, const diffnet::Matrix& logvar);

/// MSE over ordered pairs (i != j) between pairwise cosine similarities of
/// z rows and rule-feature rows. Zero-norm rows contribute similarity 0.
double loss_consistency(const diffnet::Matrix& z,
                        const diffnet::Matrix& rule_features);

/// MSE(sigmoid(v_pred), v_target) with a binary target matrix.
double loss_violation(const diffnet::Matrix& v_pred,
                      const diffnet::Matrix& v_target);

struct LossBreakdown {
  double recon = 0.0;
  double kl = 0.0;
  double consistency = 0.0;
  double violation = 0.0;
  double total = 0.0;
  double alpha = 0.0;
  double beta = 1.0;
};

/// One training batch, rows aligned across all four matrices.
struct Batch {
  diffnet::Matrix visual;
  diffnet::Matrix semantic_raw;
  diffnet::Matrix attrs_encoded;
  diffnet::Matrix v_target;
};

/// The full differentiable loss. `params` holds the leaf Vars in canonical
/// layout order; every component node stays alive for inspection.
struct LossGraph {
  diffnet::Var recon;
  diffnet::Var kl;
  diffnet::Var consistency;
  diffnet::Var violation;
  diffnet::Var total;
  std::vector<diffnet::Var> params;

  LossBreakdown breakdown(double alpha, double beta) const;
};

/// Builds the loss with a fixed noise matrix (batch x latent_dim), so the
/// caller controls sampling. Batches of one sample get consistency == 0
/// instead of the pairwise term.
LossGraph build_loss_graph(const ModelParams& p, const Batch& batch,
                           double alpha, double beta,
                           const diffnet::Matrix& eps);

/// Forward-only convenience: samples eps from `rng` and returns the
/// component values combined exactly as total = recon + beta*kl +
/// alpha*(consistency + violation).
LossBreakdown total_loss(const ModelParams& p, const Batch& batch,
                         double alpha, double beta, Rng& rng);

}  // namespace dartvae::model
