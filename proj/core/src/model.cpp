#include "dartvae/model.hpp"

#include <cmath>

#include "dartvae/errors.hpp"

namespace dartvae::model {

using diffnet::Activation;
using diffnet::Matrix;
using diffnet::MlpLayer;
using diffnet::Var;

void ModelConfig::validate() const {
  const std::size_t dims[] = {visual_dim,     semantic_raw_dim, semantic_dim,
                              rule_dim,       semantic_hidden,  rule_hidden,
                              predictor_hidden, hidden1,        hidden2,
                              latent_dim,     attr_width,       rule_count};
  for (std::size_t d : dims) {
    if (d < 1) {
      throw UsageError("ModelConfig: every dimension must be >= 1");
    }
  }
}

ModelParams ModelParams::init(const ModelConfig& config, Rng& rng) {
  config.validate();
  ModelParams p;
  p.config = config;
  using diffnet::init_layer;
  p.semantic_mlp = {
      init_layer(config.semantic_raw_dim, config.semantic_hidden,
                 Activation::kRelu, rng),
      init_layer(config.semantic_hidden, config.semantic_dim,
                 Activation::kRelu, rng)};
  p.rule_mlp = {init_layer(config.attr_width, config.rule_hidden,
                           Activation::kRelu, rng),
                init_layer(config.rule_hidden, config.rule_dim,
                           Activation::kRelu, rng)};
  p.encoder = {init_layer(config.joint_dim(), config.hidden1,
                          Activation::kRelu, rng),
               init_layer(config.hidden1, config.hidden2, Activation::kRelu,
                          rng)};
  p.mu_head = init_layer(config.hidden2, config.latent_dim,
                         Activation::kIdentity, rng);
  p.logvar_head = init_layer(config.hidden2, config.latent_dim,
                             Activation::kIdentity, rng);
  p.decoder = {
      init_layer(config.latent_dim, config.hidden2, Activation::kRelu, rng),
      init_layer(config.hidden2, config.hidden1, Activation::kRelu, rng),
      init_layer(config.hidden1, config.joint_dim(), Activation::kIdentity,
                 rng)};
  p.rule_predictor = {init_layer(config.latent_dim, config.predictor_hidden,
                                 Activation::kRelu, rng),
                      init_layer(config.predictor_hidden, config.rule_count,
                                 Activation::kIdentity, rng)};
  return p;
}

std::vector<MlpLayer*> ModelParams::layers() {
  return {&semantic_mlp[0], &semantic_mlp[1], &rule_mlp[0],  &rule_mlp[1],
          &encoder[0],      &encoder[1],      &mu_head,      &logvar_head,
          &decoder[0],      &decoder[1],      &decoder[2],   &rule_predictor[0],
          &rule_predictor[1]};
}

std::vector<const MlpLayer*> ModelParams::layers() const {
  return {&semantic_mlp[0], &semantic_mlp[1], &rule_mlp[0],  &rule_mlp[1],
          &encoder[0],      &encoder[1],      &mu_head,      &logvar_head,
          &decoder[0],      &decoder[1],      &decoder[2],   &rule_predictor[0],
          &rule_predictor[1]};
}

std::vector<std::span<double>> ModelParams::param_spans() {
  std::vector<std::span<double>> spans;
  for (MlpLayer* layer : layers()) {
    spans.push_back(layer->weights.values());
    spans.push_back(layer->biases);
  }
  return spans;
}

std::vector<std::span<const double>> ModelParams::param_spans() const {
  std::vector<std::span<const double>> spans;
  for (const MlpLayer* layer : layers()) {
    spans.push_back(layer->weights.values());
    spans.push_back(layer->biases);
  }
  return spans;
}

std::vector<std::size_t> ModelParams::param_sizes() const {
  std::vector<std::size_t> sizes;
  for (const auto span : param_spans()) sizes.push_back(span.size());
  return sizes;
}

namespace {

Matrix forward_stack(Matrix x, std::span<const MlpLayer> stack) {
  for (const MlpLayer& layer : stack) {
    x = diffnet::linear_forward(x, layer);
  }
  return x;
}

}  // namespace

Matrix semantic_encode(const ModelParams& p, const Matrix& semantic_raw) {
  return forward_stack(semantic_raw, p.semantic_mlp);
}

Matrix rule_encode(const ModelParams& p, const Matrix& attrs_encoded) {
  return forward_stack(attrs_encoded, p.rule_mlp);
}

Matrix build_joint(const Matrix& visual, const Matrix& semantic_features,
                   const Matrix& rule_features) {
  const Matrix parts[] = {visual, semantic_features, rule_features};
  return diffnet::concat_cols(parts);
}

EncodeResult encode(const ModelParams& p, const Matrix& joint) {
  if (joint.cols() != p.config.joint_dim()) {
    throw ShapeError("encode: joint width " + std::to_string(joint.cols()) +
                     " != " + std::to_string(p.config.joint_dim()));
  }
  Matrix trunk = forward_stack(joint, p.encoder);
  return {diffnet::linear_forward(trunk, p.mu_head),
          diffnet::linear_forward(trunk, p.logvar_head)};
}

Matrix reparameterize(const Matrix& mu, const Matrix& logvar, Rng& rng) {
  diffnet::require_same_shape(mu, logvar, "reparameterize");
  Matrix z = mu;
  for (std::size_t i = 0; i < z.size(); ++i) {
    z.values()[i] += std::exp(0.5 * logvar.values()[i]) * rng.normal();
  }
  return z;
}

Matrix decode(const ModelParams& p, const Matrix& z) {
  if (z.cols() != p.config.latent_dim) {
    throw ShapeError("decode: latent width " + std::to_string(z.cols()) +
                     " != " + std::to_string(p.config.latent_dim));
  }
  return forward_stack(z, p.decoder);
}

Matrix rule_predict(const ModelParams& p, const Matrix& z) {
  return forward_stack(z, p.rule_predictor);
}

Matrix embed(const ModelParams& p, const features::Dataset& ds) {
  const Matrix visual = features::visual_matrix(ds);
  const Matrix semantic = features::semantic_matrix(ds);
  const Matrix attrs =
      rules::encode_attributes(ds.schema, ds.attribute_vectors());
  const Matrix joint = build_joint(visual, semantic_encode(p, semantic),
                                   rule_encode(p, attrs));
  return encode(p, joint).mu;
}

double loss_kl(const Matrix& mu, const Matrix& logvar) {
  diffnet::require_same_shape(mu, logvar, "loss_kl");
  if (mu.rows() == 0) return 0.0;
  double acc = 0.0;
  for (std::size_t i = 0; i < mu.size(); ++i) {
    const double m = mu.values()[i];
    const double lv = logvar.values()[i];
    acc += 1.0 + lv - m * m - std::exp(lv);
  }
  return -0.5 * acc / static_cast<double>(mu.rows());
}

namespace {

double cosine(std::span<const double> a, std::span<const double> b) {
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

}  // namespace

double loss_consistency(const Matrix& z, const Matrix& rule_features) {
  if (z.rows() != rule_features.rows()) {
    throw ShapeError("loss_consistency: batch mismatch");
  }
  const std::size_t n = z.rows();
  if (n < 2) {
    throw UsageError("loss_consistency: needs a batch of at least 2");
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      const double d =
          cosine(z.row(i), z.row(j)) -
          cosine(rule_features.row(i), rule_features.row(j));
      acc += d * d;
    }
  }
  return acc / static_cast<double>(n * (n - 1));
}

double loss_violation(const Matrix& v_pred, const Matrix& v_target) {
  diffnet::require_same_shape(v_pred, v_target, "loss_violation");
  for (double t : v_target.values()) {
    if (t != 0.0 && t != 1.0) {
      throw UsageError("loss_violation: targets must be binary");
    }
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < v_pred.size(); ++i) {
    const double s = 1.0 / (1.0 + std::exp(-v_pred.values()[i]));
    const double d = s - v_target.values()[i];
    acc += d * d;
  }
  return v_pred.size() > 0 ? acc / static_cast<double>(v_pred.size()) : 0.0;
}

LossBreakdown LossGraph::breakdown(double alpha, double beta) const {
  LossBreakdown b;
  b.recon = recon.value()(0, 0);
  b.kl = kl.value()(0, 0);
  b.consistency = consistency.value()(0, 0);
  b.violation = violation.value()(0, 0);
  b.total = total.value()(0, 0);
  b.alpha = alpha;
  b.beta = beta;
  return b;
}

namespace {

struct GraphLayers {
  std::vector<diffnet::LayerVars> semantic_mlp, rule_mlp, encoder, decoder,
      rule_predictor;
  diffnet::LayerVars mu_head, logvar_head;
  std::vector<Var> flat;  // canonical layout order
};

diffnet::LayerVars to_vars(const MlpLayer& layer, const std::string& name,
                           std::vector<Var>& flat) {
  diffnet::LayerVars lv;
  lv.weights = Var::leaf(layer.weights, true, name + ".weights");
  lv.biases = Var::leaf(Matrix(1, layer.biases.size(), layer.biases), true,
                        name + ".biases");
  lv.activation = layer.activation;
  flat.push_back(lv.weights);
  flat.push_back(lv.biases);
  return lv;
}

GraphLayers make_graph_layers(const ModelParams& p) {
  GraphLayers g;
  auto stack = [&](std::span<const MlpLayer> layers, const char* name) {
    std::vector<diffnet::LayerVars> out;
    for (std::size_t i = 0; i < layers.size(); ++i) {
      out.push_back(
          to_vars(layers[i], std::string(name) + std::to_string(i), g.flat));
    }
    return out;
  };
  g.semantic_mlp = stack(p.semantic_mlp, "semantic_mlp");
  g.rule_mlp = stack(p.rule_mlp, "rule_mlp");
  g.encoder = stack(p.encoder, "encoder");
  g.mu_head = to_vars(p.mu_head, "mu_head", g.flat);
  g.logvar_head = to_vars(p.logvar_head, "logvar_head", g.flat);
  g.decoder = stack(p.decoder, "decoder");
  g.rule_predictor = stack(p.rule_predictor, "rule_predictor");
  return g;
}

Var run_stack(Var x, const std::vector<diffnet::LayerVars>& stack) {
  for (const auto& layer : stack) x = diffnet::dense(x, layer);
  return x;
}

}  // namespace

LossGraph build_loss_graph(const ModelParams& p, const Batch& batch,
                           double alpha, double beta, const Matrix& eps) {
  const std::size_t b = batch.visual.rows();
  if (batch.semantic_raw.rows() != b || batch.attrs_encoded.rows() != b ||
      batch.v_target.rows() != b) {
    throw ShapeError("build_loss_graph: batch row mismatch");
  }
  if (eps.rows() != b || eps.cols() != p.config.latent_dim) {
    throw ShapeError("build_loss_graph: eps must be batch x latent_dim");
  }
  if (alpha < 0.0 || beta < 0.0) {
    throw UsageError("build_loss_graph: alpha and beta must be >= 0");
  }

  GraphLayers g = make_graph_layers(p);
  using namespace diffnet;

  Var visual = Var::constant(batch.visual, "visual");
  Var semantic_raw = Var::constant(batch.semantic_raw, "semantic_raw");
  Var attrs = Var::constant(batch.attrs_encoded, "attrs");
  Var v_target = Var::constant(batch.v_target, "v_target");
  Var noise = Var::constant(eps, "eps");

  Var rule_features = run_stack(attrs, g.rule_mlp);
  Var semantic_features = run_stack(semantic_raw, g.semantic_mlp);
  const Var joint_parts[] = {visual, semantic_features, rule_features};
  Var joint = concat_cols(joint_parts);

  Var trunk = run_stack(joint, g.encoder);
  Var mu = dense(trunk, g.mu_head);
  Var logvar = dense(trunk, g.logvar_head);
  Var z = add(mu, mul(exp_elem(scale(logvar, 0.5)), noise));
  Var reconstruction = run_stack(z, g.decoder);

  LossGraph out;
  out.params = std::move(g.flat);
  out.recon = mse_all(reconstruction, joint);

  // -1/2 * mean over batch of sum_d (1 + logvar - mu^2 - e^logvar)
  Var kl_inner = sub(add_scalar(logvar, 1.0),
                     add(mul(mu, mu), exp_elem(logvar)));
  out.kl = scale(sum_all(kl_inner), -0.5 / static_cast<double>(b));

  if (b >= 2) {
    Var sim_z = cosine_similarity_matrix(z);
    Var sim_r = cosine_similarity_matrix(rule_features);
    Matrix offdiag(b, b, 1.0);
    for (std::size_t i = 0; i < b; ++i) offdiag(i, i) = 0.0;
    Var diff = sub(sim_z, sim_r);
    out.consistency =
        scale(sum_all(mul(mul(diff, diff), Var::constant(offdiag, "offdiag"))),
              1.0 / static_cast<double>(b * (b - 1)));
  } else {
    // pairwise term is undefined for a single sample; contributes nothing
    out.consistency = Var::constant(Matrix(1, 1, 0.0), "consistency_empty");
  }

  Var v_pred = run_stack(z, g.rule_predictor);
  out.violation = mse_all(sigmoid(v_pred), v_target);

  out.total = add(add(out.recon, scale(out.kl, beta)),
                  scale(add(out.consistency, out.violation), alpha));
  return out;
}

LossBreakdown total_loss(const ModelParams& p, const Batch& batch,
                         double alpha, double beta, Rng& rng) {
  Matrix eps(batch.visual.rows(), p.config.latent_dim);
  for (double& x : eps.values()) x = rng.normal();
  LossGraph graph = build_loss_graph(p, batch, alpha, beta, eps);
  return graph.breakdown(alpha, beta);
}

}  // namespace dartvae::model
