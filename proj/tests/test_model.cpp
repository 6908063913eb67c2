#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "dartvae/checkpoint.hpp"
#include "dartvae/errors.hpp"
#include "dartvae/model.hpp"
#include "dartvae/train.hpp"
#include "testutil.hpp"

using namespace dartvae;
using namespace dartvae::model;
using diffnet::Matrix;

TEST_SUITE_BEGIN("model");

namespace {

ModelParams zero_params(const ModelConfig& config) {
  Rng rng(0);
  ModelParams p = ModelParams::init(config, rng);
  for (auto span : p.param_spans()) {
    for (double& v : span) v = 0.0;
  }
  return p;
}

}  // namespace

TEST_CASE("encoder path shapes and zero-params degeneracy") {
  auto fx = testutil::make_model_fixture(4);
  const auto& p = fx.params;

  Matrix fr = rule_encode(p, fx.batch.attrs_encoded);
  CHECK(fr.rows() == 4);
  CHECK(fr.cols() == fx.config.rule_dim);
  CHECK(rule_encode(p, fx.batch.attrs_encoded) == fr);  // deterministic

  Matrix ft = semantic_encode(p, fx.batch.semantic_raw);
  CHECK(ft.cols() == fx.config.semantic_dim);

  Matrix joint = build_joint(fx.batch.visual, ft, fr);
  CHECK(joint.cols() == fx.config.joint_dim());
  // concatenation order: visual, semantic, rule
  CHECK(joint(0, 0) == fx.batch.visual(0, 0));
  CHECK(joint(0, fx.config.visual_dim) == ft(0, 0));
  CHECK(joint(0, fx.config.visual_dim + fx.config.semantic_dim) == fr(0, 0));

  auto [mu, logvar] = encode(p, joint);
  CHECK(mu.rows() == 4);
  CHECK(mu.cols() == fx.config.latent_dim);
  CHECK(logvar.cols() == fx.config.latent_dim);

  Matrix recon = decode(p, mu);
  CHECK(recon.cols() == fx.config.joint_dim());
  CHECK(decode(p, mu) == recon);

  ModelParams zeros = zero_params(fx.config);
  Matrix zr = rule_encode(zeros, fx.batch.attrs_encoded);
  for (double v : zr.values()) CHECK(v == 0.0);
  auto [zmu, zlv] = encode(zeros, joint);
  for (double v : zmu.values()) CHECK(v == 0.0);
  Matrix zd = decode(zeros, zmu);
  for (double v : zd.values()) CHECK(v == 0.0);
}

TEST_CASE("build_joint row-wise concatenation example") {
  Matrix v(1, 2, {1, 2});
  Matrix t(1, 1, {3});
  Matrix r(1, 1, {4});
  Matrix joint = build_joint(v, t, r);
  CHECK(joint.rows() == 1);
  CHECK(joint.cols() == 4);
  CHECK(joint(0, 0) == 1.0);
  CHECK(joint(0, 1) == 2.0);
  CHECK(joint(0, 2) == 3.0);
  CHECK(joint(0, 3) == 4.0);
  CHECK_THROWS_AS(build_joint(Matrix(2, 1), Matrix(1, 1), Matrix(1, 1)),
                  ShapeError);
}

TEST_CASE("reparameterize limits and reproducibility") {
  SUBCASE("sigma -> 0 limit returns mu") {
    Matrix mu(2, 3, 1.25);
    Matrix logvar(2, 3, -100.0);
    Rng rng(5);
    Matrix z = reparameterize(mu, logvar, rng);
    for (double v : z.values()) CHECK(std::abs(v - 1.25) < 1e-20);
  }
  SUBCASE("fixed seed reproduces z") {
    Matrix mu(3, 2, 0.0), logvar(3, 2, 0.3);
    Rng r1(9), r2(9);
    CHECK(reparameterize(mu, logvar, r1) == reparameterize(mu, logvar, r2));
  }
  SUBCASE("standard normal moments over 10k draws") {
    Matrix mu(1, 1, 0.0), logvar(1, 1, 0.0);
    Rng rng(123);
    double sum = 0.0, sum_sq = 0.0;
    const int n = 10000;
    for (int i = 0; i < n; ++i) {
      const double z = reparameterize(mu, logvar, rng)(0, 0);
      sum += z;
      sum_sq += z * z;
    }
    const double mean = sum / n;
    const double var = sum_sq / n - mean * mean;
    CHECK(std::abs(mean) < 0.05);
    CHECK(std::abs(var - 1.0) < 0.05);
  }
}

TEST_CASE("loss_kl unit values") {
  CHECK(loss_kl(Matrix(1, 1, {0.0}), Matrix(1, 1, {0.0})) == 0.0);
  CHECK(loss_kl(Matrix(1, 1, {1.0}), Matrix(1, 1, {0.0})) ==
        doctest::Approx(0.5));
  // d=1, mu=0, logvar=ln 2 -> (1 - ln 2)/2
  CHECK(loss_kl(Matrix(1, 1, {0.0}), Matrix(1, 1, {std::log(2.0)})) ==
        doctest::Approx(0.15342640972002736));
}

TEST_CASE("loss_kl is non-negative (it is a KL divergence)") {
  Rng rng(77);
  for (int trial = 0; trial < 200; ++trial) {
    Matrix mu(3, 4), logvar(3, 4);
    for (double& v : mu.values()) v = 2.0 * rng.normal();
    for (double& v : logvar.values()) v = 2.0 * rng.normal();
    CHECK(loss_kl(mu, logvar) >= 0.0);
  }
}

TEST_CASE("loss_consistency unit values and oracle") {
  SUBCASE("positively scaled rows give zero") {
    Matrix f(3, 2, {1, 0, 0, 1, 1, 1});
    Matrix z(3, 2, {2, 0, 0, 5, 0.3, 0.3});
    CHECK(loss_consistency(z, f) == doctest::Approx(0.0).epsilon(1e-12));
  }
  SUBCASE("batch 2 with cos(z)=1 and cos(f)=0 gives 1") {
    Matrix z(2, 2, {1, 1, 2, 2});
    Matrix f(2, 2, {1, 0, 0, 1});
    CHECK(loss_consistency(z, f) == doctest::Approx(1.0));
  }
  SUBCASE("random 4x3 matches the double-loop oracle within 1e-12") {
    Rng rng(15);
    Matrix z(4, 3), f(4, 3);
    for (double& v : z.values()) v = rng.normal();
    for (double& v : f.values()) v = rng.normal();

    auto cosine = [](std::span<const double> a, std::span<const double> b) {
      double dot = 0, na = 0, nb = 0;
      for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
      }
      return (na == 0 || nb == 0) ? 0.0 : dot / std::sqrt(na * nb);
    };
    double acc = 0;
    int pairs = 0;
    for (int i = 0; i < 4; ++i) {
      for (int j = 0; j < 4; ++j) {
        if (i == j) continue;
        const double d = cosine(z.row(i), z.row(j)) - cosine(f.row(i), f.row(j));
        acc += d * d;
        ++pairs;
      }
    }
    CHECK(std::abs(loss_consistency(z, f) - acc / pairs) < 1e-12);
  }
  SUBCASE("batch below 2 is a usage error") {
    CHECK_THROWS_AS(loss_consistency(Matrix(1, 2), Matrix(1, 2)), UsageError);
  }
}

TEST_CASE("loss_violation unit values") {
  SUBCASE("saturated predictions are effectively exact") {
    Matrix pred(2, 2, {100, -100, -100, 100});
    Matrix target(2, 2, {1, 0, 0, 1});
    CHECK(loss_violation(pred, target) < 1e-10);
  }
  SUBCASE("all-zero logits against zero targets give 0.25") {
    CHECK(loss_violation(Matrix(3, 2, 0.0), Matrix(3, 2, 0.0)) ==
          doctest::Approx(0.25));
  }
  SUBCASE("mixed 2x2 case matches the hand value") {
    Matrix pred(2, 2, {1, -1, 2, 0});
    Matrix target(2, 2, {1, 0, 0, 1});
    CHECK(loss_violation(pred, target) ==
          doctest::Approx(0.29261561720785056).epsilon(1e-12));
  }
  SUBCASE("non-binary target is a usage error") {
    CHECK_THROWS_AS(loss_violation(Matrix(1, 1, {0.0}), Matrix(1, 1, {0.5})),
                    UsageError);
  }
}

TEST_CASE("total_loss combines components exactly") {
  auto fx = testutil::make_model_fixture(6);

  SUBCASE("alpha=0, beta=0 reduces to reconstruction") {
    Rng rng(3);
    LossBreakdown loss = total_loss(fx.params, fx.batch, 0.0, 0.0, rng);
    CHECK(loss.total == doctest::Approx(loss.recon).epsilon(1e-12));
  }
  SUBCASE("alpha=0 still evaluates rule components") {
    Rng rng(3);
    LossBreakdown loss = total_loss(fx.params, fx.batch, 0.0, 1.0, rng);
    CHECK(loss.consistency > 0.0);
    CHECK(loss.violation > 0.0);
    CHECK(loss.total ==
          doctest::Approx(loss.recon + loss.kl).epsilon(1e-12));
  }
  SUBCASE("breakdown linearity at alpha=0.15, beta=1") {
    Rng rng(3);
    LossBreakdown loss = total_loss(fx.params, fx.batch, 0.15, 1.0, rng);
    const double expected =
        loss.recon + 1.0 * loss.kl + 0.15 * (loss.consistency + loss.violation);
    CHECK(std::abs(loss.total - expected) < 1e-10);
    CHECK(loss.recon >= 0.0);
    CHECK(loss.kl >= 0.0);
    CHECK(loss.consistency >= 0.0);
    CHECK(loss.violation >= 0.0);
  }
}

TEST_CASE("every loss component matches finite differences") {
  auto fx = testutil::make_model_fixture(6, 8, 11);
  const double alpha = 0.15, beta = 1.0;

  auto graph = build_loss_graph(fx.params, fx.batch, alpha, beta, fx.eps);
  struct Component {
    const char* name;
    const diffnet::Var* var;
  };
  const Component components[] = {{"recon", &graph.recon},
                                  {"kl", &graph.kl},
                                  {"consistency", &graph.consistency},
                                  {"violation", &graph.violation},
                                  {"total", &graph.total}};

  auto spans = fx.params.param_spans();
  for (const auto& comp : components) {
    auto grads = diffnet::compute_gradients(*comp.var, graph.params);
    auto eval = [&] {
      auto g = build_loss_graph(fx.params, fx.batch, alpha, beta, fx.eps);
      if (comp.var == &graph.recon) return g.recon.value()(0, 0);
      if (comp.var == &graph.kl) return g.kl.value()(0, 0);
      if (comp.var == &graph.consistency) return g.consistency.value()(0, 0);
      if (comp.var == &graph.violation) return g.violation.value()(0, 0);
      return g.total.value()(0, 0);
    };
    for (std::size_t t = 0; t < spans.size(); ++t) {
      auto numeric = testutil::finite_diff(spans[t], eval);
      for (std::size_t i = 0; i < numeric.size(); ++i) {
        CHECK_MESSAGE(
            testutil::grad_close(grads.tensors[t].values()[i], numeric[i]),
            std::string(comp.name), " tensor ", t, " index ", i, ": analytic ",
            grads.tensors[t].values()[i], " vs fd ", numeric[i]);
      }
    }
  }
}

TEST_CASE("rule_weight_schedule ramp") {
  TrainConfig cfg;
  cfg.epochs = 40;
  cfg.alpha_max = 0.15;
  cfg.warmup_fraction = 0.5;
  CHECK(rule_weight_schedule(1, cfg) == 0.0);
  CHECK(rule_weight_schedule(20, cfg) == doctest::Approx(0.15));
  CHECK(rule_weight_schedule(40, cfg) == doctest::Approx(0.15));
  CHECK(rule_weight_schedule(10, cfg) ==
        doctest::Approx(0.15 * 9.0 / 19.0));
  // monotone along the ramp
  for (std::size_t e = 2; e <= 40; ++e) {
    CHECK(rule_weight_schedule(e, cfg) >= rule_weight_schedule(e - 1, cfg));
  }

  cfg.warmup_fraction = 0.0;
  CHECK(rule_weight_schedule(1, cfg) == doctest::Approx(0.15));
  CHECK_THROWS_AS(rule_weight_schedule(0, cfg), UsageError);
  CHECK_THROWS_AS(rule_weight_schedule(41, cfg), UsageError);
}

TEST_CASE("train: deterministic, finite, and reconstruction improves") {
  auto fx = testutil::make_model_fixture(12);
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.batch_size = 6;
  cfg.alpha_max = 0.0;
  cfg.seed = 2024;
  cfg.provisional_period = 2;
  cfg.provisional_k = 2;

  auto r1 = train(fx.dataset, fx.ruleset, fx.config, cfg);
  CHECK(r1.history.size() == cfg.epochs);
  for (const auto& row : r1.history) {
    CHECK(std::isfinite(row.total));
    const double expected = row.recon + row.beta * row.kl +
                            row.alpha * (row.consistency + row.violation);
    CHECK(std::abs(row.total - expected) < 1e-10);
  }
  CHECK(r1.history.back().recon < r1.initial.recon);

  auto r2 = train(fx.dataset, fx.ruleset, fx.config, cfg);
  CHECK(r1.params == r2.params);
  for (std::size_t e = 0; e < r1.history.size(); ++e) {
    CHECK(r1.history[e].total == r2.history[e].total);  // bit-identical
  }
}

TEST_CASE("embed returns latent means deterministically") {
  auto fx = testutil::make_model_fixture(5);
  Matrix z = embed(fx.params, fx.dataset);
  CHECK(z.rows() == 5);
  CHECK(z.cols() == fx.config.latent_dim);

  // matches encode(...).mu exactly
  const Matrix joint = build_joint(
      fx.batch.visual, semantic_encode(fx.params, fx.batch.semantic_raw),
      rule_encode(fx.params, fx.batch.attrs_encoded));
  CHECK(z == encode(fx.params, joint).mu);

  // identical records embed to identical rows
  features::Dataset twin = fx.dataset;
  twin.records[1] = twin.records[0];
  twin.records[1].id = "copy";
  Matrix tz = embed(fx.params, twin);
  for (std::size_t d = 0; d < tz.cols(); ++d) {
    CHECK(tz(0, d) == tz(1, d));
  }
}

TEST_CASE("checkpoint round trip preserves params exactly") {
  auto fx = testutil::make_model_fixture(4);
  const auto path =
      std::filesystem::temp_directory_path() / "dartvae_ckpt_test.dvae";
  save_checkpoint(fx.params, path);
  ModelParams loaded = load_checkpoint(path);
  CHECK(loaded == fx.params);

  SUBCASE("bad magic is rejected") {
    std::ofstream bad(path, std::ios::binary);
    bad << "NOPE not a checkpoint";
    bad.close();
    CHECK_THROWS_AS(load_checkpoint(path), LoadError);
  }
}

TEST_SUITE_END();
