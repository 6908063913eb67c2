// Batch front-end for the rule-guided clustering pipeline:
//   generate  synthesize a dataset from a spec file
//   train     fit the model, write checkpoint + loss history
//   cluster   embed, cluster, optionally refine, write reports
//   compare   merge evaluation reports into one CSV table
//
// Exit codes: 0 ok, 2 config/validation, 3 training failure,
// 4 model/data mismatch, 5 report merge conflict.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "dartvae/checkpoint.hpp"
#include "dartvae/clustering.hpp"
#include "dartvae/errors.hpp"
#include "dartvae/features.hpp"
#include "dartvae/metrics.hpp"
#include "dartvae/model.hpp"
#include "dartvae/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace dartvae;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitTraining = 3;
constexpr int kExitMismatch = 4;
constexpr int kExitMerge = 5;

struct RunConfig {
  fs::path dataset_manifest;
  fs::path rule_file;
  fs::path out_dir;
  bool standardize = true;
  bool refine = true;
  std::string config_id = "run";
  model::ModelConfig model;
  model::TrainConfig train;
  struct {
    std::string method = "kmeans";
    std::size_t k = 4;
    double m = 2.0;
    std::uint64_t seed = 0;
  } clustering;
};

std::string read_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

RunConfig parse_run_config(const fs::path& path) {
  json doc;
  try {
    doc = json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw ParseError("config '" + path.string() + "': " + e.what());
  }
  RunConfig cfg;
  for (const char* key : {"dataset", "rules", "out"}) {
    if (!doc.contains(key)) {
      throw ParseError("config: missing '" + std::string(key) + "'");
    }
  }
  const fs::path base = path.parent_path();
  auto resolve = [&](const std::string& p) {
    fs::path fp(p);
    return fp.is_relative() ? base / fp : fp;
  };
  cfg.dataset_manifest = resolve(doc["dataset"].get<std::string>());
  cfg.rule_file = resolve(doc["rules"].get<std::string>());
  cfg.out_dir = resolve(doc["out"].get<std::string>());
  cfg.standardize = doc.value("standardize", true);
  cfg.refine = doc.value("refine", true);
  cfg.config_id = doc.value("config_id", std::string("run"));

  if (doc.contains("model")) {
    const json& m = doc["model"];
    auto get = [&](const char* key, std::size_t fallback) {
      return m.value(key, fallback);
    };
    cfg.model.semantic_dim = get("semantic_dim", cfg.model.semantic_dim);
    cfg.model.rule_dim = get("rule_dim", cfg.model.rule_dim);
    cfg.model.semantic_hidden =
        get("semantic_hidden", cfg.model.semantic_hidden);
    cfg.model.rule_hidden = get("rule_hidden", cfg.model.rule_hidden);
    cfg.model.predictor_hidden =
        get("predictor_hidden", cfg.model.predictor_hidden);
    cfg.model.hidden1 = get("hidden1", cfg.model.hidden1);
    cfg.model.hidden2 = get("hidden2", cfg.model.hidden2);
    cfg.model.latent_dim = get("latent_dim", cfg.model.latent_dim);
  }
  if (doc.contains("train")) {
    const json& t = doc["train"];
    cfg.train.epochs = t.value("epochs", cfg.train.epochs);
    cfg.train.batch_size = t.value("batch_size", cfg.train.batch_size);
    cfg.train.learning_rate =
        t.value("learning_rate", cfg.train.learning_rate);
    cfg.train.weight_decay = t.value("weight_decay", cfg.train.weight_decay);
    cfg.train.beta = t.value("beta", cfg.train.beta);
    cfg.train.alpha_max = t.value("alpha_max", cfg.train.alpha_max);
    cfg.train.warmup_fraction =
        t.value("warmup_fraction", cfg.train.warmup_fraction);
    cfg.train.provisional_period =
        t.value("provisional_period", cfg.train.provisional_period);
    cfg.train.provisional_k = t.value("provisional_k", std::size_t{0});
    cfg.train.seed = t.value("seed", cfg.train.seed);
  }
  if (doc.contains("clustering")) {
    const json& c = doc["clustering"];
    cfg.clustering.method = c.value("method", cfg.clustering.method);
    cfg.clustering.k = c.value("k", cfg.clustering.k);
    cfg.clustering.m = c.value("m", cfg.clustering.m);
    cfg.clustering.seed = c.value("seed", cfg.clustering.seed);
  }
  if (cfg.clustering.method != "kmeans" && cfg.clustering.method != "fcm") {
    throw ParseError("config: clustering.method must be 'kmeans' or 'fcm'");
  }
  if (cfg.clustering.k < 1) throw ParseError("config: clustering.k must be >= 1");
  if (cfg.train.provisional_k == 0) {
    cfg.train.provisional_k = cfg.clustering.k;
  }
  return cfg;
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

features::Dataset load_pipeline_dataset(const RunConfig& cfg,
                                        const rules::RuleSet& ruleset) {
  features::Dataset ds = features::load_dataset(cfg.dataset_manifest);
  if (!(ds.schema == ruleset.schema)) {
    throw UsageError("dataset schema does not match rule file schema");
  }
  if (cfg.standardize && ds.size() >= 2) {
    ds = features::standardize(ds);
  }
  return ds;
}

int cmd_generate(const fs::path& spec_path, const fs::path& manifest_path) {
  const auto spec = features::load_synthetic_spec(spec_path);
  const auto dataset = features::generate_synthetic(spec);
  fs::path records = manifest_path;
  records.replace_extension(".records.jsonl");
  if (manifest_path.parent_path() != fs::path()) {
    fs::create_directories(manifest_path.parent_path());
  }
  features::save_dataset(dataset, manifest_path, records);
  std::cout << "wrote " << dataset.size() << " records to "
            << records.string() << "\n";
  return kExitOk;
}

int cmd_train(const RunConfig& cfg) {
  const auto ruleset = rules::load_ruleset(cfg.rule_file);
  if (ruleset.rule_count() == 0) {
    throw UsageError("training needs at least one rule (use alpha_max=0 to "
                     "neutralize them)");
  }
  const auto dataset = load_pipeline_dataset(cfg, ruleset);

  model::TrainResult result;
  try {
    result = model::train(dataset, ruleset, cfg.model, cfg.train);
  } catch (const TrainingError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitTraining;
  }

  fs::create_directories(cfg.out_dir);
  model::save_checkpoint(result.params, cfg.out_dir / "checkpoint.dvae");

  std::ofstream history(cfg.out_dir / "history.csv");
  history << "epoch,alpha,recon,kl,consistency,violation,total\n";
  for (std::size_t e = 0; e < result.history.size(); ++e) {
    const auto& loss = result.history[e];
    history << (e + 1) << "," << format_double(loss.alpha) << ","
            << format_double(loss.recon) << "," << format_double(loss.kl)
            << "," << format_double(loss.consistency) << ","
            << format_double(loss.violation) << ","
            << format_double(loss.total) << "\n";
  }
  std::cout << "checkpoint: " << (cfg.out_dir / "checkpoint.dvae").string()
            << "\nfinal total loss: "
            << format_double(result.history.back().total) << "\n";
  return kExitOk;
}

json assignment_to_json(const clustering::HardAssignment& hard,
                        const std::optional<clustering::SoftAssignment>& soft,
                        const std::optional<clustering::RefinementLog>& log) {
  json j;
  j["k"] = hard.k();
  j["labels"] = hard.labels;
  json centroids = json::array();
  for (std::size_t c = 0; c < hard.centroids.rows(); ++c) {
    centroids.push_back(std::vector<double>(hard.centroids.row(c).begin(),
                                            hard.centroids.row(c).end()));
  }
  j["centroids"] = std::move(centroids);
  j["inertia"] = hard.inertia;
  if (soft) {
    json memberships = json::array();
    for (std::size_t i = 0; i < soft->memberships.rows(); ++i) {
      memberships.push_back(std::vector<double>(
          soft->memberships.row(i).begin(), soft->memberships.row(i).end()));
    }
    j["memberships"] = std::move(memberships);
    j["fuzzifier"] = soft->fuzzifier;
    j["objective"] = soft->objective;
  }
  if (log) {
    json moves = json::array();
    for (const auto& move : log->moves) {
      moves.push_back({{"sample", move.sample_id},
                       {"rule", move.rule_id},
                       {"from", move.from_cluster},
                       {"to", move.to_cluster},
                       {"distance", move.centroid_distance}});
    }
    j["refinement_log"] = std::move(moves);
    j["refinement_passes"] = log->passes;
    json unresolved = json::array();
    for (const auto& flag : log->unresolved) {
      unresolved.push_back({{"sample", flag.sample_id}, {"rule", flag.rule_id}});
    }
    j["unresolved"] = std::move(unresolved);
  }
  return j;
}

int cmd_cluster(const RunConfig& cfg, const fs::path& checkpoint_path) {
  const auto ruleset = rules::load_ruleset(cfg.rule_file);
  const auto dataset = load_pipeline_dataset(cfg, ruleset);
  const auto params = model::load_checkpoint(checkpoint_path);

  if (params.config.visual_dim != dataset.visual_dim ||
      params.config.semantic_raw_dim != dataset.semantic_dim ||
      params.config.attr_width != rules::encoded_width(dataset.schema) ||
      params.config.rule_count != ruleset.rule_count()) {
    std::cerr << "error: checkpoint dimensions do not match dataset/rules\n";
    return kExitMismatch;
  }

  const auto z = model::embed(params, dataset);
  const auto attrs = dataset.attribute_vectors();
  const auto ids = dataset.ids();

  std::optional<clustering::SoftAssignment> soft;
  clustering::HardAssignment hard;
  if (cfg.clustering.method == "fcm") {
    soft = clustering::fuzzy_cmeans(z, cfg.clustering.k, cfg.clustering.m,
                                    cfg.clustering.seed);
    hard = clustering::harden(*soft, z);
  } else {
    hard = clustering::kmeans(z, cfg.clustering.k, cfg.clustering.seed);
  }

  std::optional<clustering::RefinementLog> log;
  if (cfg.refine) {
    auto refined = clustering::refine(hard, ruleset, attrs, z, ids);
    hard = std::move(refined.assignment);
    log = std::move(refined.log);
  }

  metrics::RunMeta meta{cfg.config_id, cfg.clustering.method,
                        cfg.clustering.k, cfg.clustering.seed};
  metrics::EvaluationReport report;
  if (soft) {
    report = metrics::evaluate(z, *soft, ruleset, attrs, meta);
    if (cfg.refine) {
      // refined hard labels replace the argmax hardening in the report
      report.violations = rules::violation_report(ruleset, hard.labels,
                                                  hard.k(), attrs);
    }
  } else {
    report = metrics::evaluate(z, hard, ruleset, attrs, meta);
  }

  fs::create_directories(cfg.out_dir);
  {
    std::ofstream out(cfg.out_dir / "assignment.json");
    out << assignment_to_json(hard, soft, log).dump(2) << "\n";
  }
  {
    std::ofstream out(cfg.out_dir / "latent.csv");
    out << "id";
    for (std::size_t d = 0; d < z.cols(); ++d) out << ",z" << d;
    out << "\n";
    for (std::size_t i = 0; i < z.rows(); ++i) {
      out << ids[i];
      for (double v : z.row(i)) out << "," << format_double(v);
      out << "\n";
    }
  }
  {
    std::ofstream out(cfg.out_dir / "report.json");
    out << metrics::report_to_json(report) << "\n";
  }
  std::cout << "silhouette: " << format_double(report.hard.silhouette)
            << ", violations: " << report.violations.total_count() << "\n";
  return kExitOk;
}

int cmd_compare(const std::vector<fs::path>& report_paths,
                const std::optional<fs::path>& out_dir) {
  std::vector<metrics::EvaluationReport> reports;
  for (const fs::path& path : report_paths) {
    reports.push_back(metrics::report_from_json(read_file(path)));
  }
  std::set<std::string> ids;
  for (const auto& report : reports) {
    if (!ids.insert(report.meta.config_id).second) {
      std::cerr << "error: duplicate configuration id '"
                << report.meta.config_id << "'\n";
      return kExitMerge;
    }
  }
  const std::string header = metrics::report_csv_header(reports.front());
  for (const auto& report : reports) {
    if (metrics::report_csv_header(report) != header) {
      std::cerr << "error: reports have incompatible rule configurations\n";
      return kExitMerge;
    }
  }
  std::ostringstream table;
  table << header << "\n";
  for (const auto& report : reports) {
    table << metrics::report_csv_row(report) << "\n";
  }
  if (out_dir) {
    fs::create_directories(*out_dir);
    std::ofstream out(*out_dir / "comparison.csv");
    out << table.str();
  }
  std::cout << table.str();
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"rule-guided multimodal clustering pipeline"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed_override;
  std::optional<std::string> out_override;

  auto* generate = app.add_subcommand("generate", "synthesize a dataset");
  std::string spec_path, manifest_path;
  generate->add_option("spec", spec_path, "synthetic spec JSON")->required();
  generate->add_option("manifest", manifest_path, "output manifest path")
      ->required();

  auto* train_cmd = app.add_subcommand("train", "train the model");
  train_cmd->add_option("--config", config_path, "run config JSON")
      ->required();
  train_cmd->add_option("--seed", seed_override, "seed override");
  train_cmd->add_option("--out", out_override, "output directory override");

  auto* cluster_cmd =
      app.add_subcommand("cluster", "embed, cluster and evaluate");
  std::string checkpoint_path;
  cluster_cmd->add_option("--config", config_path, "run config JSON")
      ->required();
  cluster_cmd->add_option("--checkpoint", checkpoint_path,
                          "checkpoint path (default <out>/checkpoint.dvae)");
  cluster_cmd->add_option("--seed", seed_override, "seed override");
  cluster_cmd->add_option("--out", out_override, "output directory override");

  auto* compare = app.add_subcommand("compare", "merge reports into a CSV");
  std::vector<std::string> report_paths;
  compare->add_option("reports", report_paths, "report.json paths")
      ->required()
      ->expected(-1);
  compare->add_option("--out", out_override, "output directory override");

  CLI11_PARSE(app, argc, argv);

  try {
    if (generate->parsed()) {
      return cmd_generate(spec_path, manifest_path);
    }
    if (train_cmd->parsed() || cluster_cmd->parsed()) {
      RunConfig cfg = parse_run_config(config_path);
      if (seed_override) {
        cfg.train.seed = *seed_override;
        cfg.clustering.seed = *seed_override;
      }
      if (out_override) cfg.out_dir = *out_override;
      if (train_cmd->parsed()) return cmd_train(cfg);
      fs::path ckpt = checkpoint_path.empty()
                          ? cfg.out_dir / "checkpoint.dvae"
                          : fs::path(checkpoint_path);
      return cmd_cluster(cfg, ckpt);
    }
    if (compare->parsed()) {
      std::optional<fs::path> out;
      if (out_override) out = fs::path(*out_override);
      std::vector<fs::path> paths(report_paths.begin(), report_paths.end());
      return cmd_compare(paths, out);
    }
  } catch (const TrainingError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitTraining;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  }
  return kExitOk;
}
