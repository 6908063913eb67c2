#include "dartvae/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include <json.hpp>

#include "dartvae/errors.hpp"

namespace dartvae::metrics {

using diffnet::Matrix;
using nlohmann::json;

namespace {

std::size_t infer_k(std::span<const int> labels) {
  int max_label = -1;
  for (int l : labels) {
    if (l < 0) throw UsageError("metrics: negative cluster label");
    max_label = std::max(max_label, l);
  }
  return static_cast<std::size_t>(max_label + 1);
}

std::vector<std::size_t> cluster_sizes(std::span<const int> labels,
                                       std::size_t k) {
  std::vector<std::size_t> sizes(k, 0);
  for (int l : labels) ++sizes[static_cast<std::size_t>(l)];
  return sizes;
}

void require_non_empty_clusters(const std::vector<std::size_t>& sizes,
                                const char* what) {
  for (std::size_t c = 0; c < sizes.size(); ++c) {
    if (sizes[c] == 0) {
      throw UsageError(std::string(what) + ": cluster " + std::to_string(c) +
                       " is empty");
    }
  }
}

Matrix cluster_means(const Matrix& z, std::span<const int> labels,
                     std::size_t k, const std::vector<std::size_t>& sizes) {
  Matrix means(k, z.cols());
  for (std::size_t i = 0; i < z.rows(); ++i) {
    auto dst = means.row(static_cast<std::size_t>(labels[i]));
    const auto row = z.row(i);
    for (std::size_t d = 0; d < row.size(); ++d) dst[d] += row[d];
  }
  for (std::size_t c = 0; c < k; ++c) {
    if (sizes[c] == 0) continue;
    for (double& x : means.row(c)) x /= static_cast<double>(sizes[c]);
  }
  return means;
}

/// Remaps labels to 0..k'-1 keeping first-appearance order, dropping
/// empty clusters. Used where downstream formulas need every cluster
/// occupied (hardened soft assignments can empty a cluster).
std::vector<int> compact_labels(std::span<const int> labels) {
  std::vector<int> remap(infer_k(labels), -1);
  std::vector<int> out(labels.size());
  int next = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    int& slot = remap[static_cast<std::size_t>(labels[i])];
    if (slot < 0) slot = next++;
    out[i] = slot;
  }
  return out;
}

}  // namespace

double silhouette(const Matrix& z, std::span<const int> labels) {
  const std::size_t n = z.rows();
  if (labels.size() != n) throw UsageError("silhouette: size mismatch");
  const std::size_t k = infer_k(labels);
  if (k < 2) throw UsageError("silhouette: needs at least 2 clusters");
  const auto sizes = cluster_sizes(labels, k);
  require_non_empty_clusters(sizes, "silhouette");

  double acc = 0.0;
  std::vector<double> mean_dist(k);
  for (std::size_t i = 0; i < n; ++i) {
    const auto own = static_cast<std::size_t>(labels[i]);
    if (sizes[own] == 1) continue;  // singleton convention: s(i) = 0
    std::fill(mean_dist.begin(), mean_dist.end(), 0.0);
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      mean_dist[static_cast<std::size_t>(labels[j])] +=
          diffnet::euclidean_distance(z.row(i), z.row(j));
    }
    const double a =
        mean_dist[own] / static_cast<double>(sizes[own] - 1);
    double b = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < k; ++c) {
      if (c == own) continue;
      b = std::min(b, mean_dist[c] / static_cast<double>(sizes[c]));
    }
    const double denom = std::max(a, b);
    acc += denom > 0.0 ? (b - a) / denom : 0.0;
  }
  return acc / static_cast<double>(n);
}

double davies_bouldin(const Matrix& z, std::span<const int> labels) {
  const std::size_t n = z.rows();
  if (labels.size() != n) throw UsageError("davies_bouldin: size mismatch");
  const std::size_t k = infer_k(labels);
  if (k < 2) throw UsageError("davies_bouldin: needs at least 2 clusters");
  const auto sizes = cluster_sizes(labels, k);
  require_non_empty_clusters(sizes, "davies_bouldin");
  const Matrix means = cluster_means(z, labels, k, sizes);

  std::vector<double> scatter(k, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const auto c = static_cast<std::size_t>(labels[i]);
    scatter[c] += diffnet::euclidean_distance(z.row(i), means.row(c));
  }
  for (std::size_t c = 0; c < k; ++c) {
    scatter[c] /= static_cast<double>(sizes[c]);
  }

  double acc = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    double worst = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      if (i == j) continue;
      const double sep =
          diffnet::euclidean_distance(means.row(i), means.row(j));
      if (sep == 0.0) {
        throw UsageError("davies_bouldin: clusters " + std::to_string(i) +
                         " and " + std::to_string(j) +
                         " have coincident centroids");
      }
      worst = std::max(worst, (scatter[i] + scatter[j]) / sep);
    }
    acc += worst;
  }
  return acc / static_cast<double>(k);
}

double calinski_harabasz(const Matrix& z, std::span<const int> labels) {
  const std::size_t n = z.rows();
  if (labels.size() != n) {
    throw UsageError("calinski_harabasz: size mismatch");
  }
  const std::size_t k = infer_k(labels);
  if (k < 2) throw UsageError("calinski_harabasz: needs at least 2 clusters");
  if (n <= k) throw UsageError("calinski_harabasz: needs N > k");
  const auto sizes = cluster_sizes(labels, k);
  require_non_empty_clusters(sizes, "calinski_harabasz");
  const Matrix means = cluster_means(z, labels, k, sizes);

  std::vector<double> global(z.cols(), 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const auto row = z.row(i);
    for (std::size_t d = 0; d < row.size(); ++d) global[d] += row[d];
  }
  for (double& x : global) x /= static_cast<double>(n);

  // between-cluster dispersion over centroids (unweighted trace form)
  double between = 0.0;
  for (std::size_t c = 0; c < k; ++c) {
    between += diffnet::squared_distance(means.row(c), global);
  }
  double within = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    within += diffnet::squared_distance(
        z.row(i), means.row(static_cast<std::size_t>(labels[i])));
  }
  if (within == 0.0) return std::numeric_limits<double>::infinity();
  return (between / static_cast<double>(k - 1)) /
         (within / static_cast<double>(n - k));
}

namespace {

void validate_memberships(const Matrix& u, const char* what) {
  if (u.rows() == 0 || u.cols() == 0) {
    throw UsageError(std::string(what) + ": empty membership matrix");
  }
  for (std::size_t i = 0; i < u.rows(); ++i) {
    double row_sum = 0.0;
    for (std::size_t c = 0; c < u.cols(); ++c) {
      const double v = u(i, c);
      if (v < -1e-9 || v > 1.0 + 1e-9) {
        throw UsageError(std::string(what) + ": membership out of [0,1]");
      }
      row_sum += v;
    }
    if (std::abs(row_sum - 1.0) > 1e-6) {
      throw UsageError(std::string(what) + ": row " + std::to_string(i) +
                       " sums to " + std::to_string(row_sum));
    }
  }
}

}  // namespace

double fpc(const Matrix& u) {
  validate_memberships(u, "fpc");
  double acc = 0.0;
  for (double v : u.values()) acc += v * v;
  return acc / static_cast<double>(u.rows());
}

double fpe(const Matrix& u) {
  validate_memberships(u, "fpe");
  double acc = 0.0;
  for (double v : u.values()) {
    if (v > 0.0) acc += v * std::log(v);
  }
  return -acc / static_cast<double>(u.rows());
}

double mean_membership(const Matrix& u) {
  validate_memberships(u, "mean_membership");
  double acc = 0.0;
  for (std::size_t i = 0; i < u.rows(); ++i) {
    double best = 0.0;
    for (std::size_t c = 0; c < u.cols(); ++c) best = std::max(best, u(i, c));
    acc += best;
  }
  return acc / static_cast<double>(u.rows());
}

double fuzzy_silhouette(const Matrix& z, const Matrix& u) {
  validate_memberships(u, "fuzzy_silhouette");
  if (u.cols() < 2) {
    throw UsageError("fuzzy_silhouette: needs at least 2 clusters");
  }
  const std::size_t n = u.rows();

  std::vector<int> hard(n);
  std::vector<double> weight(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < u.cols(); ++c) {
      if (u(i, c) > u(i, best)) best = c;
    }
    hard[i] = static_cast<int>(best);
    double top = -1.0, second = -1.0;
    for (std::size_t c = 0; c < u.cols(); ++c) {
      const double v = u(i, c);
      if (v > top) {
        second = top;
        top = v;
      } else if (v > second) {
        second = v;
      }
    }
    weight[i] = top - second;  // gamma = 1
  }

  double weight_sum = 0.0;
  for (double w : weight) weight_sum += w;
  if (weight_sum == 0.0) {
    throw UsageError("fuzzy_silhouette: all weights zero (uniform "
                     "memberships)");
  }

  // crisp per-sample silhouettes under the hardened, compacted labels
  const std::vector<int> labels = compact_labels(hard);
  const std::size_t k = infer_k(labels);
  if (k < 2) {
    throw UsageError("fuzzy_silhouette: hardened labels collapse to one "
                     "cluster");
  }
  const auto sizes = cluster_sizes(labels, k);
  double num = 0.0;
  std::vector<double> mean_dist(k);
  for (std::size_t i = 0; i < n; ++i) {
    const auto own = static_cast<std::size_t>(labels[i]);
    double s = 0.0;
    if (sizes[own] > 1) {
      std::fill(mean_dist.begin(), mean_dist.end(), 0.0);
      for (std::size_t j = 0; j < n; ++j) {
        if (i == j) continue;
        mean_dist[static_cast<std::size_t>(labels[j])] +=
            diffnet::euclidean_distance(z.row(i), z.row(j));
      }
      const double a = mean_dist[own] / static_cast<double>(sizes[own] - 1);
      double b = std::numeric_limits<double>::infinity();
      for (std::size_t c = 0; c < k; ++c) {
        if (c == own) continue;
        b = std::min(b, mean_dist[c] / static_cast<double>(sizes[c]));
      }
      const double denom = std::max(a, b);
      s = denom > 0.0 ? (b - a) / denom : 0.0;
    }
    num += weight[i] * s;
  }
  return num / weight_sum;
}

namespace {

EvaluationReport evaluate_impl(const Matrix& z,
                               const std::vector<int>& labels, std::size_t k,
                               const std::optional<SoftMetrics>& soft,
                               const rules::RuleSet& ruleset,
                               const std::vector<rules::AttributeVector>& attrs,
                               RunMeta meta) {
  EvaluationReport report;
  const std::vector<int> compact = compact_labels(labels);
  report.hard.silhouette = silhouette(z, compact);
  report.hard.davies_bouldin = davies_bouldin(z, compact);
  report.hard.calinski_harabasz = calinski_harabasz(z, compact);
  report.soft = soft;
  report.violations = rules::violation_report(ruleset, labels, k, attrs);
  report.meta = std::move(meta);
  return report;
}

}  // namespace

EvaluationReport evaluate(const Matrix& z,
                          const clustering::HardAssignment& assignment,
                          const rules::RuleSet& ruleset,
                          const std::vector<rules::AttributeVector>& attrs,
                          RunMeta meta) {
  const std::size_t k =
      std::max(assignment.k(), infer_k(assignment.labels));
  return evaluate_impl(z, assignment.labels, k, std::nullopt, ruleset, attrs,
                       std::move(meta));
}

EvaluationReport evaluate(const Matrix& z,
                          const clustering::SoftAssignment& assignment,
                          const rules::RuleSet& ruleset,
                          const std::vector<rules::AttributeVector>& attrs,
                          RunMeta meta) {
  SoftMetrics soft;
  soft.fpc = fpc(assignment.memberships);
  soft.fpe = fpe(assignment.memberships);
  soft.mean_membership = mean_membership(assignment.memberships);
  soft.fuzzy_silhouette = fuzzy_silhouette(z, assignment.memberships);
  const auto hard = clustering::harden(assignment, z);
  return evaluate_impl(z, hard.labels, hard.k(), soft, ruleset, attrs,
                       std::move(meta));
}

namespace {

json finite_or_string(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return v;
}

double double_or_sentinel(const json& j) {
  if (j.is_string()) {
    const std::string s = j.get<std::string>();
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    throw ParseError("report: unknown numeric sentinel '" + s + "'");
  }
  return j.get<double>();
}

}  // namespace

std::string report_to_json(const EvaluationReport& report) {
  json j;
  j["meta"] = {{"config_id", report.meta.config_id},
               {"method", report.meta.method},
               {"k", report.meta.k},
               {"seed", report.meta.seed}};
  j["hard"] = {{"silhouette", report.hard.silhouette},
               {"davies_bouldin", report.hard.davies_bouldin},
               {"calinski_harabasz",
                finite_or_string(report.hard.calinski_harabasz)}};
  if (report.soft) {
    j["soft"] = {{"fpc", report.soft->fpc},
                 {"fpe", report.soft->fpe},
                 {"mean_membership", report.soft->mean_membership},
                 {"fuzzy_silhouette", report.soft->fuzzy_silhouette}};
  }
  json violations = json::array();
  for (std::size_t r = 0; r < report.violations.per_rule.size(); ++r) {
    const auto& stats = report.violations.per_rule[r];
    json entry = {{"rule_id", stats.rule_id},
                  {"count", stats.count},
                  {"rate", stats.rate},
                  {"per_cluster_mean", stats.per_cluster_mean}};
    json flags = json::array();
    for (auto f : report.violations.flags[r]) flags.push_back(f != 0);
    entry["flags"] = std::move(flags);
    violations.push_back(std::move(entry));
  }
  j["violations"] = std::move(violations);
  return j.dump(2);
}

EvaluationReport report_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ParseError(std::string("report: malformed JSON: ") + e.what());
  }
  EvaluationReport report;
  report.meta.config_id = j.at("meta").at("config_id").get<std::string>();
  report.meta.method = j.at("meta").at("method").get<std::string>();
  report.meta.k = j.at("meta").at("k").get<std::size_t>();
  report.meta.seed = j.at("meta").at("seed").get<std::uint64_t>();
  report.hard.silhouette = j.at("hard").at("silhouette").get<double>();
  report.hard.davies_bouldin =
      j.at("hard").at("davies_bouldin").get<double>();
  report.hard.calinski_harabasz =
      double_or_sentinel(j.at("hard").at("calinski_harabasz"));
  if (j.contains("soft")) {
    SoftMetrics soft;
    soft.fpc = j["soft"].at("fpc").get<double>();
    soft.fpe = j["soft"].at("fpe").get<double>();
    soft.mean_membership = j["soft"].at("mean_membership").get<double>();
    soft.fuzzy_silhouette = j["soft"].at("fuzzy_silhouette").get<double>();
    report.soft = soft;
  }
  for (const json& entry : j.at("violations")) {
    rules::RuleViolationStats stats;
    stats.rule_id = entry.at("rule_id").get<std::string>();
    stats.count = entry.at("count").get<std::size_t>();
    stats.rate = entry.at("rate").get<double>();
    stats.per_cluster_mean = entry.at("per_cluster_mean").get<double>();
    report.violations.per_rule.push_back(std::move(stats));
    std::vector<std::uint8_t> flags;
    for (const json& f : entry.at("flags")) {
      flags.push_back(f.get<bool>() ? 1 : 0);
    }
    report.violations.flags.push_back(std::move(flags));
  }
  return report;
}

namespace {

std::string format_double(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

std::string report_csv_header(const EvaluationReport& report) {
  std::string header =
      "config_id,method,k,seed,ss,db,ch,fpc,fpe,ms,fs";
  for (const auto& stats : report.violations.per_rule) {
    header += ",viol_" + stats.rule_id + "_count";
    header += ",viol_" + stats.rule_id + "_rate";
    header += ",viol_" + stats.rule_id + "_cluster_mean";
  }
  return header;
}

std::string report_csv_row(const EvaluationReport& report) {
  std::string row = report.meta.config_id + "," + report.meta.method + "," +
                    std::to_string(report.meta.k) + "," +
                    std::to_string(report.meta.seed);
  row += "," + format_double(report.hard.silhouette);
  row += "," + format_double(report.hard.davies_bouldin);
  row += "," + format_double(report.hard.calinski_harabasz);
  if (report.soft) {
    row += "," + format_double(report.soft->fpc);
    row += "," + format_double(report.soft->fpe);
    row += "," + format_double(report.soft->mean_membership);
    row += "," + format_double(report.soft->fuzzy_silhouette);
  } else {
    row += ",,,,";
  }
  for (const auto& stats : report.violations.per_rule) {
    row += "," + std::to_string(stats.count);
    row += "," + format_double(stats.rate);
    row += "," + format_double(stats.per_cluster_mean);
  }
  return row;
}

}  // namespace dartvae::metrics
