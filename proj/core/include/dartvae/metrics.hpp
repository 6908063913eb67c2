#pragma once

#include <optional>
#include <string>

#include "dartvae/clustering.hpp"
#include "dartvae/matrix.hpp"
#include "dartvae/rules.hpp"

namespace dartvae::metrics {

/// Mean of (b - a) / max(a, b) over samples; samples in singleton clusters
/// score 0, as does a sample with a == b == 0.
double silhouette(const diffnet::Matrix& z, std::span<const int> labels);

/// (1/k) sum_i max_j (s_i + s_j) / d(c_i, c_j) with s the mean distance of
/// members to their centroid. Coincident centroids are an error naming the
/// cluster pair.
double davies_bouldin(const diffnet::Matrix& z, std::span<const int> labels);

/// [B/(k-1)] / [W/(N-k)], trace form. Returns +infinity when W == 0.
double calinski_harabasz(const diffnet::Matrix& z,
                         std::span<const int> labels);

double fpc(const diffnet::Matrix& u);
double fpe(const diffnet::Matrix& u);
double mean_membership(const diffnet::Matrix& u);

/// Membership-weighted silhouette: weights (u_(1) - u_(2))^gamma with
/// gamma = 1, crisp silhouette over hardened labels.
double fuzzy_silhouette(const diffnet::Matrix& z, const diffnet::Matrix& u);

struct HardMetrics {
  double silhouette = 0.0;
  double davies_bouldin = 0.0;
  double calinski_harabasz = 0.0;
};

struct SoftMetrics {
  double fpc = 0.0;
  double fpe = 0.0;
  double mean_membership = 0.0;
  double fuzzy_silhouette = 0.0;
};

struct RunMeta {
  std::string config_id;
  std::string method;  // "kmeans" or "fcm"
  std::size_t k = 0;
  std::uint64_t seed = 0;
};

struct EvaluationReport {
  HardMetrics hard;
  std::optional<SoftMetrics> soft;
  rules::ViolationReport violations;
  RunMeta meta;
};

/// Hard-assignment evaluation: hard metrics + violation report.
EvaluationReport evaluate(const diffnet::Matrix& z,
                          const clustering::HardAssignment& assignment,
                          const rules::RuleSet& ruleset,
                          const std::vector<rules::AttributeVector>& attrs,
                          RunMeta meta);

/// Soft-assignment evaluation: fills both blocks (hard metrics via argmax
/// hardening).
EvaluationReport evaluate(const diffnet::Matrix& z,
                          const clustering::SoftAssignment& assignment,
                          const rules::RuleSet& ruleset,
                          const std::vector<rules::AttributeVector>& attrs,
                          RunMeta meta);

std::string report_to_json(const EvaluationReport& report);
EvaluationReport report_from_json(const std::string& text);

/// One summary row per report; header depends only on the rule ids.
std::string report_csv_header(const EvaluationReport& report);
std::string report_csv_row(const EvaluationReport& report);

}  // namespace dartvae::metrics
