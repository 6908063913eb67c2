#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "dartvae/matrix.hpp"
#include "dartvae/rules.hpp"

namespace dartvae::clustering {

struct HardAssignment {
  std::vector<int> labels;     // values in [0, k)
  diffnet::Matrix centroids;   // k x d
  double inertia = 0.0;        // within-cluster sum of squares

  std::size_t k() const { return centroids.rows(); }
};

struct SoftAssignment {
  diffnet::Matrix memberships;  // N x k, rows sum to 1
  diffnet::Matrix centroids;    // k x d
  double fuzzifier = 2.0;
  double objective = 0.0;
};

struct KMeansOptions {
  std::size_t max_iter = 300;
  double tol = 1e-6;
  std::size_t restarts = 10;
  /// Single-point exact-delta improvement sweeps after Lloyd converges.
  /// Stable points of this step are a strict subset of Lloyd fixpoints.
  bool polish = true;
};

/// Lloyd iterations with k-means++ seeding, best of `restarts` by inertia.
/// An emptied cluster claims the point farthest from its own centroid.
HardAssignment kmeans(const diffnet::Matrix& z, std::size_t k,
                      std::uint64_t seed, const KMeansOptions& opts = {});

struct FcmOptions {
  std::size_t max_iter = 300;
  double tol = 1e-6;
};

/// Standard fuzzy c-means alternating updates; converges when the largest
/// membership change drops below tol. A point coincident with a centroid
/// gets membership 1 there.
SoftAssignment fuzzy_cmeans(const diffnet::Matrix& z, std::size_t k, double m,
                            std::uint64_t seed, const FcmOptions& opts = {});

/// argmax per row (ties to the lowest index); centroids carried over.
HardAssignment harden(const SoftAssignment& soft, const diffnet::Matrix& z);

struct RefinementMove {
  std::string sample_id;
  std::string rule_id;
  int from_cluster = 0;
  int to_cluster = 0;
  double centroid_distance = 0.0;
};

struct UnresolvedFlag {
  std::string sample_id;
  std::string rule_id;
};

struct RefinementLog {
  std::vector<RefinementMove> moves;
  std::size_t passes = 0;
  std::vector<UnresolvedFlag> unresolved;
};

struct RefineResult {
  HardAssignment assignment;
  RefinementLog log;
};

/// Stage-3 rule-guided refinement: rules are swept in file order, flagged
/// samples move to the nearest-centroid cluster where their membership
/// would not violate any cluster-level rule; sweeps repeat until a full
/// pass makes no move, capped at 10 passes. Sample-level implication
/// violations are intrinsic to the attributes and are never reassigned.
/// `sample_ids` may be empty, in which case indices are used in the log.
RefineResult refine(const HardAssignment& assignment,
                    const rules::RuleSet& ruleset,
                    const std::vector<rules::AttributeVector>& attrs,
                    const diffnet::Matrix& z,
                    std::span<const std::string> sample_ids = {});

}  // namespace dartvae::clustering
