#include "dartvae/clustering.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "dartvae/errors.hpp"
#include "dartvae/rng.hpp"

namespace dartvae::clustering {

using diffnet::Matrix;

namespace {

std::size_t nearest_centroid(std::span<const double> point,
                             const Matrix& centroids) {
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < centroids.rows(); ++c) {
    const double d = diffnet::squared_distance(point, centroids.row(c));
    if (d < best_d) {
      best_d = d;
      best = c;
    }
  }
  return best;
}

Matrix kmeanspp_seed(const Matrix& z, std::size_t k, Rng& rng) {
  const std::size_t n = z.rows();
  Matrix centroids(k, z.cols());
  std::vector<double> min_d2(n, std::numeric_limits<double>::infinity());

  std::size_t first = rng.index(n);
  std::copy(z.row(first).begin(), z.row(first).end(),
            centroids.row(0).begin());
  for (std::size_t c = 1; c < k; ++c) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double d =
          diffnet::squared_distance(z.row(i), centroids.row(c - 1));
      min_d2[i] = std::min(min_d2[i], d);
      total += min_d2[i];
    }
    std::size_t pick;
    if (total > 0.0) {
      const double target = rng.uniform() * total;
      double acc = 0.0;
      pick = n - 1;
      for (std::size_t i = 0; i < n; ++i) {
        acc += min_d2[i];
        if (acc >= target) {
          pick = i;
          break;
        }
      }
    } else {
      pick = rng.index(n);  // all points coincide with chosen centers
    }
    std::copy(z.row(pick).begin(), z.row(pick).end(),
              centroids.row(c).begin());
  }
  return centroids;
}

struct LloydResult {
  std::vector<int> labels;
  Matrix centroids;
  double inertia = 0.0;
};

/// First-improvement single-point reassignment sweeps with exact SSE
/// deltas (Hartigan updates). Keeps centroids equal to cluster means.
void polish_assignment(const Matrix& z, std::size_t k,
                       std::vector<int>& labels, Matrix& centroids) {
  const std::size_t n = z.rows();
  std::vector<std::size_t> counts(k, 0);
  Matrix sums(k, z.cols());
  for (std::size_t i = 0; i < n; ++i) {
    const auto c = static_cast<std::size_t>(labels[i]);
    ++counts[c];
    const auto row = z.row(i);
    auto dst = sums.row(c);
    for (std::size_t d = 0; d < row.size(); ++d) dst[d] += row[d];
  }
  auto recompute_centroid = [&](std::size_t c) {
    auto dst = centroids.row(c);
    const auto src = sums.row(c);
    for (std::size_t d = 0; d < dst.size(); ++d) {
      dst[d] = counts[c] > 0 ? src[d] / static_cast<double>(counts[c]) : dst[d];
    }
  };
  for (std::size_t c = 0; c < k; ++c) recompute_centroid(c);

  bool improved = true;
  std::size_t sweeps = 0;
  while (improved && sweeps < 100) {
    improved = false;
    ++sweeps;
    for (std::size_t i = 0; i < n; ++i) {
      const auto a = static_cast<std::size_t>(labels[i]);
      if (counts[a] <= 1) continue;
      const double leave = static_cast<double>(counts[a]) /
                           static_cast<double>(counts[a] - 1) *
                           diffnet::squared_distance(z.row(i),
                                                     centroids.row(a));
      double best_delta = -1e-12;
      std::size_t best_b = a;
      for (std::size_t b = 0; b < k; ++b) {
        if (b == a) continue;
        const double join = static_cast<double>(counts[b]) /
                            static_cast<double>(counts[b] + 1) *
                            diffnet::squared_distance(z.row(i),
                                                      centroids.row(b));
        const double delta = join - leave;
        if (delta < best_delta) {
          best_delta = delta;
          best_b = b;
        }
      }
      if (best_b == a) continue;
      const auto row = z.row(i);
      auto src = sums.row(a);
      auto dst = sums.row(best_b);
      for (std::size_t d = 0; d < row.size(); ++d) {
        src[d] -= row[d];
        dst[d] += row[d];
      }
      --counts[a];
      ++counts[best_b];
      labels[i] = static_cast<int>(best_b);
      recompute_centroid(a);
      recompute_centroid(best_b);
      improved = true;
    }
  }
}

LloydResult lloyd(const Matrix& z, std::size_t k, Rng& rng,
                  const KMeansOptions& opts) {
  const std::size_t n = z.rows();
  Matrix centroids = kmeanspp_seed(z, k, rng);
  std::vector<int> labels(n, 0);
  std::vector<std::size_t> counts(k, 0);

  for (std::size_t iter = 0; iter < opts.max_iter; ++iter) {
    // assignment step
    std::fill(counts.begin(), counts.end(), 0);
    for (std::size_t i = 0; i < n; ++i) {
      labels[i] = static_cast<int>(nearest_centroid(z.row(i), centroids));
      ++counts[static_cast<std::size_t>(labels[i])];
    }
    // update step
    Matrix next(k, z.cols());
    for (std::size_t i = 0; i < n; ++i) {
      const auto row = z.row(i);
      auto dst = next.row(static_cast<std::size_t>(labels[i]));
      for (std::size_t d = 0; d < row.size(); ++d) dst[d] += row[d];
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] == 0) continue;
      auto dst = next.row(c);
      for (double& x : dst) x /= static_cast<double>(counts[c]);
    }
    // empty clusters claim the point currently farthest from its centroid
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] > 0) continue;
      double worst = -1.0;
      std::size_t claim = 0;
      for (std::size_t i = 0; i < n; ++i) {
        const auto owner = static_cast<std::size_t>(labels[i]);
        if (counts[owner] <= 1) continue;
        const double d = diffnet::squared_distance(z.row(i), next.row(owner));
        if (d > worst) {
          worst = d;
          claim = i;
        }
      }
      if (worst < 0.0) continue;  // nothing movable
      --counts[static_cast<std::size_t>(labels[claim])];
      labels[claim] = static_cast<int>(c);
      ++counts[c];
      std::copy(z.row(claim).begin(), z.row(claim).end(), next.row(c).begin());
    }

    double shift = 0.0;
    for (std::size_t c = 0; c < k; ++c) {
      shift = std::max(shift, diffnet::squared_distance(centroids.row(c),
                                                        next.row(c)));
    }
    centroids = std::move(next);
    if (std::sqrt(shift) < opts.tol) break;
  }

  LloydResult result;
  result.centroids = std::move(centroids);
  result.labels.resize(n);
  result.inertia = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t c = nearest_centroid(z.row(i), result.centroids);
    result.labels[i] = static_cast<int>(c);
    result.inertia += diffnet::squared_distance(z.row(i),
                                                result.centroids.row(c));
  }
  return result;
}

}  // namespace

HardAssignment kmeans(const Matrix& z, std::size_t k, std::uint64_t seed,
                      const KMeansOptions& opts) {
  const std::size_t n = z.rows();
  if (k < 1) throw UsageError("kmeans: k must be >= 1");
  if (n < k) {
    throw UsageError("kmeans: " + std::to_string(n) + " points for k=" +
                     std::to_string(k));
  }
  Rng rng(seed);
  LloydResult best;
  best.inertia = std::numeric_limits<double>::infinity();
  const std::size_t restarts = std::max<std::size_t>(1, opts.restarts);
  for (std::size_t r = 0; r < restarts; ++r) {
    LloydResult run = lloyd(z, k, rng, opts);
    if (run.inertia < best.inertia) best = std::move(run);
  }
  HardAssignment out;
  out.labels = std::move(best.labels);
  out.centroids = std::move(best.centroids);
  out.inertia = best.inertia;
  return out;
}

SoftAssignment fuzzy_cmeans(const Matrix& z, std::size_t k, double m,
                            std::uint64_t seed, const FcmOptions& opts) {
  const std::size_t n = z.rows();
  if (k < 2) throw UsageError("fuzzy_cmeans: k must be >= 2");
  if (n < k) throw UsageError("fuzzy_cmeans: fewer points than clusters");
  if (!(m > 1.0)) {
    throw UsageError("fuzzy_cmeans: fuzzifier m must be > 1");
  }

  Rng rng(seed);
  Matrix u(n, k);
  for (std::size_t i = 0; i < n; ++i) {
    double row_sum = 0.0;
    for (std::size_t c = 0; c < k; ++c) {
      u(i, c) = rng.uniform() + 1e-9;
      row_sum += u(i, c);
    }
    for (std::size_t c = 0; c < k; ++c) u(i, c) /= row_sum;
  }

  Matrix centroids(k, z.cols());
  const double exponent = 2.0 / (m - 1.0);
  double objective = 0.0;

  for (std::size_t iter = 0; iter < opts.max_iter; ++iter) {
    // centroids from memberships
    for (std::size_t c = 0; c < k; ++c) {
      auto dst = centroids.row(c);
      std::fill(dst.begin(), dst.end(), 0.0);
      double weight = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double w = std::pow(u(i, c), m);
        weight += w;
        const auto row = z.row(i);
        for (std::size_t d = 0; d < row.size(); ++d) dst[d] += w * row[d];
      }
      if (weight > 0.0) {
        for (double& x : dst) x /= weight;
      }
    }
    // memberships from distances
    double delta = 0.0;
    objective = 0.0;
    std::vector<double> dist(k);
    for (std::size_t i = 0; i < n; ++i) {
      double min_dist = std::numeric_limits<double>::infinity();
      std::size_t min_c = 0;
      for (std::size_t c = 0; c < k; ++c) {
        dist[c] = diffnet::euclidean_distance(z.row(i), centroids.row(c));
        if (dist[c] < min_dist) {
          min_dist = dist[c];
          min_c = c;
        }
      }
      if (min_dist < 1e-12) {
        for (std::size_t c = 0; c < k; ++c) {
          const double next = c == min_c ? 1.0 : 0.0;
          delta = std::max(delta, std::abs(next - u(i, c)));
          u(i, c) = next;
        }
      } else {
        // u_ic = 1 / sum_j (d_ic/d_jc)^(2/(m-1)), rescaled by the nearest
        // distance so the powers stay in (0, 1]
        double denom = 0.0;
        for (std::size_t c = 0; c < k; ++c) {
          dist[c] = std::pow(min_dist / dist[c], exponent);
          denom += dist[c];
        }
        for (std::size_t c = 0; c < k; ++c) {
          const double next = dist[c] / denom;
          delta = std::max(delta, std::abs(next - u(i, c)));
          u(i, c) = next;
        }
      }
      for (std::size_t c = 0; c < k; ++c) {
        const double d =
            diffnet::squared_distance(z.row(i), centroids.row(c));
        objective += std::pow(u(i, c), m) * d;
      }
    }
    if (delta < opts.tol) break;
  }

  SoftAssignment out;
  out.memberships = std::move(u);
  out.centroids = std::move(centroids);
  out.fuzzifier = m;
  out.objective = objective;
  return out;
}

HardAssignment harden(const SoftAssignment& soft, const Matrix& z) {
  const std::size_t n = soft.memberships.rows();
  const std::size_t k = soft.memberships.cols();
  HardAssignment out;
  out.labels.resize(n);
  out.centroids = soft.centroids;
  out.inertia = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < k; ++c) {
      if (soft.memberships(i, c) > soft.memberships(i, best)) best = c;
    }
    out.labels[i] = static_cast<int>(best);
    out.inertia +=
        diffnet::squared_distance(z.row(i), out.centroids.row(best));
  }
  return out;
}

namespace {

using rules::AttributeVector;
using rules::RuleDefinition;
using rules::RuleKind;

std::size_t cluster_flag_total(const rules::RuleSet& ruleset,
                               const std::vector<AttributeVector>& attrs,
                               std::span<const std::size_t> members) {
  std::size_t total = 0;
  for (const RuleDefinition& rule : ruleset.rules) {
    if (rule.kind == RuleKind::kSampleImplication) continue;
    for (auto f : rules::cluster_member_flags(rule, attrs, members)) {
      total += f;
    }
  }
  return total;
}

/// Is the last member of `members` (the candidate) flagged by any
/// cluster-level rule under this composition?
bool last_member_flagged(const rules::RuleSet& ruleset,
                         const std::vector<AttributeVector>& attrs,
                         std::span<const std::size_t> members) {
  for (const RuleDefinition& rule : ruleset.rules) {
    if (rule.kind == RuleKind::kSampleImplication) continue;
    if (rules::cluster_member_flags(rule, attrs, members).back() != 0) {
      return true;
    }
  }
  return false;
}

Matrix centroids_from_labels(const Matrix& z, const std::vector<int>& labels,
                             std::size_t k, const Matrix& fallback) {
  Matrix centroids(k, z.cols());
  std::vector<std::size_t> counts(k, 0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto c = static_cast<std::size_t>(labels[i]);
    ++counts[c];
    const auto row = z.row(i);
    auto dst = centroids.row(c);
    for (std::size_t d = 0; d < row.size(); ++d) dst[d] += row[d];
  }
  for (std::size_t c = 0; c < k; ++c) {
    if (counts[c] > 0) {
      for (double& x : centroids.row(c)) x /= static_cast<double>(counts[c]);
    } else {
      // empty clusters keep their previous centroid as a landing spot
      std::copy(fallback.row(c).begin(), fallback.row(c).end(),
                centroids.row(c).begin());
    }
  }
  return centroids;
}

}  // namespace

RefineResult refine(const HardAssignment& assignment,
                    const rules::RuleSet& ruleset,
                    const std::vector<AttributeVector>& attrs,
                    const Matrix& z, std::span<const std::string> sample_ids) {
  const std::size_t n = attrs.size();
  const std::size_t k = assignment.k();
  if (assignment.labels.size() != n || z.rows() != n) {
    throw UsageError("refine: labels/attrs/z size mismatch");
  }
  if (!sample_ids.empty() && sample_ids.size() != n) {
    throw UsageError("refine: sample_ids size mismatch");
  }
  auto id_of = [&](std::size_t i) {
    return sample_ids.empty() ? std::to_string(i)
                              : std::string(sample_ids[i]);
  };

  RefineResult result;
  result.assignment = assignment;
  std::vector<int>& labels = result.assignment.labels;
  Matrix& centroids = result.assignment.centroids;

  std::vector<std::vector<std::size_t>> members(k);
  auto rebuild_members = [&] {
    for (auto& m : members) m.clear();
    for (std::size_t i = 0; i < n; ++i) {
      members[static_cast<std::size_t>(labels[i])].push_back(i);
    }
  };
  rebuild_members();

  constexpr std::size_t kMaxPasses = 10;
  for (std::size_t pass = 1; pass <= kMaxPasses; ++pass) {
    bool moved_in_pass = false;
    result.log.passes = pass;
    for (const RuleDefinition& rule : ruleset.rules) {
      if (rule.kind == RuleKind::kSampleImplication) continue;
      const auto flags =
          rules::cluster_violation_flags(rule, labels, k, attrs);
      bool moved_for_rule = false;
      for (std::size_t i = 0; i < n; ++i) {
        if (!flags[i]) continue;
        const auto from = static_cast<std::size_t>(labels[i]);
        // candidate clusters by centroid distance, nearest first
        std::vector<std::pair<double, std::size_t>> candidates;
        for (std::size_t c = 0; c < k; ++c) {
          if (c == from) continue;
          candidates.emplace_back(
              diffnet::euclidean_distance(z.row(i), centroids.row(c)), c);
        }
        std::sort(candidates.begin(), candidates.end());
        std::vector<std::size_t> from_without = members[from];
        from_without.erase(
            std::find(from_without.begin(), from_without.end(), i));
        const std::size_t from_before =
            cluster_flag_total(ruleset, attrs, members[from]);
        const std::size_t from_after =
            cluster_flag_total(ruleset, attrs, from_without);
        for (const auto& [dist, c] : candidates) {
          std::vector<std::size_t> with_candidate = members[c];
          with_candidate.push_back(i);
          // the sample itself must become compliant there, and the move
          // must not grow the flag total over the two touched clusters
          if (last_member_flagged(ruleset, attrs, with_candidate)) continue;
          const std::size_t to_before =
              cluster_flag_total(ruleset, attrs, members[c]);
          const std::size_t to_after =
              cluster_flag_total(ruleset, attrs, with_candidate);
          if (from_after + to_after > from_before + to_before) continue;
          members[from] = from_without;
          members[c] = std::move(with_candidate);
          labels[i] = static_cast<int>(c);
          result.log.moves.push_back({id_of(i), rule.id,
                                      static_cast<int>(from),
                                      static_cast<int>(c), dist});
          moved_for_rule = true;
          moved_in_pass = true;
          break;
        }
      }
      if (moved_for_rule) {
        centroids = centroids_from_labels(z, labels, k, centroids);
        rebuild_members();
      }
    }
    if (!moved_in_pass) break;
  }

  centroids = centroids_from_labels(z, labels, k, centroids);
  result.assignment.inertia = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    result.assignment.inertia += diffnet::squared_distance(
        z.row(i), centroids.row(static_cast<std::size_t>(labels[i])));
  }

  // whatever is still flagged at the end could not be resolved
  for (const RuleDefinition& rule : ruleset.rules) {
    if (rule.kind == RuleKind::kSampleImplication) continue;
    const auto flags = rules::cluster_violation_flags(rule, labels, k, attrs);
    for (std::size_t i = 0; i < n; ++i) {
      if (flags[i]) result.log.unresolved.push_back({id_of(i), rule.id});
    }
  }
  return result;
}

}  // namespace dartvae::clustering
