#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dartvae/matrix.hpp"

namespace dartvae::rules {

enum class AttributeKind : std::uint8_t { kBoolean, kCategorical, kNumeric };

struct Attribute {
  std::string name;
  AttributeKind kind = AttributeKind::kBoolean;
  std::vector<std::string> levels;  // categorical only
  std::string unit;                 // numeric only, informational

  bool operator==(const Attribute&) const = default;
};

/// Ordered attribute declarations; the order fixes the layout of every
/// AttributeVector in a dataset.
class AttributeSchema {
 public:
  AttributeSchema() = default;
  explicit AttributeSchema(std::vector<Attribute> attributes);

  std::size_t size() const { return attributes_.size(); }
  const Attribute& at(std::size_t i) const { return attributes_[i]; }
  const std::vector<Attribute>& attributes() const { return attributes_; }
  std::optional<std::size_t> find(std::string_view name) const;

  bool operator==(const AttributeSchema&) const = default;

 private:
  std::vector<Attribute> attributes_;
};

/// Values in schema order: booleans as 0/1, categoricals as level index,
/// numerics as plain reals.
using AttributeVector = std::vector<double>;

/// One attribute test: holds for a sample iff attrs[attr] == value.
/// Only boolean and categorical attributes can appear in literals.
struct Literal {
  std::size_t attr = 0;
  double value = 0.0;
};

/// AND/OR tree over literals (rule consequents).
struct ConditionNode {
  enum class Op : std::uint8_t { kLiteral, kAll, kAny };
  Op op = Op::kLiteral;
  Literal literal;
  std::vector<ConditionNode> children;
};

enum class RuleKind : std::uint8_t {
  kSampleImplication,
  kClusterHomogeneity,
  kClusterExclusion,
  kNumericSpread,
};

struct RuleDefinition {
  std::string id;
  RuleKind kind = RuleKind::kSampleImplication;

  // sample_implication: conjunction of literals implies the consequent tree
  std::vector<Literal> antecedent;
  ConditionNode consequent;

  // cluster_homogeneity / numeric_spread target attribute
  std::size_t attr = 0;

  // cluster_exclusion: these two literals must not share a cluster
  Literal first;
  Literal second;

  // numeric_spread: max allowed within-cluster range (> 0)
  double max_range = 0.0;
};

struct RuleSet {
  AttributeSchema schema;
  std::vector<RuleDefinition> rules;  // file order = evaluation order

  std::size_t rule_count() const { return rules.size(); }
  bool has_cluster_level_rules() const;
};

/// Parses the JSON rule document and validates every attribute reference
/// against the embedded schema. Throws ParseError naming the offending
/// rule/attribute.
RuleSet parse_ruleset(const std::string& text);
RuleSet load_ruleset(const std::filesystem::path& path);

/// Schema helpers shared with dataset manifests (same JSON shape).
AttributeSchema schema_from_json_text(const std::string& text);

bool literal_holds(const Literal& lit, const AttributeVector& attrs);

/// SampleImplication only: antecedent holds and consequent fails.
bool sample_violates(const RuleDefinition& rule, const AttributeVector& attrs);

/// Per-sample violation flags for one rule under a hard assignment with k
/// clusters. SampleImplication flags ignore the labels entirely.
std::vector<std::uint8_t> cluster_violation_flags(
    const RuleDefinition& rule, std::span<const int> labels, std::size_t k,
    const std::vector<AttributeVector>& attrs);

/// Flags for one cluster-level rule over a single cluster given by member
/// indices into `attrs`; result aligns with `members`. Refinement uses this
/// to score hypothetical cluster compositions.
std::vector<std::uint8_t> cluster_member_flags(
    const RuleDefinition& rule, const std::vector<AttributeVector>& attrs,
    std::span<const std::size_t> members);

/// N x M binary matrix of violation targets, column j for rule j.
/// Cluster-level columns are all-zero when no provisional labels are given.
diffnet::Matrix violation_targets(
    const RuleSet& ruleset, const std::vector<AttributeVector>& attrs,
    std::span<const int> provisional_labels = {}, std::size_t k = 0);

struct RuleViolationStats {
  std::string rule_id;
  std::size_t count = 0;        // violating samples
  double rate = 0.0;            // count / N
  double per_cluster_mean = 0.; // mean flag count over non-empty clusters
};

struct ViolationReport {
  std::vector<RuleViolationStats> per_rule;
  // flags[j][i]: sample i violates rule j
  std::vector<std::vector<std::uint8_t>> flags;

  std::size_t total_count() const;
};

ViolationReport violation_report(const RuleSet& ruleset,
                                 std::span<const int> labels, std::size_t k,
                                 const std::vector<AttributeVector>& attrs);

/// Width of the numeric encoding consumed by the rule encoder:
/// booleans 1 column, categoricals one-hot, numerics 1 standardized column.
std::size_t encoded_width(const AttributeSchema& schema);

/// N x encoded_width matrix. Numeric columns are standardized over the
/// given records (zero mean, unit variance; constant columns stay zero).
diffnet::Matrix encode_attributes(const AttributeSchema& schema,
                                  const std::vector<AttributeVector>& attrs);

}  // namespace dartvae::rules
