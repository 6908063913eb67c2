#include "dartvae/rules.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "dartvae/errors.hpp"

namespace dartvae::rules {

using nlohmann::json;

AttributeSchema::AttributeSchema(std::vector<Attribute> attributes)
    : attributes_(std::move(attributes)) {
  std::set<std::string_view> seen;
  for (const Attribute& a : attributes_) {
    if (!seen.insert(a.name).second) {
      throw ParseError("schema: duplicate attribute name '" + a.name + "'");
    }
    if (a.kind == AttributeKind::kCategorical && a.levels.size() < 2) {
      throw ParseError("schema: categorical attribute '" + a.name +
                       "' needs at least 2 levels");
    }
  }
}

std::optional<std::size_t> AttributeSchema::find(std::string_view name) const {
  for (std::size_t i = 0; i < attributes_.size(); ++i) {
    if (attributes_[i].name == name) return i;
  }
  return std::nullopt;
}

bool RuleSet::has_cluster_level_rules() const {
  return std::any_of(rules.begin(), rules.end(), [](const RuleDefinition& r) {
    return r.kind != RuleKind::kSampleImplication;
  });
}

namespace {

AttributeKind parse_kind(const std::string& s, const std::string& where) {
  if (s == "boolean") return AttributeKind::kBoolean;
  if (s == "categorical") return AttributeKind::kCategorical;
  if (s == "numeric") return AttributeKind::kNumeric;
  throw ParseError(where + ": unknown attribute kind '" + s + "'");
}

AttributeSchema parse_schema(const json& arr, const std::string& where) {
  if (!arr.is_array()) throw ParseError(where + ": schema must be an array");
  std::vector<Attribute> attrs;
  for (const json& item : arr) {
    Attribute a;
    if (!item.contains("name") || !item["name"].is_string()) {
      throw ParseError(where + ": schema entry missing string 'name'");
    }
    a.name = item["name"].get<std::string>();
    if (!item.contains("kind") || !item["kind"].is_string()) {
      throw ParseError(where + ": attribute '" + a.name +
                       "' missing string 'kind'");
    }
    a.kind = parse_kind(item["kind"].get<std::string>(),
                        where + " attribute '" + a.name + "'");
    if (a.kind == AttributeKind::kCategorical) {
      if (!item.contains("levels") || !item["levels"].is_array()) {
        throw ParseError(where + ": categorical attribute '" + a.name +
                         "' missing 'levels' array");
      }
      for (const json& lv : item["levels"]) {
        if (!lv.is_string()) {
          throw ParseError(where + ": attribute '" + a.name +
                           "' has a non-string level");
        }
        a.levels.push_back(lv.get<std::string>());
      }
    }
    if (item.contains("unit")) a.unit = item["unit"].get<std::string>();
    attrs.push_back(std::move(a));
  }
  return AttributeSchema(std::move(attrs));
}

Literal parse_literal(const json& j, const AttributeSchema& schema,
                      const std::string& where) {
  if (!j.is_object() || !j.contains("attr") || !j.contains("is")) {
    throw ParseError(where + ": literal must be {\"attr\", \"is\"}");
  }
  const std::string name = j["attr"].get<std::string>();
  const auto idx = schema.find(name);
  if (!idx) {
    throw ParseError(where + ": unknown attribute '" + name + "'");
  }
  const Attribute& attr = schema.at(*idx);
  Literal lit;
  lit.attr = *idx;
  const json& v = j["is"];
  switch (attr.kind) {
    case AttributeKind::kBoolean:
      if (v.is_boolean()) {
        lit.value = v.get<bool>() ? 1.0 : 0.0;
      } else if (v.is_number_integer() &&
                 (v.get<int>() == 0 || v.get<int>() == 1)) {
        lit.value = v.get<int>();
      } else {
        throw ParseError(where + ": boolean attribute '" + name +
                         "' needs a true/false (or 0/1) value");
      }
      break;
    case AttributeKind::kCategorical:
      if (v.is_string()) {
        const auto& levels = attr.levels;
        const auto it =
            std::find(levels.begin(), levels.end(), v.get<std::string>());
        if (it == levels.end()) {
          throw ParseError(where + ": attribute '" + name +
                           "' has no level '" + v.get<std::string>() + "'");
        }
        lit.value = static_cast<double>(it - levels.begin());
      } else if (v.is_number_integer()) {
        const long long i = v.get<long long>();
        if (i < 0 || static_cast<std::size_t>(i) >= attr.levels.size()) {
          throw ParseError(where + ": level index " + std::to_string(i) +
                           " out of range for attribute '" + name + "'");
        }
        lit.value = static_cast<double>(i);
      } else {
        throw ParseError(where + ": categorical attribute '" + name +
                         "' needs a level name or index");
      }
      break;
    case AttributeKind::kNumeric:
      throw ParseError(where + ": numeric attribute '" + name +
                       "' cannot appear in a literal");
  }
  return lit;
}

ConditionNode parse_condition(const json& j, const AttributeSchema& schema,
                              const std::string& where) {
  ConditionNode node;
  if (j.is_object() && (j.contains("all") || j.contains("any"))) {
    const bool is_all = j.contains("all");
    node.op = is_all ? ConditionNode::Op::kAll : ConditionNode::Op::kAny;
    const json& arr = is_all ? j["all"] : j["any"];
    if (!arr.is_array() || arr.empty()) {
      throw ParseError(where + ": '" + (is_all ? "all" : "any") +
                       "' needs a non-empty array");
    }
    for (const json& child : arr) {
      node.children.push_back(parse_condition(child, schema, where));
    }
    return node;
  }
  node.op = ConditionNode::Op::kLiteral;
  node.literal = parse_literal(j, schema, where);
  return node;
}

}  // namespace

AttributeSchema schema_from_json_text(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw ParseError(std::string("schema: malformed JSON: ") + e.what());
  }
  return parse_schema(doc, "schema");
}

RuleSet parse_ruleset(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw ParseError(std::string("ruleset: malformed JSON: ") + e.what());
  }
  if (!doc.is_object() || !doc.contains("schema") || !doc.contains("rules")) {
    throw ParseError("ruleset: document needs 'schema' and 'rules'");
  }

  RuleSet rs;
  rs.schema = parse_schema(doc["schema"], "ruleset");

  if (!doc["rules"].is_array()) {
    throw ParseError("ruleset: 'rules' must be an array");
  }
  std::set<std::string> ids;
  for (const json& item : doc["rules"]) {
    RuleDefinition rule;
    if (!item.contains("id") || !item["id"].is_string()) {
      throw ParseError("ruleset: rule missing string 'id'");
    }
    rule.id = item["id"].get<std::string>();
    const std::string where = "rule '" + rule.id + "'";
    if (!ids.insert(rule.id).second) {
      throw ParseError("ruleset: duplicate rule id '" + rule.id + "'");
    }
    if (!item.contains("kind") || !item["kind"].is_string()) {
      throw ParseError(where + ": missing string 'kind'");
    }
    const std::string kind = item["kind"].get<std::string>();
    if (kind == "sample_implication") {
      rule.kind = RuleKind::kSampleImplication;
      if (!item.contains("if") || !item["if"].is_array() ||
          item["if"].empty()) {
        throw ParseError(where + ": needs a non-empty 'if' literal array");
      }
      for (const json& lit : item["if"]) {
        rule.antecedent.push_back(parse_literal(lit, rs.schema, where));
      }
      if (!item.contains("then")) {
        throw ParseError(where + ": missing 'then' condition");
      }
      rule.consequent = parse_condition(item["then"], rs.schema, where);
    } else if (kind == "cluster_homogeneity") {
      rule.kind = RuleKind::kClusterHomogeneity;
      if (!item.contains("attr") || !item["attr"].is_string()) {
        throw ParseError(where + ": missing string 'attr'");
      }
      const std::string name = item["attr"].get<std::string>();
      const auto idx = rs.schema.find(name);
      if (!idx) throw ParseError(where + ": unknown attribute '" + name + "'");
      if (rs.schema.at(*idx).kind == AttributeKind::kNumeric) {
        throw ParseError(where + ": homogeneity attribute '" + name +
                         "' must be boolean or categorical");
      }
      rule.attr = *idx;
    } else if (kind == "cluster_exclusion") {
      rule.kind = RuleKind::kClusterExclusion;
      if (!item.contains("first") || !item.contains("second")) {
        throw ParseError(where + ": needs 'first' and 'second' literals");
      }
      rule.first = parse_literal(item["first"], rs.schema, where);
      rule.second = parse_literal(item["second"], rs.schema, where);
    } else if (kind == "numeric_spread") {
      rule.kind = RuleKind::kNumericSpread;
      if (!item.contains("attr") || !item["attr"].is_string()) {
        throw ParseError(where + ": missing string 'attr'");
      }
      const std::string name = item["attr"].get<std::string>();
      const auto idx = rs.schema.find(name);
      if (!idx) throw ParseError(where + ": unknown attribute '" + name + "'");
      if (rs.schema.at(*idx).kind != AttributeKind::kNumeric) {
        throw ParseError(where + ": spread attribute '" + name +
                         "' must be numeric");
      }
      rule.attr = *idx;
      if (!item.contains("max_range") || !item["max_range"].is_number()) {
        throw ParseError(where + ": missing numeric 'max_range'");
      }
      rule.max_range = item["max_range"].get<double>();
      if (!(rule.max_range > 0.0)) {
        throw ParseError(where + ": max_range must be > 0");
      }
    } else {
      throw ParseError(where + ": unknown rule kind '" + kind + "'");
    }
    rs.rules.push_back(std::move(rule));
  }
  return rs;
}

RuleSet load_ruleset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw ParseError("ruleset: cannot open '" + path.string() + "'");
  }
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_ruleset(ss.str());
}

bool literal_holds(const Literal& lit, const AttributeVector& attrs) {
  return attrs[lit.attr] == lit.value;
}

namespace {

bool condition_holds(const ConditionNode& node, const AttributeVector& attrs) {
  switch (node.op) {
    case ConditionNode::Op::kLiteral:
      return literal_holds(node.literal, attrs);
    case ConditionNode::Op::kAll:
      return std::all_of(
          node.children.begin(), node.children.end(),
          [&](const ConditionNode& c) { return condition_holds(c, attrs); });
    case ConditionNode::Op::kAny:
      return std::any_of(
          node.children.begin(), node.children.end(),
          [&](const ConditionNode& c) { return condition_holds(c, attrs); });
  }
  return false;
}

std::vector<std::vector<std::size_t>> group_by_cluster(
    std::span<const int> labels, std::size_t k) {
  std::vector<std::vector<std::size_t>> members(k);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= k) {
      throw UsageError("cluster label " + std::to_string(labels[i]) +
                       " out of range [0, " + std::to_string(k) + ")");
    }
    members[static_cast<std::size_t>(labels[i])].push_back(i);
  }
  return members;
}

/// Majority level in `values`, ties resolved toward the lowest level value.
double majority_level(const std::vector<double>& values) {
  double best_level = 0.0;
  std::size_t best_count = 0;
  // Distinct levels scanned in ascending order so ties keep the first.
  std::vector<double> sorted = values;
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t i = 0; i < sorted.size();) {
    std::size_t j = i;
    while (j < sorted.size() && sorted[j] == sorted[i]) ++j;
    if (j - i > best_count) {
      best_count = j - i;
      best_level = sorted[i];
    }
    i = j;
  }
  return best_level;
}

std::vector<std::uint8_t> member_flags_homogeneity(
    const RuleDefinition& rule, const std::vector<AttributeVector>& attrs,
    std::span<const std::size_t> members) {
  std::vector<std::uint8_t> flags(members.size(), 0);
  if (members.size() < 2) return flags;  // uniformity is vacuous
  std::vector<double> values;
  values.reserve(members.size());
  for (std::size_t i : members) values.push_back(attrs[i][rule.attr]);
  const bool mixed = std::any_of(values.begin(), values.end(),
                                 [&](double v) { return v != values.front(); });
  if (!mixed) return flags;
  const double majority = majority_level(values);
  for (std::size_t m = 0; m < members.size(); ++m) {
    if (values[m] != majority) flags[m] = 1;
  }
  return flags;
}

std::vector<std::uint8_t> member_flags_exclusion(
    const RuleDefinition& rule, const std::vector<AttributeVector>& attrs,
    std::span<const std::size_t> members) {
  std::vector<std::uint8_t> flags(members.size(), 0);
  std::size_t first_count = 0;
  std::size_t second_count = 0;
  for (std::size_t i : members) {
    if (literal_holds(rule.first, attrs[i])) ++first_count;
    if (literal_holds(rule.second, attrs[i])) ++second_count;
  }
  if (first_count == 0 || second_count == 0) return flags;
  const bool flag_first = first_count <= second_count;
  const bool flag_second = second_count <= first_count;
  for (std::size_t m = 0; m < members.size(); ++m) {
    if ((flag_first && literal_holds(rule.first, attrs[members[m]])) ||
        (flag_second && literal_holds(rule.second, attrs[members[m]]))) {
      flags[m] = 1;
    }
  }
  return flags;
}

double median_of(std::vector<double> values) {
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  if (n % 2 == 1) return values[n / 2];
  return 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

std::vector<std::uint8_t> member_flags_spread(
    const RuleDefinition& rule, const std::vector<AttributeVector>& attrs,
    std::span<const std::size_t> members) {
  std::vector<std::uint8_t> flags(members.size(), 0);
  if (members.size() < 2) return flags;
  std::vector<double> values;
  values.reserve(members.size());
  for (std::size_t i : members) values.push_back(attrs[i][rule.attr]);
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  if (*hi - *lo <= rule.max_range) return flags;
  const double median = median_of(values);
  const double half = rule.max_range / 2.0;
  for (std::size_t m = 0; m < members.size(); ++m) {
    if (values[m] < median - half || values[m] > median + half) flags[m] = 1;
  }
  return flags;
}

}  // namespace

std::vector<std::uint8_t> cluster_member_flags(
    const RuleDefinition& rule, const std::vector<AttributeVector>& attrs,
    std::span<const std::size_t> members) {
  switch (rule.kind) {
    case RuleKind::kClusterHomogeneity:
      return member_flags_homogeneity(rule, attrs, members);
    case RuleKind::kClusterExclusion:
      return member_flags_exclusion(rule, attrs, members);
    case RuleKind::kNumericSpread:
      return member_flags_spread(rule, attrs, members);
    case RuleKind::kSampleImplication:
      throw UsageError("cluster_member_flags: rule '" + rule.id +
                       "' is sample-level");
  }
  return {};
}

bool sample_violates(const RuleDefinition& rule,
                     const AttributeVector& attrs) {
  if (rule.kind != RuleKind::kSampleImplication) {
    throw UsageError("sample_violates: rule '" + rule.id +
                     "' is not a sample implication");
  }
  const bool antecedent =
      std::all_of(rule.antecedent.begin(), rule.antecedent.end(),
                  [&](const Literal& l) { return literal_holds(l, attrs); });
  if (!antecedent) return false;
  return !condition_holds(rule.consequent, attrs);
}

std::vector<std::uint8_t> cluster_violation_flags(
    const RuleDefinition& rule, std::span<const int> labels, std::size_t k,
    const std::vector<AttributeVector>& attrs) {
  if (labels.size() != attrs.size()) {
    throw UsageError("cluster_violation_flags: " +
                     std::to_string(labels.size()) + " labels for " +
                     std::to_string(attrs.size()) + " samples");
  }
  std::vector<std::uint8_t> flags(attrs.size(), 0);
  if (rule.kind == RuleKind::kSampleImplication) {
    for (std::size_t i = 0; i < attrs.size(); ++i) {
      flags[i] = sample_violates(rule, attrs[i]) ? 1 : 0;
    }
    return flags;
  }
  const auto clusters = group_by_cluster(labels, k);
  for (const auto& members : clusters) {
    const auto member_flags = cluster_member_flags(rule, attrs, members);
    for (std::size_t m = 0; m < members.size(); ++m) {
      flags[members[m]] = member_flags[m];
    }
  }
  return flags;
}

diffnet::Matrix violation_targets(const RuleSet& ruleset,
                                  const std::vector<AttributeVector>& attrs,
                                  std::span<const int> provisional_labels,
                                  std::size_t k) {
  const std::size_t n = attrs.size();
  const std::size_t m = ruleset.rule_count();
  diffnet::Matrix targets(n, m);
  for (std::size_t j = 0; j < m; ++j) {
    const RuleDefinition& rule = ruleset.rules[j];
    if (rule.kind == RuleKind::kSampleImplication) {
      for (std::size_t i = 0; i < n; ++i) {
        targets(i, j) = sample_violates(rule, attrs[i]) ? 1.0 : 0.0;
      }
      continue;
    }
    // Cluster-level columns stay zero until provisional labels exist.
    if (provisional_labels.empty()) continue;
    const auto flags =
        cluster_violation_flags(rule, provisional_labels, k, attrs);
    for (std::size_t i = 0; i < n; ++i) {
      targets(i, j) = flags[i] ? 1.0 : 0.0;
    }
  }
  return targets;
}

std::size_t ViolationReport::total_count() const {
  std::size_t total = 0;
  for (const auto& stats : per_rule) total += stats.count;
  return total;
}

ViolationReport violation_report(const RuleSet& ruleset,
                                 std::span<const int> labels, std::size_t k,
                                 const std::vector<AttributeVector>& attrs) {
  ViolationReport report;
  const std::size_t n = attrs.size();
  std::vector<std::size_t> cluster_sizes(k, 0);
  for (int label : labels) {
    if (label < 0 || static_cast<std::size_t>(label) >= k) {
      throw UsageError("violation_report: label out of range");
    }
    ++cluster_sizes[static_cast<std::size_t>(label)];
  }
  const std::size_t non_empty = static_cast<std::size_t>(
      std::count_if(cluster_sizes.begin(), cluster_sizes.end(),
                    [](std::size_t s) { return s > 0; }));

  for (const RuleDefinition& rule : ruleset.rules) {
    auto flags = cluster_violation_flags(rule, labels, k, attrs);
    RuleViolationStats stats;
    stats.rule_id = rule.id;
    std::vector<std::size_t> per_cluster(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      if (flags[i]) {
        ++stats.count;
        ++per_cluster[static_cast<std::size_t>(labels[i])];
      }
    }
    stats.rate = n > 0 ? static_cast<double>(stats.count) /
                             static_cast<double>(n)
                       : 0.0;
    stats.per_cluster_mean =
        non_empty > 0
            ? static_cast<double>(stats.count) / static_cast<double>(non_empty)
            : 0.0;
    report.per_rule.push_back(std::move(stats));
    report.flags.push_back(std::move(flags));
  }
  return report;
}

std::size_t encoded_width(const AttributeSchema& schema) {
  std::size_t width = 0;
  for (const Attribute& a : schema.attributes()) {
    width += a.kind == AttributeKind::kCategorical ? a.levels.size() : 1;
  }
  return width;
}

diffnet::Matrix encode_attributes(const AttributeSchema& schema,
                                  const std::vector<AttributeVector>& attrs) {
  const std::size_t n = attrs.size();
  const std::size_t width = encoded_width(schema);
  diffnet::Matrix out(n, width);
  std::size_t col = 0;
  for (std::size_t a = 0; a < schema.size(); ++a) {
    const Attribute& attr = schema.at(a);
    switch (attr.kind) {
      case AttributeKind::kBoolean:
        for (std::size_t i = 0; i < n; ++i) out(i, col) = attrs[i][a];
        ++col;
        break;
      case AttributeKind::kCategorical:
        for (std::size_t i = 0; i < n; ++i) {
          const auto level = static_cast<std::size_t>(attrs[i][a]);
          out(i, col + level) = 1.0;
        }
        col += attr.levels.size();
        break;
      case AttributeKind::kNumeric: {
        double mean = 0.0;
        for (std::size_t i = 0; i < n; ++i) mean += attrs[i][a];
        if (n > 0) mean /= static_cast<double>(n);
        double var = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
          const double d = attrs[i][a] - mean;
          var += d * d;
        }
        if (n > 0) var /= static_cast<double>(n);
        const double inv = var > 0.0 ? 1.0 / std::sqrt(var) : 0.0;
        for (std::size_t i = 0; i < n; ++i) {
          out(i, col) = (attrs[i][a] - mean) * inv;
        }
        ++col;
        break;
      }
    }
  }
  return out;
}

}  // namespace dartvae::rules
