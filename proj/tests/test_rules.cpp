#include <doctest.h>

#include <algorithm>

#include "dartvae/errors.hpp"
#include "dartvae/rules.hpp"
#include "testutil.hpp"

using namespace dartvae;
using namespace dartvae::rules;

TEST_SUITE_BEGIN("rules");

namespace {

// mini_ruleset schema order:
// is_stealth, has_advanced_avionics, is_fighter, has_supercruise, is_uav,
// mission_type (combat=0, transport=1, recon=2), length
AttributeVector attrs(double stealth, double avionics, double fighter,
                      double supercruise, double uav, double mission,
                      double length) {
  return {stealth, avionics, fighter, supercruise, uav, mission, length};
}

}  // namespace

TEST_CASE("parse_ruleset builds the expected structure") {
  RuleSet rs = testutil::mini_ruleset();
  CHECK(rs.schema.size() == 7);
  CHECK(rs.rule_count() == 4);
  CHECK(rs.rules[0].kind == RuleKind::kSampleImplication);
  CHECK(rs.rules[1].kind == RuleKind::kClusterHomogeneity);
  CHECK(rs.rules[2].kind == RuleKind::kClusterExclusion);
  CHECK(rs.rules[3].kind == RuleKind::kNumericSpread);
  CHECK(rs.rules[3].max_range == 10.0);
  CHECK(rs.has_cluster_level_rules());
}

TEST_CASE("parse_ruleset accepts an empty rule list") {
  RuleSet rs = parse_ruleset(R"({
    "schema": [{"name": "is_uav", "kind": "boolean"}],
    "rules": []
  })");
  CHECK(rs.rule_count() == 0);
  CHECK_FALSE(rs.has_cluster_level_rules());
}

TEST_CASE("parse_ruleset validation errors name the offender") {
  SUBCASE("unknown attribute") {
    CHECK_THROWS_WITH_AS(
        parse_ruleset(R"({
          "schema": [{"name": "a", "kind": "boolean"}],
          "rules": [{"id": "r1", "kind": "cluster_homogeneity",
                     "attr": "missing"}]
        })"),
        doctest::Contains("missing"), ParseError);
  }
  SUBCASE("kind mismatch: homogeneity on numeric") {
    CHECK_THROWS_AS(parse_ruleset(R"({
      "schema": [{"name": "x", "kind": "numeric"}],
      "rules": [{"id": "r1", "kind": "cluster_homogeneity", "attr": "x"}]
    })"),
                    ParseError);
  }
  SUBCASE("kind mismatch: literal on numeric") {
    CHECK_THROWS_AS(parse_ruleset(R"({
      "schema": [{"name": "x", "kind": "numeric"},
                 {"name": "b", "kind": "boolean"}],
      "rules": [{"id": "r1", "kind": "cluster_exclusion",
                 "first": {"attr": "x", "is": 1},
                 "second": {"attr": "b", "is": true}}]
    })"),
                    ParseError);
  }
  SUBCASE("duplicate rule id") {
    CHECK_THROWS_WITH_AS(
        parse_ruleset(R"({
          "schema": [{"name": "b", "kind": "boolean"}],
          "rules": [
            {"id": "dup", "kind": "cluster_homogeneity", "attr": "b"},
            {"id": "dup", "kind": "cluster_homogeneity", "attr": "b"}]
        })"),
        doctest::Contains("dup"), ParseError);
  }
  SUBCASE("malformed document") {
    CHECK_THROWS_AS(parse_ruleset("{not json"), ParseError);
  }
  SUBCASE("unknown categorical level") {
    CHECK_THROWS_AS(parse_ruleset(R"({
      "schema": [{"name": "c", "kind": "categorical", "levels": ["x", "y"]}],
      "rules": [{"id": "r1", "kind": "cluster_exclusion",
                 "first": {"attr": "c", "is": "zz"},
                 "second": {"attr": "c", "is": "y"}}]
    })"),
                    ParseError);
  }
  SUBCASE("non-positive spread range") {
    CHECK_THROWS_AS(parse_ruleset(R"({
      "schema": [{"name": "x", "kind": "numeric"}],
      "rules": [{"id": "r1", "kind": "numeric_spread", "attr": "x",
                 "max_range": 0.0}]
    })"),
                    ParseError);
  }
}

TEST_CASE("sample_violates implements the stealth implication") {
  RuleSet rs = testutil::mini_ruleset();
  const RuleDefinition& stealth = rs.rules[0];

  // stealth with avionics and fighter capability: consequent satisfied
  CHECK_FALSE(sample_violates(stealth, attrs(1, 1, 1, 0, 0, 0, 10)));
  // stealth with avionics and supercruise only: still fine
  CHECK_FALSE(sample_violates(stealth, attrs(1, 1, 0, 1, 0, 0, 10)));
  // stealth without avionics: violated
  CHECK(sample_violates(stealth, attrs(1, 0, 1, 1, 0, 0, 10)));
  // stealth with avionics but neither fighter nor supercruise: violated
  CHECK(sample_violates(stealth, attrs(1, 1, 0, 0, 0, 0, 10)));
  // antecedent false: never violated
  CHECK_FALSE(sample_violates(stealth, attrs(0, 0, 0, 0, 0, 0, 10)));

  CHECK_THROWS_AS(sample_violates(rs.rules[1], attrs(0, 0, 0, 0, 0, 0, 10)),
                  UsageError);
}

TEST_CASE("cluster_violation_flags: homogeneity majority and ties") {
  RuleSet rs = testutil::mini_ruleset();
  const RuleDefinition& uav = rs.rules[1];

  SUBCASE("majority flags the minority") {
    std::vector<AttributeVector> a = {attrs(0, 0, 0, 0, 1, 0, 1),
                                      attrs(0, 0, 0, 0, 1, 0, 1),
                                      attrs(0, 0, 0, 0, 0, 0, 1)};
    const int labels[] = {0, 0, 0};
    auto flags = cluster_violation_flags(uav, labels, 1, a);
    CHECK(flags == std::vector<std::uint8_t>{0, 0, 1});
  }
  SUBCASE("tie flags the higher level (majority is the lowest)") {
    std::vector<AttributeVector> a = {attrs(0, 0, 0, 0, 1, 0, 1),
                                      attrs(0, 0, 0, 0, 0, 0, 1)};
    const int labels[] = {0, 0};
    auto flags = cluster_violation_flags(uav, labels, 1, a);
    CHECK(flags == std::vector<std::uint8_t>{1, 0});
  }
  SUBCASE("single-sample clusters are vacuously uniform") {
    std::vector<AttributeVector> a = {attrs(0, 0, 0, 0, 1, 0, 1),
                                      attrs(0, 0, 0, 0, 0, 0, 1)};
    const int labels[] = {0, 1};
    auto flags = cluster_violation_flags(uav, labels, 2, a);
    CHECK(flags == std::vector<std::uint8_t>{0, 0});
  }
  SUBCASE("label out of range is a usage error") {
    std::vector<AttributeVector> a = {attrs(0, 0, 0, 0, 1, 0, 1)};
    const int labels[] = {3};
    CHECK_THROWS_AS(cluster_violation_flags(uav, labels, 2, a), UsageError);
  }
}

TEST_CASE("cluster_violation_flags: exclusion flags the rarer literal") {
  RuleSet rs = testutil::mini_ruleset();
  const RuleDefinition& mission = rs.rules[2];

  SUBCASE("2 combat + 1 transport flags the transport sample") {
    std::vector<AttributeVector> a = {attrs(0, 0, 0, 0, 0, 0, 1),
                                      attrs(0, 0, 0, 0, 0, 0, 1),
                                      attrs(0, 0, 0, 0, 0, 1, 1)};
    const int labels[] = {0, 0, 0};
    auto flags = cluster_violation_flags(mission, labels, 1, a);
    CHECK(flags == std::vector<std::uint8_t>{0, 0, 1});
  }
  SUBCASE("tie flags both sides") {
    std::vector<AttributeVector> a = {attrs(0, 0, 0, 0, 0, 0, 1),
                                      attrs(0, 0, 0, 0, 0, 1, 1),
                                      attrs(0, 0, 0, 0, 0, 2, 1)};
    const int labels[] = {0, 0, 0};
    auto flags = cluster_violation_flags(mission, labels, 1, a);
    CHECK(flags == std::vector<std::uint8_t>{1, 1, 0});
  }
  SUBCASE("no co-occurrence, no flags") {
    std::vector<AttributeVector> a = {attrs(0, 0, 0, 0, 0, 0, 1),
                                      attrs(0, 0, 0, 0, 0, 2, 1)};
    const int labels[] = {0, 0};
    auto flags = cluster_violation_flags(mission, labels, 1, a);
    CHECK(flags == std::vector<std::uint8_t>{0, 0});
  }
}

TEST_CASE("cluster_violation_flags: numeric spread window") {
  RuleSet rs = testutil::mini_ruleset();
  const RuleDefinition& spread = rs.rules[3];  // max_range 10

  SUBCASE("within range, no flags") {
    std::vector<AttributeVector> a = {attrs(0, 0, 0, 0, 0, 0, 1),
                                      attrs(0, 0, 0, 0, 0, 0, 9)};
    const int labels[] = {0, 0};
    auto flags = cluster_violation_flags(spread, labels, 1, a);
    CHECK(flags == std::vector<std::uint8_t>{0, 0});
  }
  SUBCASE("outlier outside the median window is flagged") {
    // values 1, 2, 30: range 29 > 10, median 2, window [-3, 7]
    std::vector<AttributeVector> a = {attrs(0, 0, 0, 0, 0, 0, 1),
                                      attrs(0, 0, 0, 0, 0, 0, 2),
                                      attrs(0, 0, 0, 0, 0, 0, 30)};
    const int labels[] = {0, 0, 0};
    auto flags = cluster_violation_flags(spread, labels, 1, a);
    CHECK(flags == std::vector<std::uint8_t>{0, 0, 1});
  }
}

TEST_CASE("violation_targets columns and provisional-label fallback") {
  RuleSet rs = testutil::mini_ruleset();
  std::vector<AttributeVector> a = {
      attrs(1, 0, 0, 0, 1, 0, 1),   // stealth violator, uav
      attrs(0, 0, 0, 0, 1, 0, 2),   // uav
      attrs(0, 0, 0, 0, 0, 1, 3)};  // manned transport

  SUBCASE("stealth violator gets a 1 in the implication column") {
    auto t = violation_targets(rs, a);
    CHECK(t.rows() == 3);
    CHECK(t.cols() == 4);
    CHECK(t(0, 0) == 1.0);
    CHECK(t(1, 0) == 0.0);
    CHECK(t(2, 0) == 0.0);
  }
  SUBCASE("cluster columns zero without provisional labels") {
    auto t = violation_targets(rs, a);
    for (std::size_t i = 0; i < 3; ++i) {
      for (std::size_t j = 1; j < 4; ++j) CHECK(t(i, j) == 0.0);
    }
  }
  SUBCASE("mixed provisional cluster flags the minority uav column") {
    const int labels[] = {0, 0, 0};
    auto t = violation_targets(rs, a, labels, 1);
    CHECK(t(0, 1) == 0.0);
    CHECK(t(1, 1) == 0.0);
    CHECK(t(2, 1) == 1.0);  // minority non-uav in a uav-majority cluster
  }
  SUBCASE("all-compliant dataset gives a zero matrix") {
    std::vector<AttributeVector> clean = {attrs(0, 0, 0, 0, 1, 0, 1),
                                          attrs(0, 0, 0, 0, 1, 0, 2)};
    const int labels[] = {0, 0};
    auto t = violation_targets(rs, clean, labels, 1);
    for (double v : t.values()) CHECK(v == 0.0);
  }
}

TEST_CASE("violation_report aggregates counts, rates and cluster means") {
  RuleSet rs = parse_ruleset(R"({
    "schema": [{"name": "is_uav", "kind": "boolean"}],
    "rules": [{"id": "uav", "kind": "cluster_homogeneity", "attr": "is_uav"}]
  })");

  SUBCASE("zero flags everywhere") {
    std::vector<AttributeVector> a = {{1}, {1}, {0}};
    const int labels[] = {0, 0, 1};
    auto report = violation_report(rs, labels, 2, a);
    CHECK(report.per_rule[0].count == 0);
    CHECK(report.per_rule[0].rate == 0.0);
    CHECK(report.total_count() == 0);
  }
  SUBCASE("3 flags among 10 samples is rate 0.3") {
    std::vector<AttributeVector> a(10, AttributeVector{0});
    a[0][0] = a[1][0] = a[2][0] = 1;  // three uav among seven manned
    std::vector<int> labels(10, 0);
    auto report = violation_report(rs, labels, 1, a);
    CHECK(report.per_rule[0].count == 3);
    CHECK(report.per_rule[0].rate == doctest::Approx(0.3));
  }
  SUBCASE("per-cluster mean over two clusters with 1 and 3 flags") {
    // cluster 0: 3 uav + 1 manned -> 1 flag; cluster 1: 4 uav + 3 manned -> 3
    std::vector<AttributeVector> a = {{1}, {1}, {1}, {0},
                                      {1}, {1}, {1}, {1}, {0}, {0}, {0}};
    std::vector<int> labels = {0, 0, 0, 0, 1, 1, 1, 1, 1, 1, 1};
    auto report = violation_report(rs, labels, 2, a);
    CHECK(report.per_rule[0].count == 4);
    CHECK(report.per_rule[0].per_cluster_mean == doctest::Approx(2.0));
  }
}

TEST_CASE("sample-level flags ignore the assignment entirely") {
  RuleSet rs = testutil::mini_ruleset();
  Rng rng(17);
  std::vector<AttributeVector> a;
  for (int i = 0; i < 20; ++i) a.push_back(testutil::random_attrs(rng));
  std::vector<int> labels1(20), labels2(20);
  for (int i = 0; i < 20; ++i) {
    labels1[i] = static_cast<int>(rng.index(3));
    labels2[i] = static_cast<int>(rng.index(3));
  }
  auto f1 = cluster_violation_flags(rs.rules[0], labels1, 3, a);
  auto f2 = cluster_violation_flags(rs.rules[0], labels2, 3, a);
  CHECK(f1 == f2);
}

TEST_CASE("property: cluster id permutation leaves all counts unchanged") {
  RuleSet rs = testutil::mini_ruleset();
  Rng rng(29);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t n = 4 + rng.index(16);
    const std::size_t k = 2 + rng.index(3);
    std::vector<AttributeVector> a;
    std::vector<int> labels(n);
    for (std::size_t i = 0; i < n; ++i) {
      a.push_back(testutil::random_attrs(rng));
      labels[i] = static_cast<int>(rng.index(k));
    }
    std::vector<int> perm(k);
    for (std::size_t c = 0; c < k; ++c) perm[c] = static_cast<int>(c);
    rng.shuffle(perm);
    std::vector<int> permuted(n);
    for (std::size_t i = 0; i < n; ++i) {
      permuted[i] = perm[static_cast<std::size_t>(labels[i])];
    }
    auto r1 = violation_report(rs, labels, k, a);
    auto r2 = violation_report(rs, permuted, k, a);
    for (std::size_t j = 0; j < rs.rule_count(); ++j) {
      CHECK(r1.per_rule[j].count == r2.per_rule[j].count);
    }
  }
}

TEST_CASE("property: homogeneity flags are all-false iff clusters uniform") {
  RuleSet rs = testutil::mini_ruleset();
  const RuleDefinition& uav = rs.rules[1];
  Rng rng(31);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 2 + rng.index(12);
    const std::size_t k = 1 + rng.index(3);
    std::vector<AttributeVector> a;
    std::vector<int> labels(n);
    for (std::size_t i = 0; i < n; ++i) {
      a.push_back(testutil::random_attrs(rng));
      labels[i] = static_cast<int>(rng.index(k));
    }
    auto flags = cluster_violation_flags(uav, labels, k, a);
    bool any_flag =
        std::any_of(flags.begin(), flags.end(), [](auto f) { return f != 0; });
    bool uniform = true;
    for (std::size_t c = 0; c < k; ++c) {
      double seen = -1.0;
      for (std::size_t i = 0; i < n; ++i) {
        if (static_cast<std::size_t>(labels[i]) != c) continue;
        if (seen < 0.0) {
          seen = a[i][4];
        } else if (a[i][4] != seen) {
          uniform = false;
        }
      }
    }
    CHECK(any_flag == !uniform);
  }
}

TEST_CASE("property: per-level singleton split clears cluster-level flags") {
  RuleSet rs = testutil::mini_ruleset();
  Rng rng(37);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 3 + rng.index(10);
    std::vector<AttributeVector> a;
    for (std::size_t i = 0; i < n; ++i) a.push_back(testutil::random_attrs(rng));
    // every sample its own cluster
    std::vector<int> labels(n);
    for (std::size_t i = 0; i < n; ++i) labels[i] = static_cast<int>(i);
    for (const auto& rule : rs.rules) {
      if (rule.kind == RuleKind::kSampleImplication) continue;
      auto flags = cluster_violation_flags(rule, labels, n, a);
      for (auto f : flags) CHECK(f == 0);
    }
  }
}

TEST_CASE("encode_attributes layout: booleans, one-hot, standardized") {
  RuleSet rs = testutil::mini_ruleset();
  CHECK(encoded_width(rs.schema) == 5 + 3 + 1);
  std::vector<AttributeVector> a = {attrs(1, 0, 1, 0, 1, 0, 1.0),
                                    attrs(0, 1, 0, 1, 0, 2, 3.0)};
  auto m = encode_attributes(rs.schema, a);
  CHECK(m.rows() == 2);
  CHECK(m.cols() == 9);
  CHECK(m(0, 0) == 1.0);              // is_stealth
  CHECK(m(0, 5) == 1.0);              // mission one-hot: combat
  CHECK(m(1, 7) == 1.0);              // mission one-hot: recon
  CHECK(m(0, 8) == doctest::Approx(-1.0));  // length standardized
  CHECK(m(1, 8) == doctest::Approx(1.0));
}

TEST_SUITE_END();
