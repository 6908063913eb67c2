#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

#include "dartvae/errors.hpp"
#include "dartvae/features.hpp"
#include "testutil.hpp"

using namespace dartvae;
using namespace dartvae::features;
namespace fs = std::filesystem;

TEST_SUITE_BEGIN("features");

namespace {

SyntheticSpec small_spec(std::uint64_t seed, double noise, double flip) {
  SyntheticSpec spec;
  spec.schema = testutil::mini_ruleset().schema;
  spec.group_count = 2;
  spec.samples_per_group = 5;
  spec.visual_dim = 6;
  spec.semantic_dim = 4;
  spec.noise_scale = noise;
  spec.flip_probability = flip;
  spec.seed = seed;
  spec.group_attributes = {{0, 0, 0, 0, 1, 0, 10.0},
                           {0, 0, 0, 0, 0, 1, 20.0}};
  return spec;
}

fs::path temp_dir() {
  auto dir = fs::temp_directory_path() / "dartvae_features_test";
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("generate_synthetic: zero noise collapses to the group means") {
  Dataset ds = generate_synthetic(small_spec(1, 0.0, 0.0));
  CHECK(ds.size() == 10);
  std::set<std::vector<double>> distinct;
  for (const auto& rec : ds.records) distinct.insert(rec.visual);
  CHECK(distinct.size() == 2);
}

TEST_CASE("generate_synthetic: same seed is bit-identical") {
  Dataset a = generate_synthetic(small_spec(42, 0.7, 0.1));
  Dataset b = generate_synthetic(small_spec(42, 0.7, 0.1));
  CHECK(a == b);
  Dataset c = generate_synthetic(small_spec(43, 0.7, 0.1));
  CHECK(!(a == c));
}

TEST_CASE("generate_synthetic: zero flip probability keeps templates") {
  SyntheticSpec spec = small_spec(7, 1.0, 0.0);
  Dataset ds = generate_synthetic(spec);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const std::size_t g = i / spec.samples_per_group;
    CHECK(ds.records[i].attributes == spec.group_attributes[g]);
  }
}

TEST_CASE("save/load round trip is exact") {
  Dataset ds = generate_synthetic(small_spec(9, 0.5, 0.2));
  const auto dir = temp_dir();
  save_dataset(ds, dir / "manifest.json", dir / "records.jsonl");
  Dataset loaded = load_dataset(dir / "manifest.json");
  CHECK(loaded == ds);
}

TEST_CASE("load_dataset validation errors name the record") {
  const auto dir = temp_dir();
  const auto manifest = dir / "bad_manifest.json";
  const auto records = dir / "bad_records.jsonl";
  auto write_manifest = [&] {
    std::ofstream out(manifest);
    out << R"({"schema": [{"name": "is_uav", "kind": "boolean"}],
               "dims": {"visual": 2, "semantic": 1},
               "records_file": "bad_records.jsonl"})";
  };

  SUBCASE("missing records file") {
    write_manifest();
    fs::remove(records);
    CHECK_THROWS_AS(load_dataset(manifest), LoadError);
  }
  SUBCASE("wrong visual length names the id") {
    write_manifest();
    std::ofstream out(records);
    out << R"({"id": "rec7", "visual": [1], "semantic": [0], "attributes": {"is_uav": true}})"
        << "\n";
    out.close();
    CHECK_THROWS_WITH_AS(load_dataset(manifest), doctest::Contains("rec7"),
                         LoadError);
  }
  SUBCASE("duplicate id") {
    write_manifest();
    std::ofstream out(records);
    out << R"({"id": "a", "visual": [1,2], "semantic": [0], "attributes": {"is_uav": true}})"
        << "\n"
        << R"({"id": "a", "visual": [1,2], "semantic": [0], "attributes": {"is_uav": true}})"
        << "\n";
    out.close();
    CHECK_THROWS_WITH_AS(load_dataset(manifest), doctest::Contains("a"),
                         LoadError);
  }
  SUBCASE("missing attribute") {
    write_manifest();
    std::ofstream out(records);
    out << R"({"id": "b", "visual": [1,2], "semantic": [0], "attributes": {}})"
        << "\n";
    out.close();
    CHECK_THROWS_WITH_AS(load_dataset(manifest), doctest::Contains("is_uav"),
                         LoadError);
  }
  SUBCASE("non-finite value") {
    write_manifest();
    std::ofstream out(records);
    out << R"({"id": "c", "visual": [1,2e999], "semantic": [0], "attributes": {"is_uav": true}})"
        << "\n";
    out.close();
    CHECK_THROWS_AS(load_dataset(manifest), LoadError);
  }
}

TEST_CASE("standardize two-point column and constant column") {
  Dataset ds;
  ds.schema = rules::AttributeSchema(
      std::vector<rules::Attribute>{{"b", rules::AttributeKind::kBoolean}});
  ds.visual_dim = 2;
  ds.semantic_dim = 1;
  ds.records = {{"x", {1.0, 5.0}, {0.5}, {0.0}},
                {"y", {3.0, 5.0}, {1.5}, {1.0}}};

  StandardizeStats stats;
  Dataset out = standardize(ds, &stats);
  CHECK(out.records[0].visual[0] == doctest::Approx(-1.0));
  CHECK(out.records[1].visual[0] == doctest::Approx(1.0));
  CHECK(stats.visual_mean[0] == doctest::Approx(2.0));
  CHECK(stats.visual_stdev[0] == doctest::Approx(1.0));
  // constant column collapses to zero with stdev 0
  CHECK(out.records[0].visual[1] == 0.0);
  CHECK(out.records[1].visual[1] == 0.0);
  CHECK(stats.visual_stdev[1] == 0.0);
}

TEST_CASE("standardize inverts to the original within 1e-12") {
  Dataset ds = generate_synthetic(small_spec(13, 0.8, 0.0));
  StandardizeStats stats;
  Dataset out = standardize(ds, &stats);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    for (std::size_t d = 0; d < ds.visual_dim; ++d) {
      const double restored =
          out.records[i].visual[d] * stats.visual_stdev[d] +
          stats.visual_mean[d];
      CHECK(std::abs(restored - ds.records[i].visual[d]) < 1e-12);
    }
    for (std::size_t d = 0; d < ds.semantic_dim; ++d) {
      const double restored =
          out.records[i].semantic_raw[d] * stats.semantic_stdev[d] +
          stats.semantic_mean[d];
      CHECK(std::abs(restored - ds.records[i].semantic_raw[d]) < 1e-12);
    }
  }
}

TEST_CASE("standardize requires at least two records") {
  Dataset ds;
  ds.schema = rules::AttributeSchema(std::vector<rules::Attribute>{});
  ds.visual_dim = 1;
  ds.semantic_dim = 1;
  ds.records = {{"only", {1.0}, {1.0}, {}}};
  CHECK_THROWS_AS(standardize(ds), UsageError);
}

TEST_CASE("parse_synthetic_spec requires a seed") {
  CHECK_THROWS_WITH_AS(parse_synthetic_spec(R"({
    "schema": [{"name": "b", "kind": "boolean"}],
    "group_count": 1, "samples_per_group": 2,
    "visual_dim": 2, "semantic_dim": 1,
    "groups": [{"attributes": {"b": false}}]
  })"),
                       doctest::Contains("seed"), ParseError);
}

TEST_SUITE_END();
