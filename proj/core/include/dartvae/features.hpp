#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "dartvae/matrix.hpp"
#include "dartvae/rules.hpp"

namespace dartvae::features {

/// One sample: precomputed visual and raw semantic feature vectors plus the
/// attribute values the rule engine evaluates.
struct FeatureRecord {
  std::string id;
  std::vector<double> visual;
  std::vector<double> semantic_raw;
  rules::AttributeVector attributes;

  bool operator==(const FeatureRecord&) const = default;
};

struct Dataset {
  rules::AttributeSchema schema;
  std::vector<FeatureRecord> records;
  std::size_t visual_dim = 0;
  std::size_t semantic_dim = 0;

  std::size_t size() const { return records.size(); }
  std::vector<rules::AttributeVector> attribute_vectors() const;
  std::vector<std::string> ids() const;

  bool operator==(const Dataset&) const = default;
};

/// N x Dv / N x Ds matrices of the stacked feature vectors.
diffnet::Matrix visual_matrix(const Dataset& ds);
diffnet::Matrix semantic_matrix(const Dataset& ds);

/// Manifest JSON: {"schema": [...], "dims": {"visual": Dv, "semantic": Ds},
/// "records_file": path}; records file is JSON Lines, one record per line.
Dataset load_dataset(const std::filesystem::path& manifest_path);

/// Writes manifest + records file. load(save(ds)) reproduces ds exactly.
void save_dataset(const Dataset& ds, const std::filesystem::path& manifest_path,
                  const std::filesystem::path& records_path);

struct SyntheticSpec {
  rules::AttributeSchema schema;
  std::size_t group_count = 1;
  std::size_t samples_per_group = 1;
  std::size_t visual_dim = 128;
  std::size_t semantic_dim = 64;
  std::vector<rules::AttributeVector> group_attributes;  // one per group
  double noise_scale = 1.0;
  double flip_probability = 0.0;
  std::uint64_t seed = 0;
};

SyntheticSpec parse_synthetic_spec(const std::string& json_text);
SyntheticSpec load_synthetic_spec(const std::filesystem::path& path);

/// Group means are drawn from the seed, then each record adds Gaussian noise
/// at noise_scale. Boolean attributes flip (and categoricals resample to a
/// different level) independently at flip_probability; numerics copy the
/// template. Bit-identical output for a fixed spec.
Dataset generate_synthetic(const SyntheticSpec& spec);

struct StandardizeStats {
  std::vector<double> visual_mean, visual_stdev;
  std::vector<double> semantic_mean, semantic_stdev;
};

/// Zero mean / unit variance per feature column (population stdev).
/// Constant columns become all-zero and keep stdev 0 in the stats.
Dataset standardize(const Dataset& ds, StandardizeStats* stats_out = nullptr);

}  // namespace dartvae::features
