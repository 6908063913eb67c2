#include "dartvae/features.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "dartvae/errors.hpp"
#include "dartvae/rng.hpp"

namespace dartvae::features {

using nlohmann::json;
using rules::Attribute;
using rules::AttributeKind;
using rules::AttributeSchema;

std::vector<rules::AttributeVector> Dataset::attribute_vectors() const {
  std::vector<rules::AttributeVector> out;
  out.reserve(records.size());
  for (const FeatureRecord& r : records) out.push_back(r.attributes);
  return out;
}

std::vector<std::string> Dataset::ids() const {
  std::vector<std::string> out;
  out.reserve(records.size());
  for (const FeatureRecord& r : records) out.push_back(r.id);
  return out;
}

diffnet::Matrix visual_matrix(const Dataset& ds) {
  diffnet::Matrix out(ds.size(), ds.visual_dim);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    std::copy(ds.records[i].visual.begin(), ds.records[i].visual.end(),
              out.row(i).begin());
  }
  return out;
}

diffnet::Matrix semantic_matrix(const Dataset& ds) {
  diffnet::Matrix out(ds.size(), ds.semantic_dim);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    std::copy(ds.records[i].semantic_raw.begin(),
              ds.records[i].semantic_raw.end(), out.row(i).begin());
  }
  return out;
}

namespace {

json schema_to_json(const AttributeSchema& schema) {
  json arr = json::array();
  for (const Attribute& a : schema.attributes()) {
    json item;
    item["name"] = a.name;
    switch (a.kind) {
      case AttributeKind::kBoolean:
        item["kind"] = "boolean";
        break;
      case AttributeKind::kCategorical:
        item["kind"] = "categorical";
        item["levels"] = a.levels;
        break;
      case AttributeKind::kNumeric:
        item["kind"] = "numeric";
        if (!a.unit.empty()) item["unit"] = a.unit;
        break;
    }
    arr.push_back(std::move(item));
  }
  return arr;
}

double attribute_value_from_json(const Attribute& attr, const json& v,
                                 const std::string& record_id) {
  const std::string where =
      "record '" + record_id + "' attribute '" + attr.name + "'";
  switch (attr.kind) {
    case AttributeKind::kBoolean:
      if (v.is_boolean()) return v.get<bool>() ? 1.0 : 0.0;
      if (v.is_number_integer() && (v.get<int>() == 0 || v.get<int>() == 1)) {
        return v.get<int>();
      }
      throw LoadError(where + ": expected boolean");
    case AttributeKind::kCategorical: {
      if (v.is_string()) {
        const auto it =
            std::find(attr.levels.begin(), attr.levels.end(), v.get<std::string>());
        if (it == attr.levels.end()) {
          throw LoadError(where + ": unknown level '" + v.get<std::string>() +
                          "'");
        }
        return static_cast<double>(it - attr.levels.begin());
      }
      if (v.is_number_integer()) {
        const long long i = v.get<long long>();
        if (i < 0 || static_cast<std::size_t>(i) >= attr.levels.size()) {
          throw LoadError(where + ": level index out of range");
        }
        return static_cast<double>(i);
      }
      throw LoadError(where + ": expected level name or index");
    }
    case AttributeKind::kNumeric:
      if (!v.is_number()) throw LoadError(where + ": expected number");
      return v.get<double>();
  }
  throw LoadError(where + ": unhandled kind");
}

json attribute_value_to_json(const Attribute& attr, double v) {
  switch (attr.kind) {
    case AttributeKind::kBoolean:
      return v != 0.0;
    case AttributeKind::kCategorical:
      return attr.levels[static_cast<std::size_t>(v)];
    case AttributeKind::kNumeric:
      return v;
  }
  return v;
}

std::vector<double> finite_vector_from_json(const json& arr,
                                            const std::string& where) {
  if (!arr.is_array()) throw LoadError(where + ": expected array");
  std::vector<double> out;
  out.reserve(arr.size());
  for (const json& x : arr) {
    if (!x.is_number()) throw LoadError(where + ": non-numeric entry");
    const double v = x.get<double>();
    if (!std::isfinite(v)) throw LoadError(where + ": non-finite value");
    out.push_back(v);
  }
  return out;
}

}  // namespace

Dataset load_dataset(const std::filesystem::path& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) {
    throw LoadError("manifest: cannot open '" + manifest_path.string() + "'");
  }
  json manifest;
  try {
    in >> manifest;
  } catch (const json::exception& e) {
    throw LoadError(std::string("manifest: malformed JSON: ") + e.what());
  }
  if (!manifest.contains("schema") || !manifest.contains("dims") ||
      !manifest.contains("records_file")) {
    throw LoadError("manifest: needs 'schema', 'dims' and 'records_file'");
  }

  Dataset ds;
  try {
    ds.schema = rules::schema_from_json_text(manifest["schema"].dump());
  } catch (const ParseError& e) {
    throw LoadError(std::string("manifest: ") + e.what());
  }
  const json& dims = manifest["dims"];
  if (!dims.contains("visual") || !dims.contains("semantic")) {
    throw LoadError("manifest: dims needs 'visual' and 'semantic'");
  }
  ds.visual_dim = dims["visual"].get<std::size_t>();
  ds.semantic_dim = dims["semantic"].get<std::size_t>();

  std::filesystem::path records_path =
      manifest["records_file"].get<std::string>();
  if (records_path.is_relative()) {
    records_path = manifest_path.parent_path() / records_path;
  }
  std::ifstream rec_in(records_path);
  if (!rec_in) {
    throw LoadError("records: cannot open '" + records_path.string() + "'");
  }

  std::set<std::string> seen_ids;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(rec_in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::exception& e) {
      throw LoadError("records line " + std::to_string(line_no) +
                      ": malformed JSON: " + e.what());
    }
    FeatureRecord rec;
    if (!obj.contains("id") || !obj["id"].is_string()) {
      throw LoadError("records line " + std::to_string(line_no) +
                      ": missing string 'id'");
    }
    rec.id = obj["id"].get<std::string>();
    if (!seen_ids.insert(rec.id).second) {
      throw LoadError("records: duplicate id '" + rec.id + "'");
    }
    rec.visual = finite_vector_from_json(obj.value("visual", json::array()),
                                         "record '" + rec.id + "' visual");
    rec.semantic_raw =
        finite_vector_from_json(obj.value("semantic", json::array()),
                                "record '" + rec.id + "' semantic");
    if (rec.visual.size() != ds.visual_dim) {
      throw LoadError("record '" + rec.id + "': visual length " +
                      std::to_string(rec.visual.size()) + " != " +
                      std::to_string(ds.visual_dim));
    }
    if (rec.semantic_raw.size() != ds.semantic_dim) {
      throw LoadError("record '" + rec.id + "': semantic length " +
                      std::to_string(rec.semantic_raw.size()) + " != " +
                      std::to_string(ds.semantic_dim));
    }
    if (!obj.contains("attributes") || !obj["attributes"].is_object()) {
      throw LoadError("record '" + rec.id + "': missing 'attributes' object");
    }
    const json& attrs = obj["attributes"];
    rec.attributes.resize(ds.schema.size());
    for (std::size_t a = 0; a < ds.schema.size(); ++a) {
      const Attribute& attr = ds.schema.at(a);
      if (!attrs.contains(attr.name)) {
        throw LoadError("record '" + rec.id + "': missing attribute '" +
                        attr.name + "'");
      }
      rec.attributes[a] =
          attribute_value_from_json(attr, attrs[attr.name], rec.id);
    }
    if (attrs.size() != ds.schema.size()) {
      throw LoadError("record '" + rec.id +
                      "': attributes do not match schema");
    }
    ds.records.push_back(std::move(rec));
  }
  if (ds.records.empty()) {
    throw LoadError("records: dataset is empty");
  }
  return ds;
}

void save_dataset(const Dataset& ds,
                  const std::filesystem::path& manifest_path,
                  const std::filesystem::path& records_path) {
  {
    std::ofstream out(records_path);
    if (!out) {
      throw LoadError("records: cannot write '" + records_path.string() + "'");
    }
    for (const FeatureRecord& rec : ds.records) {
      json obj;
      obj["id"] = rec.id;
      obj["visual"] = rec.visual;
      obj["semantic"] = rec.semantic_raw;
      json attrs = json::object();
      for (std::size_t a = 0; a < ds.schema.size(); ++a) {
        attrs[ds.schema.at(a).name] =
            attribute_value_to_json(ds.schema.at(a), rec.attributes[a]);
      }
      obj["attributes"] = std::move(attrs);
      out << obj.dump() << "\n";
    }
  }
  json manifest;
  manifest["schema"] = schema_to_json(ds.schema);
  manifest["dims"] = {{"visual", ds.visual_dim}, {"semantic", ds.semantic_dim}};
  // Keep the manifest relocatable when both files share a directory.
  if (records_path.parent_path() == manifest_path.parent_path()) {
    manifest["records_file"] = records_path.filename().string();
  } else {
    manifest["records_file"] = records_path.string();
  }
  std::ofstream out(manifest_path);
  if (!out) {
    throw LoadError("manifest: cannot write '" + manifest_path.string() + "'");
  }
  out << manifest.dump(2) << "\n";
}

SyntheticSpec parse_synthetic_spec(const std::string& json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ParseError(std::string("synthetic spec: malformed JSON: ") +
                     e.what());
  }
  for (const char* key :
       {"schema", "group_count", "samples_per_group", "visual_dim",
        "semantic_dim", "groups", "seed"}) {
    if (!doc.contains(key)) {
      throw ParseError(std::string("synthetic spec: missing '") + key + "'");
    }
  }
  SyntheticSpec spec;
  spec.schema = rules::schema_from_json_text(doc["schema"].dump());
  spec.group_count = doc["group_count"].get<std::size_t>();
  spec.samples_per_group = doc["samples_per_group"].get<std::size_t>();
  spec.visual_dim = doc["visual_dim"].get<std::size_t>();
  spec.semantic_dim = doc["semantic_dim"].get<std::size_t>();
  spec.noise_scale = doc.value("noise_scale", 1.0);
  spec.flip_probability = doc.value("flip_probability", 0.0);
  spec.seed = doc["seed"].get<std::uint64_t>();

  if (spec.group_count < 1) {
    throw ParseError("synthetic spec: group_count must be >= 1");
  }
  if (spec.samples_per_group < 1) {
    throw ParseError("synthetic spec: samples_per_group must be >= 1");
  }
  if (spec.noise_scale < 0.0) {
    throw ParseError("synthetic spec: noise_scale must be >= 0");
  }
  if (spec.flip_probability < 0.0 || spec.flip_probability >= 1.0) {
    throw ParseError("synthetic spec: flip_probability must be in [0, 1)");
  }

  const json& groups = doc["groups"];
  if (!groups.is_array() || groups.size() != spec.group_count) {
    throw ParseError("synthetic spec: 'groups' must list one template per "
                     "group");
  }
  for (const json& g : groups) {
    if (!g.is_object() || !g.contains("attributes")) {
      throw ParseError("synthetic spec: each group needs an 'attributes' "
                       "object");
    }
    const json& attrs = g["attributes"];
    rules::AttributeVector tmpl(spec.schema.size());
    for (std::size_t a = 0; a < spec.schema.size(); ++a) {
      const Attribute& attr = spec.schema.at(a);
      if (!attrs.contains(attr.name)) {
        throw ParseError("synthetic spec: group template missing attribute '" +
                         attr.name + "'");
      }
      try {
        tmpl[a] = attribute_value_from_json(attr, attrs[attr.name], "template");
      } catch (const LoadError& e) {
        throw ParseError(std::string("synthetic spec: ") + e.what());
      }
    }
    spec.group_attributes.push_back(std::move(tmpl));
  }
  return spec;
}

SyntheticSpec load_synthetic_spec(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw ParseError("synthetic spec: cannot open '" + path.string() + "'");
  }
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_synthetic_spec(ss.str());
}

Dataset generate_synthetic(const SyntheticSpec& spec) {
  Rng rng(spec.seed);
  Dataset ds;
  ds.schema = spec.schema;
  ds.visual_dim = spec.visual_dim;
  ds.semantic_dim = spec.semantic_dim;

  std::vector<std::vector<double>> visual_means(spec.group_count);
  std::vector<std::vector<double>> semantic_means(spec.group_count);
  for (std::size_t g = 0; g < spec.group_count; ++g) {
    visual_means[g].resize(spec.visual_dim);
    for (double& x : visual_means[g]) x = rng.normal();
    semantic_means[g].resize(spec.semantic_dim);
    for (double& x : semantic_means[g]) x = rng.normal();
  }

  for (std::size_t g = 0; g < spec.group_count; ++g) {
    for (std::size_t s = 0; s < spec.samples_per_group; ++s) {
      FeatureRecord rec;
      rec.id = "g" + std::to_string(g) + "_s" + std::to_string(s);
      rec.visual.resize(spec.visual_dim);
      for (std::size_t d = 0; d < spec.visual_dim; ++d) {
        rec.visual[d] = visual_means[g][d] + spec.noise_scale * rng.normal();
      }
      rec.semantic_raw.resize(spec.semantic_dim);
      for (std::size_t d = 0; d < spec.semantic_dim; ++d) {
        rec.semantic_raw[d] =
            semantic_means[g][d] + spec.noise_scale * rng.normal();
      }
      rec.attributes = spec.group_attributes[g];
      for (std::size_t a = 0; a < spec.schema.size(); ++a) {
        const Attribute& attr = spec.schema.at(a);
        if (attr.kind == AttributeKind::kNumeric) continue;
        if (spec.flip_probability == 0.0) continue;
        if (rng.uniform() >= spec.flip_probability) continue;
        if (attr.kind == AttributeKind::kBoolean) {
          rec.attributes[a] = rec.attributes[a] == 0.0 ? 1.0 : 0.0;
        } else {
          // resample to a uniformly chosen different level
          const std::size_t levels = attr.levels.size();
          const auto current = static_cast<std::size_t>(rec.attributes[a]);
          std::size_t pick = rng.index(levels - 1);
          if (pick >= current) ++pick;
          rec.attributes[a] = static_cast<double>(pick);
        }
      }
      ds.records.push_back(std::move(rec));
    }
  }
  return ds;
}

namespace {

void standardize_columns(std::vector<FeatureRecord>& records,
                         std::vector<double> FeatureRecord::* field,
                         std::size_t dim, std::vector<double>& means,
                         std::vector<double>& stdevs) {
  const auto n = static_cast<double>(records.size());
  means.assign(dim, 0.0);
  stdevs.assign(dim, 0.0);
  for (const FeatureRecord& r : records) {
    for (std::size_t d = 0; d < dim; ++d) means[d] += (r.*field)[d];
  }
  for (double& m : means) m /= n;
  for (const FeatureRecord& r : records) {
    for (std::size_t d = 0; d < dim; ++d) {
      const double diff = (r.*field)[d] - means[d];
      stdevs[d] += diff * diff;
    }
  }
  for (std::size_t d = 0; d < dim; ++d) {
    stdevs[d] = std::sqrt(stdevs[d] / n);
  }
  for (FeatureRecord& r : records) {
    for (std::size_t d = 0; d < dim; ++d) {
      (r.*field)[d] = stdevs[d] > 0.0
                          ? ((r.*field)[d] - means[d]) / stdevs[d]
                          : 0.0;
    }
  }
}

}  // namespace

Dataset standardize(const Dataset& ds, StandardizeStats* stats_out) {
  if (ds.size() < 2) {
    throw UsageError("standardize: need at least 2 records");
  }
  Dataset out = ds;
  StandardizeStats stats;
  standardize_columns(out.records, &FeatureRecord::visual, ds.visual_dim,
                      stats.visual_mean, stats.visual_stdev);
  standardize_columns(out.records, &FeatureRecord::semantic_raw,
                      ds.semantic_dim, stats.semantic_mean,
                      stats.semantic_stdev);
  if (stats_out) *stats_out = std::move(stats);
  return out;
}

}  // namespace dartvae::features
