#include "dartvae/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "dartvae/errors.hpp"

namespace dartvae::model {

namespace {

using nlohmann::json;

constexpr char kMagic[4] = {'D', 'V', 'A', 'E'};
constexpr std::uint16_t kVersion = 1;

void write_u16(std::ostream& out, std::uint16_t v) {
  const unsigned char bytes[2] = {static_cast<unsigned char>(v & 0xff),
                                  static_cast<unsigned char>(v >> 8)};
  out.write(reinterpret_cast<const char*>(bytes), 2);
}

void write_u32(std::ostream& out, std::uint32_t v) {
  unsigned char bytes[4];
  for (int i = 0; i < 4; ++i) bytes[i] = (v >> (8 * i)) & 0xff;
  out.write(reinterpret_cast<const char*>(bytes), 4);
}

void write_f64(std::ostream& out, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  unsigned char bytes[8];
  for (int i = 0; i < 8; ++i) bytes[i] = (bits >> (8 * i)) & 0xff;
  out.write(reinterpret_cast<const char*>(bytes), 8);
}

std::uint16_t read_u16(std::istream& in) {
  unsigned char bytes[2];
  in.read(reinterpret_cast<char*>(bytes), 2);
  return static_cast<std::uint16_t>(bytes[0] | (bytes[1] << 8));
}

std::uint32_t read_u32(std::istream& in) {
  unsigned char bytes[4];
  in.read(reinterpret_cast<char*>(bytes), 4);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes[i]) << (8 * i);
  return v;
}

double read_f64(std::istream& in) {
  unsigned char bytes[8];
  in.read(reinterpret_cast<char*>(bytes), 8);
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
  return std::bit_cast<double>(bits);
}

json config_to_json(const ModelConfig& c) {
  return json{{"visual_dim", c.visual_dim},
              {"semantic_raw_dim", c.semantic_raw_dim},
              {"semantic_dim", c.semantic_dim},
              {"rule_dim", c.rule_dim},
              {"semantic_hidden", c.semantic_hidden},
              {"rule_hidden", c.rule_hidden},
              {"predictor_hidden", c.predictor_hidden},
              {"hidden1", c.hidden1},
              {"hidden2", c.hidden2},
              {"latent_dim", c.latent_dim},
              {"attr_width", c.attr_width},
              {"rule_count", c.rule_count}};
}

ModelConfig config_from_json(const json& j) {
  ModelConfig c;
  c.visual_dim = j.at("visual_dim").get<std::size_t>();
  c.semantic_raw_dim = j.at("semantic_raw_dim").get<std::size_t>();
  c.semantic_dim = j.at("semantic_dim").get<std::size_t>();
  c.rule_dim = j.at("rule_dim").get<std::size_t>();
  c.semantic_hidden = j.at("semantic_hidden").get<std::size_t>();
  c.rule_hidden = j.at("rule_hidden").get<std::size_t>();
  c.predictor_hidden = j.at("predictor_hidden").get<std::size_t>();
  c.hidden1 = j.at("hidden1").get<std::size_t>();
  c.hidden2 = j.at("hidden2").get<std::size_t>();
  c.latent_dim = j.at("latent_dim").get<std::size_t>();
  c.attr_width = j.at("attr_width").get<std::size_t>();
  c.rule_count = j.at("rule_count").get<std::size_t>();
  return c;
}

}  // namespace

void save_checkpoint(const ModelParams& params,
                     const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw LoadError("checkpoint: cannot write '" + path.string() + "'");
  }
  out.write(kMagic, 4);
  write_u16(out, kVersion);
  const std::string config = config_to_json(params.config).dump();
  write_u32(out, static_cast<std::uint32_t>(config.size()));
  out.write(config.data(), static_cast<std::streamsize>(config.size()));
  for (const auto span : params.param_spans()) {
    for (double v : span) write_f64(out, v);
  }
  if (!out) {
    throw LoadError("checkpoint: write failed for '" + path.string() + "'");
  }
}

ModelParams load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw LoadError("checkpoint: cannot open '" + path.string() + "'");
  }
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0) {
    throw LoadError("checkpoint: bad magic in '" + path.string() + "'");
  }
  const std::uint16_t version = read_u16(in);
  if (version != kVersion) {
    throw LoadError("checkpoint: unsupported version " +
                    std::to_string(version));
  }
  const std::uint32_t config_len = read_u32(in);
  std::string config_text(config_len, '\0');
  in.read(config_text.data(), config_len);
  if (!in) throw LoadError("checkpoint: truncated config block");

  ModelConfig config;
  try {
    config = config_from_json(json::parse(config_text));
  } catch (const json::exception& e) {
    throw LoadError(std::string("checkpoint: malformed config: ") + e.what());
  }
  config.validate();

  // materialize the layer structure, then overwrite every tensor
  Rng scratch(0);
  ModelParams params = ModelParams::init(config, scratch);
  for (auto span : params.param_spans()) {
    for (double& v : span) v = read_f64(in);
  }
  if (!in) throw LoadError("checkpoint: truncated parameter data");
  in.peek();
  if (!in.eof()) {
    throw LoadError("checkpoint: trailing bytes after parameter data");
  }
  return params;
}

}  // namespace dartvae::model
