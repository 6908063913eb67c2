#pragma once

#include <filesystem>

#include "dartvae/model.hpp"

namespace dartvae::model {

/// Binary checkpoint: "DVAE" magic, u16 format version, length-prefixed
/// ModelConfig JSON, then every parameter tensor as little-endian 64-bit
/// reals in canonical layout order.
void save_checkpoint(const ModelParams& params,
                     const std::filesystem::path& path);

ModelParams load_checkpoint(const std::filesystem::path& path);

}  // namespace dartvae::model
