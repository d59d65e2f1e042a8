#pragma once

#include <filesystem>
#include <iosfwd>

#include "lrcssm/network.hpp"

namespace lrcssm {

/// Binary checkpoint layout (all integers little-endian):
///   8 bytes   magic "LRCSSM1\0"
///   u64       byte length of the config echo, then the echo itself
///             (model.* and solver.* as key=value lines)
///   u64       array count
///   per array: u64 name length, name bytes, u64 element count,
///              element count x IEEE-754 binary64 little-endian
/// Arrays follow ModelParams::for_each_array order.
void save_checkpoint(const std::filesystem::path& path, const ModelConfig& cfg, const ModelParams& params);

struct Checkpoint {
  ModelConfig config;
  ModelParams params;
};

Checkpoint load_checkpoint(const std::filesystem::path& path);

void write_checkpoint(std::ostream& out, const ModelConfig& cfg, const ModelParams& params);
Checkpoint read_checkpoint(std::istream& in);

/// key=value echo of the model and solver settings.
std::string model_config_echo(const ModelConfig& cfg);
/// Parses model.* / solver.* keys; unknown keys throw ConfigError.
ModelConfig parse_model_config_echo(std::string_view text);

}  // namespace lrcssm
