#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "lrcssm/network.hpp"

namespace lrcssm {

/// One `key=value` line of a flat config file.
struct ConfigEntry {
  std::string key;
  std::string value;
  std::size_t line = 0;
};

/// Parses `key = value` lines. Blank lines and lines starting with '#'
/// are skipped; CRLF is accepted. Throws ConfigError (with line number)
/// on lines without '=' or on duplicate keys.
std::vector<ConfigEntry> parse_key_values(std::string_view text);

/// Applies a model.* or solver.* key. Returns false if the key is not one
/// of them; throws ConfigError on a malformed value.
bool apply_model_key(ModelConfig& cfg, std::string_view key, std::string_view value);

/// Value helpers; all throw ConfigError naming `key` on failure.
double parse_double(std::string_view key, std::string_view value);
std::size_t parse_size(std::string_view key, std::string_view value);
std::uint64_t parse_u64(std::string_view key, std::string_view value);
bool parse_bool(std::string_view key, std::string_view value);
std::vector<double> parse_double_list(std::string_view key, std::string_view value);
std::vector<std::size_t> parse_size_list(std::string_view key, std::string_view value);

std::string format_double(double v);

}  // namespace lrcssm
