#include "lrcssm/config.hpp"

#include <charconv>
#include <cmath>
#include <set>

#include "lrcssm/errors.hpp"

namespace lrcssm {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

[[noreturn]] void bad_value(std::string_view key, std::string_view value, std::string_view expected) {
  throw ConfigError(std::string(key) + ": invalid value '" + std::string(value) + "' (expected " +
                    std::string(expected) + ")");
}

template <class T>
bool parse_integer(std::string_view value, T& out) {
  value = trim(value);
  if (value.empty() || value.front() == '-') return false;
  const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  return ec == std::errc() && ptr == value.data() + value.size();
}

template <class F>
auto rethrow_as_config(std::string_view key, F&& f) {
  try {
    return f();
  } catch (const ConfigError& e) {
    throw ConfigError(std::string(key) + ": " + e.what());
  }
}

}  // namespace

std::vector<ConfigEntry> parse_key_values(std::string_view text) {
  std::vector<ConfigEntry> out;
  std::set<std::string, std::less<>> seen;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    ++line_no;
    const std::string_view line = trim(text.substr(start, end - start));
    start = end + 1;
    if (line.empty() || line.front() == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos)
      throw ConfigError("line " + std::to_string(line_no) + ": expected key=value, got '" + std::string(line) + "'");
    const std::string key(trim(line.substr(0, eq)));
    if (key.empty()) throw ConfigError("line " + std::to_string(line_no) + ": empty key");
    if (!seen.insert(key).second)
      throw ConfigError("line " + std::to_string(line_no) + ": duplicate key '" + key + "'");
    out.push_back({key, std::string(trim(line.substr(eq + 1))), line_no});
  }
  return out;
}

double parse_double(std::string_view key, std::string_view value) {
  std::string_view v = trim(value);
  if (!v.empty() && v.front() == '+') v.remove_prefix(1);
  double out = 0.0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (v.empty() || ec != std::errc() || ptr != v.data() + v.size() || !std::isfinite(out))
    bad_value(key, value, "a finite number");
  return out;
}

std::size_t parse_size(std::string_view key, std::string_view value) {
  std::size_t out = 0;
  if (!parse_integer(value, out)) bad_value(key, value, "a non-negative integer");
  return out;
}

std::uint64_t parse_u64(std::string_view key, std::string_view value) {
  std::uint64_t out = 0;
  if (!parse_integer(value, out)) bad_value(key, value, "a non-negative integer");
  return out;
}

bool parse_bool(std::string_view key, std::string_view value) {
  const auto v = trim(value);
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  bad_value(key, value, "true or false");
}

std::vector<double> parse_double_list(std::string_view key, std::string_view value) {
  std::vector<double> out;
  std::size_t start = 0;
  while (start <= value.size()) {
    auto end = value.find(',', start);
    if (end == std::string_view::npos) end = value.size();
    out.push_back(parse_double(key, value.substr(start, end - start)));
    start = end + 1;
  }
  return out;
}

std::vector<std::size_t> parse_size_list(std::string_view key, std::string_view value) {
  std::vector<std::size_t> out;
  std::size_t start = 0;
  while (start <= value.size()) {
    auto end = value.find(',', start);
    if (end == std::string_view::npos) end = value.size();
    out.push_back(parse_size(key, value.substr(start, end - start)));
    start = end + 1;
  }
  return out;
}

std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

bool apply_model_key(ModelConfig& cfg, std::string_view key, std::string_view value) {
  const auto v = trim(value);
  if (key == "model.input_dim") cfg.input_dim = parse_size(key, v);
  else if (key == "model.hidden_dim") cfg.hidden_dim = parse_size(key, v);
  else if (key == "model.state_dim") cfg.state_dim = parse_size(key, v);
  else if (key == "model.num_blocks") cfg.num_blocks = parse_size(key, v);
  else if (key == "model.num_classes") cfg.num_classes = parse_size(key, v);
  else if (key == "model.dt") cfg.dt = parse_double(key, v);
  else if (key == "model.dependence_mode")
    cfg.dependence_mode = rethrow_as_config(key, [&] { return parse_dependence_mode(v); });
  else if (key == "model.rho_clamp") {
    if (v == "none" || v.empty()) cfg.rho_clamp.reset();
    else cfg.rho_clamp = parse_double(key, v);
  } else if (key == "model.pooling")
    cfg.pooling = rethrow_as_config(key, [&] { return parse_pooling(v); });
  else if (key == "model.seed") cfg.seed = parse_u64(key, v);
  else if (key == "solver.tol") cfg.solver.tol = parse_double(key, v);
  else if (key == "solver.max_iters") cfg.solver.max_iters = parse_size(key, v);
  else if (key == "solver.mode")
    cfg.solver.mode = rethrow_as_config(key, [&] { return parse_solver_mode(v); });
  else if (key == "solver.trust_ratio") cfg.solver.trust_ratio = parse_double(key, v);
  else return false;
  return true;
}

}  // namespace lrcssm
