#include "lrcssm/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "lrcssm/config.hpp"
#include "lrcssm/errors.hpp"

namespace lrcssm {

namespace {

constexpr std::array<char, 8> kMagic = {'L', 'R', 'C', 'S', 'S', 'M', '1', '\0'};
constexpr std::uint64_t kMaxString = 1 << 20;

void put_u64(std::ostream& out, std::uint64_t v) {
  unsigned char b[8];
  for (int k = 0; k < 8; ++k) b[k] = static_cast<unsigned char>(v >> (8 * k));
  out.write(reinterpret_cast<const char*>(b), 8);
}

std::uint64_t get_u64(std::istream& in) {
  unsigned char b[8];
  if (!in.read(reinterpret_cast<char*>(b), 8)) throw DataError("checkpoint truncated");
  std::uint64_t v = 0;
  for (int k = 0; k < 8; ++k) v |= static_cast<std::uint64_t>(b[k]) << (8 * k);
  return v;
}

void put_string(std::ostream& out, const std::string& s) {
  put_u64(out, s.size());
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string get_string(std::istream& in) {
  const auto n = get_u64(in);
  if (n > kMaxString) throw DataError("checkpoint string too long");
  std::string s(n, '\0');
  if (!in.read(s.data(), static_cast<std::streamsize>(n))) throw DataError("checkpoint truncated");
  return s;
}

}  // namespace

std::string model_config_echo(const ModelConfig& cfg) {
  std::ostringstream out;
  out << "model.input_dim=" << cfg.input_dim << "\n";
  out << "model.hidden_dim=" << cfg.hidden_dim << "\n";
  out << "model.state_dim=" << cfg.state_dim << "\n";
  out << "model.num_blocks=" << cfg.num_blocks << "\n";
  out << "model.num_classes=" << cfg.num_classes << "\n";
  out << "model.dt=" << format_double(cfg.dt) << "\n";
  out << "model.dependence_mode=" << to_string(cfg.dependence_mode) << "\n";
  out << "model.rho_clamp=" << (cfg.rho_clamp ? format_double(*cfg.rho_clamp) : std::string("none")) << "\n";
  out << "model.pooling=" << to_string(cfg.pooling) << "\n";
  out << "model.seed=" << cfg.seed << "\n";
  out << "solver.mode=" << to_string(cfg.solver.mode) << "\n";
  out << "solver.tol=" << format_double(cfg.solver.tol) << "\n";
  out << "solver.max_iters=" << cfg.solver.max_iters << "\n";
  out << "solver.trust_ratio=" << format_double(cfg.solver.trust_ratio) << "\n";
  return out.str();
}

ModelConfig parse_model_config_echo(std::string_view text) {
  ModelConfig cfg;
  for (const auto& e : parse_key_values(text))
    if (!apply_model_key(cfg, e.key, e.value))
      throw ConfigError("line " + std::to_string(e.line) + ": unknown key '" + e.key + "'");
  cfg.validate();
  return cfg;
}

void write_checkpoint(std::ostream& out, const ModelConfig& cfg, const ModelParams& params) {
  params.check_shapes(cfg);
  out.write(kMagic.data(), kMagic.size());
  put_string(out, model_config_echo(cfg));
  std::uint64_t count = 0;
  params.for_each_array([&](const std::string&, std::span<const double>) { ++count; });
  put_u64(out, count);
  params.for_each_array([&](const std::string& name, std::span<const double> a) {
    put_string(out, name);
    put_u64(out, a.size());
    for (double v : a) put_u64(out, std::bit_cast<std::uint64_t>(v));
  });
  if (!out) throw Error("checkpoint write failed");
}

Checkpoint read_checkpoint(std::istream& in) {
  std::array<char, 8> magic{};
  if (!in.read(magic.data(), magic.size()) || magic != kMagic) throw DataError("not an lrcssm checkpoint");
  Checkpoint ck;
  try {
    ck.config = parse_model_config_echo(get_string(in));
  } catch (const ConfigError& e) {
    throw DataError(std::string("checkpoint config: ") + e.what());
  }
  ck.params = ModelParams::zeros(ck.config);
  std::uint64_t expected = 0;
  ck.params.for_each_array([&](const std::string&, std::span<double>) { ++expected; });
  if (get_u64(in) != expected) throw DataError("checkpoint array count does not match its config");
  ck.params.for_each_array([&](const std::string& name, std::span<double> a) {
    const std::string got = get_string(in);
    if (got != name) throw DataError("checkpoint array '" + got + "' found where '" + name + "' was expected");
    if (get_u64(in) != a.size()) throw DataError("checkpoint array '" + name + "' has the wrong size");
    for (double& v : a) v = std::bit_cast<double>(get_u64(in));
  });
  return ck;
}

void save_checkpoint(const std::filesystem::path& path, const ModelConfig& cfg, const ModelParams& params) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write checkpoint " + path.string());
  write_checkpoint(out, cfg, params);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  return read_checkpoint(in);
}

}  // namespace lrcssm
