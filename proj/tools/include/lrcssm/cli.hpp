#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "lrcssm/data.hpp"
#include "lrcssm/network.hpp"
#include "lrcssm/training.hpp"
#include "lrcssm/verify.hpp"

namespace lrcssm::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitData = 3;

struct DataConfig {
  std::vector<std::string> paths;  // .ts / .csv files, concatenated before splitting
  std::optional<SynthKind> synth;
  std::size_t synth_length = 1000;
  std::size_t synth_channels = 2;
  std::size_t synth_samples = 2000;
  std::uint64_t synth_seed = 1;
  std::uint64_t split_seed = kDefaultSplitSeeds[0];
  std::vector<std::uint64_t> split_seeds{std::begin(kDefaultSplitSeeds), std::end(kDefaultSplitSeeds)};
  SplitFractions fractions;
};

struct OutputConfig {
  std::string dir = "lrcssm_out";
  /// When false, metrics records carry wall_ms = null so reruns are byte-identical.
  bool record_wall_ms = true;
};

struct BenchConfig {
  std::vector<std::size_t> lengths{256, 1024, 4096, 16384};
  std::vector<std::size_t> threads{1};
  RuntimeOptions runtime;
};

/// Everything a subcommand can be configured with.
struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  DataConfig data;
  OutputConfig output;
  BenchConfig bench;
  std::set<std::string> explicit_keys;

  void validate() const;
};

/// Applies `key=value` lines, then `overrides` (each "key=value"), to the
/// defaults. Unknown keys and malformed values throw ConfigError.
RunConfig parse_run_config(std::string_view text, const std::vector<std::string>& overrides = {});
RunConfig load_run_config(const std::string& path, const std::vector<std::string>& overrides = {});

/// Every key with its resolved value, one `key=value` per line.
std::string resolved_config(const RunConfig& rc);

/// One line per key: name, default and description.
std::string key_reference();

/// Concatenated files or the synthetic task described by `data`.
Dataset load_data(const DataConfig& data);

/// Entry point shared by the executable and the tests. `args` excludes the
/// program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

struct SuiteOptions {
  std::string suite = "all";  // all | stability | solver | gradients
  bool unstable_fixture = false;
  std::uint64_t seed = 0;
};

/// Runs the selected verification checks, writing one JSON line per check
/// to `out`.
std::vector<CheckReport> run_suites(const SuiteOptions& opts, std::ostream& out);

}  // namespace lrcssm::cli
