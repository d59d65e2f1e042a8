#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "lrcssm/matrix.hpp"

namespace lrcssm {

/// Per-channel z-score statistics.
struct ChannelStats {
  Vector mean;
  Vector stddev;
};

/// Fixed-length multivariate classification data.
struct Dataset {
  std::string name;
  std::vector<Matrix> sequences;  // each T x p
  std::vector<std::size_t> labels;
  std::vector<std::string> class_names;
  ChannelStats stats;  // filled by fit_channel_stats on the training part

  std::size_t size() const noexcept { return sequences.size(); }
  std::size_t class_count() const noexcept { return class_names.size(); }
  std::size_t length() const { return sequences.empty() ? 0 : sequences.front().rows(); }
  std::size_t channels() const { return sequences.empty() ? 0 : sequences.front().cols(); }

  /// Throws DataError on ragged shapes or out-of-range labels.
  void validate() const;
  Dataset subset(std::span<const std::size_t> indices) const;
};

/// Reads the UEA/sktime `.ts` text format (equal-length series only).
/// Unknown directives are skipped with a warning on stderr.
Dataset load_ts(const std::filesystem::path& path);
Dataset parse_ts(std::string_view text, std::string_view source = "<memory>");
void write_ts(const Dataset& ds, const std::filesystem::path& path);
std::string format_ts(const Dataset& ds);

/// CSV with one row per (sequence, step): id,time,ch_0..ch_{p-1},label.
Dataset load_csv(const std::filesystem::path& path);
Dataset parse_csv(std::string_view text, std::string_view source = "<memory>");

/// Dispatches on the file extension (.ts, .csv).
Dataset load_dataset(const std::filesystem::path& path);

struct SplitFractions {
  double train = 0.70;
  double val = 0.15;
  double test = 0.15;
};

struct DatasetSplit {
  Dataset train;
  Dataset val;
  Dataset test;
};

/// Seeded shuffle then contiguous cut. A partition with a positive
/// fraction that ends up empty is a ConfigError.
DatasetSplit split(const Dataset& ds, std::uint64_t seed, SplitFractions fractions = {});

ChannelStats fit_channel_stats(const Dataset& train);

inline constexpr double kStdFloor = 1e-8;

Matrix normalize(const ChannelStats& stats, const Matrix& seq);

/// Fits stats on split.train and applies them to all three parts.
void normalize_split(DatasetSplit& split);

enum class SynthKind { sign_of_sum, long_parity };

SynthKind parse_synth_kind(std::string_view text);
std::string_view to_string(SynthKind kind);

/// Desk-scale stand-ins for long-sequence classification.
///  sign_of_sum: channel 0 carries N(0,1) noise during the first T/4 steps
///    and zero afterwards, channel 1 marks that window; label = sum > 0.
///  long_parity: channel 0 holds 0, 1 or 2 unit spikes at least T/2 apart;
///    label = spike count mod 2, classes balanced.
/// Remaining channels are N(0,1) distractors. Requires T >= 8 and p >= 2
/// for sign_of_sum, p >= 1 for long_parity.
Dataset synth_task(SynthKind kind, std::size_t length, std::size_t channels, std::size_t n_samples,
                   std::uint64_t seed);

}  // namespace lrcssm
