#pragma once

#include <cstdint>

namespace lrcssm::flops {

/// Hand-counted cost per unit-step of each kernel, in multiply-adds
/// (transcendentals count as one). These constants are shared by the
/// instrumented counters and the closed-form estimate.
inline constexpr std::uint64_t kCellEval = 27;     // unit_forward
inline constexpr std::uint64_t kCellLambda = 21;   // unit_lambda
inline constexpr std::uint64_t kLinearizeOffset = 1;
inline constexpr std::uint64_t kAffineCompose = 2;  // per lane
inline constexpr std::uint64_t kCellBackward = 45;  // unit_backward
inline constexpr std::uint64_t kKalmanCompose = 16; // per lane, damped solver

enum class Phase { forward, backward };

struct Tally {
  std::uint64_t forward = 0;
  std::uint64_t backward = 0;
};

/// Global counters (relaxed atomics). Counting is off until enable().
void enable(bool on);
bool enabled();
void reset();
Tally snapshot();
void add(Phase phase, std::uint64_t n);

}  // namespace lrcssm::flops
