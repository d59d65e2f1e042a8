#include "lrcssm/flops.hpp"

#include <atomic>

namespace lrcssm::flops {

namespace {
std::atomic<bool> g_enabled{false};
std::atomic<std::uint64_t> g_forward{0};
std::atomic<std::uint64_t> g_backward{0};
}  // namespace

void enable(bool on) { g_enabled.store(on, std::memory_order_relaxed); }
bool enabled() { return g_enabled.load(std::memory_order_relaxed); }

void reset() {
  g_forward.store(0, std::memory_order_relaxed);
  g_backward.store(0, std::memory_order_relaxed);
}

Tally snapshot() { return {g_forward.load(std::memory_order_relaxed), g_backward.load(std::memory_order_relaxed)}; }

void add(Phase phase, std::uint64_t n) {
  if (!enabled()) return;
  (phase == Phase::forward ? g_forward : g_backward).fetch_add(n, std::memory_order_relaxed);
}

}  // namespace lrcssm::flops
