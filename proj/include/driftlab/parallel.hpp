#ifndef DRIFTLAB_PARALLEL_HPP
#define DRIFTLAB_PARALLEL_HPP

#include <cstdint>
#include <functional>

namespace driftlab {

/// splitmix64 mix of a master seed and a task index; tasks own derived
/// generators so results do not depend on the thread schedule.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Runs fn(0..count-1) on a small thread pool; exceptions are rethrown on
/// the caller thread. Results must be written to per-index slots.
void parallel_for(int count, const std::function<void(int)>& fn,
                  int max_threads = 0);

}  // namespace driftlab

#endif  // DRIFTLAB_PARALLEL_HPP
