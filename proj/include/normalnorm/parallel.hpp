#ifndef NORMALNORM_PARALLEL_HPP
#define NORMALNORM_PARALLEL_HPP

#include <cstdint>
#include <functional>

namespace normalnorm {

// Thread cap: min(hardware, NORMALNORM_THREADS when set). At least 1.
int max_threads();

// Runs fn(i) for i in [0, n). Work items must write to disjoint locations;
// results are schedule-invariant because each item is internally sequential.
// Falls back to a serial loop for small n or when capped to one thread.
void parallel_for(std::int64_t n, const std::function<void(std::int64_t)>& fn);

} // namespace normalnorm

#endif
