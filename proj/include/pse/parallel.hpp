#pragma once

#include <cstdint>

// Thread-budget control for the OpenMP kernels. A budget of 1 runs every
// kernel strictly serially; that mode is the bit-deterministic reference the
// tests and the reproducibility guarantees rely on.

namespace pse {

// n <= 0 selects the OpenMP default (all hardware threads). Without OpenMP
// the budget is pinned to 1.
void set_num_threads(int n);
int num_threads();
bool openmp_enabled();

namespace detail {
int resolve_threads(std::int64_t n);
}

// Runs body(i) for i in [0, n). Bodies must write disjoint state; results are
// identical for every thread budget.
template <class F>
void parallel_for(std::int64_t n, F&& body) {
  const int nt = detail::resolve_threads(n);
  if (nt > 1) {
#pragma omp parallel for schedule(static) num_threads(nt)
    for (std::int64_t i = 0; i < n; ++i) body(i);
  } else {
    for (std::int64_t i = 0; i < n; ++i) body(i);
  }
}

// Splits [0, n) into num_threads() contiguous chunks and runs
// body(chunk, begin, end), possibly in parallel. Returns the chunk count so
// per-chunk partial results can be reduced in chunk order. Chunk boundaries
// depend only on the thread budget, not on scheduling.
template <class F>
int parallel_chunks(std::int64_t n, F&& body) {
  const int nc = detail::resolve_threads(n);
  if (nc <= 1) {
    if (n > 0) body(0, std::int64_t{0}, n);
    return n > 0 ? 1 : 0;
  }
#pragma omp parallel for schedule(static, 1) num_threads(nc)
  for (int c = 0; c < nc; ++c) {
    const std::int64_t lo = n * c / nc;
    const std::int64_t hi = n * (c + 1) / nc;
    if (lo < hi) body(c, lo, hi);
  }
  return nc;
}

}  // namespace pse
