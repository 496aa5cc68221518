#include "pse/parallel.hpp"

#include <atomic>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace pse {

namespace {
std::atomic<int> g_threads{0};  // 0 = auto
}

void set_num_threads(int n) { g_threads.store(n <= 0 ? 0 : n); }

int num_threads() {
#ifdef _OPENMP
  const int n = g_threads.load();
  return n > 0 ? n : omp_get_max_threads();
#else
  return 1;
#endif
}

bool openmp_enabled() {
#ifdef _OPENMP
  return true;
#else
  return false;
#endif
}

namespace detail {
int resolve_threads(std::int64_t n) {
  const int nt = num_threads();
  if (nt <= 1 || n <= 1) return 1;
  return static_cast<int>(n < nt ? n : nt);
}
}  // namespace detail

}  // namespace pse
