#pragma once

#include <cstddef>
#include <cstdint>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace attrition {

inline int hardware_threads() {
#ifdef _OPENMP
    return omp_get_max_threads();
#else
    return 1;
#endif
}

// Static-scheduled parallel loop over [0, n). Every iteration writes only
// its own outputs, so results are identical to the serial loop regardless
// of thread count.
template <typename Fn>
void parallel_for(size_t n, Fn&& fn) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < static_cast<int64_t>(n); ++i) {
        fn(static_cast<size_t>(i));
    }
#else
    for (size_t i = 0; i < n; ++i) fn(i);
#endif
}

template <typename Fn>
void serial_for(size_t n, Fn&& fn) {
    for (size_t i = 0; i < n; ++i) fn(i);
}

} // namespace attrition
