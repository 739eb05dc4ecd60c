#pragma once

// Argmax / max reductions over an index range. Ties resolve to the smallest
// index on both paths, so serial and OpenMP results are bit-identical.

#include <algorithm>
#include <cstdint>
#include <limits>

#include <omp.h>

#include "anq/exec.hpp"

namespace anq::kernels {

struct IndexedMax {
    double value = -std::numeric_limits<double>::infinity();
    std::int64_t index = -1;

    void offer(double v, std::int64_t i) {
        if (index < 0 || v > value || (v == value && i < index)) {
            value = v;
            index = i;
        }
    }
    void merge(const IndexedMax& other) {
        if (other.index < 0) return;
        if (index < 0 || other.value > value || (other.value == value && other.index < index)) *this = other;
    }
};

/// eval(i) returns the value at i, or NaN to skip i.
template <typename Eval>
IndexedMax argmax(std::int64_t count, Exec exec, Eval&& eval) {
    IndexedMax best;
    if (exec == Exec::serial) {
        for (std::int64_t i = 0; i < count; ++i) {
            const double v = eval(i);
            if (v == v) best.offer(v, i);
        }
        return best;
    }
#pragma omp parallel
    {
        IndexedMax local;
#pragma omp for schedule(static) nowait
        for (std::int64_t i = 0; i < count; ++i) {
            const double v = eval(i);
            if (v == v) local.offer(v, i);
        }
#pragma omp critical(anq_argmax_merge)
        best.merge(local);
    }
    return best;
}

/// max over i of eval(i); returns `empty` for an empty range.
template <typename Eval>
double max_over(std::int64_t count, Exec exec, double empty, Eval&& eval) {
    double best = empty;
    if (exec == Exec::serial) {
        for (std::int64_t i = 0; i < count; ++i) best = std::max(best, eval(i));
        return best;
    }
#pragma omp parallel for schedule(static) reduction(max : best)
    for (std::int64_t i = 0; i < count; ++i) best = std::max(best, eval(i));
    return best;
}

}  // namespace anq::kernels
