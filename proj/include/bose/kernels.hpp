#pragma once

// Data-parallel building blocks.
//
// Every parallel kernel splits its index range into a fixed number of chunks
// that does not depend on the thread count, reduces each chunk independently
// and merges the partial results in chunk order. The numerics are therefore
// identical for 1 and N threads. Each kernel has a plain single-pass
// counterpart in `serial` that the tests compare against.

#include <cstddef>
#include <utility>
#include <vector>

#include "bose/common.hpp"

namespace bose::kernels {

inline constexpr std::size_t kReduceChunks = 64;

/// Chunk bounds [lo, hi) for chunk c of kReduceChunks over n items.
inline std::pair<std::size_t, std::size_t> chunk_bounds(std::size_t n, std::size_t c,
                                                        std::size_t chunks = kReduceChunks) {
  return {n * c / chunks, n * (c + 1) / chunks};
}

/// Σ_{i<n} term(i), compensated, deterministic across thread counts.
template <class Term>
double sum(std::size_t n, Term&& term) {
  std::vector<double> partial(kReduceChunks, 0.0);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t c = 0; c < static_cast<std::ptrdiff_t>(kReduceChunks); ++c) {
    const auto [lo, hi] = chunk_bounds(n, static_cast<std::size_t>(c));
    KahanSum s;
    for (std::size_t i = lo; i < hi; ++i) s += term(i);
    partial[static_cast<std::size_t>(c)] = s.value();
  }
  KahanSum total;
  for (double p : partial) total += p;
  return total.value();
}

/// Runs body(i) for i < n in parallel; results must be written to
/// caller-owned slot i so that any later merge is order-fixed.
template <class Body>
void for_each_index(std::size_t n, Body&& body) {
#pragma omp parallel for schedule(dynamic, 1)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) {
    body(static_cast<std::size_t>(i));
  }
}

namespace serial {

template <class Term>
double sum(std::size_t n, Term&& term) {
  KahanSum s;
  for (std::size_t i = 0; i < n; ++i) s += term(i);
  return s.value();
}

template <class Body>
void for_each_index(std::size_t n, Body&& body) {
  for (std::size_t i = 0; i < n; ++i) body(i);
}

}  // namespace serial

/// Number of OpenMP threads the parallel kernels will use.
int thread_count();
/// Sets the OpenMP thread count (no-op without OpenMP).
void set_thread_count(int n);

}  // namespace bose::kernels
