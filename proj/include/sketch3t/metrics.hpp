#pragma once

#include <cstddef>
#include <span>

namespace sketch3t {

/// Average precision over the full ranked list of 0/1 relevance marks. A list
/// without relevant items scores 0 and bumps `no_relevant` when given.
double average_precision(std::span<const int> relevance, std::size_t* no_relevant = nullptr);

/// Relevant fraction of the top min(k, n) ranks. Requires k >= 1.
double precision_at_k(std::span<const int> relevance, int k);

/// Arithmetic mean; throws Error on empty input.
double mean_over_queries(std::span<const double> values);

} // namespace sketch3t
