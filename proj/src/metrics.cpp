#include "sketch3t/metrics.hpp"

#include "sketch3t/error.hpp"

#include <algorithm>

namespace sketch3t {

double average_precision(std::span<const int> rel, std::size_t* no_relevant) {
    double acc = 0.0;
    std::size_t hits = 0;
    for (std::size_t k = 0; k < rel.size(); ++k) {
        if (!rel[k]) continue;
        ++hits;
        acc += static_cast<double>(hits) / static_cast<double>(k + 1);
    }
    if (hits == 0) {
        if (no_relevant) ++*no_relevant;
        return 0.0;
    }
    return acc / static_cast<double>(hits);
}

double precision_at_k(std::span<const int> rel, int k) {
    if (k < 1) throw ConfigError("precision_at_k needs k >= 1");
    const std::size_t top = std::min(static_cast<std::size_t>(k), rel.size());
    if (top == 0) return 0.0;
    const auto hits = std::count_if(rel.begin(), rel.begin() + static_cast<std::ptrdiff_t>(top), [](int r) { return r != 0; });
    return static_cast<double>(hits) / static_cast<double>(top);
}

double mean_over_queries(std::span<const double> values) {
    if (values.empty()) throw Error("mean over an empty set of queries");
    double acc = 0.0;
    for (double v : values) acc += v;
    return acc / static_cast<double>(values.size());
}

} // namespace sketch3t
