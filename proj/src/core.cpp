#include "sann/core.hpp"

#include <cassert>

namespace sann {

float distance_sq(std::span<const float> a, std::span<const float> b) {
    assert(a.size() == b.size());
    float acc = 0.0f;
    for (std::size_t i = 0; i < a.size(); ++i) {
        float d = a[i] - b[i];
        acc += d * d;
    }
    return acc;
}

float distance_sq_wide(std::span<const float> a, std::span<const float> b) {
    assert(a.size() == b.size());
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
        acc += d * d;
    }
    return static_cast<float>(acc);
}

void IndexConfig::validate() const {
    if (dimension == 0) {
        throw std::invalid_argument("dimension must be positive");
    }
    if (merge_threshold >= split_threshold) {
        throw std::invalid_argument("merge_threshold must be below split_threshold");
    }
    if (!(balance_factor > 0.0f && balance_factor < 0.5f)) {
        throw std::invalid_argument("balance_factor must lie in (0, 0.5)");
    }
    if (search_postings == 0 || k == 0) {
        throw std::invalid_argument("search_postings and k must be positive");
    }
    if (queue_capacity == 0) {
        throw std::invalid_argument("queue_capacity must be positive");
    }
    if (detector_period.count() <= 0) {
        throw std::invalid_argument("detector_period must be positive");
    }
}

}  // namespace sann
