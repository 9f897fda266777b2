#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "sann/core.hpp"

namespace sann {

struct SearchResult {
    struct Neighbor {
        VectorId vid = 0;
        float dist = 0.0f;  // true (non-squared) Euclidean distance
    };
    std::vector<Neighbor> neighbors;  // ascending by (dist, vid)
};

// Fraction of ground-truth ids recovered: |result ∩ truth| / |truth|.
// The result may legitimately be shorter than truth (index holds < k vectors).
double compute_recall(const SearchResult& result, std::span<const VectorId> truth);

}  // namespace sann
