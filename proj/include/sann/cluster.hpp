#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "sann/core.hpp"

namespace sann {

// Binary split of a point set. Seeded by the farthest pair among 32 sampled
// candidate pairs, refined by Lloyd iterations (at most 16, stopping early
// when centroids shift by less than 1e-4 relative). Deterministic for a fixed
// seed: same inputs give bit-identical partitions and centroids.
struct TwoMeansResult {
    std::array<std::vector<std::uint32_t>, 2> groups;  // indices into points
    std::array<std::vector<float>, 2> centroids;
};

TwoMeansResult two_means(const std::vector<std::span<const float>>& points,
                         std::uint32_t dimension, std::uint64_t seed);

// Bulk k-means (k-means++ seeding + Lloyd) used for the initial index build.
// Empty clusters are repaired by stealing the farthest point from the most
// populated cluster, so every returned centroid owns at least one point
// (provided k <= points.size()).
struct KMeansResult {
    std::vector<std::vector<float>> centroids;
    std::vector<std::uint32_t> assignment;  // point index -> centroid index
};

KMeansResult lloyd_kmeans(const std::vector<std::span<const float>>& points,
                          std::size_t k, std::uint32_t dimension, std::uint64_t seed,
                          std::size_t max_iters = 10);

// Dimension-wise mean; points must be non-empty.
std::vector<float> mean_point(const std::vector<std::span<const float>>& points,
                              std::uint32_t dimension);

}  // namespace sann
