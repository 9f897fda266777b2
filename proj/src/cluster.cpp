#include "sann/cluster.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <random>
#include <stdexcept>

namespace sann {

std::vector<float> mean_point(const std::vector<std::span<const float>>& points,
                              std::uint32_t dimension) {
    if (points.empty()) {
        throw std::invalid_argument("mean of empty point set");
    }
    std::vector<double> acc(dimension, 0.0);
    for (const auto& p : points) {
        for (std::uint32_t d = 0; d < dimension; ++d) {
            acc[d] += p[d];
        }
    }
    std::vector<float> mean(dimension);
    for (std::uint32_t d = 0; d < dimension; ++d) {
        mean[d] = static_cast<float>(acc[d] / static_cast<double>(points.size()));
    }
    return mean;
}

namespace {

std::vector<float> mean_of(const std::vector<std::span<const float>>& points,
                           const std::vector<std::uint32_t>& members,
                           std::uint32_t dimension) {
    std::vector<double> acc(dimension, 0.0);
    for (std::uint32_t idx : members) {
        for (std::uint32_t d = 0; d < dimension; ++d) {
            acc[d] += points[idx][d];
        }
    }
    std::vector<float> mean(dimension);
    for (std::uint32_t d = 0; d < dimension; ++d) {
        mean[d] = static_cast<float>(acc[d] / static_cast<double>(members.size()));
    }
    return mean;
}

float rel_shift(std::span<const float> from, std::span<const float> to) {
    float moved = distance_sq(from, to);
    float base = 0.0f;
    for (float v : from) {
        base += v * v;
    }
    return std::sqrt(moved) / (std::sqrt(base) + 1e-12f);
}

}  // namespace

TwoMeansResult two_means(const std::vector<std::span<const float>>& points,
                         std::uint32_t dimension, std::uint64_t seed) {
    const std::size_t n = points.size();
    if (n < 2) {
        throw std::invalid_argument("two_means needs at least two points");
    }
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);

    // Seed from the farthest of 32 sampled point pairs.
    std::size_t best_i = 0, best_j = 1;
    float best_d = distance_sq(points[0], points[1]);
    for (int s = 0; s < 32; ++s) {
        std::size_t i = pick(rng);
        std::size_t j = pick(rng);
        if (i == j) {
            continue;
        }
        float d = distance_sq(points[i], points[j]);
        if (d > best_d) {
            best_d = d;
            best_i = i;
            best_j = j;
        }
    }

    TwoMeansResult result;
    result.centroids[0].assign(points[best_i].begin(), points[best_i].end());
    result.centroids[1].assign(points[best_j].begin(), points[best_j].end());

    std::vector<std::uint8_t> side(n, 0);
    for (int iter = 0; iter < 16; ++iter) {
        // Assignment; ties go to side 0 for determinism.
        bool changed = iter == 0;
        result.groups[0].clear();
        result.groups[1].clear();
        for (std::size_t i = 0; i < n; ++i) {
            float d0 = distance_sq(points[i], result.centroids[0]);
            float d1 = distance_sq(points[i], result.centroids[1]);
            std::uint8_t s = d1 < d0 ? 1 : 0;
            if (s != side[i]) {
                side[i] = s;
                changed = true;
            }
            result.groups[s].push_back(static_cast<std::uint32_t>(i));
        }
        // Empty-side repair: steal the farthest point of the full side.
        for (int s = 0; s < 2; ++s) {
            if (!result.groups[s].empty()) {
                continue;
            }
            auto& donor = result.groups[1 - s];
            std::size_t far_pos = 0;
            float far_d = -1.0f;
            for (std::size_t pos = 0; pos < donor.size(); ++pos) {
                float d = distance_sq(points[donor[pos]], result.centroids[1 - s]);
                if (d > far_d) {
                    far_d = d;
                    far_pos = pos;
                }
            }
            std::uint32_t idx = donor[far_pos];
            donor.erase(donor.begin() + static_cast<std::ptrdiff_t>(far_pos));
            result.groups[s].push_back(idx);
            side[idx] = static_cast<std::uint8_t>(s);
            changed = true;
        }
        auto c0 = mean_of(points, result.groups[0], dimension);
        auto c1 = mean_of(points, result.groups[1], dimension);
        float shift = std::max(rel_shift(result.centroids[0], c0),
                               rel_shift(result.centroids[1], c1));
        result.centroids[0] = std::move(c0);
        result.centroids[1] = std::move(c1);
        if (!changed || shift < 1e-4f) {
            break;
        }
    }
    return result;
}

KMeansResult lloyd_kmeans(const std::vector<std::span<const float>>& points,
                          std::size_t k, std::uint32_t dimension, std::uint64_t seed,
                          std::size_t max_iters) {
    const std::size_t n = points.size();
    if (k == 0 || n == 0) {
        throw std::invalid_argument("k-means needs points and k > 0");
    }
    k = std::min(k, n);
    std::mt19937_64 rng(seed);

    // k-means++ seeding.
    KMeansResult result;
    result.centroids.reserve(k);
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    std::size_t first = pick(rng);
    result.centroids.emplace_back(points[first].begin(), points[first].end());
    std::vector<float> min_d(n);
    for (std::size_t i = 0; i < n; ++i) {
        min_d[i] = distance_sq(points[i], result.centroids[0]);
    }
    while (result.centroids.size() < k) {
        double total = 0.0;
        for (float d : min_d) {
            total += d;
        }
        std::size_t chosen;
        if (total <= 0.0) {
            chosen = pick(rng);  // all points coincide with chosen centers
        } else {
            std::uniform_real_distribution<double> u(0.0, total);
            double target = u(rng);
            double run = 0.0;
            chosen = n - 1;
            for (std::size_t i = 0; i < n; ++i) {
                run += min_d[i];
                if (run >= target) {
                    chosen = i;
                    break;
                }
            }
        }
        result.centroids.emplace_back(points[chosen].begin(), points[chosen].end());
        const auto& c = result.centroids.back();
        for (std::size_t i = 0; i < n; ++i) {
            min_d[i] = std::min(min_d[i], distance_sq(points[i], c));
        }
    }

    result.assignment.assign(n, 0);
    std::vector<std::vector<std::uint32_t>> members(k);
    for (std::size_t iter = 0; iter < max_iters; ++iter) {
        bool changed = iter == 0;
        for (auto& m : members) {
            m.clear();
        }
        for (std::size_t i = 0; i < n; ++i) {
            std::uint32_t best = 0;
            float best_d = distance_sq(points[i], result.centroids[0]);
            for (std::uint32_t c = 1; c < k; ++c) {
                float d = distance_sq(points[i], result.centroids[c]);
                if (d < best_d) {
                    best_d = d;
                    best = c;
                }
            }
            if (result.assignment[i] != best) {
                result.assignment[i] = best;
                changed = true;
            }
            members[best].push_back(static_cast<std::uint32_t>(i));
        }
        // Repair empty clusters from the most populated one.
        for (std::uint32_t c = 0; c < k; ++c) {
            if (!members[c].empty()) {
                continue;
            }
            std::uint32_t donor = 0;
            for (std::uint32_t d = 1; d < k; ++d) {
                if (members[d].size() > members[donor].size()) {
                    donor = d;
                }
            }
            if (members[donor].size() < 2) {
                continue;
            }
            std::size_t far_pos = 0;
            float far_d = -1.0f;
            for (std::size_t pos = 0; pos < members[donor].size(); ++pos) {
                float d = distance_sq(points[members[donor][pos]], result.centroids[donor]);
                if (d > far_d) {
                    far_d = d;
                    far_pos = pos;
                }
            }
            std::uint32_t idx = members[donor][far_pos];
            members[donor].erase(members[donor].begin() + static_cast<std::ptrdiff_t>(far_pos));
            members[c].push_back(idx);
            result.assignment[idx] = c;
            changed = true;
        }
        for (std::uint32_t c = 0; c < k; ++c) {
            if (!members[c].empty()) {
                result.centroids[c] = mean_of(points, members[c], dimension);
            }
        }
        if (!changed) {
            break;
        }
    }
    return result;
}

}  // namespace sann
