#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace sann {

using VectorId = std::uint32_t;
using PostingId = std::uint32_t;

// Posting ids are 23-bit values. The all-ones pattern is reserved as the
// "no posting" sentinel and is never allocated.
inline constexpr PostingId kNoPosting = (1u << 23) - 1;
inline constexpr PostingId kMaxPostingId = kNoPosting - 1;

struct Vector {
    VectorId id = 0;
    std::vector<float> data;
};

class NotFoundError : public std::runtime_error {
public:
    explicit NotFoundError(const std::string& what) : std::runtime_error(what) {}
};

class FormatError : public std::runtime_error {
public:
    FormatError(const std::string& what, std::uint64_t offset)
        : std::runtime_error(what + " (byte offset " + std::to_string(offset) + ")"),
          offset_(offset) {}
    std::uint64_t offset() const { return offset_; }

private:
    std::uint64_t offset_;
};

// Squared Euclidean distance, float accumulation in a plain scalar loop.
// Squared values are used for all internal comparisons; sqrt is applied only
// where a true metric value is reported.
float distance_sq(std::span<const float> a, std::span<const float> b);

// Same distance with a 64-bit (double) accumulator, selectable via
// IndexConfig::wide_accumulate.
float distance_sq_wide(std::span<const float> a, std::span<const float> b);

inline float distance(std::span<const float> a, std::span<const float> b) {
    return std::sqrt(distance_sq(a, b));
}

struct IndexConfig {
    std::uint32_t dimension = 0;
    std::uint32_t split_threshold = 80;  // l_max
    std::uint32_t merge_threshold = 10;  // l_min
    float balance_factor = 0.15f;        // f, in (0, 0.5)
    std::uint32_t search_postings = 32;
    std::uint32_t k = 10;
    std::uint32_t fg_threads = 1;
    std::uint32_t bg_threads = 4;
    std::uint32_t search_threads = 4;
    std::chrono::milliseconds detector_period{100};
    std::size_t queue_capacity = 4096;
    std::uint32_t chase_depth = 8;
    std::uint64_t seed = 42;
    bool fine_grained_control = true;  // off = coarse per-posting locking
    bool balance_detector = true;      // off = strict insert/search triggers only
    bool deterministic = false;        // run background jobs inline, single thread
    bool wide_accumulate = false;

    void validate() const;
};

inline float distance_sq_cfg(const IndexConfig& cfg, std::span<const float> a,
                             std::span<const float> b) {
    return cfg.wide_accumulate ? distance_sq_wide(a, b) : distance_sq(a, b);
}

}  // namespace sann
