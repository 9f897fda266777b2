#pragma once

#include <array>
#include <atomic>
#include <cstdint>
#include <memory>
#include <mutex>
#include <span>
#include <vector>

#include "sann/core.hpp"

namespace sann {

// Exact flat index over posting centroids. Lookups scan every alive centroid;
// at desk scale (tens of thousands of postings) that is fast, simple and has
// zero tuning parameters. Readers run lock-free against concurrent writers;
// a reader may still observe a centroid that was just removed, which callers
// tolerate (posting status is re-checked downstream).
class CentroidIndex {
public:
    struct Hit {
        PostingId pid = kNoPosting;
        float dist_sq = 0.0f;
    };

    explicit CentroidIndex(std::uint32_t dimension);
    ~CentroidIndex();
    CentroidIndex(const CentroidIndex&) = delete;
    CentroidIndex& operator=(const CentroidIndex&) = delete;

    std::uint32_t dimension() const { return dimension_; }

    // Adding a pid twice (even after removal) is a usage error: posting ids
    // are never recycled.
    void add(PostingId pid, std::span<const float> centroid);

    // Removing an unknown or already-removed pid is a usage error.
    void remove(PostingId pid);

    bool is_alive(PostingId pid) const;

    // Centroid coordinates; valid for any pid ever added (alive or removed).
    // Throws NotFoundError for pids never added.
    std::span<const float> centroid(PostingId pid) const;

    // The m nearest alive centroids, ascending by (distance, pid).
    // Results for m are always a prefix of results for m+1.
    void nearest(std::span<const float> query, std::size_t m,
                 std::vector<Hit>& out) const;
    std::vector<Hit> nearest(std::span<const float> query, std::size_t m) const;

    std::size_t alive_count() const { return alive_count_.load(std::memory_order_acquire); }
    std::vector<PostingId> alive_pids() const;

private:
    static constexpr std::size_t kSegmentBits = 10;  // 1024 slots per segment
    static constexpr std::size_t kSegmentSize = std::size_t{1} << kSegmentBits;
    static constexpr std::size_t kMaxSegments = 8192;

    enum : std::uint8_t { kAbsent = 0, kAlive = 1, kRemoved = 2 };

    struct Segment {
        explicit Segment(std::size_t floats) : coords(new float[floats]) {}
        std::unique_ptr<float[]> coords;
        std::array<std::atomic<std::uint8_t>, kSegmentSize> state{};
    };

    Segment* segment_for(PostingId pid, bool create);

    std::uint32_t dimension_;
    std::array<std::atomic<Segment*>, kMaxSegments> segments_{};
    std::mutex write_mutex_;
    std::atomic<std::uint32_t> end_pid_{0};
    std::atomic<std::size_t> alive_count_{0};
};

}  // namespace sann
