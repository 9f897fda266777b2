#include "sann/centroid_index.hpp"

#include <algorithm>
#include <cassert>
#include <cstring>

namespace sann {

CentroidIndex::CentroidIndex(std::uint32_t dimension) : dimension_(dimension) {
    if (dimension == 0) {
        throw std::invalid_argument("dimension must be positive");
    }
}

CentroidIndex::~CentroidIndex() {
    for (auto& slot : segments_) {
        delete slot.load(std::memory_order_relaxed);
    }
}

CentroidIndex::Segment* CentroidIndex::segment_for(PostingId pid, bool create) {
    std::size_t si = pid >> kSegmentBits;
    if (si >= kMaxSegments) {
        throw std::length_error("centroid index capacity exceeded");
    }
    Segment* seg = segments_[si].load(std::memory_order_acquire);
    if (seg == nullptr && create) {
        // write_mutex_ is already held by the caller on creation paths.
        seg = new Segment(kSegmentSize * dimension_);
        segments_[si].store(seg, std::memory_order_release);
    }
    return seg;
}

void CentroidIndex::add(PostingId pid, std::span<const float> centroid) {
    if (pid > kMaxPostingId) {
        throw std::invalid_argument("posting id out of range");
    }
    if (centroid.size() != dimension_) {
        throw std::invalid_argument("centroid dimension mismatch");
    }
    std::lock_guard<std::mutex> lock(write_mutex_);
    Segment* seg = segment_for(pid, true);
    std::size_t slot = pid & (kSegmentSize - 1);
    if (seg->state[slot].load(std::memory_order_acquire) != kAbsent) {
        throw std::invalid_argument("posting id already added (pids are never recycled)");
    }
    std::memcpy(seg->coords.get() + slot * dimension_, centroid.data(),
                dimension_ * sizeof(float));
    seg->state[slot].store(kAlive, std::memory_order_release);
    std::uint32_t end = end_pid_.load(std::memory_order_relaxed);
    if (end < pid + 1) {
        end_pid_.store(pid + 1, std::memory_order_release);
    }
    alive_count_.fetch_add(1, std::memory_order_acq_rel);
}

void CentroidIndex::remove(PostingId pid) {
    std::lock_guard<std::mutex> lock(write_mutex_);
    Segment* seg = segment_for(pid, false);
    std::size_t slot = pid & (kSegmentSize - 1);
    if (seg == nullptr || seg->state[slot].load(std::memory_order_acquire) != kAlive) {
        throw std::invalid_argument("cannot remove centroid that is not alive");
    }
    seg->state[slot].store(kRemoved, std::memory_order_release);
    alive_count_.fetch_sub(1, std::memory_order_acq_rel);
}

bool CentroidIndex::is_alive(PostingId pid) const {
    std::size_t si = pid >> kSegmentBits;
    if (pid > kMaxPostingId || si >= kMaxSegments) {
        return false;
    }
    Segment* seg = segments_[si].load(std::memory_order_acquire);
    if (seg == nullptr) {
        return false;
    }
    return seg->state[pid & (kSegmentSize - 1)].load(std::memory_order_acquire) == kAlive;
}

std::span<const float> CentroidIndex::centroid(PostingId pid) const {
    std::size_t si = pid >> kSegmentBits;
    Segment* seg = si < kMaxSegments ? segments_[si].load(std::memory_order_acquire) : nullptr;
    std::size_t slot = pid & (kSegmentSize - 1);
    if (seg == nullptr || seg->state[slot].load(std::memory_order_acquire) == kAbsent) {
        throw NotFoundError("centroid for posting " + std::to_string(pid) + " not found");
    }
    return {seg->coords.get() + slot * dimension_, dimension_};
}

void CentroidIndex::nearest(std::span<const float> query, std::size_t m,
                            std::vector<Hit>& out) const {
    if (query.size() != dimension_) {
        throw std::invalid_argument("query dimension mismatch");
    }
    out.clear();
    if (m == 0) {
        return;
    }
    // Bounded max-heap ordered by (dist_sq, pid); the root is the current
    // worst kept hit, so a strictly better candidate evicts it.
    auto worse = [](const Hit& a, const Hit& b) {
        if (a.dist_sq != b.dist_sq) {
            return a.dist_sq < b.dist_sq;
        }
        return a.pid < b.pid;
    };
    std::uint32_t end = end_pid_.load(std::memory_order_acquire);
    for (std::uint32_t base = 0; base < end; base += kSegmentSize) {
        Segment* seg = segments_[base >> kSegmentBits].load(std::memory_order_acquire);
        if (seg == nullptr) {
            continue;
        }
        std::uint32_t limit = std::min<std::uint32_t>(kSegmentSize, end - base);
        for (std::uint32_t slot = 0; slot < limit; ++slot) {
            if (seg->state[slot].load(std::memory_order_acquire) != kAlive) {
                continue;
            }
            Hit hit{base + slot,
                    distance_sq({seg->coords.get() + slot * dimension_, dimension_}, query)};
            if (out.size() < m) {
                out.push_back(hit);
                std::push_heap(out.begin(), out.end(), worse);
            } else if (worse(hit, out.front())) {
                std::pop_heap(out.begin(), out.end(), worse);
                out.back() = hit;
                std::push_heap(out.begin(), out.end(), worse);
            }
        }
    }
    std::sort_heap(out.begin(), out.end(), worse);
}

std::vector<CentroidIndex::Hit> CentroidIndex::nearest(std::span<const float> query,
                                                       std::size_t m) const {
    std::vector<Hit> out;
    nearest(query, m, out);
    return out;
}

std::vector<PostingId> CentroidIndex::alive_pids() const {
    std::vector<PostingId> pids;
    std::uint32_t end = end_pid_.load(std::memory_order_acquire);
    for (std::uint32_t pid = 0; pid < end; ++pid) {
        if (is_alive(pid)) {
            pids.push_back(pid);
        }
    }
    return pids;
}

}  // namespace sann
