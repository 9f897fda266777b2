#pragma once

#include <atomic>
#include <cstdint>

#include "sann/core.hpp"
#include "sann/detail/chunked_array.hpp"

namespace sann {

// In-memory approximate live-length counter per posting, plus one-shot
// "job already enqueued" flags that stop the balance detector from queueing
// duplicate work for the same posting. Counters are approximate between
// structural operations (deletes decrement the last known home posting) and
// reset to exact values whenever a posting is rewritten.
class LengthTable {
public:
    std::int64_t length(PostingId pid) const {
        const auto* cell = lengths_.try_cell(pid);
        if (cell == nullptr) {
            return 0;
        }
        return static_cast<std::int64_t>(cell->load(std::memory_order_acquire));
    }

    std::int64_t add(PostingId pid, std::int64_t delta) {
        auto prev = lengths_.cell(pid).fetch_add(static_cast<std::uint64_t>(delta),
                                                 std::memory_order_acq_rel);
        return static_cast<std::int64_t>(prev) + delta;
    }

    void set_exact(PostingId pid, std::int64_t value) {
        lengths_.cell(pid).store(static_cast<std::uint64_t>(value),
                                 std::memory_order_release);
    }

    bool try_mark_pending_split(PostingId pid) {
        return (flags_.cell(pid).fetch_or(kSplitFlag) & kSplitFlag) == 0;
    }
    void clear_pending_split(PostingId pid) {
        flags_.cell(pid).fetch_and(~kSplitFlag);
    }
    bool try_mark_pending_merge(PostingId pid) {
        return (flags_.cell(pid).fetch_or(kMergeFlag) & kMergeFlag) == 0;
    }
    void clear_pending_merge(PostingId pid) {
        flags_.cell(pid).fetch_and(~kMergeFlag);
    }

private:
    static constexpr std::uint64_t kSplitFlag = 1;
    static constexpr std::uint64_t kMergeFlag = 2;

    detail::ChunkedAtomicU64 lengths_;
    detail::ChunkedAtomicU64 flags_;
};

}  // namespace sann
