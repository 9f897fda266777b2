#pragma once

#include <atomic>
#include <cstdint>
#include <iosfwd>
#include <mutex>
#include <shared_mutex>
#include <span>

#include "sann/core.hpp"
#include "sann/detail/chunked_array.hpp"

namespace sann {

enum class PostingStatus : std::uint8_t {
    kNormal = 0,
    kSplitting = 1,
    kMerging = 2,
    kDeleted = 3,
};

const char* to_string(PostingStatus status);

// Legal status transitions. Deleted is terminal.
bool legal_transition(PostingStatus from, PostingStatus to);

// Snapshot version. 16 bits; the all-ones value is reserved as the
// "not yet committed" placeholder weight.
using GlobalVersion = std::uint16_t;

struct RecorderEntry {
    PostingStatus status = PostingStatus::kNormal;
    std::uint16_t weight = 0;
    PostingId succ_a = kNoPosting;
    PostingId succ_b = kNoPosting;

    bool operator==(const RecorderEntry&) const = default;
};

// Bit layout of the packed 64-bit word, high to low:
//   [63..62] status   (2 bits)
//   [61..46] weight   (16 bits)
//   [45..23] succ_a   (23 bits)
//   [22..0]  succ_b   (23 bits)
std::uint64_t encode_entry(const RecorderEntry& entry);
RecorderEntry decode_entry(std::uint64_t word);

// One atomic word of bookkeeping per posting: lifecycle status, creation
// version stamp ("weight") and successor pointers for deleted postings.
// All mutation happens through single-word CAS, so concurrent structural
// operations on one posting resolve to exactly one winner.
class PostingRecorder {
public:
    static constexpr std::uint16_t kUncommittedWeight = 0xFFFF;

    PostingRecorder() = default;

    // Registers a new posting. Non-deleted entries must carry kNoPosting in
    // both successor fields; re-registering a pid is a usage error because
    // posting ids are never recycled.
    void register_posting(PostingId pid, const RecorderEntry& entry);

    bool is_registered(PostingId pid) const;

    // Throws NotFoundError for unregistered pids.
    RecorderEntry load(PostingId pid) const;

    // Single-word CAS from expected to desired. The status change must be a
    // legal transition. Returns false when the current entry differs from
    // expected (somebody else won the race).
    bool transition(PostingId pid, const RecorderEntry& expected,
                    const RecorderEntry& desired);

    // Current global version; postings with weight < snapshot are visible.
    GlobalVersion snapshot() const;

    static bool is_visible(const RecorderEntry& entry, GlobalVersion snapshot) {
        return snapshot > entry.weight;
    }

    // Stamps every pid in new_pids with the pre-increment version, then bumps
    // the global counter and returns its new value. Publication is atomic with
    // respect to snapshots: a snapshot either predates the whole commit or
    // observes every stamped posting as visible.
    GlobalVersion commit_structural(std::span<const PostingId> new_pids);

    // One past the highest registered pid (scan bound).
    PostingId end_pid() const { return end_pid_.load(std::memory_order_acquire); }

    // Restores the version counter when reopening a persisted index.
    void restore_version(GlobalVersion version) {
        version_.store(version == 0 ? 1u : version, std::memory_order_release);
    }

    // One line per registered posting: "pid status weight succ_a succ_b",
    // all decimal.
    void dump(std::ostream& out) const;

private:
    // Resets every committed weight to zero and restarts the counter at 1.
    // Runs stop-the-world with respect to commits and snapshots.
    void renormalize();

    const std::atomic<std::uint64_t>* find_cell(PostingId pid) const;

    detail::ChunkedAtomicU64 words_;
    std::atomic<std::uint32_t> end_pid_{0};
    std::atomic<std::uint32_t> version_{1};
    mutable std::shared_mutex mode_mutex_;  // exclusive only during renormalize
    std::mutex commit_mutex_;               // serializes structural commits
};

}  // namespace sann
