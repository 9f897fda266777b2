#include "sann/recorder.hpp"

#include <cassert>
#include <ostream>

namespace sann {

namespace {

constexpr std::uint64_t kSuccMask = (std::uint64_t{1} << 23) - 1;

// A stored word of zero means "never registered". Legal entries cannot
// collide with it: non-deleted entries carry all-ones successor fields and
// deleted entries have nonzero status bits.
constexpr std::uint64_t kUnregistered = 0;

void check_entry(const RecorderEntry& entry) {
    if (entry.succ_a > kNoPosting || entry.succ_b > kNoPosting) {
        throw std::invalid_argument("successor pointer exceeds 23 bits");
    }
    if (entry.status != PostingStatus::kDeleted &&
        (entry.succ_a != kNoPosting || entry.succ_b != kNoPosting)) {
        throw std::invalid_argument(
            "successor pointers are only meaningful on deleted postings");
    }
}

}  // namespace

const char* to_string(PostingStatus status) {
    switch (status) {
        case PostingStatus::kNormal: return "normal";
        case PostingStatus::kSplitting: return "splitting";
        case PostingStatus::kMerging: return "merging";
        case PostingStatus::kDeleted: return "deleted";
    }
    return "?";
}

bool legal_transition(PostingStatus from, PostingStatus to) {
    switch (from) {
        case PostingStatus::kNormal:
            return to == PostingStatus::kSplitting || to == PostingStatus::kMerging;
        case PostingStatus::kSplitting:
        case PostingStatus::kMerging:
            return to == PostingStatus::kNormal || to == PostingStatus::kDeleted;
        case PostingStatus::kDeleted:
            return false;
    }
    return false;
}

std::uint64_t encode_entry(const RecorderEntry& entry) {
    assert(entry.succ_a <= kNoPosting && entry.succ_b <= kNoPosting);
    std::uint64_t word = 0;
    word |= static_cast<std::uint64_t>(entry.status) << 62;
    word |= static_cast<std::uint64_t>(entry.weight) << 46;
    word |= (static_cast<std::uint64_t>(entry.succ_a) & kSuccMask) << 23;
    word |= static_cast<std::uint64_t>(entry.succ_b) & kSuccMask;
    return word;
}

RecorderEntry decode_entry(std::uint64_t word) {
    RecorderEntry entry;
    entry.status = static_cast<PostingStatus>((word >> 62) & 0x3);
    entry.weight = static_cast<std::uint16_t>((word >> 46) & 0xFFFF);
    entry.succ_a = static_cast<PostingId>((word >> 23) & kSuccMask);
    entry.succ_b = static_cast<PostingId>(word & kSuccMask);
    return entry;
}

void PostingRecorder::register_posting(PostingId pid, const RecorderEntry& entry) {
    if (pid > kMaxPostingId) {
        throw std::invalid_argument("posting id out of range");
    }
    check_entry(entry);
    auto& cell = words_.cell(pid);
    std::uint64_t expected = kUnregistered;
    if (!cell.compare_exchange_strong(expected, encode_entry(entry))) {
        throw std::invalid_argument("posting id already registered");
    }
    // Maintain the scan bound.
    std::uint32_t end = end_pid_.load(std::memory_order_relaxed);
    while (end < pid + 1 &&
           !end_pid_.compare_exchange_weak(end, pid + 1, std::memory_order_acq_rel)) {
    }
}

const std::atomic<std::uint64_t>* PostingRecorder::find_cell(PostingId pid) const {
    const auto* cell = words_.try_cell(pid);
    if (cell == nullptr || cell->load(std::memory_order_acquire) == kUnregistered) {
        return nullptr;
    }
    return cell;
}

bool PostingRecorder::is_registered(PostingId pid) const {
    return pid <= kMaxPostingId && find_cell(pid) != nullptr;
}

RecorderEntry PostingRecorder::load(PostingId pid) const {
    const auto* cell = find_cell(pid);
    if (cell == nullptr) {
        throw NotFoundError("posting " + std::to_string(pid) + " not registered");
    }
    return decode_entry(cell->load(std::memory_order_acquire));
}

bool PostingRecorder::transition(PostingId pid, const RecorderEntry& expected,
                                 const RecorderEntry& desired) {
    assert(legal_transition(expected.status, desired.status));
    check_entry(desired);
    auto* cell = const_cast<std::atomic<std::uint64_t>*>(find_cell(pid));
    if (cell == nullptr) {
        throw NotFoundError("posting " + std::to_string(pid) + " not registered");
    }
    std::uint64_t want = encode_entry(expected);
    return cell->compare_exchange_strong(want, encode_entry(desired));
}

GlobalVersion PostingRecorder::snapshot() const {
    std::shared_lock<std::shared_mutex> mode(mode_mutex_);
    return static_cast<GlobalVersion>(version_.load(std::memory_order_acquire));
}

GlobalVersion PostingRecorder::commit_structural(std::span<const PostingId> new_pids) {
    std::lock_guard<std::mutex> commit(commit_mutex_);
    std::uint32_t v = version_.load(std::memory_order_acquire);
    if (v >= kUncommittedWeight) {
        // 16-bit exhaustion: renormalize every live weight to zero and
        // restart the counter. Commits and snapshots are held off meanwhile.
        renormalize();
        v = version_.load(std::memory_order_acquire);
    }
    std::shared_lock<std::shared_mutex> mode(mode_mutex_);
    for (PostingId pid : new_pids) {
        auto* cell = const_cast<std::atomic<std::uint64_t>*>(find_cell(pid));
        if (cell == nullptr) {
            throw NotFoundError("posting " + std::to_string(pid) + " not registered");
        }
        std::uint64_t word = cell->load(std::memory_order_acquire);
        for (;;) {
            RecorderEntry entry = decode_entry(word);
            entry.weight = static_cast<std::uint16_t>(v);
            if (cell->compare_exchange_weak(word, encode_entry(entry))) {
                break;
            }
        }
    }
    version_.store(v + 1, std::memory_order_release);
    return static_cast<GlobalVersion>(v + 1);
}

void PostingRecorder::renormalize() {
    std::unique_lock<std::shared_mutex> mode(mode_mutex_);
    PostingId end = end_pid();
    for (PostingId pid = 0; pid < end; ++pid) {
        const auto* ccell = words_.try_cell(pid);
        if (ccell == nullptr) {
            continue;
        }
        auto* cell = const_cast<std::atomic<std::uint64_t>*>(ccell);
        std::uint64_t word = cell->load(std::memory_order_acquire);
        for (;;) {
            if (word == kUnregistered) {
                break;
            }
            RecorderEntry entry = decode_entry(word);
            if (entry.weight == kUncommittedWeight) {
                break;  // still uncommitted, keep the placeholder
            }
            entry.weight = 0;
            if (cell->compare_exchange_weak(word, encode_entry(entry))) {
                break;
            }
        }
    }
    version_.store(1, std::memory_order_release);
}

void PostingRecorder::dump(std::ostream& out) const {
    PostingId end = end_pid();
    for (PostingId pid = 0; pid < end; ++pid) {
        const auto* cell = words_.try_cell(pid);
        if (cell == nullptr) {
            continue;
        }
        std::uint64_t word = cell->load(std::memory_order_acquire);
        if (word == kUnregistered) {
            continue;
        }
        RecorderEntry e = decode_entry(word);
        out << pid << ' ' << static_cast<unsigned>(e.status) << ' ' << e.weight << ' '
            << e.succ_a << ' ' << e.succ_b << '\n';
    }
}

}  // namespace sann
