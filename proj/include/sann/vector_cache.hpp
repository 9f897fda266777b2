#pragma once

#include <atomic>
#include <cstdint>
#include <mutex>
#include <unordered_map>
#include <vector>

#include "sann/core.hpp"

namespace sann {

// A vector in flight: its payload plus the placement version stamped on the
// copy it will become once it lands in a posting.
struct PendingVector {
    Vector vec;
    std::uint32_t assign_version = 1;
};

// Searchable staging area for vectors routed to a posting that is currently
// being split or merged. The owning background job opens a slot right after
// winning the status CAS, closes it to take over the accumulated vectors, and
// removes it once every vector has been re-appended. Slot contents stay
// visible to peek() until removal so searches never lose a cached vector.
class VectorCache {
public:
    // Idempotent; reopening an existing slot is a no-op.
    void open_slot(PostingId pid) {
        Shard& shard = shard_for(pid);
        std::lock_guard<std::mutex> lock(shard.mutex);
        shard.slots.try_emplace(pid);
    }

    // False when the slot is absent or already closed; the caller must
    // re-route the vector.
    bool push(PostingId pid, PendingVector pv) {
        Shard& shard = shard_for(pid);
        std::lock_guard<std::mutex> lock(shard.mutex);
        auto it = shard.slots.find(pid);
        if (it == shard.slots.end() || it->second.closed) {
            return false;
        }
        it->second.items.push_back(std::move(pv));
        pending_.fetch_add(1, std::memory_order_acq_rel);
        return true;
    }

    // Stops further pushes and returns a copy of the accumulated vectors.
    // The slot itself stays peekable until remove_slot().
    std::vector<PendingVector> close_slot(PostingId pid) {
        Shard& shard = shard_for(pid);
        std::lock_guard<std::mutex> lock(shard.mutex);
        auto it = shard.slots.find(pid);
        if (it == shard.slots.end()) {
            return {};
        }
        it->second.closed = true;
        return it->second.items;
    }

    void remove_slot(PostingId pid) {
        Shard& shard = shard_for(pid);
        std::lock_guard<std::mutex> lock(shard.mutex);
        auto it = shard.slots.find(pid);
        if (it == shard.slots.end()) {
            return;
        }
        pending_.fetch_sub(it->second.items.size(), std::memory_order_acq_rel);
        shard.slots.erase(it);
    }

    // Appends the slot's current contents to out (no clearing).
    void peek(PostingId pid, std::vector<PendingVector>& out) const {
        const Shard& shard = shard_for(pid);
        std::lock_guard<std::mutex> lock(shard.mutex);
        auto it = shard.slots.find(pid);
        if (it == shard.slots.end()) {
            return;
        }
        out.insert(out.end(), it->second.items.begin(), it->second.items.end());
    }

    bool has_slot(PostingId pid) const {
        const Shard& shard = shard_for(pid);
        std::lock_guard<std::mutex> lock(shard.mutex);
        return shard.slots.count(pid) != 0;
    }

    // Vectors currently staged (slots may exist with zero vectors).
    std::size_t total_pending() const {
        return pending_.load(std::memory_order_acquire);
    }

    bool empty() const {
        for (const Shard& shard : shards_) {
            std::lock_guard<std::mutex> lock(shard.mutex);
            if (!shard.slots.empty()) {
                return false;
            }
        }
        return true;
    }

private:
    struct Slot {
        std::vector<PendingVector> items;
        bool closed = false;
    };
    struct Shard {
        mutable std::mutex mutex;
        std::unordered_map<PostingId, Slot> slots;
    };
    static constexpr std::size_t kShards = 64;

    Shard& shard_for(PostingId pid) { return shards_[pid % kShards]; }
    const Shard& shard_for(PostingId pid) const { return shards_[pid % kShards]; }

    std::array<Shard, kShards> shards_;
    std::atomic<std::size_t> pending_{0};
};

}  // namespace sann
