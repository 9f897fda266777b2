#pragma once

#include <array>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <mutex>
#include <optional>
#include <vector>

#include "sann/core.hpp"
#include "sann/vector_cache.hpp"

namespace sann {

struct UpdateJob {
    enum class Kind : std::uint8_t {
        kSplit,
        kMerge,
        kReassign,         // re-route misplaced vectors of one posting
        kReassignVectors,  // route orphaned in-flight vectors
    };

    Kind kind = Kind::kSplit;
    PostingId pid = kNoPosting;
    std::vector<PendingVector> vectors;  // kReassignVectors only
};

// Bounded FIFO handed from foreground update threads and the balance detector
// to the background worker pool. A full queue blocks push() — backpressure,
// not job loss. Shutdown is drain-then-stop: pending jobs are still handed
// out, then pop() returns nullopt.
class JobQueue {
public:
    explicit JobQueue(std::size_t capacity) : capacity_(capacity) {}

    // Blocks while full. Returns false when the queue was shut down.
    bool push(UpdateJob job) {
        std::unique_lock<std::mutex> lock(mutex_);
        not_full_.wait(lock, [&] { return queue_.size() < capacity_ || shutdown_; });
        if (shutdown_) {
            return false;
        }
        queue_.push_back(std::move(job));
        not_empty_.notify_one();
        return true;
    }

    // Never blocks; false when full or shut down.
    bool try_push(UpdateJob job) {
        std::lock_guard<std::mutex> lock(mutex_);
        if (shutdown_ || queue_.size() >= capacity_) {
            return false;
        }
        queue_.push_back(std::move(job));
        not_empty_.notify_one();
        return true;
    }

    // Blocks while empty. Returns nullopt once shut down and drained.
    std::optional<UpdateJob> pop() {
        std::unique_lock<std::mutex> lock(mutex_);
        not_empty_.wait(lock, [&] { return !queue_.empty() || shutdown_; });
        if (queue_.empty()) {
            return std::nullopt;
        }
        UpdateJob job = std::move(queue_.front());
        queue_.pop_front();
        not_full_.notify_one();
        return job;
    }

    std::optional<UpdateJob> try_pop() {
        std::lock_guard<std::mutex> lock(mutex_);
        if (queue_.empty()) {
            return std::nullopt;
        }
        UpdateJob job = std::move(queue_.front());
        queue_.pop_front();
        not_full_.notify_one();
        return job;
    }

    void shutdown() {
        std::lock_guard<std::mutex> lock(mutex_);
        shutdown_ = true;
        not_empty_.notify_all();
        not_full_.notify_all();
    }

    std::size_t size() const {
        std::lock_guard<std::mutex> lock(mutex_);
        return queue_.size();
    }

    bool empty() const { return size() == 0; }
    std::size_t capacity() const { return capacity_; }

private:
    std::size_t capacity_;
    mutable std::mutex mutex_;
    std::condition_variable not_empty_;
    std::condition_variable not_full_;
    std::deque<UpdateJob> queue_;
    bool shutdown_ = false;
};

}  // namespace sann
