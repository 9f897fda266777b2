#pragma once

#include <array>
#include <atomic>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <mutex>
#include <stdexcept>

namespace sann::detail {

// Growable array of atomic 64-bit cells. Cells live in fixed chunks that are
// published once and never move, so readers can keep raw references across
// concurrent growth. All cells start at zero.
class ChunkedAtomicU64 {
public:
    static constexpr std::size_t kChunkBits = 13;  // 8192 cells per chunk
    static constexpr std::size_t kChunkSize = std::size_t{1} << kChunkBits;
    static constexpr std::size_t kMaxChunks = 4096;

    ChunkedAtomicU64() = default;
    ChunkedAtomicU64(const ChunkedAtomicU64&) = delete;
    ChunkedAtomicU64& operator=(const ChunkedAtomicU64&) = delete;

    ~ChunkedAtomicU64() {
        for (auto& slot : chunks_) {
            delete slot.load(std::memory_order_relaxed);
        }
    }

    // Cell reference, allocating the containing chunk on first touch.
    std::atomic<std::uint64_t>& cell(std::size_t index) {
        Chunk* c = chunk_for(index, true);
        return c->cells[index & (kChunkSize - 1)];
    }

    // Read-only lookup; nullptr when the chunk was never allocated.
    const std::atomic<std::uint64_t>* try_cell(std::size_t index) const {
        std::size_t ci = index >> kChunkBits;
        if (ci >= kMaxChunks) {
            return nullptr;
        }
        Chunk* c = chunks_[ci].load(std::memory_order_acquire);
        if (c == nullptr) {
            return nullptr;
        }
        return &c->cells[index & (kChunkSize - 1)];
    }

private:
    struct Chunk {
        std::array<std::atomic<std::uint64_t>, kChunkSize> cells{};
    };

    Chunk* chunk_for(std::size_t index, bool create) {
        std::size_t ci = index >> kChunkBits;
        if (ci >= kMaxChunks) {
            throw std::length_error("chunked array capacity exceeded");
        }
        Chunk* c = chunks_[ci].load(std::memory_order_acquire);
        if (c == nullptr && create) {
            std::lock_guard<std::mutex> lock(grow_mutex_);
            c = chunks_[ci].load(std::memory_order_acquire);
            if (c == nullptr) {
                c = new Chunk();
                chunks_[ci].store(c, std::memory_order_release);
            }
        }
        return c;
    }

    std::array<std::atomic<Chunk*>, kMaxChunks> chunks_{};
    std::mutex grow_mutex_;
};

// Same chunked-directory idea for arbitrary default-constructible objects
// (e.g. a growable table of mutexes). Objects never move once created.
template <typename T>
class ChunkedSlab {
public:
    static constexpr std::size_t kChunkBits = 10;  // 1024 items per chunk
    static constexpr std::size_t kChunkSize = std::size_t{1} << kChunkBits;
    static constexpr std::size_t kMaxChunks = 8192;

    ChunkedSlab() = default;
    ChunkedSlab(const ChunkedSlab&) = delete;
    ChunkedSlab& operator=(const ChunkedSlab&) = delete;

    ~ChunkedSlab() {
        for (auto& slot : chunks_) {
            delete slot.load(std::memory_order_relaxed);
        }
    }

    T& cell(std::size_t index) {
        std::size_t ci = index >> kChunkBits;
        if (ci >= kMaxChunks) {
            throw std::length_error("chunked slab capacity exceeded");
        }
        Chunk* c = chunks_[ci].load(std::memory_order_acquire);
        if (c == nullptr) {
            std::lock_guard<std::mutex> lock(grow_mutex_);
            c = chunks_[ci].load(std::memory_order_acquire);
            if (c == nullptr) {
                c = new Chunk();
                chunks_[ci].store(c, std::memory_order_release);
            }
        }
        return c->items[index & (kChunkSize - 1)];
    }

private:
    struct Chunk {
        std::array<T, kChunkSize> items{};
    };

    std::array<std::atomic<Chunk*>, kMaxChunks> chunks_{};
    std::mutex grow_mutex_;
};

}  // namespace sann::detail
