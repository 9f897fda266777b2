#pragma once

#include <array>
#include <atomic>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <mutex>
#include <span>
#include <unordered_map>
#include <vector>

#include "sann/core.hpp"
#include "sann/detail/chunked_array.hpp"

namespace sann {

// One stored vector copy. assign_version stamps which placement of the vector
// this copy belongs to; copies whose stamp is behind the VersionMap are stale.
struct VectorRecord {
    VectorId vid = 0;
    std::uint32_t assign_version = 0;
    std::vector<float> data;
};

struct PostingData {
    PostingId pid = kNoPosting;
    std::vector<VectorRecord> records;
};

// Disk-facing posting storage. Implementations must allow concurrent reads
// with concurrent appends/replaces to distinct postings, and reads concurrent
// with a replace of the same posting must observe either the old or the new
// content, never a mix.
class PostingStore {
public:
    virtual ~PostingStore() = default;

    // Allocates a fresh pid (never recycled) and persists the records.
    virtual PostingId create(std::span<const VectorRecord> records) = 0;

    virtual void append(PostingId pid, std::span<const VectorRecord> records) = 0;
    virtual PostingData read(PostingId pid) const = 0;
    virtual void replace(PostingId pid, std::span<const VectorRecord> records) = 0;

    // Drops the posting's storage. Reading a reclaimed pid throws NotFoundError.
    virtual void reclaim(PostingId pid) = 0;

    virtual bool contains(PostingId pid) const = 0;
    virtual std::vector<PostingId> posting_ids() const = 0;

    // Allocation watermark: one past the highest pid ever created.
    virtual PostingId next_pid() const = 0;
};

// Serialized posting blob layout (little-endian):
//   u32 record_count
//   repeated record_count times:
//     u32 vid, u32 assign_version, f32 components[dimension]
void serialize_records(std::span<const VectorRecord> records, std::uint32_t dimension,
                       std::vector<std::uint8_t>& out);
std::vector<VectorRecord> parse_records(std::span<const std::uint8_t> blob,
                                        std::uint32_t dimension,
                                        std::uint64_t base_offset = 0);

// Log-structured file store: one append-only data log plus a manifest mapping
// each posting to its chain of extents in the log. Appending a batch writes
// one new extent; replace rewrites the chain to a single extent. Old extents
// are never overwritten, so readers can finish against a superseded chain.
class LogStore final : public PostingStore {
public:
    LogStore(const std::filesystem::path& dir, std::uint32_t dimension, bool create);
    ~LogStore() override;
    LogStore(const LogStore&) = delete;
    LogStore& operator=(const LogStore&) = delete;

    std::uint32_t dimension() const { return dimension_; }

    PostingId create(std::span<const VectorRecord> records) override;
    void append(PostingId pid, std::span<const VectorRecord> records) override;
    PostingData read(PostingId pid) const override;
    void replace(PostingId pid, std::span<const VectorRecord> records) override;
    void reclaim(PostingId pid) override;
    bool contains(PostingId pid) const override;
    std::vector<PostingId> posting_ids() const override;
    PostingId next_pid() const override;

    // Persists the manifest for a later open. Durability is checkpoint-based;
    // the log itself is only fsynced here.
    void checkpoint();

private:
    struct Extent {
        std::uint64_t offset = 0;
        std::uint32_t bytes = 0;
        std::uint32_t count = 0;
    };
    using Chain = std::vector<Extent>;
    using ChainPtr = std::shared_ptr<const Chain>;

    struct Shard {
        mutable std::mutex mutex;
        std::unordered_map<PostingId, ChainPtr> chains;
    };
    static constexpr std::size_t kShards = 64;

    Shard& shard_for(PostingId pid) const { return shards_[pid % kShards]; }
    Extent write_blob(std::span<const VectorRecord> records);
    void load_manifest();
    void save_manifest() const;

    std::filesystem::path dir_;
    std::uint32_t dimension_ = 0;
    int fd_ = -1;
    std::atomic<std::uint64_t> tail_{0};
    std::atomic<std::uint32_t> next_pid_{0};
    mutable std::array<Shard, kShards> shards_;
};

// Per-vector authority on freshness: each vector id carries its current
// placement version, a tombstone flag and a best-effort hint of the posting
// it was last appended to. Packed into one atomic word:
//   [55] deleted, [54..32] home pid, [31..0] current version (starts at 1).
class VersionMap {
public:
    enum class EraseResult { kErased, kAlreadyDeleted };

    void register_vector(VectorId vid);
    bool contains(VectorId vid) const;

    std::uint32_t current_version(VectorId vid) const;
    bool is_deleted(VectorId vid) const;

    // A stored copy is stale when its vector is tombstoned or the copy's
    // stamp is behind the current version.
    bool is_stale(VectorId vid, std::uint32_t assign_version) const;

    // Invalidates every existing copy; returns the new current version that
    // the single replacement copy must carry.
    std::uint32_t bump_version(VectorId vid);

    EraseResult mark_deleted(VectorId vid);

    PostingId home(VectorId vid) const;
    void set_home(VectorId vid, PostingId pid);

    VectorId end_vid() const { return end_vid_.load(std::memory_order_acquire); }
    std::size_t live_count() const { return live_count_.load(std::memory_order_acquire); }

    void save(std::ostream& out) const;
    void load(std::istream& in);

private:
    static constexpr std::uint64_t kDeletedBit = std::uint64_t{1} << 55;

    std::uint64_t word(VectorId vid) const;

    detail::ChunkedAtomicU64 words_;
    std::atomic<std::uint32_t> end_vid_{0};
    std::atomic<std::size_t> live_count_{0};
};

}  // namespace sann
