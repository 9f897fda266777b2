#pragma once

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <memory>
#include <mutex>
#include <thread>
#include <vector>

#include "sann/centroid_index.hpp"
#include "sann/core.hpp"
#include "sann/job_queue.hpp"
#include "sann/length_table.hpp"
#include "sann/posting_store.hpp"
#include "sann/recorder.hpp"
#include "sann/search.hpp"
#include "sann/vector_cache.hpp"

namespace sann {

struct StatsSnapshot {
    std::uint64_t inserts = 0;
    std::uint64_t deletes = 0;
    std::uint64_t splits_executed = 0;
    std::uint64_t merges_executed = 0;
    std::uint64_t reassigns_executed = 0;
    std::uint64_t splits_dropped = 0;
    std::uint64_t merges_dropped = 0;
    std::uint64_t cache_routed = 0;

    // Work units counted for update throughput. Jobs dropped by a lost
    // status CAS are intentionally excluded.
    std::uint64_t jobs_completed() const {
        return inserts + deletes + splits_executed + merges_executed + reassigns_executed;
    }
};

struct IndexStats {
    std::atomic<std::uint64_t> inserts{0};
    std::atomic<std::uint64_t> deletes{0};
    std::atomic<std::uint64_t> splits_executed{0};
    std::atomic<std::uint64_t> merges_executed{0};
    std::atomic<std::uint64_t> reassigns_executed{0};
    std::atomic<std::uint64_t> splits_dropped{0};
    std::atomic<std::uint64_t> merges_dropped{0};
    std::atomic<std::uint64_t> cache_routed{0};

    StatsSnapshot snapshot() const {
        StatsSnapshot s;
        s.inserts = inserts.load();
        s.deletes = deletes.load();
        s.splits_executed = splits_executed.load();
        s.merges_executed = merges_executed.load();
        s.reassigns_executed = reassigns_executed.load();
        s.splits_dropped = splits_dropped.load();
        s.merges_dropped = merges_dropped.load();
        s.cache_routed = cache_routed.load();
        return s;
    }
};

// Injection points for deterministic concurrency tests. Never set in
// production use.
struct TestHooks {
    std::function<void(PostingId)> on_split_start;    // slot open, blob unread
    std::function<void(PostingId)> on_before_commit;  // new postings persisted
};

struct SplitOutcome {
    enum class Kind : std::uint8_t {
        kShrunk,     // tombstones alone brought the posting back under l_max
        kTwoWay,     // balanced 2-means partition, two new postings
        kCollapsed,  // lopsided partition, only the larger side persisted
    };
    Kind kind = Kind::kShrunk;
    // kTwoWay: the two replacement postings. kCollapsed: the surviving
    // majority posting — or empty when no minority vector had a nearer home,
    // in which case the original posting was restored unchanged in place.
    std::vector<PostingId> new_pids;
};

// Updatable cluster index: disk-resident postings addressed through an exact
// centroid scan, kept balanced by background split/merge/reassign jobs while
// foreground threads stream inserts, deletes and searches.
class Index {
public:
    // Creates a fresh, empty index rooted at dir.
    Index(const IndexConfig& cfg, std::filesystem::path dir);
    ~Index();
    Index(const Index&) = delete;
    Index& operator=(const Index&) = delete;

    // Bulk build: clusters the initial vectors with k-means and lays out one
    // posting per cluster. k defaults to ceil(n / (split_threshold / 2)) so
    // postings start around half capacity.
    static std::unique_ptr<Index> build(const IndexConfig& cfg, std::filesystem::path dir,
                                        const std::vector<Vector>& initial,
                                        std::size_t k_override = 0);

    // Opens a previously save()d index. Runtime knobs (threads, ablation
    // flags, detector period) come from cfg; structural parameters are
    // validated against the stored metadata.
    static std::unique_ptr<Index> open(const IndexConfig& cfg, std::filesystem::path dir);

    void start();  // background workers + balance detector
    void stop();   // drain-then-stop
    void save();   // quiesce and checkpoint everything to dir

    // --- foreground operations -------------------------------------------
    void insert(Vector v);
    VersionMap::EraseResult erase(VectorId vid);
    SearchResult knn_search(std::span<const float> query, std::uint32_t k,
                            std::uint32_t search_postings) const;
    SearchResult knn_search(std::span<const float> query) const;

    // --- maintenance operations (normally run by background workers) ------
    // Splits a posting already transitioned to Splitting by the caller.
    SplitOutcome balance_split(PostingId pid);
    // Full merge protocol: candidate selection, paired status acquisition in
    // ascending pid order, re-verification, then the structural rewrite.
    // Returns false when no qualifying partner was secured.
    bool merge_posting(PostingId pid);
    // Moves every live vector strictly closer to another alive centroid.
    // Returns the number of moves.
    std::size_t reassign_posting(PostingId pid);
    // One balance-detector sweep over the length table; enqueues Split/Merge
    // jobs and returns how many were enqueued. Never touches disk.
    std::size_t detector_scan_once();
    // Reclaims a Deleted posting's storage. Usage error on live postings.
    void reclaim_posting(PostingId pid);

    bool enqueue(UpdateJob job);

    // Blocks until the job queue, in-flight jobs and vector cache are all
    // empty; with the detector enabled, also reaches a balance fixpoint.
    // Leaves the periodic detector paused; resume_maintenance() restarts it.
    void wait_quiescent();
    void resume_maintenance();

    // Exact live record count (tombstones filtered) straight from storage.
    std::size_t live_posting_length(PostingId pid) const;
    // CSV "pid,live_length,status", one row per non-deleted posting.
    void dump_distribution(std::ostream& out) const;

    const IndexConfig& config() const { return cfg_; }
    const std::filesystem::path& directory() const { return dir_; }
    PostingRecorder& recorder() { return recorder_; }
    const PostingRecorder& recorder() const { return recorder_; }
    VersionMap& versions() { return versions_; }
    const VersionMap& versions() const { return versions_; }
    PostingStore& store() { return *store_; }
    CentroidIndex& centroids() { return centroids_; }
    const CentroidIndex& centroids() const { return centroids_; }
    LengthTable& lengths() { return lengths_; }
    VectorCache& cache() { return cache_; }
    const VectorCache& cache() const { return cache_; }
    JobQueue& queue() { return queue_; }
    const JobQueue& queue() const { return queue_; }
    StatsSnapshot stats() const { return stats_.snapshot(); }
    TestHooks& test_hooks() { return hooks_; }

private:
    friend struct IndexSearchAccess;

    Index(const IndexConfig& cfg, std::filesystem::path dir, bool create);

    // --- routing ----------------------------------------------------------
    void route_vector(PendingVector pv);
    bool dispatch_append(PendingVector pv, PostingId pid, bool structural_ctx);
    PostingId successor_for(const RecorderEntry& entry, const PendingVector& pv) const;
    void append_record(PostingId pid, const PendingVector& pv);
    void maybe_trigger_split(PostingId pid, std::int64_t new_length);
    bool try_bootstrap(const PendingVector& pv);
    void orphan_vector(PendingVector pv);

    // --- structural plumbing ----------------------------------------------
    bool try_split(PostingId pid);
    SplitOutcome balance_split_impl(PostingId pid);
    PostingId create_structural(std::vector<VectorRecord> records);
    void publish_postings(const std::vector<PostingId>& pids,
                          const std::vector<std::vector<float>>& centroids);
    void retire_posting(PostingId old_pid, const std::vector<PostingId>& successors);
    void drain_slot(PostingId old_pid, std::span<const PostingId> targets);
    std::vector<VectorRecord> filter_live(std::vector<VectorRecord> records) const;
    bool cas_status(PostingId pid, PostingStatus from, PostingStatus to,
                    PostingId succ_a = kNoPosting, PostingId succ_b = kNoPosting);

    // --- background machinery ----------------------------------------------
    void worker_main();
    void detector_main();
    void execute_job(UpdateJob job);
    void run_inline_jobs();
    void job_done() const;
    void pause_detector();
    void record_error(std::exception_ptr err);
    void rethrow_error();

    std::mutex& coarse_lock(PostingId pid);

    IndexConfig cfg_;
    std::filesystem::path dir_;
    std::unique_ptr<LogStore> store_;
    PostingRecorder recorder_;
    VersionMap versions_;
    CentroidIndex centroids_;
    mutable LengthTable lengths_;
    mutable VectorCache cache_;
    mutable JobQueue queue_;
    mutable IndexStats stats_;
    TestHooks hooks_;

    // Coarse-mode lock table (fine_grained_control = false): one mutex per
    // posting, held across whole structural operations.
    detail::ChunkedSlab<std::mutex> coarse_locks_;

    std::vector<std::thread> workers_;
    std::thread detector_;
    std::atomic<bool> started_{false};
    std::atomic<bool> stopping_{false};
    std::atomic<bool> detector_paused_{false};
    std::atomic<bool> detector_scanning_{false};
    std::mutex detector_mutex_;
    std::condition_variable detector_cv_;

    // queued + currently executing jobs; quiescence waits for zero.
    mutable std::atomic<std::int64_t> jobs_outstanding_{0};
    mutable std::mutex drain_mutex_;
    mutable std::condition_variable drain_cv_;

    std::mutex bootstrap_mutex_;
    std::mutex error_mutex_;
    std::exception_ptr first_error_;
};

}  // namespace sann
