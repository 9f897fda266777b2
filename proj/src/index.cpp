#include "sann/index.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstring>
#include <fstream>
#include <ostream>

#include "sann/cluster.hpp"

namespace sann {

namespace {

constexpr char kMetaFile[] = "index.meta";
constexpr std::uint64_t kMetaMagic = 0x3154454D4E4E4153ull;  // "SANNMET1"

// True while the current thread is a background worker (or the inline job
// runner). Such threads must never block on a full job queue: every queued
// job may be waiting for exactly these threads, so they enqueue follow-up
// work with try_push and fall back to leaving the imbalance for the detector.
thread_local bool tls_worker_ctx = false;
thread_local bool tls_inline_running = false;

}  // namespace

Index::Index(const IndexConfig& cfg, std::filesystem::path dir)
    : Index(cfg, std::move(dir), true) {}

Index::Index(const IndexConfig& cfg, std::filesystem::path dir, bool create)
    : cfg_(cfg),
      dir_(std::move(dir)),
      store_(std::make_unique<LogStore>(dir_, cfg.dimension, create)),
      centroids_(cfg.dimension),
      queue_(cfg.queue_capacity) {
    cfg_.validate();
}

Index::~Index() {
    stop();
}

std::unique_ptr<Index> Index::build(const IndexConfig& cfg, std::filesystem::path dir,
                                    const std::vector<Vector>& initial,
                                    std::size_t k_override) {
    auto index = std::unique_ptr<Index>(new Index(cfg, std::move(dir), true));
    if (initial.empty()) {
        return index;
    }
    for (const Vector& v : initial) {
        if (v.data.size() != cfg.dimension) {
            throw std::invalid_argument("initial vector dimension mismatch");
        }
        index->versions_.register_vector(v.id);
    }
    std::size_t k = k_override;
    if (k == 0) {
        std::size_t half = std::max<std::size_t>(1, cfg.split_threshold / 2);
        k = (initial.size() + half - 1) / half;
    }
    std::vector<std::span<const float>> points;
    points.reserve(initial.size());
    for (const Vector& v : initial) {
        points.emplace_back(v.data);
    }
    KMeansResult km = lloyd_kmeans(points, k, cfg.dimension, cfg.seed);
    std::vector<std::vector<VectorRecord>> groups(km.centroids.size());
    for (std::size_t i = 0; i < initial.size(); ++i) {
        groups[km.assignment[i]].push_back(
            VectorRecord{initial[i].id, 1, initial[i].data});
    }
    for (std::size_t c = 0; c < groups.size(); ++c) {
        if (groups[c].empty()) {
            continue;
        }
        PostingId pid = index->store_->create(groups[c]);
        // Weight zero: initial postings are visible to every snapshot.
        index->recorder_.register_posting(
            pid, RecorderEntry{PostingStatus::kNormal, 0, kNoPosting, kNoPosting});
        index->lengths_.set_exact(pid, static_cast<std::int64_t>(groups[c].size()));
        for (const auto& rec : groups[c]) {
            index->versions_.set_home(rec.vid, pid);
        }
        index->centroids_.add(pid, km.centroids[c]);
    }
    return index;
}

// ---------------------------------------------------------------------------
// Lifecycle

void Index::start() {
    if (cfg_.deterministic) {
        return;  // all jobs run inline on the calling thread
    }
    if (started_.exchange(true)) {
        return;
    }
    stopping_.store(false);
    for (std::uint32_t i = 0; i < cfg_.bg_threads; ++i) {
        workers_.emplace_back(&Index::worker_main, this);
    }
    if (cfg_.balance_detector) {
        detector_ = std::thread(&Index::detector_main, this);
    }
}

void Index::stop() {
    if (cfg_.deterministic) {
        run_inline_jobs();
        return;
    }
    if (!started_.exchange(false)) {
        return;
    }
    {
        std::lock_guard<std::mutex> lock(detector_mutex_);
        stopping_.store(true);
    }
    detector_cv_.notify_all();
    if (detector_.joinable()) {
        detector_.join();
    }
    queue_.shutdown();
    for (auto& w : workers_) {
        w.join();
    }
    workers_.clear();
}

void Index::record_error(std::exception_ptr err) {
    std::lock_guard<std::mutex> lock(error_mutex_);
    if (!first_error_) {
        first_error_ = err;
    }
}

void Index::rethrow_error() {
    std::exception_ptr err;
    {
        std::lock_guard<std::mutex> lock(error_mutex_);
        err = std::exchange(first_error_, nullptr);
    }
    if (err) {
        std::rethrow_exception(err);
    }
}

// ---------------------------------------------------------------------------
// Foreground operations

void Index::insert(Vector v) {
    if (v.data.size() != cfg_.dimension) {
        throw std::invalid_argument("insert dimension mismatch");
    }
    versions_.register_vector(v.id);
    route_vector(PendingVector{std::move(v), 1});
    stats_.inserts.fetch_add(1, std::memory_order_acq_rel);
    if (cfg_.deterministic) {
        run_inline_jobs();
    }
}

VersionMap::EraseResult Index::erase(VectorId vid) {
    auto result = versions_.mark_deleted(vid);
    if (result == VersionMap::EraseResult::kErased) {
        stats_.deletes.fetch_add(1, std::memory_order_acq_rel);
        PostingId home = versions_.home(vid);
        if (home != kNoPosting) {
            lengths_.add(home, -1);
        }
    }
    if (cfg_.deterministic) {
        run_inline_jobs();
    }
    return result;
}

// ---------------------------------------------------------------------------
// Routing

void Index::route_vector(PendingVector pv) {
    thread_local std::vector<CentroidIndex::Hit> hits;
    for (;;) {
        centroids_.nearest(pv.vec.data, 1, hits);
        if (hits.empty()) {
            if (try_bootstrap(pv)) {
                return;
            }
            continue;  // lost the bootstrap race; a centroid now exists
        }
        if (dispatch_append(std::move(pv), hits[0].pid, false)) {
            return;
        }
        assert(false && "non-structural dispatch cannot fail");
    }
}

bool Index::try_bootstrap(const PendingVector& pv) {
    std::lock_guard<std::mutex> lock(bootstrap_mutex_);
    if (centroids_.alive_count() != 0) {
        return false;
    }
    VectorRecord rec{pv.vec.id, pv.assign_version, pv.vec.data};
    PostingId pid = store_->create({&rec, 1});
    recorder_.register_posting(
        pid, RecorderEntry{PostingStatus::kNormal, 0, kNoPosting, kNoPosting});
    lengths_.set_exact(pid, 1);
    versions_.set_home(pv.vec.id, pid);
    centroids_.add(pid, pv.vec.data);
    return true;
}

PostingId Index::successor_for(const RecorderEntry& entry, const PendingVector& pv) const {
    PostingId best = kNoPosting;
    float best_d = 0.0f;
    for (PostingId succ : {entry.succ_a, entry.succ_b}) {
        if (succ == kNoPosting || !centroids_.is_alive(succ)) {
            continue;
        }
        float d = distance_sq(pv.vec.data, centroids_.centroid(succ));
        if (best == kNoPosting || d < best_d) {
            best = succ;
            best_d = d;
        }
    }
    if (best != kNoPosting) {
        return best;
    }
    // Both successors dead (or centroid already retired): keep chasing
    // through the chain; the hop cap bounds the walk.
    return entry.succ_a != kNoPosting ? entry.succ_a : entry.succ_b;
}

void Index::append_record(PostingId pid, const PendingVector& pv) {
    VectorRecord rec{pv.vec.id, pv.assign_version, pv.vec.data};
    store_->append(pid, {&rec, 1});
}

void Index::maybe_trigger_split(PostingId pid, std::int64_t new_length) {
    if (new_length <= static_cast<std::int64_t>(cfg_.split_threshold)) {
        return;
    }
    if (!lengths_.try_mark_pending_split(pid)) {
        return;
    }
    if (!enqueue(UpdateJob{UpdateJob::Kind::kSplit, pid, {}})) {
        lengths_.clear_pending_split(pid);
    }
}

void Index::orphan_vector(PendingVector pv) {
    if (tls_worker_ctx) {
        // A worker must not block on the queue it is draining; route the
        // vector from scratch instead (fresh nearest-centroid placement).
        route_vector(std::move(pv));
        return;
    }
    UpdateJob job{UpdateJob::Kind::kReassignVectors, kNoPosting, {}};
    job.vectors.push_back(std::move(pv));
    enqueue(std::move(job));
}

bool Index::dispatch_append(PendingVector pv, PostingId pid, bool structural_ctx) {
    std::uint32_t hops = 0;
    std::size_t spins = 0;
    for (;;) {
        RecorderEntry entry = recorder_.load(pid);
        if (entry.status == PostingStatus::kDeleted) {
            if (++hops > cfg_.chase_depth) {
                orphan_vector(std::move(pv));
                return true;
            }
            PostingId next = successor_for(entry, pv);
            if (next == kNoPosting) {
                orphan_vector(std::move(pv));
                return true;
            }
            pid = next;
            continue;
        }

        if (!cfg_.fine_grained_control) {
            // Coarse mode: one mutex per posting, taken for every append and
            // held by structural operations for their whole duration.
            std::unique_lock<std::mutex> lock(coarse_lock(pid), std::defer_lock);
            if (structural_ctx) {
                if (!lock.try_lock()) {
                    return false;  // caller holds another posting's lock
                }
            } else {
                lock.lock();
            }
            RecorderEntry cur = recorder_.load(pid);
            if (cur.status != PostingStatus::kNormal) {
                continue;  // settled while we waited; re-dispatch
            }
            append_record(pid, pv);
            versions_.set_home(pv.vec.id, pid);
            std::int64_t len = lengths_.add(pid, 1);
            lock.unlock();
            maybe_trigger_split(pid, len);
            return true;
        }

        switch (entry.status) {
            case PostingStatus::kNormal: {
                append_record(pid, pv);
                RecorderEntry after = recorder_.load(pid);
                if (after.status == PostingStatus::kNormal) {
                    versions_.set_home(pv.vec.id, pid);
                    std::int64_t len = lengths_.add(pid, 1);
                    maybe_trigger_split(pid, len);
                    return true;
                }
                // A structural op won the posting mid-append and may have
                // missed our record. Invalidate that copy and place a fresh
                // one; the stale copy is filtered wherever it surfaces.
                pv.assign_version = versions_.bump_version(pv.vec.id);
                continue;
            }
            case PostingStatus::kSplitting:
            case PostingStatus::kMerging: {
                if (cache_.push(pid, pv)) {
                    stats_.cache_routed.fetch_add(1, std::memory_order_acq_rel);
                    return true;
                }
                // Slot not open yet (owner between CAS and open) or already
                // closed (status about to settle); re-read shortly.
                if (++spins > 10'000'000) {
                    throw std::runtime_error("vector routing starved");
                }
                std::this_thread::yield();
                continue;
            }
            case PostingStatus::kDeleted:
                continue;  // handled above; unreachable
        }
    }
}

std::mutex& Index::coarse_lock(PostingId pid) {
    return coarse_locks_.cell(pid);
}

// ---------------------------------------------------------------------------
// Queue and background machinery

bool Index::enqueue(UpdateJob job) {
    jobs_outstanding_.fetch_add(1, std::memory_order_acq_rel);
    bool ok = tls_worker_ctx ? queue_.try_push(std::move(job))
                             : queue_.push(std::move(job));
    if (!ok) {
        job_done();
    }
    return ok;
}

void Index::job_done() const {
    jobs_outstanding_.fetch_sub(1, std::memory_order_acq_rel);
    std::lock_guard<std::mutex> lock(drain_mutex_);
    drain_cv_.notify_all();
}

void Index::worker_main() {
    tls_worker_ctx = true;
    while (auto job = queue_.pop()) {
        try {
            execute_job(std::move(*job));
        } catch (...) {
            record_error(std::current_exception());
        }
        job_done();
    }
}

void Index::run_inline_jobs() {
    if (tls_inline_running) {
        return;  // already draining further up the call stack
    }
    tls_inline_running = true;
    bool prev_ctx = tls_worker_ctx;
    tls_worker_ctx = true;
    while (auto job = queue_.try_pop()) {
        try {
            execute_job(std::move(*job));
        } catch (...) {
            record_error(std::current_exception());
        }
        job_done();
    }
    tls_worker_ctx = prev_ctx;
    tls_inline_running = false;
    rethrow_error();
}

void Index::execute_job(UpdateJob job) {
    switch (job.kind) {
        case UpdateJob::Kind::kSplit: {
            bool ran = try_split(job.pid);
            lengths_.clear_pending_split(job.pid);
            if (ran) {
                stats_.splits_executed.fetch_add(1, std::memory_order_acq_rel);
            } else {
                stats_.splits_dropped.fetch_add(1, std::memory_order_acq_rel);
            }
            break;
        }
        case UpdateJob::Kind::kMerge: {
            bool ran = merge_posting(job.pid);
            lengths_.clear_pending_merge(job.pid);
            if (ran) {
                stats_.merges_executed.fetch_add(1, std::memory_order_acq_rel);
            } else {
                stats_.merges_dropped.fetch_add(1, std::memory_order_acq_rel);
            }
            break;
        }
        case UpdateJob::Kind::kReassign: {
            reassign_posting(job.pid);
            stats_.reassigns_executed.fetch_add(1, std::memory_order_acq_rel);
            break;
        }
        case UpdateJob::Kind::kReassignVectors: {
            for (auto& pv : job.vectors) {
                route_vector(std::move(pv));
            }
            stats_.reassigns_executed.fetch_add(1, std::memory_order_acq_rel);
            break;
        }
    }
}

void Index::detector_main() {
    std::unique_lock<std::mutex> lock(detector_mutex_);
    for (;;) {
        detector_cv_.wait_for(lock, cfg_.detector_period,
                              [&] { return stopping_.load(); });
        if (stopping_.load()) {
            return;
        }
        if (detector_paused_.load()) {
            continue;
        }
        detector_scanning_.store(true);
        lock.unlock();
        try {
            detector_scan_once();
        } catch (...) {
            record_error(std::current_exception());
        }
        detector_scanning_.store(false);
        lock.lock();
    }
}

void Index::pause_detector() {
    {
        // The store must be ordered against detector_main's paused-check /
        // scanning-store pair, which runs under the same mutex; a bare store
        // could land between them and let a scan start after we return.
        std::lock_guard<std::mutex> lock(detector_mutex_);
        detector_paused_.store(true);
    }
    while (detector_scanning_.load()) {
        std::this_thread::yield();
    }
}

void Index::resume_maintenance() {
    detector_paused_.store(false);
}

void Index::wait_quiescent() {
    pause_detector();
    bool scanned_once = false;
    std::uint64_t last_progress = 0;
    for (int round = 0; round < 10'000; ++round) {
        if (cfg_.deterministic || !started_.load()) {
            run_inline_jobs();
        } else {
            std::unique_lock<std::mutex> lock(drain_mutex_);
            drain_cv_.wait(lock, [&] {
                return jobs_outstanding_.load(std::memory_order_acquire) == 0;
            });
        }
        if (jobs_outstanding_.load(std::memory_order_acquire) != 0) {
            continue;
        }
        if (!cache_.empty()) {
            std::this_thread::yield();
            continue;
        }
        if (!cfg_.balance_detector) {
            break;
        }
        // Balance fixpoint: keep sweeping until a detector pass enqueues
        // nothing, or until a pass of enqueued jobs executes no structural
        // change. The latter covers imbalances with no legal fix — an
        // undersized posting whose every merge partner would overflow is a
        // stable state, and its merge job would otherwise be re-enqueued
        // forever.
        StatsSnapshot s = stats_.snapshot();
        std::uint64_t progress =
            s.splits_executed + s.merges_executed + s.reassigns_executed;
        if (scanned_once && progress == last_progress) {
            break;
        }
        last_progress = progress;
        scanned_once = true;
        if (detector_scan_once() == 0) {
            break;
        }
        if (cfg_.deterministic || !started_.load()) {
            run_inline_jobs();
        }
    }
    rethrow_error();
}

// ---------------------------------------------------------------------------
// Persistence

void Index::save() {
    wait_quiescent();
    store_->checkpoint();

    auto tmp = dir_ / (std::string(kMetaFile) + ".tmp");
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw std::runtime_error("cannot write index metadata");
        }
        auto put32 = [&](std::uint32_t v) { out.write(reinterpret_cast<const char*>(&v), 4); };
        auto put64 = [&](std::uint64_t v) { out.write(reinterpret_cast<const char*>(&v), 8); };
        put64(kMetaMagic);
        put32(cfg_.dimension);
        put32(cfg_.split_threshold);
        put32(cfg_.merge_threshold);
        out.write(reinterpret_cast<const char*>(&cfg_.balance_factor), 4);
        put64(cfg_.seed);

        // Recorder entries and the version counter.
        PostingId end = recorder_.end_pid();
        std::vector<std::pair<PostingId, std::uint64_t>> words;
        for (PostingId pid = 0; pid < end; ++pid) {
            if (recorder_.is_registered(pid)) {
                words.emplace_back(pid, encode_entry(recorder_.load(pid)));
            }
        }
        put32(static_cast<std::uint32_t>(words.size()));
        for (auto& [pid, word] : words) {
            put32(pid);
            put64(word);
        }
        put32(recorder_.snapshot());

        versions_.save(out);

        auto alive = centroids_.alive_pids();
        put32(static_cast<std::uint32_t>(alive.size()));
        for (PostingId pid : alive) {
            put32(pid);
            auto c = centroids_.centroid(pid);
            out.write(reinterpret_cast<const char*>(c.data()),
                      static_cast<std::streamsize>(c.size() * 4));
        }
        if (!out) {
            throw std::runtime_error("failed writing index metadata");
        }
    }
    std::filesystem::rename(tmp, dir_ / kMetaFile);
}

std::unique_ptr<Index> Index::open(const IndexConfig& cfg, std::filesystem::path dir) {
    std::ifstream in(dir / kMetaFile, std::ios::binary);
    if (!in) {
        throw NotFoundError("no index metadata in " + dir.string());
    }
    auto get32 = [&]() {
        std::uint32_t v = 0;
        in.read(reinterpret_cast<char*>(&v), 4);
        return v;
    };
    auto get64 = [&]() {
        std::uint64_t v = 0;
        in.read(reinterpret_cast<char*>(&v), 8);
        return v;
    };
    if (get64() != kMetaMagic) {
        throw FormatError("bad index metadata magic", 0);
    }
    IndexConfig merged = cfg;
    merged.dimension = get32();
    merged.split_threshold = get32();
    merged.merge_threshold = get32();
    in.read(reinterpret_cast<char*>(&merged.balance_factor), 4);
    merged.seed = get64();
    if (cfg.dimension != 0 && cfg.dimension != merged.dimension) {
        throw std::invalid_argument("configured dimension disagrees with stored index");
    }

    auto index = std::unique_ptr<Index>(new Index(merged, std::move(dir), false));
    std::uint32_t n_words = get32();
    for (std::uint32_t i = 0; i < n_words; ++i) {
        PostingId pid = get32();
        std::uint64_t word = get64();
        index->recorder_.register_posting(pid, decode_entry(word));
    }
    index->recorder_.restore_version(static_cast<GlobalVersion>(get32()));
    index->versions_.load(in);

    std::uint32_t n_centroids = get32();
    std::vector<float> coords(merged.dimension);
    for (std::uint32_t i = 0; i < n_centroids; ++i) {
        PostingId pid = get32();
        in.read(reinterpret_cast<char*>(coords.data()),
                static_cast<std::streamsize>(coords.size() * 4));
        index->centroids_.add(pid, coords);
    }
    if (!in) {
        throw FormatError("truncated index metadata", 0);
    }
    // Exact live lengths for every alive posting.
    for (PostingId pid : index->centroids_.alive_pids()) {
        index->lengths_.set_exact(
            pid, static_cast<std::int64_t>(index->live_posting_length(pid)));
    }
    return index;
}

// ---------------------------------------------------------------------------
// Introspection

std::size_t Index::live_posting_length(PostingId pid) const {
    PostingData data;
    try {
        data = store_->read(pid);
    } catch (const NotFoundError&) {
        return 0;
    }
    std::size_t live = 0;
    for (const auto& rec : data.records) {
        if (!versions_.is_stale(rec.vid, rec.assign_version)) {
            ++live;
        }
    }
    return live;
}

void Index::dump_distribution(std::ostream& out) const {
    out << "pid,live_length,status\n";
    PostingId end = recorder_.end_pid();
    for (PostingId pid = 0; pid < end; ++pid) {
        if (!recorder_.is_registered(pid)) {
            continue;
        }
        RecorderEntry e = recorder_.load(pid);
        if (e.status == PostingStatus::kDeleted) {
            continue;
        }
        out << pid << ',' << live_posting_length(pid) << ',' << to_string(e.status)
            << '\n';
    }
}

void Index::reclaim_posting(PostingId pid) {
    RecorderEntry e = recorder_.load(pid);
    if (e.status != PostingStatus::kDeleted) {
        throw std::invalid_argument("cannot reclaim a live posting");
    }
    store_->reclaim(pid);
}

}  // namespace sann
