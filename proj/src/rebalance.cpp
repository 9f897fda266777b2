#include <algorithm>
#include <cassert>

#include "sann/cluster.hpp"
#include "sann/index.hpp"

namespace sann {

std::vector<VectorRecord> Index::filter_live(std::vector<VectorRecord> records) const {
    std::vector<VectorRecord> live;
    live.reserve(records.size());
    for (auto& rec : records) {
        if (!versions_.is_stale(rec.vid, rec.assign_version)) {
            live.push_back(std::move(rec));
        }
    }
    return live;
}

bool Index::cas_status(PostingId pid, PostingStatus from, PostingStatus to,
                       PostingId succ_a, PostingId succ_b) {
    // The weight can move under us (renormalization), so reload on CAS misses
    // while the status still matches.
    for (;;) {
        RecorderEntry cur = recorder_.load(pid);
        if (cur.status != from) {
            return false;
        }
        RecorderEntry next{to, cur.weight, succ_a, succ_b};
        if (recorder_.transition(pid, cur, next)) {
            return true;
        }
    }
}

PostingId Index::create_structural(std::vector<VectorRecord> records) {
    PostingId pid = store_->create(records);
    // Registered with the placeholder weight: present but invisible to every
    // snapshot until commit_structural() stamps it.
    recorder_.register_posting(
        pid, RecorderEntry{PostingStatus::kNormal, PostingRecorder::kUncommittedWeight,
                           kNoPosting, kNoPosting});
    lengths_.set_exact(pid, static_cast<std::int64_t>(records.size()));
    for (const auto& rec : records) {
        versions_.set_home(rec.vid, pid);
    }
    return pid;
}

void Index::publish_postings(const std::vector<PostingId>& pids,
                             const std::vector<std::vector<float>>& centroids) {
    assert(pids.size() == centroids.size());
    // Commit before the centroids go in: once a posting is reachable through
    // the centroid scan it is already visible, so a fresh insert routed to it
    // can be found by the very next search.
    recorder_.commit_structural(pids);
    for (std::size_t i = 0; i < pids.size(); ++i) {
        centroids_.add(pids[i], centroids[i]);
    }
}

void Index::retire_posting(PostingId old_pid, const std::vector<PostingId>& successors) {
    PostingId succ_a = successors.size() > 0 ? successors[0] : kNoPosting;
    PostingId succ_b = successors.size() > 1 ? successors[1] : kNoPosting;
    for (;;) {
        RecorderEntry cur = recorder_.load(old_pid);
        assert(cur.status == PostingStatus::kSplitting ||
               cur.status == PostingStatus::kMerging);
        RecorderEntry next{PostingStatus::kDeleted, cur.weight, succ_a, succ_b};
        if (recorder_.transition(old_pid, cur, next)) {
            break;
        }
    }
    lengths_.set_exact(old_pid, 0);
    if (cfg_.fine_grained_control) {
        drain_slot(old_pid, successors);
    }
    centroids_.remove(old_pid);
}

void Index::drain_slot(PostingId old_pid, std::span<const PostingId> targets) {
    auto items = cache_.close_slot(old_pid);
    for (auto& pv : items) {
        PostingId best = kNoPosting;
        float best_d = 0.0f;
        for (PostingId t : targets) {
            if (!centroids_.is_alive(t)) {
                continue;
            }
            float d = distance_sq(pv.vec.data, centroids_.centroid(t));
            if (best == kNoPosting || d < best_d) {
                best = t;
                best_d = d;
            }
        }
        if (best == kNoPosting) {
            route_vector(std::move(pv));
            continue;
        }
        dispatch_append(std::move(pv), best, false);
    }
    cache_.remove_slot(old_pid);
}

// ---------------------------------------------------------------------------
// Split

namespace {

// A collapse that moved no vector restored the posting untouched; report it
// as dropped so repeated attempts cannot masquerade as balance progress.
bool split_changed_structure(const SplitOutcome& out) {
    return !(out.kind == SplitOutcome::Kind::kCollapsed && out.new_pids.empty());
}

}  // namespace

bool Index::try_split(PostingId pid) {
    if (!recorder_.is_registered(pid) || !centroids_.is_alive(pid)) {
        return false;
    }
    if (!cfg_.fine_grained_control) {
        std::lock_guard<std::mutex> lock(coarse_lock(pid));
        if (!cas_status(pid, PostingStatus::kNormal, PostingStatus::kSplitting)) {
            return false;
        }
        return split_changed_structure(balance_split_impl(pid));
    }
    if (!cas_status(pid, PostingStatus::kNormal, PostingStatus::kSplitting)) {
        return false;
    }
    return split_changed_structure(balance_split_impl(pid));
}

SplitOutcome Index::balance_split(PostingId pid) {
    if (!cfg_.fine_grained_control) {
        std::lock_guard<std::mutex> lock(coarse_lock(pid));
        return balance_split_impl(pid);
    }
    return balance_split_impl(pid);
}

SplitOutcome Index::balance_split_impl(PostingId pid) {
    {
        RecorderEntry e = recorder_.load(pid);
        if (e.status != PostingStatus::kSplitting) {
            throw std::invalid_argument("balance_split requires Splitting status");
        }
    }
    if (cfg_.fine_grained_control) {
        cache_.open_slot(pid);
    }
    if (hooks_.on_split_start) {
        hooks_.on_split_start(pid);
    }

    auto live = filter_live(store_->read(pid).records);

    if (live.size() < cfg_.split_threshold) {
        // Tombstones alone brought the posting back under the limit: rewrite
        // in place, no structural change.
        store_->replace(pid, live);
        lengths_.set_exact(pid, static_cast<std::int64_t>(live.size()));
        bool ok = cas_status(pid, PostingStatus::kSplitting, PostingStatus::kNormal);
        assert(ok);
        (void)ok;
        if (cfg_.fine_grained_control) {
            PostingId self[1] = {pid};
            drain_slot(pid, self);
        }
        return SplitOutcome{SplitOutcome::Kind::kShrunk, {}};
    }

    std::vector<std::span<const float>> points;
    points.reserve(live.size());
    for (const auto& rec : live) {
        points.emplace_back(rec.data);
    }
    TwoMeansResult tm =
        two_means(points, cfg_.dimension, cfg_.seed ^ (0x9E3779B97F4A7C15ull * (pid + 1)));

    std::size_t total = live.size();
    std::size_t smaller = std::min(tm.groups[0].size(), tm.groups[1].size());
    bool lopsided = static_cast<double>(smaller) <
                    static_cast<double>(cfg_.balance_factor) * static_cast<double>(total);

    if (!lopsided) {
        std::vector<VectorRecord> g0, g1;
        g0.reserve(tm.groups[0].size());
        g1.reserve(tm.groups[1].size());
        for (std::uint32_t idx : tm.groups[0]) {
            g0.push_back(std::move(live[idx]));
        }
        for (std::uint32_t idx : tm.groups[1]) {
            g1.push_back(std::move(live[idx]));
        }
        PostingId p0 = create_structural(std::move(g0));
        PostingId p1 = create_structural(std::move(g1));
        if (hooks_.on_before_commit) {
            hooks_.on_before_commit(pid);
        }
        publish_postings({p0, p1}, {std::move(tm.centroids[0]), std::move(tm.centroids[1])});
        retire_posting(pid, {p0, p1});
        enqueue(UpdateJob{UpdateJob::Kind::kReassign, p0, {}});
        enqueue(UpdateJob{UpdateJob::Kind::kReassign, p1, {}});
        return SplitOutcome{SplitOutcome::Kind::kTwoWay, {p0, p1}};
    }

    // Lopsided partition: keep only the larger side as a new posting. Each
    // minority vector goes to an existing alive posting when one is strictly
    // nearer than the larger side's centroid, otherwise it folds in with the
    // larger side.
    int maj = tm.groups[0].size() >= tm.groups[1].size() ? 0 : 1;
    const std::vector<float>& c_max = tm.centroids[maj];
    std::vector<VectorRecord> majority;
    majority.reserve(tm.groups[maj].size() + tm.groups[1 - maj].size());
    for (std::uint32_t idx : tm.groups[maj]) {
        majority.push_back(std::move(live[idx]));
    }
    thread_local std::vector<CentroidIndex::Hit> near;
    std::size_t moved = 0;
    for (std::uint32_t idx : tm.groups[1 - maj]) {
        VectorRecord& rec = live[idx];
        float d_max = distance_sq(rec.data, c_max);
        centroids_.nearest(rec.data, 2, near);
        PostingId other = kNoPosting;
        float d_other = 0.0f;
        for (const auto& hit : near) {
            if (hit.pid != pid) {
                other = hit.pid;
                d_other = hit.dist_sq;
                break;
            }
        }
        if (other != kNoPosting && d_other < d_max) {
            PendingVector pv{Vector{rec.vid, rec.data}, rec.assign_version};
            if (dispatch_append(std::move(pv), other, true)) {
                ++moved;
                continue;
            }
            // Coarse mode only: the target posting's lock is busy; folding in
            // with the larger side avoids lock-order deadlocks.
        }
        majority.push_back(std::move(rec));
    }
    if (moved == 0) {
        // Every minority vector folded back in: the posting is one tight
        // cluster the partition cannot cut, so splitting it again would only
        // republish the same members under a fresh id, forever. Restore it in
        // place instead; the caller records a dropped split so the balance
        // fixpoint can see that nothing changed.
        store_->replace(pid, majority);
        lengths_.set_exact(pid, static_cast<std::int64_t>(majority.size()));
        bool ok = cas_status(pid, PostingStatus::kSplitting, PostingStatus::kNormal);
        assert(ok);
        (void)ok;
        if (cfg_.fine_grained_control) {
            PostingId self[1] = {pid};
            drain_slot(pid, self);
        }
        return SplitOutcome{SplitOutcome::Kind::kCollapsed, {}};
    }
    PostingId pmax = create_structural(std::move(majority));
    if (hooks_.on_before_commit) {
        hooks_.on_before_commit(pid);
    }
    publish_postings({pmax}, {c_max});
    retire_posting(pid, {pmax});
    enqueue(UpdateJob{UpdateJob::Kind::kReassign, pmax, {}});
    return SplitOutcome{SplitOutcome::Kind::kCollapsed, {pmax}};
}

// ---------------------------------------------------------------------------
// Merge

bool Index::merge_posting(PostingId pid) {
    if (!recorder_.is_registered(pid) || !centroids_.is_alive(pid)) {
        return false;
    }
    std::vector<float> own;
    {
        auto c = centroids_.centroid(pid);
        own.assign(c.begin(), c.end());
    }
    // Top nearest alive centroids, self included (filtered below).
    auto candidates = centroids_.nearest(own, 9);
    for (const auto& hit : candidates) {
        PostingId partner = hit.pid;
        if (partner == pid) {
            continue;
        }
        RecorderEntry pe;
        try {
            pe = recorder_.load(partner);
        } catch (const NotFoundError&) {
            continue;
        }
        if (pe.status != PostingStatus::kNormal ||
            pe.weight == PostingRecorder::kUncommittedWeight) {
            continue;
        }
        if (lengths_.length(pid) + lengths_.length(partner) >=
            static_cast<std::int64_t>(cfg_.split_threshold)) {
            continue;
        }

        // Acquire both statuses in ascending pid order so contending merges
        // resolve to exactly one winner instead of mutual abort.
        PostingId lo = std::min(pid, partner);
        PostingId hi = std::max(pid, partner);
        std::unique_lock<std::mutex> lock_lo, lock_hi;
        if (!cfg_.fine_grained_control) {
            lock_lo = std::unique_lock<std::mutex>(coarse_lock(lo));
            lock_hi = std::unique_lock<std::mutex>(coarse_lock(hi));
        }
        if (!cas_status(lo, PostingStatus::kNormal, PostingStatus::kMerging)) {
            continue;
        }
        if (!cas_status(hi, PostingStatus::kNormal, PostingStatus::kMerging)) {
            bool restored = cas_status(lo, PostingStatus::kMerging, PostingStatus::kNormal);
            assert(restored);
            (void)restored;
            continue;
        }
        if (cfg_.fine_grained_control) {
            cache_.open_slot(pid);
            cache_.open_slot(partner);
        }

        auto live1 = filter_live(store_->read(pid).records);
        auto live2 = filter_live(store_->read(partner).records);
        if (live1.size() + live2.size() >= cfg_.split_threshold) {
            // Stale length counters let an oversized pair through; back out.
            bool r1 = cas_status(lo, PostingStatus::kMerging, PostingStatus::kNormal);
            bool r2 = cas_status(hi, PostingStatus::kMerging, PostingStatus::kNormal);
            assert(r1 && r2);
            (void)r1;
            (void)r2;
            if (cfg_.fine_grained_control) {
                PostingId self1[1] = {pid};
                PostingId self2[1] = {partner};
                drain_slot(pid, self1);
                drain_slot(partner, self2);
            }
            continue;
        }

        std::vector<VectorRecord> merged;
        merged.reserve(live1.size() + live2.size());
        for (auto& rec : live1) {
            merged.push_back(std::move(rec));
        }
        for (auto& rec : live2) {
            merged.push_back(std::move(rec));
        }
        std::vector<float> centroid;
        if (merged.empty()) {
            centroid = own;  // degenerate: both sides fully tombstoned
        } else {
            std::vector<std::span<const float>> pts;
            pts.reserve(merged.size());
            for (const auto& rec : merged) {
                pts.emplace_back(rec.data);
            }
            centroid = mean_point(pts, cfg_.dimension);
        }
        PostingId np = create_structural(std::move(merged));
        if (hooks_.on_before_commit) {
            hooks_.on_before_commit(pid);
        }
        publish_postings({np}, {std::move(centroid)});
        retire_posting(pid, {np});
        retire_posting(partner, {np});
        enqueue(UpdateJob{UpdateJob::Kind::kReassign, np, {}});
        return true;
    }
    return false;  // nothing qualified; pid's status never left Normal
}

// ---------------------------------------------------------------------------
// Reassign

std::size_t Index::reassign_posting(PostingId pid) {
    if (!recorder_.is_registered(pid) || !centroids_.is_alive(pid)) {
        return 0;
    }
    std::vector<float> own;
    {
        auto c = centroids_.centroid(pid);
        own.assign(c.begin(), c.end());
    }
    PostingData data;
    try {
        data = store_->read(pid);
    } catch (const NotFoundError&) {
        return 0;
    }
    std::size_t moves = 0;
    thread_local std::vector<CentroidIndex::Hit> near;
    for (auto& rec : data.records) {
        if (versions_.is_stale(rec.vid, rec.assign_version)) {
            continue;
        }
        float d_own = distance_sq(rec.data, own);
        centroids_.nearest(rec.data, 2, near);
        PostingId other = kNoPosting;
        float d_other = 0.0f;
        for (const auto& hit : near) {
            if (hit.pid != pid) {
                other = hit.pid;
                d_other = hit.dist_sq;
                break;
            }
        }
        if (other == kNoPosting || !(d_other < d_own)) {
            continue;  // strict inequality: equidistant vectors stay put
        }
        std::uint32_t ver = versions_.bump_version(rec.vid);
        lengths_.add(pid, -1);
        PendingVector pv{Vector{rec.vid, std::move(rec.data)}, ver};
        dispatch_append(std::move(pv), other, false);
        ++moves;
    }
    return moves;
}

// ---------------------------------------------------------------------------
// Balance detector

std::size_t Index::detector_scan_once() {
    std::size_t enqueued = 0;
    PostingId end = recorder_.end_pid();
    for (PostingId pid = 0; pid < end; ++pid) {
        if (!recorder_.is_registered(pid)) {
            continue;
        }
        RecorderEntry e = recorder_.load(pid);
        if (e.status != PostingStatus::kNormal ||
            e.weight == PostingRecorder::kUncommittedWeight) {
            continue;
        }
        std::int64_t len = lengths_.length(pid);
        if (len > static_cast<std::int64_t>(cfg_.split_threshold)) {
            if (lengths_.try_mark_pending_split(pid)) {
                if (enqueue(UpdateJob{UpdateJob::Kind::kSplit, pid, {}})) {
                    ++enqueued;
                } else {
                    lengths_.clear_pending_split(pid);
                }
            }
        } else if (len < static_cast<std::int64_t>(cfg_.merge_threshold)) {
            if (lengths_.try_mark_pending_merge(pid)) {
                if (enqueue(UpdateJob{UpdateJob::Kind::kMerge, pid, {}})) {
                    ++enqueued;
                } else {
                    lengths_.clear_pending_merge(pid);
                }
            }
        }
    }
    return enqueued;
}

}  // namespace sann
