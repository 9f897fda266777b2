#include <algorithm>
#include <cmath>
#include <unordered_map>

#include "sann/index.hpp"

namespace sann {

double compute_recall(const SearchResult& result, std::span<const VectorId> truth) {
    if (truth.empty()) {
        throw std::invalid_argument("recall needs non-empty ground truth");
    }
    std::size_t hits = 0;
    for (VectorId t : truth) {
        for (const auto& n : result.neighbors) {
            if (n.vid == t) {
                ++hits;
                break;
            }
        }
    }
    return static_cast<double>(hits) / static_cast<double>(truth.size());
}

namespace {

struct Candidate {
    float dist_sq;
    VectorId vid;
};

}  // namespace

SearchResult Index::knn_search(std::span<const float> query) const {
    return knn_search(query, cfg_.k, cfg_.search_postings);
}

SearchResult Index::knn_search(std::span<const float> query, std::uint32_t k,
                               std::uint32_t search_postings) const {
    if (query.size() != cfg_.dimension) {
        throw std::invalid_argument("query dimension mismatch");
    }
    SearchResult result;
    if (k == 0) {
        return result;
    }

    GlobalVersion snap = recorder_.snapshot();

    thread_local std::vector<CentroidIndex::Hit> hits;
    thread_local std::vector<PendingVector> cache_buf;
    thread_local std::unordered_map<VectorId, float> best;
    thread_local std::vector<PostingId> visited;
    best.clear();
    visited.clear();

    auto consider = [&](VectorId vid, std::uint32_t assign_version,
                        std::span<const float> data) {
        if (versions_.is_stale(vid, assign_version)) {
            return;  // tombstoned or superseded copy
        }
        float d = distance_sq_cfg(cfg_, data, query);
        auto [it, fresh] = best.try_emplace(vid, d);
        if (!fresh && d < it->second) {
            it->second = d;  // duplicate copies: keep the smallest distance
        }
    };

    auto scan_storage = [&](PostingId pid) {
        PostingData data;
        try {
            data = store_->read(pid);
        } catch (const NotFoundError&) {
            return;  // reclaimed underneath us
        }
        for (const auto& rec : data.records) {
            consider(rec.vid, rec.assign_version, rec.data);
        }
    };

    auto scan_cache = [&](PostingId pid) {
        cache_buf.clear();
        cache_.peek(pid, cache_buf);
        for (const auto& pv : cache_buf) {
            consider(pv.vec.id, pv.assign_version, pv.vec.data);
        }
    };

    // Depth-limited walk: visible postings are scanned; deleted ones forward
    // to their visible successors, falling back to the stale blob when no
    // successor is visible yet (mid-commit window).
    auto scan = [&](auto&& self, PostingId pid, std::uint32_t depth) -> void {
        if (std::find(visited.begin(), visited.end(), pid) != visited.end()) {
            return;
        }
        visited.push_back(pid);
        RecorderEntry entry;
        try {
            entry = recorder_.load(pid);
        } catch (const NotFoundError&) {
            return;
        }
        // In-flight vectors staged for this posting are always current.
        scan_cache(pid);
        if (entry.status == PostingStatus::kDeleted) {
            bool any_visible = false;
            for (PostingId succ : {entry.succ_a, entry.succ_b}) {
                if (succ == kNoPosting || !recorder_.is_registered(succ)) {
                    continue;
                }
                if (PostingRecorder::is_visible(recorder_.load(succ), snap)) {
                    any_visible = true;
                    if (depth < cfg_.chase_depth) {
                        self(self, succ, depth + 1);
                    }
                }
            }
            if (!any_visible && PostingRecorder::is_visible(entry, snap)) {
                scan_storage(pid);
            }
            return;
        }
        if (!PostingRecorder::is_visible(entry, snap)) {
            return;
        }
        scan_storage(pid);
    };

    centroids_.nearest(query, search_postings, hits);
    for (const auto& hit : hits) {
        scan(scan, hit.pid, 0);
    }

    // With the balance detector ablated, undersized postings are only caught
    // here, when a search touches them.
    if (!cfg_.balance_detector) {
        for (const auto& hit : hits) {
            RecorderEntry e;
            try {
                e = recorder_.load(hit.pid);
            } catch (const NotFoundError&) {
                continue;
            }
            if (e.status != PostingStatus::kNormal ||
                e.weight == PostingRecorder::kUncommittedWeight) {
                continue;
            }
            if (lengths_.length(hit.pid) <
                static_cast<std::int64_t>(cfg_.merge_threshold)) {
                if (lengths_.try_mark_pending_merge(hit.pid)) {
                    jobs_outstanding_.fetch_add(1, std::memory_order_acq_rel);
                    if (!queue_.try_push(UpdateJob{UpdateJob::Kind::kMerge, hit.pid, {}})) {
                        job_done();
                        lengths_.clear_pending_merge(hit.pid);
                    }
                }
            }
        }
    }

    thread_local std::vector<Candidate> pool;
    pool.clear();
    pool.reserve(best.size());
    for (const auto& [vid, d] : best) {
        pool.push_back(Candidate{d, vid});
    }
    auto order = [](const Candidate& a, const Candidate& b) {
        if (a.dist_sq != b.dist_sq) {
            return a.dist_sq < b.dist_sq;
        }
        return a.vid < b.vid;
    };
    if (pool.size() > k) {
        std::nth_element(pool.begin(), pool.begin() + k, pool.end(), order);
        pool.resize(k);
    }
    std::sort(pool.begin(), pool.end(), order);
    result.neighbors.reserve(pool.size());
    for (const auto& c : pool) {
        result.neighbors.push_back(
            SearchResult::Neighbor{c.vid, std::sqrt(c.dist_sq)});
    }
    return result;
}

}  // namespace sann
