#include "sann/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <thread>

#include "sann/search.hpp"

namespace sann {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_between(Clock::time_point a, Clock::time_point b) {
    return std::chrono::duration<double>(b - a).count();
}

struct EvalResult {
    double recall = 0.0;
    double qps = 0.0;
    double p99_ms = 0.0;
};

double p99_nearest_rank(std::vector<double>& latencies_ms) {
    std::sort(latencies_ms.begin(), latencies_ms.end());
    std::size_t n = latencies_ms.size();
    auto rank = static_cast<std::size_t>(std::ceil(0.99 * static_cast<double>(n)));
    rank = std::max<std::size_t>(1, std::min(rank, n));
    return latencies_ms[rank - 1];
}

// Runs every query once (strided across threads), collecting per-query recall
// and latency. The index must be quiescent.
EvalResult evaluate(Index& index, const std::vector<Vector>& queries,
                    const std::vector<std::vector<VectorId>>& truth,
                    std::uint32_t threads) {
    const std::size_t nq = queries.size();
    std::vector<double> latencies_ms(nq, 0.0);
    std::vector<double> recalls(nq, 0.0);
    std::vector<SearchResult> sampled(nq);  // kept for the consistency check

    auto run_range = [&](std::size_t tid, std::size_t stride) {
        for (std::size_t q = tid; q < nq; q += stride) {
            auto t0 = Clock::now();
            SearchResult res = index.knn_search(queries[q].data);
            auto t1 = Clock::now();
            latencies_ms[q] = seconds_between(t0, t1) * 1000.0;
            recalls[q] = compute_recall(res, truth[q]);
            if (q % 97 == 0) {
                sampled[q] = std::move(res);
            }
        }
    };

    auto t_start = Clock::now();
    if (threads <= 1) {
        run_range(0, 1);
    } else {
        std::vector<std::thread> pool;
        pool.reserve(threads);
        for (std::uint32_t t = 0; t < threads; ++t) {
            pool.emplace_back(run_range, t, threads);
        }
        for (auto& th : pool) {
            th.join();
        }
    }
    auto t_end = Clock::now();

    double total = 0.0;
    for (double r : recalls) {
        total += r;
    }
    // Sampled 1% cross-check: the aggregate must agree with compute_recall on
    // the raw per-query results.
    for (std::size_t q = 0; q < nq; q += 97) {
        double again = compute_recall(sampled[q], truth[q]);
        if (again != recalls[q]) {
            throw std::logic_error("recall aggregation disagrees with per-query recall");
        }
    }

    EvalResult out;
    out.recall = nq == 0 ? 0.0 : total / static_cast<double>(nq);
    double wall = seconds_between(t_start, t_end);
    out.qps = wall > 0.0 ? static_cast<double>(nq) / wall : 0.0;
    out.p99_ms = nq == 0 ? 0.0 : p99_nearest_rank(latencies_ms);
    return out;
}

// Feeds one batch of inserts on fg threads, optionally with search threads
// hammering concurrently, then drains to quiescence. Returns feed+drain wall
// seconds.
double feed_batch(Index& index, const std::vector<Vector>& batch,
                  const std::vector<Vector>& queries, const HarnessOptions& options) {
    const IndexConfig& cfg = index.config();
    auto t0 = Clock::now();
    if (cfg.deterministic) {
        for (const Vector& v : batch) {
            index.insert(v);
        }
    } else {
        std::atomic<std::size_t> cursor{0};
        std::atomic<bool> feeding{true};
        auto insert_loop = [&] {
            for (;;) {
                std::size_t i = cursor.fetch_add(1, std::memory_order_acq_rel);
                if (i >= batch.size()) {
                    return;
                }
                index.insert(batch[i]);
            }
        };
        std::vector<std::thread> inserters;
        std::uint32_t fg = std::max<std::uint32_t>(1, cfg.fg_threads);
        inserters.reserve(fg);
        for (std::uint32_t t = 0; t < fg; ++t) {
            inserters.emplace_back(insert_loop);
        }
        std::vector<std::thread> searchers;
        if (options.concurrent_search_load && !queries.empty()) {
            for (std::uint32_t t = 0; t < cfg.search_threads; ++t) {
                searchers.emplace_back([&, t] {
                    std::size_t q = t;
                    while (feeding.load(std::memory_order_acquire)) {
                        (void)index.knn_search(queries[q % queries.size()].data);
                        ++q;
                    }
                });
            }
        }
        for (auto& th : inserters) {
            th.join();
        }
        feeding.store(false, std::memory_order_release);
        for (auto& th : searchers) {
            th.join();
        }
    }
    index.wait_quiescent();
    return seconds_between(t0, Clock::now());
}

IndexConfig effective_config(const HarnessOptions& options, std::size_t dimension) {
    IndexConfig cfg = options.config;
    cfg.fine_grained_control = options.flags.fine_grained_control;
    cfg.balance_detector = options.flags.balance_detector;
    if (cfg.dimension == 0) {
        cfg.dimension = static_cast<std::uint32_t>(dimension);
    } else if (cfg.dimension != dimension) {
        throw std::invalid_argument("configured dimension disagrees with dataset");
    }
    cfg.validate();
    return cfg;
}

void check_quiescent(const Index& index) {
    if (!index.queue().empty() || !index.cache().empty()) {
        throw std::logic_error("evaluation started before the index drained");
    }
}

}  // namespace

std::vector<WorkloadReport> run_streaming(const HarnessOptions& options,
                                          const std::vector<Vector>& base,
                                          const std::vector<Vector>& queries) {
    if (base.empty()) {
        throw std::invalid_argument("streaming workload needs base vectors");
    }
    IndexConfig cfg = effective_config(options, base[0].data.size());
    Batches batches = make_batches(base, options.initial_fraction, options.batch_count,
                                   options.ordering, cfg.seed);
    auto index = Index::build(cfg, options.index_dir, batches.initial);
    index->start();

    std::uint64_t dataset_key = hash_vectors(base) ^ (hash_vectors(queries) * 31);
    std::vector<Vector> live = batches.initial;
    std::vector<WorkloadReport> reports;
    reports.reserve(batches.batches.size());

    for (std::size_t b = 0; b < batches.batches.size(); ++b) {
        const auto& batch = batches.batches[b];
        live.insert(live.end(), batch.begin(), batch.end());
        std::vector<std::vector<VectorId>> truth;
        if (options.gt_cache_dir.empty()) {
            truth = ground_truth(live, queries, cfg.k);
        } else {
            truth = cached_ground_truth(options.gt_cache_dir, dataset_key, b, cfg.k,
                                        live, queries);
        }

        StatsSnapshot s0 = index->stats();
        double feed_secs = feed_batch(*index, batch, queries, options);
        StatsSnapshot s1 = index->stats();
        check_quiescent(*index);

        std::uint32_t eval_threads = cfg.deterministic ? 1 : std::max(1u, cfg.search_threads);
        EvalResult ev = evaluate(*index, queries, truth, eval_threads);

        WorkloadReport report;
        report.batch = b + 1;
        report.recall = ev.recall;
        report.tps = feed_secs > 0.0
                         ? static_cast<double>(s1.jobs_completed() - s0.jobs_completed()) /
                               feed_secs
                         : 0.0;
        report.qps = ev.qps;
        report.p99_ms = ev.p99_ms;
        report.mem_bytes = resident_memory_bytes();
        reports.push_back(report);

        index->resume_maintenance();
    }
    index->save();  // leave the directory openable for later inspection
    index->stop();
    return reports;
}

WorkloadReport run_full(const HarnessOptions& options, const std::vector<Vector>& vectors,
                        const std::vector<Vector>& queries) {
    if (vectors.empty()) {
        throw std::invalid_argument("full workload needs vectors");
    }
    IndexConfig cfg = effective_config(options, vectors[0].data.size());
    auto index = Index::build(cfg, options.index_dir, {});
    index->start();

    std::vector<std::vector<VectorId>> truth = ground_truth(vectors, queries, cfg.k);
    StatsSnapshot s0 = index->stats();
    double feed_secs = feed_batch(*index, vectors, queries, options);
    StatsSnapshot s1 = index->stats();
    check_quiescent(*index);

    std::uint32_t eval_threads = cfg.deterministic ? 1 : std::max(1u, cfg.search_threads);
    EvalResult ev = evaluate(*index, queries, truth, eval_threads);

    WorkloadReport report;
    report.batch = 1;
    report.recall = ev.recall;
    report.tps = feed_secs > 0.0 ? static_cast<double>(s1.jobs_completed() -
                                                       s0.jobs_completed()) /
                                       feed_secs
                                 : 0.0;
    report.qps = ev.qps;
    report.p99_ms = ev.p99_ms;
    report.mem_bytes = resident_memory_bytes();
    index->save();  // leave the directory openable for later inspection
    index->stop();
    return report;
}

void report_csv(std::span<const WorkloadReport> reports, std::ostream& out) {
    out << "batch,recall,tps,qps,p99_ms,mem_bytes\n";
    char line[160];
    for (const auto& r : reports) {
        std::snprintf(line, sizeof(line), "%zu,%.4f,%.2f,%.2f,%.3f,%llu\n", r.batch,
                      r.recall, r.tps, r.qps, r.p99_ms,
                      static_cast<unsigned long long>(r.mem_bytes));
        out << line;
    }
}

std::vector<WorkloadReport> parse_report_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line) || line != "batch,recall,tps,qps,p99_ms,mem_bytes") {
        throw FormatError("bad workload report header", 0);
    }
    std::vector<WorkloadReport> reports;
    while (std::getline(in, line)) {
        if (line.empty()) {
            continue;
        }
        WorkloadReport r;
        unsigned long long batch = 0, mem = 0;
        if (std::sscanf(line.c_str(), "%llu,%lf,%lf,%lf,%lf,%llu", &batch, &r.recall,
                        &r.tps, &r.qps, &r.p99_ms, &mem) != 6) {
            throw FormatError("bad workload report row", 0);
        }
        r.batch = static_cast<std::size_t>(batch);
        r.mem_bytes = mem;
        reports.push_back(r);
    }
    return reports;
}

std::uint64_t resident_memory_bytes() {
    std::ifstream status("/proc/self/status");
    std::string line;
    while (std::getline(status, line)) {
        if (line.rfind("VmRSS:", 0) == 0) {
            unsigned long long kb = 0;
            if (std::sscanf(line.c_str(), "VmRSS: %llu kB", &kb) == 1) {
                return static_cast<std::uint64_t>(kb) * 1024;
            }
        }
    }
    return 0;
}

}  // namespace sann
