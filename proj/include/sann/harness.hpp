#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

#include "sann/core.hpp"
#include "sann/dataset.hpp"
#include "sann/index.hpp"

namespace sann {

// Feature switches for ablation experiments; applied onto IndexConfig.
struct AblationFlags {
    bool fine_grained_control = true;
    bool balance_detector = true;
};

struct WorkloadReport {
    std::size_t batch = 0;       // 1-based
    double recall = 0.0;         // mean recall@k at batch quiescence
    double tps = 0.0;            // update jobs completed / feed wall seconds
    double qps = 0.0;            // evaluation queries / wall seconds
    double p99_ms = 0.0;         // nearest-rank P99 search latency
    std::uint64_t mem_bytes = 0; // resident set size snapshot
};

struct HarnessOptions {
    IndexConfig config;
    AblationFlags flags;
    std::filesystem::path index_dir;
    std::filesystem::path gt_cache_dir;  // empty disables the GT cache
    double initial_fraction = 0.5;
    std::size_t batch_count = 10;
    BatchOrdering ordering = BatchOrdering::kFileOrder;
    bool concurrent_search_load = true;  // searches run while feeding
};

// Streaming-update workload: build on the initial fraction, then feed each
// batch with foreground insert threads (searches hammering concurrently),
// drain to quiescence and evaluate recall/QPS/latency against exhaustive
// ground truth over everything inserted so far.
std::vector<WorkloadReport> run_streaming(const HarnessOptions& options,
                                          const std::vector<Vector>& base,
                                          const std::vector<Vector>& queries);

// Full-update workload: every vector is streamed into an initially empty
// index as one batch; evaluation runs only after the feed has fully drained.
WorkloadReport run_full(const HarnessOptions& options,
                        const std::vector<Vector>& vectors,
                        const std::vector<Vector>& queries);

// CSV with header "batch,recall,tps,qps,p99_ms,mem_bytes" and fixed decimal
// places per column.
void report_csv(std::span<const WorkloadReport> reports, std::ostream& out);
std::vector<WorkloadReport> parse_report_csv(std::istream& in);

// VmRSS from /proc/self/status, in bytes; 0 when unavailable.
std::uint64_t resident_memory_bytes();

}  // namespace sann
