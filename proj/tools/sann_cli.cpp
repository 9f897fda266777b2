// Command-line front end: build, stream, full, search, dump-distribution.
#include <cstdlib>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "sann/dataset.hpp"
#include "sann/harness.hpp"
#include "sann/index.hpp"

namespace {

// Relative dataset paths resolve against SANN_DATA_DIR when it is set.
std::filesystem::path resolve_data_path(const std::string& path) {
    std::filesystem::path p(path);
    const char* root = std::getenv("SANN_DATA_DIR");
    if (root != nullptr && *root != '\0' && p.is_relative()) {
        return std::filesystem::path(root) / p;
    }
    return p;
}

struct CommonOpts {
    sann::IndexConfig config;
    sann::AblationFlags flags;
};

void add_config_options(CLI::App* cmd, CommonOpts& opts) {
    auto& cfg = opts.config;
    cmd->add_option("--dimension", cfg.dimension,
                    "Vector dimension (0 = take it from the dataset)")
        ->capture_default_str();
    cmd->add_option("--split-threshold", cfg.split_threshold,
                    "Posting length that triggers a split")
        ->capture_default_str();
    cmd->add_option("--merge-threshold", cfg.merge_threshold,
                    "Posting length that triggers a merge")
        ->capture_default_str();
    cmd->add_option("--balance-factor", cfg.balance_factor,
                    "Minimum minority share of a two-way split, in (0, 0.5)")
        ->capture_default_str();
    cmd->add_option("--search-postings", cfg.search_postings,
                    "Postings scanned per query")
        ->capture_default_str();
    cmd->add_option("--k", cfg.k, "Neighbours returned per query")
        ->capture_default_str();
    cmd->add_option("--fg-threads", cfg.fg_threads, "Foreground insert threads")
        ->capture_default_str();
    cmd->add_option("--bg-threads", cfg.bg_threads, "Background worker threads")
        ->capture_default_str();
    cmd->add_option("--search-threads", cfg.search_threads, "Search threads")
        ->capture_default_str();
    cmd->add_option_function<std::uint32_t>(
           "--detector-period-ms",
           [&cfg](std::uint32_t ms) { cfg.detector_period = std::chrono::milliseconds(ms); },
           "Balance detector scan period (ms)")
        ->default_str("100");
    cmd->add_option("--queue-capacity", cfg.queue_capacity, "Update job queue bound")
        ->capture_default_str();
    cmd->add_option("--chase-depth", cfg.chase_depth,
                    "Maximum successor hops when routing through deleted postings")
        ->capture_default_str();
    cmd->add_option("--seed", cfg.seed, "Clustering / ordering seed")
        ->capture_default_str();
    cmd->add_flag("--deterministic,!--no-deterministic", cfg.deterministic,
                  "Run all background jobs inline for reproducible runs")
        ->capture_default_str();
    cmd->add_flag("--wide-accumulate,!--no-wide-accumulate", cfg.wide_accumulate,
                  "Use a 64-bit accumulator for distances")
        ->capture_default_str();
    cmd->add_flag("--fine-grained,!--no-fine-grained", opts.flags.fine_grained_control,
                  "Fine-grained posting concurrency control")
        ->capture_default_str();
    cmd->add_flag("--balance-detector,!--no-balance-detector",
                  opts.flags.balance_detector, "Periodic balance detector")
        ->capture_default_str();
    cmd->set_config("--config", "", "Read options from a key=value file");
}

sann::IndexConfig runtime_config(const CommonOpts& opts) {
    sann::IndexConfig cfg = opts.config;
    cfg.fine_grained_control = opts.flags.fine_grained_control;
    cfg.balance_detector = opts.flags.balance_detector;
    return cfg;
}

void write_reports(const std::vector<sann::WorkloadReport>& reports,
                   const std::string& report_path) {
    if (report_path.empty()) {
        sann::report_csv(reports, std::cout);
        return;
    }
    std::ofstream out(report_path, std::ios::trunc);
    if (!out) {
        throw std::runtime_error("cannot write report " + report_path);
    }
    sann::report_csv(reports, out);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Streaming cluster-based approximate nearest neighbour index"};
    app.require_subcommand(1);

    // ---- build ------------------------------------------------------------
    auto* build = app.add_subcommand("build", "Bulk-build an index from an fvecs file");
    CommonOpts build_opts;
    std::string build_base, build_dir;
    std::size_t build_count = 0;
    build->add_option("--base", build_base, "Base vectors (fvecs)")->required();
    build->add_option("--dir", build_dir, "Index directory")->required();
    build->add_option("--count", build_count,
                      "Build from only the first N vectors (0 = all)");
    add_config_options(build, build_opts);

    // ---- stream -----------------------------------------------------------
    auto* stream = app.add_subcommand(
        "stream", "Streaming-update workload: batched inserts with live search");
    CommonOpts stream_opts;
    std::string stream_base, stream_queries, stream_dir, stream_report, stream_gt_cache;
    std::string stream_order = "file";
    double stream_fraction = 0.5;
    std::size_t stream_batches = 10;
    stream->add_option("--base", stream_base, "Base vectors (fvecs)")->required();
    stream->add_option("--queries", stream_queries, "Query vectors (fvecs)")->required();
    stream->add_option("--dir", stream_dir, "Index working directory")->required();
    stream->add_option("--batches", stream_batches, "Streaming batch count")
        ->capture_default_str();
    stream->add_option("--initial-fraction", stream_fraction,
                       "Fraction of the base used for the initial build")
        ->capture_default_str();
    stream->add_option("--ordering", stream_order,
                       "Arrival order: file | gaussian")
        ->check(CLI::IsMember({"file", "gaussian"}))
        ->capture_default_str();
    stream->add_option("--report", stream_report, "Write the CSV report here");
    stream->add_option("--gt-cache", stream_gt_cache, "Ground-truth cache directory");
    add_config_options(stream, stream_opts);

    // ---- full -------------------------------------------------------------
    auto* full = app.add_subcommand(
        "full", "Full-update workload: stream everything into an empty index");
    CommonOpts full_opts;
    std::string full_base, full_queries, full_dir, full_report;
    full->add_option("--base", full_base, "Base vectors (fvecs)")->required();
    full->add_option("--queries", full_queries, "Query vectors (fvecs)")->required();
    full->add_option("--dir", full_dir, "Index working directory")->required();
    full->add_option("--report", full_report, "Write the CSV report here");
    add_config_options(full, full_opts);

    // ---- search -----------------------------------------------------------
    auto* search = app.add_subcommand("search", "Query a saved index");
    CommonOpts search_opts;
    std::string search_dir, search_queries, search_truth;
    search->add_option("--dir", search_dir, "Index directory")->required();
    search->add_option("--queries", search_queries, "Query vectors (fvecs)")->required();
    search->add_option("--truth", search_truth,
                       "Optional ground truth (ivecs); prints recall instead of ids");
    add_config_options(search, search_opts);

    // ---- dump-distribution --------------------------------------------------
    auto* dump = app.add_subcommand("dump-distribution",
                                    "Dump per-posting live lengths as CSV");
    CommonOpts dump_opts;
    std::string dump_dir, dump_out;
    dump->add_option("--dir", dump_dir, "Index directory")->required();
    dump->add_option("--out", dump_out, "Output file (default stdout)");
    add_config_options(dump, dump_opts);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (build->parsed()) {
            auto base = sann::read_fvecs(resolve_data_path(build_base));
            if (build_count > 0 && build_count < base.size()) {
                base.resize(build_count);
            }
            sann::IndexConfig cfg = runtime_config(build_opts);
            if (cfg.dimension == 0 && !base.empty()) {
                cfg.dimension = static_cast<std::uint32_t>(base[0].data.size());
            }
            auto index = sann::Index::build(cfg, build_dir, base);
            index->save();
            std::cout << "built " << base.size() << " vectors into "
                      << index->centroids().alive_count() << " postings\n";
        } else if (stream->parsed()) {
            sann::HarnessOptions options;
            options.config = runtime_config(stream_opts);
            options.flags = stream_opts.flags;
            options.index_dir = stream_dir;
            options.gt_cache_dir = stream_gt_cache;
            options.initial_fraction = stream_fraction;
            options.batch_count = stream_batches;
            options.ordering = stream_order == "gaussian"
                                   ? sann::BatchOrdering::kSimulatedGaussian
                                   : sann::BatchOrdering::kFileOrder;
            auto base = sann::read_fvecs(resolve_data_path(stream_base));
            auto queries = sann::read_fvecs(resolve_data_path(stream_queries));
            auto reports = sann::run_streaming(options, base, queries);
            write_reports(reports, stream_report);
        } else if (full->parsed()) {
            sann::HarnessOptions options;
            options.config = runtime_config(full_opts);
            options.flags = full_opts.flags;
            options.index_dir = full_dir;
            auto base = sann::read_fvecs(resolve_data_path(full_base));
            auto queries = sann::read_fvecs(resolve_data_path(full_queries));
            std::vector<sann::WorkloadReport> reports{
                sann::run_full(options, base, queries)};
            write_reports(reports, full_report);
        } else if (search->parsed()) {
            auto index = sann::Index::open(runtime_config(search_opts), search_dir);
            auto queries = sann::read_fvecs(resolve_data_path(search_queries));
            if (!search_truth.empty()) {
                auto rows = sann::read_ivecs(resolve_data_path(search_truth));
                if (rows.size() < queries.size()) {
                    throw std::invalid_argument("ground truth shorter than query set");
                }
                double total = 0.0;
                for (std::size_t q = 0; q < queries.size(); ++q) {
                    auto res = index->knn_search(queries[q].data);
                    std::vector<sann::VectorId> truth(rows[q].begin(), rows[q].end());
                    std::size_t keep =
                        std::min<std::size_t>(index->config().k, truth.size());
                    truth.resize(keep);
                    total += sann::compute_recall(res, truth);
                }
                std::printf("recall@%u: %.4f over %zu queries\n", index->config().k,
                            total / static_cast<double>(queries.size()),
                            queries.size());
            } else {
                for (std::size_t q = 0; q < queries.size(); ++q) {
                    auto res = index->knn_search(queries[q].data);
                    std::cout << "query " << q << ':';
                    for (const auto& n : res.neighbors) {
                        std::cout << ' ' << n.vid << '(' << n.dist << ')';
                    }
                    std::cout << '\n';
                }
            }
        } else if (dump->parsed()) {
            auto index = sann::Index::open(runtime_config(dump_opts), dump_dir);
            if (dump_out.empty()) {
                index->dump_distribution(std::cout);
            } else {
                std::ofstream out(dump_out, std::ios::trunc);
                if (!out) {
                    throw std::runtime_error("cannot write " + dump_out);
                }
                index->dump_distribution(out);
            }
        }
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 0;
}
