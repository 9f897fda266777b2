#include "sann/dataset.hpp"

#include <algorithm>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <random>

namespace sann {

namespace {

std::vector<std::uint8_t> read_all(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary | std::ios::ate);
    if (!in) {
        throw NotFoundError("cannot open " + path.string());
    }
    auto size = static_cast<std::size_t>(in.tellg());
    in.seekg(0);
    std::vector<std::uint8_t> buf(size);
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(size));
    if (!in) {
        throw FormatError("failed reading " + path.string(), 0);
    }
    return buf;
}

}  // namespace

std::vector<Vector> read_fvecs(const std::filesystem::path& path) {
    auto buf = read_all(path);
    std::vector<Vector> vectors;
    std::size_t pos = 0;
    while (pos < buf.size()) {
        std::size_t record_start = pos;
        if (buf.size() - pos < 4) {
            throw FormatError("truncated fvecs record header", record_start);
        }
        std::int32_t dim;
        std::memcpy(&dim, buf.data() + pos, 4);
        pos += 4;
        if (dim <= 0) {
            throw FormatError("non-positive fvecs dimension", record_start);
        }
        std::size_t payload = 4 * static_cast<std::size_t>(dim);
        if (buf.size() - pos < payload) {
            throw FormatError("truncated fvecs record payload", record_start);
        }
        Vector v;
        v.id = static_cast<VectorId>(vectors.size());
        v.data.resize(static_cast<std::size_t>(dim));
        std::memcpy(v.data.data(), buf.data() + pos, payload);
        pos += payload;
        vectors.push_back(std::move(v));
    }
    return vectors;
}

void write_fvecs(const std::filesystem::path& path, std::span<const Vector> vectors) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw std::runtime_error("cannot write " + path.string());
    }
    for (const auto& v : vectors) {
        auto dim = static_cast<std::int32_t>(v.data.size());
        out.write(reinterpret_cast<const char*>(&dim), 4);
        out.write(reinterpret_cast<const char*>(v.data.data()),
                  static_cast<std::streamsize>(4 * v.data.size()));
    }
    if (!out) {
        throw std::runtime_error("failed writing " + path.string());
    }
}

std::vector<std::vector<std::int32_t>> read_ivecs(const std::filesystem::path& path) {
    auto buf = read_all(path);
    std::vector<std::vector<std::int32_t>> rows;
    std::size_t pos = 0;
    while (pos < buf.size()) {
        std::size_t record_start = pos;
        if (buf.size() - pos < 4) {
            throw FormatError("truncated ivecs record header", record_start);
        }
        std::int32_t dim;
        std::memcpy(&dim, buf.data() + pos, 4);
        pos += 4;
        // dim == 0 is a legal empty row (e.g. ground truth over an empty
        // live set); only a negative header is malformed.
        if (dim < 0) {
            throw FormatError("negative ivecs dimension", record_start);
        }
        std::size_t payload = 4 * static_cast<std::size_t>(dim);
        if (buf.size() - pos < payload) {
            throw FormatError("truncated ivecs record payload", record_start);
        }
        std::vector<std::int32_t> row(static_cast<std::size_t>(dim));
        std::memcpy(row.data(), buf.data() + pos, payload);
        pos += payload;
        rows.push_back(std::move(row));
    }
    return rows;
}

void write_ivecs(const std::filesystem::path& path,
                 std::span<const std::vector<std::int32_t>> rows) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw std::runtime_error("cannot write " + path.string());
    }
    for (const auto& row : rows) {
        auto dim = static_cast<std::int32_t>(row.size());
        out.write(reinterpret_cast<const char*>(&dim), 4);
        out.write(reinterpret_cast<const char*>(row.data()),
                  static_cast<std::streamsize>(4 * row.size()));
    }
    if (!out) {
        throw std::runtime_error("failed writing " + path.string());
    }
}

Batches make_batches(const std::vector<Vector>& base, double initial_fraction,
                     std::size_t m, BatchOrdering ordering, std::uint64_t seed) {
    if (initial_fraction < 0.0 || initial_fraction > 1.0) {
        throw std::invalid_argument("initial_fraction must lie in [0, 1]");
    }
    auto n_initial = static_cast<std::size_t>(initial_fraction *
                                              static_cast<double>(base.size()));
    std::size_t remaining = base.size() - n_initial;
    if (m == 0 || m > remaining) {
        throw std::invalid_argument("batch count must lie in [1, remaining vectors]");
    }

    std::vector<std::size_t> order(base.size());
    for (std::size_t i = 0; i < base.size(); ++i) {
        order[i] = i;
    }
    if (ordering == BatchOrdering::kSimulatedGaussian) {
        // Seeded Gaussian pseudo-timestamps; sorting by them yields a
        // reproducible arrival order uncorrelated with file position.
        std::mt19937_64 rng(seed);
        std::normal_distribution<double> normal(0.0, 1.0);
        std::vector<double> ts(base.size());
        for (auto& t : ts) {
            t = normal(rng);
        }
        std::stable_sort(order.begin(), order.end(),
                         [&](std::size_t a, std::size_t b) { return ts[a] < ts[b]; });
    }

    Batches out;
    out.initial.reserve(n_initial);
    for (std::size_t i = 0; i < n_initial; ++i) {
        out.initial.push_back(base[order[i]]);
    }
    out.batches.resize(m);
    // Near-equal cuts: the first (remaining % m) batches get one extra.
    std::size_t cursor = n_initial;
    for (std::size_t b = 0; b < m; ++b) {
        std::size_t size = remaining / m + (b < remaining % m ? 1 : 0);
        out.batches[b].reserve(size);
        for (std::size_t i = 0; i < size; ++i) {
            out.batches[b].push_back(base[order[cursor++]]);
        }
    }
    return out;
}

std::vector<std::vector<VectorId>> ground_truth(const std::vector<Vector>& live,
                                                const std::vector<Vector>& queries,
                                                std::uint32_t k) {
    struct Entry {
        float dist_sq;
        VectorId vid;
    };
    auto order = [](const Entry& a, const Entry& b) {
        if (a.dist_sq != b.dist_sq) {
            return a.dist_sq < b.dist_sq;
        }
        return a.vid < b.vid;
    };
    std::vector<std::vector<VectorId>> truth(queries.size());
    std::vector<Entry> pool;
    pool.reserve(live.size());
    for (std::size_t q = 0; q < queries.size(); ++q) {
        pool.clear();
        for (const auto& v : live) {
            pool.push_back(Entry{distance_sq(v.data, queries[q].data), v.id});
        }
        std::size_t keep = std::min<std::size_t>(k, pool.size());
        std::partial_sort(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(keep),
                          pool.end(), order);
        truth[q].reserve(keep);
        for (std::size_t i = 0; i < keep; ++i) {
            truth[q].push_back(pool[i].vid);
        }
    }
    return truth;
}

std::uint64_t file_content_hash(const std::filesystem::path& path) {
    auto buf = read_all(path);
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (std::uint8_t b : buf) {
        h ^= b;
        h *= 0x100000001b3ull;
    }
    return h;
}

std::uint64_t hash_vectors(std::span<const Vector> vectors) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    auto mix = [&](const void* p, std::size_t n) {
        const auto* bytes = static_cast<const std::uint8_t*>(p);
        for (std::size_t i = 0; i < n; ++i) {
            h ^= bytes[i];
            h *= 0x100000001b3ull;
        }
    };
    for (const auto& v : vectors) {
        mix(&v.id, sizeof(v.id));
        mix(v.data.data(), v.data.size() * 4);
    }
    return h;
}

std::vector<std::vector<VectorId>> cached_ground_truth(
    const std::filesystem::path& cache_dir, std::uint64_t dataset_key,
    std::size_t batch_index, std::uint32_t k, const std::vector<Vector>& live,
    const std::vector<Vector>& queries) {
    char name[64];
    std::snprintf(name, sizeof(name), "gt_%016llx_b%zu_k%u.ivecs",
                  static_cast<unsigned long long>(dataset_key), batch_index, k);
    auto path = cache_dir / name;
    if (std::filesystem::exists(path)) {
        auto rows = read_ivecs(path);
        if (rows.size() == queries.size()) {
            std::vector<std::vector<VectorId>> truth(rows.size());
            for (std::size_t i = 0; i < rows.size(); ++i) {
                truth[i].reserve(rows[i].size());
                for (std::int32_t v : rows[i]) {
                    truth[i].push_back(static_cast<VectorId>(v));
                }
            }
            return truth;
        }
        // Stale cache entry (query set changed): fall through and rebuild.
    }
    auto truth = ground_truth(live, queries, k);
    std::filesystem::create_directories(cache_dir);
    std::vector<std::vector<std::int32_t>> rows(truth.size());
    for (std::size_t i = 0; i < truth.size(); ++i) {
        rows[i].reserve(truth[i].size());
        for (VectorId v : truth[i]) {
            rows[i].push_back(static_cast<std::int32_t>(v));
        }
    }
    write_ivecs(path, rows);
    return truth;
}

}  // namespace sann
