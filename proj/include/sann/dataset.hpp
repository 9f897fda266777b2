#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "sann/core.hpp"

namespace sann {

// fvecs/ivecs: per record a little-endian i32 dimension followed by that many
// f32 (resp. i32) payload values. Vector ids are assigned by file position.
std::vector<Vector> read_fvecs(const std::filesystem::path& path);
void write_fvecs(const std::filesystem::path& path, std::span<const Vector> vectors);

std::vector<std::vector<std::int32_t>> read_ivecs(const std::filesystem::path& path);
void write_ivecs(const std::filesystem::path& path,
                 std::span<const std::vector<std::int32_t>> rows);

enum class BatchOrdering : std::uint8_t {
    kFileOrder,          // stream in file order
    kSimulatedGaussian,  // order by seeded Gaussian pseudo-timestamps
};

struct Batches {
    std::vector<Vector> initial;
    std::vector<std::vector<Vector>> batches;
};

// Splits base into an initial build set (initial_fraction) and m streaming
// batches of near-equal size covering the remainder.
Batches make_batches(const std::vector<Vector>& base, double initial_fraction,
                     std::size_t m, BatchOrdering ordering, std::uint64_t seed);

// Exhaustive k nearest neighbours for every query over the live set, with the
// same distance and (distance, id) tie-break the index uses.
std::vector<std::vector<VectorId>> ground_truth(const std::vector<Vector>& live,
                                                const std::vector<Vector>& queries,
                                                std::uint32_t k);

// ground_truth with a per-(dataset, batch, k) disk cache in ivecs format.
std::vector<std::vector<VectorId>> cached_ground_truth(
    const std::filesystem::path& cache_dir, std::uint64_t dataset_key,
    std::size_t batch_index, std::uint32_t k, const std::vector<Vector>& live,
    const std::vector<Vector>& queries);

// FNV-1a over a file's bytes; used to key the ground-truth cache.
std::uint64_t file_content_hash(const std::filesystem::path& path);
std::uint64_t hash_vectors(std::span<const Vector> vectors);

}  // namespace sann
