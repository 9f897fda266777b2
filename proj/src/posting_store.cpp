#include "sann/posting_store.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <bit>
#include <cassert>
#include <cerrno>
#include <cstring>
#include <istream>
#include <ostream>
#include <system_error>

static_assert(std::endian::native == std::endian::little,
              "posting blob layout assumes a little-endian host");

namespace sann {

namespace {

constexpr char kLogFile[] = "postings.log";
constexpr char kManifestFile[] = "postings.manifest";
constexpr std::uint64_t kManifestMagic = 0x314E414D4E4E4153ull;  // "SANNMAN1"

void throw_errno(const std::string& what) {
    throw std::system_error(errno, std::generic_category(), what);
}

void pread_exact(int fd, void* buf, std::size_t len, std::uint64_t offset) {
    auto* p = static_cast<std::uint8_t*>(buf);
    while (len > 0) {
        ssize_t n = ::pread(fd, p, len, static_cast<off_t>(offset));
        if (n < 0) {
            if (errno == EINTR) {
                continue;
            }
            throw_errno("pread");
        }
        if (n == 0) {
            throw FormatError("unexpected end of posting log", offset);
        }
        p += n;
        len -= static_cast<std::size_t>(n);
        offset += static_cast<std::uint64_t>(n);
    }
}

void pwrite_exact(int fd, const void* buf, std::size_t len, std::uint64_t offset) {
    const auto* p = static_cast<const std::uint8_t*>(buf);
    while (len > 0) {
        ssize_t n = ::pwrite(fd, p, len, static_cast<off_t>(offset));
        if (n < 0) {
            if (errno == EINTR) {
                continue;
            }
            throw_errno("pwrite");
        }
        p += n;
        len -= static_cast<std::size_t>(n);
        offset += static_cast<std::uint64_t>(n);
    }
}

template <typename T>
void put(std::vector<std::uint8_t>& out, T value) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(&value);
    out.insert(out.end(), p, p + sizeof(T));
}

}  // namespace

void serialize_records(std::span<const VectorRecord> records, std::uint32_t dimension,
                       std::vector<std::uint8_t>& out) {
    out.clear();
    out.reserve(4 + records.size() * (8 + 4 * std::size_t{dimension}));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(records.size()));
    for (const auto& rec : records) {
        if (rec.data.size() != dimension) {
            throw std::invalid_argument("vector record dimension mismatch");
        }
        put<std::uint32_t>(out, rec.vid);
        put<std::uint32_t>(out, rec.assign_version);
        const auto* p = reinterpret_cast<const std::uint8_t*>(rec.data.data());
        out.insert(out.end(), p, p + 4 * std::size_t{dimension});
    }
}

std::vector<VectorRecord> parse_records(std::span<const std::uint8_t> blob,
                                        std::uint32_t dimension,
                                        std::uint64_t base_offset) {
    std::size_t pos = 0;
    auto need = [&](std::size_t n) {
        if (blob.size() - pos < n) {
            throw FormatError("truncated posting blob", base_offset + pos);
        }
    };
    need(4);
    std::uint32_t count;
    std::memcpy(&count, blob.data() + pos, 4);
    pos += 4;
    std::size_t rec_bytes = 8 + 4 * std::size_t{dimension};
    if (blob.size() - pos != count * rec_bytes) {
        throw FormatError("posting blob size disagrees with record count", base_offset + pos);
    }
    std::vector<VectorRecord> records(count);
    for (auto& rec : records) {
        std::memcpy(&rec.vid, blob.data() + pos, 4);
        std::memcpy(&rec.assign_version, blob.data() + pos + 4, 4);
        rec.data.resize(dimension);
        std::memcpy(rec.data.data(), blob.data() + pos + 8, 4 * std::size_t{dimension});
        pos += rec_bytes;
    }
    return records;
}

LogStore::LogStore(const std::filesystem::path& dir, std::uint32_t dimension, bool create)
    : dir_(dir), dimension_(dimension) {
    if (create) {
        std::filesystem::create_directories(dir_);
        fd_ = ::open((dir_ / kLogFile).c_str(), O_RDWR | O_CREAT | O_TRUNC, 0644);
        if (fd_ < 0) {
            throw_errno("open posting log");
        }
    } else {
        fd_ = ::open((dir_ / kLogFile).c_str(), O_RDWR, 0644);
        if (fd_ < 0) {
            throw_errno("open posting log");
        }
        load_manifest();
    }
    if (dimension_ == 0) {
        ::close(fd_);
        throw std::invalid_argument("dimension must be positive");
    }
}

LogStore::~LogStore() {
    if (fd_ >= 0) {
        ::close(fd_);
    }
}

LogStore::Extent LogStore::write_blob(std::span<const VectorRecord> records) {
    thread_local std::vector<std::uint8_t> buf;
    serialize_records(records, dimension_, buf);
    Extent ext;
    ext.bytes = static_cast<std::uint32_t>(buf.size());
    ext.count = static_cast<std::uint32_t>(records.size());
    ext.offset = tail_.fetch_add(buf.size(), std::memory_order_acq_rel);
    pwrite_exact(fd_, buf.data(), buf.size(), ext.offset);
    return ext;
}

PostingId LogStore::create(std::span<const VectorRecord> records) {
    std::uint32_t pid = next_pid_.fetch_add(1, std::memory_order_acq_rel);
    if (pid > kMaxPostingId) {
        throw std::length_error("posting id space exhausted");
    }
    Extent ext = write_blob(records);
    Shard& shard = shard_for(pid);
    std::lock_guard<std::mutex> lock(shard.mutex);
    shard.chains.emplace(pid, std::make_shared<Chain>(Chain{ext}));
    return pid;
}

void LogStore::append(PostingId pid, std::span<const VectorRecord> records) {
    if (records.empty()) {
        return;
    }
    Extent ext = write_blob(records);
    Shard& shard = shard_for(pid);
    std::lock_guard<std::mutex> lock(shard.mutex);
    auto it = shard.chains.find(pid);
    if (it == shard.chains.end()) {
        throw NotFoundError("posting " + std::to_string(pid) + " not in store");
    }
    auto next = std::make_shared<Chain>(*it->second);
    next->push_back(ext);
    it->second = std::move(next);
}

PostingData LogStore::read(PostingId pid) const {
    ChainPtr chain;
    {
        Shard& shard = shard_for(pid);
        std::lock_guard<std::mutex> lock(shard.mutex);
        auto it = shard.chains.find(pid);
        if (it == shard.chains.end()) {
            throw NotFoundError("posting " + std::to_string(pid) + " not in store");
        }
        chain = it->second;
    }
    PostingData data;
    data.pid = pid;
    std::size_t total = 0;
    for (const Extent& ext : *chain) {
        total += ext.count;
    }
    data.records.reserve(total);
    thread_local std::vector<std::uint8_t> buf;
    for (const Extent& ext : *chain) {
        buf.resize(ext.bytes);
        pread_exact(fd_, buf.data(), ext.bytes, ext.offset);
        auto records = parse_records({buf.data(), buf.size()}, dimension_, ext.offset);
        if (records.size() != ext.count) {
            throw FormatError("extent record count mismatch", ext.offset);
        }
        for (auto& rec : records) {
            data.records.push_back(std::move(rec));
        }
    }
    return data;
}

void LogStore::replace(PostingId pid, std::span<const VectorRecord> records) {
    Extent ext = write_blob(records);
    Shard& shard = shard_for(pid);
    std::lock_guard<std::mutex> lock(shard.mutex);
    auto it = shard.chains.find(pid);
    if (it == shard.chains.end()) {
        throw NotFoundError("posting " + std::to_string(pid) + " not in store");
    }
    it->second = std::make_shared<Chain>(Chain{ext});
}

void LogStore::reclaim(PostingId pid) {
    Shard& shard = shard_for(pid);
    std::lock_guard<std::mutex> lock(shard.mutex);
    if (shard.chains.erase(pid) == 0) {
        throw NotFoundError("posting " + std::to_string(pid) + " not in store");
    }
}

bool LogStore::contains(PostingId pid) const {
    Shard& shard = shard_for(pid);
    std::lock_guard<std::mutex> lock(shard.mutex);
    return shard.chains.count(pid) != 0;
}

std::vector<PostingId> LogStore::posting_ids() const {
    std::vector<PostingId> pids;
    for (std::size_t s = 0; s < kShards; ++s) {
        std::lock_guard<std::mutex> lock(shards_[s].mutex);
        for (const auto& [pid, chain] : shards_[s].chains) {
            pids.push_back(pid);
        }
    }
    std::sort(pids.begin(), pids.end());
    return pids;
}

PostingId LogStore::next_pid() const {
    return next_pid_.load(std::memory_order_acquire);
}

void LogStore::checkpoint() {
    if (::fsync(fd_) != 0) {
        throw_errno("fsync posting log");
    }
    save_manifest();
}

void LogStore::save_manifest() const {
    std::vector<std::uint8_t> out;
    put<std::uint64_t>(out, kManifestMagic);
    put<std::uint32_t>(out, dimension_);
    put<std::uint32_t>(out, next_pid_.load(std::memory_order_acquire));
    put<std::uint64_t>(out, tail_.load(std::memory_order_acquire));
    std::uint32_t n_postings = 0;
    std::size_t count_pos = out.size();
    put<std::uint32_t>(out, 0);  // patched below
    for (std::size_t s = 0; s < kShards; ++s) {
        std::lock_guard<std::mutex> lock(shards_[s].mutex);
        for (const auto& [pid, chain] : shards_[s].chains) {
            put<std::uint32_t>(out, pid);
            put<std::uint32_t>(out, static_cast<std::uint32_t>(chain->size()));
            for (const Extent& ext : *chain) {
                put<std::uint64_t>(out, ext.offset);
                put<std::uint32_t>(out, ext.bytes);
                put<std::uint32_t>(out, ext.count);
            }
            ++n_postings;
        }
    }
    std::memcpy(out.data() + count_pos, &n_postings, 4);

    auto tmp = dir_ / (std::string(kManifestFile) + ".tmp");
    int mfd = ::open(tmp.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
    if (mfd < 0) {
        throw_errno("open manifest");
    }
    try {
        pwrite_exact(mfd, out.data(), out.size(), 0);
        if (::fsync(mfd) != 0) {
            throw_errno("fsync manifest");
        }
    } catch (...) {
        ::close(mfd);
        throw;
    }
    ::close(mfd);
    std::filesystem::rename(tmp, dir_ / kManifestFile);
}

void LogStore::load_manifest() {
    auto path = dir_ / kManifestFile;
    std::error_code ec;
    auto size = std::filesystem::file_size(path, ec);
    if (ec) {
        throw NotFoundError("manifest not found in " + dir_.string());
    }
    std::vector<std::uint8_t> buf(size);
    int mfd = ::open(path.c_str(), O_RDONLY);
    if (mfd < 0) {
        throw_errno("open manifest");
    }
    try {
        pread_exact(mfd, buf.data(), buf.size(), 0);
    } catch (...) {
        ::close(mfd);
        throw;
    }
    ::close(mfd);

    std::size_t pos = 0;
    auto get = [&](auto& value) {
        if (buf.size() - pos < sizeof(value)) {
            throw FormatError("truncated manifest", pos);
        }
        std::memcpy(&value, buf.data() + pos, sizeof(value));
        pos += sizeof(value);
    };
    std::uint64_t magic;
    get(magic);
    if (magic != kManifestMagic) {
        throw FormatError("bad manifest magic", 0);
    }
    std::uint32_t dim;
    get(dim);
    if (dimension_ == 0) {
        dimension_ = dim;
    } else if (dim != dimension_) {
        throw std::invalid_argument("store dimension disagrees with configuration");
    }
    std::uint32_t next;
    get(next);
    next_pid_.store(next, std::memory_order_release);
    std::uint64_t tail;
    get(tail);
    tail_.store(tail, std::memory_order_release);
    std::uint32_t n_postings;
    get(n_postings);
    for (std::uint32_t i = 0; i < n_postings; ++i) {
        std::uint32_t pid, n_extents;
        get(pid);
        get(n_extents);
        Chain chain(n_extents);
        for (auto& ext : chain) {
            get(ext.offset);
            get(ext.bytes);
            get(ext.count);
        }
        Shard& shard = shard_for(pid);
        std::lock_guard<std::mutex> lock(shard.mutex);
        shard.chains.emplace(pid, std::make_shared<Chain>(std::move(chain)));
    }
}

void VersionMap::register_vector(VectorId vid) {
    auto& cell = words_.cell(vid);
    std::uint64_t expected = 0;
    std::uint64_t fresh = (static_cast<std::uint64_t>(kNoPosting) << 32) | 1u;
    if (!cell.compare_exchange_strong(expected, fresh)) {
        throw std::invalid_argument("vector id already registered");
    }
    std::uint32_t end = end_vid_.load(std::memory_order_relaxed);
    while (end < vid + 1 &&
           !end_vid_.compare_exchange_weak(end, vid + 1, std::memory_order_acq_rel)) {
    }
    live_count_.fetch_add(1, std::memory_order_acq_rel);
}

std::uint64_t VersionMap::word(VectorId vid) const {
    const auto* cell = words_.try_cell(vid);
    std::uint64_t w = cell ? cell->load(std::memory_order_acquire) : 0;
    if (w == 0) {
        throw NotFoundError("vector " + std::to_string(vid) + " not registered");
    }
    return w;
}

bool VersionMap::contains(VectorId vid) const {
    const auto* cell = words_.try_cell(vid);
    return cell != nullptr && cell->load(std::memory_order_acquire) != 0;
}

std::uint32_t VersionMap::current_version(VectorId vid) const {
    return static_cast<std::uint32_t>(word(vid) & 0xFFFFFFFFull);
}

bool VersionMap::is_deleted(VectorId vid) const {
    return (word(vid) & kDeletedBit) != 0;
}

bool VersionMap::is_stale(VectorId vid, std::uint32_t assign_version) const {
    std::uint64_t w = word(vid);
    if ((w & kDeletedBit) != 0) {
        return true;
    }
    return assign_version < static_cast<std::uint32_t>(w & 0xFFFFFFFFull);
}

std::uint32_t VersionMap::bump_version(VectorId vid) {
    auto* cell = const_cast<std::atomic<std::uint64_t>*>(words_.try_cell(vid));
    std::uint64_t w = cell ? cell->load(std::memory_order_acquire) : 0;
    for (;;) {
        if (w == 0) {
            throw NotFoundError("vector " + std::to_string(vid) + " not registered");
        }
        std::uint64_t ver = (w & 0xFFFFFFFFull) + 1;
        std::uint64_t next = (w & ~0xFFFFFFFFull) | ver;
        if (cell->compare_exchange_weak(w, next)) {
            return static_cast<std::uint32_t>(ver);
        }
    }
}

VersionMap::EraseResult VersionMap::mark_deleted(VectorId vid) {
    auto* cell = const_cast<std::atomic<std::uint64_t>*>(words_.try_cell(vid));
    std::uint64_t w = cell ? cell->load(std::memory_order_acquire) : 0;
    if (w == 0) {
        throw NotFoundError("vector " + std::to_string(vid) + " not registered");
    }
    std::uint64_t prev = cell->fetch_or(kDeletedBit);
    if ((prev & kDeletedBit) != 0) {
        return EraseResult::kAlreadyDeleted;
    }
    live_count_.fetch_sub(1, std::memory_order_acq_rel);
    return EraseResult::kErased;
}

PostingId VersionMap::home(VectorId vid) const {
    return static_cast<PostingId>((word(vid) >> 32) & ((1u << 23) - 1));
}

void VersionMap::set_home(VectorId vid, PostingId pid) {
    if (pid > kNoPosting) {
        throw std::invalid_argument("posting id out of range");
    }
    auto* cell = const_cast<std::atomic<std::uint64_t>*>(words_.try_cell(vid));
    std::uint64_t w = cell ? cell->load(std::memory_order_acquire) : 0;
    for (;;) {
        if (w == 0) {
            throw NotFoundError("vector " + std::to_string(vid) + " not registered");
        }
        std::uint64_t next = (w & ~(std::uint64_t{(1u << 23) - 1} << 32)) |
                             (static_cast<std::uint64_t>(pid) << 32);
        if (cell->compare_exchange_weak(w, next)) {
            return;
        }
    }
}

void VersionMap::save(std::ostream& out) const {
    std::uint64_t count = end_vid();
    out.write(reinterpret_cast<const char*>(&count), 8);
    for (VectorId vid = 0; vid < count; ++vid) {
        const auto* cell = words_.try_cell(vid);
        std::uint64_t w = cell ? cell->load(std::memory_order_acquire) : 0;
        out.write(reinterpret_cast<const char*>(&w), 8);
    }
}

void VersionMap::load(std::istream& in) {
    std::uint64_t count = 0;
    in.read(reinterpret_cast<char*>(&count), 8);
    std::size_t live = 0;
    for (VectorId vid = 0; vid < count; ++vid) {
        std::uint64_t w = 0;
        in.read(reinterpret_cast<char*>(&w), 8);
        if (!in) {
            throw FormatError("truncated version map", 8 + 8 * std::uint64_t{vid});
        }
        if (w != 0) {
            words_.cell(vid).store(w, std::memory_order_release);
            if ((w & kDeletedBit) == 0) {
                ++live;
            }
        }
    }
    end_vid_.store(static_cast<std::uint32_t>(count), std::memory_order_release);
    live_count_.store(live, std::memory_order_release);
}

}  // namespace sann
