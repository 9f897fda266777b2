#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <atomic>
#include <random>
#include <sstream>
#include <thread>

#include "sann/recorder.hpp"

using namespace sann;

namespace {

RecorderEntry normal_entry(std::uint16_t weight = 0) {
    return RecorderEntry{PostingStatus::kNormal, weight, kNoPosting, kNoPosting};
}

}  // namespace

TEST_CASE("entry encoding round-trips field by field") {
    RecorderEntry e{PostingStatus::kMerging, 0xBEEF, 12345, 0x7FFFFE};
    std::uint64_t word = encode_entry(e);
    CHECK(decode_entry(word) == e);

    // Field placement per the documented layout.
    CHECK(((word >> 62) & 0x3) == 2);            // merging
    CHECK(((word >> 46) & 0xFFFF) == 0xBEEF);    // weight
    CHECK(((word >> 23) & 0x7FFFFF) == 12345);   // succ_a
    CHECK((word & 0x7FFFFF) == 0x7FFFFE);        // succ_b
}

TEST_CASE("every 64-bit word decodes and re-encodes to itself") {
    std::mt19937_64 rng(11);
    for (int i = 0; i < 10'000; ++i) {
        std::uint64_t word = rng();
        CHECK(encode_entry(decode_entry(word)) == word);
    }
}

TEST_CASE("a legal non-deleted entry never encodes to the unregistered word") {
    // Word zero marks "never registered"; non-deleted entries carry all-ones
    // successors, so their encoding always has bits set.
    CHECK(encode_entry(normal_entry(0)) != 0);
}

TEST_CASE("transition legality matrix") {
    using S = PostingStatus;
    struct Row {
        S from, to;
        bool legal;
    };
    const Row rows[] = {
        {S::kNormal, S::kNormal, false},     {S::kNormal, S::kSplitting, true},
        {S::kNormal, S::kMerging, true},     {S::kNormal, S::kDeleted, false},
        {S::kSplitting, S::kNormal, true},   {S::kSplitting, S::kSplitting, false},
        {S::kSplitting, S::kMerging, false}, {S::kSplitting, S::kDeleted, true},
        {S::kMerging, S::kNormal, true},     {S::kMerging, S::kSplitting, false},
        {S::kMerging, S::kMerging, false},   {S::kMerging, S::kDeleted, true},
        {S::kDeleted, S::kNormal, false},    {S::kDeleted, S::kSplitting, false},
        {S::kDeleted, S::kMerging, false},   {S::kDeleted, S::kDeleted, false},
    };
    for (const Row& r : rows) {
        CAPTURE(to_string(r.from));
        CAPTURE(to_string(r.to));
        CHECK(legal_transition(r.from, r.to) == r.legal);
    }
}

TEST_CASE("status names") {
    CHECK(std::string(to_string(PostingStatus::kNormal)) == "normal");
    CHECK(std::string(to_string(PostingStatus::kSplitting)) == "splitting");
    CHECK(std::string(to_string(PostingStatus::kMerging)) == "merging");
    CHECK(std::string(to_string(PostingStatus::kDeleted)) == "deleted");
}

TEST_CASE("registration rules") {
    PostingRecorder rec;
    CHECK_FALSE(rec.is_registered(0));
    CHECK_THROWS_AS(rec.load(0), NotFoundError);

    rec.register_posting(0, normal_entry());
    CHECK(rec.is_registered(0));
    CHECK(rec.load(0) == normal_entry());
    CHECK(rec.end_pid() == 1);

    SUBCASE("pids are never recycled") {
        CHECK_THROWS_AS(rec.register_posting(0, normal_entry()), std::invalid_argument);
    }
    SUBCASE("non-deleted entries must carry empty successors") {
        RecorderEntry bad{PostingStatus::kNormal, 0, 7, kNoPosting};
        CHECK_THROWS_AS(rec.register_posting(1, bad), std::invalid_argument);
    }
    SUBCASE("successor range is 23 bits") {
        RecorderEntry bad{PostingStatus::kDeleted, 0, kNoPosting + 1, kNoPosting};
        CHECK_THROWS_AS(rec.register_posting(1, bad), std::invalid_argument);
    }
    SUBCASE("pid range is 23 bits minus the sentinel") {
        CHECK_THROWS_AS(rec.register_posting(kNoPosting, normal_entry()),
                        std::invalid_argument);
        rec.register_posting(kMaxPostingId, normal_entry());
        CHECK(rec.end_pid() == kMaxPostingId + 1);
    }
}

TEST_CASE("transition is a single-word CAS") {
    PostingRecorder rec;
    rec.register_posting(3, normal_entry(5));

    RecorderEntry splitting{PostingStatus::kSplitting, 5, kNoPosting, kNoPosting};
    SUBCASE("succeeds from the exact current entry") {
        CHECK(rec.transition(3, normal_entry(5), splitting));
        CHECK(rec.load(3) == splitting);
    }
    SUBCASE("fails when expected does not match, leaving the entry untouched") {
        CHECK_FALSE(rec.transition(3, normal_entry(4), splitting));
        CHECK(rec.load(3) == normal_entry(5));
    }
    SUBCASE("deleted is terminal and keeps successor pointers") {
        REQUIRE(rec.transition(3, normal_entry(5), splitting));
        RecorderEntry dead{PostingStatus::kDeleted, 5, 10, 11};
        CHECK(rec.transition(3, splitting, dead));
        CHECK(rec.load(3) == dead);
    }
}

TEST_CASE("visibility is a strict inequality on the snapshot") {
    RecorderEntry e = normal_entry(7);
    CHECK_FALSE(PostingRecorder::is_visible(e, 6));
    CHECK_FALSE(PostingRecorder::is_visible(e, 7));
    CHECK(PostingRecorder::is_visible(e, 8));
    // The placeholder weight is invisible to every snapshot.
    RecorderEntry placeholder = normal_entry(PostingRecorder::kUncommittedWeight);
    CHECK_FALSE(PostingRecorder::is_visible(placeholder, 0xFFFF));
}

TEST_CASE("commit stamps the pre-increment version and bumps the counter") {
    PostingRecorder rec;
    rec.register_posting(0, normal_entry(PostingRecorder::kUncommittedWeight));
    rec.register_posting(1, normal_entry(PostingRecorder::kUncommittedWeight));

    GlobalVersion before = rec.snapshot();
    CHECK(before == 1);

    PostingId pids[] = {0, 1};
    GlobalVersion after = rec.commit_structural(pids);
    CHECK(after == before + 1);
    CHECK(rec.snapshot() == after);
    CHECK(rec.load(0).weight == before);
    CHECK(rec.load(1).weight == before);

    // The pre-commit snapshot excludes the postings; the new one sees them.
    CHECK_FALSE(PostingRecorder::is_visible(rec.load(0), before));
    CHECK(PostingRecorder::is_visible(rec.load(0), after));
}

TEST_CASE("restore clamps version zero to one") {
    PostingRecorder rec;
    rec.restore_version(0);
    CHECK(rec.snapshot() == 1);
    rec.restore_version(42);
    CHECK(rec.snapshot() == 42);
}

TEST_CASE("version counter renormalizes at 16-bit exhaustion") {
    PostingRecorder rec;
    rec.register_posting(0, normal_entry(9));  // committed long ago
    rec.register_posting(1, normal_entry(PostingRecorder::kUncommittedWeight));
    rec.register_posting(2, normal_entry(PostingRecorder::kUncommittedWeight));
    rec.restore_version(0xFFFE);

    PostingId first[] = {1};
    CHECK(rec.commit_structural(first) == 0xFFFF);
    CHECK(rec.load(1).weight == 0xFFFE);

    // Counter now sits at the reserved value; the next commit renormalizes.
    PostingId second[] = {2};
    GlobalVersion v = rec.commit_structural(second);
    CHECK(v == 2);
    CHECK(rec.snapshot() == 2);
    CHECK(rec.load(0).weight == 0);  // live weights reset
    CHECK(rec.load(1).weight == 0);
    CHECK(rec.load(2).weight == 1);  // stamped after the reset
    // Everything committed is visible to the fresh snapshot.
    CHECK(PostingRecorder::is_visible(rec.load(0), v));
    CHECK(PostingRecorder::is_visible(rec.load(1), v));
    CHECK(PostingRecorder::is_visible(rec.load(2), v));
}

TEST_CASE("renormalization preserves the uncommitted placeholder") {
    PostingRecorder rec;
    rec.register_posting(0, normal_entry(PostingRecorder::kUncommittedWeight));
    rec.register_posting(1, normal_entry(3));
    rec.register_posting(2, normal_entry(PostingRecorder::kUncommittedWeight));
    rec.restore_version(0xFFFF);

    PostingId pids[] = {2};
    rec.commit_structural(pids);
    // Posting 0 was not part of the commit and must stay invisible.
    CHECK(rec.load(0).weight == PostingRecorder::kUncommittedWeight);
    CHECK_FALSE(PostingRecorder::is_visible(rec.load(0), rec.snapshot()));
    CHECK(rec.load(1).weight == 0);
}

TEST_CASE("dump prints one decimal line per registered posting") {
    PostingRecorder rec;
    rec.register_posting(2, normal_entry(7));
    rec.register_posting(5, RecorderEntry{PostingStatus::kDeleted, 1, 8, 9});
    std::ostringstream out;
    rec.dump(out);
    CHECK(out.str() == "2 0 7 8388607 8388607\n5 3 1 8 9\n");
}

TEST_CASE("concurrent CAS admits exactly one winner per round") {
    PostingRecorder rec;
    constexpr int kRounds = 300;
    constexpr int kThreads = 8;
    for (PostingId pid = 0; pid < kRounds; ++pid) {
        rec.register_posting(pid, normal_entry());
    }

    std::atomic<int> round_gate{-1};
    std::atomic<int> wins{0};
    std::atomic<int> arrived{0};
    std::vector<std::thread> threads;
    threads.reserve(kThreads);
    for (int t = 0; t < kThreads; ++t) {
        threads.emplace_back([&, t] {
            for (int r = 0; r < kRounds; ++r) {
                while (round_gate.load(std::memory_order_acquire) < r) {
                    std::this_thread::yield();
                }
                RecorderEntry desired{t % 2 == 0 ? PostingStatus::kSplitting
                                                 : PostingStatus::kMerging,
                                      0, kNoPosting, kNoPosting};
                if (rec.transition(static_cast<PostingId>(r), normal_entry(), desired)) {
                    wins.fetch_add(1, std::memory_order_acq_rel);
                }
                arrived.fetch_add(1, std::memory_order_acq_rel);
            }
        });
    }
    for (int r = 0; r < kRounds; ++r) {
        round_gate.store(r, std::memory_order_release);
        while (arrived.load(std::memory_order_acquire) < (r + 1) * kThreads) {
            std::this_thread::yield();
        }
        CHECK(wins.load() == r + 1);  // exactly one more winner per round
        RecorderEntry e = rec.load(static_cast<PostingId>(r));
        CHECK(e.status != PostingStatus::kNormal);
    }
    for (auto& th : threads) {
        th.join();
    }
}
