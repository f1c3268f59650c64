#include <gtest/gtest.h>

#include <algorithm>
#include <set>

#include "mdb/digest.hpp"
#include "mdb/rng.hpp"

using namespace mdb;

TEST(Rng, SplitMix64ReferenceSequence) {
    // First outputs of the reference SplitMix64 generator seeded with 0.
    SplitMix64 rng(0);
    EXPECT_EQ(rng.next(), 0xe220a8397b1dcdafULL);
    EXPECT_EQ(rng.next(), 0x6e789e6aa1b965f4ULL);
    EXPECT_EQ(rng.next(), 0x06c45d188009454fULL);
}

TEST(Rng, StreamKeyIsOrderSensitive) {
    EXPECT_NE(stream_key(1, {2, 3}), stream_key(1, {3, 2}));
    EXPECT_NE(stream_key(1, {2}), stream_key(2, {2}));
    EXPECT_EQ(stream_key(5, {1, 2, 3}), stream_key(5, {1, 2, 3}));
}

TEST(Rng, UniformAndBelowStayInRange) {
    SplitMix64 rng(42);
    for (int i = 0; i < 10000; ++i) {
        const double u = rng.uniform();
        ASSERT_GE(u, 0.0);
        ASSERT_LT(u, 1.0);
        ASSERT_LT(rng.below(7), 7u);
        const auto r = rng.range(-2, 2);
        ASSERT_GE(r, -2);
        ASSERT_LE(r, 2);
    }
}

TEST(Rng, SampleWithoutReplacementIsDistinct) {
    SplitMix64 rng(3);
    const auto s = sample_without_replacement(50, 20, rng);
    EXPECT_EQ(s.size(), 20u);
    EXPECT_EQ(std::set<std::size_t>(s.begin(), s.end()).size(), 20u);
    EXPECT_TRUE(std::all_of(s.begin(), s.end(), [](std::size_t v) { return v < 50; }));
}

TEST(Digest, Fnv1aKnownValues) {
    EXPECT_EQ(digest_of(""), 0xcbf29ce484222325ULL);
    EXPECT_EQ(digest_of("a"), 0xaf63dc4c8601ec8cULL);
    EXPECT_EQ(to_hex(0xabcULL), "0000000000000abc");
}
