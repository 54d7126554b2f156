#include <gtest/gtest.h>

#include <cmath>
#include <cstdlib>
#include <vector>

#include "chaos2/parallel.hpp"
#include "chaos2/rng.hpp"

using namespace chaos2;

// Known-answer vectors published with the Random123 reference implementation.
TEST(Philox, KnownAnswerZero) {
    const auto out = philox4x32({0, 0, 0, 0}, {0, 0});
    EXPECT_EQ(out[0], 0x6627e8d5u);
    EXPECT_EQ(out[1], 0xe169c58du);
    EXPECT_EQ(out[2], 0xbc57ac4cu);
    EXPECT_EQ(out[3], 0x9b00dbd8u);
}

TEST(Philox, KnownAnswerOnes) {
    const auto out = philox4x32({0xffffffffu, 0xffffffffu, 0xffffffffu, 0xffffffffu}, {0xffffffffu, 0xffffffffu});
    EXPECT_EQ(out[0], 0x408f276du);
    EXPECT_EQ(out[1], 0x41c83b0eu);
    EXPECT_EQ(out[2], 0xa20bc7c6u);
    EXPECT_EQ(out[3], 0x6d5451fdu);
}

TEST(Philox, KnownAnswerPi) {
    const auto out = philox4x32({0x243f6a88u, 0x85a308d3u, 0x13198a2eu, 0x03707344u}, {0xa4093822u, 0x299f31d0u});
    EXPECT_EQ(out[0], 0xd16cfe09u);
    EXPECT_EQ(out[1], 0x94fdccebu);
    EXPECT_EQ(out[2], 0x5001e420u);
    EXPECT_EQ(out[3], 0x24126ea1u);
}

TEST(CounterRng, StreamsAreReproducibleAndDistinct) {
    CounterRng a(42, 7), b(42, 7), c(42, 8), d(43, 7);
    for (int i = 0; i < 100; ++i) {
        const auto x = a.next_u64();
        EXPECT_EQ(x, b.next_u64());
        EXPECT_NE(x, c.next_u64());
        EXPECT_NE(x, d.next_u64());
    }
}

TEST(CounterRng, NormalMoments) {
    CounterRng rng(1, 0);
    const int n = 200000;
    double s1 = 0, s2 = 0, s4 = 0;
    for (int i = 0; i < n; ++i) {
        const double z = rng.normal();
        s1 += z;
        s2 += z * z;
        s4 += z * z * z * z;
    }
    EXPECT_NEAR(s1 / n, 0.0, 4.0 / std::sqrt(n));
    EXPECT_NEAR(s2 / n, 1.0, 4.0 * std::sqrt(2.0 / n));
    EXPECT_NEAR(s4 / n, 3.0, 4.0 * std::sqrt(96.0 / n));
}

TEST(CounterRng, UniformIntStaysInRange) {
    CounterRng rng(5, 5);
    std::vector<int> counts(19, 0);
    for (int i = 0; i < 19000; ++i) {
        const auto v = rng.uniform_int(-9, 9);
        ASSERT_GE(v, -9);
        ASSERT_LE(v, 9);
        ++counts[static_cast<std::size_t>(v + 9)];
    }
    for (int c : counts) EXPECT_GT(c, 800);
}

TEST(Parallel, ResultIndependentOfThreadCount) {
    auto run = [] {
        std::vector<double> out(10007);
        parallel_for(out.size(), 64, [&](std::size_t b, std::size_t e) {
            for (std::size_t i = b; i < e; ++i) out[i] = CounterRng(9, i).normal();
        });
        return out;
    };
    setenv("CHAOS2_THREADS", "1", 1);
    const auto one = run();
    setenv("CHAOS2_THREADS", "4", 1);
    const auto four = run();
    unsetenv("CHAOS2_THREADS");
    EXPECT_EQ(one, four);
}
