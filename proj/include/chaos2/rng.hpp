#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>

namespace chaos2 {

/// Philox4x32-10 block function (Salmon et al., SC'11). Pure function of
/// (counter, key); this is what makes every draw addressable without state.
[[nodiscard]] constexpr std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> ctr,
                                                                std::array<std::uint32_t, 2> key) noexcept {
    constexpr std::uint32_t kM0 = 0xD2511F53u;
    constexpr std::uint32_t kM1 = 0xCD9E8D57u;
    constexpr std::uint32_t kW0 = 0x9E3779B9u;
    constexpr std::uint32_t kW1 = 0xBB67AE85u;
    for (int round = 0; round < 10; ++round) {
        const std::uint64_t p0 = std::uint64_t{kM0} * ctr[0];
        const std::uint64_t p1 = std::uint64_t{kM1} * ctr[2];
        const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
        const auto lo0 = static_cast<std::uint32_t>(p0);
        const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
        const auto lo1 = static_cast<std::uint32_t>(p1);
        ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
        key[0] += kW0;
        key[1] += kW1;
    }
    return ctr;
}

/// SplitMix64 finalizer, used only to derive keys and stream ids.
[[nodiscard]] constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
    z += 0x9e3779b97f4a7c15ull;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

/// Child seed for an independent purpose (e.g. holdout batches).
[[nodiscard]] constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag) noexcept {
    return mix64(seed ^ mix64(tag + 0x632be59bd9b4e019ull));
}

/// Counter-based generator keyed by (seed, stream). Draw number p of stream s
/// is philox(counter = (p, s), key = seed), so any partition of streams over
/// threads reproduces the same numbers.
class CounterRng {
public:
    CounterRng(std::uint64_t seed, std::uint64_t stream) noexcept
        : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)}, stream_(stream) {}

    [[nodiscard]] std::uint64_t next_u64() noexcept {
        if (buffered_ == 0) {
            block_ = philox4x32({static_cast<std::uint32_t>(position_), static_cast<std::uint32_t>(position_ >> 32),
                                 static_cast<std::uint32_t>(stream_), static_cast<std::uint32_t>(stream_ >> 32)},
                                key_);
            ++position_;
            buffered_ = 2;
        }
        const int at = 2 - buffered_;
        --buffered_;
        return (std::uint64_t{block_[2 * at + 1]} << 32) | block_[2 * at];
    }

    /// Uniform on [0, 1) with 53 random bits.
    [[nodiscard]] double uniform() noexcept { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    /// Uniform on (0, 1).
    [[nodiscard]] double uniform_open() noexcept {
        return (static_cast<double>(next_u64() >> 12) + 0.5) * 0x1.0p-52;
    }

    /// Standard normal via Box-Muller; the second variate of each pair is cached.
    [[nodiscard]] double normal() noexcept {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        const double u1 = uniform_open();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 2.0 * std::numbers::pi * u2;
        spare_ = r * std::sin(theta);
        has_spare_ = true;
        return r * std::cos(theta);
    }

    /// Uniform integer in [lo, hi].
    [[nodiscard]] long long uniform_int(long long lo, long long hi) noexcept {
        const auto span = static_cast<std::uint64_t>(hi - lo) + 1u;
        // Lemire-style rejection keeps the draw unbiased.
        const std::uint64_t limit = (0 - span) % span;
        std::uint64_t x = next_u64();
        while (x < limit) x = next_u64();
        return lo + static_cast<long long>(x % span);
    }

private:
    std::array<std::uint32_t, 2> key_;
    std::uint64_t stream_;
    std::uint64_t position_ = 0;
    std::array<std::uint32_t, 4> block_{};
    int buffered_ = 0;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace chaos2
