#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "chaos2/distance.hpp"
#include "chaos2/error.hpp"
#include "chaos2/linalg.hpp"
#include "chaos2/rng.hpp"

namespace chaos2 {

/// 99th percentile of sqrt(n/2) * D for two independent size-n samples from
/// one continuous law. Frozen from calibrate_ks_quantile(400, 100000, 2718).
inline constexpr double kKsSameLawQuantile = 1.7195;

/// 99th percentile of the subsampled energy distance between two independent
/// standard Gaussian batches in R^k, k = 2, 3, 4, at kEnergySubsample rows.
/// Frozen from calibrate_energy_quantile(k, 200, kEnergySubsample, 3141).
inline constexpr double kEnergySameLaw[] = {0.0, 0.0, 0.0063544, 0.0069958, 0.0060127};

/// Same-law KS threshold for batch sizes n and m.
[[nodiscard]] inline double ks_same_law_threshold(long long n, long long m) {
    return kKsSameLawQuantile * std::sqrt(static_cast<double>(n + m) / (static_cast<double>(n) * static_cast<double>(m)));
}

[[nodiscard]] inline double ks_same_law_threshold(long long n) { return ks_same_law_threshold(n, n); }

namespace detail {

inline double upper_quantile(std::vector<double> v, double p) {
    std::sort(v.begin(), v.end());
    const auto idx = static_cast<std::size_t>(std::ceil(p * static_cast<double>(v.size()))) - 1;
    return v[std::min(idx, v.size() - 1)];
}

}  // namespace detail

/// Monte Carlo estimate of the 99th percentile of sqrt(n/2) * D_{n,n} under
/// the null; KS is distribution-free, so Gaussians stand in for any law.
[[nodiscard]] inline double calibrate_ks_quantile(int reps, long long n, std::uint64_t seed, double p = 0.99) {
    if (reps < 1 || n < 1) throw Error(ErrorKind::PreconditionViolated, "calibration needs reps, n >= 1");
    std::vector<double> stats;
    std::vector<double> a(static_cast<std::size_t>(n)), b(static_cast<std::size_t>(n));
    for (int r = 0; r < reps; ++r) {
        CounterRng ra(seed, 2 * static_cast<std::uint64_t>(r)), rb(seed, 2 * static_cast<std::uint64_t>(r) + 1);
        for (auto& x : a) x = ra.normal();
        for (auto& x : b) x = rb.normal();
        stats.push_back(ks_statistic(a, b) * std::sqrt(static_cast<double>(n) / 2.0));
    }
    return detail::upper_quantile(stats, p);
}

[[nodiscard]] inline double calibrate_energy_quantile(int k, int reps, Eigen::Index rows, std::uint64_t seed, double p = 0.99) {
    if (k < 1 || reps < 1 || rows < 1) throw Error(ErrorKind::PreconditionViolated, "calibration needs k, reps, rows >= 1");
    std::vector<double> stats;
    for (int r = 0; r < reps; ++r) {
        CounterRng ra(seed, 2 * static_cast<std::uint64_t>(r)), rb(seed, 2 * static_cast<std::uint64_t>(r) + 1);
        Matrix a(rows, k), b(rows, k);
        for (Eigen::Index i = 0; i < rows; ++i)
            for (int j = 0; j < k; ++j) {
                a(i, j) = ra.normal();
                b(i, j) = rb.normal();
            }
        stats.push_back(energy_distance(a, b, rows));
    }
    return detail::upper_quantile(stats, p);
}

/// Same-law threshold of empirical_distance for width k and batch sizes n, m.
/// Widths without a frozen energy constant are calibrated on the spot.
[[nodiscard]] inline double same_law_threshold(int k, long long n, long long m) {
    if (k == 1) return ks_same_law_threshold(n, m);
    const auto rows = static_cast<Eigen::Index>(std::min<long long>({n, m, kEnergySubsample}));
    if (k <= 4 && rows == kEnergySubsample) return kEnergySameLaw[k];
    return calibrate_energy_quantile(k, 100, rows, 3141);
}

}  // namespace chaos2
