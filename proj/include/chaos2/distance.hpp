#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "chaos2/error.hpp"
#include "chaos2/linalg.hpp"

namespace chaos2 {

/// Two-sample Kolmogorov-Smirnov statistic sup_x |F_a(x) - F_b(x)|.
[[nodiscard]] inline double ks_statistic(std::vector<double> a, std::vector<double> b) {
    if (a.empty() || b.empty()) throw Error(ErrorKind::EmptyBatch, "KS statistic needs two non-empty samples");
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
    std::size_t i = 0, j = 0;
    double d = 0.0;
    while (i < a.size() && j < b.size()) {
        const double x = std::min(a[i], b[j]);
        while (i < a.size() && a[i] == x) ++i;
        while (j < b.size() && b[j] == x) ++j;
        d = std::max(d, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
    }
    return d;
}

/// One-sample statistic against a continuous CDF.
[[nodiscard]] inline double ks_statistic(std::vector<double> a, const std::function<double(double)>& cdf) {
    if (a.empty()) throw Error(ErrorKind::EmptyBatch, "KS statistic needs a non-empty sample");
    std::sort(a.begin(), a.end());
    const double n = static_cast<double>(a.size());
    double d = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double f = cdf(a[i]);
        d = std::max({d, static_cast<double>(i + 1) / n - f, f - static_cast<double>(i) / n});
    }
    return d;
}

inline constexpr Eigen::Index kEnergySubsample = 2000;

namespace detail {

// Every stride-th row so that at most `cap` rows remain.
inline Matrix strided_rows(const Matrix& m, Eigen::Index cap) {
    if (m.rows() <= cap) return m;
    const Eigen::Index stride = (m.rows() + cap - 1) / cap;
    const Eigen::Index rows = (m.rows() + stride - 1) / stride;
    Matrix out(rows, m.cols());
    for (Eigen::Index r = 0; r < rows; ++r) out.row(r) = m.row(r * stride);
    return out;
}

inline double mean_pair_distance(const Matrix& x, const Matrix& y) {
    double s = 0.0;
    for (Eigen::Index i = 0; i < x.rows(); ++i)
        for (Eigen::Index j = 0; j < y.rows(); ++j) s += (x.row(i) - y.row(j)).norm();
    return s / (static_cast<double>(x.rows()) * static_cast<double>(y.rows()));
}

}  // namespace detail

/// V-statistic energy distance 2E|X-Y| - E|X-X'| - E|Y-Y'| on deterministic
/// strided subsamples of at most `cap` rows each.
[[nodiscard]] inline double energy_distance(const Matrix& a, const Matrix& b, Eigen::Index cap = kEnergySubsample) {
    if (a.rows() == 0 || b.rows() == 0) throw Error(ErrorKind::EmptyBatch, "energy distance needs two non-empty samples");
    if (a.cols() != b.cols()) throw Error(ErrorKind::DimensionMismatch, "samples differ in dimension");
    const Matrix x = detail::strided_rows(a, cap);
    const Matrix y = detail::strided_rows(b, cap);
    const double e = 2 * detail::mean_pair_distance(x, y) - detail::mean_pair_distance(x, x) - detail::mean_pair_distance(y, y);
    return std::max(e, 0.0);
}

/// KS for one column, energy distance for several.
[[nodiscard]] inline double empirical_distance(const Matrix& a, const Matrix& b) {
    if (a.rows() == 0 || b.rows() == 0) throw Error(ErrorKind::EmptyBatch, "empirical distance needs non-empty batches");
    if (a.cols() != b.cols()) throw Error(ErrorKind::DimensionMismatch, "batches differ in k");
    if (a.cols() == 1)
        return ks_statistic(std::vector<double>(a.data(), a.data() + a.rows()),
                            std::vector<double>(b.data(), b.data() + b.rows()));
    return energy_distance(a, b);
}

}  // namespace chaos2
