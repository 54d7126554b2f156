#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>

#include "chaos2/degeneracy.hpp"
#include "chaos2/error.hpp"
#include "chaos2/io.hpp"
#include "chaos2/linalg.hpp"
#include "chaos2/rng.hpp"

namespace chaos2 {

using BigInt = boost::multiprecision::cpp_int;
using Rational = boost::multiprecision::cpp_rational;
using IntMatrix = Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic>;

/// k integer d x k matrices, d = k(k-1)/2, with column j of A_i equal to
/// minus column i of A_j. Then sum_i x_i A_i x = 0 for every x.
struct AntisymmetricFamily {
    int k = 0;
    int d = 0;
    std::vector<IntMatrix> matrices;

    [[nodiscard]] OperatorFamily to_operators() const {
        std::vector<Matrix> ops;
        for (const auto& m : matrices) ops.push_back(m.cast<double>());
        return OperatorFamily(std::move(ops));
    }
};

namespace detail {

class FamilyBuilder {
public:
    FamilyBuilder(int k, int d) : k_(k), d_(d), mats_(static_cast<std::size_t>(k), IntMatrix::Zero(d, k)),
                                  set_(static_cast<std::size_t>(k * k), false) {}

    // 1-based matrix, column and basis-vector indices.
    void place(int i, int col, int basis, int sign) {
        IntMatrix column = IntMatrix::Zero(d_, 1);
        column(basis - 1, 0) = sign;
        assign(i, col, column);
    }

    void assign(int i, int col, const IntMatrix& column) {
        auto& m = mats_[static_cast<std::size_t>(i - 1)];
        if (is_set(i, col)) {
            if (m.col(col - 1) != column.col(0))
                throw Error(ErrorKind::Internal, "conflicting entries for column " + std::to_string(col) + " of A_" +
                                                     std::to_string(i));
            return;
        }
        m.col(col - 1) = column.col(0);
        set_[index(i, col)] = true;
    }

    // Odd-size block on matrices/columns 1..n: A_i^j = e_{(i-1)m + j - i} for
    // j = i+1..i+m, with only the column label reduced mod n.
    void odd_block(int n) {
        const int m = (n - 1) / 2;
        for (int i = 1; i <= n; ++i)
            for (int j = i + 1; j <= i + m; ++j) place(i, (j - 1) % n + 1, (i - 1) * m + j - i, 1);
    }

    AntisymmetricFamily finish() {
        for (int i = 1; i <= k_; ++i) set_[index(i, i)] = true;
        for (int i = 1; i <= k_; ++i)
            for (int j = 1; j <= k_; ++j) {
                if (i == j || !is_set(i, j)) continue;
                const IntMatrix neg = -mats_[static_cast<std::size_t>(i - 1)].col(j - 1);
                assign(j, i, neg);
            }
        for (int i = 1; i <= k_; ++i)
            for (int j = 1; j <= k_; ++j)
                if (!is_set(i, j))
                    throw Error(ErrorKind::Internal, "column " + std::to_string(j) + " of A_" + std::to_string(i) +
                                                         " is not determined by the construction");
        return {k_, d_, std::move(mats_)};
    }

private:
    [[nodiscard]] std::size_t index(int i, int col) const { return static_cast<std::size_t>((i - 1) * k_ + (col - 1)); }
    [[nodiscard]] bool is_set(int i, int col) const { return set_[index(i, col)]; }

    int k_, d_;
    std::vector<IntMatrix> mats_;
    std::vector<bool> set_;
};

}  // namespace detail

[[nodiscard]] inline AntisymmetricFamily build_family(int k) {
    if (k < 2) throw Error(ErrorKind::InvalidK, "the construction needs k >= 2, got " + std::to_string(k));
    if (k > 2000) throw Error(ErrorKind::InvalidK, "k = " + std::to_string(k) + " is unreasonably large");
    const int d = k * (k - 1) / 2;
    detail::FamilyBuilder b(k, d);
    if (k % 2 == 1) {
        b.odd_block(k);
    } else {
        b.odd_block(k - 1);
        for (int i = 1; i < k; ++i) b.place(i, k, d - (k - 1) + i, 1);
    }
    return b.finish();
}

/// Row l gives the k x k matrix (M_l)_{ij} = (A_i)_{l j}; the identity holds
/// for all x exactly when every M_l is antisymmetric.
[[nodiscard]] inline bool verify_identity(const AntisymmetricFamily& fam) {
    if (static_cast<int>(fam.matrices.size()) != fam.k) return false;
    for (const auto& m : fam.matrices)
        if (m.rows() != fam.d || m.cols() != fam.k) return false;
    for (int l = 0; l < fam.d; ++l)
        for (int i = 0; i < fam.k; ++i)
            for (int j = i; j < fam.k; ++j)
                if (fam.matrices[static_cast<std::size_t>(i)](l, j) + fam.matrices[static_cast<std::size_t>(j)](l, i) != 0)
                    return false;
    return true;
}

/// Exact rank by fraction-free (Bareiss) elimination.
[[nodiscard]] inline int exact_rank(std::vector<std::vector<BigInt>> a) {
    const std::size_t rows = a.size();
    if (rows == 0) return 0;
    const std::size_t cols = a.front().size();
    BigInt prev = 1;
    std::size_t r = 0;
    for (std::size_t c = 0; c < cols && r < rows; ++c) {
        std::size_t piv = r;
        while (piv < rows && a[piv][c] == 0) ++piv;
        if (piv == rows) continue;
        std::swap(a[piv], a[r]);
        for (std::size_t i = r + 1; i < rows; ++i) {
            for (std::size_t j = c + 1; j < cols; ++j) a[i][j] = (a[r][c] * a[i][j] - a[i][c] * a[r][j]) / prev;
            a[i][c] = 0;
        }
        prev = a[r][c];
        ++r;
    }
    return static_cast<int>(r);
}

[[nodiscard]] inline int rank_of_combination(const AntisymmetricFamily& fam, const std::vector<Rational>& coeffs) {
    if (static_cast<int>(coeffs.size()) != fam.k)
        throw Error(ErrorKind::DimensionMismatch, "need " + std::to_string(fam.k) + " coefficients");
    if (std::all_of(coeffs.begin(), coeffs.end(), [](const Rational& c) { return c == 0; }))
        throw Error(ErrorKind::ZeroCoefficients, "all coefficients are zero");
    // Scaling by the common denominator leaves the rank unchanged.
    BigInt lcm = 1;
    for (const auto& c : coeffs) lcm = boost::multiprecision::lcm(lcm, boost::multiprecision::denominator(c));
    std::vector<BigInt> ints;
    for (const auto& c : coeffs) ints.push_back(boost::multiprecision::numerator(c) * (lcm / boost::multiprecision::denominator(c)));
    std::vector<std::vector<BigInt>> m(static_cast<std::size_t>(fam.d), std::vector<BigInt>(static_cast<std::size_t>(fam.k)));
    for (int i = 0; i < fam.k; ++i)
        for (int r = 0; r < fam.d; ++r)
            for (int c = 0; c < fam.k; ++c) {
                const int e = fam.matrices[static_cast<std::size_t>(i)](r, c);
                if (e != 0) m[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)] += ints[static_cast<std::size_t>(i)] * e;
            }
    return exact_rank(std::move(m));
}

[[nodiscard]] inline int rank_of_combination(const AntisymmetricFamily& fam, const std::vector<long long>& coeffs) {
    std::vector<Rational> r(coeffs.begin(), coeffs.end());
    return rank_of_combination(fam, r);
}

struct RankSearch {
    int min_rank = 0;
    std::vector<int> ranks;
    std::vector<std::vector<long long>> coefficients;
};

/// Ranks of random integer combinations with entries in [-9, 9], zero vector excluded.
[[nodiscard]] inline RankSearch rank_trials(const AntisymmetricFamily& fam, int trials, std::uint64_t seed) {
    if (trials < 1) throw Error(ErrorKind::PreconditionViolated, "need at least one trial");
    RankSearch out;
    out.min_rank = fam.k;
    for (int t = 0; t < trials; ++t) {
        CounterRng rng(seed, static_cast<std::uint64_t>(t));
        std::vector<long long> c(static_cast<std::size_t>(fam.k));
        do {
            for (auto& v : c) v = rng.uniform_int(-9, 9);
        } while (std::all_of(c.begin(), c.end(), [](long long v) { return v == 0; }));
        const int r = rank_of_combination(fam, c);
        out.min_rank = std::min(out.min_rank, r);
        out.ranks.push_back(r);
        out.coefficients.push_back(std::move(c));
    }
    return out;
}

[[nodiscard]] inline int min_rank_search(const AntisymmetricFamily& fam, int trials, std::uint64_t seed) {
    return rank_trials(fam, trials, seed).min_rank;
}

[[nodiscard]] inline Json family_to_json(const AntisymmetricFamily& fam) {
    Json mats = Json::array();
    for (const auto& m : fam.matrices) {
        Json rows = Json::array();
        for (Eigen::Index r = 0; r < m.rows(); ++r) {
            Json row = Json::array();
            for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
            rows.push_back(std::move(row));
        }
        mats.push_back(std::move(rows));
    }
    return Json{{"k", fam.k}, {"d", fam.d}, {"matrices", mats}};
}

[[nodiscard]] inline AntisymmetricFamily family_from_json(const Json& j) {
    if (!j.is_object() || !j.contains("k") || !j.contains("matrices"))
        throw Error(ErrorKind::InputParse, "family: expected {\"k\", \"d\", \"matrices\"}");
    AntisymmetricFamily fam;
    fam.k = j.at("k").get<int>();
    fam.d = j.contains("d") ? j.at("d").get<int>() : fam.k * (fam.k - 1) / 2;
    if (fam.k < 2) throw Error(ErrorKind::InvalidK, "family: k must be at least 2");
    const auto& mats = j.at("matrices");
    if (!mats.is_array() || static_cast<int>(mats.size()) != fam.k)
        throw Error(ErrorKind::DimensionMismatch, "family: expected k matrices");
    for (const auto& mj : mats) {
        if (!mj.is_array() || static_cast<int>(mj.size()) != fam.d)
            throw Error(ErrorKind::DimensionMismatch, "family: each matrix needs d rows");
        IntMatrix m(fam.d, fam.k);
        for (int r = 0; r < fam.d; ++r) {
            const auto& row = mj[static_cast<std::size_t>(r)];
            if (!row.is_array() || static_cast<int>(row.size()) != fam.k)
                throw Error(ErrorKind::DimensionMismatch, "family: each row needs k entries");
            for (int c = 0; c < fam.k; ++c) {
                if (!row[static_cast<std::size_t>(c)].is_number_integer())
                    throw Error(ErrorKind::InputParse, "family: entries must be integers");
                m(r, c) = row[static_cast<std::size_t>(c)].get<int>();
            }
        }
        fam.matrices.push_back(std::move(m));
    }
    return fam;
}

}  // namespace chaos2
