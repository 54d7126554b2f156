#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "chaos2/error.hpp"

namespace chaos2 {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

[[nodiscard]] inline double max_abs(const Matrix& a) { return a.size() == 0 ? 0.0 : a.cwiseAbs().maxCoeff(); }

[[nodiscard]] inline double asymmetry(const Matrix& a) { return max_abs(a - a.transpose()); }

struct EigenPair {
    double value = 0.0;
    Vector vector;
};

struct JacobiOptions {
    int max_sweeps = 100;
    double off_tolerance = 1e-12;  // relative to the Frobenius norm
};

namespace detail {

inline double off_diagonal_norm(const Matrix& a) {
    double s = 0.0;
    for (Eigen::Index j = 0; j < a.cols(); ++j)
        for (Eigen::Index i = 0; i < a.rows(); ++i)
            if (i != j) s += a(i, j) * a(i, j);
    return std::sqrt(s);
}

// Flip so the first coordinate above 1e-10 in magnitude is positive.
inline void fix_sign(Vector& v) {
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        if (std::abs(v(i)) > 1e-10) {
            if (v(i) < 0) v = -v;
            return;
        }
    }
}

inline bool lexicographically_less(const Vector& a, const Vector& b) {
    for (Eigen::Index i = 0; i < a.size(); ++i) {
        if (a(i) < b(i)) return true;
        if (a(i) > b(i)) return false;
    }
    return false;
}

}  // namespace detail

/// Full eigendecomposition of a symmetric matrix by cyclic Jacobi sweeps.
///
/// Pairs are ordered by descending |lambda|, then descending lambda, then
/// lexicographically by eigenvector; every eigenvector has its first
/// coordinate above 1e-10 in magnitude made positive. Throws
/// ConvergenceFailure if the off-diagonal mass does not fall below
/// `off_tolerance * ||A||_F` within `max_sweeps`.
[[nodiscard]] inline std::vector<EigenPair> jacobi_eigen(const Matrix& input, const JacobiOptions& opts = {}) {
    const Eigen::Index n = input.rows();
    if (input.cols() != n) throw Error(ErrorKind::DimensionMismatch, "jacobi_eigen: matrix is not square");
    Matrix a = input;
    Matrix v = Matrix::Identity(n, n);
    const double target = opts.off_tolerance * input.norm();

    bool converged = false;
    for (int sweep = 0; sweep <= opts.max_sweeps; ++sweep) {
        if (detail::off_diagonal_norm(a) <= target) {
            converged = true;
            break;
        }
        if (sweep == opts.max_sweeps) break;
        for (Eigen::Index p = 0; p + 1 < n; ++p) {
            for (Eigen::Index q = p + 1; q < n; ++q) {
                const double apq = a(p, q);
                if (apq == 0.0) continue;
                const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
                const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                // A <- J^T A J with J the rotation in the (p, q) plane.
                for (Eigen::Index k = 0; k < n; ++k) {
                    const double akp = a(k, p);
                    const double akq = a(k, q);
                    a(k, p) = c * akp - s * akq;
                    a(k, q) = s * akp + c * akq;
                }
                for (Eigen::Index k = 0; k < n; ++k) {
                    const double apk = a(p, k);
                    const double aqk = a(q, k);
                    a(p, k) = c * apk - s * aqk;
                    a(q, k) = s * apk + c * aqk;
                }
                a(p, q) = 0.0;
                a(q, p) = 0.0;
                for (Eigen::Index k = 0; k < n; ++k) {
                    const double vkp = v(k, p);
                    const double vkq = v(k, q);
                    v(k, p) = c * vkp - s * vkq;
                    v(k, q) = s * vkp + c * vkq;
                }
            }
        }
    }
    if (!converged) {
        throw Error(ErrorKind::ConvergenceFailure,
                    "Jacobi sweeps exhausted after " + std::to_string(opts.max_sweeps) + " sweeps");
    }

    std::vector<EigenPair> pairs(static_cast<std::size_t>(n));
    for (Eigen::Index j = 0; j < n; ++j) {
        pairs[static_cast<std::size_t>(j)].value = a(j, j);
        pairs[static_cast<std::size_t>(j)].vector = v.col(j);
        detail::fix_sign(pairs[static_cast<std::size_t>(j)].vector);
    }
    std::sort(pairs.begin(), pairs.end(), [](const EigenPair& x, const EigenPair& y) {
        const double ax = std::abs(x.value);
        const double ay = std::abs(y.value);
        if (ax != ay) return ax > ay;
        if (x.value != y.value) return x.value > y.value;
        return detail::lexicographically_less(x.vector, y.vector);
    });
    return pairs;
}

/// Singular values in descending order.
[[nodiscard]] inline Vector singular_values(const Matrix& m) {
    if (m.size() == 0) return Vector();
    Eigen::JacobiSVD<Matrix> svd(m);
    return svd.singularValues();
}

/// Number of singular values above `rel * scale`; `scale` defaults to the
/// largest singular value. An all-zero matrix has rank 0.
[[nodiscard]] inline int numerical_rank(const Vector& sv, double rel, double scale = -1.0) {
    if (sv.size() == 0) return 0;
    const double ref = scale >= 0 ? scale : sv(0);
    if (ref <= 0.0) return 0;
    int r = 0;
    for (Eigen::Index i = 0; i < sv.size(); ++i)
        if (sv(i) > rel * ref) ++r;
    return r;
}

/// Eigenvalues of a small symmetric matrix, ascending (Eigen's solver; used
/// for Gram matrices where the canonical ordering is irrelevant).
[[nodiscard]] inline Vector symmetric_eigenvalues(const Matrix& g) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(g, Eigen::EigenvaluesOnly);
    return es.eigenvalues();
}

}  // namespace chaos2
