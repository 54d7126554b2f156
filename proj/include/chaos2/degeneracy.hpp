#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "chaos2/chaos.hpp"
#include "chaos2/error.hpp"
#include "chaos2/linalg.hpp"
#include "chaos2/rng.hpp"

namespace chaos2 {

/// Threshold used for every numerical-rank decision: sigma_i / sigma_1 <= 1e-8.
inline constexpr double kRankTolerance = 1e-8;

/// Ordered tuple of equally-shaped real matrices A_1..A_k acting on R^cols.
class OperatorFamily {
public:
    OperatorFamily() = default;

    explicit OperatorFamily(std::vector<Matrix> ops) : ops_(std::move(ops)) {
        validate_shapes();
        for (const auto& m : ops_) symmetric_.push_back(is_symmetric(m));
    }

    /// Declared flags are checked against the entries; a matrix flagged
    /// symmetric that is not throws NotSymmetric.
    OperatorFamily(std::vector<Matrix> ops, const std::vector<bool>& symmetric_flags) : ops_(std::move(ops)) {
        validate_shapes();
        if (symmetric_flags.size() != ops_.size())
            throw Error(ErrorKind::DimensionMismatch, "one symmetric flag per operator is required");
        for (std::size_t i = 0; i < ops_.size(); ++i) {
            const bool actual = is_symmetric(ops_[i]);
            if (symmetric_flags[i] && !actual)
                throw Error(ErrorKind::NotSymmetric, "operator " + std::to_string(i + 1) + " is flagged symmetric");
            symmetric_.push_back(actual);
        }
    }

    static OperatorFamily from_vector(const ChaosVector& v) { return OperatorFamily(v.matrices()); }

    [[nodiscard]] int size() const noexcept { return static_cast<int>(ops_.size()); }
    [[nodiscard]] Eigen::Index rows() const noexcept { return ops_.front().rows(); }
    [[nodiscard]] Eigen::Index cols() const noexcept { return ops_.front().cols(); }
    [[nodiscard]] const Matrix& operator[](int i) const { return ops_.at(static_cast<std::size_t>(i)); }
    [[nodiscard]] bool symmetric(int i) const { return symmetric_.at(static_cast<std::size_t>(i)); }
    [[nodiscard]] const std::vector<Matrix>& operators() const noexcept { return ops_; }

    [[nodiscard]] OperatorFamily prefix(int m) const {
        return OperatorFamily(std::vector<Matrix>(ops_.begin(), ops_.begin() + m));
    }

    /// sum_i c_i A_i
    [[nodiscard]] Matrix combination(const Vector& c) const {
        if (c.size() != size()) throw Error(ErrorKind::DimensionMismatch, "coefficient count differs from k");
        Matrix m = Matrix::Zero(rows(), cols());
        for (int i = 0; i < size(); ++i) m += c(i) * ops_[static_cast<std::size_t>(i)];
        return m;
    }

private:
    static bool is_symmetric(const Matrix& m) {
        return m.rows() == m.cols() && asymmetry(m) <= kSymmetrizeTolerance * std::max(1.0, max_abs(m));
    }

    void validate_shapes() const {
        if (ops_.empty()) throw Error(ErrorKind::DimensionMismatch, "operator family needs k >= 1");
        for (const auto& m : ops_)
            if (m.rows() != ops_.front().rows() || m.cols() != ops_.front().cols() || m.size() == 0)
                throw Error(ErrorKind::DimensionMismatch, "operators must share one non-empty shape");
    }

    std::vector<Matrix> ops_;
    std::vector<bool> symmetric_;
};

/// Are A_1 x, ..., A_k x linearly dependent?
///
/// Each image is normalised before the Gram matrix is formed, so the verdict
/// does not change when a single operator is rescaled. An image counts as zero
/// when ||A_i x|| <= tol * ||A_i||_F * ||x||. Otherwise the verdict is
/// lambda_min(G) <= tol * max(1, lambda_max(G)) for the normalised Gram G.
[[nodiscard]] inline bool dependent_at(const OperatorFamily& family, const Vector& x, double tol) {
    if (x.size() != family.cols())
        throw Error(ErrorKind::DimensionMismatch, "point length " + std::to_string(x.size()) +
                                                       " differs from operator width " +
                                                       std::to_string(family.cols()));
    if (!(tol > 0)) throw Error(ErrorKind::PreconditionViolated, "tolerance must be positive");
    const int k = family.size();
    if (k > family.rows()) return true;
    Matrix images(family.rows(), k);
    const double xnorm = x.norm();
    for (int i = 0; i < k; ++i) {
        Vector y = family[i] * x;
        const double ny = y.norm();
        if (ny <= tol * family[i].norm() * xnorm || ny == 0.0) return true;
        images.col(i) = y / ny;
    }
    const Matrix gram = images.transpose() * images;
    const Vector ev = symmetric_eigenvalues(gram);
    return ev(0) <= tol * std::max(1.0, ev(ev.size() - 1));
}

enum class Dependence { DependentAE, IndependentAE };

[[nodiscard]] constexpr const char* to_string(Dependence d) noexcept {
    return d == Dependence::DependentAE ? "DependentAE" : "IndependentAE";
}

struct DependenceVerdict {
    Dependence verdict = Dependence::IndependentAE;
    double dependent_fraction = 0.0;
    long long trials = 0;
    double tolerance = 0.0;
    double delta = 0.0;
};

struct AeOptions {
    long long trials = 1000;
    double tolerance = 1e-10;
    double delta = 0.01;
};

/// Zero-one law test: the dependence set of a polynomial condition has
/// Gaussian measure 0 or 1, so the fraction of dependent random points must
/// land within delta of one of them. Anything in between throws
/// AmbiguousNumerics.
[[nodiscard]] inline DependenceVerdict ae_dependent(const OperatorFamily& family, std::uint64_t seed,
                                                    const AeOptions& opts = {}) {
    if (opts.trials < 100) throw Error(ErrorKind::PreconditionViolated, "ae_dependent needs at least 100 trials");
    long long hits = 0;
    Vector x(family.cols());
    for (long long t = 0; t < opts.trials; ++t) {
        gaussian_point(seed, static_cast<std::uint64_t>(t), x);
        if (dependent_at(family, x, opts.tolerance)) ++hits;
    }
    DependenceVerdict v;
    v.trials = opts.trials;
    v.tolerance = opts.tolerance;
    v.delta = opts.delta;
    v.dependent_fraction = static_cast<double>(hits) / static_cast<double>(opts.trials);
    if (v.dependent_fraction >= 1.0 - opts.delta) {
        v.verdict = Dependence::DependentAE;
    } else if (v.dependent_fraction <= opts.delta) {
        v.verdict = Dependence::IndependentAE;
    } else {
        throw Error(ErrorKind::AmbiguousNumerics,
                    "dependent fraction " + std::to_string(v.dependent_fraction) + " lies strictly between " +
                        std::to_string(opts.delta) + " and " + std::to_string(1.0 - opts.delta));
    }
    return v;
}

[[nodiscard]] inline DependenceVerdict ae_dependent(const OperatorFamily& family, std::uint64_t seed,
                                                    long long trials, double tol) {
    AeOptions opts;
    opts.trials = trials;
    opts.tolerance = tol;
    return ae_dependent(family, seed, opts);
}

/// A_k = sum_i c_i A_i + D at the point `point`, with rank(D) <= k - 1.
struct Extraction {
    Vector c;
    Matrix D;
    int rank_D = 0;
    double sigma_ratio = 0.0;  // sigma_k(D) / sigma_1(D), 0 when D vanishes
    Vector point;
    int attempts = 0;
};

/// Builds the degenerate combination at a single well-conditioned Gaussian
/// point: least squares A_k x ~ sum c_i A_i x, then D := A_k - sum c_i A_i
/// and a numerical rank certificate on D.
[[nodiscard]] inline Extraction extract_combination(const OperatorFamily& family, std::uint64_t seed,
                                                    int max_retries = 32) {
    const int k = family.size();
    if (k < 2) throw Error(ErrorKind::PreconditionViolated, "extraction needs k >= 2 operators");
    const OperatorFamily head = family.prefix(k - 1);
    const auto sub = ae_dependent(head, derive_seed(seed, 1));
    if (sub.verdict != Dependence::IndependentAE)
        throw Error(ErrorKind::PreconditionViolated, "the first k-1 operators are not independent a.e.");

    double op_scale = 0.0;
    for (const auto& m : family.operators()) op_scale = std::max(op_scale, singular_values(m)(0));

    const std::uint64_t point_seed = derive_seed(seed, 2);
    Vector x(family.cols());
    for (int attempt = 0; attempt < max_retries; ++attempt) {
        gaussian_point(point_seed, static_cast<std::uint64_t>(attempt), x);
        Matrix b(family.rows(), k - 1);
        for (int i = 0; i < k - 1; ++i) b.col(i) = family[i] * x;
        const Vector ev = symmetric_eigenvalues(b.transpose() * b);
        if (!(ev(0) > 0) || ev(ev.size() - 1) / ev(0) > 1e8) continue;

        Extraction out;
        out.c = b.colPivHouseholderQr().solve(family[k - 1] * x);
        out.D = family[k - 1];
        for (int i = 0; i < k - 1; ++i) out.D -= out.c(i) * family[i];
        const Vector sv = singular_values(out.D);
        if (sv(0) <= 1e-12 * op_scale) {
            out.rank_D = 0;
            out.sigma_ratio = 0.0;
        } else {
            out.rank_D = numerical_rank(sv, kRankTolerance);
            out.sigma_ratio = (k - 1 < sv.size()) ? sv(k - 1) / sv(0) : 0.0;
        }
        out.point = x;
        out.attempts = attempt + 1;
        if (out.rank_D <= k - 1) return out;
    }
    throw Error(ErrorKind::RankCertificateFailed,
                "no point among " + std::to_string(max_retries) + " attempts gave rank(D) <= k-1");
}

struct PairReduction {
    double alpha = 0.0;
    double beta = 0.0;
    double residual = 0.0;  // ||alpha A1 + beta A2||_F
};

/// For a symmetric pair whose images are dependent a.e., the pair itself is
/// proportional: returns the unit (alpha, beta) minimising
/// ||alpha A1 + beta A2||_F, or throws NotDependent if that minimum exceeds
/// 1e-8 * max(||A1||_F, ||A2||_F).
[[nodiscard]] inline PairReduction symmetric_pair_reduce(const Matrix& a1, const Matrix& a2, std::uint64_t seed) {
    for (const Matrix* m : {&a1, &a2})
        if (m->rows() != m->cols() || asymmetry(*m) > kSymmetrizeTolerance * std::max(1.0, max_abs(*m)))
            throw Error(ErrorKind::NotSymmetric, "symmetric_pair_reduce expects symmetric matrices");
    if (a1.rows() != a2.rows()) throw Error(ErrorKind::DimensionMismatch, "pair matrices differ in size");

    Matrix stacked(a1.size(), 2);
    stacked.col(0) = a1.reshaped();
    stacked.col(1) = a2.reshaped();
    Eigen::JacobiSVD<Matrix> svd(stacked, Eigen::ComputeFullV);
    Vector ab = svd.matrixV().col(1);
    detail::fix_sign(ab);

    PairReduction out{ab(0), ab(1), (ab(0) * a1 + ab(1) * a2).norm()};
    const double bound = kRankTolerance * std::max(a1.norm(), a2.norm());
    if (out.residual > bound) {
        std::string note;
        try {
            const auto v = ae_dependent(OperatorFamily({a1, a2}), seed);
            note = v.verdict == Dependence::DependentAE ? " although images look dependent a.e. (numerics?)"
                                                        : "; images are independent a.e.";
        } catch (const Error& e) {
            note = std::string("; a.e. check failed: ") + e.what();
        }
        throw Error(ErrorKind::NotDependent, "min ||alpha A1 + beta A2||_F = " + std::to_string(out.residual) +
                                                 " exceeds " + std::to_string(bound) + note);
    }
    return out;
}

/// sum a_i F_i = sum b_j (<e_j, x>^2 - 1), certified by a rank <= k-1 combination.
struct DiagonalWitness {
    Vector a;
    Vector b;                        // length k-1, zero padded
    std::vector<Vector> directions;  // one per nonzero b_j
    double sigma_ratio = 0.0;        // sigma_k / sigma_1 of sum a_i A_i
    double identity_residual = 0.0;  // max over validation samples
    int restarts_used = 0;
};

struct WitnessOptions {
    int budget = 64;
    int max_iterations = 500;
    double success_ratio = kRankTolerance;
    int validation_samples = 1000;
};

namespace detail {

// Eigenpairs of a symmetric matrix ordered by descending |lambda|.
inline std::pair<Vector, Matrix> eig_by_magnitude(const Matrix& m) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(m);
    const Eigen::Index n = m.rows();
    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
    std::stable_sort(order.begin(), order.end(), [&](Eigen::Index p, Eigen::Index q) {
        return std::abs(es.eigenvalues()(p)) > std::abs(es.eigenvalues()(q));
    });
    Vector vals(n);
    Matrix vecs(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        vals(i) = es.eigenvalues()(order[static_cast<std::size_t>(i)]);
        vecs.col(i) = es.eigenvectors().col(order[static_cast<std::size_t>(i)]);
    }
    return {vals, vecs};
}

inline double kth_ratio(const Vector& vals, int k) {
    if (vals.size() < k) return 0.0;
    const double top = std::abs(vals(0));
    return top > 0 ? std::abs(vals(k - 1)) / top : 0.0;
}

inline void sign_normalize(Vector& a) {
    for (Eigen::Index i = 0; i < a.size(); ++i)
        if (std::abs(a(i)) > 1e-8) {
            if (a(i) < 0) a = -a;
            return;
        }
}

}  // namespace detail

/// Local search for a unit vector a making sum a_i A_i of rank <= k-1.
///
/// Each restart alternates between (1) the eigenspace P of the d-k+1
/// smallest-magnitude eigenvalues of M(a) = sum a_i A_i and (2) the a
/// minimising ||M(a) P||_F^2 / ||M(a)||_F^2, a generalised symmetric
/// eigenproblem in k variables. Both steps decrease the tail energy
/// sum_{j>=k} lambda_j^2 / sum_j lambda_j^2, so each restart is a descent on
/// the coefficient sphere. Throws NoWitnessFound when no restart reaches
/// sigma_k / sigma_1 <= success_ratio; that is not a proof of absolute
/// continuity.
[[nodiscard]] inline DiagonalWitness diagonal_witness(const ChaosVector& v, std::uint64_t seed,
                                                      const WitnessOptions& opts = {}) {
    const int k = v.size();
    const int d = v.dim();
    if (k < 2) throw Error(ErrorKind::PreconditionViolated, "witness search needs k >= 2");
    const auto mats = v.matrices();
    const OperatorFamily family(mats);

    Matrix gram(k, k);
    for (int i = 0; i < k; ++i)
        for (int l = 0; l < k; ++l) gram(i, l) = mats[static_cast<std::size_t>(i)].cwiseProduct(mats[static_cast<std::size_t>(l)]).sum();

    double op_scale = 0.0;
    for (const auto& m : mats) op_scale = std::max(op_scale, m.norm());

    auto finish = [&](Vector a, int restarts) -> DiagonalWitness {
        a.normalize();
        detail::sign_normalize(a);
        const Matrix m = family.combination(a);
        DiagonalWitness w;
        w.a = a;
        w.b = Vector::Zero(k - 1);
        w.restarts_used = restarts;
        const double top = singular_values(m)(0);
        if (top > 1e-12 * op_scale) {
            const auto pairs = jacobi_eigen(m);
            w.sigma_ratio = (static_cast<int>(pairs.size()) >= k) ? std::abs(pairs[static_cast<std::size_t>(k - 1)].value) / top : 0.0;
            int slot = 0;
            for (int j = 0; j < std::min<int>(k - 1, static_cast<int>(pairs.size())); ++j) {
                const auto& p = pairs[static_cast<std::size_t>(j)];
                if (std::abs(p.value) <= 1e-13 * top) continue;
                w.b(slot++) = p.value;
                w.directions.push_back(p.vector);
            }
        }
        // Pointwise identity on fresh Gaussian points.
        const std::uint64_t check_seed = derive_seed(seed, 4);
        const double tr = m.trace();
        Vector x(d);
        for (int s = 0; s < opts.validation_samples; ++s) {
            gaussian_point(check_seed, static_cast<std::uint64_t>(s), x);
            double rhs = 0.0;
            for (std::size_t j = 0; j < w.directions.size(); ++j) {
                const double eta = w.directions[j].dot(x);
                rhs += w.b(static_cast<Eigen::Index>(j)) * (eta * eta - 1.0);
            }
            w.identity_residual = std::max(w.identity_residual, std::abs(x.dot(m * x) - tr - rhs));
        }
        return w;
    };
    auto valid = [&](const DiagonalWitness& w) {
        return w.sigma_ratio <= opts.success_ratio && w.identity_residual <= 1e-9 * (1.0 + w.b.lpNorm<1>());
    };

    // Linearly dependent operators: some a gives M(a) = 0 outright.
    {
        Eigen::SelfAdjointEigenSolver<Matrix> es(gram);
        if (es.eigenvalues()(0) <= 1e-14 * es.eigenvalues()(k - 1)) {
            auto w = finish(es.eigenvectors().col(0), 0);
            w.b.setZero();
            w.directions.clear();
            if (valid(w)) return w;
        }
    }

    double best_ratio = std::numeric_limits<double>::infinity();
    const std::uint64_t start_seed = derive_seed(seed, 3);
    for (int restart = 0; restart < opts.budget; ++restart) {
        CounterRng rng(start_seed, static_cast<std::uint64_t>(restart));
        Vector a(k);
        for (int i = 0; i < k; ++i) a(i) = rng.normal();
        a.normalize();

        double ratio = 1.0;
        double prev_energy = std::numeric_limits<double>::infinity();
        for (int it = 0; it < opts.max_iterations; ++it) {
            const auto [vals, vecs] = detail::eig_by_magnitude(family.combination(a));
            ratio = detail::kth_ratio(vals, k);
            if (ratio <= 1e-15 || d < k) break;
            const double total = vals.squaredNorm();
            const double energy = vals.tail(d - k + 1).squaredNorm() / total;
            // Stalled above the success threshold: a local minimum.
            if (energy > prev_energy * (1.0 - 1e-6) && ratio > opts.success_ratio) break;
            prev_energy = energy;

            const Matrix tail = vecs.rightCols(d - k + 1);
            std::vector<Matrix> proj;
            proj.reserve(static_cast<std::size_t>(k));
            for (const auto& m : mats) proj.push_back(m * tail);
            Matrix s(k, k);
            for (int i = 0; i < k; ++i)
                for (int l = i; l < k; ++l) {
                    s(i, l) = proj[static_cast<std::size_t>(i)].cwiseProduct(proj[static_cast<std::size_t>(l)]).sum();
                    s(l, i) = s(i, l);
                }
            Eigen::GeneralizedSelfAdjointEigenSolver<Matrix> ges(s, gram);
            Vector next = ges.eigenvectors().col(0);
            if (!next.allFinite() || next.norm() == 0.0) break;
            a = next.normalized();
        }
        best_ratio = std::min(best_ratio, ratio);
        if (ratio <= opts.success_ratio) {
            auto w = finish(a, restart + 1);
            if (valid(w)) return w;
        }
    }
    throw Error(ErrorKind::NoWitnessFound, "best sigma_k/sigma_1 = " + std::to_string(best_ratio) + " after " +
                                               std::to_string(opts.budget) + " restarts");
}

}  // namespace chaos2
