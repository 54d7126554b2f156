#pragma once

#include <atomic>
#include <cstdint>
#include <memory>
#include <mutex>
#include <string>
#include <utility>
#include <vector>

#include "chaos2/error.hpp"
#include "chaos2/linalg.hpp"
#include "chaos2/parallel.hpp"
#include "chaos2/rng.hpp"

namespace chaos2 {

/// Relative tolerance below which an input matrix is silently symmetrized.
inline constexpr double kSymmetrizeTolerance = 1e-8;

/// One element of the second Wiener chaos over a d-dimensional standard
/// Gaussian: f(x) = x^T A x - tr A with A symmetric. The spectrum is computed
/// on first request and shared (immutably) between copies.
class ChaosElement {
public:
    ChaosElement() = default;

    /// Accepts A when max|A_ij - A_ji| <= 1e-8 * max(1, max|A_ij|) and stores
    /// (A + A^T) / 2; otherwise throws NotSymmetric.
    static ChaosElement from_matrix(const Matrix& a) {
        if (a.rows() != a.cols() || a.rows() == 0)
            throw Error(ErrorKind::DimensionMismatch, "chaos element needs a non-empty square matrix");
        const double skew = asymmetry(a);
        if (skew > kSymmetrizeTolerance * std::max(1.0, max_abs(a)))
            throw Error(ErrorKind::NotSymmetric, "max |A_ij - A_ji| = " + std::to_string(skew));
        ChaosElement f;
        f.a_ = 0.5 * (a + a.transpose());
        f.trace_ = f.a_.trace();
        return f;
    }

    [[nodiscard]] int dim() const noexcept { return static_cast<int>(a_.rows()); }
    [[nodiscard]] const Matrix& matrix() const noexcept { return a_; }
    [[nodiscard]] double trace() const noexcept { return trace_; }

    [[nodiscard]] bool spectrum_cached() const noexcept { return cache_->ready; }

    /// Canonically ordered eigenpairs (see jacobi_eigen); computed once.
    [[nodiscard]] const std::vector<EigenPair>& spectrum() const {
        std::call_once(cache_->once, [this] {
            cache_->pairs = jacobi_eigen(a_);
            cache_->ready = true;
        });
        return cache_->pairs;
    }

    [[nodiscard]] double evaluate(const Vector& x) const {
        check_dim(x);
        return x.dot(a_ * x) - trace_;
    }

    /// Malliavin gradient 2 A x.
    [[nodiscard]] Vector gradient(const Vector& x) const {
        check_dim(x);
        return 2.0 * (a_ * x);
    }

    /// Var f = 2 tr(A^2).
    [[nodiscard]] double variance() const { return 2.0 * a_.squaredNorm(); }

    /// kappa_4(f) = 48 sum lambda_j^4 = 48 ||A^2||_F^2.
    [[nodiscard]] double fourth_cumulant() const { return 48.0 * (a_ * a_).squaredNorm(); }

private:
    struct SpectrumCache {
        std::once_flag once;
        std::vector<EigenPair> pairs;
        std::atomic<bool> ready{false};
    };

    void check_dim(const Vector& x) const {
        if (x.size() != a_.rows())
            throw Error(ErrorKind::DimensionMismatch,
                        "point has length " + std::to_string(x.size()) + ", element has dim " + std::to_string(dim()));
    }

    Matrix a_;
    double trace_ = 0.0;
    std::shared_ptr<SpectrumCache> cache_ = std::make_shared<SpectrumCache>();
};

/// k chaos elements over one shared Gaussian space.
class ChaosVector {
public:
    ChaosVector() = default;

    explicit ChaosVector(std::vector<ChaosElement> elements) : elements_(std::move(elements)) {
        if (elements_.empty()) throw Error(ErrorKind::DimensionMismatch, "chaos vector needs at least one element");
        for (const auto& f : elements_)
            if (f.dim() != elements_.front().dim())
                throw Error(ErrorKind::DimensionMismatch, "chaos vector elements must share one dimension");
    }

    static ChaosVector from_matrices(const std::vector<Matrix>& mats) {
        std::vector<ChaosElement> elems;
        elems.reserve(mats.size());
        for (const auto& m : mats) elems.push_back(ChaosElement::from_matrix(m));
        return ChaosVector(std::move(elems));
    }

    [[nodiscard]] int dim() const noexcept { return elements_.empty() ? 0 : elements_.front().dim(); }
    [[nodiscard]] int size() const noexcept { return static_cast<int>(elements_.size()); }
    [[nodiscard]] const ChaosElement& operator[](int i) const { return elements_.at(static_cast<std::size_t>(i)); }
    [[nodiscard]] const std::vector<ChaosElement>& elements() const noexcept { return elements_; }

    [[nodiscard]] std::vector<Matrix> matrices() const {
        std::vector<Matrix> out;
        out.reserve(elements_.size());
        for (const auto& f : elements_) out.push_back(f.matrix());
        return out;
    }

    [[nodiscard]] Vector evaluate(const Vector& x) const {
        Vector out(size());
        for (int i = 0; i < size(); ++i) out(i) = elements_[static_cast<std::size_t>(i)].evaluate(x);
        return out;
    }

private:
    std::vector<ChaosElement> elements_;
};

/// N draws of a k-dimensional random vector, one row per draw.
struct SampleBatch {
    int k = 0;
    long long count = 0;
    Matrix values;  // count x k
    std::uint64_t seed = 0;
    std::string meta;
};

inline constexpr const char* kChaosSamplerId = "chaos2.sample/philox4x32-10/box-muller/v1";

// Free-function surface mirroring the operation names used across the tools.

[[nodiscard]] inline ChaosElement from_matrix(const Matrix& a) { return ChaosElement::from_matrix(a); }
[[nodiscard]] inline std::vector<EigenPair> diagonalize(const ChaosElement& f) { return f.spectrum(); }
[[nodiscard]] inline double evaluate(const ChaosElement& f, const Vector& x) { return f.evaluate(x); }
[[nodiscard]] inline Vector gradient(const ChaosElement& f, const Vector& x) { return f.gradient(x); }
[[nodiscard]] inline double fourth_cumulant(const ChaosElement& f) { return f.fourth_cumulant(); }

/// 48 sum_j lambda_j^4 straight from a coefficient list, for diagonal forms too large to store densely.
[[nodiscard]] inline double fourth_cumulant(const std::vector<double>& spectrum) {
    double s = 0.0;
    for (double l : spectrum) s += l * l * l * l;
    return 48.0 * s;
}

/// Fills `x` with the Gaussian point of sample row `row`.
inline void gaussian_point(std::uint64_t seed, std::uint64_t row, Vector& x) {
    CounterRng rng(seed, row);
    for (Eigen::Index j = 0; j < x.size(); ++j) x(j) = rng.normal();
}

/// N i.i.d. rows (f_1(x), ..., f_k(x)) with x standard Gaussian; row r uses
/// stream r of `seed`, so the batch does not depend on the thread count.
[[nodiscard]] inline SampleBatch sample(const ChaosVector& v, std::uint64_t seed, long long n) {
    if (n < 1) throw Error(ErrorKind::PreconditionViolated, "sample count must be >= 1");
    SampleBatch batch;
    batch.k = v.size();
    batch.count = n;
    batch.seed = seed;
    batch.meta = kChaosSamplerId;
    batch.values.resize(n, v.size());
    const auto mats = v.matrices();
    std::vector<double> traces;
    for (const auto& f : v.elements()) traces.push_back(f.trace());
    const int d = v.dim();
    parallel_for(static_cast<std::size_t>(n), 4096, [&](std::size_t begin, std::size_t end) {
        Vector x(d);
        for (std::size_t r = begin; r < end; ++r) {
            gaussian_point(seed, r, x);
            for (std::size_t i = 0; i < mats.size(); ++i)
                batch.values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(i)) =
                    x.dot(mats[i] * x) - traces[i];
        }
    });
    return batch;
}

/// Closed-form covariance: Cov(f_i, f_j) = 2 tr(A_i A_j).
[[nodiscard]] inline Matrix covariance(const ChaosVector& v) {
    const int k = v.size();
    Matrix c(k, k);
    for (int i = 0; i < k; ++i)
        for (int j = i; j < k; ++j) {
            const double val = 2.0 * (v[i].matrix().cwiseProduct(v[j].matrix())).sum();
            c(i, j) = val;
            c(j, i) = val;
        }
    return c;
}

}  // namespace chaos2
