#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "chaos2/chaos.hpp"
#include "chaos2/error.hpp"
#include "chaos2/io.hpp"
#include "chaos2/linalg.hpp"
#include "chaos2/rng.hpp"

namespace chaos2 {

using Exponents = std::vector<int>;

inline constexpr std::size_t kDefaultBasisCap = 5000;

/// C(k + degree, degree), saturating at SIZE_MAX.
[[nodiscard]] inline std::size_t basis_size(int k, int degree) {
    long double r = 1;
    for (int i = 1; i <= degree; ++i) r = r * (k + i) / i;
    return r > static_cast<long double>(SIZE_MAX) ? SIZE_MAX : static_cast<std::size_t>(std::llround(r));
}

/// Graded lexicographic: constant first, then by total degree, and within a
/// degree in descending lexicographic order (x1 before x2).
[[nodiscard]] inline std::vector<Exponents> monomial_basis(int k, int degree, std::size_t cap = kDefaultBasisCap) {
    if (k < 1) throw Error(ErrorKind::InvalidK, "monomial basis needs k >= 1");
    if (degree < 0) throw Error(ErrorKind::PreconditionViolated, "degree must be non-negative");
    const std::size_t count = basis_size(k, degree);
    if (count > cap)
        throw Error(ErrorKind::BasisTooLarge, std::to_string(count) + " monomials exceed the cap of " + std::to_string(cap));
    std::vector<Exponents> out;
    out.reserve(count);
    Exponents e(static_cast<std::size_t>(k), 0);
    // Emit all exponent vectors of total degree `left` over positions pos..k-1.
    std::function<void(std::size_t, int)> rec = [&](std::size_t pos, int left) {
        if (pos + 1 == e.size()) {
            e[pos] = left;
            out.push_back(e);
            return;
        }
        for (int p = left; p >= 0; --p) {
            e[pos] = p;
            rec(pos + 1, left - p);
        }
        e[pos] = 0;
    };
    for (int t = 0; t <= degree; ++t) rec(0, t);
    return out;
}

struct Term {
    Exponents exponents;
    double coeff = 0.0;
};

class Polynomial {
public:
    Polynomial() = default;

    /// Drops zero terms, rescales to unit norm and makes the largest
    /// coefficient positive (ties go to the earliest term).
    Polynomial(int k, std::vector<Term> terms) : k_(k) {
        for (auto& t : terms) {
            if (static_cast<int>(t.exponents.size()) != k)
                throw Error(ErrorKind::DimensionMismatch, "exponent vector length differs from k");
            if (t.coeff != 0.0) terms_.push_back(std::move(t));
        }
        if (terms_.empty()) throw Error(ErrorKind::ZeroCoefficients, "polynomial has no nonzero terms");
        double norm = 0.0, biggest = 0.0;
        for (const auto& t : terms_) {
            norm += t.coeff * t.coeff;
            biggest = std::max(biggest, std::abs(t.coeff));
        }
        norm = std::sqrt(norm);
        double lead = 0.0;
        for (const auto& t : terms_)
            if (std::abs(t.coeff) >= biggest * (1 - 1e-9)) {
                lead = t.coeff;
                break;
            }
        const double s = (lead < 0 ? -1.0 : 1.0) / norm;
        for (auto& t : terms_) t.coeff *= s;
        for (const auto& t : terms_) degree_ = std::max(degree_, total_degree(t.exponents));
    }

    [[nodiscard]] int k() const noexcept { return k_; }
    [[nodiscard]] int degree() const noexcept { return degree_; }
    [[nodiscard]] const std::vector<Term>& terms() const noexcept { return terms_; }

    [[nodiscard]] double evaluate(const Eigen::Ref<const Eigen::RowVectorXd>& f) const {
        double s = 0.0;
        for (const auto& t : terms_) s += t.coeff * monomial(t.exponents, f);
        return s;
    }

    /// sum_t |c_t m_t(f)|, the size of the cancelling terms.
    [[nodiscard]] double term_scale(const Eigen::Ref<const Eigen::RowVectorXd>& f) const {
        double s = 0.0;
        for (const auto& t : terms_) s += std::abs(t.coeff * monomial(t.exponents, f));
        return s;
    }

    /// Human-readable expansion, highest degree first, e.g. "0.447*F3^2 - 0.447*F1*F2 - ...".
    [[nodiscard]] std::string to_string(int precision = 6) const {
        std::vector<const Term*> order;
        for (const auto& t : terms_) order.push_back(&t);
        std::stable_sort(order.begin(), order.end(), [](const Term* a, const Term* b) {
            return total_degree(a->exponents) > total_degree(b->exponents);
        });
        std::string out;
        for (const Term* t : order) {
            const double c = t->coeff;
            out += out.empty() ? (c < 0 ? "-" : "") : (c < 0 ? " - " : " + ");
            char buf[40];
            std::snprintf(buf, sizeof buf, "%.*g", precision, std::abs(c));
            out += buf;
            for (std::size_t i = 0; i < t->exponents.size(); ++i) {
                if (t->exponents[i] == 0) continue;
                out += "*F" + std::to_string(i + 1);
                if (t->exponents[i] > 1) out += "^" + std::to_string(t->exponents[i]);
            }
        }
        return out;
    }

    [[nodiscard]] Json to_json() const {
        Json a = Json::array();
        for (const auto& t : terms_) a.push_back(Json{{"exponents", t.exponents}, {"coeff", t.coeff}});
        return a;
    }

    static Polynomial from_json(const Json& j) {
        if (!j.is_array() || j.empty()) throw Error(ErrorKind::InputParse, "polynomial: expected a non-empty array of terms");
        std::vector<Term> terms;
        for (const auto& t : j) {
            if (!t.is_object() || !t.contains("exponents") || !t.contains("coeff"))
                throw Error(ErrorKind::InputParse, "polynomial term needs \"exponents\" and \"coeff\"");
            terms.push_back({t.at("exponents").get<Exponents>(), t.at("coeff").get<double>()});
        }
        const int k = static_cast<int>(terms.front().exponents.size());
        return Polynomial(k, std::move(terms));
    }

    static int total_degree(const Exponents& e) {
        int s = 0;
        for (int p : e) s += p;
        return s;
    }

    static double monomial(const Exponents& e, const Eigen::Ref<const Eigen::RowVectorXd>& f) {
        double m = 1.0;
        for (std::size_t i = 0; i < e.size(); ++i)
            for (int p = 0; p < e[i]; ++p) m *= f(static_cast<Eigen::Index>(i));
        return m;
    }

private:
    int k_ = 0;
    int degree_ = 0;
    std::vector<Term> terms_;
};

/// Residual of `p` on a batch: max |P(F)| / max sum_t |c_t m_t(F)|.
[[nodiscard]] inline double relative_residual(const Polynomial& p, const Matrix& values) {
    double worst = 0.0, scale = 0.0;
    for (Eigen::Index r = 0; r < values.rows(); ++r) {
        worst = std::max(worst, std::abs(p.evaluate(values.row(r))));
        scale = std::max(scale, p.term_scale(values.row(r)));
    }
    return scale > 0 ? worst / scale : worst;
}

struct RelationReport {
    bool found = false;
    std::optional<Polynomial> polynomial;
    std::vector<Polynomial> others;  // further validated relations at the same degree
    double training_sigma_ratio = 1.0;
    double holdout_residual = std::numeric_limits<double>::quiet_NaN();  // NaN when no candidate was tested
    int degree_searched = 0;
    long long samples_used = 0;
};

struct RelationOptions {
    int max_degree = -1;  // default min(k 2^(k-1), 6)
    long long n_samples = 0;
    double null_ratio = 1e-9;
    double holdout_tolerance = 1e-6;
    double prune = 1e-9;
    std::size_t basis_cap = kDefaultBasisCap;
    bool all_relations = false;
};

/// k 2^(k-1), the degree bound for relations among k second-chaos variables.
[[nodiscard]] inline int degree_ceiling(int k) { return k >= 20 ? 1 << 24 : k * (1 << (k - 1)); }

[[nodiscard]] inline int default_relation_degree(int k) { return std::min(degree_ceiling(k), 6); }

/// Produces an n x k matrix of joint samples for a given seed.
using BatchSampler = std::function<Matrix(std::uint64_t seed, long long n)>;

namespace detail {

inline Matrix monomial_matrix(const Matrix& values, const std::vector<Exponents>& basis) {
    Matrix m(values.rows(), static_cast<Eigen::Index>(basis.size()));
    for (Eigen::Index r = 0; r < values.rows(); ++r)
        for (std::size_t t = 0; t < basis.size(); ++t)
            m(r, static_cast<Eigen::Index>(t)) = Polynomial::monomial(basis[t], values.row(r));
    return m;
}

}  // namespace detail

/// Searches degrees 1, 2, ... for a polynomial vanishing on samples of F.
/// The training batch uses `seed`; each candidate is checked on a fresh
/// holdout batch of the same size drawn with a derived seed.
[[nodiscard]] inline RelationReport find_relation(const BatchSampler& sampler, int k, std::uint64_t seed,
                                                  const RelationOptions& opts) {
    if (k < 1) throw Error(ErrorKind::InvalidK, "find_relation needs k >= 1");
    const int top = opts.max_degree < 0 ? default_relation_degree(k) : std::min(opts.max_degree, degree_ceiling(k));
    if (top < 1) throw Error(ErrorKind::PreconditionViolated, "max_degree must be at least 1");
    const std::size_t full = basis_size(k, top);
    if (full > opts.basis_cap)
        throw Error(ErrorKind::BasisTooLarge, "degree " + std::to_string(top) + " needs " + std::to_string(full) +
                                                  " monomials, cap is " + std::to_string(opts.basis_cap));
    if (opts.n_samples < static_cast<long long>(2 * full))
        throw Error(ErrorKind::InsufficientSamples, std::to_string(opts.n_samples) + " samples, degree " +
                                                        std::to_string(top) + " needs at least " +
                                                        std::to_string(2 * full));

    const Matrix train = sampler(seed, opts.n_samples);
    const Matrix holdout = sampler(derive_seed(seed, 1), opts.n_samples);
    if (train.cols() != k || holdout.cols() != k) throw Error(ErrorKind::DimensionMismatch, "sampler returned wrong width");

    RelationReport report;
    report.samples_used = opts.n_samples;
    for (int deg = 1; deg <= top; ++deg) {
        report.degree_searched = deg;
        const auto basis = monomial_basis(k, deg, opts.basis_cap);
        Matrix m = detail::monomial_matrix(train, basis);
        Vector scale(m.cols());
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
            scale(j) = m.col(j).norm();
            if (scale(j) > 0) m.col(j) /= scale(j);
            else scale(j) = 1.0;
        }
        // SVD of the triangular factor: same singular values, much smaller problem.
        Eigen::HouseholderQR<Matrix> qr(m);
        const Matrix r = qr.matrixQR().topRows(m.cols()).triangularView<Eigen::Upper>();
        Eigen::JacobiSVD<Matrix> svd(r, Eigen::ComputeFullV);
        const Vector& sv = svd.singularValues();
        const double smax = sv(0);
        report.training_sigma_ratio = smax > 0 ? sv(sv.size() - 1) / smax : 0.0;

        struct Candidate {
            Polynomial p;
            double ratio, residual;
        };
        std::vector<Candidate> valid;
        for (Eigen::Index j = sv.size() - 1; j >= 0; --j) {
            const double ratio = smax > 0 ? sv(j) / smax : 0.0;
            if (ratio > opts.null_ratio) break;
            Vector c = svd.matrixV().col(j).cwiseQuotient(scale);
            const double big = c.cwiseAbs().maxCoeff();
            std::vector<Term> terms;
            for (std::size_t t = 0; t < basis.size(); ++t) {
                const double ct = c(static_cast<Eigen::Index>(t));
                if (std::abs(ct) > opts.prune * big) terms.push_back({basis[t], ct});
            }
            Polynomial p(k, std::move(terms));
            if (p.degree() == 0) continue;
            const double res = relative_residual(p, holdout);
            if (!(res >= report.holdout_residual)) report.holdout_residual = res;
            if (res <= opts.holdout_tolerance) valid.push_back({std::move(p), ratio, res});
        }
        if (!valid.empty()) {
            report.found = true;
            report.polynomial = valid.front().p;
            report.training_sigma_ratio = valid.front().ratio;
            report.holdout_residual = valid.front().residual;
            if (opts.all_relations)
                for (std::size_t i = 1; i < valid.size(); ++i) report.others.push_back(valid[i].p);
            return report;
        }
    }
    return report;
}

[[nodiscard]] inline RelationReport find_relation(const ChaosVector& v, int max_degree, long long n_samples,
                                                  std::uint64_t seed) {
    RelationOptions opts;
    opts.max_degree = max_degree;
    opts.n_samples = n_samples;
    return find_relation([&v](std::uint64_t s, long long n) { return sample(v, s, n).values; }, v.size(), seed, opts);
}

[[nodiscard]] inline RelationReport find_relation(const ChaosVector& v, std::uint64_t seed, const RelationOptions& opts) {
    return find_relation([&v](std::uint64_t s, long long n) { return sample(v, s, n).values; }, v.size(), seed, opts);
}

[[nodiscard]] inline Json report_to_json(const RelationReport& r) {
    Json j{{"found", r.found},
           {"degree_searched", r.degree_searched},
           {"samples_used", r.samples_used},
           {"training_sigma_ratio", r.training_sigma_ratio},
           {"holdout_residual", r.holdout_residual}};
    if (r.polynomial) {
        j["polynomial"] = r.polynomial->to_json();
        j["expanded"] = r.polynomial->to_string();
        j["degree"] = r.polynomial->degree();
    } else {
        j["polynomial"] = nullptr;
    }
    if (!r.others.empty()) {
        Json o = Json::array();
        for (const auto& p : r.others) o.push_back(p.to_json());
        j["other_relations"] = o;
    }
    return j;
}

}  // namespace chaos2
