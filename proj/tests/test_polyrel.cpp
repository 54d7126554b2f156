#include <gtest/gtest.h>

#include <cmath>

#include "chaos2/polyrel.hpp"
#include "test_helpers.hpp"

using namespace chaos2;
using chaos2::testing::random_matrix;
using chaos2::testing::random_symmetric;

namespace {

ChaosVector counterexample() {
    Matrix a1 = Matrix::Zero(2, 2), a2 = Matrix::Zero(2, 2), a3(2, 2);
    a1(0, 0) = 1;
    a2(1, 1) = 1;
    a3 << 0, 0.5, 0.5, 0;
    return ChaosVector::from_matrices({a1, a2, a3});
}

ChaosVector squares() {
    Matrix a1 = Matrix::Zero(2, 2), a2 = Matrix::Zero(2, 2);
    a1(0, 0) = 1;
    a2(1, 1) = 1;
    return ChaosVector::from_matrices({a1, a2});
}

// Coefficient of a monomial in p, 0 when absent.
double coeff(const Polynomial& p, const Exponents& e) {
    for (const auto& t : p.terms())
        if (t.exponents == e) return t.coeff;
    return 0.0;
}

}  // namespace

TEST(Basis, Examples) {
    EXPECT_EQ(monomial_basis(1, 2), (std::vector<Exponents>{{0}, {1}, {2}}));
    EXPECT_EQ(monomial_basis(2, 1), (std::vector<Exponents>{{0, 0}, {1, 0}, {0, 1}}));
    EXPECT_EQ(monomial_basis(3, 2).size(), 10u);
    EXPECT_EQ(monomial_basis(2, 2), (std::vector<Exponents>{{0, 0}, {1, 0}, {0, 1}, {2, 0}, {1, 1}, {0, 2}}));
}

TEST(Basis, CountMatchesBinomial) {
    for (int k = 1; k <= 6; ++k)
        for (int d = 0; d <= 6; ++d) {
            // Oracle: Pascal's rule C(k+d, d).
            std::vector<std::vector<double>> c(20, std::vector<double>(20, 0));
            for (int n = 0; n < 20; ++n) {
                c[static_cast<std::size_t>(n)][0] = 1;
                for (int r = 1; r <= n; ++r) c[static_cast<std::size_t>(n)][static_cast<std::size_t>(r)] = c[static_cast<std::size_t>(n - 1)][static_cast<std::size_t>(r - 1)] + c[static_cast<std::size_t>(n - 1)][static_cast<std::size_t>(r)];
            }
            EXPECT_EQ(static_cast<double>(monomial_basis(k, d).size()), c[static_cast<std::size_t>(k + d)][static_cast<std::size_t>(d)]);
        }
}

TEST(Basis, CapAndErrors) {
    try {
        (void)monomial_basis(10, 6);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::BasisTooLarge);
    }
    EXPECT_THROW((void)monomial_basis(2, -1), Error);
}

TEST(PolynomialType, NormalizationAndSign) {
    const Polynomial p(2, {{{1, 0}, -2.0}, {{0, 1}, 1.0}, {{0, 0}, 0.0}});
    ASSERT_EQ(p.terms().size(), 2u);
    EXPECT_NEAR(coeff(p, {1, 0}), 2 / std::sqrt(5.0), 1e-15);
    EXPECT_NEAR(coeff(p, {0, 1}), -1 / std::sqrt(5.0), 1e-15);
    EXPECT_EQ(p.degree(), 1);
    const auto back = Polynomial::from_json(parse_json(p.to_json().dump()));
    EXPECT_EQ(back.terms().size(), 2u);
    EXPECT_DOUBLE_EQ(coeff(back, {1, 0}), coeff(p, {1, 0}));
    EXPECT_THROW(Polynomial(1, {{{1}, 0.0}}), Error);
}

TEST(PolynomialType, TiesGoToEarliestTerm) {
    const Polynomial p(1, {{{0}, -1.0}, {{2}, 1.0}});
    EXPECT_GT(coeff(p, {0}), 0.0);
    EXPECT_EQ(p.to_string(3), "-0.707*F1^2 + 0.707");
}

TEST(FindRelation, CounterexampleRecoversProductIdentity) {
    const auto r = find_relation(counterexample(), -1, 500, 2024);
    ASSERT_TRUE(r.found);
    const auto& p = *r.polynomial;
    EXPECT_EQ(p.degree(), 2);
    EXPECT_LE(r.holdout_residual, 1e-8);
    // Oracle: F3^2 - F1 F2 - F1 - F2 - 1 expanded from F3^2 = (F1 + 1)(F2 + 1), unit-normalised.
    const double s = coeff(p, {0, 0, 2});
    const double unit = 1 / std::sqrt(5.0);
    EXPECT_NEAR(std::abs(s), unit, 1e-8);
    EXPECT_NEAR(coeff(p, {1, 1, 0}), -s, 1e-8);
    EXPECT_NEAR(coeff(p, {1, 0, 0}), -s, 1e-8);
    EXPECT_NEAR(coeff(p, {0, 1, 0}), -s, 1e-8);
    EXPECT_NEAR(coeff(p, {0, 0, 0}), -s, 1e-8);
    EXPECT_EQ(p.terms().size(), 5u);
}

TEST(FindRelation, IndependentSquaresHaveNoRelation) {
    const auto r = find_relation(squares(), 4, 500, 7);
    EXPECT_FALSE(r.found);
    EXPECT_EQ(r.degree_searched, 4);
    EXPECT_GT(r.training_sigma_ratio, 1e-9);
}

TEST(FindRelation, ProportionalPairIsLinear) {
    CounterRng rng(3, 0);
    const Matrix a = random_symmetric(rng, 3);
    const auto r = find_relation(ChaosVector::from_matrices({a, 2 * a}), -1, 200, 3);
    ASSERT_TRUE(r.found);
    const auto& p = *r.polynomial;
    EXPECT_EQ(p.degree(), 1);
    EXPECT_NEAR(coeff(p, {1, 0}), 2 / std::sqrt(5.0), 1e-9);
    EXPECT_NEAR(coeff(p, {0, 1}), -1 / std::sqrt(5.0), 1e-9);
}

TEST(FindRelation, Errors) {
    try {
        (void)find_relation(counterexample(), 2, 19, 1);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::InsufficientSamples);
    }
    CounterRng rng(4, 0);
    std::vector<Matrix> mats;
    for (int i = 0; i < 12; ++i) mats.push_back(random_symmetric(rng, 2));
    try {
        (void)find_relation(ChaosVector::from_matrices(mats), -1, 100000, 1);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::BasisTooLarge);
    }
}

TEST(FindRelation, PlantedQuadraticRelations) {
    // F3 := q(F1, F2) for a random quadratic q; the recovered relation must
    // vanish on fresh batches and have degree at most 2.
    int recovered = 0;
    for (std::uint64_t t = 0; t < 100; ++t) {
        CounterRng rng(100 + t, 0);
        const auto v = ChaosVector::from_matrices({random_symmetric(rng, 3), random_symmetric(rng, 3)});
        Vector q(6);
        for (int i = 0; i < 6; ++i) q(i) = rng.normal();
        const auto basis = monomial_basis(2, 2);
        auto sampler = [&](std::uint64_t s, long long n) {
            const Matrix f = sample(v, s, n).values;
            Matrix out(n, 3);
            out.leftCols(2) = f;
            for (Eigen::Index r = 0; r < n; ++r) {
                double val = 0;
                for (std::size_t b = 0; b < basis.size(); ++b) val += q(static_cast<Eigen::Index>(b)) * Polynomial::monomial(basis[b], f.row(r));
                out(r, 2) = val;
            }
            return out;
        };
        RelationOptions opts;
        opts.max_degree = 2;
        opts.n_samples = 200;
        const auto r = find_relation(sampler, 3, t, opts);
        if (r.found && r.polynomial->degree() <= 2) ++recovered;
    }
    EXPECT_GE(recovered, 95);
}

TEST(FindRelation, VerdictInvariantUnderLinearChange) {
    CounterRng rng(5, 0);
    for (int t = 0; t < 5; ++t) {
        const Matrix l = random_matrix(rng, 3, 3);
        ASSERT_GT(std::abs(l.determinant()), 1e-3);
        const ChaosVector base = counterexample();
        auto mixed = [&](std::uint64_t s, long long n) { return Matrix(sample(base, s, n).values * l.transpose()); };
        RelationOptions opts;
        opts.max_degree = 2;
        opts.n_samples = 500;
        EXPECT_TRUE(find_relation(mixed, 3, 11, opts).found);
        const ChaosVector ind = squares();
        const Matrix l2 = random_matrix(rng, 2, 2);
        auto mixed2 = [&](std::uint64_t s, long long n) { return Matrix(sample(ind, s, n).values * l2.transpose()); };
        EXPECT_FALSE(find_relation(mixed2, 2, 12, opts).found);
        EXPECT_FALSE(find_relation(ind, 2, 500, 12).found);
    }
}

TEST(FindRelation, ReturnedPolynomialVanishesOnFreshBatches) {
    const auto r = find_relation(counterexample(), -1, 500, 31);
    ASSERT_TRUE(r.found);
    for (std::uint64_t s = 0; s < 10; ++s)
        EXPECT_LE(relative_residual(*r.polynomial, sample(counterexample(), 9000 + s, 500).values), 1e-6);
}
