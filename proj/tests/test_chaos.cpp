#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <thread>
#include <vector>

#include "chaos2/chaos.hpp"
#include "test_helpers.hpp"

using namespace chaos2;
using chaos2::testing::random_orthogonal;
using chaos2::testing::random_symmetric;

namespace {

Matrix m2(double a, double b, double c, double d) {
    Matrix m(2, 2);
    m << a, b, c, d;
    return m;
}

Vector v2(double a, double b) {
    Vector v(2);
    v << a, b;
    return v;
}

// E g^(2m) = (2m-1)!!
double gaussian_even_moment(int two_m) {
    double r = 1.0;
    for (int j = two_m - 1; j > 0; j -= 2) r *= j;
    return two_m == 0 ? 1.0 : r;
}

// Central moment E (g^2 - 1)^p by binomial expansion over Gaussian moments.
double centered_chi2_moment(int p) {
    double s = 0.0;
    double binom = 1.0;
    for (int j = 0; j <= p; ++j) {
        s += binom * gaussian_even_moment(2 * j) * ((p - j) % 2 == 0 ? 1.0 : -1.0);
        binom = binom * (p - j) / (j + 1);
    }
    return s;
}

struct Moments {
    double mean, var, m3, m4;
};

Moments empirical_moments(const Matrix& values, int col) {
    const auto n = static_cast<double>(values.rows());
    const double mean = values.col(col).mean();
    double s2 = 0, s3 = 0, s4 = 0;
    for (Eigen::Index r = 0; r < values.rows(); ++r) {
        const double z = values(r, col) - mean;
        s2 += z * z;
        s3 += z * z * z;
        s4 += z * z * z * z;
    }
    return {mean, s2 / n, s3 / n, s4 / n};
}

}  // namespace

TEST(FromMatrix, ProductOfCoordinates) {
    const auto f = from_matrix(m2(0, 0.5, 0.5, 0));
    for (double x : {-1.5, 0.0, 2.0})
        for (double y : {-2.0, 0.3, 3.0}) EXPECT_DOUBLE_EQ(f.evaluate(v2(x, y)), x * y);
    EXPECT_FALSE(f.spectrum_cached());
}

TEST(FromMatrix, IdentityHasTraceTwo) {
    const auto f = from_matrix(Matrix::Identity(2, 2));
    EXPECT_DOUBLE_EQ(f.evaluate(v2(1.0, 2.0)), 1.0 + 4.0 - 2.0);
}

TEST(FromMatrix, RejectsAsymmetric) {
    try {
        (void)from_matrix(m2(0, 1, 0, 0));
        FAIL() << "expected NotSymmetric";
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::NotSymmetric);
    }
}

TEST(FromMatrix, SymmetrizesRoundingNoise) {
    const auto f = from_matrix(m2(1, 0.5 + 1e-12, 0.5, 2));
    EXPECT_EQ(f.matrix()(0, 1), f.matrix()(1, 0));
    EXPECT_NEAR(f.matrix()(0, 1), 0.5, 1e-12);
}

TEST(Diagonalize, ProductSplitsIntoRotatedSquares) {
    // Closed-form 2x2 oracle: eigenvalues (a+c)/2 +- sqrt(((a-c)/2)^2 + b^2).
    const double a = 0, b = 0.5, c = 0;
    const double mid = (a + c) / 2, rad = std::sqrt((a - c) * (a - c) / 4 + b * b);
    const auto f = from_matrix(m2(a, b, b, c));
    const auto sp = diagonalize(f);
    ASSERT_EQ(sp.size(), 2u);
    EXPECT_NEAR(sp[0].value, mid + rad, 1e-15);
    EXPECT_NEAR(sp[1].value, mid - rad, 1e-15);
    const double h = 1.0 / std::numbers::sqrt2;
    EXPECT_NEAR(sp[0].vector(0), h, 1e-15);
    EXPECT_NEAR(sp[0].vector(1), h, 1e-15);
    EXPECT_NEAR(sp[1].vector(0), h, 1e-15);
    EXPECT_NEAR(sp[1].vector(1), -h, 1e-15);
    EXPECT_TRUE(f.spectrum_cached());
}

TEST(Diagonalize, AlreadyDiagonal) {
    const auto sp = diagonalize(from_matrix(m2(3, 0, 0, 1)));
    EXPECT_DOUBLE_EQ(sp[0].value, 3.0);
    EXPECT_DOUBLE_EQ(sp[1].value, 1.0);
    EXPECT_EQ(sp[0].vector, v2(1, 0));
    EXPECT_EQ(sp[1].vector, v2(0, 1));
}

TEST(Diagonalize, ZeroMatrix) {
    const auto sp = diagonalize(from_matrix(Matrix::Zero(3, 3)));
    Matrix basis(3, 3);
    for (int j = 0; j < 3; ++j) {
        EXPECT_EQ(sp[static_cast<std::size_t>(j)].value, 0.0);
        basis.col(j) = sp[static_cast<std::size_t>(j)].vector;
        // Sign convention: first significant coordinate positive.
        for (int i = 0; i < 3; ++i)
            if (std::abs(basis(i, j)) > 1e-10) {
                EXPECT_GT(basis(i, j), 0.0);
                break;
            }
    }
    EXPECT_LT((basis.transpose() * basis - Matrix::Identity(3, 3)).norm(), 1e-12);
}

TEST(Diagonalize, OrderingBreaksMagnitudeTiesByValue) {
    Matrix a = Matrix::Zero(3, 3);
    a(0, 0) = -2;
    a(1, 1) = 1;
    a(2, 2) = 2;
    const auto sp = diagonalize(from_matrix(a));
    EXPECT_DOUBLE_EQ(sp[0].value, 2.0);
    EXPECT_DOUBLE_EQ(sp[1].value, -2.0);
    EXPECT_DOUBLE_EQ(sp[2].value, 1.0);
}

TEST(Diagonalize, ConvergenceFailureWhenBudgetIsZero) {
    CounterRng rng(3, 3);
    JacobiOptions opts;
    opts.max_sweeps = 0;
    try {
        (void)jacobi_eigen(random_symmetric(rng, 5), opts);
        FAIL() << "expected ConvergenceFailure";
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::ConvergenceFailure);
    }
}

TEST(Diagonalize, ReconstructionAndAgreementWithIndependentSolver) {
    CounterRng rng(11, 0);
    for (int trial = 0; trial < 100; ++trial) {
        const int d = 1 + static_cast<int>(rng.uniform_int(0, 49));
        const Matrix a = random_symmetric(rng, d);
        const auto f = from_matrix(a);
        const auto sp = diagonalize(f);
        Matrix recon = Matrix::Zero(d, d);
        Matrix basis(d, d);
        std::vector<double> ours;
        for (int j = 0; j < d; ++j) {
            const auto& p = sp[static_cast<std::size_t>(j)];
            recon += p.value * p.vector * p.vector.transpose();
            basis.col(j) = p.vector;
            ours.push_back(p.value);
        }
        EXPECT_LE((recon - f.matrix()).norm() / f.matrix().norm(), 1e-10) << "d=" << d;
        EXPECT_LE((basis.transpose() * basis - Matrix::Identity(d, d)).cwiseAbs().maxCoeff(), 1e-10);
        Eigen::SelfAdjointEigenSolver<Matrix> ref(f.matrix());
        std::vector<double> theirs(ref.eigenvalues().data(), ref.eigenvalues().data() + d);
        std::sort(ours.begin(), ours.end());
        for (int j = 0; j < d; ++j)
            EXPECT_NEAR(ours[static_cast<std::size_t>(j)], theirs[static_cast<std::size_t>(j)], 1e-10 * f.matrix().norm());
    }
}

TEST(Diagonalize, ConcurrentFirstAccessIsSafe) {
    CounterRng rng(12, 0);
    const auto f = from_matrix(random_symmetric(rng, 30));
    std::vector<std::thread> threads;
    std::vector<double> top(8);
    for (int t = 0; t < 8; ++t) threads.emplace_back([&, t] { top[static_cast<std::size_t>(t)] = f.spectrum()[0].value; });
    for (auto& t : threads) t.join();
    for (double v : top) EXPECT_EQ(v, top[0]);
}

TEST(Evaluate, Examples) {
    EXPECT_DOUBLE_EQ(evaluate(from_matrix(Matrix::Identity(2, 2)), v2(1, 1)), 0.0);
    EXPECT_DOUBLE_EQ(evaluate(from_matrix(m2(0, 0.5, 0.5, 0)), v2(2, 3)), 6.0);
    EXPECT_DOUBLE_EQ(evaluate(from_matrix(m2(1, 0, 0, 0)), v2(0, 5)), -1.0);
}

TEST(Evaluate, DimensionMismatch) {
    const auto f = from_matrix(Matrix::Identity(2, 2));
    EXPECT_THROW((void)f.evaluate(Vector::Zero(3)), Error);
    EXPECT_THROW((void)f.gradient(Vector::Zero(1)), Error);
}

TEST(Gradient, PlaneExample) {
    const double x = 1.7, y = -0.4;
    EXPECT_EQ(gradient(from_matrix(m2(1, 0, 0, 0)), v2(x, y)), v2(2 * x, 0));
    EXPECT_EQ(gradient(from_matrix(m2(0, 0.5, 0.5, 0)), v2(x, y)), v2(y, x));
    CounterRng rng(4, 4);
    EXPECT_EQ(gradient(from_matrix(random_symmetric(rng, 6)), Vector::Zero(6)), Vector::Zero(6));
}

TEST(Gradient, MatchesCentralDifferences) {
    CounterRng rng(21, 0);
    const double h = 1e-5;
    for (int trial = 0; trial < 100; ++trial) {
        const int d = 1 + static_cast<int>(rng.uniform_int(0, 9));
        const auto f = from_matrix(random_symmetric(rng, d));
        Vector x(d);
        for (int i = 0; i < d; ++i) x(i) = rng.normal();
        Vector fd(d);
        for (int i = 0; i < d; ++i) {
            Vector xp = x, xm = x;
            xp(i) += h;
            xm(i) -= h;
            fd(i) = (f.evaluate(xp) - f.evaluate(xm)) / (2 * h);
        }
        const Vector g = f.gradient(x);
        EXPECT_LE((fd - g).norm(), 1e-5 * std::max(1.0, g.norm()));
    }
}

TEST(Sample, CenteredChiSquare) {
    const ChaosVector v({from_matrix(Matrix::Identity(1, 1))});
    const long long n = 100000;
    const auto batch = sample(v, 2024, n);
    ASSERT_EQ(batch.values.rows(), n);
    ASSERT_EQ(batch.values.cols(), 1);
    const auto m = empirical_moments(batch.values, 0);
    EXPECT_LE(std::abs(m.mean), 4.0 * std::sqrt(2.0 / n));
    // Var(g^2 - 1) = E g^4 - 1 = 2 from the moment oracle.
    const double var_oracle = centered_chi2_moment(2);
    EXPECT_DOUBLE_EQ(var_oracle, 2.0);
    EXPECT_NEAR(m.var, var_oracle, 0.05 * var_oracle);
}

TEST(Sample, DeterministicAcrossRunsAndThreads) {
    CounterRng rng(8, 8);
    const auto v = ChaosVector::from_matrices({random_symmetric(rng, 4), random_symmetric(rng, 4)});
    setenv("CHAOS2_THREADS", "1", 1);
    const auto a = sample(v, 99, 20000);
    setenv("CHAOS2_THREADS", "3", 1);
    const auto b = sample(v, 99, 20000);
    unsetenv("CHAOS2_THREADS");
    EXPECT_EQ(a.meta, b.meta);
    EXPECT_TRUE((a.values.array() == b.values.array()).all());
    const auto c = sample(v, 100, 20000);
    EXPECT_FALSE((a.values.array() == c.values.array()).all());
}

TEST(Sample, RejectsEmptyRequest) {
    const ChaosVector v({from_matrix(Matrix::Identity(1, 1))});
    EXPECT_THROW((void)sample(v, 1, 0), Error);
}

TEST(Covariance, CounterexampleVector) {
    const auto v = ChaosVector::from_matrices({m2(1, 0, 0, 0), m2(0, 0, 0, 1), m2(0, 0.5, 0.5, 0)});
    const Matrix c = covariance(v);
    Matrix expected = Matrix::Zero(3, 3);
    expected.diagonal() << 2, 2, 1;
    EXPECT_LE((c - expected).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Covariance, DuplicatedComponent) {
    CounterRng rng(5, 1);
    const Matrix a = random_symmetric(rng, 3);
    const auto v = ChaosVector::from_matrices({a, a});
    const Matrix c = covariance(v);
    const double s2 = 2 * (a * a).trace();
    EXPECT_NEAR(c(0, 0), s2, 1e-12 * s2);
    EXPECT_NEAR(c(0, 1), s2, 1e-12 * s2);
    EXPECT_NEAR(c(1, 1), s2, 1e-12 * s2);
}

TEST(Covariance, MatchesMonteCarloWithinThreeStandardErrors) {
    CounterRng rng(31, 0);
    std::vector<Matrix> mats;
    for (int i = 0; i < 4; ++i) mats.push_back(random_symmetric(rng, 4));
    const auto v = ChaosVector::from_matrices(mats);
    const Matrix c = covariance(v);
    const long long n = 1000000;
    const auto batch = sample(v, 77, n);
    const Matrix& x = batch.values;
    const Eigen::RowVectorXd mean = x.colwise().mean();
    for (int i = 0; i < 4; ++i)
        for (int j = i; j < 4; ++j) {
            const Eigen::ArrayXd prod = (x.col(i).array() - mean(i)) * (x.col(j).array() - mean(j));
            const double est = prod.mean();
            const double se = std::sqrt((prod - est).square().mean() / static_cast<double>(n));
            EXPECT_LE(std::abs(est - c(i, j)), 3.0 * se) << i << "," << j;
        }
}

TEST(Covariance, IsPositiveSemidefinite) {
    CounterRng rng(32, 0);
    std::vector<Matrix> mats;
    for (int i = 0; i < 5; ++i) mats.push_back(random_symmetric(rng, 3));
    const Matrix c = covariance(ChaosVector::from_matrices(mats));
    EXPECT_GE(symmetric_eigenvalues(c)(0), -1e-12 * c.norm());
}

TEST(FourthCumulant, Examples) {
    // kappa_4(g^2 - 1) = E(g^2-1)^4 - 3 (E(g^2-1)^2)^2 via the moment oracle.
    const double oracle = centered_chi2_moment(4) - 3 * centered_chi2_moment(2) * centered_chi2_moment(2);
    EXPECT_DOUBLE_EQ(centered_chi2_moment(4), 60.0);
    EXPECT_DOUBLE_EQ(fourth_cumulant(from_matrix(Matrix::Identity(1, 1))), oracle);
    EXPECT_EQ(fourth_cumulant(from_matrix(Matrix::Zero(3, 3))), 0.0);
    CounterRng rng(6, 6);
    const Matrix a = random_symmetric(rng, 4);
    const double base = fourth_cumulant(from_matrix(a));
    EXPECT_NEAR(fourth_cumulant(from_matrix(-1.7 * a)), std::pow(1.7, 4) * base, 1e-12 * std::pow(1.7, 4) * base);
}

TEST(FourthCumulant, MatchesSpectrumFormula) {
    CounterRng rng(7, 7);
    const auto f = from_matrix(random_symmetric(rng, 6));
    double s = 0;
    for (const auto& p : f.spectrum()) s += std::pow(p.value, 4);
    EXPECT_NEAR(f.fourth_cumulant(), 48 * s, 1e-10 * 48 * s);
}

TEST(Properties, LawInvariantUnderOrthogonalConjugation) {
    CounterRng rng(41, 0);
    const int d = 4;
    const Matrix a = random_symmetric(rng, d);
    const Matrix q = random_orthogonal(rng, d);
    const long long n = 100000;
    const auto b1 = sample(ChaosVector({from_matrix(a)}), 501, n);
    const auto b2 = sample(ChaosVector({from_matrix(q * a * q.transpose())}), 502, n);
    const auto m1 = empirical_moments(b1.values, 0);
    const auto m2v = empirical_moments(b2.values, 0);
    // Standard errors of the empirical moments from the samples themselves.
    auto se = [&](const Matrix& vals, double mean, int p) {
        const Eigen::ArrayXd z = (vals.col(0).array() - mean).pow(p);
        return std::sqrt((z - z.mean()).square().mean() / static_cast<double>(n));
    };
    EXPECT_LE(std::abs(m1.mean - m2v.mean), 4 * std::hypot(se(b1.values, 0, 1), se(b2.values, 0, 1)));
    EXPECT_LE(std::abs(m1.var - m2v.var), 4 * std::hypot(se(b1.values, m1.mean, 2), se(b2.values, m2v.mean, 2)));
    EXPECT_LE(std::abs(m1.m3 - m2v.m3), 4 * std::hypot(se(b1.values, m1.mean, 3), se(b2.values, m2v.mean, 3)));
    EXPECT_LE(std::abs(m1.m4 - m2v.m4), 4 * std::hypot(se(b1.values, m1.mean, 4), se(b2.values, m2v.mean, 4)));
}

TEST(Properties, VarianceIdentity) {
    CounterRng rng(42, 0);
    const auto f = from_matrix(random_symmetric(rng, 5));
    double s = 0;
    for (const auto& p : f.spectrum()) s += p.value * p.value;
    const auto batch = sample(ChaosVector({f}), 9, 1000000);
    EXPECT_NEAR(empirical_moments(batch.values, 0).var, 2 * s, 0.05 * 2 * s);
}

TEST(Properties, FourthCumulantMatchesEmpirical) {
    // lambda = (0.4, 0.3, 0.3, 0.4) / sqrt(2 * 0.5): sum lambda^2 = 1/2.
    Vector lam(4);
    lam << 0.4, 0.3, -0.3, 0.4;
    lam *= std::sqrt(0.5) / lam.norm();
    const auto f = from_matrix(Matrix(lam.asDiagonal()));
    const auto batch = sample(ChaosVector({f}), 10, 10000000);
    const auto m = empirical_moments(batch.values, 0);
    const double k4 = m.m4 - 3 * m.var * m.var;
    EXPECT_NEAR(k4, f.fourth_cumulant(), 0.10 * f.fourth_cumulant());
}
