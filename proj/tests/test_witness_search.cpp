#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "chaos2/degeneracy.hpp"
#include "test_helpers.hpp"

using namespace chaos2;
using chaos2::testing::grid_min_third_ratio;
using chaos2::testing::planted_triple;
using chaos2::testing::random_symmetric;

namespace {

void expect_orthonormal(const std::vector<Vector>& dirs) {
    for (std::size_t i = 0; i < dirs.size(); ++i)
        for (std::size_t j = 0; j < dirs.size(); ++j)
            EXPECT_NEAR(dirs[i].dot(dirs[j]), i == j ? 1.0 : 0.0, 1e-10);
}

}  // namespace

TEST(Witness, PlaneCounterexampleAnyDirectionWorks) {
    Matrix a1 = Matrix::Zero(2, 2), a2 = Matrix::Zero(2, 2), a3(2, 2);
    a1(0, 0) = 1;
    a2(1, 1) = 1;
    a3 << 0, 0.5, 0.5, 0;
    const auto v = ChaosVector::from_matrices({a1, a2, a3});
    const auto w = diagonal_witness(v, 1);
    EXPECT_NEAR(w.a.norm(), 1.0, 1e-14);
    EXPECT_EQ(w.b.size(), 2);
    EXPECT_LE(w.identity_residual, 1e-12);
    EXPECT_LE(w.sigma_ratio, 1e-8);
    expect_orthonormal(w.directions);
}

TEST(Witness, PlantedRankTwoCombination) {
    for (std::uint64_t s = 0; s < 10; ++s) {
        const auto p = planted_triple(1000 + s, 5);
        const auto w = diagonal_witness(ChaosVector::from_matrices(p.ops), 7 + s);
        Vector expected(3);
        expected << 1, -1, 1;
        expected /= std::sqrt(3.0);
        EXPECT_LE((w.a - expected).norm(), 1e-7) << "seed " << s;
        EXPECT_LE(w.sigma_ratio, 1e-8);
        EXPECT_LE(w.identity_residual, 1e-9 * (1 + w.b.lpNorm<1>()));
        expect_orthonormal(w.directions);
        // b holds the nonzero eigenvalues of R / sqrt(3), largest magnitude first.
        Eigen::SelfAdjointEigenSolver<Matrix> es(p.planted / std::sqrt(3.0));
        std::vector<double> ev(es.eigenvalues().data(), es.eigenvalues().data() + 5);
        std::sort(ev.begin(), ev.end(), [](double x, double y) { return std::abs(x) > std::abs(y); });
        EXPECT_NEAR(w.b(0), ev[0], 1e-7 * std::abs(ev[0]));
        EXPECT_NEAR(w.b(1), ev[1], 1e-7 * std::abs(ev[0]));
    }
}

TEST(Witness, LinearlyDependentOperatorsGiveZeroB) {
    CounterRng rng(2, 0);
    const Matrix a = random_symmetric(rng, 4);
    const Matrix b = random_symmetric(rng, 4);
    const auto w = diagonal_witness(ChaosVector::from_matrices({a, b, 2 * a - b}), 3);
    EXPECT_TRUE(w.b.isZero());
    EXPECT_TRUE(w.directions.empty());
    EXPECT_LE(w.identity_residual, 1e-9);
}

TEST(Witness, GenericInstancesHaveNoWitnessAndGridAgrees) {
    for (std::uint64_t s = 0; s < 3; ++s) {
        CounterRng rng(5000 + s, 0);
        std::vector<Matrix> ops;
        for (int i = 0; i < 3; ++i) ops.push_back(random_symmetric(rng, 10));
        try {
            (void)diagonal_witness(ChaosVector::from_matrices(ops), s);
            FAIL() << "expected NoWitnessFound";
        } catch (const Error& e) {
            EXPECT_EQ(e.kind(), ErrorKind::NoWitnessFound);
        }
        EXPECT_GE(grid_min_third_ratio(ops), 1e-4);
    }
}

TEST(Witness, RejectsSingleElement) {
    const auto v = ChaosVector::from_matrices({Matrix::Identity(2, 2)});
    EXPECT_THROW((void)diagonal_witness(v, 1), Error);
}
