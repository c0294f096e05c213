#include "nlmc/fine_fem.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace nlmc;

namespace {

MediumField uniform(int n, double k = 1.0) {
    return sample_medium(n, [k](Point) { return k; });
}

MediumField random_medium(int n, unsigned seed) {
    std::mt19937 rng(seed);
    std::uniform_real_distribution<double> U(0.1, 10.0);
    auto m = uniform(n);
    for (auto& k : m.kappa) k = U(rng);
    for (auto& w : m.kappa_tilde) w = U(rng);
    return m;
}

// Brute-force assembly: element matrices from numerical quadrature of bilinear
// shape-function gradients, scattered into a dense matrix.
Mat dense_stiffness_oracle(const MediumField& m) {
    const int n = m.n;
    const int N = (n + 1) * (n + 1);
    Mat A = Mat::Zero(N, N);
    const double g[2] = {0.5 - 0.5 / std::sqrt(3.0), 0.5 + 0.5 / std::sqrt(3.0)};
    for (int j = 0; j < n; ++j)
        for (int i = 0; i < n; ++i) {
            const int nodes[4] = {j * (n + 1) + i, j * (n + 1) + i + 1, (j + 1) * (n + 1) + i + 1,
                                  (j + 1) * (n + 1) + i};
            for (double s : g)
                for (double t : g) {
                    // Gradients in reference coordinates, scaled by 1/dx; the Jacobian dx^2 cancels.
                    const double gx[4] = {-(1 - t), (1 - t), t, -t};
                    const double gy[4] = {-(1 - s), -s, s, (1 - s)};
                    for (int a = 0; a < 4; ++a)
                        for (int b = 0; b < 4; ++b)
                            A(nodes[a], nodes[b]) += 0.25 * m.kappa[j * n + i] * (gx[a] * gx[b] + gy[a] * gy[b]);
                }
        }
    return A;
}

}  // namespace

TEST(FineFem, UnitElementStiffness) {
    const Mat A(assemble_stiffness(CellRange{0, 1, 0, 1}, uniform(1)));
    const double ref[4][4] = {{4, -1, -2, -1}, {-1, 4, -1, -2}, {-2, -1, 4, -1}, {-1, -2, -1, 4}};
    // Local order of the unit square: (0,0), (1,0), (0,1), (1,1) in the node rectangle.
    const int perm[4] = {0, 1, 3, 2};
    for (int a = 0; a < 4; ++a) {
        double rowsum = 0.0;
        for (int b = 0; b < 4; ++b) {
            EXPECT_NEAR(A(perm[a], perm[b]), ref[a][b] / 6.0, 1e-15);
            rowsum += A(a, b);
        }
        EXPECT_NEAR(rowsum, 0.0, 1e-15);
    }
}

TEST(FineFem, StiffnessMatchesDenseOracle) {
    for (int n : {2, 5}) {
        const auto m = random_medium(n, 11 + n);
        const Mat A(assemble_stiffness(CellRange{0, n, 0, n}, m));
        EXPECT_LT((A - dense_stiffness_oracle(m)).cwiseAbs().maxCoeff(), 1e-14);
    }
}

TEST(FineFem, StiffnessIsLinearSymmetricWithConstantKernel) {
    auto m = random_medium(6, 5);
    const CellRange all{0, 6, 0, 6};
    const SpMat A = assemble_stiffness(all, m);
    const SpMat A3 = assemble_stiffness(all, scale_kappa(m, std::vector<double>(36, 3.0)));
    EXPECT_LT(Mat(A3 - 3.0 * A).cwiseAbs().maxCoeff(), 1e-13);
    EXPECT_LT(Mat(A - SpMat(A.transpose())).cwiseAbs().maxCoeff(), 1e-15);
    EXPECT_LT((A * Vec::Ones(A.cols())).cwiseAbs().maxCoeff(), 1e-13);
    EXPECT_THROW(assemble_stiffness(CellRange{2, 2, 0, 3}, m), std::invalid_argument);
}

TEST(FineFem, WeightedMass) {
    auto m = uniform(1);
    SpMat M = assemble_weighted_mass(CellRange{0, 1, 0, 1}, m);
    const Vec one = Vec::Ones(4);
    EXPECT_NEAR(one.dot(M * one), 1.0, 1e-15);
    m.kappa_tilde[0] = 2.5;
    EXPECT_NEAR(one.dot(assemble_weighted_mass(CellRange{0, 1, 0, 1}, m) * one), 2.5, 1e-15);

    // Random weights and a bilinear field: compare with per-cell closed-form integrals.
    auto r = random_medium(7, 2);
    const int n = 7;
    const CellRange all{0, n, 0, n};
    M = assemble_weighted_mass(all, r);
    Vec u((n + 1) * (n + 1));
    for (int j = 0; j <= n; ++j)
        for (int i = 0; i <= n; ++i) u[j * (n + 1) + i] = std::sin(1.0 + i) * std::cos(0.5 * j);
    double oracle = 0.0;
    const double dx = 1.0 / n;
    for (int j = 0; j < n; ++j)
        for (int i = 0; i < n; ++i) {
            const double a = u[j * (n + 1) + i], b = u[j * (n + 1) + i + 1];
            const double d = u[(j + 1) * (n + 1) + i], c = u[(j + 1) * (n + 1) + i + 1];
            // int_0^1 int_0^1 (bilinear)^2 for corner values a (0,0), b (1,0), c (1,1), d (0,1).
            const double I = (4 * (a * a + b * b + c * c + d * d) + 4 * (a * b + b * c + c * d + d * a) +
                              2 * (a * c + b * d)) /
                             36.0;
            oracle += r.kappa_tilde[j * n + i] * dx * dx * I;
        }
    EXPECT_NEAR(u.dot(M * u), oracle, 1e-13);
    Eigen::SelfAdjointEigenSolver<Mat> es{Mat(M)};
    EXPECT_GT(es.eigenvalues().minCoeff(), 0.0);
}

TEST(FineFem, ZeroSourceGivesZero) {
    const auto sol = solve_fine_reference(uniform(8), std::vector<double>(64, 0.0), BoundaryCondition::dirichlet0);
    EXPECT_EQ(sol.u.cwiseAbs().maxCoeff(), 0.0);
}

TEST(FineFem, IterativeMatchesDenseOracle) {
    for (int n : {4, 8, 16, 32}) {
        const auto m = random_medium(n, 100 + n);
        std::vector<double> f(static_cast<std::size_t>(n) * n);
        for (std::size_t c = 0; c < f.size(); ++c) f[c] = std::cos(0.37 * static_cast<double>(c));
        FineSolveOptions opt;
        opt.cg.tol = 1e-13;
        const auto sol = solve_fine_reference(m, f, BoundaryCondition::dirichlet0, opt);

        const CellRange all{0, n, 0, n};
        const Mat A = dense_stiffness_oracle(m);
        const Vec b = assemble_load(all, f, n);
        const auto mask = boundary_mask(n);
        std::vector<int> freeidx;
        for (int i = 0; i < (n + 1) * (n + 1); ++i)
            if (!mask[i]) freeidx.push_back(i);
        const int k = static_cast<int>(freeidx.size());
        Mat Af(k, k);
        Vec bf(k);
        for (int p = 0; p < k; ++p) {
            bf[p] = b[freeidx[p]];
            for (int q = 0; q < k; ++q) Af(p, q) = A(freeidx[p], freeidx[q]);
        }
        const Vec uf = Af.llt().solve(bf);
        double err = 0.0;
        for (int p = 0; p < k; ++p) err = std::max(err, std::abs(uf[p] - sol.u[freeidx[p]]));
        EXPECT_LT(err / uf.cwiseAbs().maxCoeff(), 1e-9) << n;
    }
}

TEST(FineFem, ResidualAndGalerkinOrthogonality) {
    const int n = 24;
    const auto m = random_medium(n, 9);
    const std::vector<double> f(static_cast<std::size_t>(n) * n, 1.0);
    const auto sol = solve_fine_reference(m, f, BoundaryCondition::dirichlet0);
    EXPECT_LE(sol.relative_residual, 1e-10);
    const CellRange all{0, n, 0, n};
    const Vec r = assemble_load(all, f, n) - assemble_stiffness(all, m) * sol.u;
    const auto mask = boundary_mask(n);
    double worst = 0.0;
    for (int i = 0; i < r.size(); ++i)
        if (!mask[i]) worst = std::max(worst, std::abs(r[i]));
    EXPECT_LT(worst, 1e-9 * assemble_load(all, f, n).norm());
}

TEST(FineFem, ManufacturedSolutionConvergesAtSecondOrder) {
    auto exact = [](Point p) { return p.x * (1.0 - p.x); };
    std::vector<double> err;
    for (int n : {8, 16, 32, 64}) {
        FineSolveOptions opt;
        opt.cg.tol = 1e-13;
        opt.dirichlet_data = exact;
        const auto sol = solve_fine_reference(uniform(n), sample_cells(n, [](Point) { return 2.0; }),
                                              BoundaryCondition::dirichlet0, opt);
        err.push_back(l2_error(sol.u, n, exact));
    }
    for (std::size_t k = 1; k < err.size(); ++k) {
        const double rate = std::log2(err[k - 1] / err[k]);
        EXPECT_NEAR(rate, 2.0, 0.1) << k;
    }
}

TEST(FineFem, NeumannSolveHasZeroMeanAndZeroResidual) {
    const int n = 16;
    const auto m = random_medium(n, 4);
    auto f = sample_cells(n, [](Point p) { return std::cos(M_PI * p.x); });
    const auto sol = solve_fine_reference(m, f, BoundaryCondition::neumann0);
    const CellRange all{0, n, 0, n};
    const Vec w = assemble_load(all, std::vector<double>(n * n, 1.0), n);
    EXPECT_NEAR(sol.u.dot(w), 0.0, 1e-12);
    const Vec r = assemble_load(all, f, n) - assemble_stiffness(all, m) * sol.u;
    EXPECT_LT(r.norm(), 1e-8);
}

TEST(FineFem, EnergyNorm) {
    const int n = 5;
    const auto m = random_medium(n, 1);
    const SpMat A = assemble_stiffness(CellRange{0, n, 0, n}, m);
    Vec u = Vec::LinSpaced(A.rows(), -1.0, 2.0);
    EXPECT_EQ(energy_norm(Vec::Zero(A.rows()), A), 0.0);
    EXPECT_NEAR(energy_norm(-3.0 * u, A), 3.0 * energy_norm(u, A), 1e-12);
    EXPECT_NEAR(energy_norm(u, A) * energy_norm(u, A), u.dot(A * u), 1e-12);
}

TEST(FineFem, CgReportsHistoryOnFailure) {
    const auto m = random_medium(16, 3);
    const auto f = std::vector<double>(256, 1.0);
    FineSolveOptions opt;
    opt.cg.max_iterations = 3;
    try {
        solve_fine_reference(m, f, BoundaryCondition::dirichlet0, opt);
        FAIL();
    } catch (const SolverError& e) {
        EXPECT_EQ(e.history().size(), 3u);
    }
    opt.cg.max_iterations = 100000;
    opt.cg.preconditioner = Preconditioner::incomplete_cholesky;
    EXPECT_LE(solve_fine_reference(m, f, BoundaryCondition::dirichlet0, opt).relative_residual, 1e-10);
}
