#pragma once

// Q1 finite elements on the uniform fine grid: local and global assembly,
// Dirichlet elimination, a preconditioned CG solver and the fine reference solve.

#include "nlmc/grids.hpp"
#include "nlmc/medium.hpp"
#include "nlmc/types.hpp"

#include <Eigen/IterativeLinearSolvers>

#include <array>
#include <cmath>
#include <functional>
#include <optional>
#include <sstream>

namespace nlmc {

/// Bilinear element stiffness for unit coefficient on a square cell. Local node
/// order: (i,j), (i+1,j), (i+1,j+1), (i,j+1). Independent of the cell size in 2D.
inline constexpr std::array<std::array<double, 4>, 4> kQ1Stiffness{{
    {4.0 / 6, -1.0 / 6, -2.0 / 6, -1.0 / 6},
    {-1.0 / 6, 4.0 / 6, -1.0 / 6, -2.0 / 6},
    {-2.0 / 6, -1.0 / 6, 4.0 / 6, -1.0 / 6},
    {-1.0 / 6, -2.0 / 6, -1.0 / 6, 4.0 / 6},
}};

/// Bilinear element mass divided by the cell area.
inline constexpr std::array<std::array<double, 4>, 4> kQ1Mass{{
    {4.0 / 36, 2.0 / 36, 1.0 / 36, 2.0 / 36},
    {2.0 / 36, 4.0 / 36, 2.0 / 36, 1.0 / 36},
    {1.0 / 36, 2.0 / 36, 4.0 / 36, 2.0 / 36},
    {2.0 / 36, 1.0 / 36, 2.0 / 36, 4.0 / 36},
}};

/// Local indices (within `nodes`) of the four corners of fine cell (i, j).
inline std::array<int, 4> cell_nodes(const NodeRect& nodes, int i, int j) {
    const int n0 = nodes.local(i, j);
    return {n0, n0 + 1, n0 + 1 + nodes.nx, n0 + nodes.nx};
}

namespace detail {

template <class Weight>
SpMat assemble_q1(const CellRange& cells, const MediumField& m, const std::array<std::array<double, 4>, 4>& ref,
                  Weight weight) {
    if (cells.empty()) throw std::invalid_argument("assembly over an empty region");
    const NodeRect nodes = NodeRect::of(cells);
    std::vector<Triplet> trip;
    trip.reserve(static_cast<std::size_t>(cells.count()) * 16);
    for (int j = cells.y0; j < cells.y1; ++j)
        for (int i = cells.x0; i < cells.x1; ++i) {
            const double w = weight(m.index(i, j));
            const auto nd = cell_nodes(nodes, i, j);
            for (int a = 0; a < 4; ++a)
                for (int b = 0; b < 4; ++b) trip.emplace_back(nd[a], nd[b], w * ref[a][b]);
        }
    SpMat A(nodes.size(), nodes.size());
    A.setFromTriplets(trip.begin(), trip.end());
    return A;
}

}  // namespace detail

/// Stiffness a(u, v) = sum_c kappa_c int grad u . grad v over a fine-cell range,
/// indexed by the NodeRect of that range.
inline SpMat assemble_stiffness(const CellRange& cells, const MediumField& m) {
    return detail::assemble_q1(cells, m, kQ1Stiffness, [&](int c) { return m.kappa[c]; });
}

/// Weighted mass int kappa_tilde u v over a fine-cell range.
inline SpMat assemble_weighted_mass(const CellRange& cells, const MediumField& m) {
    const double area = 1.0 / (static_cast<double>(m.n) * m.n);
    return detail::assemble_q1(cells, m, kQ1Mass, [&](int c) { return area * m.kappa_tilde[c]; });
}

inline SpMat assemble_stiffness(const GridHierarchy& g, const CellRange& hcells, const MediumField& m) {
    return assemble_stiffness(g.fine_range(hcells), m);
}

inline SpMat assemble_weighted_mass(const GridHierarchy& g, const CellRange& hcells, const MediumField& m) {
    return assemble_weighted_mass(g.fine_range(hcells), m);
}

/// Load vector int f v for a cell-wise constant f (one value per fine cell).
inline Vec assemble_load(const CellRange& cells, const std::vector<double>& f_cell, int n) {
    const NodeRect nodes = NodeRect::of(cells);
    const double quarter = 0.25 / (static_cast<double>(n) * n);
    Vec b = Vec::Zero(nodes.size());
    for (int j = cells.y0; j < cells.y1; ++j)
        for (int i = cells.x0; i < cells.x1; ++i) {
            const double v = f_cell[static_cast<std::size_t>(j) * n + i] * quarter;
            for (int a : cell_nodes(nodes, i, j)) b[a] += v;
        }
    return b;
}

/// Samples a source at fine cell centres.
inline std::vector<double> sample_cells(int n, const std::function<double(Point)>& f) {
    std::vector<double> out(static_cast<std::size_t>(n) * n);
    for (int j = 0; j < n; ++j)
        for (int i = 0; i < n; ++i) out[static_cast<std::size_t>(j) * n + i] = f({(i + 0.5) / n, (j + 0.5) / n});
    return out;
}

/// Cell averages of a nodal Q1 field on the full n x n grid.
inline std::vector<double> cell_averages(const Vec& u, int n) {
    const NodeRect nodes = NodeRect::of(CellRange{0, n, 0, n});
    std::vector<double> out(static_cast<std::size_t>(n) * n);
    for (int j = 0; j < n; ++j)
        for (int i = 0; i < n; ++i) {
            double s = 0.0;
            for (int a : cell_nodes(nodes, i, j)) s += u[a];
            out[static_cast<std::size_t>(j) * n + i] = 0.25 * s;
        }
    return out;
}

inline double energy_norm(const Vec& u, const SpMat& A) {
    return std::sqrt(std::max(0.0, u.dot(A * u)));
}

// ---------------------------------------------------------------------------
// Linear solvers

enum class Preconditioner { jacobi, incomplete_cholesky };

struct CgOptions {
    double tol = 1e-10;
    int max_iterations = 100000;
    Preconditioner preconditioner = Preconditioner::jacobi;
};

struct CgResult {
    Vec x;
    int iterations = 0;
    double relative_residual = 0.0;
    std::vector<double> history;  // relative residual per iteration
};

/// Preconditioned conjugate gradients for a symmetric positive (semi-)definite
/// system. Throws SolverError with the residual history on non-convergence.
inline CgResult pcg(const SpMat& A, const Vec& b, const CgOptions& opt = {}, const Vec* x0 = nullptr) {
    const Eigen::Index n = b.size();
    CgResult res;
    res.x = x0 ? *x0 : Vec::Zero(n);
    const double bnorm = b.norm();
    if (bnorm == 0.0) {
        res.x.setZero();
        return res;
    }

    std::function<Vec(const Vec&)> apply_prec;
    Vec inv_diag;
    std::optional<Eigen::IncompleteCholesky<double>> ic;
    if (opt.preconditioner == Preconditioner::jacobi) {
        inv_diag = A.diagonal();
        for (Eigen::Index i = 0; i < n; ++i) inv_diag[i] = inv_diag[i] > 0.0 ? 1.0 / inv_diag[i] : 1.0;
        apply_prec = [&](const Vec& r) -> Vec { return inv_diag.cwiseProduct(r); };
    } else {
        ic.emplace();
        ic->compute(A);
        if (ic->info() != Eigen::Success) throw SolverError("incomplete Cholesky factorization failed");
        apply_prec = [&](const Vec& r) -> Vec { return ic->solve(r); };
    }

    Vec r = b - A * res.x;
    Vec z = apply_prec(r);
    Vec p = z;
    double rz = r.dot(z);
    for (int it = 0; it < opt.max_iterations; ++it) {
        const double rel = r.norm() / bnorm;
        res.history.push_back(rel);
        if (rel <= opt.tol) {
            res.iterations = it;
            res.relative_residual = rel;
            return res;
        }
        const Vec Ap = A * p;
        const double pAp = p.dot(Ap);
        if (!(pAp > 0.0)) break;
        const double alpha = rz / pAp;
        res.x += alpha * p;
        r -= alpha * Ap;
        z = apply_prec(r);
        const double rz_new = r.dot(z);
        p = z + (rz_new / rz) * p;
        rz = rz_new;
    }
    const double rel = (b - A * res.x).norm() / bnorm;
    if (rel <= opt.tol) {
        res.iterations = static_cast<int>(res.history.size());
        res.relative_residual = rel;
        return res;
    }
    std::ostringstream os;
    os << "CG did not converge: relative residual " << rel << " after " << res.history.size() << " iterations";
    throw SolverError(os.str(), res.history);
}

/// Dense LDL^T solve; test oracle for small systems.
inline Vec dense_solve(const SpMat& A, const Vec& b) {
    Mat D(A);
    Eigen::LDLT<Mat> ldlt(D);
    if (ldlt.info() != Eigen::Success) throw SolverError("dense factorization failed");
    return ldlt.solve(b);
}

// ---------------------------------------------------------------------------
// Dirichlet elimination

/// System restricted to free nodes. Fixed values are moved to the right-hand side,
/// which keeps the reduced matrix symmetric.
struct ReducedSystem {
    SpMat A;
    Vec b;
    std::vector<int> free_nodes;  // reduced -> full
    Vec fixed_values;             // full-length, meaningful on fixed nodes

    Vec expand(const Vec& x) const {
        Vec full = fixed_values;
        for (std::size_t k = 0; k < free_nodes.size(); ++k) full[free_nodes[k]] = x[static_cast<Eigen::Index>(k)];
        return full;
    }
};

inline ReducedSystem eliminate_dirichlet(const SpMat& A, const Vec& b, const std::vector<char>& fixed,
                                         const Vec& values) {
    const int n = static_cast<int>(A.rows());
    std::vector<int> to_free(n, -1);
    ReducedSystem rs;
    rs.fixed_values = Vec::Zero(n);
    for (int i = 0; i < n; ++i) {
        if (fixed[i]) {
            rs.fixed_values[i] = values[i];
        } else {
            to_free[i] = static_cast<int>(rs.free_nodes.size());
            rs.free_nodes.push_back(i);
        }
    }
    const Vec lift = A * rs.fixed_values;
    std::vector<Triplet> trip;
    trip.reserve(A.nonZeros());
    for (int col = 0; col < A.outerSize(); ++col)
        for (SpMat::InnerIterator it(A, col); it; ++it)
            if (to_free[it.row()] >= 0 && to_free[it.col()] >= 0)
                trip.emplace_back(to_free[it.row()], to_free[it.col()], it.value());
    const int nf = static_cast<int>(rs.free_nodes.size());
    rs.A.resize(nf, nf);
    rs.A.setFromTriplets(trip.begin(), trip.end());
    rs.b.resize(nf);
    for (int k = 0; k < nf; ++k) rs.b[k] = b[rs.free_nodes[k]] - lift[rs.free_nodes[k]];
    return rs;
}

inline std::vector<char> boundary_mask(int n) {
    std::vector<char> mask(static_cast<std::size_t>(n + 1) * (n + 1), 0);
    for (int j = 0; j <= n; ++j)
        for (int i = 0; i <= n; ++i)
            if (i == 0 || j == 0 || i == n || j == n) mask[static_cast<std::size_t>(j) * (n + 1) + i] = 1;
    return mask;
}

// ---------------------------------------------------------------------------
// Fine reference solve

struct FineSolution {
    Vec u;  // nodal values on the full (n+1)^2 lattice
    int iterations = 0;
    double relative_residual = 0.0;
    std::vector<double> history;
};

struct FineSolveOptions {
    CgOptions cg{};
    /// Nonhomogeneous Dirichlet data; when unset dirichlet0 means zero.
    std::function<double(Point)> dirichlet_data;
};

/// a(u, v) = (f, v) on the whole grid. For neumann0 the load is projected onto the
/// compatible subspace and the solution is returned with zero mean.
inline FineSolution solve_fine_reference(const MediumField& m, const std::vector<double>& f_cell,
                                         BoundaryCondition bc, const FineSolveOptions& opt = {}) {
    const int n = m.n;
    const CellRange all{0, n, 0, n};
    const SpMat A = assemble_stiffness(all, m);
    Vec b = assemble_load(all, f_cell, n);
    FineSolution out;
    if (bc == BoundaryCondition::dirichlet0) {
        const auto fixed = boundary_mask(n);
        Vec values = Vec::Zero(A.rows());
        if (opt.dirichlet_data)
            for (int j = 0; j <= n; ++j)
                for (int i = 0; i <= n; ++i)
                    if (fixed[static_cast<std::size_t>(j) * (n + 1) + i])
                        values[j * (n + 1) + i] = opt.dirichlet_data({static_cast<double>(i) / n, static_cast<double>(j) / n});
        const ReducedSystem rs = eliminate_dirichlet(A, b, fixed, values);
        const CgResult cg = pcg(rs.A, rs.b, opt.cg);
        out.u = rs.expand(cg.x);
        out.iterations = cg.iterations;
        out.relative_residual = cg.relative_residual;
        out.history = cg.history;
    } else {
        const Vec w = assemble_load(all, std::vector<double>(static_cast<std::size_t>(n) * n, 1.0), n);
        b -= (b.sum() / w.sum()) * w;
        const CgResult cg = pcg(A, b, opt.cg);
        out.u = cg.x;
        const Vec ones_cell = w / w.sum();
        out.u.array() -= out.u.dot(ones_cell);
        out.iterations = cg.iterations;
        out.relative_residual = cg.relative_residual;
        out.history = cg.history;
    }
    return out;
}

/// L2 norm of (u_h - exact) with 3x3 Gauss quadrature per cell.
inline double l2_error(const Vec& u, int n, const std::function<double(Point)>& exact) {
    static constexpr double gp[3] = {-0.7745966692414834, 0.0, 0.7745966692414834};
    static constexpr double gw[3] = {5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0};
    const double dx = 1.0 / n;
    double sum = 0.0;
    for (int j = 0; j < n; ++j)
        for (int i = 0; i < n; ++i) {
            const double u00 = u[j * (n + 1) + i], u10 = u[j * (n + 1) + i + 1];
            const double u11 = u[(j + 1) * (n + 1) + i + 1], u01 = u[(j + 1) * (n + 1) + i];
            for (int a = 0; a < 3; ++a)
                for (int c = 0; c < 3; ++c) {
                    const double s = 0.5 * (gp[a] + 1.0), t = 0.5 * (gp[c] + 1.0);
                    const double uh = u00 * (1 - s) * (1 - t) + u10 * s * (1 - t) + u11 * s * t + u01 * (1 - s) * t;
                    const double e = uh - exact({(i + s) * dx, (j + t) * dx});
                    sum += gw[a] * gw[c] * 0.25 * dx * dx * e * e;
                }
        }
    return std::sqrt(sum);
}

}  // namespace nlmc
