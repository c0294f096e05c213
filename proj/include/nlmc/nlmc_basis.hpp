#pragma once

// Constrained energy-minimizing basis functions on oversampled regions.
//
// For h-cell x and continuum j, phi minimizes a(phi, phi) over the region subject
// to int kappa_tilde phi psi_a = delta for every auxiliary dof a of the region.
// The KKT system [A B^T; B 0][phi; -mu] = [0; e] is solved through the Schur
// complement: one sparse Cholesky of A and a small dense Cholesky of B A^-1 B^T,
// shared by all continua of x.

#include "nlmc/continua.hpp"
#include "nlmc/fine_fem.hpp"
#include "nlmc/grids.hpp"
#include "nlmc/medium.hpp"
#include "nlmc/parallel.hpp"

#include <Eigen/SparseCholesky>

#include <array>
#include <map>
#include <sstream>

namespace nlmc {

struct BasisOptions {
    int layers = 3;
    BoundaryCondition bc = BoundaryCondition::dirichlet0;
    int workers = worker_count();
};

struct LocalBasis {
    int cell = -1;
    CellRange region;                  // h-cells
    NodeRect nodes;                    // fine nodes of the region
    std::vector<int> constraint_dofs;  // auxiliary dofs of the region, row order of B
    std::vector<Vec> phi;              // one per continuum of the cell, on `nodes`
    std::vector<Vec> mu;               // multipliers over constraint_dofs
    double kkt_primal = 0.0;           // max relative ||A phi - B^T mu||
    double kkt_constraint = 0.0;       // max |B phi - e|
};

namespace detail {

/// Nodes held at zero: region boundary inside the domain, plus the domain boundary
/// under Dirichlet conditions.
inline std::vector<char> local_fixed_nodes(const CellRange& fr, int n, BoundaryCondition bc) {
    const NodeRect nodes = NodeRect::of(fr);
    std::vector<char> fixed(nodes.size(), 0);
    for (int gj = fr.y0; gj <= fr.y1; ++gj)
        for (int gi = fr.x0; gi <= fr.x1; ++gi) {
            const bool cut = (gi == fr.x0 && fr.x0 > 0) || (gi == fr.x1 && fr.x1 < n) ||
                             (gj == fr.y0 && fr.y0 > 0) || (gj == fr.y1 && fr.y1 < n);
            const bool outer = gi == 0 || gj == 0 || gi == n || gj == n;
            if (cut || (outer && bc == BoundaryCondition::dirichlet0)) fixed[nodes.local(gi, gj)] = 1;
        }
    return fixed;
}

}  // namespace detail

/// Factorized local saddle-point system of one oversampled region; shared by every
/// h-cell whose region coincides (e.g. all cells of a global basis).
struct RegionSystem {
    CellRange region;
    NodeRect nodes;
    std::vector<int> free_nodes;
    SpMat A;  // stiffness on free nodes
    SpMat B;  // constraint rows x free nodes
    std::vector<int> constraint_dofs;
    std::vector<int> row_of;  // auxiliary dof -> row of B, or -1
    Mat W;                    // K^-1 B^T
    Eigen::LLT<Mat> schur;    // B K^-1 B^T
    double rho = 0.0;         // augmentation weight on row 0 when A is singular
};

inline RegionSystem prepare_region(const GridHierarchy& g, const MediumField& m, const ContinuaSet& cs,
                                   const CellRange& region, BoundaryCondition bc, int x) {
    RegionSystem rs;
    rs.region = region;
    const CellRange fr = g.fine_range(region);
    rs.nodes = NodeRect::of(fr);
    const int n = g.n_fine();

    const SpMat A = assemble_stiffness(fr, m);
    const auto fixed = detail::local_fixed_nodes(fr, n, bc);
    std::vector<int> to_free(rs.nodes.size(), -1);
    for (int i = 0; i < rs.nodes.size(); ++i)
        if (!fixed[i]) {
            to_free[i] = static_cast<int>(rs.free_nodes.size());
            rs.free_nodes.push_back(i);
        }
    const int nf = static_cast<int>(rs.free_nodes.size());
    rs.A = eliminate_dirichlet(A, Vec::Zero(A.rows()), fixed, Vec::Zero(A.rows())).A;

    rs.constraint_dofs = cs.dofs_in(region);
    const int r = static_cast<int>(rs.constraint_dofs.size());
    rs.row_of.assign(cs.num_dofs(), -1);
    for (int t = 0; t < r; ++t) rs.row_of[rs.constraint_dofs[t]] = t;

    std::vector<Triplet> bt;
    for (int j = fr.y0; j < fr.y1; ++j)
        for (int i = fr.x0; i < fr.x1; ++i) {
            const int c = m.index(i, j);
            const int a = cs.dof_of_fine(i, j);
            const double w = 0.25 * cs.pairing_weight(c, a);
            for (int node : cell_nodes(rs.nodes, i, j))
                if (to_free[node] >= 0) bt.emplace_back(rs.row_of[a], to_free[node], w);
        }
    rs.B.resize(r, nf);
    rs.B.setFromTriplets(bt.begin(), bt.end());

    auto fail = [&](const std::string& what) {
        std::ostringstream os;
        os << what << " at h-cell " << x << " (" << x % g.n_h() << ", " << x / g.n_h() << ")";
        return SolverError(os.str());
    };

    // Without fixed nodes A is singular (constants). K = A + rho b0 b0^T is definite
    // since b0 . 1 > 0, and K phi = B^T nu with mu = nu - rho e_0 (b0 . phi).
    SpMat K = rs.A;
    if (nf == rs.nodes.size()) {
        const SpMat b0 = rs.B.topRows(1);
        const SpMat outer = SpMat(b0.transpose()) * b0;
        rs.rho = rs.A.diagonal().mean() / std::max(outer.diagonal().maxCoeff(), 1e-300);
        K = rs.A + rs.rho * outer;
    }

    Eigen::SimplicialLLT<SpMat> chol(K);
    if (chol.info() != Eigen::Success) throw fail("local stiffness factorization failed");
    rs.W = chol.solve(Mat(rs.B.transpose()));
    rs.schur.compute(rs.B * rs.W);
    if (rs.schur.info() != Eigen::Success) throw fail("singular constraint system");
    const Vec sd = Mat(rs.schur.matrixL()).diagonal();
    if (sd.minCoeff() <= 1e-10 * sd.maxCoeff()) throw fail("rank-deficient constraint rows");
    return rs;
}

/// Basis functions of every continuum of h-cell x from a prepared region.
inline LocalBasis extract_basis(const RegionSystem& rs, const ContinuaSet& cs, int x) {
    LocalBasis lb;
    lb.cell = x;
    lb.region = rs.region;
    lb.nodes = rs.nodes;
    lb.constraint_dofs = rs.constraint_dofs;
    const int r = static_cast<int>(rs.constraint_dofs.size());
    const int nf = static_cast<int>(rs.free_nodes.size());
    for (int q = 0; q < cs.count(x); ++q) {
        const int dof = cs.first_dof(x) + q;
        Vec e = Vec::Zero(r);
        e[rs.row_of[dof]] = 1.0;
        const Vec nu = rs.schur.solve(e);
        const Vec pf = rs.W * nu;
        Vec mu = nu;
        mu[0] -= rs.rho * e[0];

        const Vec Ap = rs.A * pf;
        const Vec Btmu = rs.B.transpose() * mu;
        const double scale = std::max({Ap.norm(), Btmu.norm(), 1e-300});
        lb.kkt_primal = std::max(lb.kkt_primal, (Ap - Btmu).norm() / scale);
        lb.kkt_constraint = std::max(lb.kkt_constraint, (rs.B * pf - e).cwiseAbs().maxCoeff());

        Vec phi = Vec::Zero(rs.nodes.size());
        for (int k = 0; k < nf; ++k) phi[rs.free_nodes[k]] = pf[k];
        lb.phi.push_back(std::move(phi));
        lb.mu.push_back(std::move(mu));
    }
    return lb;
}

/// Solves the local problems of every continuum of h-cell x.
inline LocalBasis solve_local_basis(const GridHierarchy& g, const MediumField& m, const ContinuaSet& cs, int x,
                                    int layers, BoundaryCondition bc) {
    if (layers < 0) throw std::invalid_argument("layers must be non-negative");
    return extract_basis(prepare_region(g, m, cs, g.oversample(x, layers), bc, x), cs, x);
}

/// Basis functions for a set of h-cells (all by default), indexed by auxiliary dof.
class MultiscaleBasis {
public:
    static MultiscaleBasis build(const GridHierarchy& g, const MediumField& m, const ContinuaSet& cs,
                                 const BasisOptions& opt, const std::vector<int>& cells = {}) {
        MultiscaleBasis b;
        b.layers_ = opt.layers;
        b.n_fine_ = g.n_fine();
        b.local_.resize(g.num_h_cells());
        b.dof_cell_.resize(cs.num_dofs());
        b.dof_slot_.resize(cs.num_dofs());
        for (int a = 0; a < cs.num_dofs(); ++a) {
            b.dof_cell_[a] = cs.dof(a).cell;
            b.dof_slot_[a] = a - cs.first_dof(cs.dof(a).cell);
        }
        std::vector<int> todo = cells;
        if (todo.empty())
            for (int x = 0; x < g.num_h_cells(); ++x) todo.push_back(x);
        // Cells sharing a region share one factorization.
        std::vector<std::vector<int>> groups;
        {
            std::map<std::array<int, 4>, int> by_region;
            for (int x : todo) {
                const CellRange r = g.oversample(x, opt.layers);
                auto [it, fresh] = by_region.emplace(std::array<int, 4>{r.x0, r.x1, r.y0, r.y1},
                                                     static_cast<int>(groups.size()));
                if (fresh) groups.emplace_back();
                groups[it->second].push_back(x);
            }
        }
        parallel_for(
            static_cast<int>(groups.size()),
            [&](int t) {
                const auto& grp = groups[t];
                const RegionSystem rs = prepare_region(g, m, cs, g.oversample(grp[0], opt.layers), opt.bc, grp[0]);
                for (int x : grp) b.local_[x] = extract_basis(rs, cs, x);
            },
            opt.workers);
        return b;
    }

    int layers() const { return layers_; }
    int n_fine() const { return n_fine_; }
    int num_dofs() const { return static_cast<int>(dof_cell_.size()); }
    bool has_cell(int x) const { return local_[x].cell >= 0; }
    bool has(int a) const { return has_cell(dof_cell_[a]); }
    const LocalBasis& local(int x) const { return local_[x]; }

    const Vec& phi(int a) const { return local_[dof_cell_[a]].phi[dof_slot_[a]]; }
    const Vec& mu(int a) const { return local_[dof_cell_[a]].mu[dof_slot_[a]]; }
    const NodeRect& nodes(int a) const { return local_[dof_cell_[a]].nodes; }
    const CellRange& region(int a) const { return local_[dof_cell_[a]].region; }

    /// phi_a extended by zero to the full fine lattice.
    Vec global_phi(int a) const {
        Vec out = Vec::Zero(static_cast<Eigen::Index>(n_fine_ + 1) * (n_fine_ + 1));
        add_scaled(out, a, 1.0);
        return out;
    }

    /// out += s * phi_a on the full lattice.
    void add_scaled(Vec& out, int a, double s) const {
        const NodeRect& nr = nodes(a);
        const Vec& p = phi(a);
        for (int j = 0; j < nr.ny; ++j)
            for (int i = 0; i < nr.nx; ++i)
                out[(nr.y0 + j) * (n_fine_ + 1) + nr.x0 + i] += s * p[j * nr.nx + i];
    }

    double max_kkt_primal() const {
        double w = 0.0;
        for (const auto& l : local_)
            if (l.cell >= 0) w = std::max(w, l.kkt_primal);
        return w;
    }
    double max_kkt_constraint() const {
        double w = 0.0;
        for (const auto& l : local_)
            if (l.cell >= 0) w = std::max(w, l.kkt_constraint);
        return w;
    }

private:
    int layers_ = 0, n_fine_ = 0;
    std::vector<LocalBasis> local_;
    std::vector<int> dof_cell_, dof_slot_;
};

/// P1 v = sum_a v(a) phi_a over all auxiliary dofs; also the downscaled field.
inline Vec downscale(const MultiscaleBasis& b, const Vec& v) {
    Vec out = Vec::Zero(static_cast<Eigen::Index>(b.n_fine() + 1) * (b.n_fine() + 1));
    for (int a = 0; a < b.num_dofs(); ++a)
        if (v[a] != 0.0) b.add_scaled(out, a, v[a]);
    return out;
}

/// P1 restricted to the dofs of one continuum label; v has one entry per such dof.
inline Vec downscale_k(const MultiscaleBasis& b, const ContinuaSet& cs, const Vec& v, int k) {
    Vec all = Vec::Zero(cs.num_dofs());
    const auto ids = cs.dofs_of_label(k);
    for (std::size_t t = 0; t < ids.size(); ++t) all[ids[t]] = v[static_cast<Eigen::Index>(t)];
    return downscale(b, all);
}

/// Energy a(u, u) of a nodal field restricted to a fine-cell range, cell by cell.
inline std::vector<double> cell_energies(const Vec& u, const NodeRect& nodes, const CellRange& cells,
                                         const MediumField& m) {
    std::vector<double> e(static_cast<std::size_t>(cells.count()), 0.0);
    int t = 0;
    for (int j = cells.y0; j < cells.y1; ++j)
        for (int i = cells.x0; i < cells.x1; ++i, ++t) {
            const auto nd = cell_nodes(nodes, i, j);
            double s = 0.0;
            for (int a = 0; a < 4; ++a)
                for (int c = 0; c < 4; ++c) s += u[nd[a]] * kQ1Stiffness[a][c] * u[nd[c]];
            e[t] = m.kappa[m.index(i, j)] * s;
        }
    return e;
}

/// Fraction of a(phi_a, phi_a) carried by the h-cells at Chebyshev distance l from
/// the owning cell, for l = 0 .. (largest distance in the region).
inline std::vector<double> decay_profile(const MultiscaleBasis& b, const GridHierarchy& g, const MediumField& m,
                                         const ContinuaSet& cs, int a) {
    const int x = cs.dof(a).cell;
    const auto [xa, xb] = g.h_coords(x);
    const CellRange reg = b.region(a);
    const CellRange fr = g.fine_range(reg);
    const auto e = cell_energies(b.phi(a), b.nodes(a), fr, m);
    int maxd = 0;
    for (int q = reg.y0; q < reg.y1; ++q)
        for (int p = reg.x0; p < reg.x1; ++p) maxd = std::max(maxd, std::max(std::abs(p - xa), std::abs(q - xb)));
    std::vector<double> frac(maxd + 1, 0.0);
    double total = 0.0;
    int t = 0;
    const int f = g.fine_per_h();
    for (int j = fr.y0; j < fr.y1; ++j)
        for (int i = fr.x0; i < fr.x1; ++i, ++t) {
            const int d = std::max(std::abs(i / f - xa), std::abs(j / f - xb));
            frac[d] += e[t];
            total += e[t];
        }
    if (total > 0.0)
        for (double& v : frac) v /= total;
    return frac;
}

}  // namespace nlmc
