#pragma once

// Nonlocal transmissibilities between auxiliary dofs and their reduction to the
// coarse bilinear space through RVE quadrature.
//
// Coarse unknowns are (coarse node p, continuum label j), flat index p * L + j.
// R_H maps a coarse field U_j to auxiliary coefficients
//     (R_H U)(x, j) = mean_j(x) * average of U_j over K(x),
// i.e. the coefficient that the downscaled field needs so that its continuum-j
// average over K(x) equals that of U_j.

#include "nlmc/continua.hpp"
#include "nlmc/fine_fem.hpp"
#include "nlmc/grids.hpp"
#include "nlmc/nlmc_basis.hpp"
#include "nlmc/parallel.hpp"

#include <map>
#include <set>

namespace nlmc {

// ---------------------------------------------------------------------------
// Auxiliary-level quantities

/// kappabar(a, b) = a(phi_a, phi_b), evaluated on the region of a. Entry (b, a) is
/// computed independently from the region of b, so symmetry is a real check.
/// Entries below drop_tol * max |kappabar| are removed.
inline SpMat assemble_kappabar(const MultiscaleBasis& b, const GridHierarchy& g, const MediumField& m,
                               const ContinuaSet& cs, double drop_tol = 1e-12) {
    const int nd = cs.num_dofs();
    std::vector<std::vector<Triplet>> rows(nd);
    parallel_for(nd, [&](int a) {
        if (!b.has(a)) return;
        const CellRange reg = b.region(a);
        const NodeRect& na = b.nodes(a);
        const Vec ga = assemble_stiffness(g.fine_range(reg), m) * b.phi(a);
        for (int c : cs.dofs_in(g.oversample(reg, b.layers()))) {
            if (!b.has(c)) continue;
            const NodeRect& nc = b.nodes(c);
            const int x0 = std::max(na.x0, nc.x0), x1 = std::min(na.x0 + na.nx, nc.x0 + nc.nx);
            const int y0 = std::max(na.y0, nc.y0), y1 = std::min(na.y0 + na.ny, nc.y0 + nc.ny);
            if (x0 >= x1 || y0 >= y1) continue;
            const Vec& pc = b.phi(c);
            double s = 0.0;
            for (int j = y0; j < y1; ++j)
                for (int i = x0; i < x1; ++i) s += ga[na.local(i, j)] * pc[nc.local(i, j)];
            if (s != 0.0) rows[a].emplace_back(a, c, s);
        }
    });
    double big = 0.0;
    for (const auto& r : rows)
        for (const auto& t : r) big = std::max(big, std::abs(t.value()));
    std::vector<Triplet> all;
    for (const auto& r : rows)
        for (const auto& t : r)
            if (std::abs(t.value()) >= drop_tol * big) all.push_back(t);
    SpMat K(nd, nd);
    K.setFromTriplets(all.begin(), all.end());
    return K;
}

/// ftilde(a) = int f phi_a for a cell-wise constant source.
inline Vec assemble_upscaled_rhs(const MultiscaleBasis& b, const GridHierarchy& g, const ContinuaSet& cs,
                                 const std::vector<double>& f_cell) {
    Vec out = Vec::Zero(cs.num_dofs());
    for (int a = 0; a < cs.num_dofs(); ++a)
        if (b.has(a)) out[a] = assemble_load(g.fine_range(b.region(a)), f_cell, g.n_fine()).dot(b.phi(a));
    return out;
}

/// Galerkin solve in the span of all basis functions: kappabar u = ftilde.
inline Vec solve_aux_system(const SpMat& kappabar, const Vec& ftilde) {
    const SpMat sym = 0.5 * (kappabar + SpMat(kappabar.transpose()));
    Eigen::SimplicialLDLT<SpMat> ldlt(sym);
    if (ldlt.info() != Eigen::Success) throw SolverError("auxiliary system factorization failed");
    return ldlt.solve(ftilde);
}

// ---------------------------------------------------------------------------
// Coarse space

/// Average over h-cell x of the bilinear hat function of coarse node (I, J). Exact:
/// every h-cell lies inside one coarse element, where the hat is bilinear.
inline double hat_average(const GridHierarchy& g, int x, int I, int J) {
    const Point c = g.h_center(x);
    const double H = g.H();
    const double hx = std::max(0.0, 1.0 - std::abs(c.x - I * H) / H);
    const double hy = std::max(0.0, 1.0 - std::abs(c.y - J * H) / H);
    return hx * hy;
}

/// Sparse R_H: rows are auxiliary dofs, columns coarse dofs p * L + label.
inline SpMat coarse_restriction(const GridHierarchy& g, const ContinuaSet& cs) {
    const int L = cs.num_labels();
    const int k = g.h_per_H();
    std::vector<Triplet> trip;
    for (int a = 0; a < cs.num_dofs(); ++a) {
        const int x = cs.dof(a).cell;
        const auto [hx, hy] = g.h_coords(x);
        const int e = hx / k, f = hy / k;
        for (int J = f; J <= f + 1; ++J)
            for (int I = e; I <= e + 1; ++I) {
                const double v = hat_average(g, x, I, J);
                if (v != 0.0) trip.emplace_back(a, g.coarse_node_index(I, J) * L + cs.dof(a).label, cs.mean(a) * v);
            }
    }
    SpMat R(cs.num_dofs(), g.num_coarse_nodes() * L);
    R.setFromTriplets(trip.begin(), trip.end());
    return R;
}

/// Coarse nodal field for U_j(x) = fn(x, j) on every label.
inline Vec interpolate_coarse(const GridHierarchy& g, int num_labels, const std::function<double(Point, int)>& fn) {
    Vec u(g.num_coarse_nodes() * num_labels);
    for (int J = 0; J <= g.n_H(); ++J)
        for (int I = 0; I <= g.n_H(); ++I)
            for (int l = 0; l < num_labels; ++l)
                u[g.coarse_node_index(I, J) * num_labels + l] = fn({I * g.H(), J * g.H()}, l);
    return u;
}

// ---------------------------------------------------------------------------
// RVE quadrature

/// Energy pairing and load restricted to one patch: for every auxiliary dof a in
/// the oversampled patch, kappabar_P(a, b) = int_P kappa grad phi_a . grad phi_b
/// and f_P(a) = int_P f phi_a.
struct PatchOperator {
    std::vector<int> dofs;
    Mat kappabar;
    Vec load;
};

inline PatchOperator assemble_patch(const MultiscaleBasis& b, const GridHierarchy& g, const MediumField& m,
                                    const ContinuaSet& cs, const RvePatch& p, const std::vector<double>* f_cell) {
    PatchOperator po;
    po.dofs = cs.dofs_in(g.oversample(p.cells, b.layers()));
    const CellRange fr = g.fine_range(p.cells);
    const NodeRect np = NodeRect::of(fr);
    Mat Phi = Mat::Zero(np.size(), static_cast<Eigen::Index>(po.dofs.size()));
    for (std::size_t t = 0; t < po.dofs.size(); ++t) {
        const int a = po.dofs[t];
        if (!b.has(a)) throw std::logic_error("basis missing for a dof of an RVE neighbourhood");
        const NodeRect& na = b.nodes(a);
        const Vec& phi = b.phi(a);
        const int x0 = std::max(na.x0, np.x0), x1 = std::min(na.x0 + na.nx, np.x0 + np.nx);
        const int y0 = std::max(na.y0, np.y0), y1 = std::min(na.y0 + na.ny, np.y0 + np.ny);
        for (int j = y0; j < y1; ++j)
            for (int i = x0; i < x1; ++i) Phi(np.local(i, j), static_cast<Eigen::Index>(t)) = phi[na.local(i, j)];
    }
    const SpMat K = assemble_stiffness(fr, m);
    po.kappabar = Phi.transpose() * (K * Phi);
    po.kappabar = 0.5 * (po.kappabar + po.kappabar.transpose()).eval();
    po.load = f_cell ? Vec(Phi.transpose() * assemble_load(fr, *f_cell, g.n_fine())) : Vec::Zero(po.dofs.size());
    return po;
}

/// Contribution of one coarse element to the coarse operators, over the coarse
/// dofs listed in `cols`.
struct ElementOperator {
    int element = -1;
    std::vector<int> cols;
    Mat A;
    Vec rhs;
    Mat M;
};

/// Dense restriction rows of R_H for the given auxiliary dofs; fills `cols` with
/// the coarse dofs they touch.
inline Mat restriction_block(const SpMat& R, const std::vector<int>& dofs, std::vector<int>& cols) {
    const SpMat Rt = R.transpose();  // column access by auxiliary dof
    std::map<int, int> pos;
    for (int a : dofs)
        for (SpMat::InnerIterator it(Rt, a); it; ++it) pos.emplace(static_cast<int>(it.row()), 0);
    cols.clear();
    for (auto& [c, i] : pos) {
        i = static_cast<int>(cols.size());
        cols.push_back(c);
    }
    Mat B = Mat::Zero(static_cast<Eigen::Index>(dofs.size()), static_cast<Eigen::Index>(cols.size()));
    for (std::size_t t = 0; t < dofs.size(); ++t)
        for (SpMat::InnerIterator it(Rt, dofs[t]); it; ++it)
            B(static_cast<Eigen::Index>(t), pos[static_cast<int>(it.row())]) = it.value();
    return B;
}

struct UpscaleOptions {
    int layers = 3;
    BoundaryCondition bc = BoundaryCondition::dirichlet0;
    std::vector<double> porosity;  // per label, default 1
    int workers = worker_count();
};

/// Sum over the patches of an element of w_P R_P^T kappabar_P R_P (and the load
/// and mass analogues). The mass pairs R rows of the auxiliary dofs inside the
/// patch itself, scaled by the porosity of their label.
inline ElementOperator assemble_element(const MultiscaleBasis& b, const GridHierarchy& g, const MediumField& m,
                                        const ContinuaSet& cs, const SpMat& R, int element,
                                        const std::vector<double>* f_cell, const std::vector<double>& porosity) {
    const auto patches = g.patches_of(element);
    if (patches.empty()) throw ConfigError("coarse element without RVE coverage");
    std::vector<int> all_dofs;
    std::vector<PatchOperator> ops;
    for (const RvePatch* p : patches) {
        ops.push_back(assemble_patch(b, g, m, cs, *p, f_cell));
        all_dofs.insert(all_dofs.end(), ops.back().dofs.begin(), ops.back().dofs.end());
    }
    std::sort(all_dofs.begin(), all_dofs.end());
    all_dofs.erase(std::unique(all_dofs.begin(), all_dofs.end()), all_dofs.end());

    ElementOperator eo;
    eo.element = element;
    std::vector<int> cols;
    restriction_block(R, all_dofs, cols);
    eo.cols = cols;
    const int nc = static_cast<int>(cols.size());
    eo.A = Mat::Zero(nc, nc);
    eo.M = Mat::Zero(nc, nc);
    eo.rhs = Vec::Zero(nc);
    std::map<int, int> colpos;
    for (int i = 0; i < nc; ++i) colpos[cols[i]] = i;

    for (std::size_t q = 0; q < ops.size(); ++q) {
        const RvePatch& p = *patches[q];
        std::vector<int> pc;
        const Mat Rp = restriction_block(R, ops[q].dofs, pc);
        const Mat Ap = p.weight * (Rp.transpose() * ops[q].kappabar * Rp);
        const Vec fp = p.weight * (Rp.transpose() * ops[q].load);
        // Mass: only the dofs of h-cells inside the patch.
        Mat Mp = Mat::Zero(Rp.cols(), Rp.cols());
        for (std::size_t t = 0; t < ops[q].dofs.size(); ++t) {
            const int a = ops[q].dofs[t];
            if (!p.cells.contains(g.h_coords(cs.dof(a).cell)[0], g.h_coords(cs.dof(a).cell)[1])) continue;
            const int lab = cs.dof(a).label;
            const double c = porosity.empty() ? 1.0 : porosity.at(lab);
            const auto row = Rp.row(static_cast<Eigen::Index>(t));
            Mp += p.weight * c * (row.transpose() * row);
        }
        for (std::size_t i = 0; i < pc.size(); ++i) {
            const int ii = colpos.at(pc[i]);
            eo.rhs[ii] += fp[static_cast<Eigen::Index>(i)];
            for (std::size_t j = 0; j < pc.size(); ++j) {
                const int jj = colpos.at(pc[j]);
                eo.A(ii, jj) += Ap(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
                eo.M(ii, jj) += Mp(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
            }
        }
    }
    return eo;
}

/// h-cells whose basis functions the RVE quadrature needs.
inline std::vector<int> required_cells(const GridHierarchy& g, int layers) {
    std::vector<char> need(g.num_h_cells(), 0);
    for (const auto& p : g.patches()) {
        const CellRange r = g.oversample(p.cells, layers);
        for (int b = r.y0; b < r.y1; ++b)
            for (int a = r.x0; a < r.x1; ++a) need[g.h_index(a, b)] = 1;
    }
    std::vector<int> out;
    for (int x = 0; x < g.num_h_cells(); ++x)
        if (need[x]) out.push_back(x);
    return out;
}

/// Assembled coarse operators over the full index space nodes * L.
struct CoarseSystem {
    int n_H = 0;
    int num_labels = 1;
    SpMat A;
    SpMat M;
    Vec rhs;
    SpMat R;
    std::vector<char> active;  // dofs with a nonzero operator row
    std::vector<ElementOperator> elements;

    int size() const { return static_cast<int>(rhs.size()); }
};

/// Scatters element operators into global matrices and marks active dofs.
inline void finalize_coarse(CoarseSystem& cs) {
    const int n = cs.size();
    std::vector<Triplet> ta, tm;
    cs.rhs = Vec::Zero(n);
    for (const auto& eo : cs.elements) {
        for (std::size_t i = 0; i < eo.cols.size(); ++i) {
            cs.rhs[eo.cols[i]] += eo.rhs[static_cast<Eigen::Index>(i)];
            for (std::size_t j = 0; j < eo.cols.size(); ++j) {
                const auto ii = static_cast<Eigen::Index>(i), jj = static_cast<Eigen::Index>(j);
                if (eo.A(ii, jj) != 0.0) ta.emplace_back(eo.cols[i], eo.cols[j], eo.A(ii, jj));
                if (eo.M(ii, jj) != 0.0) tm.emplace_back(eo.cols[i], eo.cols[j], eo.M(ii, jj));
            }
        }
    }
    cs.A.resize(n, n);
    cs.A.setFromTriplets(ta.begin(), ta.end());
    cs.M.resize(n, n);
    cs.M.setFromTriplets(tm.begin(), tm.end());
    const Vec da = cs.A.diagonal(), dm = cs.M.diagonal();
    const double sa = da.cwiseAbs().maxCoeff(), sm = dm.cwiseAbs().maxCoeff();
    cs.active.assign(n, 0);
    for (int i = 0; i < n; ++i) cs.active[i] = (da[i] > 1e-14 * sa) || (dm[i] > 1e-14 * sm);
}

/// Flux form A <- A - diag(A 1): exact row sums of zero, so a constant state carries
/// no flux and the total mass 1^T M u is conserved under no-flux conditions.
inline void apply_conservative_correction(CoarseSystem& cs) {
    Vec ones = Vec::Zero(cs.size());
    for (int i = 0; i < cs.size(); ++i) ones[i] = cs.active[i] ? 1.0 : 0.0;
    const Vec rowsum = cs.A * ones;
    SpMat D(cs.size(), cs.size());
    std::vector<Triplet> t;
    for (int i = 0; i < cs.size(); ++i)
        if (cs.active[i]) t.emplace_back(i, i, rowsum[i]);
    D.setFromTriplets(t.begin(), t.end());
    cs.A -= D;
}

/// The RVE-quadrature coarse system. Needs basis functions for required_cells().
inline CoarseSystem assemble_coarse_system_rve(const MultiscaleBasis& b, const GridHierarchy& g,
                                               const MediumField& m, const ContinuaSet& cs,
                                               const std::vector<double>* f_cell, const UpscaleOptions& opt) {
    CoarseSystem sys;
    sys.n_H = g.n_H();
    sys.num_labels = cs.num_labels();
    sys.R = coarse_restriction(g, cs);
    sys.rhs = Vec::Zero(g.num_coarse_nodes() * cs.num_labels());
    sys.elements.resize(g.num_elements());
    parallel_for(
        g.num_elements(),
        [&](int e) { sys.elements[e] = assemble_element(b, g, m, cs, sys.R, e, f_cell, opt.porosity); },
        opt.workers);
    finalize_coarse(sys);
    return sys;
}

/// R_H^T kappabar R_H with the global transmissibilities; the full-coverage limit.
inline SpMat galerkin_coarse_matrix(const SpMat& kappabar, const SpMat& R) {
    return SpMat(R.transpose()) * kappabar * R;
}

}  // namespace nlmc
