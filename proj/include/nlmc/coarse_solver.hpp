#pragma once

// Coarse-grid solves: steady Galerkin, implicit Euler and Picard iteration for
// coefficients k_r(u) * k_s(x), plus error metrics against fine references.

#include "nlmc/continua.hpp"
#include "nlmc/fine_fem.hpp"
#include "nlmc/grids.hpp"
#include "nlmc/medium.hpp"
#include "nlmc/nlmc_basis.hpp"
#include "nlmc/upscaling.hpp"

#include <Eigen/SparseCholesky>

#include <functional>
#include <optional>
#include <sstream>

namespace nlmc {

/// Dofs held at zero: inactive dofs, plus every label of boundary coarse nodes
/// under Dirichlet conditions.
inline std::vector<char> coarse_fixed_dofs(const CoarseSystem& sys, BoundaryCondition bc) {
    std::vector<char> fixed(sys.size(), 0);
    const int L = sys.num_labels, n = sys.n_H;
    for (int J = 0; J <= n; ++J)
        for (int I = 0; I <= n; ++I)
            for (int l = 0; l < L; ++l) {
                const int d = (J * (n + 1) + I) * L + l;
                const bool edge = I == 0 || J == 0 || I == n || J == n;
                fixed[d] = !sys.active[d] || (edge && bc == BoundaryCondition::dirichlet0);
            }
    return fixed;
}

struct SteadyResult {
    Vec u;
    int iterations = 0;
    double relative_residual = 0.0;
    std::vector<double> history;
};

/// A u = rhs by preconditioned CG. Under neumann0 the load is made compatible and
/// the result has zero sum over active dofs.
inline SteadyResult solve_steady(const CoarseSystem& sys, BoundaryCondition bc, const CgOptions& cg = {}) {
    const auto fixed = coarse_fixed_dofs(sys, bc);
    const ReducedSystem rs = eliminate_dirichlet(sys.A, sys.rhs, fixed, Vec::Zero(sys.size()));
    Vec b = rs.b;
    if (bc == BoundaryCondition::neumann0) b.array() -= b.mean();
    const CgResult r = pcg(rs.A, b, cg);
    SteadyResult out;
    Vec x = r.x;
    if (bc == BoundaryCondition::neumann0) x.array() -= x.mean();
    out.u = rs.expand(x);
    out.iterations = r.iterations;
    out.relative_residual = r.relative_residual;
    out.history = r.history;
    return out;
}

/// (M + dt A) u = M u_prev + dt rhs with one factorization reused across steps.
class ImplicitEuler {
public:
    ImplicitEuler(const SpMat& M, const SpMat& A, double dt, std::vector<char> fixed)
        : M_(M), fixed_(std::move(fixed)) {
        if (!(dt > 0.0)) throw std::invalid_argument("time step must be positive");
        const SpMat K = M + dt * A;
        dt_ = dt;
        rs_ = eliminate_dirichlet(K, Vec::Zero(K.rows()), fixed_, Vec::Zero(K.rows()));
        if (rs_.A.rows() > 0) {
            ldlt_.compute(rs_.A);
            if (ldlt_.info() != Eigen::Success) throw SolverError("implicit Euler factorization failed");
        }
    }

    Vec step(const Vec& u_prev, const Vec& rhs) const {
        const Vec full = M_ * u_prev + dt_ * rhs;
        Vec b(static_cast<Eigen::Index>(rs_.free_nodes.size()));
        for (std::size_t k = 0; k < rs_.free_nodes.size(); ++k) b[static_cast<Eigen::Index>(k)] = full[rs_.free_nodes[k]];
        if (b.size() == 0) return Vec::Zero(u_prev.size());
        return rs_.expand(ldlt_.solve(b));
    }

private:
    SpMat M_;
    std::vector<char> fixed_;
    double dt_ = 0.0;
    ReducedSystem rs_;
    Eigen::SimplicialLDLT<SpMat> ldlt_;
};

inline Vec step_implicit_euler(const SpMat& M, const SpMat& A, const Vec& rhs, const Vec& u_prev, double dt,
                               const std::vector<char>& fixed = {}) {
    return ImplicitEuler(M, A, dt, fixed.empty() ? std::vector<char>(M.rows(), 0) : fixed).step(u_prev, rhs);
}

/// 1^T M u: total weighted mass of a coarse state.
inline double total_mass(const SpMat& M, const Vec& u) { return (M * u).sum(); }

struct TimeRun {
    std::vector<double> times;  // times[0] = 0
    std::vector<Vec> states;
};

inline TimeRun run_implicit_euler(const CoarseSystem& sys, BoundaryCondition bc, double dt, int steps,
                                  const Vec& u0, bool with_source) {
    const ImplicitEuler ie(sys.M, sys.A, dt, coarse_fixed_dofs(sys, bc));
    const Vec rhs = with_source ? sys.rhs : Vec::Zero(sys.size());
    TimeRun run;
    run.times.push_back(0.0);
    run.states.push_back(u0);
    for (int s = 1; s <= steps; ++s) {
        run.states.push_back(ie.step(run.states.back(), rhs));
        run.times.push_back(s * dt);
    }
    return run;
}

// ---------------------------------------------------------------------------
// Picard iteration

/// Nonlinear coarse problem with k(x, u) = k_r(u_label) * k_s(x). The relative
/// permeability is frozen per coarse element and continuum at the element average
/// of the current coarse iterate.
struct NonlinearProblem {
    GridHierarchy grid;
    MediumField base;  // k_s, labels and weights
    ContinuaSet continua;
    std::vector<double> source;
    double a = 0.1;
    int layers = 2;
    BoundaryCondition bc = BoundaryCondition::neumann0;
    std::vector<double> porosity;
    int workers = worker_count();
};

struct PicardOptions {
    double tol = 1e-6;
    int max_iterations = 50;
    double damping = 1.0;
};

/// Element averages of each label of a coarse state: avg[e * L + l].
inline std::vector<double> element_averages(const GridHierarchy& g, int L, const Vec& u) {
    std::vector<double> avg(static_cast<std::size_t>(g.num_elements()) * L, 0.0);
    for (int e = 0; e < g.num_elements(); ++e) {
        const auto [I, J] = g.element_coords(e);
        for (int l = 0; l < L; ++l) {
            double s = 0.0;
            for (int dj = 0; dj <= 1; ++dj)
                for (int di = 0; di <= 1; ++di) s += u[g.coarse_node_index(I + di, J + dj) * L + l];
            avg[static_cast<std::size_t>(e) * L + l] = 0.25 * s;
        }
    }
    return avg;
}

/// Fine-cell factors k_r(avg of the cell's label over its element).
inline std::vector<double> frozen_factors(const NonlinearProblem& p, const std::vector<double>& avg) {
    const int n = p.grid.n_fine(), L = p.continua.num_labels();
    const int per = p.grid.fine_per_h() * p.grid.h_per_H();
    std::vector<double> f(static_cast<std::size_t>(n) * n);
    for (int j = 0; j < n; ++j)
        for (int i = 0; i < n; ++i) {
            const int e = p.grid.element_index(i / per, j / per);
            const int c = j * n + i;
            f[c] = relative_permeability(avg[static_cast<std::size_t>(e) * L + p.base.label[c]], p.a);
        }
    return f;
}

/// Supplies an element operator without local solves, or declines. Receives the
/// element index and the element averages of the state being frozen.
using ElementOverride = std::function<std::optional<ElementOperator>(int, const std::vector<double>&)>;

/// Coarse system with coefficients frozen at `avg`. Elements not served by the
/// override are assembled from local solves on the frozen medium.
inline CoarseSystem assemble_frozen(const NonlinearProblem& p, const std::vector<double>& avg,
                                    const ElementOverride& override_fn = {}) {
    const GridHierarchy& g = p.grid;
    CoarseSystem sys;
    sys.n_H = g.n_H();
    sys.num_labels = p.continua.num_labels();
    sys.R = coarse_restriction(g, p.continua);
    sys.rhs = Vec::Zero(g.num_coarse_nodes() * sys.num_labels);
    sys.elements.resize(g.num_elements());
    std::vector<int> todo;
    for (int e = 0; e < g.num_elements(); ++e) {
        std::optional<ElementOperator> eo;
        if (override_fn) eo = override_fn(e, avg);
        if (eo) sys.elements[e] = std::move(*eo);
        else todo.push_back(e);
    }
    if (!todo.empty()) {
        const MediumField frozen = scale_kappa(p.base, frozen_factors(p, avg));
        std::vector<char> need(g.num_h_cells(), 0);
        for (int e : todo)
            for (const RvePatch* patch : g.patches_of(e)) {
                const CellRange r = g.oversample(patch->cells, p.layers);
                for (int b = r.y0; b < r.y1; ++b)
                    for (int a = r.x0; a < r.x1; ++a) need[g.h_index(a, b)] = 1;
            }
        std::vector<int> cells;
        for (int x = 0; x < g.num_h_cells(); ++x)
            if (need[x]) cells.push_back(x);
        const auto basis = MultiscaleBasis::build(g, frozen, p.continua, {p.layers, p.bc, p.workers}, cells);
        parallel_for(
            static_cast<int>(todo.size()),
            [&](int t) {
                sys.elements[todo[t]] =
                    assemble_element(basis, g, frozen, p.continua, sys.R, todo[t], &p.source, p.porosity);
            },
            p.workers);
    }
    finalize_coarse(sys);
    if (p.bc == BoundaryCondition::neumann0) apply_conservative_correction(sys);
    return sys;
}

struct PicardStep {
    int iterations = 0;
    std::vector<double> updates;  // relative update per iteration
};

struct PicardRun {
    std::vector<double> times;
    std::vector<Vec> states;
    std::vector<PicardStep> steps;
};

/// Implicit Euler in time with a Picard loop per step. Throws SolverError with
/// the update history when a step does not reach `tol`.
inline PicardRun picard_solve(const NonlinearProblem& p, double dt, int n_steps, const Vec& u0,
                              const PicardOptions& opt = {}, const ElementOverride& override_fn = {},
                              const std::function<void(int, const Vec&, const CoarseSystem&)>& on_iterate = {}) {
    if (p.a < 0.0) throw std::invalid_argument("nonlinearity parameter must be non-negative");
    if (!(opt.tol > 0.0)) throw std::invalid_argument("Picard tolerance must be positive");
    const int L = p.continua.num_labels();
    PicardRun run;
    run.times.push_back(0.0);
    run.states.push_back(u0);
    for (int s = 1; s <= n_steps; ++s) {
        const Vec& un = run.states.back();
        Vec u = un;
        PicardStep st;
        std::vector<double> prev_factors;
        bool done = false;
        for (int it = 1; it <= opt.max_iterations; ++it) {
            const auto avg = element_averages(p.grid, L, u);
            std::vector<double> factors(avg.size());
            for (std::size_t k = 0; k < avg.size(); ++k) factors[k] = relative_permeability(avg[k], p.a);
            if (it > 1 && factors == prev_factors) {
                done = true;  // frozen coefficients unchanged: the last solve is the fixed point
                break;
            }
            prev_factors = factors;
            const CoarseSystem sys = assemble_frozen(p, avg, override_fn);
            if (on_iterate) on_iterate(s, u, sys);
            const Vec unew = ImplicitEuler(sys.M, sys.A, dt, coarse_fixed_dofs(sys, p.bc)).step(un, sys.rhs);
            const Vec next = opt.damping * unew + (1.0 - opt.damping) * u;
            const double upd = (next - u).norm() / std::max(next.norm(), 1e-300);
            st.updates.push_back(upd);
            st.iterations = it;
            u = next;
            if (upd <= opt.tol) {
                done = true;
                break;
            }
        }
        if (!done) {
            std::ostringstream os;
            os << "Picard iteration did not converge at step " << s << " after " << opt.max_iterations
               << " iterations";
            throw SolverError(os.str(), st.updates);
        }
        run.steps.push_back(st);
        run.states.push_back(u);
        run.times.push_back(s * dt);
    }
    return run;
}

// ---------------------------------------------------------------------------
// Error metrics

/// ||a - b|| / ||b|| over matching entries; 0 when both vanish.
inline double relative_l2(const std::vector<double>& a, const std::vector<double>& b) {
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        num += (a[i] - b[i]) * (a[i] - b[i]);
        den += b[i] * b[i];
    }
    if (den == 0.0) return num == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
    return std::sqrt(num / den);
}

/// ||u - ref||_A / ||ref||_A.
inline double relative_energy_error(const Vec& u, const Vec& ref, const SpMat& A) {
    const double den = energy_norm(ref, A);
    const double num = energy_norm(u - ref, A);
    if (den == 0.0) return num == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
    return num / den;
}

/// Average over K(x) of the bilinear coarse field U_label.
inline double coarse_average_on_h_cell(const GridHierarchy& g, const Vec& U, int L, int label, int x) {
    const auto [hx, hy] = g.h_coords(x);
    const int e = hx / g.h_per_H(), f = hy / g.h_per_H();
    double s = 0.0;
    for (int J = f; J <= f + 1; ++J)
        for (int I = e; I <= e + 1; ++I) s += hat_average(g, x, I, J) * U[g.coarse_node_index(I, J) * L + label];
    return s;
}

/// Per coarse element: the mean over its h-cells possessing `label` of the
/// h-cell average of U_label, and the kappa_tilde-weighted average of the fine
/// reference over the label's fine cells. Elements without the label are skipped.
struct ElementComparison {
    std::vector<double> coarse, reference;
    std::vector<int> elements;
};

inline ElementComparison compare_element_averages(const GridHierarchy& g, const ContinuaSet& cs, const MediumField& m,
                                                  const Vec& U, const Vec& u_fine, int label) {
    const int L = cs.num_labels();
    const auto uc = cell_averages(u_fine, g.n_fine());
    ElementComparison out;
    for (int e = 0; e < g.num_elements(); ++e) {
        const CellRange hr = g.element_h_range(e);
        double cs_sum = 0.0;
        int cs_n = 0;
        double wsum = 0.0, wu = 0.0;
        for (int b = hr.y0; b < hr.y1; ++b)
            for (int a = hr.x0; a < hr.x1; ++a) {
                const int x = g.h_index(a, b);
                if (cs.dof_index(x, label) < 0) continue;
                cs_sum += coarse_average_on_h_cell(g, U, L, label, x);
                ++cs_n;
                const CellRange fr = g.fine_range_of_h(x);
                for (int j = fr.y0; j < fr.y1; ++j)
                    for (int i = fr.x0; i < fr.x1; ++i) {
                        const int c = m.index(i, j);
                        if (m.label[c] != label) continue;
                        wsum += m.kappa_tilde[c];
                        wu += m.kappa_tilde[c] * uc[c];
                    }
            }
        if (cs_n == 0) continue;
        out.elements.push_back(e);
        out.coarse.push_back(cs_sum / cs_n);
        out.reference.push_back(wu / wsum);
    }
    return out;
}

}  // namespace nlmc
