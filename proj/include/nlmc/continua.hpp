#pragma once

// Continuum test functions on the h-grid and the operators R0, P0 and Pi.
//
// Each h-cell K(x) carries one piecewise-constant function per continuum label
// present in it: psi = c * indicator(label cells of K(x)), with c chosen so that
// int kappa_tilde psi^2 = 1. Fields are handled either as cell fields (one value
// per fine cell) or as nodal Q1 vectors on the full fine lattice.

#include "nlmc/grids.hpp"
#include "nlmc/medium.hpp"
#include "nlmc/types.hpp"

#include <cmath>
#include <vector>

namespace nlmc {

/// Auxiliary degree of freedom: continuum `label` of h-cell `cell`.
struct AuxDof {
    int cell = 0;
    int label = 0;
};

class ContinuaSet {
public:
    /// Drops continua whose area in a cell is below 1e-12 |K(x)|.
    static ContinuaSet build(const GridHierarchy& g, const MediumField& m) {
        if (m.n != g.n_fine()) throw std::invalid_argument("medium and grid disagree on the fine size");
        ContinuaSet s;
        s.n_fine_ = m.n;
        s.fine_per_h_ = g.fine_per_h();
        s.n_h_ = g.n_h();
        s.num_labels_ = std::max(1, m.num_labels());
        s.area_ = 1.0 / (static_cast<double>(m.n) * m.n);
        s.label_ = m.label;
        s.kappa_tilde_ = m.kappa_tilde;
        const int L = s.num_labels_;
        s.offset_.assign(g.num_h_cells() + 1, 0);
        s.index_.assign(static_cast<std::size_t>(g.num_h_cells()) * L, -1);
        const double cell_area = g.h() * g.h();
        for (int x = 0; x < g.num_h_cells(); ++x) {
            const CellRange fr = g.fine_range_of_h(x);
            std::vector<double> wsum(L, 0.0), area(L, 0.0), inv(L, 0.0);
            for (int j = fr.y0; j < fr.y1; ++j)
                for (int i = fr.x0; i < fr.x1; ++i) {
                    const int c = m.index(i, j);
                    wsum[m.label[c]] += m.kappa_tilde[c] * s.area_;
                    area[m.label[c]] += s.area_;
                    inv[m.label[c]] += s.area_ / (m.kappa_tilde[c] * cell_area);
                }
            s.offset_[x + 1] = s.offset_[x];
            for (int l = 0; l < L; ++l) {
                if (area[l] < 1e-12 * cell_area) continue;
                s.index_[static_cast<std::size_t>(x) * L + l] = static_cast<int>(s.dofs_.size());
                s.dofs_.push_back({x, l});
                const double c = 1.0 / std::sqrt(wsum[l]);
                s.coef_.push_back(c);
                s.mean_.push_back(std::sqrt(wsum[l]));
                // Least-squares fit of sum_j omega_j psi_j to 1/(kappa_tilde |K|).
                s.omega_.push_back(inv[l] / (c * area[l]));
                ++s.offset_[x + 1];
            }
        }
        return s;
    }

    int num_dofs() const { return static_cast<int>(dofs_.size()); }
    int num_labels() const { return num_labels_; }
    int n_fine() const { return n_fine_; }
    int num_cells() const { return n_h_ * n_h_; }
    const AuxDof& dof(int a) const { return dofs_[a]; }

    /// Number of continua in h-cell x; their dofs are first_dof(x) .. first_dof(x)+count-1.
    int count(int x) const { return offset_[x + 1] - offset_[x]; }
    int first_dof(int x) const { return offset_[x]; }
    /// Dof of continuum `label` in h-cell x, or -1 when absent.
    int dof_index(int x, int label) const { return index_[static_cast<std::size_t>(x) * num_labels_ + label]; }

    /// Value of psi_a on its support.
    double coefficient(int a) const { return coef_[a]; }
    /// int kappa_tilde psi_a, the R0-image of the constant 1.
    double mean(int a) const { return mean_[a]; }
    double omega(int a) const { return omega_[a]; }

    /// Dofs of all continua of the h-cells in a range, cell by cell.
    std::vector<int> dofs_in(const CellRange& hcells) const {
        std::vector<int> out;
        for (int b = hcells.y0; b < hcells.y1; ++b)
            for (int a = hcells.x0; a < hcells.x1; ++a) {
                const int x = b * n_h_ + a;
                for (int k = 0; k < count(x); ++k) out.push_back(first_dof(x) + k);
            }
        return out;
    }

    /// Dof whose psi is nonzero on fine cell (i, j).
    int dof_of_fine(int i, int j) const {
        const int x = (j / fine_per_h_) * n_h_ + i / fine_per_h_;
        return dof_index(x, label_[static_cast<std::size_t>(j) * n_fine_ + i]);
    }

    /// Fine cells of h-cell x (as a fine range); cells with the dof's label form its support.
    CellRange fine_range(int x) const {
        const int a = x % n_h_, b = x / n_h_, f = fine_per_h_;
        return {a * f, (a + 1) * f, b * f, (b + 1) * f};
    }

    int fine_label(int c) const { return label_[c]; }
    double kappa_tilde(int c) const { return kappa_tilde_[c]; }
    double fine_area() const { return area_; }

    /// Contribution of each support fine cell to int kappa_tilde psi_a v for a
    /// nodal v: weight * (mean of the four corner values).
    double pairing_weight(int fine_cell, int a) const { return kappa_tilde_[fine_cell] * coef_[a] * area_; }

    // -----------------------------------------------------------------------
    // Operators. The "all continua" forms act on every dof at once; the k-forms
    // pick the dofs of label k (one entry per h-cell possessing it).

    /// (R0 u)(a) = int kappa_tilde u psi_a for a cell field u.
    Vec restrict_cells(const std::vector<double>& u) const {
        Vec r = Vec::Zero(num_dofs());
        for (int j = 0; j < n_fine_; ++j)
            for (int i = 0; i < n_fine_; ++i) {
                const int c = j * n_fine_ + i;
                const int a = dof_of_fine(i, j);
                r[a] += pairing_weight(c, a) * u[c];
            }
        return r;
    }

    /// R0 for a nodal Q1 field on the full fine lattice (exact: psi is cell-wise constant).
    Vec restrict_nodal(const Vec& u) const { return restrict_cells(nodal_to_cells(u)); }

    /// P0 v = sum_a v(a) psi_a as a cell field.
    std::vector<double> prolong(const Vec& v) const {
        std::vector<double> out(static_cast<std::size_t>(n_fine_) * n_fine_);
        for (int j = 0; j < n_fine_; ++j)
            for (int i = 0; i < n_fine_; ++i) {
                const int a = dof_of_fine(i, j);
                out[static_cast<std::size_t>(j) * n_fine_ + i] = v[a] * coef_[a];
            }
        return out;
    }

    std::vector<int> dofs_of_label(int k) const {
        std::vector<int> out;
        for (int a = 0; a < num_dofs(); ++a)
            if (dofs_[a].label == k) out.push_back(a);
        return out;
    }

    Vec restrict_k(const std::vector<double>& u, int k) const {
        const Vec all = restrict_cells(u);
        const auto ids = dofs_of_label(k);
        Vec r(static_cast<Eigen::Index>(ids.size()));
        for (std::size_t t = 0; t < ids.size(); ++t) r[static_cast<Eigen::Index>(t)] = all[ids[t]];
        return r;
    }

    std::vector<double> prolong_k(const Vec& v, int k) const {
        Vec all = Vec::Zero(num_dofs());
        const auto ids = dofs_of_label(k);
        for (std::size_t t = 0; t < ids.size(); ++t) all[ids[t]] = v[static_cast<Eigen::Index>(t)];
        return prolong(all);
    }

    /// Pi_k = P0_k o R0_k.
    std::vector<double> project_k(const std::vector<double>& u, int k) const { return prolong_k(restrict_k(u, k), k); }

    /// Norm in L2(kappa_tilde) of a cell field.
    double weighted_norm(const std::vector<double>& u) const {
        double s = 0.0;
        for (std::size_t c = 0; c < u.size(); ++c) s += kappa_tilde_[c] * area_ * u[c] * u[c];
        return std::sqrt(s);
    }

    double weighted_inner(const std::vector<double>& u, const std::vector<double>& v) const {
        double s = 0.0;
        for (std::size_t c = 0; c < u.size(); ++c) s += kappa_tilde_[c] * area_ * u[c] * v[c];
        return s;
    }

    std::vector<double> nodal_to_cells(const Vec& u) const {
        const int n = n_fine_;
        std::vector<double> out(static_cast<std::size_t>(n) * n);
        for (int j = 0; j < n; ++j)
            for (int i = 0; i < n; ++i)
                out[static_cast<std::size_t>(j) * n + i] =
                    0.25 * (u[j * (n + 1) + i] + u[j * (n + 1) + i + 1] + u[(j + 1) * (n + 1) + i] +
                            u[(j + 1) * (n + 1) + i + 1]);
        return out;
    }

    /// Gram matrix of the continua of h-cell x under the kappa_tilde pairing,
    /// integrated cell by cell from the stored values.
    Mat gram(int x) const {
        const int J = count(x);
        Mat G = Mat::Zero(J, J);
        const CellRange fr = fine_range(x);
        for (int j = fr.y0; j < fr.y1; ++j)
            for (int i = fr.x0; i < fr.x1; ++i) {
                const int c = j * n_fine_ + i;
                std::vector<double> val(J, 0.0);
                for (int q = 0; q < J; ++q) {
                    const int a = first_dof(x) + q;
                    if (dofs_[a].label == label_[c]) val[q] = coef_[a];
                }
                for (int p = 0; p < J; ++p)
                    for (int q = 0; q < J; ++q) G(p, q) += kappa_tilde_[c] * area_ * val[p] * val[q];
            }
        return G;
    }

    /// max over cells of |Gram - I|.
    double max_gram_residual() const {
        double worst = 0.0;
        for (int x = 0; x < num_cells(); ++x) {
            const Mat G = gram(x);
            worst = std::max(worst, (G - Mat::Identity(G.rows(), G.cols())).cwiseAbs().maxCoeff());
        }
        return worst;
    }

private:
    int n_fine_ = 0, fine_per_h_ = 1, n_h_ = 0, num_labels_ = 1;
    double area_ = 0.0;
    std::vector<int> label_;
    std::vector<double> kappa_tilde_;
    std::vector<int> offset_, index_;
    std::vector<AuxDof> dofs_;
    std::vector<double> coef_, mean_, omega_;
};

}  // namespace nlmc
