#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace nlmc {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using SpMat = Eigen::SparseMatrix<double>;
using Triplet = Eigen::Triplet<double>;

struct Point {
    double x = 0.0;
    double y = 0.0;
};

/// Half-open index rectangle [x0, x1) x [y0, y1). Used for fine cells and h-cells alike.
struct CellRange {
    int x0 = 0, x1 = 0, y0 = 0, y1 = 0;

    int nx() const { return x1 - x0; }
    int ny() const { return y1 - y0; }
    int count() const { return nx() * ny(); }
    bool empty() const { return nx() <= 0 || ny() <= 0; }
    bool contains(int i, int j) const { return i >= x0 && i < x1 && j >= y0 && j < y1; }
    bool contains(const CellRange& o) const {
        return o.x0 >= x0 && o.x1 <= x1 && o.y0 >= y0 && o.y1 <= y1;
    }
    friend bool operator==(const CellRange&, const CellRange&) = default;
};

inline CellRange intersect(const CellRange& a, const CellRange& b) {
    CellRange r{std::max(a.x0, b.x0), std::min(a.x1, b.x1), std::max(a.y0, b.y0),
                std::min(a.y1, b.y1)};
    if (r.empty()) return CellRange{};
    return r;
}

/// Node lattice spanned by a fine-cell range: (nx+1) x (ny+1) nodes, local row-major.
struct NodeRect {
    int x0 = 0, y0 = 0;  // global node index of the lower-left node
    int nx = 0, ny = 0;  // nodes per axis

    static NodeRect of(const CellRange& cells) {
        return NodeRect{cells.x0, cells.y0, cells.nx() + 1, cells.ny() + 1};
    }
    int size() const { return nx * ny; }
    int local(int gi, int gj) const { return (gj - y0) * nx + (gi - x0); }
    bool contains(int gi, int gj) const {
        return gi >= x0 && gi < x0 + nx && gj >= y0 && gj < y0 + ny;
    }
};

enum class BoundaryCondition { dirichlet0, neumann0 };

inline std::string to_string(BoundaryCondition bc) {
    return bc == BoundaryCondition::dirichlet0 ? "dirichlet0" : "neumann0";
}

/// Invalid grid sizes, media or experiment configuration.
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

/// Linear or nonlinear solver failure; carries the residual history when available.
class SolverError : public std::runtime_error {
public:
    SolverError(const std::string& what, std::vector<double> history = {})
        : std::runtime_error(what), history_(std::move(history)) {}
    const std::vector<double>& history() const { return history_; }

private:
    std::vector<double> history_;
};

}  // namespace nlmc
