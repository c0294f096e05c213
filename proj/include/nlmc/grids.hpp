#pragma once

#include "nlmc/types.hpp"

#include <nlohmann/json.hpp>

#include <array>
#include <cmath>
#include <sstream>
#include <string>
#include <vector>

namespace nlmc {

/// An RVE patch: an axis-aligned block of h-cells inside one coarse element.
struct RvePatch {
    int element = 0;      // coarse element index
    CellRange cells;      // h-cell indices
    Point center;
    double side = 0.0;    // H_RVE
    double weight = 1.0;  // quadrature weight
};

/// Sizes and RVE placement describing a hierarchy. Offsets, when given, are the
/// lower-left corners of the patches relative to their element, in h-cells.
struct GridSpec {
    int n_fine = 0;
    double h = 0.0;
    double H = 0.0;
    double rve_side = 0.0;
    int rves_per_element = 1;
    std::vector<std::array<int, 2>> offsets;
};

inline void to_json(nlohmann::json& j, const GridSpec& s) {
    j = nlohmann::json{{"n_fine", s.n_fine},
                       {"h", s.h},
                       {"H", s.H},
                       {"rve_side", s.rve_side},
                       {"rves_per_element", s.rves_per_element}};
    if (!s.offsets.empty()) j["offsets"] = s.offsets;
}

inline void from_json(const nlohmann::json& j, GridSpec& s) {
    s.n_fine = j.at("n_fine").get<int>();
    s.h = j.at("h").get<double>();
    s.H = j.at("H").get<double>();
    s.rve_side = j.value("rve_side", s.H);
    s.rves_per_element = j.value("rves_per_element", 1);
    if (j.contains("offsets")) s.offsets = j.at("offsets").get<std::vector<std::array<int, 2>>>();
}

namespace detail {

inline int exact_ratio(double num, double den, const std::string& what) {
    double r = num / den;
    long k = std::lround(r);
    if (k <= 0 || std::abs(r - static_cast<double>(k)) > 1e-9 * std::max(1.0, r)) {
        std::ostringstream os;
        os << "non-nested grid sizes: " << what << " (ratio " << r << " is not a positive integer)";
        throw ConfigError(os.str());
    }
    return static_cast<int>(k);
}

}  // namespace detail

/// Fine grid, intermediate h-grid, RVE patches and coarse H-grid on the unit square.
///
/// All levels are uniform and nested: each coarse element is h_per_H x h_per_H
/// h-cells, each h-cell is fine_per_h x fine_per_h fine cells. Cell (i, j) has
/// flat index j * n + i at every level. Immutable after construction.
class GridHierarchy {
public:
    static GridHierarchy build(const GridSpec& spec) {
        if (spec.n_fine <= 0) throw ConfigError("n_fine must be positive");
        const double fine = 1.0 / spec.n_fine;
        if (!(fine < spec.h && spec.h < spec.rve_side + 1e-15 && spec.rve_side <= spec.H + 1e-15 &&
              spec.H <= 1.0 + 1e-15))
            throw ConfigError("grid sizes must satisfy fine < h < rve_side <= H <= 1");

        GridHierarchy g;
        g.spec_ = spec;
        g.n_fine_ = spec.n_fine;
        g.fine_per_h_ = detail::exact_ratio(spec.h, fine, "h is not a multiple of the fine size");
        g.n_h_ = detail::exact_ratio(1.0, spec.h, "h does not divide the domain");
        if (g.n_h_ * g.fine_per_h_ != g.n_fine_)
            throw ConfigError("non-nested grid sizes: fine cells per axis not divisible by h-cells");
        g.h_per_H_ = detail::exact_ratio(spec.H, spec.h, "h does not divide H");
        g.n_H_ = detail::exact_ratio(1.0, spec.H, "H does not divide the domain");
        const int side_h = detail::exact_ratio(spec.rve_side, spec.h, "h does not divide rve_side");
        if (side_h < 2 && side_h != g.h_per_H_)
            throw ConfigError("RVE side must span at least 2 h-cells");
        if (side_h > g.h_per_H_) throw ConfigError("RVE side exceeds the coarse element");
        g.place_patches(side_h);
        return g;
    }

    static GridHierarchy build(int n_fine, double h, double H, double rve_side, int rves_per_element) {
        return build(GridSpec{n_fine, h, H, rve_side, rves_per_element, {}});
    }

    const GridSpec& spec() const { return spec_; }
    int n_fine() const { return n_fine_; }
    double fine_size() const { return 1.0 / n_fine_; }
    int fine_per_h() const { return fine_per_h_; }
    int n_h() const { return n_h_; }
    double h() const { return 1.0 / n_h_; }
    int h_per_H() const { return h_per_H_; }
    int n_H() const { return n_H_; }
    double H() const { return 1.0 / n_H_; }
    int num_h_cells() const { return n_h_ * n_h_; }
    int num_elements() const { return n_H_ * n_H_; }
    int num_fine_cells() const { return n_fine_ * n_fine_; }
    int num_fine_nodes() const { return (n_fine_ + 1) * (n_fine_ + 1); }
    int num_coarse_nodes() const { return (n_H_ + 1) * (n_H_ + 1); }

    /// Anchor of the h-partition: the center of h-cell (0, 0).
    Point x0() const { return {0.5 * h(), 0.5 * h()}; }

    CellRange all_fine() const { return {0, n_fine_, 0, n_fine_}; }
    CellRange all_h() const { return {0, n_h_, 0, n_h_}; }

    int h_index(int a, int b) const { return b * n_h_ + a; }
    std::array<int, 2> h_coords(int idx) const { return {idx % n_h_, idx / n_h_}; }
    Point h_center(int idx) const {
        auto [a, b] = h_coords(idx);
        return {(a + 0.5) * h(), (b + 0.5) * h()};
    }

    /// Fine cells covered by a range of h-cells.
    CellRange fine_range(const CellRange& hcells) const {
        const int f = fine_per_h_;
        return {hcells.x0 * f, hcells.x1 * f, hcells.y0 * f, hcells.y1 * f};
    }
    CellRange fine_range_of_h(int idx) const {
        auto [a, b] = h_coords(idx);
        return fine_range(CellRange{a, a + 1, b, b + 1});
    }
    int h_of_fine(int i, int j) const { return h_index(i / fine_per_h_, j / fine_per_h_); }

    int element_index(int e, int g) const { return g * n_H_ + e; }
    std::array<int, 2> element_coords(int idx) const { return {idx % n_H_, idx / n_H_}; }
    int element_of_h(int idx) const {
        auto [a, b] = h_coords(idx);
        return element_index(a / h_per_H_, b / h_per_H_);
    }
    CellRange element_h_range(int idx) const {
        auto [e, g] = element_coords(idx);
        const int k = h_per_H_;
        return {e * k, (e + 1) * k, g * k, (g + 1) * k};
    }
    int coarse_node_index(int i, int j) const { return j * (n_H_ + 1) + i; }

    /// The h-cell block plus `layers` rings of neighbours, clipped to the domain.
    CellRange oversample(const CellRange& hcells, int layers) const {
        return {std::max(0, hcells.x0 - layers), std::min(n_h_, hcells.x1 + layers),
                std::max(0, hcells.y0 - layers), std::min(n_h_, hcells.y1 + layers)};
    }
    CellRange oversample(int h_cell, int layers) const {
        auto [a, b] = h_coords(h_cell);
        return oversample(CellRange{a, a + 1, b, b + 1}, layers);
    }

    const std::vector<RvePatch>& patches() const { return patches_; }
    std::vector<const RvePatch*> patches_of(int element) const {
        std::vector<const RvePatch*> out;
        for (const auto& p : patches_)
            if (p.element == element) out.push_back(&p);
        return out;
    }

    /// Patch owning an h-cell, or -1.
    int patch_of_h(int idx) const { return patch_of_h_[idx]; }

private:
    void place_patches(int side_h) {
        const int k = h_per_H_;
        std::vector<std::array<int, 2>> offsets = spec_.offsets;
        if (offsets.empty()) {
            const int count = spec_.rves_per_element;
            if (count <= 0) throw ConfigError("rves_per_element must be positive");
            if (count == 1) {
                offsets.push_back({(k - side_h) / 2, (k - side_h) / 2});
            } else {
                if (k % side_h != 0)
                    throw ConfigError("multiple RVEs per element need rve_side dividing H");
                const int slots = k / side_h;
                if (count > slots * slots) throw ConfigError("too many RVEs for the element");
                // Diagonal slots first, then the rest row by row.
                std::vector<std::array<int, 2>> order;
                for (int s = 0; s < slots; ++s) order.push_back({s, s});
                for (int t = 0; t < slots; ++t)
                    for (int s = 0; s < slots; ++s)
                        if (s != t) order.push_back({s, t});
                for (int c = 0; c < count; ++c)
                    offsets.push_back({order[c][0] * side_h, order[c][1] * side_h});
            }
        }
        patch_of_h_.assign(num_h_cells(), -1);
        for (int el = 0; el < num_elements(); ++el) {
            const CellRange er = element_h_range(el);
            const double total_area = static_cast<double>(offsets.size()) * spec_.rve_side * spec_.rve_side;
            for (const auto& off : offsets) {
                RvePatch p;
                p.element = el;
                p.cells = {er.x0 + off[0], er.x0 + off[0] + side_h, er.y0 + off[1], er.y0 + off[1] + side_h};
                if (!er.contains(p.cells)) throw ConfigError("RVE offset places a patch outside its element");
                p.side = side_h * h();
                p.center = {(p.cells.x0 + 0.5 * side_h) * h(), (p.cells.y0 + 0.5 * side_h) * h()};
                p.weight = H() * H() / total_area;
                const int id = static_cast<int>(patches_.size());
                for (int b = p.cells.y0; b < p.cells.y1; ++b)
                    for (int a = p.cells.x0; a < p.cells.x1; ++a) {
                        int& owner = patch_of_h_[h_index(a, b)];
                        if (owner >= 0) throw ConfigError("RVE patches overlap");
                        owner = id;
                    }
                patches_.push_back(p);
            }
        }
    }

    GridSpec spec_;
    int n_fine_ = 0, fine_per_h_ = 0, n_h_ = 0, h_per_H_ = 0, n_H_ = 0;
    std::vector<RvePatch> patches_;
    std::vector<int> patch_of_h_;
};

}  // namespace nlmc
