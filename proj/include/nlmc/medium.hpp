#pragma once

#include "nlmc/types.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

namespace nlmc {

/// Per-fine-cell coefficient, weight and continuum label on an n x n grid.
struct MediumField {
    int n = 0;
    std::vector<double> kappa;
    std::vector<double> kappa_tilde;
    std::vector<int> label;  // 0 = matrix, 1 = channel / fracture

    int index(int i, int j) const { return j * n + i; }
    int num_labels() const {
        return label.empty() ? 0 : *std::max_element(label.begin(), label.end()) + 1;
    }
    Point cell_center(int i, int j) const { return {(i + 0.5) / n, (j + 0.5) / n}; }
};

// ---------------------------------------------------------------------------
// Analytic fields

/// Channelized medium with four bands; the set differences fix the precedence
/// Gamma2 u Gamma3 > Gamma1 > Gamma4 > background.
inline double eval_kappa_ex1(Point p, double eps) {
    if (!(eps > 0.0)) throw std::domain_error("eps must be positive");
    const double x1 = p.x, x2 = p.y;
    const bool g1 = std::abs(x1 - 0.5) < eps && 0.25 < x2 && x2 < 7.0 / 8.0;
    const bool g2 = std::abs((x1 + x2 - 1.0) / std::numbers::sqrt2) < eps && -0.25 < x1 - x2 &&
                    x1 - x2 < 0.75;
    const double s13 = std::sqrt(13.0);
    const bool g3 = std::abs((2.0 * x1 - 3.0 * x2 + 0.2) / s13) < eps &&
                    7.0 / 8.0 < (3.0 * x1 + 2.0 * x2) / s13 && (3.0 * x1 + 2.0 * x2) / s13 < 9.0 / 8.0;
    const bool g4 = std::numbers::sqrt2 *
                            std::abs((x1 - 0.5) * (x1 - 0.5) + (x2 - 0.5) * (x2 - 0.5) - 0.125) <
                        eps &&
                    x1 < 0.5 && x2 < 0.75;
    if (g2 || g3) return 1.0 / eps;
    if (g1) return 3.0 / (10.0 * eps);
    if (g4) return 7.0 / (10.0 * eps);
    return 1.0;
}

/// Sinusoidal channel network: 10 inside the channels, eps / 10000 elsewhere.
inline double eval_kappa_ex2(Point p, double eps) {
    if (!(eps > 0.0)) throw std::domain_error("eps must be positive");
    const double pi = std::numbers::pi;
    const double s1 = std::sin(pi * ((1.0 - p.y) * p.y + p.x) / eps);
    const double s2 = std::sin(pi * (p.y + p.x * p.x) / eps);
    return std::abs(s1 * s2) < 0.2 ? 10.0 : eps / 10000.0;
}

/// Gaussian source centred at (0.9, 0.1).
inline double eval_source_ex1(Point p) {
    const double dx = p.x - 0.9, dy = p.y - 0.1;
    return std::exp(-40.0 * (dx * dx + dy * dy));
}

/// k_r(u) = exp(-a |u|).
inline double relative_permeability(double u, double a) { return std::exp(-a * std::abs(u)); }

// ---------------------------------------------------------------------------
// Construction from a JSON description

struct Segment {
    Point a, b;
};

/// {type: ex1|ex2|fractured|laminate|constant, eps, threshold, kappa_tilde, ...}
struct MediumSpec {
    std::string type = "constant";
    double eps = 0.01;
    std::optional<double> threshold;
    std::string kappa_tilde = "kappa";  // "kappa" | "one"
    double value = 1.0;                 // constant
    std::vector<double> laminate_values{1.0, 10.0};
    std::string laminate_direction = "x";  // stripes vary along x1
    std::vector<Segment> fractures;
    double period = 0.0;  // > 0: fracture segments given in unit-cell coordinates of this period
    double k_matrix = 1.0;
    double k_fracture = 1e3;
};

inline void from_json(const nlohmann::json& j, MediumSpec& s) {
    s.type = j.at("type").get<std::string>();
    s.eps = j.value("eps", s.eps);
    if (j.contains("threshold")) s.threshold = j.at("threshold").get<double>();
    s.kappa_tilde = j.value("kappa_tilde", s.kappa_tilde);
    s.value = j.value("value", s.value);
    if (j.contains("laminate_values")) s.laminate_values = j.at("laminate_values").get<std::vector<double>>();
    s.laminate_direction = j.value("laminate_direction", s.laminate_direction);
    if (j.contains("fractures"))
        for (const auto& f : j.at("fractures")) {
            auto v = f.get<std::vector<double>>();
            if (v.size() != 4) throw ConfigError("medium.fractures: each segment needs 4 numbers");
            s.fractures.push_back({{v[0], v[1]}, {v[2], v[3]}});
        }
    s.period = j.value("period", s.period);
    s.k_matrix = j.value("k_matrix", s.k_matrix);
    s.k_fracture = j.value("k_fracture", s.k_fracture);
}

inline void to_json(nlohmann::json& j, const MediumSpec& s) {
    j = nlohmann::json{{"type", s.type}, {"eps", s.eps}, {"kappa_tilde", s.kappa_tilde}};
    if (s.threshold) j["threshold"] = *s.threshold;
    if (s.type == "constant") j["value"] = s.value;
    if (s.type == "laminate") {
        j["laminate_values"] = s.laminate_values;
        j["laminate_direction"] = s.laminate_direction;
    }
    if (s.type == "fractured") {
        nlohmann::json fr = nlohmann::json::array();
        for (const auto& f : s.fractures) fr.push_back({f.a.x, f.a.y, f.b.x, f.b.y});
        j["fractures"] = fr;
        j["period"] = s.period;
        j["k_matrix"] = s.k_matrix;
        j["k_fracture"] = s.k_fracture;
    }
}

namespace detail {

inline double segment_distance(Point p, const Segment& s) {
    const double vx = s.b.x - s.a.x, vy = s.b.y - s.a.y;
    const double wx = p.x - s.a.x, wy = p.y - s.a.y;
    const double len2 = vx * vx + vy * vy;
    double t = len2 > 0.0 ? (wx * vx + wy * vy) / len2 : 0.0;
    t = std::clamp(t, 0.0, 1.0);
    const double dx = wx - t * vx, dy = wy - t * vy;
    return std::sqrt(dx * dx + dy * dy);
}

}  // namespace detail

/// Marks fine cells whose centre lies within half a fine cell of any segment.
inline std::vector<int> rasterize_fractures(int n, const std::vector<Segment>& segs, double period) {
    std::vector<int> mark(static_cast<std::size_t>(n) * n, 0);
    const double half = 0.5 / n + 1e-12;
    for (int j = 0; j < n; ++j)
        for (int i = 0; i < n; ++i) {
            Point c{(i + 0.5) / n, (j + 0.5) / n};
            double scale = 1.0;
            if (period > 0.0) {
                c = {std::fmod(c.x, period) / period, std::fmod(c.y, period) / period};
                scale = period;
            }
            for (const auto& s : segs)
                if (detail::segment_distance(c, s) * scale <= half) {
                    mark[j * n + i] = 1;
                    break;
                }
        }
    return mark;
}

/// label = 1 where kappa >= threshold, else 0.
inline MediumField label_continua(MediumField m, double threshold) {
    for (std::size_t c = 0; c < m.kappa.size(); ++c) m.label[c] = m.kappa[c] >= threshold ? 1 : 0;
    return m;
}

inline MediumField sample_medium(int n, const std::function<double(Point)>& kappa) {
    MediumField m;
    m.n = n;
    m.kappa.resize(static_cast<std::size_t>(n) * n);
    m.label.assign(m.kappa.size(), 0);
    for (int j = 0; j < n; ++j)
        for (int i = 0; i < n; ++i) m.kappa[m.index(i, j)] = kappa(m.cell_center(i, j));
    m.kappa_tilde = m.kappa;
    return m;
}

inline MediumField build_medium(const MediumSpec& s, int n) {
    MediumField m;
    if (s.type == "ex1") {
        m = sample_medium(n, [&](Point p) { return eval_kappa_ex1(p, s.eps); });
    } else if (s.type == "ex2") {
        m = sample_medium(n, [&](Point p) { return eval_kappa_ex2(p, s.eps); });
    } else if (s.type == "constant") {
        if (!(s.value > 0.0)) throw ConfigError("medium.value must be positive");
        m = sample_medium(n, [&](Point) { return s.value; });
    } else if (s.type == "laminate") {
        if (s.laminate_values.size() != 2) throw ConfigError("medium.laminate_values needs two entries");
        const bool along_x = s.laminate_direction == "x";
        m = sample_medium(n, [&](Point p) {
            const double t = (along_x ? p.x : p.y) / s.eps;
            return t - std::floor(t) < 0.5 ? s.laminate_values[0] : s.laminate_values[1];
        });
    } else if (s.type == "fractured") {
        auto mark = rasterize_fractures(n, s.fractures, s.period);
        m.n = n;
        m.kappa.resize(mark.size());
        m.label = mark;
        for (std::size_t c = 0; c < mark.size(); ++c) m.kappa[c] = mark[c] ? s.k_fracture : s.k_matrix;
        m.kappa_tilde = m.kappa;
    } else {
        throw ConfigError("medium.type: unknown medium '" + s.type + "'");
    }
    if (s.type != "fractured" && s.threshold) m = label_continua(std::move(m), *s.threshold);
    if (s.kappa_tilde == "one") {
        std::fill(m.kappa_tilde.begin(), m.kappa_tilde.end(), 1.0);
    } else if (s.kappa_tilde != "kappa") {
        throw ConfigError("medium.kappa_tilde: expected 'kappa' or 'one'");
    }
    for (double k : m.kappa)
        if (!(k > 0.0)) throw ConfigError("medium: kappa must be positive everywhere");
    return m;
}

/// Copy of m with kappa multiplied cell-wise by factor[c]; weights and labels unchanged.
inline MediumField scale_kappa(const MediumField& m, const std::vector<double>& factor) {
    MediumField out = m;
    for (std::size_t c = 0; c < out.kappa.size(); ++c) out.kappa[c] *= factor[c];
    return out;
}

}  // namespace nlmc
