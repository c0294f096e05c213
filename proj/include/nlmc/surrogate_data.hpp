#pragma once

// Transmissibility datasets for learned surrogates: sample extraction from Picard
// runs, a directory container (JSON manifest + raw little-endian float64 arrays),
// metrics, splits, and a nearest-neighbour table that feeds predictions back into
// the coarse solver.

#include "nlmc/coarse_solver.hpp"

#include <nlohmann/json.hpp>

#include <array>
#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>

namespace nlmc {

inline constexpr int kNumKinds = 5;

/// NN1: T_mm on the horizontal edge, NN2: T_mm on the vertical edge, NN3: T_mf at
/// a node, NN4 / NN5: T_ff on the horizontal / vertical edge. All are taken at the
/// lower-left node n0 of an element: n1 = right neighbour, n3 = upper neighbour.
inline const std::array<const char*, kNumKinds> kKindNames{"NN1", "NN2", "NN3", "NN4", "NN5"};
inline const std::array<const char*, kNumKinds> kKindTargets{
    "T_mm(n0,n1)", "T_mm(n0,n3)", "T_mf(n0,n0)", "T_ff(n0,n1)", "T_ff(n0,n3)"};

/// Transmissibilities of one element operator: minus the off-diagonal entries of
/// its matrix. Missing dofs (absent continuum) give 0.
inline std::array<double, kNumKinds> element_transmissibilities(const ElementOperator& eo, const GridHierarchy& g,
                                                                int num_labels) {
    const auto [I, J] = g.element_coords(eo.element);
    const int L = num_labels;
    auto dof = [&](int i, int j, int l) { return g.coarse_node_index(i, j) * L + l; };
    auto entry = [&](int r, int c) {
        const auto ir = std::find(eo.cols.begin(), eo.cols.end(), r);
        const auto ic = std::find(eo.cols.begin(), eo.cols.end(), c);
        if (ir == eo.cols.end() || ic == eo.cols.end()) return 0.0;
        return eo.A(ir - eo.cols.begin(), ic - eo.cols.begin());
    };
    const int f = std::min(1, L - 1);
    return {-entry(dof(I, J, 0), dof(I + 1, J, 0)), -entry(dof(I, J, 0), dof(I, J + 1, 0)),
            -entry(dof(I, J, 0), dof(I, J, f)), -entry(dof(I, J, f), dof(I + 1, J, f)),
            -entry(dof(I, J, f), dof(I, J + 1, f))};
}

/// Stencil radius in coarse elements covering every local solve behind an element.
inline int stencil_radius(const GridHierarchy& g, int layers) {
    return static_cast<int>(std::ceil(2.0 * layers * g.h() / g.H() - 1e-12));
}

/// Per-kind samples. X is row-major [count, 2, S, S] (matrix then fracture channel
/// of element averages over the stencil), Y is [count], meta is [count, 3]
/// (time step, Picard iteration, element).
struct KindData {
    std::vector<double> X, Y, meta;
    bool has_x = true;
    std::size_t count() const { return Y.size(); }
};

struct Dataset {
    int stencil = 0;  // S = 2R + 1
    int channels = 2;
    std::array<KindData, kNumKinds> kinds;

    std::size_t x_row() const { return static_cast<std::size_t>(channels) * stencil * stencil; }
};

/// X row of an element: element averages of labels 0 and 1 over its stencil.
inline std::vector<double> stencil_features(const GridHierarchy& g, int L, const std::vector<double>& avg, int element,
                                            int radius) {
    const auto [I, J] = g.element_coords(element);
    const int S = 2 * radius + 1;
    std::vector<double> x(static_cast<std::size_t>(2) * S * S, 0.0);
    for (int ch = 0; ch < 2; ++ch)
        for (int dj = -radius; dj <= radius; ++dj)
            for (int di = -radius; di <= radius; ++di) {
                const int e = g.element_index(I + di, J + dj);
                const int l = std::min(ch, L - 1);
                x[(static_cast<std::size_t>(ch) * S + (dj + radius)) * S + (di + radius)] =
                    avg[static_cast<std::size_t>(e) * L + l];
            }
    return x;
}

/// Elements whose full stencil lies inside the domain.
inline std::vector<int> interior_elements(const GridHierarchy& g, int radius) {
    std::vector<int> out;
    for (int e = 0; e < g.num_elements(); ++e) {
        const auto [I, J] = g.element_coords(e);
        if (I - radius >= 0 && J - radius >= 0 && I + radius < g.n_H() && J + radius < g.n_H()) out.push_back(e);
    }
    return out;
}

/// Appends one sample per kind and interior element of a frozen system.
inline void append_samples(Dataset& ds, const NonlinearProblem& p, const std::vector<double>& avg,
                           const CoarseSystem& sys, int step, int iteration) {
    const int R = stencil_radius(p.grid, p.layers);
    ds.stencil = 2 * R + 1;
    for (int e : interior_elements(p.grid, R)) {
        const auto x = stencil_features(p.grid, sys.num_labels, avg, e, R);
        const auto y = element_transmissibilities(sys.elements[e], p.grid, sys.num_labels);
        for (int k = 0; k < kNumKinds; ++k) {
            auto& kd = ds.kinds[k];
            kd.X.insert(kd.X.end(), x.begin(), x.end());
            kd.Y.push_back(y[k]);
            kd.meta.insert(kd.meta.end(), {static_cast<double>(step), static_cast<double>(iteration),
                                           static_cast<double>(e)});
        }
    }
}

/// Runs the Picard solver and records every frozen system as samples.
inline Dataset gen_samples(const NonlinearProblem& p, double dt, int n_steps, const Vec& u0,
                           const PicardOptions& opt = {}) {
    Dataset ds;
    ds.stencil = 2 * stencil_radius(p.grid, p.layers) + 1;
    int last_step = -1, iteration = 0;
    const int L = p.continua.num_labels();
    picard_solve(p, dt, n_steps, u0, opt, {}, [&](int step, const Vec& u, const CoarseSystem& sys) {
        iteration = step == last_step ? iteration + 1 : 1;
        last_step = step;
        append_samples(ds, p, element_averages(p.grid, L, u), sys, step, iteration);
    });
    return ds;
}

/// Recomputes the transmissibilities of `element` from a stored X row alone: the
/// stencil averages fix k_r everywhere the element's local solves can see.
inline std::array<double, kNumKinds> resolve_sample(const NonlinearProblem& p, int element, const double* x) {
    const GridHierarchy& g = p.grid;
    const int L = p.continua.num_labels();
    const int R = stencil_radius(g, p.layers);
    const int S = 2 * R + 1;
    std::vector<double> avg(static_cast<std::size_t>(g.num_elements()) * L, 0.0);
    const auto [I, J] = g.element_coords(element);
    for (int l = 0; l < L; ++l)
        for (int dj = -R; dj <= R; ++dj)
            for (int di = -R; di <= R; ++di)
                avg[static_cast<std::size_t>(g.element_index(I + di, J + dj)) * L + l] =
                    x[(static_cast<std::size_t>(l) * S + (dj + R)) * S + (di + R)];
    const MediumField frozen = scale_kappa(p.base, frozen_factors(p, avg));
    std::vector<int> cells;
    for (const RvePatch* patch : g.patches_of(element)) {
        const CellRange r = g.oversample(patch->cells, p.layers);
        for (int b = r.y0; b < r.y1; ++b)
            for (int a = r.x0; a < r.x1; ++a) cells.push_back(g.h_index(a, b));
    }
    const auto basis = MultiscaleBasis::build(g, frozen, p.continua, {p.layers, p.bc, 1}, cells);
    const SpMat Rh = coarse_restriction(g, p.continua);
    const auto eo = assemble_element(basis, g, frozen, p.continua, Rh, element, &p.source, p.porosity);
    return element_transmissibilities(eo, g, L);
}

// ---------------------------------------------------------------------------
// Container

namespace detail {

inline void write_f64(const std::filesystem::path& path, const std::vector<double>& v) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    if constexpr (std::endian::native == std::endian::little) {
        out.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(double)));
    } else {
        for (double d : v) {
            auto bits = std::bit_cast<std::uint64_t>(d);
            unsigned char b[8];
            for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(bits >> (8 * i));
            out.write(reinterpret_cast<const char*>(b), 8);
        }
    }
    if (!out) throw std::runtime_error("write failed: " + path.string());
}

inline std::vector<double> read_f64(const std::filesystem::path& path, std::size_t expected) {
    std::ifstream in(path, std::ios::binary | std::ios::ate);
    if (!in) throw std::runtime_error("missing file: " + path.string());
    const auto bytes = static_cast<std::size_t>(in.tellg());
    if (bytes != expected * sizeof(double))
        throw std::runtime_error("size mismatch in " + path.string() + ": expected " +
                                 std::to_string(expected) + " values");
    in.seekg(0);
    std::vector<double> v(expected);
    if constexpr (std::endian::native == std::endian::little) {
        in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(bytes));
    } else {
        for (auto& d : v) {
            unsigned char b[8];
            in.read(reinterpret_cast<char*>(b), 8);
            std::uint64_t bits = 0;
            for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(b[i]) << (8 * i);
            d = std::bit_cast<double>(bits);
        }
    }
    return v;
}

inline std::pair<double, double> mean_std(const std::vector<double>& v) {
    if (v.empty()) return {0.0, 1.0};
    double m = 0.0;
    for (double d : v) m += d;
    m /= static_cast<double>(v.size());
    double s = 0.0;
    for (double d : v) s += (d - m) * (d - m);
    s = std::sqrt(s / static_cast<double>(v.size()));
    return {m, s > 0.0 ? s : 1.0};
}

}  // namespace detail

/// Writes manifest.json and <kind>_{X,Y,meta}.f64 into `dir`.
inline void export_dataset(const Dataset& ds, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    nlohmann::json man;
    man["format"] = "nlmc-transmissibility-dataset";
    man["version"] = 1;
    man["byte_order"] = "little";
    man["dtype"] = "float64";
    man["stencil"] = ds.stencil;
    man["channels"] = ds.channels;
    man["kinds"] = nlohmann::json::array();
    for (int k = 0; k < kNumKinds; ++k) {
        const auto& kd = ds.kinds[k];
        const std::string name = kKindNames[k];
        const auto n = kd.count();
        nlohmann::json e;
        e["name"] = name;
        e["target"] = kKindTargets[k];
        e["count"] = n;
        const auto [ym, ys] = detail::mean_std(kd.Y);
        e["y_shape"] = {n};
        e["y_file"] = name + "_Y.f64";
        e["y_mean"] = ym;
        e["y_std"] = ys;
        detail::write_f64(dir / (name + "_Y.f64"), kd.Y);
        if (kd.meta.size() == 3 * n) {
            e["meta_shape"] = {n, 3};
            e["meta_columns"] = {"step", "iteration", "element"};
            e["meta_file"] = name + "_meta.f64";
            detail::write_f64(dir / (name + "_meta.f64"), kd.meta);
        } else {
            e["meta_file"] = nullptr;
        }
        if (kd.has_x) {
            const auto [xm, xs] = detail::mean_std(kd.X);
            e["x_shape"] = {n, ds.channels, ds.stencil, ds.stencil};
            e["x_file"] = name + "_X.f64";
            e["x_mean"] = xm;
            e["x_std"] = xs;
            detail::write_f64(dir / (name + "_X.f64"), kd.X);
        } else {
            e["x_file"] = nullptr;
        }
        man["kinds"].push_back(e);
    }
    std::ofstream(dir / "manifest.json") << man.dump(2) << "\n";
}

/// Reads a container written by export_dataset (or a prediction container, whose
/// kinds may omit X and meta).
inline Dataset import_dataset(const std::filesystem::path& dir) {
    std::ifstream in(dir / "manifest.json");
    if (!in) throw std::runtime_error("missing file: " + (dir / "manifest.json").string());
    const auto man = nlohmann::json::parse(in);
    Dataset ds;
    ds.stencil = man.at("stencil").get<int>();
    ds.channels = man.value("channels", 2);
    const auto& kinds = man.at("kinds");
    if (kinds.size() != kNumKinds) throw std::runtime_error("manifest must list five kinds");
    for (int k = 0; k < kNumKinds; ++k) {
        const auto& e = kinds[k];
        if (e.at("name").get<std::string>() != kKindNames[k]) throw std::runtime_error("unexpected kind order");
        const std::size_t n = e.at("count").get<std::size_t>();
        auto& kd = ds.kinds[k];
        kd.Y = detail::read_f64(dir / e.at("y_file").get<std::string>(), n);
        if (e.contains("meta_file") && !e["meta_file"].is_null())
            kd.meta = detail::read_f64(dir / e["meta_file"].get<std::string>(), n * 3);
        kd.has_x = e.contains("x_file") && !e["x_file"].is_null();
        if (kd.has_x) kd.X = detail::read_f64(dir / e["x_file"].get<std::string>(), n * ds.x_row());
    }
    return ds;
}

// ---------------------------------------------------------------------------
// Metrics and splits

struct Score {
    double mse = 0.0;       // sum of squared errors
    double rmse_pct = 0.0;  // sqrt(sum |Y - P|^2 / sum |Y|^2) * 100
    double mae_pct = 0.0;   // sum |Y - P| / sum |Y| * 100
};

inline Score score(const std::vector<double>& predicted, const std::vector<double>& reference) {
    if (predicted.size() != reference.size()) throw std::invalid_argument("score: length mismatch");
    double se = 0.0, sy2 = 0.0, ae = 0.0, ay = 0.0;
    for (std::size_t i = 0; i < reference.size(); ++i) {
        const double d = reference[i] - predicted[i];
        se += d * d;
        sy2 += reference[i] * reference[i];
        ae += std::abs(d);
        ay += std::abs(reference[i]);
    }
    Score s;
    s.mse = se;
    s.rmse_pct = sy2 > 0.0 ? std::sqrt(se / sy2) * 100.0 : 0.0;
    s.mae_pct = ay > 0.0 ? ae / ay * 100.0 : 0.0;
    return s;
}

/// Seeded shuffle split into train (first round(frac * n)) and test indices.
inline std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_indices(std::size_t n, std::uint64_t seed,
                                                                                    double train_fraction = 0.8) {
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    std::mt19937_64 rng(seed);
    for (std::size_t i = n; i > 1; --i) {
        std::uniform_int_distribution<std::size_t> pick(0, i - 1);
        std::swap(idx[i - 1], idx[pick(rng)]);
    }
    const auto cut = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(n)));
    return {std::vector<std::size_t>(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(cut)),
            std::vector<std::size_t>(idx.begin() + static_cast<std::ptrdiff_t>(cut), idx.end())};
}

// ---------------------------------------------------------------------------
// Predictions back into the solver

/// Nearest-neighbour lookup of predicted transmissibilities by stencil features
/// (one shared scale per kind, so raw distances rank the same). Interior elements get the linear
/// element operator with blocks rescaled by predicted / linear transmissibility:
/// the mm block by the mean NN1/NN2 ratio, mf by NN3, ff by the mean NN4/NN5 ratio.
class SurrogateTable {
public:
    SurrogateTable(const NonlinearProblem& p, Dataset stencils, Dataset predictions)
        : p_(&p), x_(std::move(stencils)), y_(std::move(predictions)) {
        for (int k = 0; k < kNumKinds; ++k)
            if (x_.kinds[k].count() != y_.kinds[k].count())
                throw std::runtime_error(std::string("prediction count mismatch for ") + kKindNames[k]);
        radius_ = stencil_radius(p.grid, p.layers);
        if (x_.stencil != 2 * radius_ + 1) throw std::runtime_error("stencil size does not match the problem");
        linear_ = assemble_frozen(p, std::vector<double>(static_cast<std::size_t>(p.grid.num_elements()) *
                                                             p.continua.num_labels(),
                                                         0.0))
                      .elements;
        for (int e : interior_elements(p.grid, radius_)) interior_.insert(e);
    }

    std::optional<ElementOperator> operator()(int e, const std::vector<double>& avg) const {
        if (!interior_.count(e)) return std::nullopt;
        const int L = p_->continua.num_labels();
        const auto x = stencil_features(p_->grid, L, avg, e, radius_);
        const auto lin = element_transmissibilities(linear_[e], p_->grid, L);
        std::array<double, kNumKinds> ratio{};
        for (int k = 0; k < kNumKinds; ++k) {
            const double pred = y_.kinds[k].Y[nearest(k, x)];
            ratio[k] = lin[k] != 0.0 ? pred / lin[k] : 1.0;
        }
        const double rmm = 0.5 * (ratio[0] + ratio[1]), rmf = ratio[2], rff = 0.5 * (ratio[3] + ratio[4]);
        ElementOperator eo = linear_[e];
        for (std::size_t i = 0; i < eo.cols.size(); ++i)
            for (std::size_t j = 0; j < eo.cols.size(); ++j) {
                const int li = eo.cols[i] % L, lj = eo.cols[j] % L;
                const double r = (li != lj) ? rmf : (li == 0 ? rmm : rff);
                eo.A(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) *= r;
            }
        return eo;
    }

private:
    std::size_t nearest(int k, const std::vector<double>& x) const {
        const auto& kd = x_.kinds[k];
        const std::size_t row = x_.x_row();
        std::size_t best = 0;
        double bd = std::numeric_limits<double>::infinity();
        for (std::size_t s = 0; s < kd.count(); ++s) {
            double d = 0.0;
            for (std::size_t t = 0; t < row; ++t) {
                const double diff = kd.X[s * row + t] - x[t];
                d += diff * diff;
            }
            if (d < bd) {
                bd = d;
                best = s;
            }
        }
        return best;
    }

    const NonlinearProblem* p_;
    Dataset x_, y_;
    int radius_ = 0;
    std::vector<ElementOperator> linear_;
    std::set<int> interior_;
};

}  // namespace nlmc
