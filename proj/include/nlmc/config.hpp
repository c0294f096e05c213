#pragma once

// Experiment configuration: JSON document -> validated ExperimentConfig. Every
// rejection is a ConfigError whose message starts with the offending field path.

#include "nlmc/fine_fem.hpp"
#include "nlmc/grids.hpp"
#include "nlmc/medium.hpp"
#include "nlmc/types.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <set>

namespace nlmc {

struct SourceSpec {
    std::string type = "none";  // none | ex1 | box
    double value = 0.0;
    std::array<double, 4> box{0.0, 1.0, 0.0, 1.0};  // x0, x1, y0, y1
    int label = -1;                                 // box: restrict to one continuum, -1 = all
};

struct SolverSpec {
    std::string mode = "steady";  // steady | time | nonlinear
    double t_max = 0.0;
    int steps = 0;
    std::vector<double> snapshots;
    double a = 0.0;
    double tol = 1e-6;
    int max_iterations = 50;
    double damping = 1.0;
    double dt() const { return steps > 0 ? t_max / steps : 0.0; }
};

struct ExperimentConfig {
    std::string name = "custom";
    MediumSpec medium;
    GridSpec grid;
    int layers = 3;
    BoundaryCondition bc = BoundaryCondition::dirichlet0;
    SourceSpec source;
    SolverSpec solver;
    std::vector<double> porosity;
    std::uint64_t seed = 0;
    std::string output;
    nlohmann::json raw;  // resolved document, written next to every artifact
};

namespace detail {

inline std::string join(const std::string& path, const std::string& key) {
    return path.empty() ? key : path + "." + key;
}

inline void check_keys(const nlohmann::json& j, const std::string& path, const std::set<std::string>& allowed) {
    if (!j.is_object()) throw ConfigError((path.empty() ? "config" : path) + ": expected an object");
    for (const auto& [k, v] : j.items())
        if (!allowed.count(k)) throw ConfigError(join(path, k) + ": unknown field");
}

inline const nlohmann::json& require(const nlohmann::json& j, const std::string& path, const std::string& key) {
    if (!j.contains(key)) throw ConfigError(join(path, key) + ": missing required field");
    return j.at(key);
}

inline double number(const nlohmann::json& v, const std::string& path) {
    if (!v.is_number()) throw ConfigError(path + ": expected a number");
    return v.get<double>();
}

inline double positive(const nlohmann::json& v, const std::string& path) {
    const double d = number(v, path);
    if (!(d > 0.0)) throw ConfigError(path + ": must be positive");
    return d;
}

inline int integer(const nlohmann::json& v, const std::string& path, int lo) {
    if (!v.is_number_integer()) throw ConfigError(path + ": expected an integer");
    const auto i = v.get<long long>();
    if (i < lo) throw ConfigError(path + ": must be at least " + std::to_string(lo));
    return static_cast<int>(i);
}

inline std::string choice(const nlohmann::json& v, const std::string& path, const std::set<std::string>& options) {
    if (!v.is_string() || !options.count(v.get<std::string>())) {
        std::string list;
        for (const auto& o : options) list += (list.empty() ? "" : ", ") + o;
        throw ConfigError(path + ": expected one of " + list);
    }
    return v.get<std::string>();
}

inline std::vector<double> numbers(const nlohmann::json& v, const std::string& path, std::size_t n = 0) {
    if (!v.is_array()) throw ConfigError(path + ": expected an array of numbers");
    if (n && v.size() != n) throw ConfigError(path + ": expected " + std::to_string(n) + " entries");
    std::vector<double> out;
    for (std::size_t i = 0; i < v.size(); ++i) out.push_back(number(v[i], path + "[" + std::to_string(i) + "]"));
    return out;
}

inline MediumSpec parse_medium(const nlohmann::json& j) {
    const std::string p = "medium";
    check_keys(j, p,
               {"type", "eps", "threshold", "kappa_tilde", "value", "laminate_values", "laminate_direction",
                "fractures", "period", "k_matrix", "k_fracture"});
    MediumSpec s;
    s.type = choice(require(j, p, "type"), p + ".type", {"ex1", "ex2", "constant", "laminate", "fractured"});
    if (j.contains("eps")) s.eps = positive(j["eps"], p + ".eps");
    if (j.contains("threshold")) s.threshold = positive(j["threshold"], p + ".threshold");
    if (j.contains("kappa_tilde")) s.kappa_tilde = choice(j["kappa_tilde"], p + ".kappa_tilde", {"kappa", "one"});
    if (j.contains("value")) s.value = positive(j["value"], p + ".value");
    if (j.contains("laminate_values")) {
        s.laminate_values = numbers(j["laminate_values"], p + ".laminate_values", 2);
        for (double v : s.laminate_values)
            if (!(v > 0.0)) throw ConfigError(p + ".laminate_values: must be positive");
    }
    if (j.contains("laminate_direction"))
        s.laminate_direction = choice(j["laminate_direction"], p + ".laminate_direction", {"x", "y"});
    if (j.contains("fractures")) {
        const auto& f = j["fractures"];
        if (!f.is_array()) throw ConfigError(p + ".fractures: expected an array of segments");
        for (std::size_t i = 0; i < f.size(); ++i) {
            const auto v = numbers(f[i], p + ".fractures[" + std::to_string(i) + "]", 4);
            s.fractures.push_back({{v[0], v[1]}, {v[2], v[3]}});
        }
    }
    if (j.contains("period")) s.period = number(j["period"], p + ".period");
    if (s.period < 0.0) throw ConfigError(p + ".period: must be non-negative");
    if (j.contains("k_matrix")) s.k_matrix = positive(j["k_matrix"], p + ".k_matrix");
    if (j.contains("k_fracture")) s.k_fracture = positive(j["k_fracture"], p + ".k_fracture");
    if (s.type == "fractured" && s.fractures.empty()) throw ConfigError(p + ".fractures: required for a fractured medium");
    return s;
}

inline GridSpec parse_grid(const nlohmann::json& j) {
    const std::string p = "grid";
    check_keys(j, p, {"n_fine", "h", "H", "rve_side", "rves_per_element", "offsets"});
    GridSpec s;
    s.n_fine = integer(require(j, p, "n_fine"), p + ".n_fine", 1);
    s.h = positive(require(j, p, "h"), p + ".h");
    s.H = positive(require(j, p, "H"), p + ".H");
    s.rve_side = j.contains("rve_side") ? positive(j["rve_side"], p + ".rve_side") : s.H;
    if (j.contains("rves_per_element")) s.rves_per_element = integer(j["rves_per_element"], p + ".rves_per_element", 1);
    if (j.contains("offsets")) {
        const auto& o = j["offsets"];
        if (!o.is_array()) throw ConfigError(p + ".offsets: expected an array of [i, j] pairs");
        for (std::size_t i = 0; i < o.size(); ++i) {
            const std::string q = p + ".offsets[" + std::to_string(i) + "]";
            if (!o[i].is_array() || o[i].size() != 2) throw ConfigError(q + ": expected [i, j]");
            s.offsets.push_back({integer(o[i][0], q, 0), integer(o[i][1], q, 0)});
        }
    }
    return s;
}

inline SourceSpec parse_source(const nlohmann::json& j) {
    const std::string p = "source";
    check_keys(j, p, {"type", "value", "box", "label"});
    SourceSpec s;
    s.type = choice(require(j, p, "type"), p + ".type", {"none", "ex1", "box"});
    if (j.contains("value")) s.value = number(j["value"], p + ".value");
    if (j.contains("box")) {
        const auto b = numbers(j["box"], p + ".box", 4);
        if (!(b[0] < b[1] && b[2] < b[3])) throw ConfigError(p + ".box: expected x0 < x1 and y0 < y1");
        s.box = {b[0], b[1], b[2], b[3]};
    }
    if (j.contains("label")) s.label = integer(j["label"], p + ".label", -1);
    if (s.type == "box" && !j.contains("value")) throw ConfigError(p + ".value: missing required field");
    return s;
}

inline SolverSpec parse_solver(const nlohmann::json& j) {
    const std::string p = "solver";
    check_keys(j, p, {"mode", "t_max", "steps", "snapshots", "a", "tol", "max_iterations", "damping"});
    SolverSpec s;
    s.mode = choice(require(j, p, "mode"), p + ".mode", {"steady", "time", "nonlinear"});
    if (s.mode == "steady") return s;
    s.t_max = positive(require(j, p, "t_max"), p + ".t_max");
    s.steps = integer(require(j, p, "steps"), p + ".steps", 1);
    if (j.contains("snapshots")) {
        s.snapshots = numbers(j["snapshots"], p + ".snapshots");
        for (double t : s.snapshots) {
            const double k = t / s.dt();
            if (t <= 0.0 || t > s.t_max * (1 + 1e-12) || std::abs(k - std::round(k)) > 1e-9 * std::max(1.0, k))
                throw ConfigError(p + ".snapshots: times must be positive multiples of t_max / steps up to t_max");
        }
    }
    if (s.mode == "nonlinear") {
        s.a = number(require(j, p, "a"), p + ".a");
        if (s.a < 0.0) throw ConfigError(p + ".a: must be non-negative");
        if (j.contains("tol")) s.tol = positive(j["tol"], p + ".tol");
        if (j.contains("max_iterations")) s.max_iterations = integer(j["max_iterations"], p + ".max_iterations", 1);
        if (j.contains("damping")) s.damping = positive(j["damping"], p + ".damping");
        if (s.damping > 1.0) throw ConfigError(p + ".damping: must not exceed 1");
    }
    return s;
}

}  // namespace detail

/// Validates and converts a configuration document.
inline ExperimentConfig parse_config(const nlohmann::json& j) {
    detail::check_keys(j, "",
                       {"name", "medium", "grid", "layers", "boundary", "source", "solver", "porosity", "seed",
                        "output", "$schema"});
    ExperimentConfig c;
    c.raw = j;
    if (j.contains("name")) {
        if (!j["name"].is_string()) throw ConfigError("name: expected a string");
        c.name = j["name"].get<std::string>();
    }
    c.medium = detail::parse_medium(detail::require(j, "", "medium"));
    c.grid = detail::parse_grid(detail::require(j, "", "grid"));
    c.layers = detail::integer(detail::require(j, "", "layers"), "layers", 0);
    c.bc = detail::choice(detail::require(j, "", "boundary"), "boundary", {"dirichlet0", "neumann0"}) == "neumann0"
               ? BoundaryCondition::neumann0
               : BoundaryCondition::dirichlet0;
    if (j.contains("source")) c.source = detail::parse_source(j["source"]);
    c.solver = detail::parse_solver(detail::require(j, "", "solver"));
    if (j.contains("porosity")) {
        c.porosity = detail::numbers(j["porosity"], "porosity");
        for (double v : c.porosity)
            if (!(v > 0.0)) throw ConfigError("porosity: entries must be positive");
    }
    if (j.contains("seed")) c.seed = static_cast<std::uint64_t>(detail::integer(j["seed"], "seed", 0));
    if (j.contains("output")) {
        if (!j["output"].is_string()) throw ConfigError("output: expected a string");
        c.output = j["output"].get<std::string>();
    }
    if ((c.medium.type == "ex1" || c.medium.type == "ex2") && !c.medium.threshold) {
        throw ConfigError("medium.threshold: required to split " + c.medium.type + " into continua");
    }
    return c;
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config: cannot open " + path.string());
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError("config: " + path.string() + " is not valid JSON (" + e.what() + ")");
    }
    return parse_config(j);
}

/// The configuration with every default filled in; parses back to itself.
inline nlohmann::json resolved_json(const ExperimentConfig& c) {
    nlohmann::json j;
    j["name"] = c.name;
    j["medium"] = c.medium;
    j["grid"] = c.grid;
    j["layers"] = c.layers;
    j["boundary"] = to_string(c.bc);
    j["source"] = {{"type", c.source.type}, {"value", c.source.value}, {"box", c.source.box}, {"label", c.source.label}};
    nlohmann::json s{{"mode", c.solver.mode}};
    if (c.solver.mode != "steady") {
        s["t_max"] = c.solver.t_max;
        s["steps"] = c.solver.steps;
        s["snapshots"] = c.solver.snapshots;
    }
    if (c.solver.mode == "nonlinear") {
        s["a"] = c.solver.a;
        s["tol"] = c.solver.tol;
        s["max_iterations"] = c.solver.max_iterations;
        s["damping"] = c.solver.damping;
    }
    j["solver"] = s;
    if (!c.porosity.empty()) j["porosity"] = c.porosity;
    j["seed"] = c.seed;
    if (!c.output.empty()) j["output"] = c.output;
    return j;
}

/// Cell-wise source for a configuration.
inline std::vector<double> build_source(const SourceSpec& s, const MediumField& m) {
    const int n = m.n;
    std::vector<double> f(static_cast<std::size_t>(n) * n, 0.0);
    if (s.type == "ex1") return sample_cells(n, eval_source_ex1);
    if (s.type == "box")
        for (int j = 0; j < n; ++j)
            for (int i = 0; i < n; ++i) {
                const Point c = m.cell_center(i, j);
                const bool inside = c.x > s.box[0] && c.x < s.box[1] && c.y > s.box[2] && c.y < s.box[3];
                if (inside && (s.label < 0 || m.label[m.index(i, j)] == s.label)) f[m.index(i, j)] = s.value;
            }
    return f;
}

}  // namespace nlmc
