#pragma once

// Config-driven pipelines shared by the command-line tool and the acceptance
// runner. Each pipeline writes its artifacts into an output directory and
// returns its metrics as JSON (no timings, so reruns are byte-identical).

#include "nlmc/coarse_solver.hpp"
#include "nlmc/config.hpp"
#include "nlmc/io.hpp"
#include "nlmc/surrogate_data.hpp"

#include <filesystem>
#include <optional>
#include <sstream>

namespace nlmc {

namespace fs = std::filesystem;

struct Model {
    GridHierarchy grid;
    MediumField medium;
    ContinuaSet continua;
    std::vector<double> source;
};

inline Model make_model(const ExperimentConfig& c) {
    GridHierarchy g = GridHierarchy::build(c.grid);
    MediumField m = build_medium(c.medium, c.grid.n_fine);
    ContinuaSet cs = ContinuaSet::build(g, m);
    if (!c.porosity.empty() && static_cast<int>(c.porosity.size()) != cs.num_labels())
        throw ConfigError("porosity: expected one entry per continuum (" + std::to_string(cs.num_labels()) + ")");
    auto f = build_source(c.source, m);
    return {std::move(g), std::move(m), std::move(cs), std::move(f)};
}

inline UpscaleOptions upscale_options(const ExperimentConfig& c) { return {c.layers, c.bc, c.porosity, worker_count()}; }

inline MultiscaleBasis build_basis(const Model& md, const ExperimentConfig& c, bool all_cells = false) {
    const auto cells = all_cells ? std::vector<int>{} : required_cells(md.grid, c.layers);
    return MultiscaleBasis::build(md.grid, md.medium, md.continua, {c.layers, c.bc, worker_count()}, cells);
}

/// Coarse operators for a linear configuration, flux-corrected under no-flux conditions.
inline CoarseSystem upscale(const Model& md, const ExperimentConfig& c, const MultiscaleBasis& b) {
    CoarseSystem sys = assemble_coarse_system_rve(b, md.grid, md.medium, md.continua, &md.source, upscale_options(c));
    if (c.bc == BoundaryCondition::neumann0) apply_conservative_correction(sys);
    return sys;
}

inline NonlinearProblem make_nonlinear(const Model& md, const ExperimentConfig& c) {
    return {md.grid, md.medium, md.continua, md.source, c.solver.a, c.layers, c.bc, c.porosity, worker_count()};
}

// ---------------------------------------------------------------------------
// Rasters

/// Coarse field U_label evaluated at fine cell centres (row-major n x n).
inline std::vector<double> coarse_raster(const GridHierarchy& g, const Vec& U, int L, int label) {
    const int n = g.n_fine();
    const double H = g.H();
    std::vector<double> out(static_cast<std::size_t>(n) * n);
    for (int j = 0; j < n; ++j)
        for (int i = 0; i < n; ++i) {
            const double x = (i + 0.5) / n, y = (j + 0.5) / n;
            const int e = std::min(static_cast<int>(x / H), g.n_H() - 1), f = std::min(static_cast<int>(y / H), g.n_H() - 1);
            const double s = x / H - e, t = y / H - f;
            auto u = [&](int I, int J) { return U[g.coarse_node_index(I, J) * L + label]; };
            out[static_cast<std::size_t>(j) * n + i] = (1 - s) * (1 - t) * u(e, f) + s * (1 - t) * u(e + 1, f) +
                                                      s * t * u(e + 1, f + 1) + (1 - s) * t * u(e, f + 1);
        }
    return out;
}

inline void write_field(const fs::path& dir, const std::string& stem, const std::vector<double>& raster, int n) {
    io::write_raster_csv(dir / (stem + ".csv"), raster, n, n);
    io::write_pgm(dir / (stem + ".pgm"), raster, n, n);
}

inline std::string label_name(int l) { return l == 0 ? "matrix" : l == 1 ? "channel" : "continuum" + std::to_string(l); }

inline void write_resolved_config(const ExperimentConfig& c, const fs::path& dir) {
    io::write_json(dir / "config.resolved.json", resolved_json(c));
}

// ---------------------------------------------------------------------------
// Pipelines

inline FineSolution fine_reference(const Model& md, const ExperimentConfig& c) {
    FineSolveOptions opt;
    opt.cg.preconditioner = Preconditioner::incomplete_cholesky;
    return solve_fine_reference(md.medium, md.source, c.bc, opt);
}

inline nlohmann::json run_solve_fine(const ExperimentConfig& c, const fs::path& out) {
    fs::create_directories(out);
    write_resolved_config(c, out);
    const Model md = make_model(c);
    const FineSolution fine = fine_reference(md, c);
    const int n = md.grid.n_fine();
    write_field(out, "reference", cell_averages(fine.u, n), n);
    io::write_nodal_csv(out / "fine_solution.csv", fine.u, n);
    io::write_vector(out / "fine_solution.txt", fine.u);
    nlohmann::json metrics{{"nodes", fine.u.size()},
                           {"iterations", fine.iterations},
                           {"relative_residual", fine.relative_residual}};
    io::write_json(out / "metrics.json", metrics);
    return metrics;
}

/// Local basis on every h-cell plus the auxiliary transmissibility matrix.
inline nlohmann::json run_build_basis(const ExperimentConfig& c, const fs::path& out) {
    fs::create_directories(out);
    write_resolved_config(c, out);
    const Model md = make_model(c);
    const auto basis = build_basis(md, c, true);
    const SpMat kb = assemble_kappabar(basis, md.grid, md.medium, md.continua);
    io::write_matrix_market(out / "kappabar.mtx", kb);
    std::vector<double> profile;
    for (int a = 0; a < md.continua.num_dofs(); ++a) {
        const auto d = decay_profile(basis, md.grid, md.medium, md.continua, a);
        if (d.size() > profile.size()) profile.resize(d.size(), 1.0);
        for (std::size_t l = 0; l < d.size(); ++l) profile[l] = std::min(profile[l], d[l]);
    }
    nlohmann::json metrics{{"h_cells", md.grid.num_h_cells()},
                           {"auxiliary_dofs", md.continua.num_dofs()},
                           {"continua", md.continua.num_labels()},
                           {"max_gram_residual", md.continua.max_gram_residual()},
                           {"kkt_primal", basis.max_kkt_primal()},
                           {"kkt_constraint", basis.max_kkt_constraint()},
                           {"min_energy_fraction_by_layer", profile}};
    io::write_json(out / "basis.json", metrics);
    return metrics;
}

/// Coarse operators plus per-element transmissibilities of the five kinds.
inline nlohmann::json run_upscale(const ExperimentConfig& c, const fs::path& out) {
    fs::create_directories(out);
    write_resolved_config(c, out);
    const Model md = make_model(c);
    const auto basis = build_basis(md, c);
    const CoarseSystem sys = upscale(md, c, basis);
    io::write_matrix_market(out / "coarse_A.mtx", sys.A);
    io::write_matrix_market(out / "coarse_M.mtx", sys.M);
    io::write_vector(out / "coarse_rhs.txt", sys.rhs);
    auto csv = io::detail::open(out / "transmissibilities.csv");
    csv << "element";
    for (const char* k : kKindNames) csv << ',' << k;
    csv << '\n';
    for (const auto& eo : sys.elements) {
        csv << eo.element;
        for (double t : element_transmissibilities(eo, md.grid, sys.num_labels)) csv << ',' << t;
        csv << '\n';
    }
    nlohmann::json metrics{{"dofs", sys.size()},
                           {"nonzeros", sys.A.nonZeros()},
                           {"active_dofs", std::count(sys.active.begin(), sys.active.end(), 1)},
                           {"kkt_primal", basis.max_kkt_primal()},
                           {"kkt_constraint", basis.max_kkt_constraint()}};
    io::write_json(out / "upscale.json", metrics);
    return metrics;
}

/// Difference metrics of two vectors of equal length.
inline nlohmann::json compare_vectors(const Vec& reference, const Vec& candidate) {
    if (reference.size() != candidate.size())
        throw std::runtime_error("compare: length mismatch (" + std::to_string(reference.size()) + " vs " +
                                 std::to_string(candidate.size()) + ")");
    const Vec d = candidate - reference;
    const double rn = reference.norm();
    return {{"size", reference.size()},
            {"l2", d.norm()},
            {"max_abs", d.size() ? d.cwiseAbs().maxCoeff() : 0.0},
            {"relative_l2", rn > 0.0 ? d.norm() / rn : d.norm()}};
}

/// Upscaled steady solve, optionally against the fine reference. Writes
/// upscaled_<label>.pgm (with CSV twins), reference.pgm and metrics.json.
inline nlohmann::json run_steady(const ExperimentConfig& c, const fs::path& out, bool with_reference = true) {
    fs::create_directories(out);
    write_resolved_config(c, out);
    const Model md = make_model(c);
    const auto basis = build_basis(md, c);
    const CoarseSystem sys = upscale(md, c, basis);
    const SteadyResult sol = solve_steady(sys, c.bc);
    const int n = md.grid.n_fine(), L = md.continua.num_labels();

    nlohmann::json metrics;
    metrics["coarse"] = {{"dofs", sys.size()}, {"iterations", sol.iterations}, {"relative_residual", sol.relative_residual}};
    metrics["kkt_primal"] = basis.max_kkt_primal();
    metrics["kkt_constraint"] = basis.max_kkt_constraint();
    for (int l = 0; l < L; ++l)
        write_field(out, "upscaled_" + label_name(l), coarse_raster(md.grid, sol.u, L, l), n);
    io::write_vector(out / "coarse_solution.txt", sol.u);
    if (with_reference) {
        const FineSolution fine = fine_reference(md, c);
        write_field(out, "reference", cell_averages(fine.u, n), n);
        io::write_nodal_csv(out / "fine_solution.csv", fine.u, n);
        metrics["fine"] = {{"iterations", fine.iterations}, {"relative_residual", fine.relative_residual}};
        for (int l = 0; l < L; ++l) {
            const auto cmp = compare_element_averages(md.grid, md.continua, md.medium, sol.u, fine.u, l);
            metrics["relative_l2_element_averages"][label_name(l)] = relative_l2(cmp.coarse, cmp.reference);
        }
    }
    io::write_json(out / "metrics.json", metrics);
    return metrics;
}

/// Implicit Euler on the linear upscaled system, with snapshots at the configured times.
inline nlohmann::json run_time(const ExperimentConfig& c, const fs::path& out, const Vec* u0_in = nullptr) {
    fs::create_directories(out);
    write_resolved_config(c, out);
    const Model md = make_model(c);
    const auto basis = build_basis(md, c);
    const CoarseSystem sys = upscale(md, c, basis);
    const int L = md.continua.num_labels(), n = md.grid.n_fine();
    const double dt = c.solver.dt();
    Vec u0 = u0_in ? *u0_in : Vec::Zero(sys.size());
    const auto fixed = coarse_fixed_dofs(sys, c.bc);
    for (int i = 0; i < sys.size(); ++i)
        if (fixed[i]) u0[i] = 0.0;
    const ImplicitEuler stepper(sys.M, sys.A, dt, fixed);

    nlohmann::json metrics;
    metrics["dofs"] = sys.size();
    metrics["dt"] = dt;
    std::vector<double> mass{total_mass(sys.M, u0)}, energy{u0.dot(sys.A * u0)};
    Vec u = u0;
    for (int s = 1; s <= c.solver.steps; ++s) {
        u = stepper.step(u, sys.rhs);
        mass.push_back(total_mass(sys.M, u));
        energy.push_back(u.dot(sys.A * u));
        for (double t : c.solver.snapshots) {
            if (std::lround(t / dt) != s) continue;
            nlohmann::json snap{{"time", t}, {"step", s}};
            for (int l = 0; l < L; ++l) {
                std::ostringstream stem;
                stem << "snapshot_t" << t << "_" << label_name(l);
                const auto r = coarse_raster(md.grid, u, L, l);
                write_field(out, stem.str(), r, n);
                snap["peak"][label_name(l)] = *std::max_element(r.begin(), r.end());
            }
            metrics["snapshots"].push_back(snap);
        }
    }
    double drift = 0.0, rise = 0.0;
    for (std::size_t s = 1; s < mass.size(); ++s) {
        drift = std::max(drift, std::abs(mass[s] - mass[s - 1]));
        rise = std::max(rise, energy[s] - energy[s - 1]);
    }
    metrics["mass"] = mass;
    metrics["energy"] = energy;
    metrics["max_mass_change_per_step"] = drift;
    metrics["max_energy_increase_per_step"] = rise;
    io::write_vector(out / "final_state.txt", u);
    io::write_json(out / "metrics.json", metrics);
    return metrics;
}

/// Picard solve of the nonlinear problem; writes the final u_m and u_f fields.
/// With a stencil container and a matching prediction container, interior
/// element operators come from the predicted transmissibilities.
inline nlohmann::json run_nonlinear(const ExperimentConfig& c, const fs::path& out, const fs::path& stencils = {},
                                    const fs::path& predictions = {}) {
    fs::create_directories(out);
    write_resolved_config(c, out);
    const Model md = make_model(c);
    const NonlinearProblem p = make_nonlinear(md, c);
    const int L = md.continua.num_labels(), n = md.grid.n_fine();
    const Vec u0 = Vec::Zero(md.grid.num_coarse_nodes() * L);
    const PicardOptions opt{c.solver.tol, c.solver.max_iterations, c.solver.damping};
    ElementOverride override_fn;
    std::optional<SurrogateTable> table;
    if (!predictions.empty()) {
        table.emplace(p, import_dataset(stencils), import_dataset(predictions));
        override_fn = [&table](int e, const std::vector<double>& avg) { return (*table)(e, avg); };
    }
    const PicardRun run = picard_solve(p, c.solver.dt(), c.solver.steps, u0, opt, override_fn);

    nlohmann::json metrics;
    metrics["surrogate"] = table.has_value();
    std::vector<int> its;
    double worst = 0.0;
    for (const auto& st : run.steps) {
        its.push_back(st.iterations);
        worst = std::max(worst, st.updates.back());
    }
    metrics["iterations"] = its;
    metrics["max_final_update"] = worst;
    const Vec& u = run.states.back();
    const int corner = md.grid.coarse_node_index(md.grid.n_H(), md.grid.n_H());
    for (int l = 0; l < L; ++l) {
        const auto r = coarse_raster(md.grid, u, L, l);
        write_field(out, l == 0 ? "u_m" : l == 1 ? "u_f" : "u_" + std::to_string(l), r, n);
        metrics["corner"][label_name(l)] = u[corner * L + l];
        metrics["peak"][label_name(l)] = *std::max_element(r.begin(), r.end());
    }
    io::write_vector(out / "final_state.txt", u);
    io::write_json(out / "metrics.json", metrics);
    return metrics;
}

/// Transmissibility dataset from every Picard iterate of the nonlinear run.
inline nlohmann::json run_gen_dataset(const ExperimentConfig& c, const fs::path& out) {
    fs::create_directories(out);
    write_resolved_config(c, out);
    const Model md = make_model(c);
    const NonlinearProblem p = make_nonlinear(md, c);
    const Vec u0 = Vec::Zero(md.grid.num_coarse_nodes() * md.continua.num_labels());
    const PicardOptions opt{c.solver.tol, c.solver.max_iterations, c.solver.damping};
    const Dataset ds = gen_samples(p, c.solver.dt(), c.solver.steps, u0, opt);
    export_dataset(ds, out);
    nlohmann::json metrics;
    metrics["stencil"] = ds.stencil;
    for (int k = 0; k < kNumKinds; ++k) metrics["counts"][kKindNames[k]] = ds.kinds[k].count();
    io::write_json(out / "metrics.json", metrics);
    return metrics;
}

}  // namespace nlmc
