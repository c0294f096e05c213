#include "nlmc/experiments.hpp"

#include <gtest/gtest.h>

#include <cstdlib>
#include <sstream>

using namespace nlmc;

namespace {

const fs::path kConfigs = NLMC_CONFIG_DIR;

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("nlmc_cli_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

struct CliRun {
    int code = -1;
    std::string out, err;
};

CliRun cli(const std::string& args, const fs::path& dir) {
    const fs::path o = dir / "stdout.txt", e = dir / "stderr.txt";
    const std::string cmd = std::string("\"") + NLMC_CLI_PATH + "\" " + args + " > \"" + o.string() + "\" 2> \"" +
                            e.string() + "\"";
    const int status = std::system(cmd.c_str());
    auto slurp = [](const fs::path& p) {
        std::ifstream in(p);
        std::stringstream ss;
        ss << in.rdbuf();
        return ss.str();
    };
    return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(o), slurp(e)};
}

void write(const fs::path& p, const nlohmann::json& j) { io::write_json(p, j); }

nlohmann::json small_ex1() {
    return nlohmann::json::parse(R"({
        "name": "ex1",
        "medium": {"type": "ex1", "eps": 0.05, "threshold": 2.0},
        "grid": {"n_fine": 80, "h": 0.05, "H": 0.2},
        "layers": 2, "boundary": "dirichlet0",
        "source": {"type": "ex1"}, "solver": {"mode": "steady"}})");
}

nlohmann::json small_nonlinear() {
    return nlohmann::json::parse(R"({
        "name": "nl",
        "medium": {"type": "fractured", "kappa_tilde": "one", "period": 0.2,
                   "fractures": [[0.05, 0.75, 0.95, 0.75], [0.25, 0.1, 0.25, 0.9]], "k_fracture": 1000.0},
        "grid": {"n_fine": 40, "h": 0.05, "H": 0.2}, "layers": 2, "boundary": "neumann0",
        "source": {"type": "box", "value": 1e5, "box": [0.9, 1.0, 0.9, 1.0], "label": 1},
        "solver": {"mode": "nonlinear", "a": 0.1, "t_max": 0.004, "steps": 4}})");
}

std::string bytes(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string config_error(const nlohmann::json& j) {
    try {
        parse_config(j);
    } catch (const ConfigError& e) {
        return e.what();
    }
    return "";
}

}  // namespace

TEST(Config, ShippedConfigsParse) {
    for (const char* name : {"ex1", "ex2", "nonlinear"}) {
        const ExperimentConfig c = load_config(kConfigs / (std::string(name) + ".json"));
        EXPECT_EQ(c.name, name);
        EXPECT_NO_THROW(GridHierarchy::build(c.grid)) << name;
    }
    const auto ex2 = load_config(kConfigs / "ex2.json");
    EXPECT_EQ(ex2.solver.snapshots, (std::vector<double>{0.005, 0.01, 0.02}));
    const auto nl = load_config(kConfigs / "nonlinear.json");
    EXPECT_DOUBLE_EQ(nl.solver.a, 0.1);
    EXPECT_DOUBLE_EQ(nl.solver.t_max, 0.025);
    EXPECT_EQ(nl.solver.steps, 50);
    EXPECT_DOUBLE_EQ(nl.medium.k_fracture, 1e3);
    EXPECT_DOUBLE_EQ(nl.source.value, 1e5);
}

TEST(Config, ErrorsNameTheField) {
    auto with = [](const std::string& ptr, const nlohmann::json& v) {
        nlohmann::json j = small_ex1();
        j[nlohmann::json::json_pointer(ptr)] = v;
        return config_error(j);
    };
    EXPECT_EQ(config_error(small_ex1()), "");
    EXPECT_EQ(with("/grid/h", -1.0).rfind("grid.h:", 0), 0u);
    EXPECT_EQ(with("/grid/n_fine", 2.5).rfind("grid.n_fine:", 0), 0u);
    EXPECT_EQ(with("/medium/type", "granite").rfind("medium.type:", 0), 0u);
    EXPECT_EQ(with("/medium/colour", 1).rfind("medium.colour: unknown field", 0), 0u);
    EXPECT_EQ(with("/boundary", "periodic").rfind("boundary:", 0), 0u);
    EXPECT_EQ(with("/layers", -1).rfind("layers:", 0), 0u);
    EXPECT_EQ(with("/solver/mode", "time").rfind("solver.t_max: missing", 0), 0u);
    EXPECT_EQ(with("/source/box", nlohmann::json::array({1, 0, 0, 1})).rfind("source.box:", 0), 0u);
    nlohmann::json j = small_ex1();
    j["medium"].erase("threshold");
    EXPECT_EQ(config_error(j).rfind("medium.threshold:", 0), 0u);
    j = small_ex1();
    j["solver"] = {{"mode", "time"}, {"t_max", 0.02}, {"steps", 80}, {"snapshots", {0.0051}}};
    EXPECT_EQ(config_error(j).rfind("solver.snapshots:", 0), 0u);
    j = small_nonlinear();
    j["solver"]["damping"] = 1.5;
    EXPECT_EQ(config_error(j).rfind("solver.damping:", 0), 0u);
}

TEST(Config, ResolvedConfigIsAFixedPoint) {
    for (const auto& j : {small_ex1(), small_nonlinear(), io::read_json(kConfigs / "ex2.json")}) {
        const auto r = resolved_json(parse_config(j));
        EXPECT_EQ(resolved_json(parse_config(r)), r);
    }
    const auto r = resolved_json(parse_config(small_nonlinear()));
    EXPECT_EQ(r["solver"]["max_iterations"].get<int>(), 50);
    EXPECT_EQ(r["solver"]["damping"].get<double>(), 1.0);
    EXPECT_EQ(r["medium"]["k_matrix"].get<double>(), 1.0);
}

TEST(Config, ValidatorAcceptsEverySchemaField) {
    const auto schema = io::read_json(kConfigs / "config.schema.json");
    const nlohmann::json samples = nlohmann::json::parse(R"({
        "eps": 0.1, "threshold": 1.0, "kappa_tilde": "one", "value": 2.0, "laminate_values": [1, 10],
        "laminate_direction": "y", "fractures": [[0, 0.5, 1, 0.5]], "period": 0.0, "k_matrix": 1.0,
        "k_fracture": 10.0, "type": "ex1", "n_fine": 80, "h": 0.05, "H": 0.2, "rve_side": 0.1,
        "rves_per_element": 1, "offsets": [[0, 0]], "box": [0, 1, 0, 1], "label": 0, "mode": "steady",
        "t_max": 1.0, "steps": 1, "snapshots": [], "a": 0.0, "tol": 1e-6, "max_iterations": 5, "damping": 1.0,
        "name": "x", "layers": 2, "boundary": "dirichlet0", "porosity": [1, 1], "seed": 0, "output": "o",
        "$schema": "s", "source": {"type": "none"}})");
    std::set<std::string> top;
    for (const auto& [k, v] : schema["properties"].items()) top.insert(k);
    for (const auto& [k, v] : schema["properties"].items()) {
        if (!v.contains("properties")) {
            nlohmann::json j = small_ex1();
            j[k] = samples.at(k);
            EXPECT_EQ(config_error(j).find("unknown field"), std::string::npos) << k;
            continue;
        }
        for (const auto& [f, w] : v["properties"].items()) {
            nlohmann::json j = small_ex1();
            if (k == "source") j["source"] = {{"type", "ex1"}};
            j[k][f] = samples.at(f);
            EXPECT_EQ(config_error(j).find("unknown field"), std::string::npos) << k << "." << f;
        }
        nlohmann::json j = small_ex1();
        j[k]["bogus"] = 1;
        EXPECT_EQ(config_error(j), k + ".bogus: unknown field");
    }
    nlohmann::json j = small_ex1();
    j["bogus"] = 1;
    EXPECT_EQ(config_error(j), "bogus: unknown field");
}

TEST(Cli, InvalidConfigExitsTwoNamingTheField) {
    const fs::path dir = scratch("invalid");
    nlohmann::json j = small_ex1();
    j["grid"]["H"] = "wide";
    write(dir / "bad.json", j);
    const CliRun r = cli("solve-coarse --config \"" + (dir / "bad.json").string() + "\" --out \"" + (dir / "o").string() + "\"", dir);
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("grid.H"), std::string::npos) << r.err;
    EXPECT_FALSE(fs::exists(dir / "o"));
}

TEST(Cli, NonNestedGridExitsTwo) {
    const fs::path dir = scratch("nested");
    nlohmann::json j = small_ex1();
    j["grid"]["H"] = 0.15;
    write(dir / "c.json", j);
    const CliRun r = cli("upscale --config \"" + (dir / "c.json").string() + "\" --out \"" + (dir / "o").string() + "\"", dir);
    EXPECT_EQ(r.code, 2) << r.err;
}

TEST(Cli, UsageErrorsExitTwo) {
    const fs::path dir = scratch("usage");
    EXPECT_EQ(cli("frobnicate", dir).code, 2);
    EXPECT_EQ(cli("upscale", dir).code, 2);
    EXPECT_EQ(cli("run-example --name ex9", dir).code, 2);
    EXPECT_EQ(cli("upscale --config \"" + (dir / "absent.json").string() + "\"", dir).code, 2);
    EXPECT_EQ(cli("--help", dir).code, 0);
}

TEST(Cli, CompareIdenticalFieldsGivesZeroMetrics) {
    const fs::path dir = scratch("compare");
    Vec v(4);
    v << 1.0, -2.0, 3.5, 0.25;
    io::write_vector(dir / "a.txt", v);
    io::write_vector(dir / "b.txt", v);
    const CliRun r = cli("compare --reference \"" + (dir / "a.txt").string() + "\" --candidate \"" +
                          (dir / "b.txt").string() + "\" --out \"" + (dir / "m.json").string() + "\"",
                      dir);
    ASSERT_EQ(r.code, 0) << r.err;
    const auto m = io::read_json(dir / "m.json");
    EXPECT_EQ(m["l2"].get<double>(), 0.0);
    EXPECT_EQ(m["max_abs"].get<double>(), 0.0);
    EXPECT_EQ(m["relative_l2"].get<double>(), 0.0);
}

TEST(Cli, CompareLengthMismatchIsRuntimeFailure) {
    const fs::path dir = scratch("mismatch");
    io::write_vector(dir / "a.txt", Vec::Ones(3));
    io::write_vector(dir / "b.txt", Vec::Ones(4));
    const CliRun r = cli("compare --reference \"" + (dir / "a.txt").string() + "\" --candidate \"" +
                          (dir / "b.txt").string() + "\"",
                      dir);
    EXPECT_EQ(r.code, 1);
    EXPECT_NE(r.err.find("length mismatch"), std::string::npos);
}

TEST(Cli, RunExampleWritesTriptychMetricsAndConfigCopy) {
    const fs::path dir = scratch("example");
    write(dir / "ex1.json", small_ex1());
    const CliRun r = cli("run-example --name ex1 --config-dir \"" + dir.string() + "\" --out \"" + (dir / "o").string() + "\"", dir);
    ASSERT_EQ(r.code, 0) << r.err;
    for (const char* f : {"reference.pgm", "upscaled_matrix.pgm", "upscaled_channel.pgm"}) {
        const auto img = io::read_pgm(dir / "o" / f);
        EXPECT_EQ(img.width, 80) << f;
        EXPECT_EQ(img.height, 80) << f;
    }
    const auto m = io::read_json(dir / "o" / "metrics.json");
    EXPECT_TRUE(m["relative_l2_element_averages"].contains("matrix"));
    const auto resolved = io::read_json(dir / "o" / "config.resolved.json");
    EXPECT_EQ(resolved, resolved_json(parse_config(small_ex1())));
    EXPECT_EQ(resolved["grid"]["rve_side"].get<double>(), 0.2);
}

TEST(Cli, RerunsAreBitIdentical) {
    const fs::path dir = scratch("rerun");
    write(dir / "c.json", small_ex1());
    for (const char* o : {"a", "b"})
        ASSERT_EQ(cli("solve-coarse --config \"" + (dir / "c.json").string() + "\" --out \"" + (dir / o).string() + "\"", dir).code, 0);
    std::size_t files = 0;
    for (const auto& e : fs::directory_iterator(dir / "a")) {
        ++files;
        EXPECT_EQ(bytes(e.path()), bytes(dir / "b" / e.path().filename())) << e.path().filename();
    }
    EXPECT_GE(files, 5u);
}

TEST(Cli, UpscaleAndBuildBasisWriteReadableOperators) {
    const fs::path dir = scratch("operators");
    write(dir / "c.json", small_ex1());
    ASSERT_EQ(cli("upscale --config \"" + (dir / "c.json").string() + "\" --out \"" + (dir / "u").string() + "\"", dir).code, 0);
    ASSERT_EQ(cli("build-basis --config \"" + (dir / "c.json").string() + "\" --out \"" + (dir / "b").string() + "\"", dir).code, 0);
    const SpMat A = io::read_matrix_market(dir / "u" / "coarse_A.mtx");
    const SpMat M = io::read_matrix_market(dir / "u" / "coarse_M.mtx");
    const Vec f = io::read_vector(dir / "u" / "coarse_rhs.txt");
    EXPECT_EQ(A.rows(), f.size());
    EXPECT_EQ(M.rows(), f.size());
    EXPECT_LT(Mat(A - SpMat(A.transpose())).cwiseAbs().maxCoeff(), 1e-10 * Mat(A).cwiseAbs().maxCoeff());
    const SpMat K = io::read_matrix_market(dir / "b" / "kappabar.mtx");
    const auto info = io::read_json(dir / "b" / "basis.json");
    EXPECT_EQ(K.rows(), info["auxiliary_dofs"].get<int>());
    EXPECT_LT(info["kkt_primal"].get<double>(), 1e-9);
    EXPECT_TRUE(fs::exists(dir / "u" / "transmissibilities.csv"));
    EXPECT_TRUE(fs::exists(dir / "b" / "config.resolved.json"));
}

TEST(Cli, SolveFineWritesReferenceAndVector) {
    const fs::path dir = scratch("fine");
    write(dir / "c.json", small_ex1());
    ASSERT_EQ(cli("solve-fine --config \"" + (dir / "c.json").string() + "\" --out \"" + (dir / "o").string() + "\"", dir).code, 0);
    EXPECT_EQ(io::read_vector(dir / "o" / "fine_solution.txt").size(), 81 * 81);
    EXPECT_EQ(io::read_pgm(dir / "o" / "reference.pgm").width, 80);
}

TEST(Cli, DatasetDrivesSurrogateSolve) {
    const fs::path dir = scratch("dataset");
    write(dir / "nl.json", small_nonlinear());
    const std::string cfg = "--config \"" + (dir / "nl.json").string() + "\"";
    ASSERT_EQ(cli("gen-dataset " + cfg + " --out \"" + (dir / "ds").string() + "\"", dir).code, 0);
    ASSERT_EQ(cli("solve-coarse " + cfg + " --out \"" + (dir / "lin").string() + "\"", dir).code, 0);
    const CliRun r = cli("solve-coarse " + cfg + " --stencils \"" + (dir / "ds").string() + "\" --predictions \"" +
                          (dir / "ds").string() + "\" --out \"" + (dir / "sur").string() + "\"",
                      dir);
    ASSERT_EQ(r.code, 0) << r.err;
    const auto ref = io::read_json(dir / "lin" / "metrics.json");
    const auto sur = io::read_json(dir / "sur" / "metrics.json");
    EXPECT_TRUE(sur["surrogate"].get<bool>());
    EXPECT_LT(sur["max_final_update"].get<double>(), 1e-6);
    const double a = ref["corner"]["channel"].get<double>(), b = sur["corner"]["channel"].get<double>();
    EXPECT_NEAR(b, a, 0.05 * std::abs(a));
    EXPECT_EQ(cli("solve-coarse " + cfg + " --predictions \"" + (dir / "ds").string() + "\"", dir).code, 2);
}
