#include "nlmc/experiments.hpp"

#include <gtest/gtest.h>

#include <random>
#include <sstream>

using namespace nlmc;

namespace {

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("nlmc_io_" + name);
    fs::remove_all(p);
    return p;
}

std::vector<std::string> lines(const fs::path& p) {
    std::ifstream in(p);
    std::vector<std::string> out;
    for (std::string l; std::getline(in, l);) out.push_back(l);
    return out;
}

}  // namespace

TEST(Io, VectorRoundTripsExactly) {
    std::mt19937_64 rng(3);
    std::normal_distribution<double> d(0.0, 1e3);
    Vec v(50);
    for (auto& x : v) x = d(rng);
    v[0] = 1e-300;
    v[1] = -0.0;
    const fs::path p = scratch("vec") / "v.txt";
    io::write_vector(p, v);
    const Vec w = io::read_vector(p);
    ASSERT_EQ(w.size(), v.size());
    for (int i = 0; i < v.size(); ++i) EXPECT_EQ(w[i], v[i]);
}

TEST(Io, MatrixMarketRoundTripsExactly) {
    std::vector<Triplet> t{{0, 0, 2.5}, {3, 1, -1.0 / 3.0}, {1, 4, 7e-17}, {4, 4, 1.0}};
    SpMat A(5, 6);
    A.setFromTriplets(t.begin(), t.end());
    const fs::path p = scratch("mtx") / "A.mtx";
    io::write_matrix_market(p, A);
    const auto text = lines(p);
    EXPECT_EQ(text[0], "%%MatrixMarket matrix coordinate real general");
    EXPECT_EQ(text[1], "5 6 4");
    const SpMat B = io::read_matrix_market(p);
    EXPECT_EQ(B.rows(), 5);
    EXPECT_EQ(B.cols(), 6);
    EXPECT_EQ(Mat(A - B).cwiseAbs().maxCoeff(), 0.0);
}

TEST(Io, PgmScalesToFullRangeWithBottomRowLast) {
    // 3 x 2 raster, row-major from the bottom: min at bottom-left, max at top-right.
    const std::vector<double> v{0.0, 1.0, 2.0, 3.0, 4.0, 5.0};
    const fs::path p = scratch("pgm") / "img.pgm";
    io::write_pgm(p, v, 3, 2);
    const auto img = io::read_pgm(p);
    ASSERT_EQ(img.width, 3);
    ASSERT_EQ(img.height, 2);
    const std::vector<unsigned char> expected{153, 204, 255, 0, 51, 102};
    EXPECT_EQ(img.pixels, expected);
}

TEST(Io, ConstantRasterGivesBlackImage) {
    const fs::path p = scratch("flat") / "img.pgm";
    io::write_pgm(p, std::vector<double>(4, 7.0), 2, 2);
    const auto img = io::read_pgm(p);
    for (auto px : img.pixels) EXPECT_EQ(px, 0);
}

TEST(Io, RasterCsvUsesCellCentres) {
    const fs::path p = scratch("csv") / "r.csv";
    io::write_raster_csv(p, {1.0, 2.0, 3.0, 4.0}, 2, 2);
    const auto text = lines(p);
    ASSERT_EQ(text.size(), 5u);
    EXPECT_EQ(text[0], "x,y,value");
    EXPECT_EQ(text[1], "0.25,0.25,1");
    EXPECT_EQ(text[2], "0.75,0.25,2");
    EXPECT_EQ(text[4], "0.75,0.75,4");
}

TEST(Io, NodalCsvListsEveryLatticeNode) {
    const int n = 4;
    Vec u(25);
    for (int k = 0; k < 25; ++k) u[k] = k;
    const fs::path p = scratch("nodal") / "u.csv";
    io::write_nodal_csv(p, u, n);
    const auto text = lines(p);
    ASSERT_EQ(text.size(), 26u);
    EXPECT_EQ(text[1], "0,0,0");
    EXPECT_EQ(text[7], "0.25,0.25,6");
    EXPECT_EQ(text[25], "1,1,24");
}

TEST(Io, JsonRoundTrip) {
    const nlohmann::json j{{"a", 1.0 / 3.0}, {"b", {1, 2, 3}}, {"c", "text"}};
    const fs::path p = scratch("json") / "x.json";
    io::write_json(p, j);
    EXPECT_EQ(io::read_json(p), j);
}

TEST(Io, MissingFilesAreReportedWithPath) {
    const fs::path p = scratch("missing") / "nothing.txt";
    try {
        io::read_vector(p);
        FAIL() << "expected an exception";
    } catch (const std::runtime_error& e) {
        EXPECT_NE(std::string(e.what()).find(p.string()), std::string::npos);
    }
}

TEST(Io, CompareVectorsHandValues) {
    Vec a(2), b(2);
    a << 3.0, 4.0;
    b << 3.0, 5.0;
    const auto m = compare_vectors(a, b);
    EXPECT_DOUBLE_EQ(m["l2"].get<double>(), 1.0);
    EXPECT_DOUBLE_EQ(m["max_abs"].get<double>(), 1.0);
    EXPECT_DOUBLE_EQ(m["relative_l2"].get<double>(), 0.2);
    const auto z = compare_vectors(a, a);
    EXPECT_EQ(z["l2"].get<double>(), 0.0);
    EXPECT_EQ(z["relative_l2"].get<double>(), 0.0);
    EXPECT_THROW(compare_vectors(a, Vec::Zero(3)), std::runtime_error);
}

TEST(Io, CoarseRasterReproducesBilinearFunctions) {
    const GridHierarchy g = GridHierarchy::build(16, 0.125, 0.25, 0.25, 1);
    const int L = 2;
    auto fn = [](Point p, int l) { return l == 0 ? 1.0 + 2.0 * p.x - 3.0 * p.y + 4.0 * p.x * p.y : -p.y; };
    const Vec U = interpolate_coarse(g, L, fn);
    for (int l = 0; l < L; ++l) {
        const auto r = coarse_raster(g, U, L, l);
        for (int j = 0; j < 16; ++j)
            for (int i = 0; i < 16; ++i)
                EXPECT_NEAR(r[j * 16 + i], fn({(i + 0.5) / 16, (j + 0.5) / 16}, l), 1e-13);
    }
}
