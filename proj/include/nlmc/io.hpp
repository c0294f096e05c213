#pragma once

// Plain-text and image outputs: CSV rasters, 8-bit PGM heatmaps, coordinate-format
// sparse matrices and JSON documents.

#include "nlmc/types.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>

namespace nlmc::io {

namespace detail {

inline std::ofstream open(const std::filesystem::path& p, std::ios::openmode mode = std::ios::out) {
    if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
    std::ofstream out(p, mode);
    if (!out) throw std::runtime_error("cannot write " + p.string());
    out << std::setprecision(std::numeric_limits<double>::max_digits10);
    return out;
}

}  // namespace detail

/// Values at the (n+1)^2 nodes of the fine lattice as "x,y,value" rows.
inline void write_nodal_csv(const std::filesystem::path& p, const Vec& u, int n) {
    auto out = detail::open(p);
    out << "x,y,value\n";
    for (int j = 0; j <= n; ++j)
        for (int i = 0; i <= n; ++i)
            out << static_cast<double>(i) / n << ',' << static_cast<double>(j) / n << ',' << u[j * (n + 1) + i] << '\n';
}

/// Row-major nx * ny raster of cell values as "x,y,value" rows at cell centres.
inline void write_raster_csv(const std::filesystem::path& p, const std::vector<double>& v, int nx, int ny) {
    auto out = detail::open(p);
    out << "x,y,value\n";
    for (int j = 0; j < ny; ++j)
        for (int i = 0; i < nx; ++i)
            out << (i + 0.5) / nx << ',' << (j + 0.5) / ny << ',' << v[static_cast<std::size_t>(j) * nx + i] << '\n';
}

/// Binary 8-bit PGM with min-max scaling; the first raster row is the bottom of
/// the domain, so it is written last.
inline void write_pgm(const std::filesystem::path& p, const std::vector<double>& v, int nx, int ny) {
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (double d : v) {
        lo = std::min(lo, d);
        hi = std::max(hi, d);
    }
    const double span = hi > lo ? hi - lo : 1.0;
    auto out = detail::open(p, std::ios::out | std::ios::binary);
    out << "P5\n" << nx << ' ' << ny << "\n255\n";
    std::vector<unsigned char> row(nx);
    for (int j = ny - 1; j >= 0; --j) {
        for (int i = 0; i < nx; ++i)
            row[i] = static_cast<unsigned char>(std::lround(255.0 * (v[static_cast<std::size_t>(j) * nx + i] - lo) / span));
        out.write(reinterpret_cast<const char*>(row.data()), nx);
    }
}

/// Reads back a P5 image written by write_pgm (width, height, bytes top-down).
struct Pgm {
    int width = 0, height = 0;
    std::vector<unsigned char> pixels;
};

inline Pgm read_pgm(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw std::runtime_error("missing file: " + p.string());
    std::string magic;
    int maxval = 0;
    Pgm img;
    in >> magic >> img.width >> img.height >> maxval;
    in.get();
    if (magic != "P5" || maxval != 255) throw std::runtime_error("not an 8-bit P5 image: " + p.string());
    img.pixels.resize(static_cast<std::size_t>(img.width) * img.height);
    in.read(reinterpret_cast<char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
    return img;
}

/// Matrix Market coordinate format (1-based indices).
inline void write_matrix_market(const std::filesystem::path& p, const SpMat& A) {
    auto out = detail::open(p);
    out << "%%MatrixMarket matrix coordinate real general\n";
    out << A.rows() << ' ' << A.cols() << ' ' << A.nonZeros() << '\n';
    for (int k = 0; k < A.outerSize(); ++k)
        for (SpMat::InnerIterator it(A, k); it; ++it) out << it.row() + 1 << ' ' << it.col() + 1 << ' ' << it.value() << '\n';
}

inline SpMat read_matrix_market(const std::filesystem::path& p) {
    std::ifstream in(p);
    if (!in) throw std::runtime_error("missing file: " + p.string());
    std::string line;
    std::getline(in, line);
    while (in.peek() == '%') std::getline(in, line);
    long r = 0, c = 0, nnz = 0;
    in >> r >> c >> nnz;
    std::vector<Triplet> t;
    t.reserve(nnz);
    for (long k = 0; k < nnz; ++k) {
        long i = 0, j = 0;
        double v = 0.0;
        in >> i >> j >> v;
        t.emplace_back(static_cast<int>(i - 1), static_cast<int>(j - 1), v);
    }
    SpMat A(r, c);
    A.setFromTriplets(t.begin(), t.end());
    return A;
}

inline void write_vector(const std::filesystem::path& p, const Vec& v) {
    auto out = detail::open(p);
    for (Eigen::Index i = 0; i < v.size(); ++i) out << v[i] << '\n';
}

inline Vec read_vector(const std::filesystem::path& p) {
    std::ifstream in(p);
    if (!in) throw std::runtime_error("missing file: " + p.string());
    std::vector<double> vals;
    double d;
    while (in >> d) vals.push_back(d);
    return Eigen::Map<Vec>(vals.data(), static_cast<Eigen::Index>(vals.size()));
}

inline void write_json(const std::filesystem::path& p, const nlohmann::json& j) {
    auto out = detail::open(p);
    out << j.dump(2) << '\n';
}

inline nlohmann::json read_json(const std::filesystem::path& p) {
    std::ifstream in(p);
    if (!in) throw std::runtime_error("missing file: " + p.string());
    return nlohmann::json::parse(in);
}

}  // namespace nlmc::io
