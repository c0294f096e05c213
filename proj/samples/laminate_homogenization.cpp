// Coarse energy of x and y on a periodic two-phase laminate against the
// arithmetic and harmonic means, for a sequence of shrinking periods.
//   laminate_homogenization [k1 k2]

#include "nlmc/nlmc.hpp"

#include <cstdio>
#include <cstdlib>

using namespace nlmc;

int main(int argc, char** argv) {
    const double k1 = argc > 2 ? std::atof(argv[1]) : 1.0, k2 = argc > 2 ? std::atof(argv[2]) : 10.0;
    const double arithmetic = 0.5 * (k1 + k2), harmonic = 2.0 / (1.0 / k1 + 1.0 / k2);
    std::printf("%8s %14s %14s %14s %14s\n", "1/eps", "perpendicular", "harmonic", "parallel", "arithmetic");
    for (int n : {64, 128, 256}) {
        MediumSpec s;
        s.type = "laminate";
        s.eps = 2.0 / n;
        s.laminate_values = {k1, k2};
        s.kappa_tilde = "one";
        const auto m = build_medium(s, n);
        const auto g = GridHierarchy::build(n, 1.0 / 8, 1.0, 0.25, 1);
        const auto cs = ContinuaSet::build(g, m);
        const int layers = g.n_h();
        const auto b = MultiscaleBasis::build(g, m, cs, {layers, BoundaryCondition::neumann0}, required_cells(g, layers));
        const auto sys = assemble_coarse_system_rve(b, g, m, cs, nullptr, {layers, BoundaryCondition::neumann0});
        const Vec ux = interpolate_coarse(g, 1, [](Point p, int) { return p.x; });
        const Vec uy = interpolate_coarse(g, 1, [](Point p, int) { return p.y; });
        std::printf("%8d %14.6f %14.6f %14.6f %14.6f\n", n / 2, ux.dot(sys.A * ux), harmonic, uy.dot(sys.A * uy),
                    arithmetic);
    }
}
