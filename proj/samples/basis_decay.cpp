// Energy of one multicontinua basis function by Chebyshev distance (in h-cells)
// from its own cell, on the Example-1 medium, for growing oversampling.
//   basis_decay [n_fine]

#include "nlmc/nlmc.hpp"

#include <cstdio>
#include <cstdlib>

using namespace nlmc;

int main(int argc, char** argv) {
    const int n = argc > 1 ? std::atoi(argv[1]) : 200;
    MediumSpec s;
    s.type = "ex1";
    s.eps = 0.01;
    s.threshold = 2.0;
    const auto m = build_medium(s, n);
    const auto g = GridHierarchy::build(n, 0.05, 0.1, 0.1, 1);
    const auto cs = ContinuaSet::build(g, m);
    const int x = g.h_index(g.n_h() / 2, g.n_h() / 2);
    for (int a = cs.first_dof(x); a < cs.first_dof(x) + cs.count(x); ++a) {
        std::printf("continuum %d of h-cell %d\n", cs.dof(a).label, x);
        for (int layers = 1; layers <= 5; ++layers) {
            const auto b = MultiscaleBasis::build(g, m, cs, {layers, BoundaryCondition::dirichlet0}, {x});
            const auto prof = decay_profile(b, g, m, cs, a);
            std::printf("  layers %d:", layers);
            for (double f : prof) std::printf(" %.2e", f);
            std::printf("\n");
        }
    }
}
