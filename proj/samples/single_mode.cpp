// Solve a single pumped, lossy mode and compare with the closed-form
// Lorentzian Green's functions.

#include "zdmft/zdmft.hpp"

#include <cstdio>

int main() {
  zdmft::AimModel m;
  m.omega0 = 1.0;
  m.U = 0.0;
  m.Gamma2 = 0.0;
  m.P1 = 0.1;
  m.Gamma1 = 0.5;
  m.cutoffs = {zdmft::SiteSpec{25}};

  const auto grid = zdmft::FrequencyGrid{-4.0, 6.0, 11}.values();
  const auto sol = zdmft::solve_impurity(m, grid);

  std::printf("n_loc = %.12f (rate equation: %.12f)\n", sol.observables.n_loc, m.P1 / (m.Gamma1 - m.P1));
  std::printf("%8s %22s %22s\n", "omega", "Im G^R (ED)", "Im G^R (exact)");
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const std::complex<double> exact = 1.0 / std::complex<double>(grid[i] - m.omega0, m.Gamma1 - m.P1);
    std::printf("%8.3f %22.15f %22.15f\n", grid[i], sol.greens.gf.retarded[i].imag(), exact.imag());
  }
}
