#pragma once

// Exact-diagonalization impurity solver: steady state, observables and
// Green's functions of one AimModel.

#include "zdmft/lindblad.hpp"
#include "zdmft/spectral.hpp"

#include <spdlog/spdlog.h>

#include <cmath>
#include <optional>
#include <vector>

namespace zdmft {

enum class SteadyStateMethod {
  direct,  // sparse LU null vector of the sector-0 block
  eigen,   // full eigendecomposition of the sector-0 block
};

enum class GreensMethod {
  krylov,  // Arnoldi projection of the resolvents; dense fallback if not converged
  dense,   // full two-sided eigendecomposition of sector +1
};

struct SolverOptions {
  SteadyStateMethod steady_state = SteadyStateMethod::direct;
  GreensMethod greens = GreensMethod::krylov;
  KrylovOptions krylov;
  /// Take sector -1 from sector +1 by the Hermiticity-preserving mirror
  /// instead of diagonalizing it separately.
  bool mirror_sectors = true;
  double eig_tolerance = 1e-8;
  /// On a defective block, perturb bath energies by 1e-9 relative and retry once.
  bool jitter_retry = true;
};

struct ImpuritySolution {
  AimModel model;  // the model actually solved (after any jitter)
  CompositeBasis basis;
  SteadyState steady;
  Observables observables;
  ImpurityGreens greens;
  bool jittered = false;
};

namespace detail {

inline ImpuritySolution solve_once(const AimModel& model, const std::vector<double>& grid, const SolverOptions& opt) {
  CompositeBasis basis(model.cutoffs);
  const bool krylov = opt.greens == GreensMethod::krylov;
  std::vector<int> ks = {0, 1};
  if (krylov || !opt.mirror_sectors) ks.push_back(-1);
  const auto superop = vectorize_lindbladian(model, basis, ks);
  const auto& s0 = superop.sector(0);
  const auto& sp = superop.sector(1);

  SteadyState ss = opt.steady_state == SteadyStateMethod::direct
                       ? steady_state_direct(s0)
                       : steady_state(eigendecompose_sector(s0.block, opt.eig_tolerance), s0.index, s0.block.norm());

  auto dense_greens = [&] {
    Eigensystem eig_plus = eigendecompose_sector(sp.block, opt.eig_tolerance);
    SectorIndex minus_index = opt.mirror_sectors ? SectorIndex(basis, -1) : superop.sector(-1).index;
    Eigensystem eig_minus = opt.mirror_sectors
                                ? mirror_eigensystem(eig_plus, mirror_permutation(minus_index, sp.index))
                                : eigendecompose_sector(superop.sector(-1).block, opt.eig_tolerance);
    return impurity_greens(eig_minus, minus_index, eig_plus, sp.index, s0.index, ss, basis, grid);
  };
  ImpurityGreens greens;
  if (krylov) {
    try {
      greens = impurity_greens_krylov(superop.sector(-1), sp, s0.index, ss, basis, grid, opt.krylov);
    } catch (const KrylovNotConvergedError& e) {
      spdlog::warn("{}; using the dense eigendecomposition", e.what());
      greens = dense_greens();
    }
  } else {
    greens = dense_greens();
  }
  if (greens.has_growing_mode) spdlog::warn("impurity Green's function includes a growing mode (Re L > 0)");
  auto obs = local_observables(ss, basis);
  return ImpuritySolution{model, std::move(basis), std::move(ss), std::move(obs), std::move(greens), false};
}

}  // namespace detail

inline AimModel jitter_bath_energies(AimModel model, double relative = 1e-9) {
  for (std::size_t n = 0; n < model.bath.size(); ++n) {
    auto& w = model.bath[n].omega;
    const double delta = relative * static_cast<double>(n + 1);
    w = w != 0.0 ? w * (1.0 + delta) : delta;
  }
  return model;
}

/// Steady state, local observables and G^{R,K} on `grid` for one impurity model.
inline ImpuritySolution solve_impurity(const AimModel& model, const std::vector<double>& grid,
                                       const SolverOptions& options = {}) {
  model.validate();
  try {
    return detail::solve_once(model, grid, options);
  } catch (const DefectiveMatrixError& e) {
    if (!options.jitter_retry) throw;
    spdlog::warn("defective Lindbladian block (residual {:.3e}); retrying with jittered bath energies", e.residual());
    auto sol = detail::solve_once(jitter_bath_energies(model), grid, options);
    sol.jittered = true;
    return sol;
  }
}

}  // namespace zdmft
