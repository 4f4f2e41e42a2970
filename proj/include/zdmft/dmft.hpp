#pragma once

// DMFT self-consistency for the driven-dissipative Bose-Hubbard model on the
// Bethe lattice, with a Lindblad ED impurity solver and a fitted Lorentzian bath.

#include "zdmft/bath.hpp"
#include "zdmft/solver.hpp"

#include <Eigen/Dense>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace zdmft {

struct LatticeParams {
  double J = 4.0;  // hopping energy; nearest-neighbour amplitude is J / z
  int z = 6;       // coordination number
};

struct ImpurityParams {
  double omega0 = 1.0;
  double U = 10.0;
  double P1 = 0.1;
  double Gamma2 = 2.5;
};

struct DmftFitSettings {
  int restarts = 4;
  double jitter = 0.2;
  double eps_stab = 1e-6;
  double gamma_max = 0.0;  // <= 0: 1e3 x largest energy scale
  double pump_max = 0.0;   // <= 0: 1e3 x largest energy scale
  int max_iterations = 500;
  double weight_retarded = 1.0;
  double weight_keldysh = 1.0;
};

struct DmftConfig {
  LatticeParams lattice;
  ImpurityParams impurity;
  int n_bath = 2;
  std::vector<int> cutoffs = {3, 5, 5};  // impurity first
  std::optional<FrequencyGrid> grid;     // default: [-U, w0 + 5U], 2000 points
  double mixing = 0.5;
  double tolerance = 1e-4;  // on chi(Delta_new, Delta) / chi(Delta, 0)
  int anderson_depth = 0;   // > 0: Anderson-accelerated updates of the bath parameters
  int max_iterations = 60;
  DmftFitSettings fit;
  std::uint64_t seed = 0;

  [[nodiscard]] FrequencyGrid effective_grid() const {
    return grid ? *grid : FrequencyGrid::for_model(impurity.omega0, impurity.U);
  }

  [[nodiscard]] double largest_energy_scale() const {
    return std::max({std::abs(impurity.omega0), std::abs(impurity.U), std::abs(lattice.J), impurity.P1,
                     impurity.Gamma2, 1e-12});
  }

  void validate() const {
    if (lattice.J < 0.0) throw std::invalid_argument("lattice.J must be >= 0");
    if (lattice.z < 1) throw std::invalid_argument("lattice.z must be >= 1");
    if (impurity.P1 < 0.0) throw std::invalid_argument("impurity.P1 must be >= 0");
    if (impurity.Gamma2 < 0.0) throw std::invalid_argument("impurity.Gamma2 must be >= 0");
    if (n_bath < 0) throw std::invalid_argument("n_bath must be >= 0");
    if (cutoffs.size() != static_cast<std::size_t>(n_bath) + 1)
      throw std::invalid_argument("cutoffs must have n_bath + 1 entries");
    for (std::size_t i = 0; i < cutoffs.size(); ++i)
      if (cutoffs[i] < 0) throw std::invalid_argument("cutoffs[" + std::to_string(i) + "] must be >= 0");
    if (!(mixing > 0.0 && mixing <= 1.0)) throw std::invalid_argument("mixing must lie in (0, 1]");
    if (anderson_depth < 0) throw std::invalid_argument("anderson_depth must be >= 0");
    if (!(tolerance > 0.0)) throw std::invalid_argument("tolerance must be > 0");
    if (max_iterations < 1) throw std::invalid_argument("max_iterations must be >= 1");
    if (fit.restarts < 0) throw std::invalid_argument("fit.restarts must be >= 0");
    if (fit.eps_stab <= 0.0) throw std::invalid_argument("fit.eps_stab must be > 0");
    if (fit.weight_retarded < 0.0 || fit.weight_keldysh < 0.0)
      throw std::invalid_argument("fit weights must be >= 0");
    effective_grid().validate();
  }

  [[nodiscard]] FitOptions fit_options(std::uint64_t iteration_seed) const {
    FitOptions opt;
    const double wr = fit.weight_retarded;
    const double wk = fit.weight_keldysh;
    opt.weights.retarded = [wr](double) { return wr; };
    opt.weights.keldysh = [wk](double) { return wk; };
    opt.eps_stab = fit.eps_stab;
    opt.gamma_max = fit.gamma_max > 0.0 ? fit.gamma_max : 1e3 * largest_energy_scale();
    opt.pump_max = fit.pump_max > 0.0 ? fit.pump_max : 1e3 * largest_energy_scale();
    opt.restarts = fit.restarts;
    opt.jitter = fit.jitter;
    opt.seed = iteration_seed;
    opt.max_iterations = fit.max_iterations;
    return opt;
  }

  [[nodiscard]] ChiWeights chi_weights() const { return fit_options(0).weights; }
};

/// Impurity model for the current bath.
inline AimModel make_aim_model(const DmftConfig& config, const BathParams& bath) {
  AimModel m;
  m.omega0 = config.impurity.omega0;
  m.U = config.impurity.U;
  m.P1 = config.impurity.P1;
  m.Gamma2 = config.impurity.Gamma2;
  m.bath = bath.sites;
  for (int c : config.cutoffs) m.cutoffs.push_back(SiteSpec{c});
  return m;
}

/// Starting bath: energies spread uniformly over [w0, w0 + 3U] (a single site
/// sits at w0 + U), couplings J / sqrt(z N_B), widths U / 10, pumps P1.
inline BathParams default_initial_bath(const DmftConfig& config) {
  const auto nb = static_cast<std::size_t>(config.n_bath);
  const double w0 = config.impurity.omega0;
  const double U = config.impurity.U;
  BathParams b;
  for (std::size_t n = 0; n < nb; ++n) {
    const double omega = nb == 1 ? w0 + U : w0 + 3.0 * U * static_cast<double>(n) / static_cast<double>(nb - 1);
    const double nu = config.lattice.J / std::sqrt(static_cast<double>(config.lattice.z) * static_cast<double>(nb));
    const double width = std::max(U / 10.0, config.fit.eps_stab);
    b.sites.push_back(BathSite{omega, nu, width + config.impurity.P1, config.impurity.P1});
  }
  return b;
}

/// Bethe-lattice closure Delta = (J^2 / z) G_imp, componentwise.
inline KeldyshGF bethe_update(const KeldyshGF& gf_imp, double J, int z) {
  if (z < 1) throw std::invalid_argument("bethe_update: z must be >= 1");
  const double f = J * J / static_cast<double>(z);
  KeldyshGF out = gf_imp;
  for (std::size_t g = 0; g < out.size(); ++g) {
    out.retarded[g] *= f;
    out.keldysh[g] *= f;
  }
  return out;
}

/// (1 - alpha) a + alpha b
inline KeldyshGF mix(const KeldyshGF& a, const KeldyshGF& b, double alpha) {
  if (!same_grid(a, b)) throw std::invalid_argument("mix: grids differ");
  KeldyshGF out = a;
  for (std::size_t g = 0; g < out.size(); ++g) {
    out.retarded[g] = (1.0 - alpha) * a.retarded[g] + alpha * b.retarded[g];
    out.keldysh[g] = (1.0 - alpha) * a.keldysh[g] + alpha * b.keldysh[g];
  }
  return out;
}

class SingularInversionError : public std::runtime_error {
 public:
  SingularInversionError(double omega, double magnitude)
      : std::runtime_error("singular Keldysh inversion at omega = " + std::to_string(omega) +
                           " (|G^R| = " + std::to_string(magnitude) + ")"),
        omega_(omega) {}
  [[nodiscard]] double omega() const { return omega_; }

 private:
  double omega_;
};

/// Scalar Keldysh-matrix inverse per frequency: (G^-1)^R = 1/G^R,
/// (G^-1)^K = -G^K / |G^R|^2. It is an involution.
inline KeldyshGF keldysh_inverse(const KeldyshGF& g, double min_magnitude = 1e-12) {
  KeldyshGF out = g;
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double mag = std::abs(g.retarded[i]);
    if (mag < min_magnitude) throw SingularInversionError(g.omega[i], mag);
    out.retarded[i] = 1.0 / g.retarded[i];
    out.keldysh[i] = -g.keldysh[i] / (mag * mag);
  }
  return out;
}

/// Isolated non-interacting impurity with gain P1 only:
/// g0^R = 1/(w - w0 - i P1), g0^K = -2i P1 / ((w - w0)^2 + P1^2).
/// The retarded pole sits in the upper half plane (pure gain); it is only used
/// for the self-energy diagnostic.
inline KeldyshGF noninteracting_reference(double omega0, double P1, const std::vector<double>& grid) {
  KeldyshGF g = KeldyshGF::zeros(grid);
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const double x = grid[i] - omega0;
    g.retarded[i] = 1.0 / cd(x, -P1);
    g.keldysh[i] = cd(0.0, -2.0 * P1 / (x * x + P1 * P1));
  }
  return g;
}

/// Sigma = g0^-1 - Delta - G_imp^-1, componentwise in Keldysh-inverse space.
inline KeldyshGF impurity_self_energy(const KeldyshGF& gf_imp, const KeldyshGF& delta, const KeldyshGF& g0) {
  if (!same_grid(gf_imp, delta) || !same_grid(gf_imp, g0))
    throw std::invalid_argument("impurity_self_energy: grids differ");
  const auto g_inv = keldysh_inverse(gf_imp);
  const auto g0_inv = keldysh_inverse(g0);
  KeldyshGF sigma = gf_imp;
  for (std::size_t i = 0; i < sigma.size(); ++i) {
    sigma.retarded[i] = g0_inv.retarded[i] - delta.retarded[i] - g_inv.retarded[i];
    sigma.keldysh[i] = g0_inv.keldysh[i] - delta.keldysh[i] - g_inv.keldysh[i];
  }
  return sigma;
}

namespace detail {

// Bath parameters as (omega, |nu|, gamma1 - pump1, pump1) per site, energy-sorted.
inline Eigen::VectorXd pack_bath(const BathParams& b) {
  const auto c = b.canonical();
  Eigen::VectorXd x(4 * static_cast<Eigen::Index>(c.size()));
  for (std::size_t n = 0; n < c.size(); ++n) {
    const auto i = 4 * static_cast<Eigen::Index>(n);
    const auto& s = c.sites[n];
    x.segment<4>(i) << s.omega, s.nu, s.gamma1 - s.pump1, s.pump1;
  }
  return x;
}

inline BathParams unpack_bath(const Eigen::VectorXd& x, double eps_stab) {
  BathParams b;
  for (Eigen::Index i = 0; i + 3 < x.size(); i += 4) {
    const double width = std::max(x[i + 2], eps_stab);
    const double pump = std::max(x[i + 3], 0.0);
    b.sites.push_back(BathSite{x[i], std::abs(x[i + 1]), width + pump, pump});
  }
  return b.canonical();
}

// Type-II Anderson mixing on the fixed-point map x -> F(x), residual F(x) - x.
class AndersonMixer {
 public:
  AndersonMixer(int depth, double beta) : depth_(depth), beta_(beta) {}

  Eigen::VectorXd step(const Eigen::VectorXd& x, const Eigen::VectorXd& fx) {
    const Eigen::VectorXd r = fx - x;
    if (have_prev_) {
      dx_.push_back(x - x_prev_);
      dr_.push_back(r - r_prev_);
      if (static_cast<int>(dx_.size()) > depth_) {
        dx_.erase(dx_.begin());
        dr_.erase(dr_.begin());
      }
    }
    x_prev_ = x;
    r_prev_ = r;
    have_prev_ = true;
    if (dx_.empty()) return x + beta_ * r;
    const auto m = static_cast<Eigen::Index>(dx_.size());
    Eigen::MatrixXd DX(x.size(), m), DR(x.size(), m);
    for (Eigen::Index j = 0; j < m; ++j) {
      DX.col(j) = dx_[static_cast<std::size_t>(j)];
      DR.col(j) = dr_[static_cast<std::size_t>(j)];
    }
    const Eigen::VectorXd g = DR.completeOrthogonalDecomposition().solve(r);
    return x + beta_ * r - (DX + beta_ * DR) * g;
  }

  void reset() {
    dx_.clear();
    dr_.clear();
    have_prev_ = false;
  }

 private:
  int depth_;
  double beta_;
  bool have_prev_ = false;
  Eigen::VectorXd x_prev_, r_prev_;
  std::vector<Eigen::VectorXd> dx_, dr_;
};

}  // namespace detail

struct DmftIteration {
  int iteration = 0;
  double chi_fit = 0.0;         // chi(mixed target, fitted Delta)
  double delta_change = 0.0;    // chi(fitted Delta, Delta) / chi(Delta, 0), before extrapolation
  double n_loc = 0.0;           // impurity occupation at this iteration's bath
  double bethe_residual = 0.0;  // chi((J^2/z) G_imp, Delta) / chi(Delta, 0)
};

struct DmftSolution {
  bool converged = false;
  int iterations = 0;
  BathParams bath;       // bath the final impurity solve was done with
  BathParams next_bath;  // fit produced from the final solve
  KeldyshGF gf_imp;
  KeldyshGF delta;
  PoleExpansion poles;
  Observables observables;
  std::vector<DmftIteration> history;
};

class DmftError : public std::runtime_error {
 public:
  DmftError(int iteration, const std::string& what)
      : std::runtime_error("DMFT iteration " + std::to_string(iteration) + ": " + what), iteration_(iteration) {}
  [[nodiscard]] int iteration() const { return iteration_; }

 private:
  int iteration_;
};

using DmftProgress = std::function<void(const DmftIteration&)>;

/// Bethe-lattice DMFT loop:
///   solve the impurity for the current bath -> Delta_new = (J^2/z) G_imp
///   -> target = (1 - alpha) Delta + alpha Delta_new -> fit the bath,
/// until the fitted hybridization moves by less than `tolerance` (relative chi).
/// With anderson_depth > 0 the fit targets Delta_new itself and the next bath
/// is an Anderson extrapolation (step alpha) over the bath parameters; the
/// fixed point is the same.
inline DmftSolution dmft_loop(const DmftConfig& config, const BathParams& init, const SolverOptions& solver = {},
                              const DmftProgress& progress = {}) {
  config.validate();
  if (init.size() != static_cast<std::size_t>(config.n_bath))
    throw std::invalid_argument("dmft_loop: initial bath has the wrong number of sites");
  init.validate(config.fit.eps_stab);

  const auto grid = config.effective_grid().values();
  const auto weights = config.chi_weights();
  const KeldyshGF zero = KeldyshGF::zeros(grid);

  DmftSolution out;
  BathParams bath = init;
  const bool anderson = config.anderson_depth > 0 && config.n_bath > 0;
  detail::AndersonMixer mixer(config.anderson_depth, config.mixing);
  for (int it = 1; it <= config.max_iterations; ++it) {
    ImpuritySolution imp = [&] {
      try {
        return solve_impurity(make_aim_model(config, bath), grid, solver);
      } catch (const std::exception& e) {
        throw DmftError(it, std::string("impurity solve failed: ") + e.what());
      }
    }();
    const KeldyshGF delta = eval_hybridization(bath, grid, config.fit.eps_stab);
    const KeldyshGF delta_bethe = bethe_update(imp.greens.gf, config.lattice.J, config.lattice.z);
    const double norm = chi_distance(delta, zero, weights);
    auto relative = [norm](double chi) { return norm > 0.0 ? chi / norm : chi; };

    const KeldyshGF target = anderson ? delta_bethe : mix(delta, delta_bethe, config.mixing);
    auto fit = fit_bath(target, static_cast<std::size_t>(config.n_bath), bath,
                        config.fit_options(config.seed + static_cast<std::uint64_t>(it)));
    // residual of the fixed-point map, measured before any extrapolation
    const double change = relative(
        chi_distance(eval_hybridization(fit.params, grid, config.fit.eps_stab), delta, weights));
    if (anderson) {
      fit.params = detail::unpack_bath(mixer.step(detail::pack_bath(bath), detail::pack_bath(fit.params)),
                                       config.fit.eps_stab);
      fit.final_chi = chi_distance(target, eval_hybridization(fit.params, grid, config.fit.eps_stab), weights);
    }

    DmftIteration rec;
    rec.iteration = it;
    rec.chi_fit = fit.final_chi;
    rec.delta_change = change;
    rec.n_loc = imp.observables.n_loc;
    rec.bethe_residual = relative(chi_distance(delta_bethe, delta, weights));
    out.history.push_back(rec);
    if (progress) progress(rec);
    spdlog::debug("dmft it {:3d}: n_loc = {:.10f}, change = {:.3e}, chi_fit = {:.3e}", it, rec.n_loc,
                  rec.delta_change, rec.chi_fit);

    out.iterations = it;
    out.bath = bath;
    out.next_bath = fit.params;
    out.gf_imp = imp.greens.gf;
    out.poles = imp.greens.poles;
    out.delta = delta;
    out.observables = imp.observables;
    if (rec.delta_change <= config.tolerance) {
      out.converged = true;
      break;
    }
    bath = fit.params;
  }
  return out;
}

inline DmftSolution dmft_loop(const DmftConfig& config) { return dmft_loop(config, default_initial_bath(config)); }

}  // namespace zdmft
