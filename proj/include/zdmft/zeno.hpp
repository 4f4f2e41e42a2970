#pragma once

// Quantum Zeno analysis: closed-form hard-core rates, Gamma2 sweeps with warm
// starts, and the effective dissipative dimer.

#include "zdmft/dmft.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <exception>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace zdmft {

struct EffectiveRates {
  double J2_eff = 0.0;      // pair hopping
  double Gamma2_eff = 0.0;  // pair loss
};

/// J2_eff = (J/z)^2 U / (U^2 + G2^2), Gamma2_eff = (J/z)^2 G2 / (U^2 + G2^2).
inline EffectiveRates effective_rates(double J, int z, double U, double Gamma2) {
  if (z < 1) throw std::invalid_argument("effective_rates: z must be >= 1");
  const double t2 = (J / z) * (J / z);
  const double denom = U * U + Gamma2 * Gamma2;
  if (denom == 0.0) throw std::invalid_argument("effective_rates: U and Gamma2 both vanish");
  return EffectiveRates{t2 * U / denom, t2 * Gamma2 / denom};
}

struct SweepPoint {
  double gamma2 = 0.0;
  double n_loc = 0.0;
  double n_loc_normalized = 0.0;
  double gamma111_eff = 0.0;                    // width of the lowest-energy bath site
  std::vector<double> impurity_fock_weights;    // p_0 .. p_N0
  std::vector<double> bath_mean_occupation;     // per bath site, same order as bath
  bool converged = false;
  int iterations = 0;
  std::string error;  // non-empty if the DMFT loop aborted
  DmftSolution solution;
};

struct SweepResult {
  double J = 0.0;
  double U = 0.0;
  std::vector<SweepPoint> points;
  double normalization_gamma2 = 0.0;  // Gamma2 of the point used to normalize

  [[nodiscard]] std::vector<double> gamma2_values() const {
    std::vector<double> g;
    for (const auto& p : points) g.push_back(p.gamma2);
    return g;
  }
  [[nodiscard]] bool all_converged() const {
    return std::all_of(points.begin(), points.end(), [](const SweepPoint& p) { return p.converged; });
  }
};

/// Divides every n_loc by the value at Gamma2 / U = 10, or, if that point is
/// absent or unconverged, by the converged point with the largest Gamma2.
inline void normalize_sweep(SweepResult& result) {
  const SweepPoint* ref = nullptr;
  bool present = false;
  for (const auto& p : result.points) {
    if (std::abs(p.gamma2 / result.U - 10.0) >= 1e-9) continue;
    present = true;
    if (p.converged) ref = &p;
  }
  if (ref == nullptr) {
    for (const auto& p : result.points)
      if (p.converged && (ref == nullptr || p.gamma2 > ref->gamma2)) ref = &p;
    if (ref != nullptr && present)
      spdlog::warn("point at Gamma2/U = 10 did not converge; normalizing to Gamma2 = {}", ref->gamma2);
    else if (ref != nullptr)
      spdlog::info("sweep has no point at Gamma2/U = 10; normalizing to Gamma2 = {}", ref->gamma2);
  }
  if (ref == nullptr || ref->n_loc == 0.0) {
    spdlog::warn("sweep has no usable normalization point");
    for (auto& p : result.points) p.n_loc_normalized = std::nan("");
    result.normalization_gamma2 = std::nan("");
    return;
  }
  const double n_ref = ref->n_loc;
  result.normalization_gamma2 = ref->gamma2;
  for (auto& p : result.points) p.n_loc_normalized = p.n_loc / n_ref;
}

inline SweepPoint make_sweep_point(double gamma2, DmftSolution sol) {
  SweepPoint p;
  p.gamma2 = gamma2;
  p.n_loc = sol.observables.n_loc;
  p.converged = sol.converged;
  p.iterations = sol.iterations;
  const auto bath = sol.bath.canonical();
  if (!bath.sites.empty()) p.gamma111_eff = bath.sites.front().gamma1 - bath.sites.front().pump1;
  if (!sol.observables.site_occupation_probs.empty())
    p.impurity_fock_weights = sol.observables.site_occupation_probs.front();
  // site_mean_occupation follows the solved bath order; report it sorted by energy
  std::vector<std::size_t> order(sol.bath.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return sol.bath.sites[a].omega < sol.bath.sites[b].omega; });
  for (auto i : order)
    if (i + 1 < sol.observables.site_mean_occupation.size())
      p.bath_mean_occupation.push_back(sol.observables.site_mean_occupation[i + 1]);
  p.solution = std::move(sol);
  return p;
}

using SweepProgress = std::function<void(const SweepPoint&)>;

struct SweepOptions {
  std::optional<BathParams> init;  // start of the chain; default_initial_bath otherwise
  SolverOptions solver;
  /// Non-empty: converge every point at these (cheaper) cutoffs first and
  /// start the full solve from the previous full bath shifted by the change
  /// of the cheap solution between the two points.
  std::vector<int> presolve_cutoffs;
};

/// DMFT over an ascending list of Gamma2 values. Each point starts from the
/// previous point's fitted bath (the last converged one, if any).
inline SweepResult sweep_zeno(const DmftConfig& config, const std::vector<double>& gamma2_list,
                              const SweepOptions& options = {}, const SweepProgress& progress = {}) {
  if (!std::is_sorted(gamma2_list.begin(), gamma2_list.end()))
    throw std::invalid_argument("sweep_zeno: Gamma2 values must be sorted ascending");
  const bool presolve = !options.presolve_cutoffs.empty();
  if (presolve && options.presolve_cutoffs.size() != config.cutoffs.size())
    throw std::invalid_argument("sweep_zeno: presolve cutoffs must have n_bath + 1 entries");
  SweepResult result;
  result.J = config.lattice.J;
  result.U = config.impurity.U;
  std::optional<BathParams> warm = options.init;
  std::optional<BathParams> coarse_warm = options.init;
  std::optional<BathParams> coarse_prev;  // cheap solution at the point `warm` came from
  for (double g2 : gamma2_list) {
    DmftConfig c = config;
    c.impurity.Gamma2 = g2;
    spdlog::info("sweep J = {}: Gamma2 = {}", c.lattice.J, g2);
    try {
      BathParams start = warm ? *warm : default_initial_bath(c);
      std::optional<BathParams> coarse;
      if (presolve) {
        DmftConfig cc = c;
        cc.cutoffs = options.presolve_cutoffs;
        auto cs = dmft_loop(cc, coarse_warm ? *coarse_warm : default_initial_bath(cc), options.solver);
        coarse = cs.next_bath;
        coarse_warm = cs.next_bath;
        if (warm && coarse_prev) {
          const Eigen::VectorXd shifted =
              detail::pack_bath(*warm) + detail::pack_bath(*coarse) - detail::pack_bath(*coarse_prev);
          start = detail::unpack_bath(shifted, c.fit.eps_stab);
        } else {
          start = *coarse;
        }
      }
      auto sol = dmft_loop(c, start, options.solver);
      if (sol.converged || !warm) {
        warm = sol.next_bath;
        coarse_prev = coarse;
      }
      if (!sol.converged) spdlog::warn("Gamma2 = {} did not converge in {} iterations", g2, sol.iterations);
      result.points.push_back(make_sweep_point(g2, std::move(sol)));
    } catch (const std::exception& e) {
      spdlog::error("Gamma2 = {} failed: {}", g2, e.what());
      SweepPoint p;
      p.gamma2 = g2;
      p.n_loc = std::nan("");
      p.gamma111_eff = std::nan("");
      p.error = e.what();
      result.points.push_back(std::move(p));
    }
    if (progress) progress(result.points.back());
  }
  normalize_sweep(result);
  return result;
}

/// Independent sweeps, one per J value, on a pool of `jobs` workers. Results
/// are returned in the order of `J_list` regardless of scheduling.
inline std::vector<SweepResult> sweep_zeno_parallel(const DmftConfig& config, const std::vector<double>& J_list,
                                                    const std::vector<double>& gamma2_list, std::size_t jobs,
                                                    const SweepOptions& options = {},
                                                    const std::function<void(std::size_t, const SweepPoint&)>& progress = {}) {
  std::vector<std::optional<SweepResult>> out(J_list.size());
  std::vector<std::exception_ptr> errors(J_list.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < J_list.size(); i = next++) {
      try {
        DmftConfig c = config;
        c.lattice.J = J_list[i];
        SweepProgress cb;
        if (progress) cb = [&progress, i](const SweepPoint& p) { progress(i, p); };
        out[i] = sweep_zeno(c, gamma2_list, options, cb);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t n_workers = std::clamp<std::size_t>(jobs, 1, std::max<std::size_t>(J_list.size(), 1));
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < n_workers; ++w) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  std::vector<SweepResult> results;
  for (auto& r : out) results.push_back(std::move(*r));
  return results;
}

struct ZenoMinimum {
  double gamma2 = 0.0;
  double n_loc = 0.0;
  bool interior = false;  // the lowest sampled point is not an endpoint
};

/// Location of the occupation minimum: vertex of the parabola through the
/// lowest sampled point and its two neighbours (the point itself at an edge).
inline ZenoMinimum zeno_minimum(const std::vector<double>& gamma2, const std::vector<double>& n_loc) {
  if (gamma2.size() != n_loc.size() || gamma2.empty())
    throw std::invalid_argument("zeno_minimum: need matching, non-empty arrays");
  const auto k = static_cast<std::size_t>(std::min_element(n_loc.begin(), n_loc.end()) - n_loc.begin());
  if (k == 0 || k + 1 == n_loc.size()) return ZenoMinimum{gamma2[k], n_loc[k], false};
  const double x0 = gamma2[k - 1], x1 = gamma2[k], x2 = gamma2[k + 1];
  const double y0 = n_loc[k - 1], y1 = n_loc[k], y2 = n_loc[k + 1];
  const double d01 = (y1 - y0) / (x1 - x0);
  const double d12 = (y2 - y1) / (x2 - x1);
  const double a = (d12 - d01) / (x2 - x0);
  if (!(a > 0.0)) return ZenoMinimum{x1, y1, true};
  const double b = d01 - a * (x0 + x1);
  const double x = -b / (2.0 * a);
  const double y = y1 + (x - x1) * (d01 + a * (x - x0));
  return ZenoMinimum{x, y, true};
}

/// Hard-core impurity (cutoff 1) coupled to one lossy bath site at w0 + U with
/// coupling J / sqrt(z): Gamma1 - P1 = width, P1 = pump on the bath site.
inline AimModel build_zeno_dimer(const DmftConfig& config, double width, double pump, int bath_cutoff = 5) {
  if (!(width >= config.fit.eps_stab)) throw std::invalid_argument("build_zeno_dimer: width below stability margin");
  if (pump < 0.0) throw std::invalid_argument("build_zeno_dimer: pump must be >= 0");
  AimModel m;
  m.omega0 = config.impurity.omega0;
  m.U = config.impurity.U;
  m.P1 = config.impurity.P1;
  m.Gamma2 = config.impurity.Gamma2;
  m.bath = {BathSite{config.impurity.omega0 + config.impurity.U,
                     config.lattice.J / std::sqrt(static_cast<double>(config.lattice.z)), width + pump, pump}};
  m.cutoffs = {SiteSpec{1}, SiteSpec{bath_cutoff}};
  m.validate();
  return m;
}

/// Single-bath-site DMFT configuration started from the dimer's bath site.
inline DmftConfig dimer_dmft_config(const DmftConfig& config, int impurity_cutoff, int bath_cutoff) {
  DmftConfig c = config;
  c.n_bath = 1;
  c.cutoffs = {impurity_cutoff, bath_cutoff};
  return c;
}

inline BathParams dimer_bath(const AimModel& dimer) { return BathParams{dimer.bath}; }

}  // namespace zdmft
