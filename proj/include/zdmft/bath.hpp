#pragma once

// Lorentzian hybridization of a discretized dissipative bath and the
// constrained fit of bath parameters to a target hybridization.

#include "zdmft/lindblad.hpp"
#include "zdmft/spectral.hpp"

#include <ceres/ceres.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace zdmft {

/// Bath sites; Gamma1nn - P1nn is the Lorentzian half width and must stay
/// above the stability margin.
struct BathParams {
  std::vector<BathSite> sites;

  [[nodiscard]] std::size_t size() const { return sites.size(); }

  void validate(double eps_stab = 1e-6) const {
    for (std::size_t n = 0; n < sites.size(); ++n) {
      const auto& s = sites[n];
      const std::string where = "BathParams: site " + std::to_string(n + 1);
      if (!std::isfinite(s.omega) || !std::isfinite(s.nu) || !std::isfinite(s.gamma1) || !std::isfinite(s.pump1))
        throw std::invalid_argument(where + " has non-finite parameters");
      if (s.gamma1 < 0.0 || s.pump1 < 0.0) throw std::invalid_argument(where + " has a negative rate");
      if (s.gamma1 - s.pump1 < eps_stab * (1.0 - 1e-12))
        throw std::invalid_argument(where + " violates Gamma1 - P1 >= eps_stab");
    }
  }

  /// Sites ordered by ascending energy, couplings made nonnegative (the
  /// hybridization only depends on nu^2).
  [[nodiscard]] BathParams canonical() const {
    BathParams out = *this;
    for (auto& s : out.sites) s.nu = std::abs(s.nu);
    std::stable_sort(out.sites.begin(), out.sites.end(),
                     [](const BathSite& a, const BathSite& b) { return a.omega < b.omega; });
    return out;
  }

  friend bool operator==(const BathParams&, const BathParams&) = default;
};

/// Delta^R(w) = sum_n nu_n^2 / (w - w_n + i(G_n - P_n))
/// Delta^K(w) = -2i sum_n nu_n^2 (G_n + P_n) / ((w - w_n)^2 + (G_n - P_n)^2)
inline KeldyshGF eval_hybridization(const BathParams& params, const std::vector<double>& grid,
                                    double eps_stab = 1e-6) {
  params.validate(eps_stab);
  KeldyshGF out = KeldyshGF::zeros(grid);
  for (const auto& s : params.sites) {
    const double nu2 = s.nu * s.nu;
    const double width = s.gamma1 - s.pump1;
    const double sum = s.gamma1 + s.pump1;
    for (std::size_t g = 0; g < grid.size(); ++g) {
      const double x = grid[g] - s.omega;
      out.retarded[g] += nu2 / cd(x, width);
      out.keldysh[g] += cd(0.0, -2.0 * nu2 * sum / (x * x + width * width));
    }
  }
  return out;
}

/// Derivatives of one site's Lorentzians at one frequency with respect to
/// (omega, nu, gamma1, pump1).
struct SiteDerivatives {
  cd retarded;
  cd keldysh;
  std::array<cd, 4> d_retarded;
  std::array<cd, 4> d_keldysh;
};

inline SiteDerivatives site_derivatives(const BathSite& s, double w) {
  const double x = w - s.omega;
  const double nu2 = s.nu * s.nu;
  const double width = s.gamma1 - s.pump1;
  const double sum = s.gamma1 + s.pump1;
  const cd z(x, width);
  const cd inv = 1.0 / z;
  const double den = x * x + width * width;
  SiteDerivatives d;
  d.retarded = nu2 * inv;
  d.keldysh = cd(0.0, -2.0 * nu2 * sum / den);
  const cd inv2 = inv * inv;
  d.d_retarded = {nu2 * inv2, 2.0 * s.nu * inv, cd(0.0, -1.0) * nu2 * inv2, cd(0.0, 1.0) * nu2 * inv2};
  const double den2 = den * den;
  // d/dgamma and d/dpump act through sum (+1, +1) and width (+1, -1)
  const double d_sum = -2.0 * nu2 / den;
  const double d_width = 2.0 * nu2 * sum * 2.0 * width / den2;
  d.d_keldysh = {cd(0.0, -2.0 * nu2 * sum * 2.0 * x / den2), cd(0.0, -4.0 * s.nu * sum / den),
                 cd(0.0, d_sum + d_width), cd(0.0, d_sum - d_width)};
  return d;
}

/// Weight functions W^R(w), W^K(w) of the distance; constant 1 by default.
struct ChiWeights {
  std::function<double(double)> retarded = [](double) { return 1.0; };
  std::function<double(double)> keldysh = [](double) { return 1.0; };
};

/// chi = sum_{R,K} int dw W(w) |D1(w) - D2(w)|^n by the trapezoidal rule on the shared grid.
inline double chi_distance(const KeldyshGF& d1, const KeldyshGF& d2, const ChiWeights& weights = {},
                           double exponent = 2.0) {
  if (!same_grid(d1, d2)) throw std::invalid_argument("chi_distance: grids differ");
  if (!(exponent > 0.0)) throw std::invalid_argument("chi_distance: exponent must be positive");
  const auto t = trapezoid_weights(d1.omega);
  double chi = 0.0;
  for (std::size_t g = 0; g < d1.size(); ++g) {
    const double wr = weights.retarded(d1.omega[g]);
    const double wk = weights.keldysh(d1.omega[g]);
    if (wr < 0.0 || wk < 0.0) throw std::invalid_argument("chi_distance: negative weight");
    chi += t[g] * (wr * std::pow(std::abs(d1.retarded[g] - d2.retarded[g]), exponent) +
                   wk * std::pow(std::abs(d1.keldysh[g] - d2.keldysh[g]), exponent));
  }
  return chi;
}

/// Analytic gradient of chi(target, eval_hybridization(params)) with respect
/// to (omega_n, nu_n, gamma1_n, pump1_n), site-major.
inline std::vector<double> chi_gradient(const KeldyshGF& target, const BathParams& params,
                                        const ChiWeights& weights = {}, double exponent = 2.0) {
  const auto model = eval_hybridization(params, target.omega, 0.0);
  const auto t = trapezoid_weights(target.omega);
  std::vector<double> grad(4 * params.size(), 0.0);
  for (std::size_t g = 0; g < target.size(); ++g) {
    const double w = target.omega[g];
    const cd dr = model.retarded[g] - target.retarded[g];
    const cd dk = model.keldysh[g] - target.keldysh[g];
    // d|d|^n = n |d|^(n-2) Re(conj(d) dd)
    const double ar = std::abs(dr);
    const double ak = std::abs(dk);
    const double fr = ar > 0.0 ? t[g] * weights.retarded(w) * exponent * std::pow(ar, exponent - 2.0) : 0.0;
    const double fk = ak > 0.0 ? t[g] * weights.keldysh(w) * exponent * std::pow(ak, exponent - 2.0) : 0.0;
    for (std::size_t n = 0; n < params.size(); ++n) {
      const auto d = site_derivatives(params.sites[n], w);
      for (std::size_t p = 0; p < 4; ++p)
        grad[4 * n + p] += fr * std::real(std::conj(dr) * d.d_retarded[p]) + fk * std::real(std::conj(dk) * d.d_keldysh[p]);
    }
  }
  return grad;
}

struct FitOptions {
  ChiWeights weights;
  double eps_stab = 1e-6;
  double gamma_max = 0.0;  // <= 0: 1e3 x the largest grid energy scale
  double pump_max = 0.0;   // <= 0: same as gamma_max
  int restarts = 4;        // extra jittered starts
  double jitter = 0.2;     // log-uniform relative jitter of restarts
  std::uint64_t seed = 0;
  int max_iterations = 500;
};

struct FitReport {
  double final_chi = 0.0;
  double initial_chi = 0.0;
  int iterations = 0;
  bool converged = false;
  BathParams params;
};

class FitError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

// Fit coordinates per site: (omega, nu, width = gamma1 - pump1, pump1).
class HybridizationResiduals final : public ceres::CostFunction {
 public:
  HybridizationResiduals(const KeldyshGF& target, std::size_t n_bath, const ChiWeights& weights)
      : target_(target), n_bath_(n_bath) {
    const auto t = trapezoid_weights(target.omega);
    scale_r_.resize(t.size());
    scale_k_.resize(t.size());
    for (std::size_t g = 0; g < t.size(); ++g) {
      const double wr = weights.retarded(target.omega[g]);
      const double wk = weights.keldysh(target.omega[g]);
      if (wr < 0.0 || wk < 0.0) throw std::invalid_argument("fit_bath: negative weight");
      scale_r_[g] = std::sqrt(t[g] * wr);
      scale_k_[g] = std::sqrt(t[g] * wk);
    }
    set_num_residuals(static_cast<int>(4 * t.size()));
    mutable_parameter_block_sizes()->push_back(static_cast<int>(4 * n_bath));
  }

  bool Evaluate(double const* const* parameters, double* residuals, double** jacobians) const override {
    const double* x = parameters[0];
    const std::size_t np = 4 * n_bath_;
    std::vector<BathSite> sites(n_bath_);
    for (std::size_t n = 0; n < n_bath_; ++n)
      sites[n] = BathSite{x[4 * n], x[4 * n + 1], x[4 * n + 2] + x[4 * n + 3], x[4 * n + 3]};
    for (std::size_t g = 0; g < target_.size(); ++g) {
      const double w = target_.omega[g];
      cd r = -target_.retarded[g];
      cd k = -target_.keldysh[g];
      double* jrow = jacobians != nullptr && jacobians[0] != nullptr ? jacobians[0] + 4 * g * np : nullptr;
      if (jrow != nullptr) std::fill(jrow, jrow + 4 * np, 0.0);
      for (std::size_t n = 0; n < n_bath_; ++n) {
        const auto d = site_derivatives(sites[n], w);
        r += d.retarded;
        k += d.keldysh;
        if (jrow == nullptr) continue;
        // chain rule to (omega, nu, width, pump): d/dwidth = d/dgamma, d/dpump|width = d/dgamma + d/dpump
        const std::array<cd, 4> jr = {d.d_retarded[0], d.d_retarded[1], d.d_retarded[2],
                                      d.d_retarded[2] + d.d_retarded[3]};
        const std::array<cd, 4> jk = {d.d_keldysh[0], d.d_keldysh[1], d.d_keldysh[2], d.d_keldysh[2] + d.d_keldysh[3]};
        for (std::size_t p = 0; p < 4; ++p) {
          jrow[0 * np + 4 * n + p] = scale_r_[g] * jr[p].real();
          jrow[1 * np + 4 * n + p] = scale_r_[g] * jr[p].imag();
          jrow[2 * np + 4 * n + p] = scale_k_[g] * jk[p].real();
          jrow[3 * np + 4 * n + p] = scale_k_[g] * jk[p].imag();
        }
      }
      residuals[4 * g + 0] = scale_r_[g] * r.real();
      residuals[4 * g + 1] = scale_r_[g] * r.imag();
      residuals[4 * g + 2] = scale_k_[g] * k.real();
      residuals[4 * g + 3] = scale_k_[g] * k.imag();
    }
    for (std::size_t i = 0; i < 4 * target_.size(); ++i)
      if (!std::isfinite(residuals[i])) return false;
    return true;
  }

 private:
  const KeldyshGF& target_;
  std::size_t n_bath_;
  std::vector<double> scale_r_;
  std::vector<double> scale_k_;
};

struct SingleFit {
  BathParams params;
  double chi;
  int iterations;
  bool converged;
};

inline SingleFit run_single_fit(const KeldyshGF& target, const BathParams& start, const FitOptions& opt,
                                double width_max, double pump_max) {
  const std::size_t nb = start.size();
  std::vector<double> x(4 * nb);
  for (std::size_t n = 0; n < nb; ++n) {
    const auto& s = start.sites[n];
    x[4 * n] = s.omega;
    x[4 * n + 1] = s.nu;
    x[4 * n + 2] = std::clamp(s.gamma1 - s.pump1, opt.eps_stab, width_max);
    x[4 * n + 3] = std::clamp(s.pump1, 0.0, pump_max);
  }
  ceres::Problem::Options popt;
  popt.cost_function_ownership = ceres::TAKE_OWNERSHIP;
  ceres::Problem problem(popt);
  auto* cost = new HybridizationResiduals(target, nb, opt.weights);
  problem.AddResidualBlock(cost, nullptr, x.data());
  for (std::size_t n = 0; n < nb; ++n) {
    problem.SetParameterLowerBound(x.data(), static_cast<int>(4 * n + 2), opt.eps_stab);
    problem.SetParameterUpperBound(x.data(), static_cast<int>(4 * n + 2), width_max);
    problem.SetParameterLowerBound(x.data(), static_cast<int>(4 * n + 3), 0.0);
    problem.SetParameterUpperBound(x.data(), static_cast<int>(4 * n + 3), pump_max);
  }
  ceres::Solver::Options so;
  so.minimizer_type = ceres::TRUST_REGION;
  so.trust_region_strategy_type = ceres::LEVENBERG_MARQUARDT;
  so.linear_solver_type = ceres::DENSE_QR;
  so.max_num_iterations = opt.max_iterations;
  so.function_tolerance = 1e-16;
  so.gradient_tolerance = 1e-30;
  so.parameter_tolerance = 1e-13;
  so.logging_type = ceres::SILENT;
  so.minimizer_progress_to_stdout = false;
  so.num_threads = 1;
  ceres::Solver::Summary summary;
  ceres::Solve(so, &problem, &summary);
  if (!std::isfinite(summary.final_cost)) throw FitError("fit_bath: objective became non-finite");
  if (summary.termination_type == ceres::FAILURE && summary.iterations.empty())
    throw FitError("fit_bath: objective is not finite at the starting point");

  SingleFit out;
  out.params.sites.resize(nb);
  for (std::size_t n = 0; n < nb; ++n) {
    const double width = std::max(x[4 * n + 2], opt.eps_stab);
    const double pump = std::max(x[4 * n + 3], 0.0);
    out.params.sites[n] = BathSite{x[4 * n], x[4 * n + 1], width + pump, pump};
  }
  out.chi = 2.0 * summary.final_cost;  // ceres minimizes 1/2 sum r^2
  out.iterations = static_cast<int>(summary.iterations.size());
  out.converged = summary.termination_type == ceres::CONVERGENCE;
  return out;
}

}  // namespace detail

/// Locally minimizes chi(target, eval_hybridization(params)) with exponent 2
/// under Gamma1nn in [0, gamma_max], P1nn in [0, pump_max] and
/// Gamma1nn - P1nn >= eps_stab. The box is enforced on (width, pump) with
/// width in [eps_stab, gamma_max - pump_bound], pump in [0, pump_bound],
/// pump_bound = min(pump_max, gamma_max / 2).
///
/// Bounded Levenberg-Marquardt (ceres) on the weighted residuals, plus
/// `restarts` jittered starts; the lowest chi wins. The result is canonical
/// (sorted by energy, nu >= 0).
inline FitReport fit_bath(const KeldyshGF& target, std::size_t n_bath, const BathParams& init,
                          const FitOptions& options = {}) {
  if (init.size() != n_bath) throw std::invalid_argument("fit_bath: init has the wrong number of sites");
  init.validate(options.eps_stab);
  if (target.size() < 2) throw std::invalid_argument("fit_bath: target grid too small");
  for (std::size_t g = 0; g < target.size(); ++g)
    if (!std::isfinite(target.retarded[g].real()) || !std::isfinite(target.retarded[g].imag()) ||
        !std::isfinite(target.keldysh[g].real()) || !std::isfinite(target.keldysh[g].imag()))
      throw FitError("fit_bath: target contains NaN or Inf");

  double gamma_max = options.gamma_max;
  if (gamma_max <= 0.0)
    gamma_max = 1e3 * std::max({std::abs(target.omega.front()), std::abs(target.omega.back()), 1.0});
  const double pump_bound = std::min(options.pump_max > 0.0 ? options.pump_max : gamma_max, 0.5 * gamma_max);
  const double width_max = gamma_max - pump_bound;

  FitReport report;
  report.initial_chi = chi_distance(target, eval_hybridization(init, target.omega, options.eps_stab), options.weights);
  if (!std::isfinite(report.initial_chi)) throw FitError("fit_bath: chi is NaN at the initial parameters");
  if (n_bath == 0) {
    report.final_chi = report.initial_chi;
    report.converged = true;
    return report;
  }

  auto best = detail::run_single_fit(target, init, options, width_max, pump_bound);
  int total_iterations = best.iterations;

  std::mt19937_64 rng(options.seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  const double log_jitter = std::log1p(options.jitter);
  auto factor = [&] { return std::exp(log_jitter * unit(rng)); };
  for (int r = 0; r < options.restarts; ++r) {
    BathParams start = init;
    for (auto& s : start.sites) {
      const double width = s.gamma1 - s.pump1;
      s.omega += (factor() - 1.0) * std::max(std::abs(s.omega), width);
      s.nu *= factor();
      const double new_width = std::max(width * factor(), options.eps_stab);
      s.pump1 *= factor();
      s.gamma1 = new_width + s.pump1;
    }
    auto trial = detail::run_single_fit(target, start, options, width_max, pump_bound);
    total_iterations += trial.iterations;
    if (trial.chi < best.chi) best = std::move(trial);
  }

  if (best.chi > report.initial_chi) {
    best.params = init;
    best.chi = report.initial_chi;
  }
  report.params = best.params.canonical();
  report.params.validate(options.eps_stab);
  report.final_chi = chi_distance(target, eval_hybridization(report.params, target.omega, options.eps_stab),
                                  options.weights);
  report.iterations = total_iterations;
  report.converged = best.converged;
  return report;
}

}  // namespace zdmft
