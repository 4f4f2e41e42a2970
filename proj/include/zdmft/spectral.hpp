#pragma once

// Two-sided eigendecomposition of Lindbladian sectors, steady states, and the
// impurity Green's functions in their pole (spectral) representation.

#include "zdmft/detail/lapack.hpp"
#include "zdmft/fock.hpp"
#include "zdmft/lindblad.hpp"

#include <Eigen/SparseLU>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

namespace zdmft {

/// Eigenvalues with bi-orthonormal eigenvectors: `right` holds |r_a> as
/// columns and `left` holds <l_a| as rows, so that left * right = 1 and
/// <l_a|x> = (left * x)_a without conjugation.
struct Eigensystem {
  Eigen::VectorXcd values;
  Eigen::MatrixXcd right;
  Eigen::MatrixXcd left;
  double reconstruction_residual = 0.0;  // relative Frobenius bound on ||L - R diag(values) left||

  [[nodiscard]] Eigen::Index size() const { return values.size(); }
};

class DefectiveMatrixError : public std::runtime_error {
 public:
  DefectiveMatrixError(double residual, double tolerance)
      : std::runtime_error("eigendecomposition is not reliable (reconstruction residual " + std::to_string(residual) +
                           " > " + std::to_string(tolerance) + "); block is defective or near-defective"),
        residual_(residual) {}
  [[nodiscard]] double residual() const { return residual_; }

 private:
  double residual_;
};

namespace detail {

inline Eigensystem finish_eigensystem(Eigen::VectorXcd values, Eigen::MatrixXcd right,
                                      const Eigen::MatrixXcd& residual_matrix, double block_norm, double tolerance,
                                      const Eigen::MatrixXcd* dense_block) {
  Eigen::PartialPivLU<Eigen::MatrixXcd> lu(right);
  Eigen::MatrixXcd left = lu.inverse();
  if (!left.allFinite()) throw DefectiveMatrixError(std::numeric_limits<double>::infinity(), tolerance);
  const double scale = block_norm > 0.0 ? block_norm : 1.0;
  // ||A - V L V^-1|| = ||(A V - V L) V^-1|| <= ||A V - V L|| ||V^-1||
  double residual = residual_matrix.norm() * left.norm() / scale;
  if (residual > tolerance && dense_block != nullptr) {
    const Eigen::MatrixXcd recon = right * values.asDiagonal() * left;
    residual = (recon - *dense_block).norm() / scale;
  }
  if (residual > tolerance) throw DefectiveMatrixError(residual, tolerance);
  return Eigensystem{std::move(values), std::move(right), std::move(left), residual};
}

// Left eigenvectors straight from zgeev, scaled so that <l_a|r_a> = 1. For
// distinct eigenvalues this is V^-1 without an O(n^3) inverse; clusters with
// ill-conditioned eigenvalues fall back to the explicit inverse.
template <class Block>
Eigensystem two_sided_eigensystem(const Block& block, const Eigen::MatrixXcd& dense, double tolerance) {
  auto pairs = zgeev_both(dense);
  const double scale = block.norm() > 0.0 ? block.norm() : 1.0;
  const auto n = pairs.values.size();
  Eigen::MatrixXcd left(n, n);
  bool well_conditioned = true;
  for (Eigen::Index a = 0; a < n && well_conditioned; ++a) {
    const cd overlap = pairs.left.col(a).dot(pairs.right.col(a));  // u^H v
    if (std::abs(overlap) < 1e-8) well_conditioned = false;
    left.row(a) = pairs.left.col(a).adjoint() / overlap;
  }
  const Eigen::MatrixXcd right_residual = block * pairs.right - pairs.right * pairs.values.asDiagonal();
  if (well_conditioned) {
    const Eigen::MatrixXcd left_residual =
        Eigen::MatrixXcd(left * block) - pairs.values.asDiagonal() * left;
    const double residual =
        std::max(right_residual.norm() * left.norm(), left_residual.norm() * pairs.right.norm()) / scale;
    if (residual <= tolerance) return Eigensystem{std::move(pairs.values), std::move(pairs.right), std::move(left), residual};
  }
  return finish_eigensystem(std::move(pairs.values), std::move(pairs.right), right_residual, block.norm(), tolerance,
                            &dense);
}

}  // namespace detail

/// Dense general complex eigenproblem with bi-orthonormalized vectors.
/// Throws DefectiveMatrixError when the spectral reconstruction misses
/// `tolerance` (relative to ||block||_F).
inline Eigensystem eigendecompose_sector(const Eigen::MatrixXcd& block, double tolerance = 1e-8) {
  if (!block.allFinite()) throw std::invalid_argument("eigendecompose_sector: non-finite entries");
  return detail::two_sided_eigensystem(block, block, tolerance);
}

inline Eigensystem eigendecompose_sector(const Eigen::SparseMatrix<cd>& block, double tolerance = 1e-8) {
  Eigen::MatrixXcd dense(block);
  if (!dense.allFinite()) throw std::invalid_argument("eigendecompose_sector: non-finite entries");
  return detail::two_sided_eigensystem(block, dense, tolerance);
}

/// Eigensystem of sector -k from that of sector k, using
/// block(-k)(i, j) = conj(block(k)(perm i, perm j)).
inline Eigensystem mirror_eigensystem(const Eigensystem& eigs, const std::vector<std::int64_t>& perm) {
  const auto n = eigs.size();
  Eigensystem out;
  out.values = eigs.values.conjugate();
  out.right.resize(n, n);
  out.left.resize(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto src = static_cast<Eigen::Index>(perm[static_cast<std::size_t>(i)]);
    out.right.row(i) = eigs.right.row(src).conjugate();
    out.left.col(i) = eigs.left.col(src).conjugate();
  }
  out.reconstruction_residual = eigs.reconstruction_residual;
  return out;
}

struct SteadyState {
  Eigen::VectorXcd rho_vec;  // sector-0 vector with <I|rho> = 1
  Eigen::MatrixXcd rho;      // reshaped density matrix
  cd eigenvalue{0.0, 0.0};   // eigenvalue it was selected from (zero for the direct solve)
};

class NoSteadyStateError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};
class DegenerateSteadyStateError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {
inline SteadyState normalize_steady_state(const SectorIndex& sector0, Eigen::VectorXcd v, cd eigenvalue) {
  const cd trace = left_vacuum(sector0).dot(v);  // dot conjugates the (real) left argument
  if (std::abs(trace) < 1e-300) throw NoSteadyStateError("steady-state candidate has zero trace");
  v /= trace;
  Eigen::MatrixXcd rho = to_operator(sector0, v);
  rho = 0.5 * (rho + rho.adjoint()).eval();
  v = from_operator(sector0, rho);
  return SteadyState{std::move(v), std::move(rho), eigenvalue};
}
}  // namespace detail

/// Selects the eigenvector of largest real part, which must lie within
/// lambda_tol = rel_tol * block_norm of zero, and normalizes it to unit trace.
inline SteadyState steady_state(const Eigensystem& eigs_k0, const SectorIndex& sector0, double block_norm,
                                double rel_tol = 1e-7) {
  if (sector0.k() != 0) throw std::invalid_argument("steady_state: sector 0 required");
  if (eigs_k0.size() == 0) throw NoSteadyStateError("no steady state: empty sector");
  const double lambda_tol = rel_tol * block_norm;
  Eigen::Index best = 0;
  int near_zero = 0;
  for (Eigen::Index i = 0; i < eigs_k0.size(); ++i) {
    if (eigs_k0.values[i].real() > eigs_k0.values[best].real()) best = i;
    if (std::abs(eigs_k0.values[i]) <= lambda_tol) ++near_zero;
  }
  if (std::abs(eigs_k0.values[best]) > lambda_tol)
    throw NoSteadyStateError("no steady state: leading eigenvalue " + std::to_string(eigs_k0.values[best].real()) +
                             (eigs_k0.values[best].imag() < 0 ? "" : "+") +
                             std::to_string(eigs_k0.values[best].imag()) + "i is not within tolerance of zero");
  if (near_zero > 1)
    throw DegenerateSteadyStateError("degenerate steady-state manifold: " + std::to_string(near_zero) +
                                     " eigenvalues within tolerance of zero");
  return detail::normalize_steady_state(sector0, eigs_k0.right.col(best), eigs_k0.values[best]);
}

/// Null vector of the sector-0 block by a sparse LU solve, with one equation
/// replaced by the trace condition <I|rho> = 1.
inline SteadyState steady_state_direct(const SectorBlock& sector0, double residual_tol = 1e-9) {
  const auto& index = sector0.index;
  if (index.k() != 0) throw std::invalid_argument("steady_state_direct: sector 0 required");
  const auto n = static_cast<Eigen::Index>(index.size());
  // Row of |0;0~> carries unit weight in <I| and is redundant by trace preservation.
  const auto replaced = index.position(0, 0);
  Eigen::SparseMatrix<cd, Eigen::RowMajor> rows = sector0.block;
  std::vector<Eigen::Triplet<cd>> trip;
  trip.reserve(static_cast<std::size_t>(rows.nonZeros()) + index.basis_dimension());
  for (Eigen::Index r = 0; r < n; ++r) {
    if (r == replaced) continue;
    for (decltype(rows)::InnerIterator it(rows, r); it; ++it) trip.emplace_back(r, it.col(), it.value());
  }
  for (std::size_t i = 0; i < index.size(); ++i)
    if (index.pair(i).row == index.pair(i).col) trip.emplace_back(replaced, static_cast<Eigen::Index>(i), 1.0);
  Eigen::SparseMatrix<cd> m(n, n);
  m.setFromTriplets(trip.begin(), trip.end());
  m.makeCompressed();
  Eigen::SparseLU<Eigen::SparseMatrix<cd>, Eigen::COLAMDOrdering<int>> lu;
  lu.compute(m);
  if (lu.info() != Eigen::Success) throw NoSteadyStateError("no steady state: trace-constrained system is singular");
  Eigen::VectorXcd rhs = Eigen::VectorXcd::Zero(n);
  rhs[replaced] = 1.0;
  Eigen::VectorXcd v = lu.solve(rhs);
  if (lu.info() != Eigen::Success || !v.allFinite())
    throw NoSteadyStateError("no steady state: sparse solve failed");
  const double residual = (sector0.block * v).norm() / (std::max(sector0.block.norm(), 1e-300) * v.norm());
  if (residual > residual_tol)
    throw NoSteadyStateError("no steady state: null-vector residual " + std::to_string(residual));
  return detail::normalize_steady_state(index, std::move(v), cd(0.0, 0.0));
}

struct Observables {
  double n_loc = 0.0;
  std::vector<std::vector<double>> site_occupation_probs;  // per site, index = Fock occupation
  std::vector<double> site_mean_occupation;
  double commutator = 0.0;      // <[a, a^dag]> on the truncated space
  double anticommutator = 0.0;  // <{a, a^dag}>
};

/// Impurity occupation, per-site diagonal reduced density matrices, and the
/// truncated static moments of the impurity mode.
inline Observables local_observables(const SteadyState& ss, const CompositeBasis& basis) {
  const auto d = basis.dimension();
  if (static_cast<std::size_t>(ss.rho.rows()) != d) throw std::invalid_argument("local_observables: basis mismatch");
  Observables obs;
  obs.site_occupation_probs.resize(basis.num_sites());
  obs.site_mean_occupation.assign(basis.num_sites(), 0.0);
  for (std::size_t i = 0; i < basis.num_sites(); ++i)
    obs.site_occupation_probs[i].assign(static_cast<std::size_t>(basis.cutoff(i) + 1), 0.0);
  for (std::size_t s = 0; s < d; ++s) {
    const double p = ss.rho(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(s)).real();
    for (std::size_t i = 0; i < basis.num_sites(); ++i) {
      const int n = basis.occupation(s, i);
      obs.site_occupation_probs[i][static_cast<std::size_t>(n)] += p;
      obs.site_mean_occupation[i] += n * p;
    }
  }
  obs.n_loc = obs.site_mean_occupation[0];
  const int cutoff = basis.cutoff(0);
  const double top = obs.site_occupation_probs[0][static_cast<std::size_t>(cutoff)];
  obs.commutator = 1.0 - (cutoff + 1) * top;
  obs.anticommutator = 2.0 * obs.n_loc + obs.commutator;
  return obs;
}

/// Uniform frequency grid.
struct FrequencyGrid {
  double omega_min = -10.0;
  double omega_max = 51.0;
  int points = 2000;

  void validate() const {
    if (points < 2) throw std::invalid_argument("FrequencyGrid: at least two points required");
    if (!(omega_max > omega_min)) throw std::invalid_argument("FrequencyGrid: omega_max must exceed omega_min");
  }
  [[nodiscard]] std::vector<double> values() const {
    validate();
    std::vector<double> w(static_cast<std::size_t>(points));
    const double h = (omega_max - omega_min) / (points - 1);
    for (int i = 0; i < points; ++i) w[static_cast<std::size_t>(i)] = omega_min + h * i;
    w.back() = omega_max;
    return w;
  }
  /// Default window [-U, w0 + 5U] covering both Hubbard-like transitions.
  static FrequencyGrid for_model(double omega0, double U, int points = 2000) {
    return FrequencyGrid{-U, omega0 + 5.0 * U, points};
  }
};

/// Retarded and Keldysh components on a frequency grid. The advanced
/// component is conj(retarded).
struct KeldyshGF {
  std::vector<double> omega;
  std::vector<cd> retarded;
  std::vector<cd> keldysh;

  [[nodiscard]] std::size_t size() const { return omega.size(); }
  [[nodiscard]] cd advanced(std::size_t i) const { return std::conj(retarded[i]); }

  static KeldyshGF zeros(std::vector<double> grid) {
    const auto n = grid.size();
    return KeldyshGF{std::move(grid), std::vector<cd>(n), std::vector<cd>(n)};
  }
};

inline bool same_grid(const KeldyshGF& a, const KeldyshGF& b) { return a.omega == b.omega; }

/// Trapezoidal rule on a (possibly nonuniform) grid.
inline double trapezoid(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) throw std::invalid_argument("trapezoid: size mismatch");
  double acc = 0.0;
  for (std::size_t i = 1; i < x.size(); ++i) acc += 0.5 * (x[i] - x[i - 1]) * (y[i] + y[i - 1]);
  return acc;
}

/// Trapezoid weights t_i with sum_i t_i y_i equal to trapezoid(x, y).
inline std::vector<double> trapezoid_weights(const std::vector<double>& x) {
  std::vector<double> t(x.size(), 0.0);
  for (std::size_t i = 1; i < x.size(); ++i) {
    const double h = 0.5 * (x[i] - x[i - 1]);
    t[i - 1] += h;
    t[i] += h;
  }
  return t;
}

/// Green's functions as pole sums, evaluable anywhere on the real axis:
///   G^R(w) = sum_j residue_r_j / (w - pole_j)
///   G^K(w) = 2i Im sum_j residue_k_j / (w - pole_j)
/// Poles of a stable steady state lie in the lower half plane.
struct PoleExpansion {
  std::vector<cd> poles;
  std::vector<cd> residue_r;
  std::vector<cd> residue_k;

  [[nodiscard]] cd retarded(double w) const {
    cd acc(0.0, 0.0);
    for (std::size_t j = 0; j < poles.size(); ++j) acc += residue_r[j] / (w - poles[j]);
    return acc;
  }
  [[nodiscard]] cd keldysh(double w) const {
    cd acc(0.0, 0.0);
    for (std::size_t j = 0; j < poles.size(); ++j) acc += residue_k[j] / (w - poles[j]);
    return cd(0.0, 2.0 * acc.imag());
  }

  /// Weight of -Im(sum_j r_j / (w - pole_j)) / pi outside [a, b], in closed form.
  /// With r = residue_r this is the tail of A_loc, with r = residue_k the tail
  /// of C_loc. Divergent logarithms cancel because Im(sum_j r_j) = 0.
  [[nodiscard]] static double tail_weight(const std::vector<cd>& poles, const std::vector<cd>& residues, double a,
                                          double b) {
    constexpr double pi = std::numbers::pi;
    double upper = 0.0;
    double lower = 0.0;
    for (std::size_t j = 0; j < poles.size(); ++j) {
      const double x = poles[j].real();
      const double g = -poles[j].imag();
      if (!(g > 0.0)) continue;
      const cd r = residues[j];
      upper += r.real() / pi * (pi / 2 - std::atan((b - x) / g)) +
               r.imag() / (2 * pi) * std::log((b - x) * (b - x) + g * g);
      lower += r.real() / pi * (std::atan((a - x) / g) + pi / 2) -
               r.imag() / (2 * pi) * std::log((a - x) * (a - x) + g * g);
    }
    return upper + lower;
  }
};

struct ImpurityGreens {
  KeldyshGF gf;
  PoleExpansion poles;
  bool has_growing_mode = false;  // a weighted eigenvalue with Re > 0 was encountered
};

namespace detail {

inline void evaluate_on_grid(ImpurityGreens& out, const std::vector<double>& grid) {
  out.gf.omega = grid;
  out.gf.retarded.resize(grid.size());
  out.gf.keldysh.resize(grid.size());
  for (std::size_t g = 0; g < grid.size(); ++g) {
    out.gf.retarded[g] = out.poles.retarded(grid[g]);
    out.gf.keldysh[g] = out.poles.keldysh(grid[g]);
  }
}

}  // namespace detail

/// G^R and G^K of the impurity mode from the eigensystems of sectors -1 (reached
/// by a^dag|rho>) and +1 (reached by a|rho>):
///   G^R = sum_a <I|a|r_a><l_a|a^dag|rho>/(w - i L_a) - (sum_a <I|a^dag|r_a><l_a|a|rho>/(w + i L_a))^*
///   G^K = 2i Im(first sum) + 2i Im((second sum)^*)
/// Every mode is included; the stationary mode carries no weight in these sectors.
inline ImpurityGreens impurity_greens(const Eigensystem& eigs_minus, const SectorIndex& sector_minus,
                                      const Eigensystem& eigs_plus, const SectorIndex& sector_plus,
                                      const SectorIndex& sector0, const SteadyState& ss, const CompositeBasis& basis,
                                      const std::vector<double>& grid, double growth_tol = 1e-9) {
  if (sector_minus.k() != -1 || sector_plus.k() != 1 || sector0.k() != 0)
    throw std::invalid_argument("impurity_greens: sectors -1, +1 and 0 required");
  const OperatorMatrix a = site_annihilator(basis, 0);
  const OperatorMatrix adag = a.adjoint();
  const Eigen::MatrixXcd a_dense = to_dense(a);
  const Eigen::MatrixXcd adag_dense = a_dense.adjoint();

  // channel 1: a^dag|rho> in k = -1, closed by <I|a
  const Eigen::VectorXcd x1 = left_multiply(adag, sector0, ss.rho_vec, sector_minus);
  const Eigen::RowVectorXcd u1 = trace_functional(a_dense, sector_minus) * eigs_minus.right;
  const Eigen::VectorXcd w1 = eigs_minus.left * x1;
  // channel 2: a|rho> in k = +1, closed by <I|a^dag
  const Eigen::VectorXcd x2 = left_multiply(a, sector0, ss.rho_vec, sector_plus);
  const Eigen::RowVectorXcd u2 = trace_functional(adag_dense, sector_plus) * eigs_plus.right;
  const Eigen::VectorXcd w2 = eigs_plus.left * x2;

  ImpurityGreens out;
  auto& pe = out.poles;
  const cd i(0.0, 1.0);
  const double weight_floor = 1e-14;
  for (Eigen::Index al = 0; al < eigs_minus.size(); ++al) {
    const cd c1 = u1[al] * w1[al];
    if (std::abs(c1) < weight_floor * 1e-6) continue;
    if (eigs_minus.values[al].real() > growth_tol && std::abs(c1) > weight_floor) out.has_growing_mode = true;
    pe.poles.push_back(i * eigs_minus.values[al]);
    pe.residue_r.push_back(c1);
    pe.residue_k.push_back(c1);
  }
  for (Eigen::Index al = 0; al < eigs_plus.size(); ++al) {
    const cd c2 = u2[al] * w2[al];
    if (std::abs(c2) < weight_floor * 1e-6) continue;
    if (eigs_plus.values[al].real() > growth_tol && std::abs(c2) > weight_floor) out.has_growing_mode = true;
    pe.poles.push_back(i * std::conj(eigs_plus.values[al]));
    pe.residue_r.push_back(-std::conj(c2));
    pe.residue_k.push_back(std::conj(c2));
  }

  detail::evaluate_on_grid(out, grid);
  return out;
}

struct KrylovOptions {
  int block = 100;            // basis vectors added between convergence checks
  int max_dimension = 1500;   // beyond this the caller falls back to the dense path
  double tolerance = 1e-10;   // bound on the resolvent residual over the grid
};

class KrylovNotConvergedError : public std::runtime_error {
 public:
  KrylovNotConvergedError(int dimension, double residual)
      : std::runtime_error("Arnoldi resolvent not converged at dimension " + std::to_string(dimension) +
                           " (residual " + std::to_string(residual) + ")"),
        residual_(residual) {}
  [[nodiscard]] double residual() const { return residual_; }

 private:
  double residual_;
};

namespace detail {

struct PoleSum {
  std::vector<cd> poles;
  std::vector<cd> weights;
  int dimension = 0;
};

// t (w - s L)^{-1} x as a pole sum over the Ritz values of s L on the Krylov
// space of x (full Arnoldi):
//   t (w - s L)^{-1} x ~ beta (t V) (w - H)^{-1} e1
// The space grows until the residual bound beta ||t|| h_{m+1,m} |e_m^T (w - H)^{-1} e1|
// is below tolerance on every grid point. For Hessenberg H that bound is
//   beta ||t|| prod_j h_{j+1,j} / prod_j |w - theta_j|,
// so checks need Ritz values only. Growth steps are predicted from the
// observed geometric decay of the bound.
inline PoleSum arnoldi_resolvent(const Eigen::SparseMatrix<cd>& l, cd s, const Eigen::RowVectorXcd& t,
                                 const Eigen::VectorXcd& x, const std::vector<double>& grid,
                                 const KrylovOptions& opt) {
  PoleSum out;
  const double beta = x.norm();
  const double t_norm = t.norm();
  if (beta == 0.0 || t_norm == 0.0) return out;
  const Eigen::Index n = x.size();
  const Eigen::Index cap = std::min<Eigen::Index>(n, std::max(opt.max_dimension, 1));
  const Eigen::Index block = std::max(opt.block, 1);
  Eigen::MatrixXcd v(n, cap + 1);
  Eigen::MatrixXcd h = Eigen::MatrixXcd::Zero(cap + 1, cap);
  v.col(0) = x / beta;
  Eigen::Index m = 0;
  Eigen::Index target = std::min(cap, block);
  bool invariant = false;
  double log_subdiag = 0.0;  // sum_j log h_{j+1,j}
  Eigen::Index prev_m = 0;
  double prev_log = 0.0;
  while (true) {
    for (; m < target && !invariant; ++m) {
      Eigen::VectorXcd w = s * (l * v.col(m));
      double before = w.norm();
      const double w_norm = before;
      // Gram-Schmidt, repeated while it removes most of the vector
      for (int pass = 0; pass < 3; ++pass) {
        const Eigen::VectorXcd proj = v.leftCols(m + 1).adjoint() * w;
        w.noalias() -= v.leftCols(m + 1) * proj;
        h.col(m).head(m + 1) += proj;
        const double after = w.norm();
        if (after > 0.7 * before) break;
        before = after;
      }
      h(m + 1, m) = w.norm();
      if (h(m + 1, m).real() <= 1e-13 * w_norm) {
        invariant = true;
      } else {
        v.col(m + 1) = w / h(m + 1, m).real();
        log_subdiag += std::log(h(m + 1, m).real());
      }
    }
    double residual = 0.0;
    if (!invariant) {
      const Eigen::VectorXcd theta = zhseqr_values(h.topLeftCorner(m, m));
      double log_max = -std::numeric_limits<double>::infinity();
      for (double w : grid) {
        double log_det = 0.0;
        for (Eigen::Index j = 0; j < m; ++j) log_det += std::log(std::abs(w - theta[j]));
        log_max = std::max(log_max, log_subdiag - log_det);
      }
      residual = beta * t_norm * std::exp(log_max);
    }
    if (residual <= opt.tolerance || invariant || m == n) {
      const Eigen::MatrixXcd hm = h.topLeftCorner(m, m);
      const auto pairs = zgeev_right(hm);
      const Eigen::VectorXcd c = pairs.right.partialPivLu().solve(Eigen::VectorXcd::Unit(m, 0)) * beta;
      const Eigen::RowVectorXcd tv = t * v.leftCols(m) * pairs.right;
      // the pole sum must reproduce the projected resolvent; a near-defective
      // Ritz basis shows up here, worst next to the Ritz value closest to the grid
      double closest = std::numeric_limits<double>::infinity();
      double probe = grid[grid.size() / 2];
      for (Eigen::Index j = 0; j < m; ++j) {
        const double re = std::clamp(pairs.values[j].real(), grid.front(), grid.back());
        const double d = std::abs(re - pairs.values[j]);
        if (d < closest) {
          closest = d;
          probe = re;
        }
      }
      const Eigen::VectorXcd y =
          (probe * Eigen::MatrixXcd::Identity(m, m) - hm).partialPivLu().solve(Eigen::VectorXcd::Unit(m, 0) * beta);
      const cd direct = (t * v.leftCols(m) * y)(0);
      cd sum(0.0, 0.0);
      for (Eigen::Index j = 0; j < m; ++j) sum += tv[j] * c[j] / (probe - pairs.values[j]);
      const double consistency = std::abs(sum - direct);
      if (!(consistency <= std::max(opt.tolerance, 1e-12 * std::abs(direct))))
        throw KrylovNotConvergedError(static_cast<int>(m), consistency);
      out.dimension = static_cast<int>(m);
      for (Eigen::Index j = 0; j < m; ++j) {
        out.poles.push_back(pairs.values[j]);
        out.weights.push_back(tv[j] * c[j]);
      }
      return out;
    }
    if (m == cap) throw KrylovNotConvergedError(static_cast<int>(m), residual);

    Eigen::Index step = block;
    const double log_res = std::log(residual);
    if (prev_m > 0 && log_res < prev_log) {
      const double slope = (log_res - prev_log) / static_cast<double>(m - prev_m);
      const double need = (std::log(opt.tolerance) - log_res) / slope;
      step = std::clamp<Eigen::Index>(static_cast<Eigen::Index>(std::ceil(1.1 * need)) + 8, 16, m);
    }
    prev_m = m;
    prev_log = log_res;
    target = std::min(cap, m + step);
  }
}

}  // namespace detail

/// Same Green's functions as impurity_greens, from Arnoldi projections of the
/// two resolvents instead of full eigendecompositions:
///   channel -1: <I|a (w - iL_-)^{-1} a^dag|rho>
///   channel +1: <I|a^dag (w + iL_+)^{-1} a|rho>, entering conjugated
/// Poles are Ritz values. Throws KrylovNotConvergedError when the residual
/// bound is not met within options.max_dimension.
inline ImpurityGreens impurity_greens_krylov(const SectorBlock& minus, const SectorBlock& plus,
                                             const SectorIndex& sector0, const SteadyState& ss,
                                             const CompositeBasis& basis, const std::vector<double>& grid,
                                             const KrylovOptions& options = {}, double growth_tol = 1e-9) {
  if (minus.index.k() != -1 || plus.index.k() != 1 || sector0.k() != 0)
    throw std::invalid_argument("impurity_greens_krylov: sectors -1, +1 and 0 required");
  if (grid.empty()) throw std::invalid_argument("impurity_greens_krylov: empty grid");
  const OperatorMatrix a = site_annihilator(basis, 0);
  const OperatorMatrix adag = a.adjoint();
  const Eigen::MatrixXcd a_dense = to_dense(a);
  const Eigen::MatrixXcd adag_dense = a_dense.adjoint();
  const cd i(0.0, 1.0);

  const auto ch1 = detail::arnoldi_resolvent(minus.block, i, trace_functional(a_dense, minus.index),
                                             left_multiply(adag, sector0, ss.rho_vec, minus.index), grid, options);
  const auto ch2 = detail::arnoldi_resolvent(plus.block, -i, trace_functional(adag_dense, plus.index),
                                             left_multiply(a, sector0, ss.rho_vec, plus.index), grid, options);

  ImpurityGreens out;
  auto& pe = out.poles;
  const double weight_floor = 1e-14;
  for (std::size_t j = 0; j < ch1.poles.size(); ++j) {
    const cd c1 = ch1.weights[j];
    if (std::abs(c1) < weight_floor * 1e-6) continue;
    if (ch1.poles[j].imag() > growth_tol && std::abs(c1) > weight_floor) out.has_growing_mode = true;
    pe.poles.push_back(ch1.poles[j]);
    pe.residue_r.push_back(c1);
    pe.residue_k.push_back(c1);
  }
  for (std::size_t j = 0; j < ch2.poles.size(); ++j) {
    const cd c2 = ch2.weights[j];
    if (std::abs(c2) < weight_floor * 1e-6) continue;
    if (-ch2.poles[j].imag() > growth_tol && std::abs(c2) > weight_floor) out.has_growing_mode = true;
    pe.poles.push_back(std::conj(ch2.poles[j]));
    pe.residue_r.push_back(-std::conj(c2));
    pe.residue_k.push_back(std::conj(c2));
  }
  detail::evaluate_on_grid(out, grid);
  return out;
}

struct SpectralFunctions {
  std::vector<double> A;  // -Im G^R / pi
  std::vector<double> C;  // -G^K / (2 pi i)
};

inline SpectralFunctions spectral_functions(const KeldyshGF& gf) {
  constexpr double pi = std::numbers::pi;
  SpectralFunctions s;
  s.A.resize(gf.size());
  s.C.resize(gf.size());
  for (std::size_t g = 0; g < gf.size(); ++g) {
    s.A[g] = -gf.retarded[g].imag() / pi;
    s.C[g] = (-gf.keldysh[g] / cd(0.0, 2.0 * pi)).real();
  }
  return s;
}

}  // namespace zdmft
