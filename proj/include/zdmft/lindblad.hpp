#pragma once

// Dissipative bosonic Anderson impurity model and its vectorized Lindbladian,
// assembled directly into U(1) sectors.
//
// Vectorization convention: rho = sum_{n,m} rho_{nm} |n><m| maps to
// |rho> = sum_{n,m} rho_{nm} |n ; m~>, i.e. the original copy carries the row
// index and the tilde copy the column index. Right multiplication rho X acts
// on the tilde copy with the transposed matrix elements of X (bosonic
// tilde conjugation, sigma = 1). The sector label of |n ; m~> is
// k = N(m) - N(n).

#include "zdmft/fock.hpp"

#include <algorithm>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace zdmft {

struct BathSite {
  double omega = 0.0;   // on-site energy
  double nu = 0.0;      // real impurity coupling
  double gamma1 = 0.0;  // single-particle loss rate
  double pump1 = 0.0;   // single-particle pump rate
  friend bool operator==(const BathSite&, const BathSite&) = default;
};

/// Impurity + N_B bath sites. All rates use the 2*gamma convention:
/// L_D rho = sum_alpha 2 gamma_alpha (L rho L^dag - 1/2 {L^dag L, rho}).
struct AimModel {
  double omega0 = 0.0;
  double U = 0.0;
  double P1 = 0.0;      // impurity pump, jump a^dag
  double Gamma2 = 0.0;  // impurity pair loss, jump a a
  double Gamma1 = 0.0;  // impurity single-particle loss, jump a (zero in the lattice model)
  std::vector<BathSite> bath;
  std::vector<SiteSpec> cutoffs;  // 1 + bath.size() entries

  [[nodiscard]] std::size_t num_bath() const { return bath.size(); }

  void validate() const {
    if (cutoffs.size() != bath.size() + 1)
      throw std::invalid_argument("AimModel: cutoffs must list the impurity plus every bath site (" +
                                  std::to_string(bath.size() + 1) + " expected, got " +
                                  std::to_string(cutoffs.size()) + ")");
    for (std::size_t i = 0; i < cutoffs.size(); ++i)
      if (cutoffs[i].cutoff < 0) throw std::invalid_argument("AimModel: cutoffs[" + std::to_string(i) + "] < 0");
    if (P1 < 0.0) throw std::invalid_argument("AimModel: P1 must be nonnegative");
    if (Gamma2 < 0.0) throw std::invalid_argument("AimModel: Gamma2 must be nonnegative");
    if (Gamma1 < 0.0) throw std::invalid_argument("AimModel: Gamma1 must be nonnegative");
    for (std::size_t n = 0; n < bath.size(); ++n) {
      if (bath[n].gamma1 < 0.0 || bath[n].pump1 < 0.0)
        throw std::invalid_argument("AimModel: bath[" + std::to_string(n) + "] rates must be nonnegative");
    }
  }
};

namespace detail {
inline void check_basis(const AimModel& model, const CompositeBasis& basis) {
  model.validate();
  if (basis.sites() != model.cutoffs)
    throw std::invalid_argument("basis does not match the model's site count and cutoffs");
}
}  // namespace detail

/// H = w0 a^dag a + U (a^dag a)^2 + sum_n [w_n b_n^dag b_n + nu_n (b_n^dag a + a^dag b_n)]
inline OperatorMatrix build_aim_hamiltonian(const AimModel& model, const CompositeBasis& basis) {
  detail::check_basis(model, basis);
  const OperatorMatrix n0 = site_number(basis, 0);
  OperatorMatrix h = model.omega0 * n0 + model.U * OperatorMatrix(n0 * n0);
  const OperatorMatrix a = site_annihilator(basis, 0);
  const OperatorMatrix adag = a.adjoint();
  for (std::size_t n = 0; n < model.bath.size(); ++n) {
    const auto& site = model.bath[n];
    const OperatorMatrix b = site_annihilator(basis, n + 1);
    const OperatorMatrix bdag = b.adjoint();
    h += site.omega * site_number(basis, n + 1);
    h += site.nu * OperatorMatrix(bdag * a);
    h += site.nu * OperatorMatrix(adag * b);
  }
  h.prune(cd(0.0, 0.0));
  return h;
}

struct JumpOperator {
  double rate;  // gamma in 2*gamma*(L rho L^dag - ...)
  OperatorMatrix op;
};

/// The four jump families (a^dag, a a, b_n, b_n^dag) plus the optional impurity
/// single-particle loss; zero-rate channels are dropped.
inline std::vector<JumpOperator> aim_jump_operators(const AimModel& model, const CompositeBasis& basis) {
  detail::check_basis(model, basis);
  std::vector<JumpOperator> jumps;
  const OperatorMatrix a = site_annihilator(basis, 0);
  if (model.P1 > 0.0) jumps.push_back({model.P1, OperatorMatrix(a.adjoint())});
  if (model.Gamma2 > 0.0) jumps.push_back({model.Gamma2, OperatorMatrix(a * a)});
  if (model.Gamma1 > 0.0) jumps.push_back({model.Gamma1, a});
  for (std::size_t n = 0; n < model.bath.size(); ++n) {
    const OperatorMatrix b = site_annihilator(basis, n + 1);
    if (model.bath[n].gamma1 > 0.0) jumps.push_back({model.bath[n].gamma1, b});
    if (model.bath[n].pump1 > 0.0) jumps.push_back({model.bath[n].pump1, OperatorMatrix(b.adjoint())});
  }
  return jumps;
}

/// (row, col) basis-state pair; row belongs to the original copy, col to the tilde copy.
struct StatePair {
  std::uint32_t row;
  std::uint32_t col;
  friend bool operator==(const StatePair&, const StatePair&) = default;
};

/// Occupation-pair enumeration of one U(1) sector.
class SectorIndex {
 public:
  SectorIndex() = default;
  SectorIndex(const CompositeBasis& basis, int k) : k_(k), dim_(basis.dimension()) {
    position_.assign(dim_ * dim_, -1);
    for (std::size_t r = 0; r < dim_; ++r) {
      for (std::size_t c = 0; c < dim_; ++c) {
        if (basis.total_occupation(c) - basis.total_occupation(r) != k) continue;
        position_[r * dim_ + c] = static_cast<std::int64_t>(pairs_.size());
        pairs_.push_back({static_cast<std::uint32_t>(r), static_cast<std::uint32_t>(c)});
      }
    }
  }

  [[nodiscard]] int k() const { return k_; }
  [[nodiscard]] std::size_t size() const { return pairs_.size(); }
  [[nodiscard]] std::size_t basis_dimension() const { return dim_; }
  [[nodiscard]] const std::vector<StatePair>& pairs() const { return pairs_; }
  [[nodiscard]] const StatePair& pair(std::size_t i) const { return pairs_[i]; }

  /// Position of |row ; col~> in this sector, or -1.
  [[nodiscard]] std::int64_t position(std::size_t row, std::size_t col) const { return position_[row * dim_ + col]; }

 private:
  int k_ = 0;
  std::size_t dim_ = 0;
  std::vector<StatePair> pairs_;
  std::vector<std::int64_t> position_;
};

/// Partition of all D^2 pairs into sectors k = N(col) - N(row).
inline std::map<int, SectorIndex> sector_decompose(const CompositeBasis& basis) {
  int max_total = 0;
  for (std::size_t s = 0; s < basis.dimension(); ++s) max_total = std::max(max_total, basis.total_occupation(s));
  std::map<int, SectorIndex> sectors;
  for (int k = -max_total; k <= max_total; ++k) sectors.emplace(k, SectorIndex(basis, k));
  return sectors;
}

struct SectorBlock {
  SectorIndex index;
  Eigen::SparseMatrix<cd> block;
};

/// Vectorized Lindbladian stored as independent U(1) blocks.
struct SectoredSuperoperator {
  CompositeBasis basis;
  std::map<int, SectorBlock> sectors;

  [[nodiscard]] const SectorBlock& sector(int k) const {
    auto it = sectors.find(k);
    if (it == sectors.end()) throw std::out_of_range("SectoredSuperoperator: sector " + std::to_string(k) + " not built");
    return it->second;
  }
};

class SectorGradingError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

namespace detail {

// Accumulates one generator term into the block, rejecting any element that
// would leave the sector.
struct BlockAssembler {
  const SectorIndex& index;
  std::vector<Eigen::Triplet<cd>>& out;
  void add(std::size_t row, std::size_t col, Eigen::Index column, cd value) const {
    if (value == cd(0.0, 0.0)) return;
    const auto pos = index.position(row, col);
    if (pos < 0)
      throw SectorGradingError("Lindbladian element connects sector " + std::to_string(index.k()) +
                               " to a different sector");
    out.emplace_back(static_cast<Eigen::Index>(pos), column, value);
  }
};

inline Eigen::SparseMatrix<cd> assemble_block(const SectorIndex& index, const OperatorMatrix& hamiltonian,
                                              const std::vector<JumpOperator>& jumps) {
  using ColMat = Eigen::SparseMatrix<cd, Eigen::ColMajor>;
  using RowMat = Eigen::SparseMatrix<cd, Eigen::RowMajor>;
  const ColMat h_col = hamiltonian;
  const RowMat h_row = hamiltonian;

  struct JumpData {
    double rate;
    ColMat l;
    ColMat m_col;
    RowMat m_row;
  };
  std::vector<JumpData> data;
  data.reserve(jumps.size());
  for (const auto& j : jumps) {
    ColMat m = j.op.adjoint() * j.op;
    data.push_back({j.rate, j.op, m, RowMat(m)});
  }

  std::vector<Eigen::Triplet<cd>> triplets;
  triplets.reserve(index.size() * 12);
  const BlockAssembler acc{index, triplets};
  const cd minus_i(0.0, -1.0);

  for (std::size_t c = 0; c < index.size(); ++c) {
    const auto [p, q] = index.pair(c);
    const auto col = static_cast<Eigen::Index>(c);
    // -i H rho
    for (ColMat::InnerIterator it(h_col, p); it; ++it) acc.add(it.row(), q, col, minus_i * it.value());
    // +i rho H
    for (RowMat::InnerIterator it(h_row, q); it; ++it) acc.add(p, it.col(), col, -minus_i * it.value());
    for (const auto& jd : data) {
      // 2 gamma L rho L^dag
      for (ColMat::InnerIterator ln(jd.l, p); ln; ++ln)
        for (ColMat::InnerIterator lm(jd.l, q); lm; ++lm)
          acc.add(ln.row(), lm.row(), col, 2.0 * jd.rate * ln.value() * std::conj(lm.value()));
      // -gamma L^dag L rho - gamma rho L^dag L
      for (ColMat::InnerIterator it(jd.m_col, p); it; ++it) acc.add(it.row(), q, col, -jd.rate * it.value());
      for (RowMat::InnerIterator it(jd.m_row, q); it; ++it) acc.add(p, it.col(), col, -jd.rate * it.value());
    }
  }
  const auto n = static_cast<Eigen::Index>(index.size());
  Eigen::SparseMatrix<cd> block(n, n);
  block.setFromTriplets(triplets.begin(), triplets.end());
  block.prune(cd(0.0, 0.0));
  return block;
}

}  // namespace detail

/// Builds the requested sectors of the vectorized Lindbladian. Only sectors
/// -1, 0, +1 are needed for steady states and single-particle Green's functions.
inline SectoredSuperoperator vectorize_lindbladian(const AimModel& model, const CompositeBasis& basis,
                                                   const std::vector<int>& ks = {-1, 0, 1}) {
  detail::check_basis(model, basis);
  const OperatorMatrix h = build_aim_hamiltonian(model, basis);
  const auto jumps = aim_jump_operators(model, basis);
  SectoredSuperoperator superop{basis, {}};
  for (int k : ks) {
    SectorIndex index(basis, k);
    auto block = detail::assemble_block(index, h, jumps);
    superop.sectors.emplace(k, SectorBlock{std::move(index), std::move(block)});
  }
  return superop;
}

/// Every nonempty sector; only practical for small bases.
inline SectoredSuperoperator vectorize_lindbladian_all(const AimModel& model, const CompositeBasis& basis) {
  std::vector<int> ks;
  for (const auto& [k, idx] : sector_decompose(basis))
    if (idx.size() > 0) ks.push_back(k);
  return vectorize_lindbladian(model, basis, ks);
}

/// <I| restricted to sector 0: ones on the diagonal pairs (n, n).
inline Eigen::VectorXcd left_vacuum(const SectorIndex& sector0) {
  if (sector0.k() != 0) throw std::invalid_argument("left_vacuum: sector 0 required");
  Eigen::VectorXcd v = Eigen::VectorXcd::Zero(static_cast<Eigen::Index>(sector0.size()));
  for (std::size_t i = 0; i < sector0.size(); ++i)
    if (sector0.pair(i).row == sector0.pair(i).col) v[static_cast<Eigen::Index>(i)] = 1.0;
  return v;
}

/// |X rho> for |rho> in `from`, result expressed in `to`.
inline Eigen::VectorXcd left_multiply(const OperatorMatrix& x, const SectorIndex& from, const Eigen::VectorXcd& v,
                                      const SectorIndex& to) {
  using ColMat = Eigen::SparseMatrix<cd, Eigen::ColMajor>;
  const ColMat xc = x;
  Eigen::VectorXcd out = Eigen::VectorXcd::Zero(static_cast<Eigen::Index>(to.size()));
  for (std::size_t i = 0; i < from.size(); ++i) {
    const cd vi = v[static_cast<Eigen::Index>(i)];
    if (vi == cd(0.0, 0.0)) continue;
    const auto [p, q] = from.pair(i);
    for (ColMat::InnerIterator it(xc, p); it; ++it) {
      const auto pos = to.position(static_cast<std::size_t>(it.row()), q);
      if (pos < 0) throw SectorGradingError("left_multiply: result leaves the target sector");
      out[static_cast<Eigen::Index>(pos)] += it.value() * vi;
    }
  }
  return out;
}

/// Tr(X R) for the operator R whose vectorization is v in `sector`, i.e. <I|X|R>.
inline cd trace_product(const Eigen::MatrixXcd& x_dense, const SectorIndex& sector, const Eigen::VectorXcd& v) {
  cd acc(0.0, 0.0);
  for (std::size_t i = 0; i < sector.size(); ++i) {
    const auto [p, q] = sector.pair(i);
    acc += x_dense(q, p) * v[static_cast<Eigen::Index>(i)];
  }
  return acc;
}

/// Row vector u with u . v = Tr(X R) for every v in `sector`.
inline Eigen::RowVectorXcd trace_functional(const Eigen::MatrixXcd& x_dense, const SectorIndex& sector) {
  Eigen::RowVectorXcd u(static_cast<Eigen::Index>(sector.size()));
  for (std::size_t i = 0; i < sector.size(); ++i) {
    const auto [p, q] = sector.pair(i);
    u[static_cast<Eigen::Index>(i)] = x_dense(q, p);
  }
  return u;
}

/// Reshapes a sector vector back into a D x D operator.
inline Eigen::MatrixXcd to_operator(const SectorIndex& sector, const Eigen::VectorXcd& v) {
  const auto d = static_cast<Eigen::Index>(sector.basis_dimension());
  Eigen::MatrixXcd m = Eigen::MatrixXcd::Zero(d, d);
  for (std::size_t i = 0; i < sector.size(); ++i) {
    const auto [p, q] = sector.pair(i);
    m(p, q) = v[static_cast<Eigen::Index>(i)];
  }
  return m;
}

/// Projects a D x D operator onto a sector (entries outside it are dropped).
inline Eigen::VectorXcd from_operator(const SectorIndex& sector, const Eigen::MatrixXcd& m) {
  Eigen::VectorXcd v(static_cast<Eigen::Index>(sector.size()));
  for (std::size_t i = 0; i < sector.size(); ++i) {
    const auto [p, q] = sector.pair(i);
    v[static_cast<Eigen::Index>(i)] = m(p, q);
  }
  return v;
}

/// perm[i] = position in `plus` of the transposed pair of minus.pair(i).
/// Hermiticity preservation gives block(-k)(i, j) = conj(block(k)(perm i, perm j)).
inline std::vector<std::int64_t> mirror_permutation(const SectorIndex& minus, const SectorIndex& plus) {
  if (minus.k() != -plus.k()) throw std::invalid_argument("mirror_permutation: sectors must be k and -k");
  std::vector<std::int64_t> perm(minus.size());
  for (std::size_t i = 0; i < minus.size(); ++i) {
    const auto [r, c] = minus.pair(i);
    perm[i] = plus.position(c, r);
    if (perm[i] < 0) throw SectorGradingError("mirror_permutation: sector sizes disagree");
  }
  return perm;
}

/// Full D^2 x D^2 Lindbladian in the row-major pair ordering (row * D + col),
/// assembled from every sector block. Test and diagnostic use only.
inline Eigen::MatrixXcd full_matrix(const SectoredSuperoperator& superop) {
  const auto d = superop.basis.dimension();
  const auto n = static_cast<Eigen::Index>(d * d);
  Eigen::MatrixXcd full = Eigen::MatrixXcd::Zero(n, n);
  for (const auto& [k, sb] : superop.sectors) {
    for (int outer = 0; outer < sb.block.outerSize(); ++outer) {
      for (Eigen::SparseMatrix<cd>::InnerIterator it(sb.block, outer); it; ++it) {
        const auto& pr = sb.index.pair(static_cast<std::size_t>(it.row()));
        const auto& pc = sb.index.pair(static_cast<std::size_t>(it.col()));
        full(static_cast<Eigen::Index>(pr.row * d + pr.col), static_cast<Eigen::Index>(pc.row * d + pc.col)) =
            it.value();
      }
    }
  }
  return full;
}

}  // namespace zdmft
