#pragma once

// Truncated bosonic Fock spaces for an impurity plus a finite set of bath
// sites, and site-local ladder operators embedded in the composite space.

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <cmath>
#include <complex>
#include <cstddef>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace zdmft {

using cd = std::complex<double>;
using OperatorMatrix = Eigen::SparseMatrix<cd>;

/// Per-site truncation: occupations 0..cutoff are kept.
struct SiteSpec {
  int cutoff = 0;

  [[nodiscard]] int dimension() const { return cutoff + 1; }
  friend bool operator==(const SiteSpec&, const SiteSpec&) = default;
};

/// Product basis of truncated bosonic modes. Site 0 is the impurity, sites
/// 1..N_B the bath.
///
/// States are ordered lexicographically with site 0 varying slowest, so the
/// state index of (n_0, ..., n_last) is sum_i n_i * stride_i with
/// stride_last = 1 and stride_i = stride_{i+1} * (cutoff_{i+1} + 1).
class CompositeBasis {
 public:
  explicit CompositeBasis(std::vector<SiteSpec> sites) : sites_(std::move(sites)) {
    if (sites_.empty()) throw std::invalid_argument("CompositeBasis: at least one site is required");
    for (std::size_t i = 0; i < sites_.size(); ++i) {
      if (sites_[i].cutoff < 0)
        throw std::invalid_argument("CompositeBasis: negative cutoff on site " + std::to_string(i));
    }
    strides_.assign(sites_.size(), 1);
    for (std::size_t i = sites_.size() - 1; i > 0; --i)
      strides_[i - 1] = strides_[i] * static_cast<std::size_t>(sites_[i].dimension());
    dimension_ = strides_[0] * static_cast<std::size_t>(sites_[0].dimension());

    occupations_.resize(dimension_ * sites_.size());
    total_.resize(dimension_);
    for (std::size_t s = 0; s < dimension_; ++s) {
      int tot = 0;
      for (std::size_t i = 0; i < sites_.size(); ++i) {
        const int n = static_cast<int>((s / strides_[i]) % static_cast<std::size_t>(sites_[i].dimension()));
        occupations_[s * sites_.size() + i] = n;
        tot += n;
      }
      total_[s] = tot;
    }
  }

  [[nodiscard]] std::size_t dimension() const { return dimension_; }
  [[nodiscard]] std::size_t num_sites() const { return sites_.size(); }
  [[nodiscard]] const std::vector<SiteSpec>& sites() const { return sites_; }
  [[nodiscard]] int cutoff(std::size_t site) const { return sites_.at(site).cutoff; }

  /// Occupation of `site` in basis state `state`.
  [[nodiscard]] int occupation(std::size_t state, std::size_t site) const {
    return occupations_[state * sites_.size() + site];
  }
  /// Total boson number of a basis state.
  [[nodiscard]] int total_occupation(std::size_t state) const { return total_[state]; }

  [[nodiscard]] std::vector<int> occupations(std::size_t state) const {
    auto first = occupations_.begin() + static_cast<std::ptrdiff_t>(state * sites_.size());
    return {first, first + static_cast<std::ptrdiff_t>(sites_.size())};
  }

  [[nodiscard]] std::size_t index_of(const std::vector<int>& occ) const {
    if (occ.size() != sites_.size()) throw std::invalid_argument("CompositeBasis::index_of: wrong tuple length");
    std::size_t idx = 0;
    for (std::size_t i = 0; i < occ.size(); ++i) {
      if (occ[i] < 0 || occ[i] > sites_[i].cutoff)
        throw std::out_of_range("CompositeBasis::index_of: occupation outside cutoff on site " + std::to_string(i));
      idx += static_cast<std::size_t>(occ[i]) * strides_[i];
    }
    return idx;
  }

  [[nodiscard]] std::size_t stride(std::size_t site) const { return strides_[site]; }

  friend bool operator==(const CompositeBasis& a, const CompositeBasis& b) { return a.sites_ == b.sites_; }

 private:
  std::vector<SiteSpec> sites_;
  std::vector<std::size_t> strides_;
  std::size_t dimension_ = 0;
  std::vector<int> occupations_;
  std::vector<int> total_;
};

inline CompositeBasis build_composite_basis(const std::vector<SiteSpec>& specs) { return CompositeBasis(specs); }

/// Annihilator of site i: <.., n_i - 1, ..| a_i |.., n_i, ..> = sqrt(n_i).
///
/// On the truncated space [a, a^dag] = 1 - (cutoff + 1)|cutoff><cutoff|.
inline OperatorMatrix site_annihilator(const CompositeBasis& basis, std::size_t site) {
  if (site >= basis.num_sites())
    throw std::out_of_range("site_annihilator: site index " + std::to_string(site) + " out of range");
  const auto dim = static_cast<Eigen::Index>(basis.dimension());
  std::vector<Eigen::Triplet<cd>> entries;
  entries.reserve(basis.dimension());
  const auto stride = basis.stride(site);
  for (std::size_t s = 0; s < basis.dimension(); ++s) {
    const int n = basis.occupation(s, site);
    if (n == 0) continue;
    entries.emplace_back(static_cast<Eigen::Index>(s - stride), static_cast<Eigen::Index>(s),
                         cd(std::sqrt(static_cast<double>(n)), 0.0));
  }
  OperatorMatrix a(dim, dim);
  a.setFromTriplets(entries.begin(), entries.end());
  return a;
}

inline OperatorMatrix site_creator(const CompositeBasis& basis, std::size_t site) {
  return OperatorMatrix(site_annihilator(basis, site).adjoint());
}

inline OperatorMatrix site_number(const CompositeBasis& basis, std::size_t site) {
  const auto dim = static_cast<Eigen::Index>(basis.dimension());
  std::vector<Eigen::Triplet<cd>> entries;
  for (std::size_t s = 0; s < basis.dimension(); ++s) {
    const int n = basis.occupation(s, site);
    if (n != 0) entries.emplace_back(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(s), cd(n, 0.0));
  }
  OperatorMatrix num(dim, dim);
  num.setFromTriplets(entries.begin(), entries.end());
  return num;
}

inline OperatorMatrix identity_operator(const CompositeBasis& basis) {
  const auto dim = static_cast<Eigen::Index>(basis.dimension());
  OperatorMatrix id(dim, dim);
  id.setIdentity();
  return id;
}

inline Eigen::MatrixXcd to_dense(const OperatorMatrix& op) { return Eigen::MatrixXcd(op); }

}  // namespace zdmft
