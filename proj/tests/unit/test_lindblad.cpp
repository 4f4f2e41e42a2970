#include "zdmft/lindblad.hpp"
#include "zdmft/spectral.hpp"

#include <gtest/gtest.h>

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <random>

using namespace zdmft;

namespace {

AimModel random_model(std::mt19937_64& rng, int max_bath = 2, int max_cutoff = 3) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<int> nb(0, max_bath);
  std::uniform_int_distribution<int> cut(1, max_cutoff);
  AimModel m;
  m.omega0 = 4.0 * u(rng) - 2.0;
  m.U = 3.0 * u(rng);
  m.P1 = 0.5 * u(rng);
  m.Gamma2 = 2.0 * u(rng);
  m.Gamma1 = 0.5 * u(rng);
  m.cutoffs.push_back(SiteSpec{cut(rng)});
  const int n = nb(rng);
  for (int i = 0; i < n; ++i) {
    const double pump = 0.3 * u(rng);
    m.bath.push_back(BathSite{6.0 * u(rng) - 3.0, 2.0 * u(rng) - 1.0, pump + 0.05 + u(rng), pump});
    m.cutoffs.push_back(SiteSpec{cut(rng)});
  }
  return m;
}

Eigen::MatrixXcd random_hermitian(std::mt19937_64& rng, Eigen::Index d) {
  std::normal_distribution<double> g;
  Eigen::MatrixXcd x(d, d);
  for (Eigen::Index i = 0; i < d; ++i)
    for (Eigen::Index j = 0; j < d; ++j) x(i, j) = cd(g(rng), g(rng));
  return x + x.adjoint();
}

// Row-major vectorization used by full_matrix: index row * D + col.
Eigen::VectorXcd vec(const Eigen::MatrixXcd& m) {
  const auto d = m.rows();
  Eigen::VectorXcd v(d * d);
  for (Eigen::Index r = 0; r < d; ++r)
    for (Eigen::Index c = 0; c < d; ++c) v[r * d + c] = m(r, c);
  return v;
}

Eigen::MatrixXcd unvec(const Eigen::VectorXcd& v, Eigen::Index d) {
  Eigen::MatrixXcd m(d, d);
  for (Eigen::Index r = 0; r < d; ++r)
    for (Eigen::Index c = 0; c < d; ++c) m(r, c) = v[r * d + c];
  return m;
}

// Independent dense reference: L(rho) from the operator definition.
Eigen::MatrixXcd apply_lindbladian(const AimModel& m, const CompositeBasis& b, const Eigen::MatrixXcd& rho) {
  const Eigen::MatrixXcd h = to_dense(build_aim_hamiltonian(m, b));
  Eigen::MatrixXcd out = cd(0.0, -1.0) * (h * rho - rho * h);
  for (const auto& j : aim_jump_operators(m, b)) {
    const Eigen::MatrixXcd l = to_dense(j.op);
    const Eigen::MatrixXcd ldl = l.adjoint() * l;
    out += 2.0 * j.rate * (l * rho * l.adjoint() - 0.5 * (ldl * rho + rho * ldl));
  }
  return out;
}

}  // namespace

TEST(Hamiltonian, FreeMode) {
  AimModel m;
  m.omega0 = 1.3;
  m.cutoffs = {SiteSpec{4}};
  CompositeBasis b(m.cutoffs);
  const auto h = to_dense(build_aim_hamiltonian(m, b));
  for (int n = 0; n <= 4; ++n) EXPECT_NEAR(h(n, n).real(), 1.3 * n, 1e-14);
  EXPECT_NEAR((h - Eigen::MatrixXcd(h.diagonal().asDiagonal())).norm(), 0.0, 1e-15);
}

TEST(Hamiltonian, KerrLevels) {
  AimModel m;
  m.omega0 = 1.0;
  m.U = 10.0;
  m.cutoffs = {SiteSpec{3}};
  CompositeBasis b(m.cutoffs);
  const auto h = to_dense(build_aim_hamiltonian(m, b));
  const double expected[] = {0.0, 11.0, 42.0, 93.0};
  for (int n = 0; n <= 3; ++n) EXPECT_NEAR(h(n, n).real(), expected[n], 1e-12);
}

TEST(Hamiltonian, HermitianAndMismatchRejected) {
  std::mt19937_64 rng(11);
  for (int t = 0; t < 10; ++t) {
    auto m = random_model(rng);
    CompositeBasis b(m.cutoffs);
    const auto h = to_dense(build_aim_hamiltonian(m, b));
    EXPECT_EQ((h - h.adjoint()).norm(), 0.0);
  }
  AimModel m;
  m.cutoffs = {SiteSpec{2}};
  EXPECT_THROW(build_aim_hamiltonian(m, CompositeBasis({SiteSpec{3}})), std::invalid_argument);
}

TEST(Sectors, SmallestDecomposition) {
  CompositeBasis b({SiteSpec{1}});
  const auto sectors = sector_decompose(b);
  EXPECT_EQ(sectors.at(0).size(), 2u);
  EXPECT_EQ(sectors.at(1).size(), 1u);
  EXPECT_EQ(sectors.at(-1).size(), 1u);
}

TEST(Sectors, CountingIdentity) {
  CompositeBasis b({SiteSpec{5}, SiteSpec{7}, SiteSpec{7}});
  std::size_t total = 0;
  for (const auto& [k, idx] : sector_decompose(b)) {
    total += idx.size();
    for (const auto& p : idx.pairs()) ASSERT_EQ(b.total_occupation(p.col) - b.total_occupation(p.row), k);
  }
  EXPECT_EQ(total, 384u * 384u);
}

TEST(Sectors, ReducedCutoffSizes) {
  CompositeBasis b({SiteSpec{3}, SiteSpec{5}, SiteSpec{5}});
  EXPECT_EQ(SectorIndex(b, 0).size(), 2132u);
  EXPECT_EQ(SectorIndex(b, 1).size(), 2066u);
  EXPECT_EQ(SectorIndex(b, -1).size(), 2066u);
}

TEST(Lindbladian, MatchesDirectOperatorDefinition) {
  std::mt19937_64 rng(5);
  for (int t = 0; t < 8; ++t) {
    auto m = random_model(rng, 2, 2);
    CompositeBasis b(m.cutoffs);
    const auto full = full_matrix(vectorize_lindbladian_all(m, b));
    const auto d = static_cast<Eigen::Index>(b.dimension());
    std::normal_distribution<double> g;
    Eigen::MatrixXcd rho(d, d);
    for (Eigen::Index i = 0; i < d; ++i)
      for (Eigen::Index j = 0; j < d; ++j) rho(i, j) = cd(g(rng), g(rng));
    const Eigen::MatrixXcd ref = apply_lindbladian(m, b, rho);
    EXPECT_LT((unvec(full * vec(rho), d) - ref).norm(), 1e-11 * (1.0 + ref.norm()));
  }
}

TEST(Lindbladian, TracePreservation) {
  std::mt19937_64 rng(17);
  for (int t = 0; t < 30; ++t) {
    auto m = random_model(rng);
    CompositeBasis b(m.cutoffs);
    const auto so = vectorize_lindbladian(m, b, {0});
    const auto& blk = so.sector(0);
    const Eigen::VectorXcd vac = left_vacuum(blk.index);
    const Eigen::RowVectorXcd row = vac.transpose() * blk.block;
    EXPECT_LE(row.norm(), 1e-12 * blk.block.norm());
  }
}

TEST(Lindbladian, HermiticityPreservation) {
  std::mt19937_64 rng(23);
  for (int t = 0; t < 10; ++t) {
    auto m = random_model(rng, 2, 2);
    CompositeBasis b(m.cutoffs);
    const auto full = full_matrix(vectorize_lindbladian_all(m, b));
    const auto d = static_cast<Eigen::Index>(b.dimension());
    const Eigen::MatrixXcd rho = random_hermitian(rng, d);
    const Eigen::MatrixXcd out = unvec(full * vec(rho), d);
    EXPECT_LE((out - out.adjoint()).norm(), 1e-12 * (1.0 + out.norm()));
  }
}

TEST(Lindbladian, CommutesWithSectorLabel) {
  std::mt19937_64 rng(29);
  auto m = random_model(rng, 2, 2);
  CompositeBasis b(m.cutoffs);
  const auto full = full_matrix(vectorize_lindbladian_all(m, b));
  const auto d = b.dimension();
  Eigen::VectorXcd k(static_cast<Eigen::Index>(d * d));
  for (std::size_t r = 0; r < d; ++r)
    for (std::size_t c = 0; c < d; ++c)
      k[static_cast<Eigen::Index>(r * d + c)] = cd(0.0, b.total_occupation(c) - b.total_occupation(r));
  std::normal_distribution<double> g;
  Eigen::VectorXcd v(k.size());
  for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = cd(g(rng), g(rng));
  const Eigen::VectorXcd lhs = full * (k.asDiagonal() * v);
  const Eigen::VectorXcd rhs = k.asDiagonal() * (full * v);
  EXPECT_LE((lhs - rhs).norm(), 1e-12 * full.norm() * v.norm());
}

TEST(Lindbladian, DissipationFreeSpectrum) {
  AimModel m;
  m.omega0 = 0.7;
  m.U = 1.1;
  m.bath = {BathSite{1.9, 0.4, 0.0, 0.0}};
  m.cutoffs = {SiteSpec{2}, SiteSpec{2}};
  CompositeBasis b(m.cutoffs);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(to_dense(build_aim_hamiltonian(m, b)));
  const auto e = es.eigenvalues();
  std::vector<double> expected;
  for (Eigen::Index i = 0; i < e.size(); ++i)
    for (Eigen::Index j = 0; j < e.size(); ++j) expected.push_back(-(e[i] - e[j]));
  Eigen::ComplexEigenSolver<Eigen::MatrixXcd> ces(full_matrix(vectorize_lindbladian_all(m, b)));
  std::vector<double> got;
  for (Eigen::Index i = 0; i < ces.eigenvalues().size(); ++i) {
    EXPECT_NEAR(ces.eigenvalues()[i].real(), 0.0, 1e-10);
    got.push_back(ces.eigenvalues()[i].imag());
  }
  std::sort(expected.begin(), expected.end());
  std::sort(got.begin(), got.end());
  ASSERT_EQ(got.size(), expected.size());
  for (std::size_t i = 0; i < got.size(); ++i) EXPECT_NEAR(got[i], expected[i], 1e-9);
}

TEST(Lindbladian, SingleModeUniqueSteadyEigenvalue) {
  AimModel m;
  m.omega0 = 1.0;
  m.P1 = 0.1;
  m.Gamma1 = 0.5;
  m.cutoffs = {SiteSpec{12}};
  CompositeBasis b(m.cutoffs);
  const auto so = vectorize_lindbladian(m, b, {0});
  Eigen::ComplexEigenSolver<Eigen::MatrixXcd> ces{Eigen::MatrixXcd(so.sector(0).block)};
  int zeros = 0;
  for (Eigen::Index i = 0; i < ces.eigenvalues().size(); ++i) {
    const cd l = ces.eigenvalues()[i];
    if (std::abs(l) <= 1e-10)
      ++zeros;
    else
      EXPECT_LT(l.real(), 0.0);
  }
  EXPECT_EQ(zeros, 1);
}

TEST(Lindbladian, NoGrowthModes) {
  std::mt19937_64 rng(31);
  for (int t = 0; t < 5; ++t) {
    auto m = random_model(rng, 2, 2);
    m.Gamma2 = std::max(m.Gamma2, 0.1);
    CompositeBasis b(m.cutoffs);
    for (int k : {-1, 0, 1}) {
      const auto so = vectorize_lindbladian(m, b, {k});
      Eigen::ComplexEigenSolver<Eigen::MatrixXcd> ces{Eigen::MatrixXcd(so.sector(k).block)};
      EXPECT_LE(ces.eigenvalues().real().maxCoeff(), 1e-9);
    }
  }
}

TEST(Lindbladian, MirrorSectorsAreConjugate) {
  std::mt19937_64 rng(37);
  auto m = random_model(rng, 2, 3);
  CompositeBasis b(m.cutoffs);
  const auto so = vectorize_lindbladian(m, b, {-1, 1});
  const Eigen::MatrixXcd minus(so.sector(-1).block);
  const Eigen::MatrixXcd plus(so.sector(1).block);
  const auto perm = mirror_permutation(so.sector(-1).index, so.sector(1).index);
  for (Eigen::Index i = 0; i < minus.rows(); ++i)
    for (Eigen::Index j = 0; j < minus.cols(); ++j)
      ASSERT_EQ(minus(i, j), std::conj(plus(perm[static_cast<std::size_t>(i)], perm[static_cast<std::size_t>(j)])));
}

TEST(Lindbladian, ModelValidation) {
  AimModel m;
  m.cutoffs = {SiteSpec{2}};
  m.P1 = -0.1;
  EXPECT_THROW(m.validate(), std::invalid_argument);
  m.P1 = 0.1;
  m.bath = {BathSite{1.0, 0.1, -1.0, 0.0}};
  m.cutoffs = {SiteSpec{2}, SiteSpec{2}};
  EXPECT_THROW(m.validate(), std::invalid_argument);
  m.bath[0].gamma1 = 1.0;
  m.cutoffs = {SiteSpec{2}};
  EXPECT_THROW(m.validate(), std::invalid_argument);
}
