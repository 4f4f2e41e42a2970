#include "zdmft/fock.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace zdmft;

TEST(CompositeBasis, Dimensions) {
  EXPECT_EQ(build_composite_basis({SiteSpec{0}}).dimension(), 1u);
  EXPECT_EQ(build_composite_basis({SiteSpec{5}}).dimension(), 6u);
  EXPECT_EQ(build_composite_basis({SiteSpec{5}, SiteSpec{7}, SiteSpec{7}}).dimension(), 384u);
}

TEST(CompositeBasis, RejectsBadInput) {
  EXPECT_THROW(build_composite_basis({}), std::invalid_argument);
  EXPECT_THROW(build_composite_basis({SiteSpec{2}, SiteSpec{-1}}), std::invalid_argument);
}

TEST(CompositeBasis, SiteZeroSlowestOrdering) {
  CompositeBasis b({SiteSpec{1}, SiteSpec{2}});
  // (n0, n1): (0,0) (0,1) (0,2) (1,0) (1,1) (1,2)
  EXPECT_EQ(b.index_of({0, 2}), 2u);
  EXPECT_EQ(b.index_of({1, 0}), 3u);
  EXPECT_EQ(b.occupations(4), (std::vector<int>{1, 1}));
  EXPECT_EQ(b.total_occupation(5), 3);
  for (std::size_t s = 0; s < b.dimension(); ++s) EXPECT_EQ(b.index_of(b.occupations(s)), s);
  EXPECT_THROW((void)b.index_of({2, 0}), std::out_of_range);
}

TEST(SiteOperators, AnnihilatorMatrixElements) {
  CompositeBasis b({SiteSpec{2}});
  const auto a = to_dense(site_annihilator(b, 0));
  Eigen::MatrixXcd expected = Eigen::MatrixXcd::Zero(3, 3);
  expected(0, 1) = 1.0;
  expected(1, 2) = std::sqrt(2.0);
  EXPECT_LT((a - expected).norm(), 1e-15);
}

TEST(SiteOperators, NumberOperatorSpectrum) {
  CompositeBasis b({SiteSpec{4}});
  const auto n = to_dense(site_number(b, 0));
  for (int k = 0; k <= 4; ++k) EXPECT_NEAR(n(k, k).real(), k, 1e-15);
  EXPECT_NEAR((n - Eigen::MatrixXcd(n.diagonal().asDiagonal())).norm(), 0.0, 1e-15);
}

TEST(SiteOperators, TruncatedCommutator) {
  for (int cutoff = 0; cutoff <= 6; ++cutoff) {
    CompositeBasis b({SiteSpec{cutoff}});
    const auto a = to_dense(site_annihilator(b, 0));
    const Eigen::MatrixXcd comm = a * a.adjoint() - a.adjoint() * a;
    Eigen::MatrixXcd expected = Eigen::MatrixXcd::Identity(cutoff + 1, cutoff + 1);
    expected(cutoff, cutoff) = static_cast<double>(-cutoff);
    EXPECT_LT((comm - expected).norm(), 1e-13) << "cutoff " << cutoff;
  }
}

TEST(SiteOperators, CreatorIsAdjointAndDistinctSitesCommute) {
  CompositeBasis b({SiteSpec{2}, SiteSpec{3}, SiteSpec{1}});
  for (std::size_t i = 0; i < 3; ++i) {
    const auto a = to_dense(site_annihilator(b, i));
    EXPECT_LT((to_dense(site_creator(b, i)) - a.adjoint()).norm(), 1e-15);
    for (std::size_t j = 0; j < 3; ++j) {
      if (i == j) continue;
      const auto bj = to_dense(site_annihilator(b, j));
      EXPECT_EQ((a * bj.adjoint() - bj.adjoint() * a).norm(), 0.0);
      EXPECT_EQ((a * bj - bj * a).norm(), 0.0);
    }
  }
  EXPECT_THROW((void)site_annihilator(b, 3), std::out_of_range);
}

TEST(SiteOperators, EmbeddingActsOnOneSite) {
  CompositeBasis b({SiteSpec{2}, SiteSpec{2}});
  const auto a1 = to_dense(site_annihilator(b, 1));
  const auto from = b.index_of({1, 2});
  const auto to = b.index_of({1, 1});
  EXPECT_NEAR(a1(static_cast<Eigen::Index>(to), static_cast<Eigen::Index>(from)).real(), std::sqrt(2.0), 1e-15);
  EXPECT_LT((to_dense(identity_operator(b)) - Eigen::MatrixXcd::Identity(9, 9)).norm(), 1e-15);
}
