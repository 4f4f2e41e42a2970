#include "zdmft/zeno.hpp"

#include <gtest/gtest.h>

using namespace zdmft;

TEST(EffectiveRates, ClosedForms) {
  const double J = 4, U = 10;
  const int z = 6;
  const double t2 = (J / z) * (J / z);
  for (double g2 : {0.0, 0.3, 2.5, 10.0, 17.0, 250.0}) {
    const auto r = effective_rates(J, z, U, g2);
    EXPECT_EQ(r.J2_eff, t2 * U / (U * U + g2 * g2));
    EXPECT_EQ(r.Gamma2_eff, t2 * g2 / (U * U + g2 * g2));
    EXPECT_GE(r.J2_eff, 0.0);
    EXPECT_GE(r.Gamma2_eff, 0.0);
  }
  const auto zero = effective_rates(J, z, U, 0.0);
  EXPECT_EQ(zero.Gamma2_eff, 0.0);
  EXPECT_DOUBLE_EQ(zero.J2_eff, t2 / U);
  EXPECT_THROW(effective_rates(J, 0, U, 1.0), std::invalid_argument);
}

TEST(EffectiveRates, MaximumAtGammaEqualsU) {
  const double J = 4, U = 10;
  const int z = 6;
  double best = -1.0, arg = 0.0;
  for (int i = 1; i <= 50000; ++i) {
    const double g2 = U * 1e-4 * i;  // relative grid 1e-4 up to 5U
    const double v = effective_rates(J, z, U, g2).Gamma2_eff;
    if (v > best) {
      best = v;
      arg = g2;
    }
  }
  EXPECT_NEAR(arg, U, 1e-4 * U);
  EXPECT_DOUBLE_EQ(effective_rates(J, z, U, U).Gamma2_eff, (J / z) * (J / z) / (2 * U));
}

TEST(EffectiveRates, LargeLossAsymptote) {
  const double J = 4, U = 10, g2 = 100 * U;
  const double v = effective_rates(J, 6, U, g2).Gamma2_eff;
  const double asym = (J / 6) * (J / 6) / g2;
  EXPECT_LT(std::abs(v - asym) / asym, 1e-4);
}

TEST(EffectiveRates, AlgebraicIdentity) {
  const double J = 3, U = 7;
  const double ref = effective_rates(J, 4, U, 1.0).Gamma2_eff * (U * U + 1.0);
  for (double g2 : {0.5, 3.0, 11.0, 90.0})
    EXPECT_NEAR(effective_rates(J, 4, U, g2).Gamma2_eff * (U * U + g2 * g2) / g2, ref, 1e-14 * ref);
}

TEST(Normalization, ScaleInvariantAndFallback) {
  SweepResult r;
  r.U = 10;
  for (double g : {2.5, 5.0, 100.0}) {
    SweepPoint p;
    p.gamma2 = g;
    p.n_loc = 0.1 * g + 0.3;
    p.converged = true;
    r.points.push_back(p);
  }
  SweepResult scaled = r;
  for (auto& p : scaled.points) p.n_loc *= 3.7;
  normalize_sweep(r);
  normalize_sweep(scaled);
  EXPECT_EQ(r.normalization_gamma2, 100.0);
  EXPECT_DOUBLE_EQ(r.points.back().n_loc_normalized, 1.0);
  for (std::size_t i = 0; i < r.points.size(); ++i)
    EXPECT_NEAR(r.points[i].n_loc_normalized, scaled.points[i].n_loc_normalized, 1e-15);

  // unconverged reference point: largest converged Gamma2 is used instead
  r.points.back().converged = false;
  normalize_sweep(r);
  EXPECT_EQ(r.normalization_gamma2, 5.0);
  EXPECT_DOUBLE_EQ(r.points[1].n_loc_normalized, 1.0);

  for (auto& p : r.points) p.converged = false;
  normalize_sweep(r);
  EXPECT_TRUE(std::isnan(r.points[0].n_loc_normalized));
}

TEST(ZenoMinimum, InteriorVertexAndEdges) {
  const std::vector<double> x = {1, 2, 3, 4, 5};
  std::vector<double> y;
  for (double v : x) y.push_back((v - 2.7) * (v - 2.7) + 1.0);
  const auto m = zeno_minimum(x, y);
  EXPECT_TRUE(m.interior);
  EXPECT_NEAR(m.gamma2, 2.7, 1e-12);
  EXPECT_NEAR(m.n_loc, 1.0, 1e-12);
  const auto edge = zeno_minimum(x, {5, 4, 3, 2, 1});
  EXPECT_FALSE(edge.interior);
  EXPECT_EQ(edge.gamma2, 5.0);
  EXPECT_THROW(zeno_minimum({1, 2}, {1}), std::invalid_argument);
}

TEST(Sweep, SinglePointNormalizesToOne) {
  DmftConfig c;
  c.n_bath = 1;
  c.cutoffs = {2, 2};
  c.grid = FrequencyGrid{-10.0, 50.0, 400};
  c.fit.restarts = 1;
  c.tolerance = 1e-3;
  const auto r = sweep_zeno(c, {15.0});
  ASSERT_EQ(r.points.size(), 1u);
  const auto& p = r.points.front();
  EXPECT_TRUE(p.converged);
  EXPECT_DOUBLE_EQ(p.n_loc_normalized, 1.0);
  EXPECT_EQ(p.impurity_fock_weights.size(), 3u);
  ASSERT_EQ(p.bath_mean_occupation.size(), 1u);
  const auto bath = p.solution.bath.canonical();
  EXPECT_DOUBLE_EQ(p.gamma111_eff, bath.sites[0].gamma1 - bath.sites[0].pump1);
  EXPECT_THROW(sweep_zeno(c, {5.0, 2.5}), std::invalid_argument);
}

TEST(Dimer, ModelInvariants) {
  DmftConfig c;
  c.impurity.Gamma2 = 15;
  const auto m = build_zeno_dimer(c, 1.2, 0.3);
  EXPECT_NO_THROW(m.validate());
  ASSERT_EQ(m.bath.size(), 1u);
  EXPECT_EQ(m.cutoffs.front().cutoff, 1);
  EXPECT_DOUBLE_EQ(m.bath[0].omega, 11.0);
  EXPECT_DOUBLE_EQ(m.bath[0].nu, 4.0 / std::sqrt(6.0));
  EXPECT_DOUBLE_EQ(m.bath[0].gamma1 - m.bath[0].pump1, 1.2);
  EXPECT_DOUBLE_EQ(m.bath[0].pump1, 0.3);
  EXPECT_THROW(build_zeno_dimer(c, 0.0, 0.0), std::invalid_argument);
  EXPECT_THROW(build_zeno_dimer(c, 1.0, -0.1), std::invalid_argument);

  const auto dc = dimer_dmft_config(c, 2, 4);
  EXPECT_EQ(dc.n_bath, 1);
  EXPECT_NO_THROW(dc.validate());
  EXPECT_EQ(dimer_bath(m).sites, m.bath);
}
