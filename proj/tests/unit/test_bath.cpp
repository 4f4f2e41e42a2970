#include "zdmft/bath.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <random>

using namespace zdmft;

namespace {

std::vector<double> grid(double a, double b, int n) { return FrequencyGrid{a, b, n}.values(); }

BathParams two_sites() {
  return BathParams{{BathSite{-0.7, 0.8, 0.9, 0.2}, BathSite{1.3, 0.5, 0.6, 0.1}}};
}

double rel(double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-300); }

}  // namespace

TEST(Hybridization, ZeroCouplingVanishes) {
  BathParams b{{BathSite{0.3, 0.0, 1.0, 0.2}, BathSite{-1.0, 0.0, 0.5, 0.0}}};
  const auto d = eval_hybridization(b, grid(-5, 5, 101));
  for (std::size_t g = 0; g < d.size(); ++g) {
    EXPECT_EQ(d.retarded[g], cd(0.0));
    EXPECT_EQ(d.keldysh[g], cd(0.0));
  }
}

TEST(Hybridization, SingleSiteHalfWidthAndResonance) {
  const double w1 = 0.4, nu = 0.7, G = 0.9, P = 0.3;
  BathParams b{{BathSite{w1, nu, G, P}}};
  const double hw = G - P;
  const auto d = eval_hybridization(b, {w1, w1 + hw});
  // peak of -Im Delta^R and its half maximum one width away
  const double peak = -d.retarded[0].imag();
  EXPECT_NEAR(peak, nu * nu / hw, 1e-14);
  EXPECT_NEAR(-d.retarded[1].imag(), 0.5 * peak, 1e-14);
  EXPECT_NEAR(d.keldysh[0].imag(), -2.0 * nu * nu * (G + P) / (hw * hw), 1e-13);
  EXPECT_EQ(d.keldysh[0].real(), 0.0);
}

TEST(Hybridization, SignProperties) {
  const auto d = eval_hybridization(two_sites(), grid(-10, 10, 401));
  for (std::size_t g = 0; g < d.size(); ++g) {
    EXPECT_LE(d.retarded[g].imag(), 0.0);
    EXPECT_LE(d.keldysh[g].imag(), 0.0);
    EXPECT_EQ(d.keldysh[g].real(), 0.0);
  }
}

TEST(Hybridization, RejectsInvalidParams) {
  EXPECT_THROW(eval_hybridization(BathParams{{BathSite{0, 1, 0.1, 0.2}}}, {0.0}), std::invalid_argument);
  EXPECT_THROW(eval_hybridization(BathParams{{BathSite{0, 1, -0.1, 0.0}}}, {0.0}), std::invalid_argument);
  EXPECT_THROW(eval_hybridization(BathParams{{BathSite{0, 1, 0.5, 0.5}}}, {0.0}), std::invalid_argument);
}

TEST(ChiDistance, TwoPointHandQuadrature) {
  auto a = KeldyshGF::zeros({0.0, 1.0});
  auto b = a;
  a.retarded[0] = 1.0;
  EXPECT_DOUBLE_EQ(chi_distance(a, b), 0.5);
  EXPECT_DOUBLE_EQ(chi_distance(b, a), 0.5);
  EXPECT_EQ(chi_distance(a, a), 0.0);
}

TEST(ChiDistance, RejectsMismatchAndNegativeWeight) {
  const auto a = KeldyshGF::zeros({0.0, 1.0});
  const auto b = KeldyshGF::zeros({0.0, 2.0});
  EXPECT_THROW(chi_distance(a, b), std::invalid_argument);
  ChiWeights w;
  w.keldysh = [](double) { return -1.0; };
  EXPECT_THROW(chi_distance(a, a, w), std::invalid_argument);
}

TEST(ChiGradient, MatchesCentralDifferences) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const auto w = grid(-6, 6, 601);
  const auto target = eval_hybridization(two_sites(), w);
  for (int trial = 0; trial < 20; ++trial) {
    BathParams p;
    for (int n = 0; n < 2; ++n) {
      const double pump = 0.3 * u(rng);
      p.sites.push_back(BathSite{4 * u(rng) - 2, 0.2 + u(rng), pump + 0.2 + u(rng), pump});
    }
    const auto grad = chi_gradient(target, p);
    for (std::size_t k = 0; k < grad.size(); ++k) {
      const double h = 1e-5;
      auto shifted = [&](double s) {
        BathParams q = p;
        auto& site = q.sites[k / 4];
        double* field[] = {&site.omega, &site.nu, &site.gamma1, &site.pump1};
        *field[k % 4] += s;
        return chi_distance(target, eval_hybridization(q, w));
      };
      const double fd = (shifted(h) - shifted(-h)) / (2 * h);
      EXPECT_LT(std::abs(grad[k] - fd), 1e-6 * std::max(std::abs(fd), 1.0)) << "trial " << trial << " k " << k;
    }
  }
}

TEST(FitBath, RoundTripFromPerturbedStart) {
  const auto truth = two_sites();
  const auto w = grid(-6, 6, 801);
  const auto target = eval_hybridization(truth, w);
  BathParams init = truth;
  for (auto& s : init.sites) {
    const double width = 1.1 * (s.gamma1 - s.pump1);
    s.omega *= 0.9;
    s.nu *= 1.1;
    s.pump1 *= 0.9;
    s.gamma1 = width + s.pump1;
  }
  const auto fit = fit_bath(target, 2, init);
  EXPECT_LT(fit.final_chi, 1e-8);
  const auto expect = truth.canonical();
  for (std::size_t n = 0; n < 2; ++n) {
    EXPECT_LT(rel(fit.params.sites[n].omega, expect.sites[n].omega), 1e-4);
    EXPECT_LT(rel(fit.params.sites[n].nu, expect.sites[n].nu), 1e-4);
    EXPECT_LT(rel(fit.params.sites[n].gamma1, expect.sites[n].gamma1), 1e-4);
    EXPECT_LT(rel(fit.params.sites[n].pump1, expect.sites[n].pump1), 1e-4);
  }
}

TEST(FitBath, ZeroTargetDrivesCouplingsToZero) {
  const auto w = grid(-5, 5, 401);
  const auto fit = fit_bath(KeldyshGF::zeros(w), 2, two_sites());
  EXPECT_LT(fit.final_chi, 1e-10);
  for (const auto& s : fit.params.sites) EXPECT_LT(std::abs(s.nu), 1e-6);
}

TEST(FitBath, GainTargetStaysFeasible) {
  // a Lorentzian with its pole in the upper half plane is not representable
  const auto w = grid(-5, 5, 401);
  auto target = KeldyshGF::zeros(w);
  for (std::size_t g = 0; g < w.size(); ++g) {
    target.retarded[g] = 1.0 / cd(w[g] - 0.5, -0.3);
    target.keldysh[g] = cd(0.0, 2.0 / ((w[g] - 0.5) * (w[g] - 0.5) + 0.09));
  }
  FitOptions opt;
  opt.gamma_max = 50.0;
  opt.pump_max = 10.0;
  const auto fit = fit_bath(target, 2, two_sites(), opt);
  EXPECT_NO_THROW(fit.params.validate(opt.eps_stab));
  for (const auto& s : fit.params.sites) {
    EXPECT_GE(s.gamma1, 0.0);
    EXPECT_LE(s.gamma1, 50.0);
    EXPECT_GE(s.pump1, 0.0);
    EXPECT_LE(s.pump1, 10.0);
    EXPECT_GE(s.gamma1 - s.pump1, opt.eps_stab * (1 - 1e-12));
  }
  EXPECT_LE(fit.final_chi, fit.initial_chi);
}

TEST(FitBath, NeverWorseThanStartAndSorted) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const auto w = grid(-8, 8, 401);
  const auto target = eval_hybridization(BathParams{{BathSite{0.2, 1.0, 0.5, 0.1}}}, w);
  for (int trial = 0; trial < 5; ++trial) {
    BathParams init;
    for (int n = 0; n < 3; ++n) init.sites.push_back(BathSite{6 * u(rng) - 3, -u(rng), 0.5 + u(rng), 0.1 * u(rng)});
    FitOptions opt;
    opt.seed = static_cast<std::uint64_t>(trial);
    opt.max_iterations = 20;
    const auto fit = fit_bath(target, 3, init, opt);
    EXPECT_LE(fit.final_chi, fit.initial_chi);
    EXPECT_TRUE(std::is_sorted(fit.params.sites.begin(), fit.params.sites.end(),
                               [](const BathSite& a, const BathSite& b) { return a.omega < b.omega; }));
    for (const auto& s : fit.params.sites) EXPECT_GE(s.nu, 0.0);
  }
}

TEST(FitBath, DeterministicForFixedSeed) {
  const auto w = grid(-6, 6, 301);
  const auto target = eval_hybridization(two_sites(), w);
  BathParams init{{BathSite{-1, 1, 1, 0.1}, BathSite{1, 1, 1, 0.1}}};
  FitOptions opt;
  opt.seed = 42;
  EXPECT_EQ(fit_bath(target, 2, init, opt).params, fit_bath(target, 2, init, opt).params);
}

TEST(FitBath, RejectsNonFiniteTarget) {
  auto target = KeldyshGF::zeros(grid(-1, 1, 11));
  target.retarded[3] = cd(std::nan(""), 0.0);
  EXPECT_THROW(fit_bath(target, 1, BathParams{{BathSite{0, 1, 1, 0}}}), FitError);
}
