#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "shadowdr/model_core.hpp"
#include "shadowdr/quadrature.hpp"

using namespace shadowdr;

namespace {

const std::vector<double> kX0{0.0, 0.0};

OddsRatioSpec quadratic_or(double g1, double g2) {
  OddsRatioSpec s;
  s.basis = {OddsRatioTerm{1, -1}, OddsRatioTerm{2, -1}};
  s.gamma = Vector(2);
  s.gamma << g1, g2;
  return s;
}

// y | r=1, x ~ N(m, sd^2) for every x; z | y ~ N(bzy y + c, sz^2).
BaselineOutcomeSpec constant_outcome(double m, double sd, double bzy = 1.0, double c = 0.0, double sz = 1.0) {
  BaselineOutcomeSpec b;
  b.beta_y = Vector::Zero(3);
  b.beta_y[0] = m;
  b.sigma_y = sd;
  b.beta_zy = bzy;
  b.beta_zx = Vector::Zero(3);
  b.beta_zx[0] = c;
  b.sigma_z = sz;
  return b;
}

BaselinePropensitySpec alpha_of(double a0, double a1, double a2) {
  Vector a(3);
  a << a0, a1, a2;
  return BaselinePropensitySpec(a);
}

// Trapezoid rule on [lo, hi].
template <class F>
double trapezoid(F&& f, double lo, double hi, int steps) {
  const double h = (hi - lo) / steps;
  double acc = 0.5 * (f(lo) + f(hi));
  for (int k = 1; k < steps; ++k) acc += f(lo + k * h);
  return acc * h;
}

}  // namespace

TEST(Quadrature, RuleIntegratesGaussianMoments) {
  for (int n : {32, 64, 128}) {
    const auto& rule = quadrature::gauss_hermite(n);
    double total = 0.0;
    for (double w : rule.weights) total += w;
    EXPECT_NEAR(total, std::sqrt(std::numbers::pi), 1e-13);
    EXPECT_NEAR(quadrature::normal_expectation([](double y) { return y * y * y * y; }, 0.0, 1.0, n), 3.0, 1e-12);
    EXPECT_NEAR(quadrature::normal_expectation([](double y) { return y; }, 1.5, 2.0, n), 1.5, 1e-12);
  }
}

TEST(Quadrature, CosineMatchesAdaptiveOracle) {
  EXPECT_NEAR(quadrature::normal_expectation([](double y) { return std::cos(y); }, 0.3, 0.7, 64),
              0.7477462055866649, 1e-13);
}

TEST(Numerics, ExpitAndLog1pexpAreStableAtExtremes) {
  EXPECT_EQ(expit(0.0), 0.5);
  EXPECT_GT(expit(-800.0), -1.0);
  EXPECT_TRUE(std::isfinite(log1pexp(800.0)));
  EXPECT_NEAR(log1pexp(800.0), 800.0, 1e-12);
  EXPECT_NEAR(log1pexp(-40.0), std::exp(-40.0), 1e-30);
  EXPECT_NEAR(log1pexp(0.0), std::log(2.0), 1e-15);
}

TEST(Design, ParsesFeaturesAndEvaluatesAffineForm) {
  EXPECT_EQ(Feature::parse("x2", 2), (Feature{1, 1}));
  EXPECT_EQ(Feature::parse("x1^2", 2), (Feature{0, 2}));
  EXPECT_THROW(Feature::parse("x3", 2), ConfigError);
  EXPECT_THROW(Feature::parse("x1^0", 2), ConfigError);
  EXPECT_THROW(Feature::parse("w1", 2), ConfigError);

  const Design d = Design::linear(2).with({0, 2});
  EXPECT_EQ(d.describe(), "1, x1, x2, x1^2");
  Vector coef(4);
  coef << 1.0, 2.0, -1.0, 0.5;
  const std::vector<double> x{3.0, 4.0};
  EXPECT_DOUBLE_EQ(d.affine(coef, x), 1.0 + 6.0 - 4.0 + 4.5);
  EXPECT_THROW(d.validate(1), ConfigError);
}

TEST(OddsRatio, ExamplesAndReferenceLevel) {
  const std::vector<double> x{0.7, -1.2};
  EXPECT_EQ(odds_ratio(0.0, x, OddsRatioSpec::default_spec(0.5)), 0.0);
  EXPECT_DOUBLE_EQ(odds_ratio(2.0, x, OddsRatioSpec::default_spec(0.5)), 1.0);
  EXPECT_EQ(odds_ratio(1.7, x, OddsRatioSpec::default_spec(0.0)), 0.0);
  EXPECT_THROW(odds_ratio(std::nan(""), x, OddsRatioSpec::default_spec(0.5)), DomainError);
  const std::vector<double> bad{INFINITY, 0.0};
  EXPECT_THROW(odds_ratio(1.0, bad, OddsRatioSpec::default_spec(0.5)), DomainError);
}

TEST(OddsRatio, VanishesAtZeroOnRandomGrid) {
  std::mt19937_64 gen(11);
  std::normal_distribution<double> nd(0.0, 3.0);
  OddsRatioSpec s;
  s.basis = {OddsRatioTerm::parse("y"), OddsRatioTerm::parse("y^2"), OddsRatioTerm::parse("y*x2"),
             OddsRatioTerm::parse("y^3*x1")};
  s.gamma = Vector(4);
  for (int k = 0; k < 500; ++k) {
    for (int j = 0; j < 4; ++j) s.gamma[j] = nd(gen);
    const std::vector<double> x{nd(gen), nd(gen)};
    EXPECT_EQ(odds_ratio(0.0, x, s), 0.0);
  }
}

TEST(OddsRatio, TermParsing) {
  const auto t = OddsRatioTerm::parse("y^2*x3");
  EXPECT_EQ(t.y_power, 2);
  EXPECT_EQ(t.covariate, 2);
  EXPECT_EQ(t.name(), "y^2*x3");
  const std::vector<double> x{1.0, 2.0, -0.5};
  EXPECT_DOUBLE_EQ(t.value(3.0, x), -4.5);
  EXPECT_THROW(OddsRatioTerm::parse("z"), ConfigError);
  EXPECT_THROW(OddsRatioTerm::parse("y*z"), ConfigError);
  EXPECT_THROW(OddsRatioTerm::parse("x1"), ConfigError);
}

TEST(Propensity, HandExamples) {
  EXPECT_DOUBLE_EQ(propensity(kX0, 1.3, alpha_of(0, 0, 0), OddsRatioSpec::default_spec(0.0)), 0.5);
  const auto log3 = OddsRatioSpec::default_spec(std::log(3.0));
  EXPECT_NEAR(propensity(kX0, 1.0, alpha_of(0, 0, 0), log3), 0.25, 1e-15);
  EXPECT_NEAR(weight(kX0, 1.0, alpha_of(0, 0, 0), log3), 4.0, 1e-14);
  EXPECT_DOUBLE_EQ(weight(kX0, 1.3, alpha_of(0, 0, 0), OddsRatioSpec::default_spec(0.0)), 2.0);
  const std::vector<double> x{0.4, -0.9};
  const auto a = alpha_of(0.2, -0.7, 1.1);
  EXPECT_DOUBLE_EQ(propensity(x, 0.0, a, OddsRatioSpec::default_spec(2.5)), expit(a.linear_predictor(x)));
}

TEST(Propensity, RangeAndReciprocityOnRandomInputs) {
  std::mt19937_64 gen(12);
  std::normal_distribution<double> nd(0.0, 1.0);
  for (int k = 0; k < 2000; ++k) {
    const double scale = k < 1000 ? 1.0 : 50.0;
    const auto a = alpha_of(scale * nd(gen), scale * nd(gen), scale * nd(gen));
    const auto g = OddsRatioSpec::default_spec(scale * nd(gen));
    const std::vector<double> x{nd(gen), nd(gen)};
    const double y = 3.0 * nd(gen);
    const double p = propensity(x, y, a, g);
    EXPECT_GT(p, 0.0);
    EXPECT_LT(p, 1.0);
    const double w = weight(x, y, a, g);
    EXPECT_GE(w, 1.0);
    if (scale == 1.0) {
      EXPECT_NEAR(w * p, 1.0, 1e-13);
      EXPECT_NEAR(std::log(w), log_weight(x, y, a, g), 1e-12 * std::max(1.0, std::log(w)));
    }
  }
}

TEST(Propensity, NullOddsRatioIgnoresOutcome) {
  std::mt19937_64 gen(13);
  std::normal_distribution<double> nd(0.0, 1.0);
  const auto g0 = OddsRatioSpec::default_spec(0.0);
  for (int k = 0; k < 200; ++k) {
    const auto a = alpha_of(nd(gen), nd(gen), nd(gen));
    const std::vector<double> x{nd(gen), nd(gen)};
    EXPECT_EQ(propensity(x, 5.0 * nd(gen), a, g0), propensity(x, 0.0, a, g0));
  }
}

TEST(ExtendedPropensity, ZeroPhiIsBitForBitBaseline) {
  std::mt19937_64 gen(14);
  std::normal_distribution<double> nd(0.0, 1.0);
  for (int k = 0; k < 500; ++k) {
    const auto a = alpha_of(nd(gen), nd(gen), nd(gen));
    const auto g = OddsRatioSpec::default_spec(nd(gen));
    const auto ext = ExtendedWeightSpec::default_spec(2, 0.0);
    const std::vector<double> x{nd(gen), nd(gen)};
    const double y = 2.0 * nd(gen);
    EXPECT_EQ(extended_propensity(x, y, ext, a, g), propensity(x, y, a, g));
    EXPECT_EQ(extended_weight(x, y, ext, a, g), weight(x, y, a, g));
    EXPECT_GE(extended_weight(x, y, ExtendedWeightSpec::default_spec(2, 5.0 * nd(gen)), a, g), 1.0);
  }
}

TEST(ExtendedPropensity, HandExample) {
  const ExtendedWeightSpec ext{std::log(3.0), ScalarFeature::constant(1.0)};
  EXPECT_NEAR(extended_propensity(kX0, 0.0, ext, alpha_of(0, 0, 0), OddsRatioSpec::default_spec(0.9)), 0.25,
              1e-15);
  EXPECT_EQ(ExtendedWeightSpec::default_spec(0).g(std::vector<double>{}), 1.0);
  EXPECT_EQ(ExtendedWeightSpec::default_spec(2).g.name(), "x1");
}

TEST(Tilt, ShiftExampleReproducedByQuadratureFirst) {
  const auto beta = constant_outcome(1.0, 2.0);
  const auto g = OddsRatioSpec::default_spec(0.25);
  const double quad = tilted_mean_y(kX0, beta, g, TiltMethod::quadrature);
  EXPECT_NEAR(quad, 2.0, 1e-10);
  EXPECT_NEAR(tilted_mean_y(kX0, beta, g, TiltMethod::closed_form), quad, 1e-10);
  EXPECT_DOUBLE_EQ(tilted_mean_y(kX0, beta, g), 2.0);
}

TEST(Tilt, ClosedFormAgreesWithQuadratureOverGrid) {
  for (double m : {-2.0, 0.0, 1.0, 3.0}) {
    for (double sd : {0.2, 0.5, 1.0, 2.0, 3.5, 5.0}) {
      for (double g : {-1.0, -0.6, -0.2, 0.0, 0.3, 0.7, 1.0}) {
        const auto beta = constant_outcome(m, sd);
        const auto odds = OddsRatioSpec::default_spec(g);
        const double closed = tilted_mean_y(kX0, beta, odds, TiltMethod::closed_form);
        const double quad = tilted_mean_y(kX0, beta, odds, TiltMethod::quadrature);
        EXPECT_LT(std::abs(closed - quad), 1e-8) << "m " << m << " sd " << sd << " gamma " << g;
        const double lc = log_tilted_normalizer(kX0, beta, odds, TiltMethod::closed_form);
        const double lq = log_tilted_normalizer(kX0, beta, odds, TiltMethod::quadrature);
        EXPECT_LT(std::abs(lc - lq), 1e-8 * std::max(1.0, std::abs(lc)));
      }
    }
  }
}

TEST(Tilt, NonlinearOddsRatioMatchesAdaptiveOracle) {
  const auto beta = constant_outcome(0.5, 1.2, 0.8, 0.4, 0.5);
  const auto odds = quadratic_or(0.3, -0.1);
  EXPECT_NEAR(tilted_mean_y(kX0, beta, odds), 0.7236024844720498, 1e-10);
  EXPECT_NEAR(tilted_normalizer(kX0, beta, odds), 1.021033076263248, 1e-10);
  EXPECT_NEAR(tilted_mean_z_power(2, kX0, beta, odds), 1.9237378959145093, 1e-10);
  EXPECT_NEAR(tilted_mean_fn([](double z, double) { return z * z; }, kX0, beta, odds), 1.9237378959145093, 1e-10);
  EXPECT_THROW(tilted_mean_y(kX0, beta, odds, TiltMethod::closed_form), ConfigError);
}

TEST(Tilt, ConstantFunctionAndNullOddsRatio) {
  std::mt19937_64 gen(15);
  std::normal_distribution<double> nd(0.0, 1.0);
  for (int k = 0; k < 30; ++k) {
    BaselineOutcomeSpec beta;
    beta.beta_y = Vector::NullaryExpr(3, [&] { return nd(gen); });
    beta.beta_zx = Vector::NullaryExpr(3, [&] { return nd(gen); });
    beta.beta_zy = nd(gen);
    beta.sigma_y = 0.5 + std::abs(nd(gen));
    beta.sigma_z = 0.5 + std::abs(nd(gen));
    const std::vector<double> x{nd(gen), nd(gen)};
    const auto odds = k % 2 == 0 ? OddsRatioSpec::default_spec(nd(gen)) : quadratic_or(nd(gen), -0.2);
    EXPECT_NEAR(tilted_mean_fn([](double, double) { return 4.25; }, x, beta, odds), 4.25, 1e-12);
    EXPECT_EQ(tilted_mean_y(x, beta, OddsRatioSpec::default_spec(0.0)), beta.mean_y(x));
    // E[z | r=0, x] through the generic path equals the first-moment shortcut.
    EXPECT_NEAR(tilted_mean_fn([](double z, double) { return z; }, x, beta, odds),
                tilted_mean_z_power(1, x, beta, odds), 1e-9);
  }
}

TEST(Tilt, TiltedDensityIntegratesToOne) {
  // int e^OR f(y | r=1, x) dy by the trapezoid rule equals the quadrature normalizer,
  // so the tilted density e^OR f / normalizer has unit mass.
  const auto beta = constant_outcome(0.5, 1.2);
  for (const auto& odds : {OddsRatioSpec::default_spec(0.4), quadratic_or(0.3, -0.1), quadratic_or(-0.5, 0.05)}) {
    const double c = tilted_normalizer(kX0, beta, odds);
    const double mass = trapezoid(
        [&](double y) {
          const double e = (y - 0.5) / 1.2;
          return std::exp(odds_ratio(y, kX0, odds) - 0.5 * e * e) / (1.2 * std::sqrt(2 * std::numbers::pi));
        },
        -20.0, 21.0, 40000);
    EXPECT_NEAR(mass / c, 1.0, 1e-9);
  }
}

TEST(OutcomeModel, JointDensityIntegratesToOneOverCovariateGrid) {
  BaselineOutcomeSpec beta = constant_outcome(0.0, 0.8, 1.3, 0.2, 0.6);
  beta.beta_y << 0.3, 1.0, -0.5;
  beta.beta_zx << 0.2, 0.4, 0.1;
  for (double x1 : {-2.0, 0.0, 1.5}) {
    for (double x2 : {-1.0, 2.0}) {
      const std::vector<double> x{x1, x2};
      const double my = beta.mean_y(x);
      const double mass = trapezoid(
          [&](double y) {
            const double mz = beta.mean_z(y, x);
            return trapezoid([&](double z) { return std::exp(beta.log_density(z, y, x)); }, mz - 8.0, mz + 8.0, 400);
          },
          my - 8.0, my + 8.0, 400);
      EXPECT_NEAR(mass, 1.0, 1e-8);
    }
  }
  beta.sigma_y = 0.0;
  EXPECT_THROW(beta.validate(2), ConfigError);
}

TEST(ExtendedOutcome, ZeroPsiAndAdditiveShift) {
  std::mt19937_64 gen(16);
  std::normal_distribution<double> nd(0.0, 1.0);
  auto beta = constant_outcome(2.0, 1.0);
  const auto g0 = OddsRatioSpec::default_spec(0.0);
  EXPECT_DOUBLE_EQ(extended_outcome_mean(kX0, ExtendedOutcomeSpec{0.5, ScalarFeature::constant(1.0)}, beta, g0),
                   2.5);
  for (int k = 0; k < 200; ++k) {
    beta.beta_y = Vector::NullaryExpr(3, [&] { return nd(gen); });
    const auto odds = OddsRatioSpec::default_spec(nd(gen));
    const std::vector<double> x{nd(gen), nd(gen)};
    EXPECT_EQ(extended_outcome_mean(x, ExtendedOutcomeSpec{}, beta, odds), tilted_mean_y(x, beta, odds));
    const ExtendedOutcomeSpec lo{-0.5, ScalarFeature::parse("x1^2", 2)};
    const ExtendedOutcomeSpec hi{0.5, ScalarFeature::parse("x1^2", 2)};
    if (x[0] != 0.0) {
      EXPECT_LT(extended_outcome_mean(x, lo, beta, odds), extended_outcome_mean(x, hi, beta, odds));
    }
  }
}

TEST(ScalarFeature, Parsing) {
  const std::vector<double> x{3.0, -2.0};
  EXPECT_EQ(ScalarFeature::parse("1", 2)(x), 1.0);
  EXPECT_EQ(ScalarFeature::parse("0.5", 2)(x), 0.5);
  EXPECT_EQ(ScalarFeature::parse("x2", 2)(x), -2.0);
  EXPECT_EQ(ScalarFeature::parse("x1^2", 2)(x), 9.0);
  EXPECT_THROW(ScalarFeature::parse("x3", 2), ConfigError);
  EXPECT_THROW(ScalarFeature::parse("x1^3", 2), ConfigError);
}
