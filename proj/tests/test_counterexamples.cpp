#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "maskident/counterexamples.hpp"
#include "maskident/error.hpp"
#include "oracles.hpp"

using namespace maskident;

namespace {

// Angle of the rotation about (1,1,1)/sqrt(3) closest to pinv(O) Õ.
double fitted_angle(const Matrix& o, const Matrix& o_alt) {
  const Matrix r = pinv(o) * o_alt;
  const double c = (r.trace() - 1.0) / 2.0;
  const Vector axis = Vector::Constant(3, 1.0 / std::numbers::sqrt3);
  const Vector skew{{r(2, 1) - r(1, 2), r(0, 2) - r(2, 0), r(1, 0) - r(0, 1)}};
  const double s = axis.dot(skew) / 2.0;
  return std::atan2(s, c);
}

// A random base with symmetric T and emission rows summing to 3/d: the
// uniform emission plus a doubly centred perturbation.
HmmParams structured_base(Index d, std::uint64_t seed) {
  Rng rng(seed);
  const auto centre = [](Index n) {
    return Matrix(Matrix::Identity(n, n) - Matrix::Constant(n, n, 1.0 / static_cast<double>(n)));
  };
  const Matrix z = centre(d) * rng.normal_matrix(d, 3) * centre(3);
  HmmParams p;
  const double base = 1.0 / static_cast<double>(d);
  p.emission = Matrix::Constant(d, 3, base) + (0.6 * base / z.cwiseAbs().maxCoeff()) * z;
  p.transition = random_doubly_stochastic(3, rng, true);
  return p;
}

// Rows close to the simplex vertices, so small rotations leave [0,1].
HmmParams peaked_base() {
  Matrix o(3, 3);
  o << 0.9, 0.06, 0.04, 0.04, 0.9, 0.06, 0.06, 0.04, 0.9;
  Matrix t(3, 3);
  t << 0.8, 0.1, 0.1, 0.1, 0.8, 0.1, 0.1, 0.1, 0.8;
  return {o, t};
}

}  // namespace

// -----------------------------------------------------------------------------
// Simplex rotation

TEST(SimplexRotation, RowsAndColumnsSumToOne) {
  for (double theta : {0.0, 0.1, -0.4, 1.0, 3.0}) {
    const Matrix r = simplex_rotation(theta);
    EXPECT_LT(oracles::max_abs(r.rowwise().sum() - Vector::Ones(3)), 1e-12);
    EXPECT_LT(oracles::max_abs(r.colwise().sum().transpose() - Vector::Ones(3)), 1e-12);
    EXPECT_LT(oracles::max_abs(r * r.transpose() - Matrix::Identity(3, 3)), 1e-14);
    EXPECT_NEAR(r.determinant(), 1.0, 1e-14);
  }
}

TEST(SimplexRotationPair, ZeroAngleIsNotDistinct) {
  const HmmParams base = *fixture(FixtureName::SimplexBase).original;
  const CounterexamplePair pair = simplex_rotation_pair(base, 0.0, 1e-6);
  const CounterexampleReport report = validate_counterexample(pair);
  EXPECT_TRUE(report.predictors_equal);
  EXPECT_FALSE(report.distinct);
  EXPECT_FALSE(report.passed);
}

TEST(SimplexRotationPair, ReproducesStoredAlternative) {
  const FixtureBundle a = fixture(FixtureName::PairwiseHmmCounterexample);
  const double theta = fitted_angle(a.original->emission, a.alternative->emission);
  const CounterexamplePair pair = simplex_rotation_pair(*a.original, theta, 1e-6);
  const HmmParams& alt = std::get<HmmParams>(pair.alternative);
  EXPECT_LE(oracles::max_abs(alt.emission - a.alternative->emission), 1e-6) << "theta " << theta;
  EXPECT_LE(oracles::max_abs(alt.transition - a.alternative->transition), 1e-6) << "theta " << theta;
}

TEST(SimplexRotationPair, StructureIsChecked) {
  const HmmParams base = *fixture(FixtureName::SimplexBase).original;
  EXPECT_NO_THROW(simplex_rotation_pair(base, 0.05));
  HmmParams shifted = base;
  shifted.emission(0, 0) += 0.01;
  shifted.emission(1, 0) -= 0.01;
  EXPECT_THROW(simplex_rotation_pair(shifted, 0.05, 1e-6), Error);
  HmmParams skewed = base;
  skewed.transition(0, 1) += 0.01;
  skewed.transition(1, 1) -= 0.01;
  EXPECT_THROW(simplex_rotation_pair(skewed, 0.05, 1e-6), Error);
}

TEST(SimplexRotationPair, RandomStructuredBase) {
  const HmmParams base = structured_base(5, 3);
  ASSERT_TRUE(validate_hmm(base, 1e-10).ok()) << validate_hmm(base, 1e-10).summary();
  const CounterexamplePair pair = simplex_rotation_pair(base, 0.05);
  const CounterexampleReport report = validate_counterexample(pair);
  EXPECT_TRUE(report.passed) << report.params_summary << " discrepancy " << report.max_discrepancy
                             << " distance " << report.parameter_distance;
  const HmmParams& alt = std::get<HmmParams>(pair.alternative);
  EXPECT_LT(oracles::max_abs(alt.emission.rowwise().sum() - Vector::Constant(5, 0.6)), 1e-10);
}

TEST(SimplexRotationPair, AngleTooLargeReportsLimit) {
  const HmmParams base = peaked_base();
  const double limit = max_feasible_simplex_angle(base, 1.0);
  ASSERT_GT(limit, 0.0);
  ASSERT_LT(limit, std::numbers::pi / 3.0);
  try {
    simplex_rotation_pair(base, std::min(limit * 1.5, std::numbers::pi / 3.0));
    FAIL();
  } catch (const AngleTooLargeError& e) {
    EXPECT_EQ(e.kind(), ErrorKind::AngleTooLarge);
    EXPECT_NEAR(e.max_feasible(), limit, 1e-12);
  }
  EXPECT_NO_THROW(simplex_rotation_pair(base, 0.999 * limit));
}

TEST(SimplexRotationPair, NegativeDirection) {
  const HmmParams base = peaked_base();
  const double limit = max_feasible_simplex_angle(base, -1.0);
  EXPECT_LT(limit, 0.0);
  EXPECT_GT(limit, -std::numbers::pi / 3.0);
  EXPECT_NO_THROW(simplex_rotation_pair(base, 0.999 * limit));
}

// -----------------------------------------------------------------------------
// Stored pair

TEST(FixturePair, Determinants) {
  const FixtureBundle a = fixture(FixtureName::PairwiseHmmCounterexample);
  EXPECT_NEAR(volume(a.original->emission), 0.0110, 5e-4);
  EXPECT_NEAR(volume(a.alternative->emission), 0.0110, 5e-4);
  EXPECT_NEAR(a.original->transition.determinant(), -0.1611, 5e-4);
  EXPECT_NEAR(a.alternative->transition.determinant(), -0.1611, 5e-4);
}

TEST(FixturePair, Validates) {
  const FixtureBundle a = fixture(FixtureName::PairwiseHmmCounterexample);
  const CounterexamplePair pair{*a.original, *a.alternative,
                                {MaskedTask::parse("x2|x1"), MaskedTask::parse("x1|x2"),
                                 MaskedTask::parse("x3|x1"), MaskedTask::parse("x1|x3")},
                                "fixture_pair", std::nullopt};
  ValidationOptions options;
  options.tolerance = 1e-6;
  const CounterexampleReport report = validate_counterexample(pair, options);
  EXPECT_TRUE(report.passed) << report.params_summary;
  EXPECT_LE(report.max_discrepancy, 1e-6);
  EXPECT_GE(report.emission_distance, 0.01);
}

TEST(Validator, SameParamsAreNotDistinct) {
  const HmmParams p = random_hmm(4, 3, 1);
  const CounterexamplePair pair{p, p, {MaskedTask::parse("x2|x1")}, "same", std::nullopt};
  const CounterexampleReport report = validate_counterexample(pair);
  EXPECT_TRUE(report.predictors_equal);
  EXPECT_EQ(report.parameter_distance, 0.0);
  EXPECT_FALSE(report.distinct);
  EXPECT_FALSE(report.passed);
}

TEST(Validator, PermutedParamsAreNotDistinct) {
  const HmmParams p = random_hmm(4, 3, 1);
  const std::vector<Index> perm{2, 0, 1};
  const HmmParams q{permute_columns(p.emission, perm),
                    permute_columns(permute_columns(p.transition, perm).transpose(), perm).transpose()};
  const CounterexamplePair pair{p, q, {MaskedTask::parse("x2|x1")}, "relabelled", std::nullopt};
  const CounterexampleReport report = validate_counterexample(pair);
  EXPECT_LT(report.max_discrepancy, 1e-14);
  EXPECT_LT(report.parameter_distance, 1e-14);
  EXPECT_FALSE(report.passed);
}

TEST(Validator, DifferentModelsAreDetected) {
  const HmmParams p = random_hmm(4, 3, 1), q = random_hmm(4, 3, 2);
  const CounterexamplePair pair{p, q, {MaskedTask::parse("x2|x1")}, "unrelated", std::nullopt};
  const CounterexampleReport report = validate_counterexample(pair);
  EXPECT_FALSE(report.predictors_equal);
  EXPECT_TRUE(report.distinct);
  EXPECT_FALSE(report.passed);
}

TEST(Validator, InvalidParamsAreReported) {
  HmmParams p = random_hmm(4, 3, 1);
  p.transition(0, 0) += 0.1;
  const CounterexamplePair pair{p, random_hmm(4, 3, 2), {MaskedTask::parse("x2|x1")}, "bad", std::nullopt};
  const CounterexampleReport report = validate_counterexample(pair);
  EXPECT_FALSE(report.params_valid);
  EXPECT_NE(report.params_summary.find("original"), std::string::npos);
  EXPECT_FALSE(report.passed);
}

// -----------------------------------------------------------------------------
// Power construction

TEST(PowerRotation, UnitPowerIsIdentity) {
  const CounterexamplePair pair = power_rotation_pair(1);
  const CounterexampleReport report = validate_counterexample(pair);
  EXPECT_LT(oracles::max_abs(std::get<HmmParams>(pair.alternative).transition -
                             std::get<HmmParams>(pair.original).transition),
            1e-12);
  EXPECT_FALSE(report.distinct);
  EXPECT_FALSE(report.passed);
}

TEST(PowerRotation, FourthPower) {
  const CounterexamplePair pair = power_rotation_pair(4);
  const Matrix& t = std::get<HmmParams>(pair.original).transition;
  const Matrix& alt = std::get<HmmParams>(pair.alternative).transition;
  EXPECT_LE(oracles::max_abs(matrix_power(t, 4) - matrix_power(alt, 4)), 1e-10);
  EXPECT_GE(oracles::max_abs(t - alt), 1e-3);
}

TEST(PowerRotation, FeasibleRangeAndExactGap) {
  for (int t = 2; t <= 10; ++t) {
    const CounterexamplePair pair = power_rotation_pair(t);
    const Matrix& tr = std::get<HmmParams>(pair.original).transition;
    const Matrix& alt = std::get<HmmParams>(pair.alternative).transition;
    EXPECT_GE(alt.minCoeff(), -1e-12) << t;
    EXPECT_LE(doubly_stochastic_residual(alt), 1e-10) << t;
    EXPECT_LE(power_commutation_residual(t), 1e-10) << t;
    EXPECT_LE(oracles::max_abs(matrix_power(tr, t) - matrix_power(alt, t)), 1e-10) << t;
    for (int s = 1; s < t; ++s)
      EXPECT_GE(oracles::max_abs(matrix_power(tr, s) - matrix_power(alt, s)), 1e-4) << t << " " << s;
    const CounterexampleReport report = validate_counterexample(pair);
    EXPECT_TRUE(report.passed) << t << ": " << report.params_summary << " " << report.max_discrepancy;
  }
}

TEST(PowerRotation, SquareWithOtherEmission) {
  const HmmParams other = random_hmm(5, 3, 4);
  const CounterexamplePair pair = power_rotation_pair(2, 0.5, other.emission);
  CounterexamplePair single = pair;
  single.tasks = {MaskedTask::parse("x3|x1")};
  ValidationOptions options;
  options.tolerance = 1e-10;
  const CounterexampleReport report = validate_counterexample(single, options);
  EXPECT_LE(report.max_discrepancy, 1e-10);
  EXPECT_TRUE(report.passed);
}

TEST(PowerRotation, AdjacentTaskDistinguishes) {
  CounterexamplePair pair = power_rotation_pair(3);
  pair.tasks = {MaskedTask::parse("x2|x1")};
  EXPECT_FALSE(validate_counterexample(pair).predictors_equal);
}

TEST(PowerRotation, InfeasibleParameters) {
  try {
    power_rotation_pair(2, 0.8);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::InfeasiblePower);
  }
  EXPECT_THROW(power_rotation_pair(3, 1.5), Error);
  EXPECT_THROW(power_rotation_pair(0), Error);
}

TEST(PowerRotation, GaussianVariant) {
  for (int t = 2; t <= 5; ++t) {
    const CounterexampleReport report = validate_counterexample(power_rotation_pair_gaussian(t));
    EXPECT_TRUE(report.passed) << t << ": " << report.params_summary << " " << report.max_discrepancy;
  }
}

// -----------------------------------------------------------------------------
// Householder certificate

TEST(Householder, OrthonormalPair) {
  Matrix t(2, 2);
  t << 0.7, 0.3, 0.3, 0.7;
  const GhmmParams p{Matrix::Identity(2, 2), t};
  const HouseholderCertificate cert = householder_certificate(p);
  EXPECT_LT(oracles::max_abs(cert.v_hat - Vector::Constant(2, 1.0 / std::numbers::sqrt2)), 1e-15);
  Matrix h(2, 2);
  h << 0.0, -1.0, -1.0, 0.0;
  EXPECT_LT(oracles::max_abs(cert.h - h), 1e-15);
  EXPECT_LT(oracles::max_abs(cert.reflected_means - h), 1e-15);
  EXPECT_LT(oracles::max_abs(cert.column_sums - Vector::Constant(2, -1.0)), 1e-12);
  EXPECT_TRUE(cert.verified);
}

TEST(Householder, RandomInstances) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const GhmmParams p = random_ghmm(3 + static_cast<Index>(seed % 3), 2 + static_cast<Index>(seed % 2), seed);
    const HouseholderCertificate cert = householder_certificate(p);
    EXPECT_LE(cert.involution_residual, 1e-12);
    EXPECT_NEAR(cert.v_hat.norm(), 1.0, 1e-15);
    EXPECT_TRUE(cert.verified) << "seed " << seed;
    EXPECT_LE(householder_posterior_gap(p, cert, 100, seed), 1e-10);
    // The reflected model's induced transition is never stochastic.
    const GhmmParams reflected{cert.reflected_means, pinv(cert.reflected_means) * p.means * p.transition};
    EXPECT_FALSE(validate_ghmm(reflected, 1e-6).ok());
  }
}
