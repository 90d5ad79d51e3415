#include <charconv>
#include <cmath>
#include <numbers>
#include <string>

#include "maskident/error.hpp"
#include "maskident/models.hpp"

namespace maskident {

namespace {

// d=4, k=3 pair producing identical pairwise predictors; constants kept at
// their printed 8-digit precision.
HmmParams fixture_a_original() {
  HmmParams p;
  p.emission.resize(4, 3);
  p.emission << 0.23016003, 0.3549092, 0.16493077,
                0.30716059, 0.06962305, 0.37321636,
                0.2580854, 0.26965425, 0.22226035,
                0.20459398, 0.3058135, 0.23959252;
  p.transition.resize(3, 3);
  p.transition << 0.56893146, 0.35811118, 0.07295736,
                  0.35811118, 0.10805638, 0.53383243,
                  0.07295736, 0.53383243, 0.39321021;
  return p;
}

HmmParams fixture_a_alternative() {
  HmmParams p;
  p.emission.resize(4, 3);
  p.emission << 0.24120928, 0.35062535, 0.15816537,
                0.28937626, 0.07433156, 0.38629218,
                0.26077674, 0.26749114, 0.22173212,
                0.20863772, 0.30755194, 0.23381033;
  p.transition.resize(3, 3);
  p.transition << 0.59740926, 0.30452087, 0.09806987,
                  0.30452087, 0.1331689, 0.56231024,
                  0.09806987, 0.56231024, 0.33961989;
  return p;
}

}  // namespace

Matrix power_fixture_transition(double a) {
  Matrix t(3, 3);
  t << a, 0.0, 1.0 - a,
       1.0 - a, a, 0.0,
       0.0, 1.0 - a, a;
  return t;
}

Matrix power_fixture_basis() {
  const double h = std::numbers::sqrt3 / 2.0;
  const double r = 1.0 / std::numbers::sqrt2;
  Matrix m(3, 3);
  m << 1.0, -0.5, -0.5,
       0.0, -h, h,
       r, r, r;
  return m;
}

Matrix planar_rotation(double theta) {
  Matrix r = Matrix::Identity(3, 3);
  r(0, 0) = std::cos(theta);
  r(0, 1) = -std::sin(theta);
  r(1, 0) = std::sin(theta);
  r(1, 1) = std::cos(theta);
  return r;
}

FixtureBundle fixture(FixtureName name, int power) {
  FixtureBundle bundle;
  switch (name) {
    case FixtureName::PairwiseHmmCounterexample:
      bundle.name = "pairwise_hmm_counterexample";
      bundle.original = fixture_a_original();
      bundle.alternative = fixture_a_alternative();
      return bundle;
    case FixtureName::SimplexBase:
      bundle.name = "simplex_base";
      bundle.original = fixture_a_original();
      return bundle;
    case FixtureName::PowerCounterexample: {
      if (power < 1) throw Error(ErrorKind::UnknownFixture, "power_counterexample needs t >= 1");
      bundle.name = "power_counterexample(" + std::to_string(power) + ")";
      const double theta = 2.0 * std::numbers::pi / power;
      const Matrix m = power_fixture_basis();
      bundle.basis = m;
      bundle.transition = power_fixture_transition(0.5);
      // R(theta)^-1 = R(theta)^T for a rotation.
      bundle.rotation = m.inverse() * planar_rotation(theta).transpose() * m;
      bundle.alt_transition = bundle.rotation * bundle.transition;
      bundle.theta = theta;
      bundle.power = power;
      return bundle;
    }
  }
  throw Error(ErrorKind::UnknownFixture, "unrecognised fixture");
}

FixtureBundle fixture(std::string_view name) {
  if (name == "pairwise_hmm_counterexample") return fixture(FixtureName::PairwiseHmmCounterexample);
  if (name == "simplex_base") return fixture(FixtureName::SimplexBase);
  constexpr std::string_view prefix = "power_counterexample(";
  if (name.starts_with(prefix) && name.ends_with(")")) {
    const std::string_view digits = name.substr(prefix.size(), name.size() - prefix.size() - 1);
    int t = 0;
    const auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), t);
    if (ec == std::errc() && ptr == digits.data() + digits.size())
      return fixture(FixtureName::PowerCounterexample, t);
  }
  throw Error(ErrorKind::UnknownFixture,
              "'" + std::string(name) +
                  "' (expected pairwise_hmm_counterexample, simplex_base or power_counterexample(t))");
}

}  // namespace maskident
