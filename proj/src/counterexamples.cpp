#include "maskident/counterexamples.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>
#include <tuple>

#include "maskident/error.hpp"

namespace maskident {

namespace {

constexpr double kPowerCommutationTolerance = 1e-10;
constexpr double kPowerNegativeTolerance = 1e-12;

MaskedTask task_of(std::vector<int> predicted, std::vector<int> conditioned) {
  return MaskedTask{std::move(predicted), std::move(conditioned)};
}

std::vector<MaskedTask> pairwise_tasks() {
  return {task_of({2}, {1}), task_of({1}, {2}), task_of({3}, {1}), task_of({1}, {3})};
}

std::vector<MaskedTask> power_tasks(int t) {
  return {task_of({1 + t}, {1}), task_of({1}, {1 + t}), task_of({1 + t, 1 + 2 * t}, {1})};
}

bool in_unit_interval(const Matrix& m) { return m.minCoeff() >= 0.0 && m.maxCoeff() <= 1.0; }

bool simplex_feasible(const HmmParams& base, double theta) {
  const Matrix r = simplex_rotation(theta);
  return in_unit_interval(base.emission * r) && in_unit_interval(r.transpose() * base.transition * r);
}

Matrix power_rotation(int t) {
  const Matrix m = power_fixture_basis();
  return m.inverse() * planar_rotation(2.0 * std::numbers::pi / t).transpose() * m;
}

Matrix checked_power_alternative(int t, double a) {
  if (t < 1) throw Error(ErrorKind::InvalidParams, "power construction needs t >= 1");
  if (!(a >= 0.0 && a <= 1.0)) throw Error(ErrorKind::InvalidParams, "power construction needs a in [0,1]");
  const double residual = power_commutation_residual(t, a);
  if (residual > kPowerCommutationTolerance)
    throw Error(ErrorKind::Inconsistent, "rotation does not commute with T (residual " + std::to_string(residual) + ")");
  const Matrix alt = power_rotation(t) * power_fixture_transition(a);
  if (alt.minCoeff() < -kPowerNegativeTolerance) {
    std::ostringstream msg;
    msg << "(t=" << t << ", a=" << a << ") gives an entry " << alt.minCoeff() << " below zero";
    throw Error(ErrorKind::InfeasiblePower, msg.str());
  }
  return alt;
}

}  // namespace

Matrix simplex_rotation(double theta) {
  const Vector u = Vector::Constant(3, 1.0 / std::numbers::sqrt3);
  Matrix cross(3, 3);
  cross << 0.0, -u(2), u(1),
           u(2), 0.0, -u(0),
           -u(1), u(0), 0.0;
  return std::cos(theta) * Matrix::Identity(3, 3) + std::sin(theta) * cross +
         (1.0 - std::cos(theta)) * u * u.transpose();
}

double max_feasible_simplex_angle(const HmmParams& base, double direction) {
  const double sign = direction < 0.0 ? -1.0 : 1.0;
  double lo = 0.0, hi = std::numbers::pi / 3.0;
  if (simplex_feasible(base, sign * hi)) return sign * hi;
  for (int iter = 0; iter < 60; ++iter) {
    const double mid = 0.5 * (lo + hi);
    (simplex_feasible(base, sign * mid) ? lo : hi) = mid;
  }
  return sign * lo;
}

CounterexamplePair simplex_rotation_pair(const HmmParams& base, double theta, double structure_tolerance) {
  if (base.k() != 3) throw Error(ErrorKind::InvalidParams, "simplex rotation needs k = 3");
  if (base.transition.rows() != 3 || base.transition.cols() != 3)
    throw Error(ErrorKind::Shape, "transition must be 3 x 3");
  const double asymmetry = max_abs(base.transition - base.transition.transpose());
  if (asymmetry > structure_tolerance)
    throw Error(ErrorKind::InvalidParams, "transition is not symmetric (" + std::to_string(asymmetry) + ")");
  const double target = 3.0 / static_cast<double>(base.d());
  const double row_error = (base.emission.rowwise().sum().array() - target).abs().maxCoeff();
  if (row_error > structure_tolerance)
    throw Error(ErrorKind::InvalidParams,
                "emission rows do not sum to k/d (deviation " + std::to_string(row_error) + ")");

  const Matrix r = simplex_rotation(theta);
  HmmParams alt{base.emission * r, r.transpose() * base.transition * r};
  if (!in_unit_interval(alt.emission) || !in_unit_interval(alt.transition)) {
    const double limit = max_feasible_simplex_angle(base, theta);
    std::ostringstream msg;
    msg << "theta " << theta << " pushes an entry outside [0,1]; largest feasible angle " << limit;
    throw AngleTooLargeError(msg.str(), limit);
  }
  return {base, alt, pairwise_tasks(), "simplex_rotation", theta};
}

double power_commutation_residual(int t, double a) {
  const Matrix q = power_rotation(t), tr = power_fixture_transition(a);
  return max_abs(q * tr - tr * q);
}

CounterexamplePair power_rotation_pair(int t, double a, std::optional<Matrix> emission) {
  const Matrix alt = checked_power_alternative(t, a);
  const Matrix o = emission ? *emission : fixture(FixtureName::PairwiseHmmCounterexample).original->emission;
  if (o.cols() != 3) throw Error(ErrorKind::Shape, "power construction needs a 3-column emission");
  return {HmmParams{o, power_fixture_transition(a)}, HmmParams{o, alt}, power_tasks(t), "power_rotation",
          2.0 * std::numbers::pi / t};
}

CounterexamplePair power_rotation_pair_gaussian(int t, double a, std::optional<Matrix> means) {
  const Matrix alt = checked_power_alternative(t, a);
  const Matrix m = means ? *means : Matrix(Matrix::Identity(3, 3));
  if (m.cols() != 3) throw Error(ErrorKind::Shape, "power construction needs 3 means");
  return {GhmmParams{m, power_fixture_transition(a)}, GhmmParams{m, alt}, power_tasks(t), "power_rotation_gaussian",
          2.0 * std::numbers::pi / t};
}

HouseholderCertificate householder_certificate(const GhmmParams& params) {
  const Matrix& m = params.means;
  const Index d = m.rows(), k = m.cols();
  HouseholderCertificate cert;
  cert.v_hat = pinv(m).transpose() * Vector::Ones(k);
  cert.v_hat.normalize();
  cert.h = Matrix::Identity(d, d) - 2.0 * cert.v_hat * cert.v_hat.transpose();
  cert.reflected_means = cert.h * m;
  cert.column_sums = (pinv(cert.reflected_means) * m * params.transition).colwise().sum().transpose();

  cert.involution_residual = max_abs(cert.h * cert.h - Matrix::Identity(d, d));
  cert.unit_norm_residual = (cert.reflected_means.colwise().norm().array() - 1.0).abs().maxCoeff();
  const Matrix shift = cert.reflected_means - m;
  cert.translation_residual = max_abs(shift.colwise() - shift.col(0));
  cert.column_sum_residual = (cert.column_sums.array() + 1.0).abs().maxCoeff();
  cert.verified = cert.involution_residual <= 1e-12 && cert.unit_norm_residual <= 1e-10 &&
                  cert.translation_residual <= 1e-10 && cert.column_sum_residual <= 1e-8;
  return cert;
}

double householder_posterior_gap(const GhmmParams& params, const HouseholderCertificate& cert, Index points,
                                 std::uint64_t seed) {
  const GhmmParams reflected{cert.reflected_means, params.transition};
  Rng rng(seed);
  double gap = 0.0;
  for (Index i = 0; i < points; ++i) {
    const Vector x = 2.0 * rng.normal_vector(params.d());
    gap = std::max(gap, max_abs(posterior_gaussian(params, x) - posterior_gaussian(reflected, x)));
  }
  return gap;
}

namespace {

double discrete_discrepancy(const HmmParams& a, const HmmParams& b, const MaskedTask& task) {
  const Index d = a.d();
  const std::size_t n = task.conditioned.size();
  std::vector<Index> input(n, 0);
  double worst = 0.0;
  for (;;) {
    try {
      worst = std::max(worst, max_abs(predict(a, task, input) - predict(b, task, input)));
    } catch (const Error& e) {
      // Inputs of zero probability under both models have no predictor.
      if (e.kind() != ErrorKind::Degeneracy) throw;
    }
    std::size_t pos = 0;
    while (pos < n && ++input[pos] == d) input[pos++] = 0;
    if (pos == n) break;
  }
  return worst;
}

double gaussian_discrepancy(const GhmmParams& a, const GhmmParams& b, const MaskedTask& task, Index points,
                            std::uint64_t seed) {
  Rng rng(seed);
  double worst = 0.0;
  for (Index i = 0; i < points; ++i) {
    const Vector x = rng.normal_vector(a.d());
    const std::span<const Vector> input(&x, 1);
    worst = std::max(worst, max_abs(predict(a, task, input) - predict(b, task, input)));
  }
  return worst;
}

std::pair<double, double> permutation_distances(const Matrix& o, const Matrix& t, const Matrix& o_alt,
                                                const Matrix& t_alt) {
  double best_emission = std::numeric_limits<double>::infinity();
  double best_total = std::numeric_limits<double>::infinity();
  for (const auto& perm : all_permutations(o.cols())) {
    const Matrix op = permute_columns(o, perm);
    const Matrix tp = permute_columns(permute_columns(t, perm).transpose(), perm).transpose();
    const double e = (o_alt - op).squaredNorm();
    best_emission = std::min(best_emission, std::sqrt(e));
    best_total = std::min(best_total, std::sqrt(e + (t_alt - tp).squaredNorm()));
  }
  return {best_emission, best_total};
}

}  // namespace

CounterexampleReport validate_counterexample(const CounterexamplePair& pair, const ValidationOptions& options) {
  CounterexampleReport report;
  if (pair.original.index() != pair.alternative.index()) {
    report.params_summary = "original and alternative are different model kinds";
    return report;
  }
  try {
    const ValidationReport a = validate(pair.original, options.params_tolerance);
    const ValidationReport b = validate(pair.alternative, options.params_tolerance);
    report.params_valid = a.ok() && b.ok();
    if (!a.ok()) report.params_summary += "original: " + a.summary();
    if (!b.ok()) report.params_summary += (report.params_summary.empty() ? "" : "; ") + ("alternative: " + b.summary());

    const auto* ha = std::get_if<HmmParams>(&pair.original);
    std::uint64_t task_index = 0;
    for (const MaskedTask& task : pair.tasks) {
      const double gap =
          ha != nullptr
              ? discrete_discrepancy(*ha, std::get<HmmParams>(pair.alternative), task)
              : gaussian_discrepancy(std::get<GhmmParams>(pair.original), std::get<GhmmParams>(pair.alternative),
                                     task, options.gaussian_points, stream_seed(options.seed, task_index));
      ++task_index;
      report.task_discrepancy.emplace_back(task.to_string(), gap);
      report.max_discrepancy = std::max(report.max_discrepancy, gap);
    }
    const auto [o, t] = ha != nullptr ? std::pair{ha->emission, ha->transition}
                                      : std::pair{std::get<GhmmParams>(pair.original).means,
                                                  std::get<GhmmParams>(pair.original).transition};
    const auto [o_alt, t_alt] =
        ha != nullptr ? std::pair{std::get<HmmParams>(pair.alternative).emission,
                                  std::get<HmmParams>(pair.alternative).transition}
                      : std::pair{std::get<GhmmParams>(pair.alternative).means,
                                  std::get<GhmmParams>(pair.alternative).transition};
    if (o.rows() != o_alt.rows() || o.cols() != o_alt.cols())
      throw Error(ErrorKind::Shape, "original and alternative differ in shape");
    std::tie(report.emission_distance, report.parameter_distance) = permutation_distances(o, t, o_alt, t_alt);
  } catch (const Error& e) {
    report.params_summary += (report.params_summary.empty() ? "" : "; ") + std::string(e.what());
    return report;
  }
  report.predictors_equal = !pair.tasks.empty() && report.max_discrepancy <= options.tolerance;
  report.distinct = report.parameter_distance >= options.distinctness;
  report.passed = report.params_valid && report.predictors_equal && report.distinct;
  return report;
}

}  // namespace maskident
