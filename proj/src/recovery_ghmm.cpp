#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "maskident/error.hpp"
#include "recovery_internal.hpp"

namespace maskident {

using detail::Stopwatch;

namespace {

constexpr int kProbeResamples = 20;
constexpr int kClusterIterations = 50;
constexpr double kMinCenterDistance = 1e-3;
constexpr double kRepeatDistance = 1e-6;
constexpr double kMatchTolerance = 1e-8;
constexpr double kLogitConstantTolerance = 1e-6;
constexpr double kSignEntryTolerance = 1e-8;
constexpr double kHouseholderTolerance = 1e-6;
constexpr int kDensityAttempts = 20;
constexpr double kMaxProbeCondition = 1e6;

Matrix evaluate(const GaussianOracle& oracle, const Vector& x) {
  if (x.size() != oracle.d) throw Error(ErrorKind::Shape, "probe dimension mismatch");
  return oracle.evaluate(std::span<const Vector>(&x, 1));
}

std::vector<Vector> gaussian_probes(Rng& rng, Index n, Index d) {
  std::vector<Vector> probes;
  for (Index i = 0; i < n; ++i) probes.push_back(rng.normal_vector(d));
  return probes;
}

// Least-squares fit of log phi_j - log phi_0 = xᵀ delta_j + c_j. Returns the
// d x k matrix of delta_j (column 0 is zero); throws when some |c_j| is not
// negligible, which would contradict equal mean norms.
Matrix fit_mean_differences(const std::vector<Vector>& probes, const std::vector<Vector>& posteriors,
                            double& max_constant) {
  const Index n = static_cast<Index>(probes.size());
  const Index d = probes.front().size(), k = posteriors.front().size();
  Matrix design(n, d + 1), target(n, k);
  for (Index p = 0; p < n; ++p) {
    const Vector& phi = posteriors[static_cast<std::size_t>(p)];
    if (phi.minCoeff() <= 0.0) throw Error(ErrorKind::Degeneracy, "posterior underflow at a fit probe");
    design.row(p) << probes[static_cast<std::size_t>(p)].transpose(), 1.0;
    target.row(p) = (phi.array().log() - std::log(phi(0))).transpose();
  }
  const Matrix coef = design.colPivHouseholderQr().solve(target);
  max_constant = coef.row(d).cwiseAbs().maxCoeff();
  if (max_constant > kLogitConstantTolerance)
    throw Error(ErrorKind::Inconsistent,
                "log-posterior ratios carry a constant " + std::to_string(max_constant) +
                    "; means do not share a norm");
  return coef.topRows(d);
}

// The two unit-norm mean configurations inside span(basis) with the given
// differences mu_j - mu_0: M and its Householder reflection.
std::pair<Matrix, Matrix> mean_candidates(const Matrix& deltas, const Matrix& basis) {
  const Index k = deltas.cols();
  Matrix a(k - 1, k);
  Vector b(k - 1);
  for (Index j = 1; j < k; ++j) {
    a.row(j - 1) = 2.0 * deltas.col(j).transpose() * basis;
    b(j - 1) = -deltas.col(j).squaredNorm();
  }
  const Vector particular = pinv(a) * b;
  Eigen::JacobiSVD<Matrix> svd(a, Eigen::ComputeFullV);
  const Vector null = svd.matrixV().col(k - 1);
  const double t = std::sqrt(std::max(0.0, 1.0 - particular.squaredNorm()));
  const auto build = [&](double sign) {
    const Vector mu0 = basis * (particular + sign * t * null);
    Matrix m(deltas.rows(), k);
    for (Index j = 0; j < k; ++j) m.col(j) = mu0 + deltas.col(j);
    return m;
  };
  return {build(1.0), build(-1.0)};
}

double prediction_gap(const GhmmParams& candidate, const GaussianOracle& oracle,
                      const std::vector<Vector>& probes) {
  double gap = 0.0;
  for (const Vector& x : probes)
    gap = std::max(gap, max_abs(predict(candidate, oracle.task, std::span<const Vector>(&x, 1)) -
                                evaluate(oracle, x)));
  return gap;
}

// Column-sum normalised pinv(M) F, transposed when F sits before the pivot.
Matrix transition_candidate(const Matrix& means, const Matrix& adjacent, bool later) {
  const Matrix step = detail::normalise_column_sums(pinv(means) * adjacent);
  return later ? step : Matrix(step.transpose());
}

RecoveryReport ghmm_report(GhmmParams params, const char* method, std::uint64_t seed) {
  RecoveryReport report;
  report.recovered = std::move(params);
  report.method = method;
  report.seed = seed;
  return report;
}

// Coordinate-wise median of the given columns.
Vector coordinate_median(const std::vector<const Vector*>& points) {
  const Index d = points.front()->size();
  Vector out(d);
  std::vector<double> values(points.size());
  for (Index c = 0; c < d; ++c) {
    for (std::size_t i = 0; i < points.size(); ++i) values[i] = (*points[i])(c);
    const auto mid = values.begin() + static_cast<std::ptrdiff_t>(values.size() / 2);
    std::nth_element(values.begin(), mid, values.end());
    double m = *mid;
    if (values.size() % 2 == 0) m = 0.5 * (m + *std::max_element(values.begin(), mid));
    out(c) = m;
  }
  return out;
}

// Points with another point within kRepeatDistance. Concentrated far-field
// outputs repeat; outputs from directions near a tie between states do not.
std::vector<Vector> repeated_points(const std::vector<Vector>& points) {
  std::vector<Vector> out;
  for (std::size_t i = 0; i < points.size(); ++i)
    for (std::size_t j = 0; j < points.size(); ++j)
      if (i != j && (points[i] - points[j]).norm() <= kRepeatDistance) {
        out.push_back(points[i]);
        break;
      }
  return out;
}

// Farthest-point seeding over repeated points followed by median refinement
// over all points.
Matrix cluster_centers(const std::vector<Vector>& points, Index k) {
  std::vector<Vector> seeds = repeated_points(points);
  if (seeds.empty()) seeds = points;
  std::vector<Vector> centers{seeds.front()};
  std::vector<double> nearest(seeds.size(), std::numeric_limits<double>::infinity());
  while (static_cast<Index>(centers.size()) < k) {
    std::size_t arg = 0;
    for (std::size_t i = 0; i < seeds.size(); ++i) {
      nearest[i] = std::min(nearest[i], (seeds[i] - centers.back()).squaredNorm());
      if (nearest[i] > nearest[arg]) arg = i;
    }
    centers.push_back(seeds[arg]);
  }
  for (int iter = 0; iter < kClusterIterations; ++iter) {
    std::vector<std::vector<const Vector*>> members(centers.size());
    for (const Vector& p : points) {
      std::size_t best = 0;
      for (std::size_t c = 1; c < centers.size(); ++c)
        if ((p - centers[c]).squaredNorm() < (p - centers[best]).squaredNorm()) best = c;
      members[best].push_back(&p);
    }
    bool moved = false;
    for (std::size_t c = 0; c < centers.size(); ++c) {
      if (members[c].empty()) continue;
      Vector next = coordinate_median(members[c]);
      moved = moved || next != centers[c];
      centers[c] = std::move(next);
    }
    if (!moved) break;
  }
  Matrix out(points.front().size(), k);
  for (Index c = 0; c < k; ++c) out.col(c) = centers[static_cast<std::size_t>(c)];
  return out;
}

double min_center_distance(const Matrix& centers) {
  double out = std::numeric_limits<double>::infinity();
  for (Index i = 0; i < centers.cols(); ++i)
    for (Index j = i + 1; j < centers.cols(); ++j) out = std::min(out, (centers.col(i) - centers.col(j)).norm());
  return out;
}

}  // namespace

RecoveryReport recover_ghmm_pairwise(const GaussianOracle& oracle, Index k, std::uint64_t seed,
                                     const GhmmPairwiseOptions& options) {
  const Stopwatch clock;
  const MaskedTask& task = oracle.task;
  check_task(task);
  if (task.predicted.size() != 1 || task.conditioned.size() != 1)
    throw Error(ErrorKind::UnsupportedTask, "pairwise recovery needs one predicted and one conditioned token");
  const int predicted = task.predicted[0], conditioned = task.conditioned[0];
  if (std::abs(predicted - conditioned) != 1)
    throw Error(ErrorKind::NonAdjacent, "task " + task.to_string() + " is not an adjacent pair");
  const Index d = oracle.d;
  if (k < 1 || k > d) throw Error(ErrorKind::Shape, "need 1 <= k <= d");

  if (k == 1) {
    GhmmParams params{evaluate(oracle, Vector::Zero(d)), Matrix::Ones(1, 1)};
    RecoveryReport report = ghmm_report(std::move(params), "far_field", seed);
    report.wall_ms = clock.ms();
    return report;
  }

  Rng rng(seed);
  // (1) Far-field outputs concentrate on the columns of M T.
  const Index directions = options.n_directions > 0 ? options.n_directions : 200 * k;
  std::vector<Vector> far;
  far.reserve(static_cast<std::size_t>(directions));
  for (Index i = 0; i < directions; ++i) {
    const Vector u = rng.normal_vector(d).normalized();
    far.push_back(evaluate(oracle, options.far_radius * u).col(0));
  }
  const Matrix centers = cluster_centers(far, k);
  const double separation = min_center_distance(centers);
  if (separation < kMinCenterDistance)
    throw Error(ErrorKind::ConcentrationFailure,
                "far-field outputs form fewer than k separated clusters (min distance " +
                    std::to_string(separation) + "); increase far_radius");

  // (2) Posterior at moderate probes, (3) mean differences from log ratios.
  const Matrix centers_pinv = pinv(centers);
  const std::vector<Vector> probes = gaussian_probes(rng, d + 5, d);
  std::vector<Vector> posteriors;
  for (const Vector& x : probes) {
    Vector phi = centers_pinv * evaluate(oracle, x).col(0);
    posteriors.push_back(phi / phi.sum());
  }
  double max_constant = 0.0;
  const Matrix deltas = fit_mean_differences(probes, posteriors, max_constant);

  // (4) Two unit-norm completions, (5) keep the one with stochastic T.
  const auto [first, second] = mean_candidates(deltas, leading_left_singular_vectors(centers, k));
  const Vector sums_first = (pinv(first) * centers).colwise().sum().transpose();
  const Vector sums_second = (pinv(second) * centers).colwise().sum().transpose();
  const double dev_first = (sums_first.array() - 1.0).abs().maxCoeff();
  const double dev_second = (sums_second.array() - 1.0).abs().maxCoeff();
  const bool ok_first = dev_first <= kHouseholderTolerance, ok_second = dev_second <= kHouseholderTolerance;
  if (ok_first == ok_second)
    throw Error(ErrorKind::Ambiguity, ok_first ? "both mean candidates give stochastic transitions"
                                               : "neither mean candidate gives a stochastic transition");
  const Matrix& means = ok_first ? first : second;
  const Vector& rejected_sums = ok_first ? sums_second : sums_first;

  Matrix step = pinv(means) * centers;
  detail::check_transition(step);
  GhmmParams params{means, predicted > conditioned ? step : Matrix(step.transpose())};

  RecoveryReport report = ghmm_report(std::move(params), "far_field", seed);
  report.diagnostics["cluster_separation"] = separation;
  report.diagnostics["logit_constant"] = max_constant;
  report.diagnostics["householder_column_sum_min"] = rejected_sums.minCoeff();
  report.diagnostics["householder_column_sum_max"] = rejected_sums.maxCoeff();
  report.diagnostics["householder_column_sum_deviation"] = (rejected_sums.array() + 1.0).abs().maxCoeff();
  report.wall_ms = clock.ms();
  return report;
}

RecoveryReport recover_ghmm_two_given_one(const GaussianOracle& oracle, Index k, std::uint64_t seed,
                                          const GhmmThreeTokenOptions& options) {
  const Stopwatch clock;
  const MaskedTask& task = oracle.task;
  check_task(task);
  if (task.predicted.size() != 2 || task.conditioned.size() != 1)
    throw Error(ErrorKind::UnsupportedTask, "three-token recovery needs two predicted and one conditioned token");
  const Index d = oracle.d;
  if (k < 2 || k > d) throw Error(ErrorKind::Precondition, "three-token G-HMM recovery needs 2 <= k <= d");

  const int pivot = pivot_time(task);
  const int conditioned = task.conditioned[0];
  // The factor pair that determines T: pivot and an adjacent predicted token
  // when the pivot is predicted; two predicted neighbours otherwise.
  int adjacent = -1;
  for (int t : task.predicted)
    if (std::abs(t - pivot) == 1 && (adjacent < 0 || t > adjacent)) adjacent = t;
  if (adjacent < 0)
    throw Error(ErrorKind::NonAdjacent,
                "task " + task.to_string() + " has no predicted token adjacent to the middle token");

  Rng rng(seed);
  const Index budget = options.probe_budget > 0 ? options.probe_budget
                       : options.initial_probes.empty() ? k
                                                        : static_cast<Index>(options.initial_probes.size());
  if (budget < k) throw Error(ErrorKind::Precondition, "probe budget below k");
  std::vector<Vector> probes = options.initial_probes;
  if (!probes.empty() && static_cast<Index>(probes.size()) != budget)
    throw Error(ErrorKind::Shape, "initial probe count does not match the probe budget");

  Tensor3 w;
  int resamples = 0;
  for (;; ++resamples) {
    if (probes.empty()) probes = gaussian_probes(rng, budget, d);
    w = Tensor3(budget, d, d);
    for (Index p = 0; p < budget; ++p) {
      const Matrix out = evaluate(oracle, probes[static_cast<std::size_t>(p)]);
      for (Index j = 0; j < d; ++j)
        for (Index l = 0; l < d; ++l) w(p, j, l) = out(j, l);
    }
    if (numerical_rank(w.unfold(0)) >= k) break;
    if (resamples == kProbeResamples)
      throw Error(ErrorKind::Precondition, "probe sets keep producing a rank-deficient tensor");
    probes.clear();
  }

  const Cpd cpd = jennrich(w, k, seed);
  const Matrix& factor_1 = cpd.b;  // time task.predicted[0]
  const Matrix& factor_2 = cpd.c;  // time task.predicted[1]
  const auto factor_at = [&](int t) -> const Matrix& { return t == task.predicted[0] ? factor_1 : factor_2; };
  const Matrix& adjacent_factor = factor_at(adjacent);
  const bool later = adjacent > pivot;

  // Extra probes to discriminate candidates against the oracle.
  std::vector<Vector> checks = probes;
  for (const Vector& x : gaussian_probes(rng, 3, d)) checks.push_back(x);

  struct Candidate {
    GhmmParams params;
    double gap;
  };
  std::vector<Candidate> valid;
  int patterns = 0;
  const auto consider = [&](const Matrix& means) {
    Matrix transition;
    try {
      transition = transition_candidate(means, adjacent_factor, later);
    } catch (const Error&) {
      return;
    }
    if (transition.minCoeff() < -kSignEntryTolerance) return;
    GhmmParams candidate{means, transition};
    valid.push_back({candidate, prediction_gap(candidate, oracle, checks)});
  };

  double max_constant = 0.0;
  if (conditioned != pivot) {
    // Pivot factor is M up to column signs; enumerate them.
    const Matrix& base = factor_at(pivot);
    for (std::uint32_t mask = 0; mask < (1u << k); ++mask) {
      ++patterns;
      Matrix means = base;
      for (Index j = 0; j < k; ++j)
        if (mask & (1u << j)) means.col(j) = -means.col(j);
      consider(means);
    }
  } else {
    // Conditioned token at the pivot: each output is sum_i phi_i(x) alpha_i
    // b_i c_iᵀ, so regressing on the rank-one basis exposes phi up to the
    // fixed scales alpha, which sum-to-one pins down across probes.
    Matrix basis(d * d, k);
    for (Index i = 0; i < k; ++i) {
      const Matrix outer = factor_1.col(i) * factor_2.col(i).transpose();
      basis.col(i) = Eigen::Map<const Vector>(outer.data(), d * d);
    }
    const auto qr = basis.colPivHouseholderQr();
    const std::vector<Vector> fit_probes = gaussian_probes(rng, d + 5 + k, d);
    Matrix coefficients(static_cast<Index>(fit_probes.size()), k);
    for (std::size_t p = 0; p < fit_probes.size(); ++p) {
      const Matrix out = evaluate(oracle, fit_probes[p]);
      coefficients.row(static_cast<Index>(p)) = qr.solve(Eigen::Map<const Vector>(out.data(), d * d)).transpose();
    }
    const Vector inverse_scale =
        coefficients.colPivHouseholderQr().solve(Vector::Ones(coefficients.rows()));
    std::vector<Vector> posteriors;
    for (Index p = 0; p < coefficients.rows(); ++p) {
      Vector phi = coefficients.row(p).transpose().cwiseProduct(inverse_scale);
      posteriors.push_back(phi / phi.sum());
    }
    const Matrix deltas = fit_mean_differences(fit_probes, posteriors, max_constant);
    const auto [first, second] = mean_candidates(deltas, leading_left_singular_vectors(adjacent_factor, k));
    patterns = 2;
    consider(first);
    consider(second);
  }

  if (valid.empty())
    throw Error(ErrorKind::SignResolution, "no sign assignment yields a nonnegative stochastic transition");
  std::sort(valid.begin(), valid.end(), [](const Candidate& a, const Candidate& b) { return a.gap < b.gap; });
  const auto best = valid.begin();
  // A second configuration that also reproduces the oracle is a genuine
  // ambiguity, not a sign choice to break by tie.
  if (valid.size() > 1 && valid[1].gap <= kMatchTolerance &&
      align_columns(best->params.means, valid[1].params.means, false, false).residual > kHouseholderTolerance)
    throw Error(ErrorKind::Ambiguity, "two mean configurations with stochastic transitions reproduce the oracle");
  detail::check_transition(best->params.transition);

  RecoveryReport report = ghmm_report(best->params, "jennrich_sign", seed);
  report.tensor_residual = cpd.residual;
  report.diagnostics["eigengap"] = cpd.eigengap;
  report.diagnostics["draws"] = cpd.attempts;
  report.diagnostics["probe_resamples"] = resamples;
  report.diagnostics["candidates_tried"] = patterns;
  report.diagnostics["candidates_valid"] = static_cast<double>(valid.size());
  report.diagnostics["oracle_gap"] = best->gap;
  if (conditioned == pivot) report.diagnostics["logit_constant"] = max_constant;
  report.wall_ms = clock.ms();
  return report;
}

DensityRecovery recover_T_from_conditional_density(const DensityOracle& density, const Matrix& means,
                                                   std::uint64_t seed) {
  const Index d = means.rows(), k = means.cols();
  if (k < 1 || k > d) throw Error(ErrorKind::Shape, "need 1 <= k <= d");
  DensityRecovery out;
  if (k == 1) {
    out.transition = Matrix::Ones(1, 1);
    out.attempts = 1;
    out.psi_condition = out.phi_condition = 1.0;
    return out;
  }
  const GhmmParams shape{means, Matrix::Identity(k, k)};  // only the means are read
  const double norm = std::pow(2.0 * std::numbers::pi, 0.5 * static_cast<double>(d));

  for (int attempt = 0; attempt < kDensityAttempts; ++attempt) {
    std::vector<Vector> probes;
    if (attempt == 0) {
      for (Index i = 0; i < k; ++i) probes.push_back(means.col(i));
    } else {
      Rng rng(stream_seed(seed, static_cast<std::uint64_t>(attempt)));
      const double scale = 1.0 + 0.25 * attempt;
      for (Index i = 0; i < k; ++i) probes.push_back(scale * means.col(i) + 0.1 * rng.normal_vector(d));
    }
    Matrix psi(k, k), phi(k, k), grid(k, k);
    for (Index a = 0; a < k; ++a) {
      psi.col(a) = component_likelihoods(shape, probes[static_cast<std::size_t>(a)]);
      phi.col(a) = posterior_gaussian(shape, probes[static_cast<std::size_t>(a)]);
    }
    out.attempts = attempt + 1;
    out.psi_condition = condition_number(psi);
    out.phi_condition = condition_number(phi);
    if (!(out.psi_condition <= kMaxProbeCondition) || !(out.phi_condition <= kMaxProbeCondition)) continue;

    for (Index a = 0; a < k; ++a)
      for (Index b = 0; b < k; ++b)
        grid(a, b) = norm * density(probes[static_cast<std::size_t>(b)], probes[static_cast<std::size_t>(a)]);
    // grid = Psiᵀ T Phi.
    const Matrix left = psi.transpose().fullPivLu().solve(grid);
    const Matrix raw = phi.transpose().fullPivLu().solve(left.transpose()).transpose();

    if (raw.minCoeff() < -1e-10)
      throw Error(ErrorKind::Inconsistent, "density-derived transition has entry " + std::to_string(raw.minCoeff()));
    Matrix projected = raw.cwiseMax(0.0);
    projected = detail::normalise_column_sums(projected);
    out.projection = max_abs(projected - raw);
    if (out.projection > 1e-8)
      throw Error(ErrorKind::Inconsistent,
                  "density-derived transition needed a correction of " + std::to_string(out.projection));
    out.transition = std::move(projected);
    return out;
  }
  throw Error(ErrorKind::Conditioning, "probe likelihood matrices stayed ill-conditioned after 20 attempts");
}

}  // namespace maskident
