#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include <Eigen/Eigenvalues>

#include "maskident/error.hpp"
#include "recovery_internal.hpp"

namespace maskident {

using detail::finish_hmm;
using detail::Stopwatch;
using detail::TimedFactor;

namespace {

constexpr int kEigenPairAttempts = 20;
constexpr double kRatioGap = 1e-6;

void require_shape(const MaskedTask& task, std::size_t predicted, std::size_t conditioned,
                   const char* method) {
  if (task.predicted.size() != predicted || task.conditioned.size() != conditioned)
    throw Error(ErrorKind::UnsupportedTask,
                std::string(method) + " needs " + std::to_string(predicted) + " predicted and " +
                    std::to_string(conditioned) + " conditioned tokens, got " + task.to_string());
}

void require_states(Index d, Index k) {
  if (k < 1 || k > d)
    throw Error(ErrorKind::Shape, "need 1 <= k <= d, got k=" + std::to_string(k) + ", d=" + std::to_string(d));
}

Matrix evaluate(const DiscreteOracle& oracle, std::initializer_list<Index> x, Index cols) {
  const std::vector<Index> input(x);
  Matrix out = oracle.evaluate(input);
  if (out.rows() != oracle.d || out.cols() != cols)
    throw Error(ErrorKind::Shape, "oracle output has unexpected shape");
  return out;
}

RecoveryReport make_report(HmmParams params, const Cpd* cpd, const char* method, std::uint64_t seed) {
  RecoveryReport report;
  report.recovered = std::move(params);
  report.method = method;
  report.seed = seed;
  if (cpd != nullptr) {
    report.tensor_residual = cpd->residual;
    report.diagnostics["eigengap"] = cpd->eigengap;
    report.diagnostics["draws"] = cpd->attempts;
  }
  return report;
}

}  // namespace

RecoveryReport recover_hmm_two_given_one(const DiscreteOracle& oracle, Index k, std::uint64_t seed) {
  const Stopwatch clock;
  const MaskedTask& task = oracle.task;
  check_task(task);
  require_shape(task, 2, 1, "two-given-one recovery");
  detail::require_adjacent(task);
  const Index d = oracle.d;
  require_states(d, k);

  Tensor3 w(d, d, d);
  for (Index x = 0; x < d; ++x) {
    const Matrix out = evaluate(oracle, {x}, d);
    for (Index j = 0; j < d; ++j)
      for (Index l = 0; l < d; ++l) w(x, j, l) = out(j, l);
  }
  const Cpd cpd = jennrich(w, k, seed);
  HmmParams params = finish_hmm(task, {{task.conditioned[0], cpd.a}},
                                {{task.predicted[0], cpd.b}, {task.predicted[1], cpd.c}}, true);
  RecoveryReport report = make_report(std::move(params), &cpd, "jennrich", seed);
  report.wall_ms = clock.ms();
  return report;
}

RecoveryReport recover_hmm_eigen_pair(const DiscreteOracle& oracle, Index k, std::uint64_t seed) {
  const Stopwatch clock;
  const MaskedTask& task = oracle.task;
  check_task(task);
  require_shape(task, 2, 1, "eigen-pair recovery");
  detail::require_adjacent(task);
  const Index d = oracle.d;
  require_states(d, k);
  if (d != k) throw Error(ErrorKind::Precondition, "eigen-pair recovery needs d == k");
  if (k < 2) throw Error(ErrorKind::Precondition, "eigen-pair recovery needs k >= 2");

  std::vector<Matrix> outputs;
  for (Index x = 0; x < d; ++x) outputs.push_back(evaluate(oracle, {x}, d));

  std::vector<std::pair<Index, Index>> pairs;
  for (Index x = 0; x < d; ++x)
    for (Index y = x + 1; y < d; ++y) pairs.emplace_back(x, y);
  Rng rng(seed);
  std::shuffle(pairs.begin(), pairs.end(), rng.engine());

  int rank_failures = 0, tried = 0;
  double best_gap = 0.0;
  for (const auto& [x, y] : pairs) {
    if (tried == kEigenPairAttempts) break;
    ++tried;
    const Matrix& w1 = outputs[static_cast<std::size_t>(x)];
    const Matrix& w2 = outputs[static_cast<std::size_t>(y)];
    if (numerical_rank(w1) < k || numerical_rank(w2) < k) {
      ++rank_failures;
      continue;
    }
    Eigen::EigenSolver<Matrix> left(w1 * w2.inverse());
    Eigen::EigenSolver<Matrix> right((w1.inverse() * w2).transpose());
    const double scale = std::max(left.eigenvalues().cwiseAbs().maxCoeff(), 1e-300);
    if (left.eigenvalues().imag().cwiseAbs().maxCoeff() > 1e-8 * scale ||
        right.eigenvalues().imag().cwiseAbs().maxCoeff() > 1e-8 * scale)
      continue;
    const Vector lv = left.eigenvalues().real(), rv = right.eigenvalues().real();
    double gap = std::numeric_limits<double>::infinity();
    for (Index i = 0; i < k; ++i)
      for (Index j = i + 1; j < k; ++j) gap = std::min(gap, std::abs(lv(i) - lv(j)));
    best_gap = std::max(best_gap, gap);
    if (gap < kRatioGap) continue;

    // Eigenvalues of the second problem are reciprocals of the first.
    std::vector<Index> match(static_cast<std::size_t>(k));
    for (Index i = 0; i < k; ++i) {
      Index arg = 0;
      (rv * lv(i) - Vector::Ones(k)).cwiseAbs().minCoeff(&arg);
      match[static_cast<std::size_t>(i)] = arg;
    }
    const Matrix f1 = left.eigenvectors().real();
    const Matrix f2 = permute_columns(right.eigenvectors().real(), match);

    // Conditioned factor row x: the diagonal of f1^-1 W(x) f2^-T.
    const Matrix f1_inv = f1.inverse(), f2_inv_t = f2.inverse().transpose();
    Matrix a(d, k);
    for (Index z = 0; z < d; ++z)
      a.row(z) = (f1_inv * outputs[static_cast<std::size_t>(z)] * f2_inv_t).diagonal().transpose();

    HmmParams params = finish_hmm(task, {{task.conditioned[0], a}},
                                  {{task.predicted[0], f1}, {task.predicted[1], f2}}, true);
    RecoveryReport report = make_report(std::move(params), nullptr, "eigen_pair", seed);
    report.diagnostics["ratio_gap"] = gap;
    report.diagnostics["probe_pairs_tried"] = tried;
    report.diagnostics["probe_x"] = static_cast<double>(x);
    report.diagnostics["probe_y"] = static_cast<double>(y);
    report.wall_ms = clock.ms();
    return report;
  }
  if (rank_failures == tried)
    throw Error(ErrorKind::Precondition, "every probe output is rank deficient; T or O lacks full rank");
  throw Error(ErrorKind::DistinctnessFailure,
              "no probe pair gives distinct eigenvalue ratios (best gap " + std::to_string(best_gap) + ")");
}

RecoveryReport recover_hmm_one_given_two(const DiscreteOracle& oracle, const Matrix& joint, Index k,
                                         std::uint64_t seed, double consistency_tolerance) {
  const Stopwatch clock;
  const MaskedTask& task = oracle.task;
  check_task(task);
  require_shape(task, 1, 2, "one-given-two recovery");
  detail::require_adjacent(task);
  const Index d = oracle.d;
  require_states(d, k);
  if (joint.rows() != d || joint.cols() != d) throw Error(ErrorKind::Shape, "joint must be d x d");
  if (joint.minCoeff() < 0.0 || std::abs(joint.sum() - 1.0) > 1e-6)
    throw Error(ErrorKind::InvalidParams, "joint must be nonnegative and sum to 1");

  Tensor3 w(d, d, d);
  for (Index i = 0; i < d; ++i)
    for (Index j = 0; j < d; ++j) {
      if (joint(i, j) == 0.0) continue;
      const Matrix out = evaluate(oracle, {i, j}, 1);
      for (Index l = 0; l < d; ++l) w(i, j, l) = joint(i, j) * out(l, 0);
    }
  const Cpd cpd = jennrich(w, k, seed);
  HmmParams params =
      finish_hmm(task, {{task.conditioned[0], cpd.a}, {task.conditioned[1], cpd.b}},
                 {{task.predicted[0], cpd.c}}, false, consistency_tolerance);
  RecoveryReport report = make_report(std::move(params), &cpd, "jennrich_joint", seed);
  report.wall_ms = clock.ms();
  return report;
}

Matrix empirical_pair_distribution(const HmmParams& params, int t1, int t2, Index samples,
                                   std::uint64_t seed) {
  if (t1 == t2) throw Error(ErrorKind::InvalidTask, "pair distribution needs two distinct times");
  if (samples < 1) throw Error(ErrorKind::Shape, "need at least one sample");
  const Index gap = std::abs(t2 - t1);
  const DiscreteSequence seq = sample_sequence(params, samples + gap, seed);
  Matrix counts = Matrix::Zero(params.d(), params.d());
  for (Index s = 0; s < samples; ++s) {
    const Index early = seq.observations[static_cast<std::size_t>(s)];
    const Index late = seq.observations[static_cast<std::size_t>(s + gap)];
    if (t1 < t2) counts(early, late) += 1.0;
    else counts(late, early) += 1.0;
  }
  return counts / static_cast<double>(samples);
}

}  // namespace maskident
