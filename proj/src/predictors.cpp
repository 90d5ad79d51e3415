#include "maskident/predictors.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numbers>
#include <set>
#include <sstream>

#include "maskident/error.hpp"

namespace maskident {

// ---------------------------------------------------------------------------
// Tasks

namespace {

std::vector<int> parse_tokens(std::string_view side, std::string_view whole) {
  std::vector<int> out;
  std::size_t i = 0;
  auto fail = [&] { throw Error(ErrorKind::InvalidTask, "cannot parse task '" + std::string(whole) + "'"); };
  while (i < side.size()) {
    const unsigned char c = static_cast<unsigned char>(side[i]);
    if (std::isspace(c) || c == ',' || c == '*') {
      ++i;
      continue;
    }
    if (side.substr(i).starts_with("⊗")) {
      i += std::string_view("⊗").size();
      continue;
    }
    if (c != 'x' && c != 'X') fail();
    ++i;
    if (i < side.size() && side[i] == '_') ++i;
    std::size_t start = i;
    while (i < side.size() && std::isdigit(static_cast<unsigned char>(side[i]))) ++i;
    if (start == i) fail();
    out.push_back(std::stoi(std::string(side.substr(start, i - start))));
  }
  return out;
}

std::string join_tokens(const std::vector<int>& times) {
  std::string out;
  for (int t : times) out += "x" + std::to_string(t);
  return out;
}

}  // namespace

MaskedTask MaskedTask::parse(std::string_view text) {
  const auto bar = text.find('|');
  if (bar == std::string_view::npos || text.find('|', bar + 1) != std::string_view::npos)
    throw Error(ErrorKind::InvalidTask, "task '" + std::string(text) + "' needs exactly one '|'");
  MaskedTask task{parse_tokens(text.substr(0, bar), text), parse_tokens(text.substr(bar + 1), text)};
  check_task(task);
  return task;
}

std::string MaskedTask::to_string() const {
  return join_tokens(predicted) + "|" + join_tokens(conditioned);
}

std::vector<int> MaskedTask::sorted_times() const {
  std::vector<int> all = predicted;
  all.insert(all.end(), conditioned.begin(), conditioned.end());
  std::sort(all.begin(), all.end());
  return all;
}

void check_task(const MaskedTask& task) {
  if (task.predicted.empty() || task.conditioned.empty())
    throw Error(ErrorKind::InvalidTask, "task needs at least one predicted and one conditioned token");
  std::set<int> seen;
  for (const auto* list : {&task.predicted, &task.conditioned}) {
    for (int t : *list) {
      if (t < 1) throw Error(ErrorKind::InvalidTask, "time indices start at 1");
      if (!seen.insert(t).second)
        throw Error(ErrorKind::InvalidTask, "time index " + std::to_string(t) + " used twice in " + task.to_string());
    }
  }
}

void check_supported(const MaskedTask& task, bool gaussian) {
  check_task(task);
  const std::size_t np = task.predicted.size(), nc = task.conditioned.size();
  const std::size_t max_conditioned = gaussian ? 1 : 2;
  if (np + nc <= 3 && np <= 2 && nc <= max_conditioned) return;

  // Keep the leading tokens that fit a supported shape.
  MaskedTask closest = task;
  closest.conditioned.resize(std::min(nc, max_conditioned));
  const std::size_t room = 3 - closest.conditioned.size();
  closest.predicted.resize(std::min({np, std::size_t{2}, room}));
  std::ostringstream msg;
  msg << task.to_string() << " is not supported for " << (gaussian ? "G-HMM" : "HMM")
      << " (at most three tokens";
  if (gaussian) msg << ", one conditioned";
  msg << "); closest supported task: " << closest.to_string();
  throw Error(ErrorKind::UnsupportedTask, msg.str());
}

int pivot_time(const MaskedTask& task) {
  const std::vector<int> times = task.sorted_times();
  if (times.size() == 2) return task.conditioned.front();
  return times[times.size() / 2];
}

Matrix propagator(const Matrix& transition, int from, int to) {
  if (to >= from) return matrix_power(transition, to - from);
  return matrix_power(transition.transpose(), from - to);
}

// ---------------------------------------------------------------------------
// Posteriors

Vector posterior_discrete(const HmmParams& params, Index x) {
  if (x < 0 || x >= params.d())
    throw Error(ErrorKind::Shape, "observation index " + std::to_string(x) + " outside alphabet");
  Vector row = params.emission.row(x).transpose();
  const double total = row.sum();
  if (!(total > 0.0))
    throw Error(ErrorKind::Degeneracy, "emission row " + std::to_string(x) + " is zero");
  return row / total;
}

namespace {

// Logits x·mu_i - ||mu_i||^2 / 2 differ from -||x - mu_i||^2 / 2 by a
// constant, so the softmax is unchanged while far-field inputs avoid the
// cancellation of the ||x||^2 terms.
Vector gaussian_logits(const GhmmParams& params, const Vector& x) {
  if (x.size() != params.d()) throw Error(ErrorKind::Shape, "observation dimension mismatch");
  return params.means.transpose() * x - 0.5 * params.means.colwise().squaredNorm().transpose();
}

}  // namespace

Vector posterior_gaussian(const GhmmParams& params, const Vector& x) {
  Vector logits = gaussian_logits(params, x);
  logits.array() -= logits.maxCoeff();
  // std::exp underflows to exactly 0; the vectorised exp stops at denormals.
  Vector w = logits.unaryExpr([](double v) { return std::exp(v); });
  return w / w.sum();
}

Vector component_likelihoods(const GhmmParams& params, const Vector& x) {
  if (x.size() != params.d()) throw Error(ErrorKind::Shape, "observation dimension mismatch");
  Vector out(params.k());
  for (Index i = 0; i < params.k(); ++i) out(i) = std::exp(-0.5 * (x - params.means.col(i)).squaredNorm());
  return out;
}

Matrix posterior_jacobian(const GhmmParams& params, const Vector& x) {
  const Vector phi = posterior_gaussian(params, x);
  const Matrix spread = Matrix(phi.asDiagonal()) - phi * phi.transpose();
  const Matrix offsets = params.means.colwise() - x;  // columns mu_i - x
  return spread * offsets.transpose();
}

// ---------------------------------------------------------------------------
// Predictors
//
// Every supported task is evaluated through the hidden state at the pivot
// time, which d-separates all tokens: the posterior over that state given the
// conditioned tokens weights, per component, the product of the predicted
// tokens' conditional means.

namespace {

Matrix combine(const std::vector<Matrix>& factors, const Vector& weights) {
  if (factors.size() == 1) return factors[0] * weights;
  return factors[0] * weights.asDiagonal() * factors[1].transpose();
}

std::vector<Matrix> predicted_factors(const Matrix& means, const Matrix& transition,
                                      const MaskedTask& task, int pivot) {
  std::vector<Matrix> factors;
  for (int p : task.predicted) factors.push_back(means * propagator(transition, pivot, p));
  return factors;
}

}  // namespace

Matrix predict(const HmmParams& params, const MaskedTask& task, std::span<const Index> conditioned) {
  check_supported(task, false);
  if (conditioned.size() != task.conditioned.size())
    throw Error(ErrorKind::Shape, "expected " + std::to_string(task.conditioned.size()) +
                                      " conditioned observations for " + task.to_string());
  const int pivot = pivot_time(task);
  const Matrix& t = params.transition;

  Vector weights;
  if (task.conditioned.size() == 1) {
    weights = propagator(t, task.conditioned[0], pivot) * posterior_discrete(params, conditioned[0]);
  } else {
    weights = Vector::Ones(params.k());
    for (std::size_t c = 0; c < conditioned.size(); ++c) {
      const Index x = conditioned[c];
      if (x < 0 || x >= params.d()) throw Error(ErrorKind::Shape, "observation index outside alphabet");
      const Matrix likelihood = params.emission * propagator(t, pivot, task.conditioned[c]);
      weights.array() *= likelihood.row(x).transpose().array();
    }
    const double total = weights.sum();
    if (!(total >= 1e-300))
      throw Error(ErrorKind::Degeneracy, "conditioned observations have zero probability");
    weights /= total;
  }
  return combine(predicted_factors(params.emission, t, task, pivot), weights);
}

Matrix predict(const GhmmParams& params, const MaskedTask& task, std::span<const Vector> conditioned) {
  check_supported(task, true);
  if (conditioned.size() != 1)
    throw Error(ErrorKind::Shape, "expected one conditioned observation for " + task.to_string());
  const int pivot = pivot_time(task);
  const Vector weights =
      propagator(params.transition, task.conditioned[0], pivot) * posterior_gaussian(params, conditioned[0]);
  return combine(predicted_factors(params.means, params.transition, task, pivot), weights);
}

Matrix joint_pair_distribution(const HmmParams& params, int t1, int t2) {
  if (t1 == t2) throw Error(ErrorKind::InvalidTask, "joint distribution needs two distinct times");
  const double k = static_cast<double>(params.k());
  return params.emission * (params.emission * propagator(params.transition, t1, t2)).transpose() / k;
}

double conditional_density_ghmm(const GhmmParams& params, const Vector& x1, const Vector& x2) {
  const double d = static_cast<double>(params.d());
  const Vector mixture = params.transition * posterior_gaussian(params, x1);
  return std::pow(2.0 * std::numbers::pi, -0.5 * d) * component_likelihoods(params, x2).dot(mixture);
}

DiscreteOracle make_oracle(const HmmParams& params, const MaskedTask& task) {
  check_supported(task, false);
  return {task, params.d(), [params, task](std::span<const Index> x) { return predict(params, task, x); }};
}

GaussianOracle make_oracle(const GhmmParams& params, const MaskedTask& task) {
  check_supported(task, true);
  return {task, params.d(), [params, task](std::span<const Vector> x) { return predict(params, task, x); }};
}

DensityOracle make_density_oracle(const GhmmParams& params) {
  return [params](const Vector& x1, const Vector& x2) { return conditional_density_ghmm(params, x1, x2); };
}

}  // namespace maskident
