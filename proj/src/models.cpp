#include "maskident/models.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "maskident/error.hpp"

namespace maskident {

namespace {

constexpr double kStationaryTolerance = 1e-6;

}  // namespace

bool ValidationReport::contains(std::string_view name) const { return find(name) != nullptr; }

const Violation* ValidationReport::find(std::string_view name) const {
  for (const auto& v : violations)
    if (v.invariant == name) return &v;
  return nullptr;
}

std::string ValidationReport::summary() const {
  if (ok()) return "ok";
  std::ostringstream out;
  for (std::size_t i = 0; i < violations.size(); ++i) {
    if (i) out << "; ";
    out << violations[i].invariant << " (residual " << violations[i].residual << ")";
  }
  return out.str();
}

namespace {

void check_finite(const Matrix& m, const char* what) {
  if (!m.allFinite()) throw Error(ErrorKind::Shape, std::string(what) + " contains non-finite entries");
}

double range_residual(const Matrix& m) {
  return std::max({0.0, -m.minCoeff(), m.maxCoeff() - 1.0});
}

void check_transition(const Matrix& t, Index k, double tol, ValidationReport& report) {
  if (t.rows() != k || t.cols() != k) {
    std::ostringstream msg;
    msg << "transition must be " << k << "x" << k << ", got " << t.rows() << "x" << t.cols();
    throw Error(ErrorKind::Shape, msg.str());
  }
  check_finite(t, "transition");
  const double range = range_residual(t);
  if (range > tol) report.violations.push_back({std::string(invariant::kTransitionRange), range});
  const double col = (t.colwise().sum().array() - 1.0).abs().maxCoeff();
  if (col > tol) report.violations.push_back({std::string(invariant::kTransitionColumnSums), col});
  const double row = (t.rowwise().sum().array() - 1.0).abs().maxCoeff();
  if (row > tol) report.violations.push_back({std::string(invariant::kTransitionRowSums), row});
  const Index rank = numerical_rank(t);
  if (rank < k)
    report.violations.push_back({std::string(invariant::kTransitionRank), static_cast<double>(k - rank)});
}

void check_dims(Index d, Index k, const char* what) {
  if (d < 1 || k < 1) {
    std::ostringstream msg;
    msg << what << " must be non-empty, got " << d << "x" << k;
    throw Error(ErrorKind::Shape, msg.str());
  }
}

}  // namespace

ValidationReport validate_hmm(const HmmParams& params, double tolerance) {
  ValidationReport report;
  const Matrix& o = params.emission;
  check_dims(o.rows(), o.cols(), "emission");
  check_finite(o, "emission");
  const Index d = o.rows(), k = o.cols();

  const double range = range_residual(o);
  if (range > tolerance) report.violations.push_back({std::string(invariant::kEmissionRange), range});
  const double col = (o.colwise().sum().array() - 1.0).abs().maxCoeff();
  if (col > tolerance) report.violations.push_back({std::string(invariant::kEmissionColumnSums), col});
  const double weakest_row = o.rowwise().maxCoeff().minCoeff();
  if (weakest_row <= 0.0)
    report.violations.push_back({std::string(invariant::kEmissionRowNonzero), -weakest_row});
  if (k > d)
    report.violations.push_back({std::string(invariant::kStatesExceedAlphabet), static_cast<double>(k - d)});
  const Index rank = numerical_rank(o);
  if (rank < k)
    report.violations.push_back({std::string(invariant::kEmissionRank), static_cast<double>(k - rank)});

  check_transition(params.transition, k, tolerance, report);
  return report;
}

ValidationReport validate_ghmm(const GhmmParams& params, double tolerance) {
  ValidationReport report;
  const Matrix& m = params.means;
  check_dims(m.rows(), m.cols(), "means");
  check_finite(m, "means");
  const Index d = m.rows(), k = m.cols();

  const double norm = (m.colwise().norm().array() - 1.0).abs().maxCoeff();
  if (norm > tolerance) report.violations.push_back({std::string(invariant::kMeansUnitNorm), norm});
  if (k > d)
    report.violations.push_back({std::string(invariant::kStatesExceedAlphabet), static_cast<double>(k - d)});
  const Index rank = numerical_rank(m);
  if (rank < k)
    report.violations.push_back({std::string(invariant::kMeansRank), static_cast<double>(k - rank)});

  check_transition(params.transition, k, tolerance, report);
  return report;
}

ValidationReport validate(const ModelParams& params, double tolerance) {
  return std::visit(
      [&](const auto& p) {
        if constexpr (std::is_same_v<std::decay_t<decltype(p)>, HmmParams>)
          return validate_hmm(p, tolerance);
        else
          return validate_ghmm(p, tolerance);
      },
      params);
}

double doubly_stochastic_residual(const Matrix& t) {
  const double col = (t.colwise().sum().array() - 1.0).abs().maxCoeff();
  const double row = (t.rowwise().sum().array() - 1.0).abs().maxCoeff();
  return std::max(col, row);
}

StationaryInfo stationary(const Matrix& transition) {
  const Index k = transition.rows();
  if (k == 0 || transition.cols() != k) throw Error(ErrorKind::Shape, "transition must be square");
  const Matrix shifted = transition - Matrix::Identity(k, k);
  Eigen::JacobiSVD<Matrix> svd(shifted, Eigen::ComputeFullV);
  const Vector& s = svd.singularValues();
  const double scale = std::max(1.0, s(0));
  // Loose enough for transitions stored to 8 decimals.
  const Index null_dim = (s.array() <= kStationaryTolerance * scale).count();
  if (null_dim != 1) {
    std::ostringstream msg;
    msg << "eigenvalue-1 eigenspace has dimension " << null_dim;
    throw Error(ErrorKind::DegenerateChain, msg.str());
  }
  Vector pi = svd.matrixV().col(k - 1);
  pi /= pi.sum();
  StationaryInfo info;
  info.is_uniform = (pi.array() - 1.0 / static_cast<double>(k)).abs().maxCoeff() <= 1e-10;
  info.distribution = std::move(pi);
  return info;
}

namespace {

// Column-wise cumulative sums, used for inverse-CDF sampling.
Matrix cumulative_columns(const Matrix& m) {
  Matrix c = m;
  for (Index j = 0; j < c.cols(); ++j)
    for (Index i = 1; i < c.rows(); ++i) c(i, j) += c(i - 1, j);
  return c;
}

Vector initial_distribution(const Matrix& transition) {
  const Index k = transition.rows();
  if (doubly_stochastic_residual(transition) <= kStationaryTolerance)
    return Vector::Constant(k, 1.0 / static_cast<double>(k));
  return stationary(transition).distribution;
}

std::vector<Index> sample_hidden(const Matrix& transition, Index length, Rng& rng) {
  if (length < 1) throw Error(ErrorKind::InvalidParams, "sequence length must be positive");
  const Index k = transition.rows();
  Vector init = initial_distribution(transition);
  for (Index i = 1; i < k; ++i) init(i) += init(i - 1);
  const Matrix cum = cumulative_columns(transition);
  std::vector<Index> hidden(static_cast<std::size_t>(length));
  hidden[0] = rng.categorical(init.data(), k);
  for (std::size_t t = 1; t < hidden.size(); ++t)
    hidden[t] = rng.categorical(cum.col(hidden[t - 1]).data(), k);
  return hidden;
}

}  // namespace

DiscreteSequence sample_sequence(const HmmParams& params, Index length, std::uint64_t seed) {
  Rng rng(seed);
  DiscreteSequence seq;
  seq.hidden = sample_hidden(params.transition, length, rng);
  const Matrix cum = cumulative_columns(params.emission);
  seq.observations.reserve(seq.hidden.size());
  for (Index h : seq.hidden) seq.observations.push_back(rng.categorical(cum.col(h).data(), params.d()));
  return seq;
}

GaussianSequence sample_sequence(const GhmmParams& params, Index length, std::uint64_t seed) {
  Rng rng(seed);
  GaussianSequence seq;
  seq.hidden = sample_hidden(params.transition, length, rng);
  seq.observations.resize(params.d(), length);
  for (Index t = 0; t < length; ++t)
    seq.observations.col(t) = params.means.col(seq.hidden[static_cast<std::size_t>(t)]) +
                              rng.normal_vector(params.d());
  return seq;
}

Matrix random_doubly_stochastic(Index k, Rng& rng, bool symmetric) {
  Matrix a(k, k);
  for (Index j = 0; j < k; ++j)
    for (Index i = 0; i < k; ++i) a(i, j) = rng.exponential();
  if (symmetric) a = (0.5 * (a + a.transpose())).eval();

  const Matrix uniform = Matrix::Constant(k, k, 1.0 / static_cast<double>(k));
  for (int round = 0; round < 20; ++round) {
    for (int sweep = 0; sweep < 50; ++sweep) {
      a = (a.rowwise().sum().cwiseInverse().asDiagonal() * a).eval();
      a = (a * a.colwise().sum().cwiseInverse().asDiagonal()).eval();
      if (symmetric) a = (0.5 * (a + a.transpose())).eval();
    }
    if (doubly_stochastic_residual(a) <= 1e-12) return a;
    a = 0.5 * a + 0.5 * uniform;
  }
  throw Error(ErrorKind::GenerationFailure, "Sinkhorn normalisation did not converge");
}

HmmParams random_hmm(Index d, Index k, std::uint64_t seed, bool symmetric_transition,
                     double condition_floor) {
  if (k < 2 || k > d) throw Error(ErrorKind::InvalidParams, "random_hmm requires 2 <= k <= d");
  Rng rng(seed);
  for (int attempt = 0; attempt < 200; ++attempt) {
    HmmParams p;
    p.transition = random_doubly_stochastic(k, rng, symmetric_transition);
    p.emission.resize(d, k);
    for (Index j = 0; j < k; ++j) {
      for (Index i = 0; i < d; ++i) p.emission(i, j) = rng.exponential();
      p.emission.col(j) /= p.emission.col(j).sum();
    }
    if (smallest_singular_value(p.transition) >= condition_floor &&
        smallest_singular_value(p.emission) >= condition_floor)
      return p;
  }
  throw Error(ErrorKind::GenerationFailure,
              "no instance met condition_floor after 200 attempts");
}

GhmmParams random_ghmm(Index d, Index k, std::uint64_t seed, bool symmetric_transition,
                       double condition_floor) {
  if (k < 1 || k > d) throw Error(ErrorKind::InvalidParams, "random_ghmm requires 1 <= k <= d");
  Rng rng(seed);
  for (int attempt = 0; attempt < 200; ++attempt) {
    GhmmParams p;
    p.transition = k == 1 ? Matrix::Ones(1, 1) : random_doubly_stochastic(k, rng, symmetric_transition);
    p.means = rng.normal_matrix(d, k);
    p.means = (p.means * p.means.colwise().norm().cwiseInverse().asDiagonal()).eval();
    if (smallest_singular_value(p.transition) >= condition_floor &&
        smallest_singular_value(p.means) >= condition_floor)
      return p;
  }
  throw Error(ErrorKind::GenerationFailure,
              "no instance met condition_floor after 200 attempts");
}

}  // namespace maskident
