#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "maskident/linalg.hpp"

namespace maskident {

/// Discrete-emission HMM. Column j of `emission` is P(x | h = e_j); column j
/// of `transition` is P(h_{t+1} | h_t = e_j).
struct HmmParams {
  Matrix emission;    // d x k
  Matrix transition;  // k x k

  Index d() const { return emission.rows(); }
  Index k() const { return emission.cols(); }
};

/// Conditionally-Gaussian HMM with identity covariances. Column i of `means`
/// is the unit-norm mean of the Gaussian attached to hidden state i.
struct GhmmParams {
  Matrix means;       // d x k
  Matrix transition;  // k x k

  Index d() const { return means.rows(); }
  Index k() const { return means.cols(); }
};

using ModelParams = std::variant<HmmParams, GhmmParams>;

struct Violation {
  std::string invariant;
  double residual = 0.0;
};

struct ValidationReport {
  std::vector<Violation> violations;

  bool ok() const { return violations.empty(); }
  bool contains(std::string_view invariant) const;
  const Violation* find(std::string_view invariant) const;
  std::string summary() const;
};

// Invariant names used in validation reports.
namespace invariant {
inline constexpr std::string_view kEmissionColumnSums = "emission column sums";
inline constexpr std::string_view kEmissionRange = "emission entries in [0,1]";
inline constexpr std::string_view kEmissionRowNonzero = "emission rows non-zero";
inline constexpr std::string_view kEmissionRank = "emission rank";
inline constexpr std::string_view kMeansUnitNorm = "means unit norm";
inline constexpr std::string_view kMeansRank = "means rank";
inline constexpr std::string_view kTransitionRange = "transition entries in [0,1]";
inline constexpr std::string_view kTransitionColumnSums = "transition column sums";
inline constexpr std::string_view kTransitionRowSums = "transition row sums";
inline constexpr std::string_view kTransitionRank = "transition rank";
inline constexpr std::string_view kStatesExceedAlphabet = "k <= d";
}  // namespace invariant

/// Throws Error{Shape} on mismatched dimensions; invariant violations are
/// returned in the report with their measured residual.
ValidationReport validate_hmm(const HmmParams& params, double tolerance = 1e-12);
ValidationReport validate_ghmm(const GhmmParams& params, double tolerance = 1e-12);
ValidationReport validate(const ModelParams& params, double tolerance = 1e-12);

/// Doubly-stochastic residual: max deviation of any row or column sum from 1.
double doubly_stochastic_residual(const Matrix& transition);

struct StationaryInfo {
  Vector distribution;
  bool is_uniform = false;
};

/// Stationary distribution of a column-stochastic matrix. Throws
/// Error{DegenerateChain} when the eigenvalue-1 eigenspace is not simple.
StationaryInfo stationary(const Matrix& transition);

struct DiscreteSequence {
  std::vector<Index> hidden;
  std::vector<Index> observations;
};

struct GaussianSequence {
  std::vector<Index> hidden;
  Matrix observations;  // d x length
};

DiscreteSequence sample_sequence(const HmmParams& params, Index length, std::uint64_t seed);
GaussianSequence sample_sequence(const GhmmParams& params, Index length, std::uint64_t seed);

/// Random doubly-stochastic k x k matrix: Exp(1) entries, optional
/// symmetrisation, Sinkhorn sweeps, then uniform mixing until both row and
/// column sums are within 1e-12 of one.
Matrix random_doubly_stochastic(Index k, Rng& rng, bool symmetric);

inline constexpr double kDefaultConditionFloor = 0.05;

HmmParams random_hmm(Index d, Index k, std::uint64_t seed, bool symmetric_transition = false,
                     double condition_floor = kDefaultConditionFloor);

GhmmParams random_ghmm(Index d, Index k, std::uint64_t seed, bool symmetric_transition = false,
                       double condition_floor = kDefaultConditionFloor);

// ---------------------------------------------------------------------------
// Embedded constant fixtures.

enum class FixtureName { PairwiseHmmCounterexample, PowerCounterexample, SimplexBase };

struct FixtureBundle {
  std::string name;
  std::optional<HmmParams> original;
  std::optional<HmmParams> alternative;
  // Power construction only.
  Matrix transition;      // T(a)
  Matrix alt_transition;  // (M^-1 R(theta)^-1 M) T
  Matrix basis;           // M
  Matrix rotation;        // M^-1 R(theta)^-1 M
  std::optional<double> theta;
  std::optional<int> power;
};

/// `power` is only read for PowerCounterexample.
FixtureBundle fixture(FixtureName name, int power = 0);

/// Accepts "pairwise_hmm_counterexample", "simplex_base" and
/// "power_counterexample(t)". Throws Error{UnknownFixture}.
FixtureBundle fixture(std::string_view name);

/// Transition of the power construction, [[a,0,1-a],[1-a,a,0],[0,1-a,a]].
Matrix power_fixture_transition(double a);
/// Basis matrix M of the power construction.
Matrix power_fixture_basis();
/// Rotation by `theta` in the first two coordinates of R^3.
Matrix planar_rotation(double theta);

}  // namespace maskident
