#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "maskident/models.hpp"
#include "maskident/predictors.hpp"
#include "maskident/tensor.hpp"

namespace maskident {

struct RecoveryReport {
  ModelParams recovered;
  /// Column j of the ground truth matches column permutation[j] of the
  /// recovered parameters. Empty until scored.
  std::vector<Index> permutation;
  /// Frobenius errors after alignment; empty until scored.
  std::optional<double> primary_error;     // emission or means
  std::optional<double> transition_error;
  double tensor_residual = 0.0;
  std::string method;
  std::uint64_t seed = 0;
  double wall_ms = 0.0;
  std::map<std::string, double> diagnostics;
};

/// Aligns the recovered parameters with `truth` by exhaustive column
/// permutation of the emission (or means) and fills the error fields.
void score(RecoveryReport& report, const ModelParams& truth);

/// Recovery from x_a ⊗ x_b | x_c. Handles both the conditioned-first and the
/// conditioned-middle orderings; the ordering is read off the oracle's task.
/// Throws Error{NonAdjacent} when no token is adjacent to the middle one.
RecoveryReport recover_hmm_two_given_one(const DiscreteOracle& oracle, Index k, std::uint64_t seed);

/// Eigendecomposition route for d == k: two probe outputs W1, W2 give the
/// predicted-token factors as eigenvectors of W1 W2^-1 and (W1^-1 W2)ᵀ.
/// Probe pairs are basis pairs drawn in seeded order, up to 20 of them.
RecoveryReport recover_hmm_eigen_pair(const DiscreteOracle& oracle, Index k, std::uint64_t seed);

/// Recovery from x_c | x_a ⊗ x_b, weighting each probe pair by `joint`
/// (entry (i,j) = P(x_a = e_i, x_b = e_j) in the task's conditioned order).
/// `consistency_tolerance` bounds negative entries and column-sum drift of the
/// recovered T; raise it only for estimated (sampled) joints.
RecoveryReport recover_hmm_one_given_two(const DiscreteOracle& oracle, const Matrix& joint, Index k,
                                         std::uint64_t seed, double consistency_tolerance = 1e-6);

/// Pair frequencies over `samples` consecutive pairs (x_s, x_{s+t2-t1}) of one
/// sampled sequence; orientation follows (t1, t2).
Matrix empirical_pair_distribution(const HmmParams& params, int t1, int t2, Index samples,
                                   std::uint64_t seed);

struct GhmmThreeTokenOptions {
  Index probe_budget = 0;             // tensor probes; 0 means k
  std::vector<Vector> initial_probes;  // tried first, resampled if rank-deficient
};

/// Recovery from x_2 ⊗ x_3 | x_1 or x_1 ⊗ x_3 | x_2 (any times with the same
/// ordering) under a G-HMM. Throws Error{SignResolution} when no candidate
/// transition is nonnegative and Error{Ambiguity} when two distinct
/// candidates both reproduce the oracle.
RecoveryReport recover_ghmm_two_given_one(const GaussianOracle& oracle, Index k, std::uint64_t seed,
                                          const GhmmThreeTokenOptions& options = {});

struct GhmmPairwiseOptions {
  double far_radius = 1e3;
  Index n_directions = 0;  // 0 means 200 k
};

/// Constructive recovery from x_b | x_a with |b - a| = 1.
RecoveryReport recover_ghmm_pairwise(const GaussianOracle& oracle, Index k, std::uint64_t seed,
                                     const GhmmPairwiseOptions& options = {});

struct DensityRecovery {
  Matrix transition;
  int attempts = 0;
  double psi_condition = 0.0;
  double phi_condition = 0.0;
  double projection = 0.0;  // size of the final nonnegativity/renormalisation step
};

/// T from the pairwise conditional density with the means known.
DensityRecovery recover_T_from_conditional_density(const DensityOracle& density, const Matrix& means,
                                                   std::uint64_t seed);

}  // namespace maskident
