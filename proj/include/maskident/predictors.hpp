#pragma once

#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "maskident/models.hpp"

namespace maskident {

/// A masked-prediction task: regress the tensor product of the `predicted`
/// tokens onto the `conditioned` tokens. Time indices start at 1.
struct MaskedTask {
  std::vector<int> predicted;
  std::vector<int> conditioned;

  /// Parses "x2x3|x1", "x2,x3|x1", "x2*x3|x1" or "x2⊗x3|x1".
  static MaskedTask parse(std::string_view text);
  std::string to_string() const;

  /// All time indices in increasing order.
  std::vector<int> sorted_times() const;

  bool operator==(const MaskedTask&) const = default;
};

/// Throws Error{InvalidTask} when the lists are empty, overlap, repeat an
/// index or use an index below 1.
void check_task(const MaskedTask& task);

/// Throws Error{UnsupportedTask} when no closed form is implemented for the
/// task; the message names the closest supported task.
void check_supported(const MaskedTask& task, bool gaussian);

/// Time of the hidden state that separates every token of the task from the
/// others: the middle time for three tokens, the conditioned time for two.
int pivot_time(const MaskedTask& task);

/// Transition operator carrying the hidden distribution at `from` to `to`:
/// T^(to-from) forward, (Tᵀ)^(from-to) backward (the reversed chain of a
/// doubly-stochastic chain has transition Tᵀ).
Matrix propagator(const Matrix& transition, int from, int to);

/// P(h | x = e_x): the normalised emission row.
Vector posterior_discrete(const HmmParams& params, Index x);

/// Softmax of -||x - mu_i||^2 / 2, max-subtracted.
Vector posterior_gaussian(const GhmmParams& params, const Vector& x);

/// Unnormalised component likelihoods exp(-||x - mu_i||^2 / 2).
Vector component_likelihoods(const GhmmParams& params, const Vector& x);

/// d(phi)/dx as a k x d matrix: (diag(phi) - phi phiᵀ)(M - [x ... x])ᵀ.
Matrix posterior_jacobian(const GhmmParams& params, const Vector& x);

/// Optimal predictor for a discrete HMM. Conditioned observations are basis
/// indices in [0, d), one per entry of `task.conditioned`, in that order.
/// Returns a d x 1 matrix for one predicted token, d x d for two (row index
/// follows the first predicted token).
Matrix predict(const HmmParams& params, const MaskedTask& task, std::span<const Index> conditioned);

/// Optimal predictor for a G-HMM; one conditioned point per conditioned token.
Matrix predict(const GhmmParams& params, const MaskedTask& task, std::span<const Vector> conditioned);

/// Entry (i,j) = P(x_t1 = e_i, x_t2 = e_j). Requires t1 != t2.
Matrix joint_pair_distribution(const HmmParams& params, int t1, int t2);

/// p(x2 | x1) = (2 pi)^(-d/2) psi(x2)ᵀ T phi(x1) for adjacent tokens.
double conditional_density_ghmm(const GhmmParams& params, const Vector& x1, const Vector& x2);

/// Black-box predictor handed to recovery pipelines; they see only the task,
/// the alphabet size and evaluations.
struct DiscreteOracle {
  MaskedTask task;
  Index d = 0;
  std::function<Matrix(std::span<const Index>)> evaluate;
};

struct GaussianOracle {
  MaskedTask task;
  Index d = 0;
  std::function<Matrix(std::span<const Vector>)> evaluate;
};

using DensityOracle = std::function<double(const Vector& x1, const Vector& x2)>;

DiscreteOracle make_oracle(const HmmParams& params, const MaskedTask& task);
GaussianOracle make_oracle(const GhmmParams& params, const MaskedTask& task);
DensityOracle make_density_oracle(const GhmmParams& params);

}  // namespace maskident
