#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include <Eigen/Dense>

namespace maskident {

using Index = Eigen::Index;
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Relative singular-value cutoff used for rank decisions and pseudo-inverses.
inline constexpr double kRankTolerance = 1e-10;

Matrix pinv(const Matrix& a, double rel_tol = kRankTolerance);
Index numerical_rank(const Matrix& a, double rel_tol = kRankTolerance);
Vector singular_values(const Matrix& a);
double smallest_singular_value(const Matrix& a);
double condition_number(const Matrix& a);

/// Repeated multiplication; power 0 gives the identity.
Matrix matrix_power(const Matrix& a, int power);

/// Signed determinant for square input, sqrt(det(AᵀA)) for tall input.
double volume(const Matrix& a);

double max_abs(const Matrix& a);

/// Orthonormal basis (n x r) for the leading r-dimensional column space.
Matrix leading_left_singular_vectors(const Matrix& a, Index r);

/// One step of the SplitMix64 sequence. `state` is advanced by the golden
/// gamma and the mixed value returned.
std::uint64_t splitmix64(std::uint64_t& state);

/// The (index+1)-th SplitMix64 output for a stream seeded with `seed`.
/// Used for every seed split in the project so streams are reproducible
/// from (seed, index) alone.
std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t index);

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  /// Uniform on [0,1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double normal() { return normal_(engine_); }
  double exponential() { return -std::log1p(-uniform()); }
  Index below(Index n) { return static_cast<Index>(uniform() * static_cast<double>(n)); }

  Vector normal_vector(Index n);
  Matrix normal_matrix(Index rows, Index cols);

  /// Inverse-CDF draw from a probability vector given as cumulative sums.
  Index categorical(const double* cumulative, Index n);

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

/// All permutations of {0..n-1} in lexicographic order.
std::vector<std::vector<Index>> all_permutations(Index n);

/// Columns of `a` reordered so that column j of the result is column perm[j].
Matrix permute_columns(const Matrix& a, const std::vector<Index>& perm);

}  // namespace maskident
