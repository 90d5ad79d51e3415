#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "maskident/linalg.hpp"

namespace maskident {

/// Dense order-3 tensor. Storage is row-major with the first index slowest:
/// entry (i,j,l) lives at (i * n2 + j) * n3 + l.
class Tensor3 {
 public:
  Tensor3() = default;
  Tensor3(Index n1, Index n2, Index n3);
  Tensor3(std::array<Index, 3> dims, std::vector<double> data);

  const std::array<Index, 3>& dims() const { return dims_; }
  const std::vector<double>& data() const { return data_; }

  double& operator()(Index i, Index j, Index l) { return data_[offset(i, j, l)]; }
  double operator()(Index i, Index j, Index l) const { return data_[offset(i, j, l)]; }

  /// Mode-n unfolding: rows indexed by mode n, columns by the other two
  /// modes in their original order (earlier mode slowest).
  Matrix unfold(int mode) const;

  /// Slice mixture sum_i w_i T(i,:,:), an n2 x n3 matrix.
  Matrix contract_first(const Vector& weights) const;

  /// Adds a ⊗ b ⊗ c scaled by `weight`.
  void add_outer(const Vector& a, const Vector& b, const Vector& c, double weight = 1.0);

  double norm() const;

  static Tensor3 from_factors(const Matrix& a, const Matrix& b, const Matrix& c);

 private:
  std::size_t offset(Index i, Index j, Index l) const {
    return static_cast<std::size_t>((i * dims_[1] + j) * dims_[2] + l);
  }

  std::array<Index, 3> dims_{0, 0, 0};
  std::vector<double> data_;
};

/// Canonical polyadic decomposition sum_i a_i ⊗ b_i ⊗ c_i. Columns of b and c
/// are unit norm; a carries the scale.
struct Cpd {
  Matrix a, b, c;
  double residual = 0.0;         // ||T - reconstruction|| / ||T||
  double eigengap = 0.0;         // min relative separation of the eigenvalues used
  int attempts = 0;              // random draws consumed, including the successful one

  Index rank() const { return a.cols(); }
  Tensor3 reconstruct() const { return Tensor3::from_factors(a, b, c); }
};

inline constexpr Index kKruskalRankLimit = 12;

/// Largest kappa such that every kappa columns are linearly independent,
/// judged on unit-normalised columns with threshold 1e-9 on the smallest
/// singular value. 0 when a column is numerically zero. Throws
/// Error{SizeLimit} above 12 columns.
int kruskal_rank(const Matrix& m);

struct KruskalCheck {
  bool holds = false;
  int slack = 0;  // k_A + k_B + k_C - (2r + 2)
  std::array<int, 3> ranks{0, 0, 0};
};

KruskalCheck kruskal_condition(const Matrix& a, const Matrix& b, const Matrix& c);

/// Simultaneous diagonalisation of two random slice mixtures. Retries with
/// derived seeds (5 retries) when the eigenvalues are too close or complex.
Cpd jennrich(const Tensor3& tensor, Index rank, std::uint64_t seed);

inline constexpr Index kAlignmentLimit = 8;

struct Alignment {
  /// Column j of the reference matches column permutation[j] of the candidate.
  std::vector<Index> permutation;
  /// candidate[:, permutation[j]] ≈ scalings[j] * reference[:, j].
  Vector scalings;
  double residual = 0.0;
};

/// Exhaustive search over column permutations (k <= 8) with optional
/// least-squares scalings or signs per column.
Alignment align_columns(const Matrix& reference, const Matrix& candidate, bool allow_scaling,
                        bool allow_sign);

}  // namespace maskident
