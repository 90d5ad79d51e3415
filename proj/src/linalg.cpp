#include "maskident/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace maskident {

Matrix pinv(const Matrix& a, double rel_tol) {
  Eigen::JacobiSVD<Matrix> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vector& s = svd.singularValues();
  if (s.size() == 0) return Matrix::Zero(a.cols(), a.rows());
  const double cutoff = rel_tol * s(0);
  Vector inv = Vector::Zero(s.size());
  for (Index i = 0; i < s.size(); ++i) {
    if (s(i) > cutoff) inv(i) = 1.0 / s(i);
  }
  return svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose();
}

Vector singular_values(const Matrix& a) {
  return Eigen::JacobiSVD<Matrix>(a).singularValues();
}

Index numerical_rank(const Matrix& a, double rel_tol) {
  const Vector s = singular_values(a);
  if (s.size() == 0 || s(0) == 0.0) return 0;
  return (s.array() > rel_tol * s(0)).count();
}

double smallest_singular_value(const Matrix& a) {
  const Vector s = singular_values(a);
  return s.size() == 0 ? 0.0 : s(s.size() - 1);
}

double condition_number(const Matrix& a) {
  const Vector s = singular_values(a);
  if (s.size() == 0) return 0.0;
  const double smallest = s(s.size() - 1);
  return smallest == 0.0 ? std::numeric_limits<double>::infinity() : s(0) / smallest;
}

Matrix matrix_power(const Matrix& a, int power) {
  Matrix result = Matrix::Identity(a.rows(), a.cols());
  for (int i = 0; i < power; ++i) result = result * a;
  return result;
}

double volume(const Matrix& a) {
  if (a.rows() == a.cols()) return a.determinant();
  return std::sqrt((a.transpose() * a).determinant());
}

double max_abs(const Matrix& a) {
  return a.size() == 0 ? 0.0 : a.cwiseAbs().maxCoeff();
}

Matrix leading_left_singular_vectors(const Matrix& a, Index r) {
  Eigen::JacobiSVD<Matrix> svd(a, Eigen::ComputeThinU);
  return svd.matrixU().leftCols(r);
}

std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t index) {
  std::uint64_t state = seed + index * 0x9E3779B97F4A7C15ULL;
  return splitmix64(state);
}

Vector Rng::normal_vector(Index n) {
  Vector v(n);
  for (Index i = 0; i < n; ++i) v(i) = normal();
  return v;
}

Matrix Rng::normal_matrix(Index rows, Index cols) {
  Matrix m(rows, cols);
  for (Index j = 0; j < cols; ++j)
    for (Index i = 0; i < rows; ++i) m(i, j) = normal();
  return m;
}

Index Rng::categorical(const double* cumulative, Index n) {
  const double u = uniform() * cumulative[n - 1];
  const double* it = std::upper_bound(cumulative, cumulative + n, u);
  return std::min<Index>(it - cumulative, n - 1);
}

std::vector<std::vector<Index>> all_permutations(Index n) {
  std::vector<Index> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), Index{0});
  std::vector<std::vector<Index>> out;
  do {
    out.push_back(perm);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return out;
}

Matrix permute_columns(const Matrix& a, const std::vector<Index>& perm) {
  Matrix out(a.rows(), static_cast<Index>(perm.size()));
  for (std::size_t j = 0; j < perm.size(); ++j) out.col(static_cast<Index>(j)) = a.col(perm[j]);
  return out;
}

}  // namespace maskident
