#include "maskident/tensor.hpp"

#include <bit>
#include <cmath>
#include <limits>
#include <numeric>

#include "maskident/error.hpp"

namespace maskident {

Tensor3::Tensor3(Index n1, Index n2, Index n3)
    : dims_{n1, n2, n3}, data_(static_cast<std::size_t>(n1 * n2 * n3), 0.0) {}

Tensor3::Tensor3(std::array<Index, 3> dims, std::vector<double> data)
    : dims_(dims), data_(std::move(data)) {
  if (static_cast<Index>(data_.size()) != dims_[0] * dims_[1] * dims_[2])
    throw Error(ErrorKind::Shape, "tensor data length does not match its dimensions");
  for (double v : data_)
    if (!std::isfinite(v)) throw Error(ErrorKind::Shape, "tensor contains non-finite entries");
}

Matrix Tensor3::unfold(int mode) const {
  const auto [n1, n2, n3] = dims_;
  Matrix out;
  switch (mode) {
    case 0:
      out.resize(n1, n2 * n3);
      for (Index i = 0; i < n1; ++i)
        for (Index j = 0; j < n2; ++j)
          for (Index l = 0; l < n3; ++l) out(i, j * n3 + l) = (*this)(i, j, l);
      return out;
    case 1:
      out.resize(n2, n1 * n3);
      for (Index i = 0; i < n1; ++i)
        for (Index j = 0; j < n2; ++j)
          for (Index l = 0; l < n3; ++l) out(j, i * n3 + l) = (*this)(i, j, l);
      return out;
    case 2:
      out.resize(n3, n1 * n2);
      for (Index i = 0; i < n1; ++i)
        for (Index j = 0; j < n2; ++j)
          for (Index l = 0; l < n3; ++l) out(l, i * n2 + j) = (*this)(i, j, l);
      return out;
    default:
      throw Error(ErrorKind::Shape, "tensor mode must be 0, 1 or 2");
  }
}

Matrix Tensor3::contract_first(const Vector& weights) const {
  if (weights.size() != dims_[0]) throw Error(ErrorKind::Shape, "contraction weights length mismatch");
  Matrix out = Matrix::Zero(dims_[1], dims_[2]);
  for (Index i = 0; i < dims_[0]; ++i)
    for (Index j = 0; j < dims_[1]; ++j)
      for (Index l = 0; l < dims_[2]; ++l) out(j, l) += weights(i) * (*this)(i, j, l);
  return out;
}

void Tensor3::add_outer(const Vector& a, const Vector& b, const Vector& c, double weight) {
  if (a.size() != dims_[0] || b.size() != dims_[1] || c.size() != dims_[2])
    throw Error(ErrorKind::Shape, "outer product dimensions do not match tensor");
  for (Index i = 0; i < dims_[0]; ++i)
    for (Index j = 0; j < dims_[1]; ++j) {
      const double ab = weight * a(i) * b(j);
      for (Index l = 0; l < dims_[2]; ++l) (*this)(i, j, l) += ab * c(l);
    }
}

double Tensor3::norm() const {
  return std::sqrt(std::inner_product(data_.begin(), data_.end(), data_.begin(), 0.0));
}

Tensor3 Tensor3::from_factors(const Matrix& a, const Matrix& b, const Matrix& c) {
  if (a.cols() != b.cols() || a.cols() != c.cols())
    throw Error(ErrorKind::Shape, "factor matrices must share their column count");
  Tensor3 t(a.rows(), b.rows(), c.rows());
  for (Index r = 0; r < a.cols(); ++r) t.add_outer(a.col(r), b.col(r), c.col(r));
  return t;
}

// ---------------------------------------------------------------------------

int kruskal_rank(const Matrix& m) {
  const Index r = m.cols();
  if (r > kKruskalRankLimit)
    throw Error(ErrorKind::SizeLimit, "kruskal_rank supports at most 12 columns, got " + std::to_string(r));
  if (r == 0) return 0;
  const Vector norms = m.colwise().norm();
  const double scale = norms.maxCoeff();
  if (scale == 0.0 || norms.minCoeff() <= 1e-12 * scale) return 0;
  const Matrix unit = m * norms.cwiseInverse().asDiagonal();

  for (Index size = 2; size <= r; ++size) {
    if (size > m.rows()) return static_cast<int>(size - 1);
    // Enumerate subsets of the given size via bitmasks.
    for (std::uint32_t mask = 0; mask < (1u << r); ++mask) {
      if (std::popcount(mask) != size) continue;
      Matrix sub(m.rows(), size);
      Index col = 0;
      for (Index j = 0; j < r; ++j)
        if (mask & (1u << j)) sub.col(col++) = unit.col(j);
      if (smallest_singular_value(sub) <= 1e-9) return static_cast<int>(size - 1);
    }
  }
  return static_cast<int>(r);
}

KruskalCheck kruskal_condition(const Matrix& a, const Matrix& b, const Matrix& c) {
  if (a.cols() != b.cols() || a.cols() != c.cols())
    throw Error(ErrorKind::Shape, "factor matrices must share their column count");
  KruskalCheck check;
  check.ranks = {kruskal_rank(a), kruskal_rank(b), kruskal_rank(c)};
  const int r = static_cast<int>(a.cols());
  check.slack = check.ranks[0] + check.ranks[1] + check.ranks[2] - (2 * r + 2);
  check.holds = check.slack >= 0;
  return check;
}

// ---------------------------------------------------------------------------

Alignment align_columns(const Matrix& reference, const Matrix& candidate, bool allow_scaling,
                        bool allow_sign) {
  if (reference.rows() != candidate.rows() || reference.cols() != candidate.cols())
    throw Error(ErrorKind::Shape, "align_columns needs equally shaped matrices");
  const Index k = reference.cols();
  if (k > kAlignmentLimit)
    throw Error(ErrorKind::SizeLimit, "align_columns supports at most 8 columns, got " + std::to_string(k));

  // cost(j, m): squared residual of matching reference column j to
  // candidate column m, with the best admissible scaling.
  Matrix cost(k, k), scale(k, k);
  for (Index j = 0; j < k; ++j) {
    const double rr = reference.col(j).squaredNorm();
    for (Index m = 0; m < k; ++m) {
      double s = 1.0;
      if (allow_scaling) {
        s = rr > 0.0 ? reference.col(j).dot(candidate.col(m)) / rr : 0.0;
      } else if (allow_sign) {
        s = reference.col(j).dot(candidate.col(m)) < 0.0 ? -1.0 : 1.0;
      }
      scale(j, m) = s;
      cost(j, m) = (candidate.col(m) - s * reference.col(j)).squaredNorm();
    }
  }

  Alignment best;
  double best_cost = std::numeric_limits<double>::infinity();
  for (const auto& perm : all_permutations(k)) {
    double total = 0.0;
    for (Index j = 0; j < k; ++j) total += cost(j, perm[static_cast<std::size_t>(j)]);
    if (total < best_cost) {
      best_cost = total;
      best.permutation = perm;
    }
  }
  best.scalings.resize(k);
  for (Index j = 0; j < k; ++j) best.scalings(j) = scale(j, best.permutation[static_cast<std::size_t>(j)]);
  best.residual = std::sqrt(best_cost);
  return best;
}

}  // namespace maskident
