#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include <Eigen/Eigenvalues>

#include "maskident/error.hpp"
#include "maskident/tensor.hpp"

namespace maskident {

namespace {

constexpr int kRetries = 5;
constexpr double kEigengapTolerance = 1e-8;
constexpr double kImaginaryTolerance = 1e-8;
constexpr double kPairingTolerance = 1e-6;
constexpr int kPolishSweeps = 1000;

struct Spectrum {
  Vector values;
  Matrix vectors;
  double imaginary = 0.0;  // largest |Im lambda| relative to max |lambda|
};

Spectrum real_spectrum(const Matrix& m) {
  Eigen::EigenSolver<Matrix> solver(m);
  if (solver.info() != Eigen::Success) throw Error(ErrorKind::Degeneracy, "eigendecomposition did not converge");
  Spectrum s;
  s.values = solver.eigenvalues().real();
  s.vectors = solver.eigenvectors().real();
  const double scale = std::max(solver.eigenvalues().cwiseAbs().maxCoeff(), 1e-300);
  s.imaginary = solver.eigenvalues().imag().cwiseAbs().maxCoeff() / scale;
  return s;
}

double relative_gap(const Vector& values) {
  const double scale = std::max(values.cwiseAbs().maxCoeff(), 1e-300);
  double gap = std::numeric_limits<double>::infinity();
  for (Index i = 0; i < values.size(); ++i)
    for (Index j = i + 1; j < values.size(); ++j) gap = std::min(gap, std::abs(values(i) - values(j)) / scale);
  return gap;
}

// Unit columns with a deterministic sign: positive column sum, or positive
// largest entry when the sum vanishes.
Matrix normalise_columns(const Matrix& m) {
  Matrix out = m;
  for (Index j = 0; j < out.cols(); ++j) {
    auto col = out.col(j);
    const double n = col.norm();
    if (n > 0.0) col /= n;
    double sign = col.sum();
    if (std::abs(sign) < 1e-8) {
      Index arg = 0;
      col.cwiseAbs().maxCoeff(&arg);
      sign = col(arg);
    }
    if (sign < 0.0) col = -col;
  }
  return out;
}

// Row (j * n3 + l) holds b(j) * c(l), matching Tensor3::unfold(0).
Matrix khatri_rao(const Matrix& b, const Matrix& c) {
  Matrix out(b.rows() * c.rows(), b.cols());
  for (Index r = 0; r < b.cols(); ++r)
    for (Index j = 0; j < b.rows(); ++j) out.col(r).segment(j * c.rows(), c.rows()) = b(j, r) * c.col(r);
  return out;
}

// Least-squares solve of unfold = X * krᵀ for X.
Matrix solve_factor(const Matrix& unfolded, const Matrix& kr) {
  return kr.colPivHouseholderQr().solve(unfolded.transpose()).transpose();
}

double relative_residual(const Tensor3& tensor, const Matrix& a, const Matrix& b, const Matrix& c) {
  const Matrix diff = tensor.unfold(0) - a * khatri_rao(b, c).transpose();
  const double norm = tensor.norm();
  return norm > 0.0 ? diff.norm() / norm : diff.norm();
}

// A few alternating least-squares sweeps from the algebraic solution. They
// only ever replace the factors by a strictly better fit.
void polish(const Tensor3& tensor, Cpd& cpd) {
  const Matrix t0 = tensor.unfold(0), t1 = tensor.unfold(1), t2 = tensor.unfold(2);
  for (int sweep = 0; sweep < kPolishSweeps && cpd.residual > 1e-15; ++sweep) {
    Matrix a = solve_factor(t0, khatri_rao(cpd.b, cpd.c));
    Matrix b = solve_factor(t1, khatri_rao(a, cpd.c));
    Matrix c = solve_factor(t2, khatri_rao(a, b));
    b = normalise_columns(b);
    c = normalise_columns(c);
    a = solve_factor(t0, khatri_rao(b, c));
    const double residual = relative_residual(tensor, a, b, c);
    if (!(residual < cpd.residual)) break;
    cpd.a = std::move(a);
    cpd.b = std::move(b);
    cpd.c = std::move(c);
    cpd.residual = residual;
  }
}

}  // namespace

Cpd jennrich(const Tensor3& tensor, Index rank, std::uint64_t seed) {
  const auto [n1, n2, n3] = tensor.dims();
  if (rank < 1) throw Error(ErrorKind::Shape, "decomposition rank must be positive");
  if (rank > n2 || rank > n3)
    throw Error(ErrorKind::Precondition, "rank " + std::to_string(rank) + " exceeds tensor dimensions");
  const Matrix unfold1 = tensor.unfold(1), unfold2 = tensor.unfold(2);
  if (numerical_rank(unfold1) < rank || numerical_rank(unfold2) < rank)
    throw Error(ErrorKind::Precondition,
                "mode-2/3 unfoldings have numerical rank below " + std::to_string(rank));

  const Matrix u2 = leading_left_singular_vectors(unfold1, rank);
  const Matrix u3 = leading_left_singular_vectors(unfold2, rank);

  std::string last_failure;
  for (int attempt = 0; attempt <= kRetries; ++attempt) {
    Rng rng(stream_seed(seed, static_cast<std::uint64_t>(attempt)));
    const Vector u = rng.normal_vector(n1);
    const Vector v = rng.normal_vector(n1);
    const Matrix wu = u2.transpose() * tensor.contract_first(u) * u3;
    const Matrix wv = u2.transpose() * tensor.contract_first(v) * u3;

    Matrix b_white, c_white;
    double gap = std::numeric_limits<double>::infinity();
    if (rank == 1) {
      b_white = Matrix::Ones(1, 1);
      c_white = Matrix::Ones(1, 1);
    } else {
      Eigen::FullPivLU<Matrix> lu_u(wu), lu_v(wv);
      if (!lu_u.isInvertible() || !lu_v.isInvertible()) {
        last_failure = "slice mixture is singular";
        continue;
      }
      const Spectrum left = real_spectrum(wu * lu_v.inverse());
      const Spectrum right = real_spectrum((lu_u.inverse() * wv).transpose());
      if (left.imaginary > kImaginaryTolerance || right.imaginary > kImaginaryTolerance) {
        last_failure = "eigenvalues are not real";
        continue;
      }
      gap = relative_gap(left.values);
      if (gap < kEigengapTolerance) {
        last_failure = "eigengap " + std::to_string(gap) + " below tolerance";
        continue;
      }
      // Components of the second problem carry reciprocal eigenvalues.
      std::vector<Index> match(static_cast<std::size_t>(rank), -1);
      std::vector<bool> used(static_cast<std::size_t>(rank), false);
      bool paired = true;
      for (Index i = 0; i < rank && paired; ++i) {
        Index best = -1;
        double best_err = std::numeric_limits<double>::infinity();
        for (Index j = 0; j < rank; ++j) {
          const double err = std::abs(left.values(i) * right.values(j) - 1.0);
          if (err < best_err) {
            best_err = err;
            best = j;
          }
        }
        if (best_err > kPairingTolerance || used[static_cast<std::size_t>(best)]) paired = false;
        else {
          used[static_cast<std::size_t>(best)] = true;
          match[static_cast<std::size_t>(i)] = best;
        }
      }
      if (!paired) {
        last_failure = "eigenvalues could not be paired as reciprocals";
        continue;
      }
      b_white = left.vectors;
      c_white = permute_columns(right.vectors, match);
    }

    Cpd cpd;
    cpd.b = normalise_columns(u2 * b_white);
    cpd.c = normalise_columns(u3 * c_white);
    cpd.a = solve_factor(tensor.unfold(0), khatri_rao(cpd.b, cpd.c));
    cpd.residual = relative_residual(tensor, cpd.a, cpd.b, cpd.c);
    cpd.eigengap = gap;
    cpd.attempts = attempt + 1;
    polish(tensor, cpd);
    return cpd;
  }
  throw Error(ErrorKind::Degeneracy,
              "simultaneous diagonalisation failed after " + std::to_string(kRetries + 1) +
                  " draws: " + last_failure);
}

}  // namespace maskident
