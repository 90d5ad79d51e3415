#include <gtest/gtest.h>

#include "maskident/error.hpp"
#include "maskident/models.hpp"
#include "maskident/predictors.hpp"
#include "maskident/tensor.hpp"
#include "oracles.hpp"

using namespace maskident;

namespace {

Matrix unit_columns(const Matrix& m) { return m * m.colwise().norm().cwiseInverse().asDiagonal(); }

// Factor error of a decomposition against the generating factors: columns are
// matched once on B, then every factor is compared after per-column rescaling.
double factor_error(const Cpd& cpd, const Matrix& a, const Matrix& b, const Matrix& c) {
  const Alignment align = align_columns(unit_columns(b), cpd.b, false, true);
  double worst = 0.0;
  for (const auto& [truth, got] : {std::pair{&a, &cpd.a}, std::pair{&b, &cpd.b}, std::pair{&c, &cpd.c}}) {
    const Matrix reference = unit_columns(*truth);
    const Matrix permuted = permute_columns(unit_columns(*got), align.permutation);
    for (Index j = 0; j < reference.cols(); ++j) {
      const double s = reference.col(j).dot(permuted.col(j)) < 0.0 ? -1.0 : 1.0;
      worst = std::max(worst, (permuted.col(j) - s * reference.col(j)).norm());
    }
  }
  return worst;
}

}  // namespace

// -----------------------------------------------------------------------------
// Tensor3

TEST(Tensor3, RowMajorLayout) {
  std::vector<double> data(24);
  for (std::size_t i = 0; i < data.size(); ++i) data[i] = static_cast<double>(i);
  const Tensor3 t({2, 3, 4}, data);
  EXPECT_EQ(t(1, 2, 3), 23.0);
  EXPECT_EQ(t(0, 1, 2), 6.0);
  EXPECT_EQ(t.unfold(0)(1, 2 * 4 + 3), 23.0);
  EXPECT_EQ(t.unfold(1)(2, 1 * 4 + 3), 23.0);
  EXPECT_EQ(t.unfold(2)(3, 1 * 3 + 2), 23.0);
}

TEST(Tensor3, RejectsBadData) {
  EXPECT_THROW(Tensor3({2, 2, 2}, std::vector<double>(7)), Error);
  std::vector<double> bad(8, 0.0);
  bad[3] = std::nan("");
  EXPECT_THROW(Tensor3({2, 2, 2}, bad), Error);
}

TEST(Tensor3, ContractFirstAndOuter) {
  Rng rng(3);
  const Vector a = rng.normal_vector(3), b = rng.normal_vector(4), c = rng.normal_vector(2);
  Tensor3 t(3, 4, 2);
  t.add_outer(a, b, c, 2.0);
  const Vector w = rng.normal_vector(3);
  EXPECT_LT(oracles::max_abs(t.contract_first(w) - 2.0 * w.dot(a) * b * c.transpose()), 1e-14);
  EXPECT_NEAR(t.norm(), 2.0 * a.norm() * b.norm() * c.norm(), 1e-12);
}

// -----------------------------------------------------------------------------
// Kruskal rank

TEST(KruskalRank, Identity) { EXPECT_EQ(kruskal_rank(Matrix::Identity(4, 4)), 4); }

TEST(KruskalRank, DuplicatedColumn) {
  Rng rng(1);
  Matrix m = rng.normal_matrix(5, 4);
  m.col(3) = m.col(1);
  EXPECT_EQ(kruskal_rank(m), 1);
}

TEST(KruskalRank, ZeroColumn) {
  Matrix m = Matrix::Identity(3, 3);
  m.col(2).setZero();
  EXPECT_EQ(kruskal_rank(m), 0);
}

TEST(KruskalRank, RandomGaussianIsFull) {
  Rng rng(2);
  EXPECT_EQ(kruskal_rank(rng.normal_matrix(6, 4)), 4);
}

TEST(KruskalRank, DependentTripleLimitsRank) {
  Rng rng(4);
  Matrix m = rng.normal_matrix(5, 4);
  m.col(2) = m.col(0) + m.col(1);
  EXPECT_EQ(kruskal_rank(m), 2);
  EXPECT_EQ(numerical_rank(m), 3);
}

TEST(KruskalRank, BoundedByRankAndEqualOnGeneric) {
  Rng rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    const Index rows = 2 + rng.below(6), cols = 1 + rng.below(7);
    const Matrix m = rng.normal_matrix(rows, cols);
    EXPECT_EQ(kruskal_rank(m), numerical_rank(m));
  }
}

TEST(KruskalRank, SizeLimit) {
  try {
    kruskal_rank(Matrix::Identity(13, 13));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::SizeLimit);
  }
}

TEST(KruskalCondition, Examples) {
  const Matrix i3 = Matrix::Identity(3, 3);
  const KruskalCheck ok = kruskal_condition(i3, i3, i3);
  EXPECT_TRUE(ok.holds);
  EXPECT_EQ(ok.slack, 1);
  Matrix dup = i3;
  dup.col(2) = dup.col(0);
  EXPECT_FALSE(kruskal_condition(i3, dup, i3).holds);
}

TEST(KruskalCondition, RecoveryTensorFactors) {
  const HmmParams p = random_hmm(5, 3, 21);
  // Factors of sum_j e_j ⊗ f(e_j) for x2x3|x1: rows of O, O, OT.
  const Matrix a = p.emission * Matrix::Identity(3, 3);
  EXPECT_TRUE(kruskal_condition(a, p.emission, p.emission * p.transition).holds);
}

// -----------------------------------------------------------------------------
// Jennrich

TEST(Jennrich, DiagonalTensor) {
  const Matrix i3 = Matrix::Identity(3, 3);
  const Cpd cpd = jennrich(Tensor3::from_factors(i3, i3, i3), 3, 0);
  EXPECT_LT(factor_error(cpd, i3, i3, i3), 1e-12);
  EXPECT_LT(cpd.residual, 1e-12);
}

TEST(Jennrich, RankOne) {
  Rng rng(8);
  const Matrix a = rng.normal_matrix(3, 1), b = rng.normal_matrix(4, 1), c = rng.normal_matrix(2, 1);
  const Cpd cpd = jennrich(Tensor3::from_factors(a, b, c), 1, 0);
  EXPECT_LT(factor_error(cpd, a, b, c), 1e-12);
  EXPECT_LT(cpd.residual, 1e-12);
}

TEST(Jennrich, RandomRankTwoReconstructs) {
  Rng rng(9);
  const Matrix a = unit_columns(rng.normal_matrix(4, 2)), b = unit_columns(rng.normal_matrix(4, 2)),
               c = unit_columns(rng.normal_matrix(4, 2));
  const Tensor3 t = Tensor3::from_factors(a, b, c);
  const Cpd cpd = jennrich(t, 2, 11);
  Tensor3 diff = cpd.reconstruct();
  double worst = 0.0;
  for (std::size_t i = 0; i < t.data().size(); ++i) worst = std::max(worst, std::abs(diff.data()[i] - t.data()[i]));
  EXPECT_LT(worst, 1e-9);
}

TEST(Jennrich, RecoversFactorsAcrossSeeds) {
  int accepted = 0;
  for (std::uint64_t seed = 0; accepted < 100 && seed < 400; ++seed) {
    Rng rng(seed);
    const Index k = 2 + static_cast<Index>(seed % 3);
    const Index n1 = k + rng.below(7 - k), n2 = k + rng.below(7 - k), n3 = k + rng.below(7 - k);
    const Matrix a = rng.normal_matrix(n1, k), b = rng.normal_matrix(n2, k), c = rng.normal_matrix(n3, k);
    const Cpd cpd = jennrich(Tensor3::from_factors(a, b, c), k, seed);
    if (cpd.eigengap < 1e-4) continue;
    ++accepted;
    EXPECT_LT(factor_error(cpd, a, b, c), 1e-8) << "seed " << seed;
  }
  EXPECT_EQ(accepted, 100);
}

TEST(Jennrich, SeedReproducible) {
  Rng rng(17);
  const Tensor3 t = Tensor3::from_factors(rng.normal_matrix(5, 3), rng.normal_matrix(5, 3), rng.normal_matrix(4, 3));
  const Cpd x = jennrich(t, 3, 42), y = jennrich(t, 3, 42);
  EXPECT_EQ(x.a, y.a);
  EXPECT_EQ(x.b, y.b);
  EXPECT_EQ(x.c, y.c);
  EXPECT_EQ(x.residual, y.residual);
}

TEST(Jennrich, RankDeficientModeIsRejected) {
  Rng rng(18);
  Matrix b = rng.normal_matrix(4, 3);
  b.col(2) = b.col(0);
  const Tensor3 t = Tensor3::from_factors(rng.normal_matrix(4, 3), b, rng.normal_matrix(4, 3));
  EXPECT_THROW(jennrich(t, 3, 0), Error);
}

TEST(Jennrich, RepeatedSliceRatiosFail) {
  // Identical mode-1 columns make every slice mixture ratio equal.
  const Matrix i2 = Matrix::Identity(2, 2);
  const Matrix a = Matrix::Ones(3, 2);
  try {
    jennrich(Tensor3::from_factors(a, i2, i2), 2, 0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Degeneracy);
  }
}

// -----------------------------------------------------------------------------
// Alignment

TEST(AlignColumns, Swap) {
  Rng rng(1);
  const Matrix ref = rng.normal_matrix(4, 2);
  Matrix cand(4, 2);
  cand << ref.col(1), ref.col(0);
  const Alignment al = align_columns(ref, cand, false, false);
  EXPECT_EQ(al.permutation, (std::vector<Index>{1, 0}));
  EXPECT_LT(al.residual, 1e-15);
}

TEST(AlignColumns, Scaling) {
  Rng rng(2);
  const Matrix ref = rng.normal_matrix(4, 2);
  Vector s(2);
  s << 2.0, 3.0;
  const Alignment al = align_columns(ref, ref * s.asDiagonal(), true, false);
  EXPECT_LT(al.residual, 1e-14);
  EXPECT_NEAR(al.scalings(0), 2.0, 1e-14);
  EXPECT_NEAR(al.scalings(1), 3.0, 1e-14);
}

TEST(AlignColumns, SmallPerturbation) {
  Rng rng(3);
  const Matrix ref = rng.normal_matrix(5, 4);
  Matrix noise = rng.normal_matrix(5, 4);
  noise *= 1e-7 / noise.cwiseAbs().maxCoeff();
  const Alignment al = align_columns(ref, ref + noise, false, false);
  EXPECT_LE(al.residual, 1e-6 * std::sqrt(20.0));
  EXPECT_EQ(al.permutation, (std::vector<Index>{0, 1, 2, 3}));
}

TEST(AlignColumns, SignFlip) {
  Rng rng(4);
  const Matrix ref = rng.normal_matrix(3, 3);
  Matrix cand = -ref;
  const Alignment al = align_columns(ref, cand, false, true);
  EXPECT_LT(al.residual, 1e-15);
  EXPECT_EQ(al.scalings, Vector::Constant(3, -1.0));
}

TEST(AlignColumns, SizeLimit) {
  const Matrix big = Matrix::Identity(9, 9);
  try {
    align_columns(big, big, false, false);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::SizeLimit);
  }
}
