#include <cmath>
#include <string>

#include "maskident/error.hpp"
#include "recovery_internal.hpp"

namespace maskident {

namespace detail {

void require_adjacent(const MaskedTask& task) {
  const int pivot = pivot_time(task);
  for (int t : task.sorted_times())
    if (std::abs(t - pivot) == 1) return;
  throw Error(ErrorKind::NonAdjacent,
              "task " + task.to_string() +
                  " has no adjacent token pair; matching predictors only pins down a power of T");
}

Matrix normalise_column_sums(const Matrix& m) {
  Matrix out = m;
  const double scale = std::max(max_abs(m), 1e-300);
  for (Index j = 0; j < out.cols(); ++j) {
    const double s = out.col(j).sum();
    if (std::abs(s) <= 1e-12 * scale)
      throw Error(ErrorKind::Inconsistent, "factor column " + std::to_string(j) + " sums to zero");
    out.col(j) /= s;
  }
  return out;
}

void check_transition(const Matrix& transition, double tolerance) {
  const double low = transition.minCoeff();
  if (low < -tolerance)
    throw Error(ErrorKind::Inconsistent, "recovered transition has entry " + std::to_string(low));
  const double sums = (transition.colwise().sum().array() - 1.0).abs().maxCoeff();
  if (sums > tolerance)
    throw Error(ErrorKind::Inconsistent,
                "recovered transition column sums deviate from 1 by " + std::to_string(sums));
}

Matrix transition_from_factors(const Matrix& pivot_factor, const TimedFactor& adjacent, int pivot) {
  const Matrix step = pinv(pivot_factor) * adjacent.factor;
  return adjacent.time > pivot ? step : Matrix(step.transpose());
}

HmmParams finish_hmm(const MaskedTask& task, const std::vector<TimedFactor>& conditioned,
                     const std::vector<TimedFactor>& predicted, bool rescale_conditioned,
                     double tolerance) {
  const int pivot = pivot_time(task);
  std::vector<TimedFactor> all;
  for (const auto& f : predicted) all.push_back({f.time, normalise_column_sums(f.factor)});
  for (const auto& f : conditioned) {
    Matrix m = f.factor;
    if (rescale_conditioned) m = all.front().factor.rowwise().sum().asDiagonal() * m;
    all.push_back({f.time, normalise_column_sums(m)});
  }

  const TimedFactor* at_pivot = nullptr;
  const TimedFactor* adjacent = nullptr;
  for (const auto& f : all) {
    if (f.time == pivot) at_pivot = &f;
    // Prefer the later neighbour; either determines T.
    if (std::abs(f.time - pivot) == 1 && (adjacent == nullptr || f.time > adjacent->time)) adjacent = &f;
  }
  if (at_pivot == nullptr) throw Error(ErrorKind::InvalidTask, "no factor at the pivot time");
  if (adjacent == nullptr) require_adjacent(task);

  HmmParams out{at_pivot->factor, transition_from_factors(at_pivot->factor, *adjacent, pivot)};
  check_transition(out.transition, tolerance);
  return out;
}

}  // namespace detail

void score(RecoveryReport& report, const ModelParams& truth) {
  const auto primary = [](const ModelParams& p) -> std::pair<const Matrix*, const Matrix*> {
    if (const auto* h = std::get_if<HmmParams>(&p)) return {&h->emission, &h->transition};
    const auto& g = std::get<GhmmParams>(p);
    return {&g.means, &g.transition};
  };
  if (truth.index() != report.recovered.index())
    throw Error(ErrorKind::Shape, "ground truth and recovered parameters are different model kinds");
  const auto [truth_primary, truth_transition] = primary(truth);
  const auto [rec_primary, rec_transition] = primary(report.recovered);
  if (truth_primary->rows() != rec_primary->rows() || truth_primary->cols() != rec_primary->cols())
    throw Error(ErrorKind::Shape, "ground truth and recovered parameters differ in shape");

  const Alignment alignment = align_columns(*truth_primary, *rec_primary, false, false);
  const Index k = truth_primary->cols();
  Matrix aligned(k, k);
  for (Index i = 0; i < k; ++i)
    for (Index j = 0; j < k; ++j)
      aligned(i, j) = (*rec_transition)(alignment.permutation[static_cast<std::size_t>(i)],
                                        alignment.permutation[static_cast<std::size_t>(j)]);
  report.permutation = alignment.permutation;
  report.primary_error = alignment.residual;
  report.transition_error = (aligned - *truth_transition).norm();
}

}  // namespace maskident
