#pragma once

#include <chrono>
#include <vector>

#include "maskident/recovery.hpp"

namespace maskident::detail {

struct TimedFactor {
  int time = 0;
  Matrix factor;
};

class Stopwatch {
 public:
  Stopwatch() : start_(std::chrono::steady_clock::now()) {}
  double ms() const {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_;
};

/// Throws Error{NonAdjacent} unless some token sits one step from the pivot.
void require_adjacent(const MaskedTask& task);

/// Divides every column by its sum. Throws Error{Inconsistent} on a
/// vanishing column sum.
Matrix normalise_column_sums(const Matrix& m);

inline constexpr double kConsistencyTolerance = 1e-6;

/// Throws Error{Inconsistent} when entries fall below -tolerance or column
/// sums miss 1 by more than tolerance.
void check_transition(const Matrix& transition, double tolerance = kConsistencyTolerance);

/// T from the pivot-time factor O and an adjacent factor O G(pivot -> t).
Matrix transition_from_factors(const Matrix& pivot_factor, const TimedFactor& adjacent, int pivot);

/// Shared finish for the discrete pipelines: factors are the predicted and
/// conditioned modes, each equal to O G(pivot -> time) up to column scale.
/// With `rescale_conditioned`, conditioned factors are first multiplied by
/// diag(F 1) for a normalised predicted factor F (unweighted basis sums
/// divide each row by the emission row sum).
HmmParams finish_hmm(const MaskedTask& task, const std::vector<TimedFactor>& conditioned,
                     const std::vector<TimedFactor>& predicted, bool rescale_conditioned,
                     double tolerance = kConsistencyTolerance);

}  // namespace maskident::detail
