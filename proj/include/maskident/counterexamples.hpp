#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "maskident/models.hpp"
#include "maskident/predictors.hpp"

namespace maskident {

/// Two parameter sets meant to share the optimal predictor of every task in
/// `tasks`.
struct CounterexamplePair {
  ModelParams original;
  ModelParams alternative;
  std::vector<MaskedTask> tasks;
  std::string construction;
  std::optional<double> theta;
};

/// Rotation by `theta` about (1,1,1)/sqrt(3). Rows and columns sum to 1.
Matrix simplex_rotation(double theta);

inline constexpr double kDefaultStructureTolerance = 1e-12;

/// Õ = O R, T̃ = Rᵀ T R for a base with k = 3, symmetric T and emission rows
/// summing to k/d (checked at `structure_tolerance`, else Error{InvalidParams}).
/// Throws AngleTooLargeError carrying the largest feasible angle when an
/// entry leaves [0,1].
CounterexamplePair simplex_rotation_pair(const HmmParams& base, double theta,
                                         double structure_tolerance = kDefaultStructureTolerance);

/// Largest angle in (0, pi/3] with the sign of `direction` keeping every
/// entry of Õ and T̃ in [0,1], by bisection. 0 when no positive angle works.
double max_feasible_simplex_angle(const HmmParams& base, double direction = 1.0);

/// Power construction T̃ = (M^-1 R(2 pi/t)^-1 M) T(a) with a shared emission
/// (default: the d=4, k=3 fixture emission). T^t = T̃^t while T != T̃.
/// Throws Error{InfeasiblePower} when T̃ has entries below -1e-12.
CounterexamplePair power_rotation_pair(int t, double a = 0.5, std::optional<Matrix> emission = std::nullopt);

/// Same construction with shared unit-norm means (default I_3).
CounterexamplePair power_rotation_pair_gaussian(int t, double a = 0.5,
                                                std::optional<Matrix> means = std::nullopt);

/// Commutation residual ||Q T - T Q||_inf of the power-construction rotation.
double power_commutation_residual(int t, double a = 0.5);

struct HouseholderCertificate {
  Vector v_hat;
  Matrix h;
  Matrix reflected_means;  // H M
  Vector column_sums;      // of pinv(H M) (M T)
  double involution_residual = 0.0;  // ||H^2 - I||_inf
  double unit_norm_residual = 0.0;   // max | ||(HM)_i|| - 1 |
  double translation_residual = 0.0; // spread of the columns of HM - M
  double column_sum_residual = 0.0;  // max |sum + 1|
  bool verified = false;
};

/// v̂ = normalise((M^+)ᵀ 1), H = I - 2 v̂ v̂ᵀ. HM keeps every posterior but
/// makes the induced transition's columns sum to -1.
HouseholderCertificate householder_certificate(const GhmmParams& params);

/// max over `points` seeded N(0, 4 I) points of |phi_M(x) - phi_HM(x)|.
double householder_posterior_gap(const GhmmParams& params, const HouseholderCertificate& cert, Index points,
                                 std::uint64_t seed);

struct ValidationOptions {
  double tolerance = 1e-8;             // predictor discrepancy
  double distinctness = 1e-3;          // min parameter distance
  double params_tolerance = 1e-6;      // validate_* tolerance for both parameter sets
  Index gaussian_points = 200;
  std::uint64_t seed = 0;
};

struct CounterexampleReport {
  std::vector<std::pair<std::string, double>> task_discrepancy;
  double max_discrepancy = 0.0;
  double emission_distance = 0.0;   // min over Pi of ||Õ - O Pi||_F (means for G-HMM)
  double parameter_distance = 0.0;  // min over Pi of sqrt(||Õ - O Pi||^2 + ||T̃ - PiᵀT Pi||^2)
  bool params_valid = false;
  std::string params_summary;
  bool predictors_equal = false;
  bool distinct = false;
  bool passed = false;
};

/// Discrete probes: every tuple of basis inputs. Gaussian: seeded N(0, I)
/// points. Failures are report entries, never exceptions.
CounterexampleReport validate_counterexample(const CounterexamplePair& pair, const ValidationOptions& options = {});

}  // namespace maskident
