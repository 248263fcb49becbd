#pragma once

// Continuous-time LQR for a single-input plant.
//
// The Riccati solution is obtained by integrating the matrix Riccati ODE in
// time-to-go from P = 0 until it reaches its fixed point, so only linear
// solves and RK4 are needed.

#include <cstdint>
#include <stdexcept>

#include "spikectl/dynamics.hpp"
#include "spikectl/trace.hpp"

namespace spikectl {

struct LqrWeights {
  Mat Q;           // state cost, library state layout
  double R = 1.0;  // scalar control cost

  void validate(int state_size) const;

  /// Q = diag(cart_position, angles..., cart_velocity, angular_velocities...).
  static LqrWeights diagonal(double cart_position, const std::vector<double>& angles, double cart_velocity,
                             const std::vector<double>& angular_velocities, double r);
};

struct GainVector {
  Eigen::RowVectorXd K;

  /// K . X. The control law is u = -command(X).
  double command(const Vec& state) const { return K.dot(state); }
  double control(const Vec& state) const { return -command(state); }
  int size() const { return static_cast<int>(K.size()); }
};

struct Controllability {
  Mat matrix;
  int rank = 0;
};

/// [B, AB, ..., A^{n-1}B] and its numerical rank.
Controllability controllability_matrix(const LinearModel& model);

/// Rank by Gaussian elimination with complete pivoting on column-normalized
/// input; pivots below rel_tol * (largest pivot) count as zero.
int numerical_rank(const Mat& m, double rel_tol = 1e-9);

class CareError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct CareOptions {
  double initial_step = 0.0;       // 0 selects 1e-3 * (1/||A||_F + 1)
  double rel_tolerance = 1e-10;    // stop when ||dP/dtau||_F <= tol * max(1, ||P||_F)
  double residual_tolerance = 1e-8;  // accept when residual <= tol * ||Q||_F
  long max_steps = 5'000'000;
};

struct CareSolution {
  Mat P;
  double residual = 0.0;  // ||A'P + PA - PBR^-1B'P + Q||_F
  long steps = 0;
  double horizon = 0.0;   // integrated time-to-go
};

/// A'P + PA - P B R^-1 B' P + Q.
Mat care_residual(const LinearModel& model, const LqrWeights& weights, const Mat& P);

/// Stabilizing CARE solution. Throws CareError when (A, B) is not
/// controllable or the integration does not settle within the step budget.
CareSolution solve_care(const LinearModel& model, const LqrWeights& weights, const CareOptions& options = {});

/// K = R^-1 B' P.
GainVector lqr_gain(const LinearModel& model, const LqrWeights& weights, const CareOptions& options = {});

struct ContractionReport {
  bool contracts = false;
  double worst_final_norm = 0.0;
};

/// Simulates xdot = (A - BK) x from `trials` random unit initial states and
/// reports whether every final norm falls below `threshold`.
ContractionReport check_contraction(const LinearModel& model, const GainVector& gain, int trials = 20,
                                    double horizon = 20.0, double dt = 1e-3, double threshold = 1e-3,
                                    std::uint64_t seed = 0);

/// Trapezoidal integral of X'QX + uRu over the trace.
double quadratic_cost(const SimTrace& trace, const LqrWeights& weights);

}  // namespace spikectl
