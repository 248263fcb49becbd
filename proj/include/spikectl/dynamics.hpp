#pragma once

// Cart with an n-link chain of point-mass pendula.
//
// State layout is [x, theta_1..theta_n, xdot, thetadot_1..thetadot_n] with
// theta = 0 at the upright (unstable) equilibrium for every link. Each link is
// a massless rod of length l_i carrying a point mass m_i at its tip.

#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace spikectl {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

struct SystemParams {
  int n_links = 1;
  double cart_mass = 5.0;                  // kg
  std::vector<double> link_masses{1.0};    // kg, bob mass per link
  std::vector<double> link_lengths{2.0};   // m
  double gravity = 9.81;                   // m/s^2

  /// Throws std::invalid_argument naming the offending field.
  void validate() const;

  int dof() const { return n_links + 1; }
  int state_size() const { return 2 * (n_links + 1); }
  double total_bob_mass() const;

  static SystemParams cartpole(double cart_mass = 5.0, double pole_mass = 1.0, double pole_length = 2.0);
  /// n identical links, the configuration family used for the multi-link runs.
  static SystemParams uniform_chain(int n_links, double cart_mass, double link_mass, double link_length);
};

struct LinearModel {
  Mat A;
  Mat B;
  Mat C;
  Mat D;
};

class SingularMatrixError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// -- state helpers -----------------------------------------------------------

Vec zero_state(const SystemParams& params);
/// Upright chain displaced by the given link angles (rad), everything else at rest.
Vec displaced_state(const SystemParams& params, const std::vector<double>& angles);

inline int angle_index(int link) { return 1 + link; }
inline int velocity_index(const SystemParams& p, int coord) { return p.dof() + coord; }

/// Cartpole only: library layout [x, theta, xdot, thetadot] <-> report layout [x, xdot, theta, thetadot].
Vec to_report_order(const Vec& state);
Vec from_report_order(const Vec& state);

// -- equations of motion -----------------------------------------------------

/// Inertia matrix in row-scaled form: the link rows are divided by l_i, so the
/// (0,0) entry is M + sum(m) and a_ij = [sum_{k>=max(i,j)} m_k] l_j cos(theta_i - theta_j).
Mat mass_matrix(const SystemParams& params, const Vec& state);

/// Symmetric kinetic-energy Hessian in qdot. mass_matrix = diag(1, 1/l_1, .., 1/l_n) * inertia_matrix.
Mat inertia_matrix(const SystemParams& params, const Vec& state);

/// Right-hand side of mass_matrix * qddot = forcing, same row scaling as mass_matrix.
Vec forcing(const SystemParams& params, const Vec& state, double u);

/// Generalized accelerations. Throws SingularMatrixError for nonphysical inertia.
Vec accel(const SystemParams& params, const Vec& state, double u);

/// d/dt [q; qdot].
Vec state_derivative(const SystemParams& params, const Vec& state, double u);

/// Jacobian linearization at the upright equilibrium with zero input.
LinearModel linearize(const SystemParams& params);

/// Classical RK4 with u held over the step.
Vec rk4_step(const SystemParams& params, const Vec& state, double u, double dt);

/// Kinetic plus potential energy, potential measured from the upright configuration.
double total_energy(const SystemParams& params, const Vec& state);

}  // namespace spikectl
