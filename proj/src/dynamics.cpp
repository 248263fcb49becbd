#include "spikectl/dynamics.hpp"

#include <cmath>
#include <numeric>

namespace spikectl {

namespace {

// mu_j = sum of bob masses at or beyond link j.
std::vector<double> outboard_masses(const SystemParams& p) {
  std::vector<double> mu(p.n_links, 0.0);
  double acc = 0.0;
  for (int j = p.n_links - 1; j >= 0; --j) {
    acc += p.link_masses[j];
    mu[j] = acc;
  }
  return mu;
}

void check_state(const SystemParams& p, const Vec& s) {
  if (s.size() != p.state_size()) {
    throw std::invalid_argument("state has length " + std::to_string(s.size()) + ", expected " +
                                std::to_string(p.state_size()));
  }
}

}  // namespace

void SystemParams::validate() const {
  if (n_links < 1) throw std::invalid_argument("plant.n_links must be >= 1");
  if (!(cart_mass > 0.0)) throw std::invalid_argument("plant.cart_mass must be > 0");
  if (static_cast<int>(link_masses.size()) != n_links)
    throw std::invalid_argument("plant.link_masses must have n_links entries");
  if (static_cast<int>(link_lengths.size()) != n_links)
    throw std::invalid_argument("plant.link_lengths must have n_links entries");
  for (int i = 0; i < n_links; ++i) {
    if (!(link_masses[i] > 0.0))
      throw std::invalid_argument("plant.link_masses[" + std::to_string(i) + "] must be > 0");
    if (!(link_lengths[i] > 0.0))
      throw std::invalid_argument("plant.link_lengths[" + std::to_string(i) + "] must be > 0");
  }
  if (!std::isfinite(gravity)) throw std::invalid_argument("plant.gravity must be finite");
}

double SystemParams::total_bob_mass() const {
  return std::accumulate(link_masses.begin(), link_masses.end(), 0.0);
}

SystemParams SystemParams::cartpole(double cart_mass, double pole_mass, double pole_length) {
  return uniform_chain(1, cart_mass, pole_mass, pole_length);
}

SystemParams SystemParams::uniform_chain(int n_links, double cart_mass, double link_mass, double link_length) {
  SystemParams p;
  p.n_links = n_links;
  p.cart_mass = cart_mass;
  p.link_masses.assign(n_links, link_mass);
  p.link_lengths.assign(n_links, link_length);
  return p;
}

Vec zero_state(const SystemParams& params) { return Vec::Zero(params.state_size()); }

Vec displaced_state(const SystemParams& params, const std::vector<double>& angles) {
  if (static_cast<int>(angles.size()) != params.n_links)
    throw std::invalid_argument("expected one initial angle per link");
  Vec s = zero_state(params);
  for (int i = 0; i < params.n_links; ++i) s[angle_index(i)] = angles[i];
  return s;
}

Vec to_report_order(const Vec& s) {
  if (s.size() != 4) throw std::invalid_argument("report ordering is defined for the cartpole only");
  Vec r(4);
  r << s[0], s[2], s[1], s[3];
  return r;
}

Vec from_report_order(const Vec& r) {
  // The permutation is its own inverse.
  return to_report_order(r);
}

Mat inertia_matrix(const SystemParams& p, const Vec& s) {
  check_state(p, s);
  const int n = p.n_links;
  const auto mu = outboard_masses(p);
  Mat H(n + 1, n + 1);
  H(0, 0) = p.cart_mass + p.total_bob_mass();
  for (int j = 0; j < n; ++j) {
    const double tj = s[1 + j];
    H(0, j + 1) = H(j + 1, 0) = mu[j] * p.link_lengths[j] * std::cos(tj);
    for (int i = 0; i <= j; ++i) {
      const double v = mu[j] * p.link_lengths[i] * p.link_lengths[j] * std::cos(s[1 + i] - tj);
      H(i + 1, j + 1) = H(j + 1, i + 1) = v;
    }
  }
  return H;
}

Mat mass_matrix(const SystemParams& p, const Vec& s) {
  Mat A = inertia_matrix(p, s);
  for (int i = 0; i < p.n_links; ++i) A.row(i + 1) /= p.link_lengths[i];
  return A;
}

namespace {

// Euler-Lagrange right-hand side in the symmetric (unscaled) form.
Vec generalized_forces(const SystemParams& p, const Vec& s, double u) {
  const int n = p.n_links;
  const auto mu = outboard_masses(p);
  const auto& l = p.link_lengths;
  Vec f(n + 1);
  double fx = u;
  for (int j = 0; j < n; ++j) {
    const double w = s[n + 2 + j];
    fx += mu[j] * l[j] * std::sin(s[1 + j]) * w * w;
  }
  f[0] = fx;
  for (int i = 0; i < n; ++i) {
    const double ti = s[1 + i];
    double fi = p.gravity * mu[i] * l[i] * std::sin(ti);
    for (int j = 0; j < n; ++j) {
      if (j == i) continue;
      const double w = s[n + 2 + j];
      fi -= mu[std::max(i, j)] * l[i] * l[j] * std::sin(ti - s[1 + j]) * w * w;
    }
    f[i + 1] = fi;
  }
  return f;
}

}  // namespace

Vec forcing(const SystemParams& p, const Vec& s, double u) {
  check_state(p, s);
  Vec f = generalized_forces(p, s, u);
  for (int i = 0; i < p.n_links; ++i) f[i + 1] /= p.link_lengths[i];
  return f;
}

Vec accel(const SystemParams& p, const Vec& s, double u) {
  const Mat H = inertia_matrix(p, s);
  Eigen::LLT<Mat> llt(H);
  if (llt.info() != Eigen::Success) throw SingularMatrixError("inertia matrix is not positive definite");
  return llt.solve(generalized_forces(p, s, u));
}

Vec state_derivative(const SystemParams& p, const Vec& s, double u) {
  const int dof = p.dof();
  Vec d(2 * dof);
  d.head(dof) = s.tail(dof);
  d.tail(dof) = accel(p, s, u);
  return d;
}

LinearModel linearize(const SystemParams& p) {
  p.validate();
  const int dof = p.dof();
  const int ns = 2 * dof;
  const auto mu = outboard_masses(p);

  const Mat H = inertia_matrix(p, zero_state(p));
  Mat G = Mat::Zero(dof, dof);
  for (int i = 0; i < p.n_links; ++i) G(i + 1, i + 1) = p.gravity * mu[i] * p.link_lengths[i];
  Eigen::LLT<Mat> llt(H);
  const Mat HinvG = llt.solve(G);
  const Vec Hinv_e0 = llt.solve(Vec::Unit(dof, 0));

  LinearModel m;
  m.A = Mat::Zero(ns, ns);
  m.A.topRightCorner(dof, dof) = Mat::Identity(dof, dof);
  m.A.bottomLeftCorner(dof, dof) = HinvG;
  m.B = Mat::Zero(ns, 1);
  m.B.bottomRows(dof) = Hinv_e0;
  m.C = Mat::Identity(ns, ns);
  m.D = Mat::Zero(ns, 1);
  return m;
}

Vec rk4_step(const SystemParams& p, const Vec& s, double u, double dt) {
  if (!(dt > 0.0)) throw std::invalid_argument("rk4_step: dt must be > 0");
  const Vec k1 = state_derivative(p, s, u);
  const Vec k2 = state_derivative(p, s + 0.5 * dt * k1, u);
  const Vec k3 = state_derivative(p, s + 0.5 * dt * k2, u);
  const Vec k4 = state_derivative(p, s + dt * k3, u);
  return s + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

double total_energy(const SystemParams& p, const Vec& s) {
  const int dof = p.dof();
  const Vec qd = s.tail(dof);
  const double kinetic = 0.5 * qd.dot(inertia_matrix(p, s) * qd);
  const auto mu = outboard_masses(p);
  double potential = 0.0;
  for (int j = 0; j < p.n_links; ++j)
    potential += p.gravity * mu[j] * p.link_lengths[j] * (std::cos(s[1 + j]) - 1.0);
  return kinetic + potential;
}

}  // namespace spikectl
