#include "spikectl/lqr.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "spikectl/rng.hpp"

namespace spikectl {

void LqrWeights::validate(int n) const {
  if (Q.rows() != n || Q.cols() != n)
    throw std::invalid_argument("weights.Q must be " + std::to_string(n) + "x" + std::to_string(n));
  if ((Q - Q.transpose()).cwiseAbs().maxCoeff() > 1e-12 * std::max(1.0, Q.cwiseAbs().maxCoeff()))
    throw std::invalid_argument("weights.Q must be symmetric");
  for (int i = 0; i < n; ++i)
    if (Q(i, i) < 0.0) throw std::invalid_argument("weights.Q diagonal must be >= 0");
  if (!(R > 0.0)) throw std::invalid_argument("weights.R must be > 0");
}

LqrWeights LqrWeights::diagonal(double cart_position, const std::vector<double>& angles, double cart_velocity,
                                const std::vector<double>& angular_velocities, double r) {
  if (angles.size() != angular_velocities.size())
    throw std::invalid_argument("angle and angular velocity weights differ in length");
  const int n = static_cast<int>(angles.size());
  Vec d(2 * (n + 1));
  d[0] = cart_position;
  d[n + 1] = cart_velocity;
  for (int i = 0; i < n; ++i) {
    d[1 + i] = angles[i];
    d[n + 2 + i] = angular_velocities[i];
  }
  LqrWeights w;
  w.Q = d.asDiagonal();
  w.R = r;
  return w;
}

Controllability controllability_matrix(const LinearModel& model) {
  const int n = static_cast<int>(model.A.rows());
  Controllability c;
  c.matrix.resize(n, n);
  Vec col = model.B.col(0);
  for (int k = 0; k < n; ++k) {
    c.matrix.col(k) = col;
    col = model.A * col;
  }
  c.rank = numerical_rank(c.matrix);
  return c;
}

int numerical_rank(const Mat& input, double rel_tol) {
  Mat m = input;
  for (Eigen::Index j = 0; j < m.cols(); ++j) {
    const double nrm = m.col(j).norm();
    if (nrm > 0.0) m.col(j) /= nrm;
  }
  const Eigen::Index rows = m.rows(), cols = m.cols();
  const Eigen::Index steps = std::min(rows, cols);
  double first_pivot = 0.0;
  int rank = 0;
  for (Eigen::Index k = 0; k < steps; ++k) {
    Eigen::Index pr = k, pc = k;
    const double pivot = m.bottomRightCorner(rows - k, cols - k).cwiseAbs().maxCoeff(&pr, &pc);
    if (k == 0) first_pivot = pivot;
    if (pivot == 0.0 || pivot <= rel_tol * first_pivot) break;
    pr += k;
    pc += k;
    m.row(k).swap(m.row(pr));
    m.col(k).swap(m.col(pc));
    for (Eigen::Index i = k + 1; i < rows; ++i) {
      const double f = m(i, k) / m(k, k);
      m.row(i).tail(cols - k) -= f * m.row(k).tail(cols - k);
    }
    ++rank;
  }
  return rank;
}

namespace {

// Upper estimate of the spectral radius, ||M^64||^(1/64) by repeated squaring.
double spectral_radius_bound(const Mat& m) {
  double log_scale = 0.0;
  Mat p = m;
  for (int k = 0; k < 6; ++k) {
    const double nrm = p.norm();
    if (nrm == 0.0) return 0.0;
    p /= nrm;
    log_scale = 2.0 * (log_scale + std::log(nrm));
    p = p * p;
  }
  const double nrm = p.norm();
  if (nrm == 0.0) return 0.0;
  return std::exp((log_scale + std::log(nrm)) / 64.0);
}

}  // namespace

Mat care_residual(const LinearModel& model, const LqrWeights& w, const Mat& P) {
  const Mat& A = model.A;
  const Mat PB = P * model.B;
  return A.transpose() * P + P * A - PB * (1.0 / w.R) * PB.transpose() + w.Q;
}

namespace {

// X solving M'X + XM = C, via the Kronecker form.
Mat solve_lyapunov(const Mat& M, const Mat& C) {
  const Eigen::Index n = M.rows();
  const Mat I = Mat::Identity(n, n);
  Mat L(n * n, n * n);
  for (Eigen::Index j = 0; j < n; ++j)
    for (Eigen::Index l = 0; l < n; ++l) {
      // column-major vec: block (j, l) = I(j,l) * M' + M(l,j) * I
      L.block(j * n, l * n, n, n) = I(j, l) * M.transpose() + M(l, j) * I;
    }
  const Vec x = L.partialPivLu().solve(Eigen::Map<const Vec>(C.data(), n * n));
  return Eigen::Map<const Mat>(x.data(), n, n);
}

// Newton-Kleinman refinement of an almost-converged P; keeps the best iterate.
void polish(const LinearModel& model, const LqrWeights& w, Mat& P, double& res) {
  for (int it = 0; it < 4; ++it) {
    const Mat Acl = model.A - model.B * ((1.0 / w.R) * (model.B.transpose() * P));
    const Mat raw = P + solve_lyapunov(Acl, -care_residual(model, w, P));
    const Mat cand = 0.5 * (raw + raw.transpose());
    const double r = care_residual(model, w, cand).norm();
    if (!(r < res)) break;
    P = cand;
    res = r;
  }
}

}  // namespace

CareSolution solve_care(const LinearModel& model, const LqrWeights& w, const CareOptions& opt) {
  const int n = static_cast<int>(model.A.rows());
  w.validate(n);
  if (controllability_matrix(model).rank < n) throw CareError("solve_care: (A, B) is not controllable");

  const Mat& A = model.A;
  const Mat& B = model.B;
  const double a_norm = A.norm();
  const double q_norm = w.Q.norm();

  auto riccati = [&](const Mat& P) { return care_residual(model, w, P); };
  // Step cap from the closed-loop Lyapunov operator, whose eigenvalues are
  // sums of closed-loop eigenvalues; RK4 is stable on the real axis up to 2.78.
  auto stable_step = [&](const Mat& P) {
    const Mat Acl = A - B * ((1.0 / w.R) * (B.transpose() * P));
    return 1.0 / (2.0 * spectral_radius_bound(Acl) + 1e-300);
  };

  double h = opt.initial_step > 0.0 ? opt.initial_step : 1e-3 * (1.0 / std::max(a_norm, 1e-300) + 1.0);
  Mat P = Mat::Zero(n, n);
  Mat F = riccati(P);
  double res = F.norm();

  CareSolution sol;
  double best = res, peak = res;
  long since_best = 0;
  for (long step = 0; step < opt.max_steps; ++step) {
    // The algebraic bound is tightened tenfold to leave margin for callers that re-check it.
    if (res <= opt.rel_tolerance * std::max(1.0, P.norm()) && res <= 0.1 * opt.residual_tolerance * q_norm) {
      sol.P = P;
      sol.residual = res;
      sol.steps = step;
      return sol;
    }
    const Mat k1 = F;
    const Mat k2 = riccati(P + 0.5 * h * k1);
    const Mat k3 = riccati(P + 0.5 * h * k2);
    const Mat k4 = riccati(P + h * k3);
    const Mat raw = P + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    const Mat next = 0.5 * (raw + raw.transpose());
    const Mat F_next = riccati(next);
    const double res_next = F_next.norm();
    // Rounding level of the residual evaluation; growth below it is noise.
    const double floor = 64.0 * std::numeric_limits<double>::epsilon() * (2.0 * a_norm * next.norm() + q_norm);
    if (!std::isfinite(res_next) || (res_next > 2.0 * res && res_next > floor)) {
      h *= 0.5;
      if (h < 1e-14) throw CareError("solve_care: step size underflow");
      continue;
    }
    P = next;
    F = F_next;
    res = res_next;
    sol.horizon += h;
    // For large ||P|| the RK4 fixed point is blurred by rounding well above
    // the attainable residual; once progress stops, finish with Newton steps.
    peak = std::max(peak, res);
    if (res < 0.99 * best || res > 1e-6 * peak) {
      best = std::min(best, res);
      since_best = 0;
    } else if (++since_best >= 200) {
      sol.steps = step + 1;
      polish(model, w, P, res);
      if (res > opt.residual_tolerance * q_norm)
        throw CareError("solve_care: Riccati integration stalled at residual " + std::to_string(res));
      sol.P = P;
      sol.residual = res;
      return sol;
    }
    h = std::min(1.5 * h, stable_step(P));
  }
  throw CareError("solve_care: Riccati integration did not converge within the step budget");
}

GainVector lqr_gain(const LinearModel& model, const LqrWeights& w, const CareOptions& opt) {
  const CareSolution sol = solve_care(model, w, opt);
  GainVector g;
  g.K = (1.0 / w.R) * (model.B.transpose() * sol.P);
  return g;
}

ContractionReport check_contraction(const LinearModel& model, const GainVector& gain, int trials, double horizon,
                                    double dt, double threshold, std::uint64_t seed) {
  const int n = static_cast<int>(model.A.rows());
  const Mat Acl = model.A - model.B * gain.K;
  const long steps = static_cast<long>(std::llround(horizon / dt));
  Rng rng(seed);
  ContractionReport rep;
  rep.contracts = true;
  for (int t = 0; t < trials; ++t) {
    Vec x(n);
    for (int i = 0; i < n; ++i) x[i] = rng.normal();
    x.normalize();
    for (long k = 0; k < steps; ++k) {
      const Vec k1 = Acl * x;
      const Vec k2 = Acl * (x + 0.5 * dt * k1);
      const Vec k3 = Acl * (x + 0.5 * dt * k2);
      const Vec k4 = Acl * (x + dt * k3);
      x += (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    const double nrm = x.norm();
    rep.worst_final_norm = std::max(rep.worst_final_norm, std::isfinite(nrm) ? nrm : INFINITY);
    if (!(nrm < threshold)) rep.contracts = false;
  }
  return rep;
}

double quadratic_cost(const SimTrace& trace, const LqrWeights& w) {
  if (trace.empty()) throw std::invalid_argument("quadratic_cost: empty trace");
  auto integrand = [&](std::size_t k) {
    const Vec& x = trace.states[k];
    const double u = trace.controls[k];
    return x.dot(w.Q * x) + u * w.R * u;
  };
  double J = 0.0;
  double prev = integrand(0);
  for (std::size_t k = 1; k < trace.size(); ++k) {
    const double cur = integrand(k);
    J += 0.5 * (prev + cur) * (trace.times[k] - trace.times[k - 1]);
    prev = cur;
  }
  return J;
}

}  // namespace spikectl
