#include "levisim/riccati.hpp"

#include <unsupported/Eigen/KroneckerProduct>
#include <unsupported/Eigen/MatrixFunctions>

#include <cmath>
#include <sstream>
#include <stdexcept>

#include "levisim/errors.hpp"

namespace levisim {

using Eigen::MatrixXd;

namespace {

void require(bool ok, const char* what) {
  if (!ok) throw std::invalid_argument(what);
}

MatrixXd symmetrized(const MatrixXd& m) { return 0.5 * (m + m.transpose()); }

void check_symmetric_psd(const MatrixXd& Q, const char* name) {
  if ((Q - Q.transpose()).cwiseAbs().maxCoeff() >
      1e-10 * std::max(1.0, Q.cwiseAbs().maxCoeff())) {
    throw std::invalid_argument(std::string(name) + " must be symmetric");
  }
  Eigen::LDLT<MatrixXd> ldlt(symmetrized(Q));
  if (ldlt.info() != Eigen::Success ||
      (ldlt.vectorD().array() < -1e-10 * std::max(1.0, Q.norm())).any()) {
    throw std::invalid_argument(std::string(name) +
                                " must be positive semidefinite");
  }
}

void check_symmetric_pd(const MatrixXd& R, const char* name) {
  if ((R - R.transpose()).cwiseAbs().maxCoeff() >
      1e-10 * std::max(1.0, R.cwiseAbs().maxCoeff())) {
    throw std::invalid_argument(std::string(name) + " must be symmetric");
  }
  Eigen::LLT<MatrixXd> llt(symmetrized(R));
  if (llt.info() != Eigen::Success) {
    throw std::invalid_argument(std::string(name) +
                                " must be positive definite");
  }
}

// X solving A'X + XA = -Q via the Kronecker system; n is small here.
MatrixXd solve_continuous_lyapunov(const MatrixXd& A, const MatrixXd& Q) {
  const Eigen::Index n = A.rows();
  MatrixXd I = MatrixXd::Identity(n, n);
  MatrixXd M = Eigen::kroneckerProduct(I, A.transpose()).eval() +
               Eigen::kroneckerProduct(A.transpose(), I).eval();
  Eigen::VectorXd rhs = Eigen::Map<const Eigen::VectorXd>(Q.data(), n * n);
  Eigen::VectorXd x = M.lu().solve(-rhs);
  return symmetrized(Eigen::Map<MatrixXd>(x.data(), n, n));
}

// One Newton-Hewer defect-correction step: solve the Stein equation
// Acl' D Acl - D = -(F(S) - S) for the defect D and add it. Recovers
// the digits the doubling iteration leaves behind on ill-conditioned
// systems.
MatrixXd dare_polish(const MatrixXd& A, const MatrixXd& B, const MatrixXd& Q,
                     const MatrixXd& R, MatrixXd S) {
  const Eigen::Index n = A.rows();
  const MatrixXd I_big = MatrixXd::Identity(n * n, n * n);
  auto defect_of = [&](const MatrixXd& X) -> MatrixXd {
    const MatrixXd gram = R + B.transpose() * X * B;
    const MatrixXd K = gram.ldlt().solve(B.transpose() * X * A);
    return symmetrized(A.transpose() * X * (A - B * K) + Q - X);
  };
  double best = defect_of(S).norm();
  for (int it = 0; it < 3; ++it) {
    const MatrixXd gram = R + B.transpose() * S * B;
    const MatrixXd K = gram.ldlt().solve(B.transpose() * S * A);
    const MatrixXd Acl = A - B * K;
    const MatrixXd defect = defect_of(S);
    if (defect.norm() <= 1e-14 * std::max(1.0, S.norm())) break;
    const MatrixXd kron =
        Eigen::kroneckerProduct(Acl.transpose(), Acl.transpose()).eval();
    Eigen::VectorXd rhs =
        Eigen::Map<const Eigen::VectorXd>(defect.data(), n * n);
    Eigen::VectorXd delta = (I_big - kron).lu().solve(rhs);
    const MatrixXd S_next =
        symmetrized(S + Eigen::Map<MatrixXd>(delta.data(), n, n));
    const double res_next = defect_of(S_next).norm();
    if (!std::isfinite(res_next) || res_next >= best) break;
    S = S_next;
    best = res_next;
  }
  return S;
}

// Osborne/EISPACK-style balancing: returns a power-of-two diagonal D
// (stored as a vector) and rescales A <- D^-1 A D in place so row and
// column norms match. Exact similarity; undone after the exponential.
// Without it the mixed position/velocity units (entries 1 vs Omega^2)
// cost ~8 digits in the series.
Eigen::VectorXd balance_in_place(MatrixXd& A) {
  const Eigen::Index n = A.rows();
  Eigen::VectorXd d = Eigen::VectorXd::Ones(n);
  for (int pass = 0; pass < 100; ++pass) {
    bool converged = true;
    for (Eigen::Index i = 0; i < n; ++i) {
      double c = 0.0, r = 0.0;
      for (Eigen::Index j = 0; j < n; ++j) {
        if (j == i) continue;
        c += std::abs(A(j, i));
        r += std::abs(A(i, j));
      }
      if (c == 0.0 || r == 0.0) continue;
      double f = 1.0;
      const double s = c + r;
      while (c < r / 2.0) {
        c *= 2.0;
        r /= 2.0;
        f *= 2.0;
      }
      while (c > r * 2.0) {
        c /= 2.0;
        r *= 2.0;
        f /= 2.0;
      }
      if (c + r < 0.95 * s) {
        converged = false;
        d[i] *= f;
        A.col(i) *= f;
        A.row(i) /= f;
      }
    }
    if (converged) break;
  }
  return d;
}

}  // namespace

double spectral_radius(const MatrixXd& M) {
  Eigen::EigenSolver<MatrixXd> es(M, /*computeEigenvectors=*/false);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

MatrixXd matrix_exponential_series(const MatrixXd& a_times_t, double tol,
                                   int max_terms) {
  require(tol > 0.0, "series tolerance must be > 0");
  const Eigen::Index n = a_times_t.rows();
  MatrixXd balanced = a_times_t;
  const Eigen::VectorXd d = balance_in_place(balanced);
  MatrixXd sum = MatrixXd::Identity(n, n);
  MatrixXd term = MatrixXd::Identity(n, n);
  double term_norm = 0.0;
  bool done = false;
  for (int k = 1; k <= max_terms && !done; ++k) {
    term = (term * balanced) / static_cast<double>(k);
    sum += term;
    term_norm = term.norm();
    done = term_norm < tol * std::max(1.0, sum.norm());
  }
  if (!done) {
    throw ConvergenceError(
        "matrix exponential series did not reach tolerance; last term norm " +
            std::to_string(term_norm),
        term_norm);
  }
  return d.asDiagonal() * sum * d.cwiseInverse().asDiagonal();
}

MatrixXd van_loan_covariance(const MatrixXd& A, const MatrixXd& psd,
                             double T_s) {
  const Eigen::Index n = A.rows();
  MatrixXd block = MatrixXd::Zero(2 * n, 2 * n);
  block.topLeftCorner(n, n) = -A * T_s;
  block.topRightCorner(n, n) = psd * T_s;
  block.bottomRightCorner(n, n) = A.transpose() * T_s;
  const Eigen::VectorXd d = balance_in_place(block);
  const MatrixXd e =
      d.asDiagonal() * block.exp() * d.cwiseInverse().asDiagonal();
  MatrixXd a_d = e.bottomRightCorner(n, n).transpose();
  return symmetrized(a_d * e.topRightCorner(n, n));
}

DiscreteStateSpace discretize(const StateSpace& ss, double T_s, double tol,
                              InputRule input_rule, NoiseRule noise_rule) {
  require(std::isfinite(T_s) && T_s > 0.0, "T_s must be > 0");
  require(tol > 0.0, "tol must be > 0");
  DiscreteStateSpace d;
  d.T_s = T_s;
  d.A_d = matrix_exponential_series(ss.A * T_s, tol);
  d.C_d = ss.C;
  switch (input_rule) {
    case InputRule::rectangle:
      d.B_d = ss.B * T_s;
      break;
    case InputRule::zoh: {
      Eigen::FullPivLU<MatrixXd> lu(ss.A);
      if (lu.isInvertible()) {
        d.B_d = lu.solve((d.A_d - Mat6::Identity()) * ss.B);
      } else {
        // B_d = sum_k A^k T^{k+1} B / (k+1)! = T * sum_k (A T)^k/(k+1)! B
        MatrixXd sum = MatrixXd::Identity(6, 6);
        MatrixXd term = MatrixXd::Identity(6, 6);
        const MatrixXd at = ss.A * T_s;
        for (int k = 1; k <= 200; ++k) {
          term = (term * at) / static_cast<double>(k + 1);
          sum += term;
          if (term.norm() < tol * std::max(1.0, sum.norm())) break;
        }
        d.B_d = T_s * sum * ss.B;
      }
      break;
    }
  }
  switch (noise_rule) {
    case NoiseRule::van_loan:
      d.process_covariance = van_loan_covariance(ss.A, ss.process_noise_psd, T_s);
      break;
    case NoiseRule::euler:
      d.process_covariance = ss.process_noise_psd * T_s;
      break;
  }
  return d;
}

std::pair<MatrixXd, MatrixXd> solve_care(const MatrixXd& A, const MatrixXd& B,
                                         const MatrixXd& Q, const MatrixXd& R) {
  const Eigen::Index n = A.rows();
  require(A.cols() == n && B.rows() == n, "dimension mismatch");
  require(Q.rows() == n && Q.cols() == n, "Q dimension mismatch");
  require(R.rows() == B.cols() && R.cols() == B.cols(), "R dimension mismatch");
  check_symmetric_psd(Q, "Q");
  check_symmetric_pd(R, "R");

  if (Q.isZero(0.0)) {
    return {MatrixXd::Zero(n, n), MatrixXd::Zero(B.cols(), n)};
  }

  Eigen::LLT<MatrixXd> r_llt(symmetrized(R));
  const MatrixXd G = B * r_llt.solve(B.transpose());

  // Matrix sign of the Hamiltonian, Newton iteration with determinant
  // scaling.
  MatrixXd Z(2 * n, 2 * n);
  Z.topLeftCorner(n, n) = A;
  Z.topRightCorner(n, n) = -G;
  Z.bottomLeftCorner(n, n) = -Q;
  Z.bottomRightCorner(n, n) = -A.transpose();

  double delta = std::numeric_limits<double>::infinity();
  for (int it = 0; it < 100 && delta > 1e-14; ++it) {
    Eigen::PartialPivLU<MatrixXd> lu(Z);
    double log_det = 0.0;
    for (Eigen::Index i = 0; i < 2 * n; ++i) {
      log_det += std::log(std::abs(lu.matrixLU()(i, i)));
    }
    const double c = std::exp(log_det / static_cast<double>(2 * n));
    if (!std::isfinite(c) || c == 0.0) {
      throw ConvergenceError("sign iteration hit a singular iterate", c);
    }
    MatrixXd Z_next = 0.5 * (Z / c + c * lu.inverse());
    delta = (Z_next - Z).norm() / std::max(1.0, Z_next.norm());
    Z = Z_next;
  }

  // (Z + I) [I; S] = 0  =>  stack and least-squares for S.
  MatrixXd lhs(2 * n, n), rhs(2 * n, n);
  lhs.topRows(n) = Z.topRightCorner(n, n);
  lhs.bottomRows(n) = Z.bottomRightCorner(n, n) + MatrixXd::Identity(n, n);
  rhs.topRows(n) = -(Z.topLeftCorner(n, n) + MatrixXd::Identity(n, n));
  rhs.bottomRows(n) = -Z.bottomLeftCorner(n, n);
  MatrixXd S = symmetrized(lhs.colPivHouseholderQr().solve(rhs));

  // Newton-Kleinman polish; also recovers digits lost in the sign
  // iteration.
  auto residual = [&](const MatrixXd& X) {
    return (A.transpose() * X + X * A + Q - X * G * X).norm();
  };
  double res = residual(S);
  for (int it = 0; it < 20; ++it) {
    const MatrixXd K = r_llt.solve(B.transpose() * S);
    const MatrixXd Acl = A - B * K;
    const MatrixXd S_next = solve_continuous_lyapunov(
        Acl, symmetrized(Q + K.transpose() * R * K));
    const double res_next = residual(S_next);
    if (!std::isfinite(res_next) || res_next >= res) break;
    S = S_next;
    res = res_next;
    if (res <= 1e-13 * std::max(1.0, S.norm())) break;
  }

  if (res > 1e-9 * std::max(S.norm(), 1e-300)) {
    throw ConvergenceError(
        "CARE residual above tolerance (stabilizability/detectability?)", res);
  }
  const MatrixXd K = r_llt.solve(B.transpose() * S);
  Eigen::EigenSolver<MatrixXd> es(A - B * K, false);
  if ((es.eigenvalues().real().array() >= 0.0).any()) {
    throw ConvergenceError("CARE closed loop is not Hurwitz", res);
  }
  return {S, K};
}

std::pair<Mat6, GainMatrix> solve_care(const StateSpace& ss,
                                       const CostWeights& w) {
  auto [S, K] = solve_care(MatrixXd(ss.A), MatrixXd(ss.B), MatrixXd(w.Q_d),
                           MatrixXd(w.R_d));
  return {Mat6(S), GainMatrix(K)};
}

MatrixXd solve_dare(const MatrixXd& A, const MatrixXd& B, const MatrixXd& Q,
                    const MatrixXd& R) {
  const Eigen::Index n = A.rows();
  require(A.cols() == n && B.rows() == n, "dimension mismatch");
  require(Q.rows() == n && Q.cols() == n, "Q dimension mismatch");
  require(R.rows() == B.cols() && R.cols() == B.cols(), "R dimension mismatch");
  check_symmetric_psd(Q, "Q");
  check_symmetric_pd(R, "R");

  // Structure-preserving doubling (Chu, Fan, Lin & Wang 2004).
  MatrixXd A_k = A;
  MatrixXd G = B * symmetrized(R).llt().solve(B.transpose());
  MatrixXd H = Q;
  const MatrixXd I = MatrixXd::Identity(n, n);
  std::ostringstream history;
  double rel = std::numeric_limits<double>::infinity();
  for (int it = 0; it < 120; ++it) {
    const MatrixXd W = I + G * H;
    Eigen::PartialPivLU<MatrixXd> lu(W);
    const MatrixXd V1 = lu.solve(A_k);
    const MatrixXd V2 = lu.solve(G.transpose()).transpose();
    const MatrixXd H_next = H + V1.transpose() * H * A_k;
    G += A_k * V2 * A_k.transpose();
    A_k = A_k * V1;
    rel = (H_next - H).norm() / std::max(H_next.norm(), 1e-300);
    H = H_next;
    if (!H.allFinite()) break;
    if (rel <= 1e-14) return dare_polish(A, B, Q, R, symmetrized(H));
    history << rel << " ";
  }

  // Fixed-point fallback: the plain Riccati recursion.
  MatrixXd S = Q;
  for (long it = 0; it < 200000; ++it) {
    const MatrixXd BtSB = R + B.transpose() * S * B;
    const MatrixXd K = BtSB.ldlt().solve(B.transpose() * S * A);
    const MatrixXd S_next = symmetrized(
        A.transpose() * S * (A - B * K) + Q);
    const double d = (S_next - S).norm() / std::max(S_next.norm(), 1e-300);
    S = S_next;
    if (d <= 1e-14) return dare_polish(A, B, Q, R, S);
  }
  throw ConvergenceError(
      "DARE iteration diverged; doubling residual history: " + history.str(),
      rel);
}

Mat6 solve_dare(const DiscreteStateSpace& dss, const CostWeights& w) {
  return Mat6(solve_dare(MatrixXd(dss.A_d), MatrixXd(dss.B_d),
                         MatrixXd(w.Q_d), MatrixXd(w.R_d)));
}

CostWeights CostWeights::energy_cost(const TrapParams& trap,
                                     const ParticleParams& particle,
                                     double effort_scale) {
  const double m = particle.resolved().mass;
  CostWeights w;
  w.Q_d.block<3, 3>(0, 0) =
      m * trap.omega.array().square().matrix().asDiagonal();
  w.Q_d.block<3, 3>(3, 3) = m * Eigen::Matrix3d::Identity();
  w.R_d = (effort_scale / m) *
          trap.omega.array().square().inverse().matrix().asDiagonal();
  return w;
}

CostWeights CostWeights::position_only_cost(const TrapParams& trap,
                                            const ParticleParams& particle,
                                            double effort_scale) {
  CostWeights w = energy_cost(trap, particle, effort_scale);
  w.Q_d.block<3, 3>(3, 3).setZero();
  return w;
}

void CostWeights::validate() const {
  check_symmetric_psd(MatrixXd(Q_d), "Q_d");
  check_symmetric_pd(MatrixXd(R_d), "R_d");
}

GainMask mask_none() { return GainMask::Constant(false); }

GainMask mask_block_structure(bool cold_damping_z) {
  GainMask mask = GainMask::Constant(true);
  for (int row = 0; row < 2; ++row) {
    for (int col : {0, 1, 3, 4}) mask(row, col) = false;
  }
  mask(2, 2) = cold_damping_z;  // z position gain dropped for cold damping
  mask(2, 5) = false;
  return mask;
}

GainMatrix lqr_gain_discrete(const DiscreteStateSpace& dss, const Mat6& S_d,
                             const CostWeights& weights, const GainMask& mask) {
  const Eigen::Matrix3d gram =
      weights.R_d + dss.B_d.transpose() * S_d * dss.B_d;
  GainMatrix K_d = gram.ldlt().solve(dss.B_d.transpose() * S_d * dss.A_d);
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 6; ++j) {
      if (mask(i, j)) K_d(i, j) = 0.0;
    }
  }
  const Mat6 closed = dss.A_d - dss.B_d * K_d;
  Eigen::EigenSolver<MatrixXd> es(MatrixXd(closed), false);
  const auto eigs = es.eigenvalues();
  // Half an ulp of slack: the undamped open loop sits exactly on the
  // unit circle and masked axes may keep it there.
  const double limit = 1.0 + 1e-12;
  if ((eigs.cwiseAbs().array() >= limit).any()) {
    std::ostringstream msg;
    msg << "masked gain destabilizes the loop; |eigenvalues| > 1:";
    for (Eigen::Index i = 0; i < eigs.size(); ++i) {
      if (std::abs(eigs[i]) >= limit) {
        msg << " (" << eigs[i].real() << (eigs[i].imag() < 0 ? "-" : "+")
            << std::abs(eigs[i].imag()) << "i)";
      }
    }
    throw std::runtime_error(msg.str());
  }
  return K_d;
}

ControllerGains design_controller(const StateSpace& ss, double T_s,
                                  const CostWeights& weights,
                                  const GainMask& mask, InputRule input_rule) {
  ControllerGains g;
  g.structure_mask = mask;
  const DiscreteStateSpace dss = discretize(ss, T_s, 1e-15, input_rule);
  g.S_d = solve_dare(dss, weights);
  g.K_d = lqr_gain_discrete(dss, g.S_d, weights, mask);
  auto [S, K] = solve_care(ss, weights);
  g.S = S;
  g.K = K;
  return g;
}

std::pair<MatrixXd, MatrixXd> kalman_steady_gain(const MatrixXd& A_d,
                                                 const MatrixXd& C_d,
                                                 const MatrixXd& process_cov,
                                                 const MatrixXd& measurement_cov) {
  // Filter DARE is the control DARE on the dual pair (A', C').
  const MatrixXd P = solve_dare(A_d.transpose(), C_d.transpose(), process_cov,
                                measurement_cov);
  const MatrixXd innovation = C_d * P * C_d.transpose() + measurement_cov;
  const MatrixXd L =
      innovation.ldlt().solve(C_d * P).transpose();
  const MatrixXd estimator =
      A_d - L * C_d * A_d;  // current-estimator closed loop
  if (spectral_radius(estimator) >= 1.0 + 1e-12) {
    throw ConvergenceError("Kalman estimator is not stable (detectability?)",
                           spectral_radius(estimator));
  }
  return {P, L};
}

KalmanGain kalman_steady_gain(const DiscreteStateSpace& dss,
                              const Eigen::Matrix3d& measurement_cov) {
  auto [P, L] = kalman_steady_gain(MatrixXd(dss.A_d), MatrixXd(dss.C_d),
                                   MatrixXd(dss.process_covariance),
                                   MatrixXd(measurement_cov));
  KalmanGain k;
  k.P = Mat6(P);
  k.L = Eigen::Matrix<double, 6, 3>(L);
  return k;
}

MatrixXd solve_discrete_lyapunov(const MatrixXd& F, const MatrixXd& Q) {
  if (spectral_radius(F) >= 1.0) {
    throw std::invalid_argument("discrete Lyapunov needs spectral radius < 1");
  }
  MatrixXd X = symmetrized(Q);
  MatrixXd F_k = F;
  for (int it = 0; it < 200; ++it) {
    const MatrixXd X_next = X + F_k * X * F_k.transpose();
    const double d = (X_next - X).norm();
    X = X_next;
    if (d <= 1e-16 * std::max(X.norm(), 1e-300)) return symmetrized(X);
    F_k = F_k * F_k;
    if (F_k.norm() < 1e-150) return symmetrized(X);
  }
  return symmetrized(X);
}

}  // namespace levisim
