#pragma once

#include <Eigen/Dense>
#include <utility>

#include "levisim/model.hpp"

namespace levisim {

// How the input matrix is discretized. Exact ZOH is the default;
// the rectangle rule B_d = B*T_s matches the published controller.
enum class InputRule { zoh, rectangle };

// How the one-step disturbance covariance is computed. van_loan is
// exact for the linear SDE; euler is the first-order Q*T_s variant
// kept for fidelity comparisons.
enum class NoiseRule { van_loan, euler };

struct DiscreteStateSpace {
  Mat6 A_d = Mat6::Identity();
  Mat63 B_d = Mat63::Zero();
  Mat36 C_d = Mat36::Zero();
  double T_s = 0.0;
  Mat6 process_covariance = Mat6::Zero();
};

// Quadratic cost x'Qx + u'Ru. Q_d's units make x'Qx an energy when
// built by energy_cost().
struct CostWeights {
  Mat6 Q_d = Mat6::Zero();
  Eigen::Matrix3d R_d = Eigen::Matrix3d::Zero();

  // Q = m [[diag(Omega^2),0],[0,I]], R = (effort/m) diag(Omega^-2).
  static CostWeights energy_cost(const TrapParams& trap,
                                 const ParticleParams& particle,
                                 double effort_scale = 100.0);
  // Position-only variant: velocity block of Q zeroed.
  static CostWeights position_only_cost(const TrapParams& trap,
                                        const ParticleParams& particle,
                                        double effort_scale = 100.0);
  void validate() const;
};

using GainMatrix = Eigen::Matrix<double, 3, 6>;
// true = entry forced to zero after the Riccati solve.
using GainMask = Eigen::Matrix<bool, 3, 6>;

GainMask mask_none();
// Block structure: xy rows couple only to x,y positions/velocities,
// z row only to z. cold_damping_z additionally zeroes the z position
// gain.
GainMask mask_block_structure(bool cold_damping_z);

struct ControllerGains {
  GainMatrix K = GainMatrix::Zero();     // continuous
  GainMatrix K_d = GainMatrix::Zero();   // discrete, masked
  Mat6 S = Mat6::Zero();
  Mat6 S_d = Mat6::Zero();
  GainMask structure_mask = GainMask::Constant(false);
};

struct KalmanGain {
  Eigen::Matrix<double, 6, 3> L = Eigen::Matrix<double, 6, 3>::Zero();
  Mat6 P = Mat6::Zero();  // steady-state a-priori error covariance
};

// A_d as the truncated scaled Taylor series of exp(A T_s); terms are
// added until the term norm drops below tol. Throws ConvergenceError
// if the cap is hit first.
Eigen::MatrixXd matrix_exponential_series(const Eigen::MatrixXd& a_times_t,
                                          double tol = 1e-15,
                                          int max_terms = 200);

// One-step covariance of the disturbance via the Van Loan augmented
// exponential: exact for white noise of intensity psd driving xdot=Ax.
Eigen::MatrixXd van_loan_covariance(const Eigen::MatrixXd& A,
                                    const Eigen::MatrixXd& psd, double T_s);

DiscreteStateSpace discretize(const StateSpace& ss, double T_s,
                              double tol = 1e-15,
                              InputRule input_rule = InputRule::zoh,
                              NoiseRule noise_rule = NoiseRule::van_loan);

// Continuous algebraic Riccati equation
//   A'S + SA + Q - S B R^-1 B' S = 0
// via the matrix sign function with Newton-Kleinman polish.
// Returns (S, K = R^-1 B' S).
std::pair<Eigen::MatrixXd, Eigen::MatrixXd> solve_care(
    const Eigen::MatrixXd& A, const Eigen::MatrixXd& B,
    const Eigen::MatrixXd& Q, const Eigen::MatrixXd& R);

std::pair<Mat6, GainMatrix> solve_care(const StateSpace& ss,
                                       const CostWeights& continuous_weights);

// Discrete algebraic Riccati equation via the structure-preserving
// doubling iteration, with a fixed-point fallback.
Eigen::MatrixXd solve_dare(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B,
                           const Eigen::MatrixXd& Q, const Eigen::MatrixXd& R);

Mat6 solve_dare(const DiscreteStateSpace& dss, const CostWeights& weights);

// K_d = (R + B'SB)^-1 B'SA, masked entries zeroed afterwards.
// Re-verifies that the masked closed loop is still Schur stable.
GainMatrix lqr_gain_discrete(const DiscreteStateSpace& dss, const Mat6& S_d,
                             const CostWeights& weights, const GainMask& mask);

// Full design pipeline: discretize, solve, mask.
ControllerGains design_controller(const StateSpace& ss, double T_s,
                                  const CostWeights& weights,
                                  const GainMask& mask,
                                  InputRule input_rule = InputRule::zoh);

// Steady-state Kalman gain for y = C_d x + v, cov(v) = measurement_cov.
// P solves the filter DARE (dual of the control DARE); L = PC'(CPC'+V)^-1.
KalmanGain kalman_steady_gain(const DiscreteStateSpace& dss,
                              const Eigen::Matrix3d& measurement_cov);

// Generic version used by tests and the duality cross-check.
std::pair<Eigen::MatrixXd, Eigen::MatrixXd> kalman_steady_gain(
    const Eigen::MatrixXd& A_d, const Eigen::MatrixXd& C_d,
    const Eigen::MatrixXd& process_cov, const Eigen::MatrixXd& measurement_cov);

// Steady solution of  X = F X F' + Q  by doubling; spectral radius of
// F must be < 1.
Eigen::MatrixXd solve_discrete_lyapunov(const Eigen::MatrixXd& F,
                                        const Eigen::MatrixXd& Q);

double spectral_radius(const Eigen::MatrixXd& M);

}  // namespace levisim
