#include "levisim/model.hpp"

#include <cmath>
#include <stdexcept>

#include "levisim/constants.hpp"

namespace levisim {

namespace {

void require(bool ok, const char* what) {
  if (!ok) throw std::invalid_argument(what);
}

bool finite(double v) { return std::isfinite(v); }

}  // namespace

ParticleParams ParticleParams::resolved() const {
  ParticleParams out = *this;
  if (out.mass == 0.0 && out.radius > 0.0) {
    out.mass = out.density * (4.0 / 3.0) * constants::pi * out.radius *
               out.radius * out.radius;
  }
  return out;
}

void ParticleParams::validate() const {
  require(finite(radius) && radius > 0.0, "particle radius must be > 0");
  require(finite(density) && density > 0.0, "particle density must be > 0");
  const double m = resolved().mass;
  require(finite(m) && m > 0.0, "particle mass must be > 0");
}

void TrapParams::validate() const {
  require(omega.allFinite(), "trap frequencies must be finite");
  require((omega.array() > 0.0).all(), "trap frequencies must be > 0");
}

void GasEnvironment::validate() const {
  require(finite(pressure) && pressure >= 0.0, "pressure must be >= 0");
  require(finite(temperature) && temperature > 0.0, "temperature must be > 0");
  require(finite(gas_molar_mass) && gas_molar_mass > 0.0,
          "gas molar mass must be > 0");
}

void NoiseParams::validate() const {
  require(measurement_sigma.allFinite() &&
              (measurement_sigma.array() >= 0.0).all(),
          "measurement sigma must be >= 0");
  require((detection_efficiency.array() >= 0.0).all() &&
              (detection_efficiency.array() <= 1.0).all(),
          "detection efficiency must be in [0,1]");
  require(backaction_force_psd.allFinite() &&
              (backaction_force_psd.array() >= 0.0).all(),
          "backaction PSD must be >= 0");
  if (quantum_enabled) {
    // With eta > 0 the imprecision-backaction product must satisfy the
    // quantum-limit closure (up to roundoff).
    for (int i = 0; i < 3; ++i) {
      const double eta = detection_efficiency[i];
      if (eta <= 0.0) continue;
      const double s_imp = measurement_sigma[i] * measurement_sigma[i];
      const double product = s_imp * backaction_force_psd[i];
      const double limit =
          constants::hbar * constants::hbar / (4.0 * eta);
      require(s_imp > 0.0, "quantum axis needs nonzero imprecision");
      require(std::abs(product - limit) <= 1e-6 * limit,
              "imprecision-backaction product violates the quantum limit");
    }
  }
}

Vec3 NoiseParams::backaction_from_imprecision(const Vec3& s_imp,
                                              const Vec3& eta) {
  Vec3 out = Vec3::Zero();
  for (int i = 0; i < 3; ++i) {
    if (eta[i] > 0.0 && s_imp[i] > 0.0) {
      out[i] = constants::hbar * constants::hbar / (4.0 * eta[i] * s_imp[i]);
    }
  }
  return out;
}

double ActuatorCalibration::z_reference() const {
  return c_nv_z.value_or(std::abs(c_nv(0, 0)));
}

void ActuatorCalibration::validate() const {
  require(c_nv.allFinite(), "transduction coefficients must be finite");
  // the diagonal pair anchors the normalization; cross couplings may be 0
  require(std::abs(c_nv(0, 0)) > 0.0 && std::abs(c_nv(1, 1)) > 0.0,
          "diagonal transduction coefficients must be nonzero");
  if (c_nv_z) require(*c_nv_z > 0.0, "c_nv_z must be > 0 when present");
}

void PhysicalSystem::validate() const {
  particle.validate();
  trap.validate();
  gas.validate();
  noise.validate();
  actuator.validate();
}

double PhysicalSystem::drag() const { return drag_coefficient(gas, particle); }

StateSpace PhysicalSystem::state_space() const {
  return build_state_space(trap, drag(), actuator, particle, gas);
}

double drag_coefficient(const GasEnvironment& env,
                        const ParticleParams& particle) {
  env.validate();
  particle.validate();
  if (env.pressure == 0.0) return 0.0;
  const ParticleParams p = particle.resolved();
  const double vbar = std::sqrt(8.0 * constants::gas_constant *
                                env.temperature /
                                (constants::pi * env.gas_molar_mass));
  return 15.8 * p.radius * p.radius * env.pressure / (p.mass * vbar);
}

Eigen::Matrix3d actuator_matrix(const ActuatorCalibration& calib,
                                const ParticleParams& particle) {
  calib.validate();
  particle.validate();
  const double m = particle.resolved().mass;
  const double cxx = calib.c_nv(0, 0);
  Eigen::Matrix3d b = Eigen::Matrix3d::Zero();
  b(0, 0) = calib.xx_orientation / m;
  b(0, 1) = calib.c_nv(0, 1) / cxx / m;
  b(1, 0) = calib.c_nv(1, 0) / cxx / m;
  b(1, 1) = calib.c_nv(1, 1) / cxx / m;
  b(2, 2) = calib.b_z_fallback != 0.0 ? calib.b_z_fallback : 1.0 / m;
  return b;
}

Eigen::Matrix3d electrode_force_matrix(const ActuatorCalibration& calib,
                                       const ParticleParams& particle) {
  const double m = particle.resolved().mass;
  Eigen::Matrix3d e = -std::abs(calib.c_nv(0, 0)) * m *
                      actuator_matrix(calib, particle);
  // The z pair keeps its own reference coefficient.
  e(2, 2) = -calib.z_reference() * m *
            actuator_matrix(calib, particle)(2, 2);
  return e;
}

StateSpace build_state_space(const TrapParams& trap, double gamma,
                             const ActuatorCalibration& actuator,
                             const ParticleParams& particle,
                             const GasEnvironment& env) {
  trap.validate();
  env.validate();
  if (!std::isfinite(gamma) || gamma < 0.0) {
    throw std::invalid_argument("gamma must be finite and >= 0");
  }
  StateSpace ss;
  ss.A.block<3, 3>(0, 3) = Eigen::Matrix3d::Identity();
  ss.A.block<3, 3>(3, 0) = (-trap.omega.array().square()).matrix().asDiagonal();
  ss.A.block<3, 3>(3, 3) = -gamma * Eigen::Matrix3d::Identity();
  ss.B.block<3, 3>(3, 0) = actuator_matrix(actuator, particle);
  ss.C.block<3, 3>(0, 0) = Eigen::Matrix3d::Identity();
  const double m = particle.resolved().mass;
  const double q = 2.0 * gamma * constants::k_boltzmann * env.temperature / m;
  ss.process_noise_psd.block<3, 3>(3, 3) = q * Eigen::Matrix3d::Identity();
  return ss;
}

}  // namespace levisim
