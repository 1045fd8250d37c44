#pragma once

// CODATA 2018 values, SI.
namespace levisim::constants {

inline constexpr double k_boltzmann = 1.380649e-23;     // J/K
inline constexpr double hbar = 1.054571817e-34;         // J*s
inline constexpr double avogadro = 6.02214076e23;       // 1/mol
inline constexpr double gas_constant = 8.314462618;     // J/(mol*K)
inline constexpr double pi = 3.14159265358979323846;
inline constexpr double two_pi = 2.0 * pi;

}  // namespace levisim::constants
