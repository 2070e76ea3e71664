#pragma once

#include <array>

namespace judgeirt::testing {

struct GateCase {
  double cv;
  double rho;
  bool pass;
};

// Four C_V values crossed with four rho values, both thresholds hit exactly.
inline std::array<GateCase, 16> gate_cases() {
  constexpr std::array<double, 4> cvs = {0.05, 0.10, 0.1000001, 0.36};
  constexpr std::array<double, 4> rhos = {0.95, 0.70, 0.6999999, 0.30};
  std::array<GateCase, 16> out{};
  for (std::size_t i = 0; i < 4; ++i) {
    for (std::size_t k = 0; k < 4; ++k) out[i * 4 + k] = {cvs[i], rhos[k], i < 2 && k < 2};
  }
  return out;
}

}  // namespace judgeirt::testing
