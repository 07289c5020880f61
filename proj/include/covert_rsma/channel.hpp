#pragma once

// Uniform-linear-array style channel realizations with Gaussian CSI error.

#include <cmath>
#include <numbers>
#include <vector>

#include "covert_rsma/numerics.hpp"

namespace covert_rsma {

struct ChannelParams {
  std::vector<double> gains;    // g_k
  std::vector<double> phases;   // phi_k, radians
  std::vector<double> dof;      // alpha_k, error decay exponent
  double warden_gain = 0.4;     // g_w
  double warden_phase = std::numbers::pi / 6.0;
  int antennas = 3;             // M
  double warden_noise_var = 1.0;  // sigma_w^2

  [[nodiscard]] std::size_t users() const noexcept { return gains.size(); }

  void validate() const {
    const std::size_t k = gains.size();
    if (k == 0) throw ConfigError("channel: at least one user required");
    if (phases.size() != k || dof.size() != k) {
      throw ConfigError("channel: gains, phases and dof must have equal length");
    }
    if (antennas < 1) throw ConfigError("channel: antennas must be >= 1");
    for (double g : gains) {
      if (!(g > 0.0)) throw ConfigError("channel: user gains must be > 0");
    }
    if (!(warden_gain > 0.0)) throw ConfigError("channel: warden gain must be > 0");
    if (!(warden_noise_var > 0.0)) {
      throw ConfigError("channel: warden noise variance must be > 0");
    }
  }

  /// Three-user setting used throughout the evaluation.
  static ChannelParams three_user_default() {
    ChannelParams p;
    p.gains = {1.0, 0.8, 0.2};
    p.phases = {0.0, std::numbers::pi / 9.0, 2.0 * std::numbers::pi / 9.0};
    p.dof = {0.6, 0.6, 0.6};
    return p;
  }
};

struct ChannelState {
  std::vector<ComplexVector> estimated;  // deterministic part
  std::vector<ComplexVector> error;      // CSI error
  std::vector<ComplexVector> realized;   // estimated + error
  ComplexVector warden;
};

/// g * [1, e^{j phi}, ..., e^{j (M-1) phi}].
inline ComplexVector realize_deterministic(double gain, double phase, int antennas) {
  if (antennas < 1) throw DimensionError("realize_deterministic: M must be >= 1");
  ComplexVector v(static_cast<std::size_t>(antennas));
  for (int m = 0; m < antennas; ++m) {
    v[static_cast<std::size_t>(m)] = gain * std::polar(1.0, phase * m);
  }
  return v;
}

/// CSI error variance g * P_t^{-alpha}; shrinks as transmit power grows.
inline double error_variance(double gain, double power, double dof) {
  if (!(power > 0.0)) throw DomainError("error_variance: P_t must be > 0");
  if (!(gain >= 0.0)) throw DomainError("error_variance: gain must be >= 0");
  return gain * std::pow(power, -dof);
}

/// Only the CSI error consumes randomness; with fixed params the deterministic
/// parts are identical across calls.
inline ChannelState draw_channel_state(const ChannelParams& params, double power,
                                       Rng& rng) {
  params.validate();
  ChannelState s;
  const std::size_t k = params.users();
  const auto m = static_cast<std::size_t>(params.antennas);
  s.estimated.reserve(k);
  s.error.reserve(k);
  s.realized.reserve(k);
  for (std::size_t i = 0; i < k; ++i) {
    s.estimated.push_back(
        realize_deterministic(params.gains[i], params.phases[i], params.antennas));
    const double var = error_variance(params.gains[i], power, params.dof[i]);
    s.error.push_back(sample_complex_gaussian(rng, var, m));
    s.realized.push_back(s.estimated[i] + s.error[i]);
  }
  s.warden = realize_deterministic(params.warden_gain, params.warden_phase,
                                   params.antennas);
  return s;
}

/// Redraws only the error terms of an existing state.
inline void redraw_errors(ChannelState& s, const ChannelParams& params,
                          double power, Rng& rng) {
  const auto m = static_cast<std::size_t>(params.antennas);
  for (std::size_t i = 0; i < s.estimated.size(); ++i) {
    const double var = error_variance(params.gains[i], power, params.dof[i]);
    s.error[i] = sample_complex_gaussian(rng, var, m);
    s.realized[i] = s.estimated[i] + s.error[i];
  }
}

}  // namespace covert_rsma
