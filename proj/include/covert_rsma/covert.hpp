#pragma once

// Covertness against a radiometer-style warden: relative entropy between the
// warden's idle and busy observation laws, and the detection-error bound.

#include <algorithm>
#include <cmath>
#include <numbers>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "covert_rsma/channel.hpp"
#include "covert_rsma/numerics.hpp"
#include "covert_rsma/ratesplit.hpp"

namespace covert_rsma {

class CovertBudget {
 public:
  explicit CovertBudget(double epsilon) : epsilon_(epsilon) {
    if (!(epsilon > 0.0 && epsilon < 1.0)) {
      throw ConfigError("covert budget: epsilon must lie in (0, 1)");
    }
  }
  [[nodiscard]] double epsilon() const noexcept { return epsilon_; }
  /// Largest admissible relative entropy, 2 eps^2.
  [[nodiscard]] double threshold() const noexcept { return 2.0 * epsilon_ * epsilon_; }

 private:
  double epsilon_;
};

namespace detail {
inline void check_kl_args(double warden_gain, double power, double noise_sd) {
  if (!(noise_sd > 0.0)) throw DomainError("kl: warden noise sd must be > 0");
  if (!(warden_gain >= 0.0)) throw DomainError("kl: warden gain must be >= 0");
  if (!(power >= 0.0)) throw DomainError("kl: power must be >= 0");
}
}  // namespace detail

/// D(N(0, s^2) || N(0, g P + s^2)) in nats.
inline double kl_closed_form(double warden_gain, double power, double noise_sd) {
  detail::check_kl_args(warden_gain, power, noise_sd);
  // With x = g P / s^2: ln(b / a) + a^2 / (2 b^2) - 1/2
  //                   = (log1p(x) - x / (1 + x)) / 2.
  const double x = warden_gain * power / (noise_sd * noise_sd);
  const double kl = 0.5 * (std::log1p(x) - x / (1.0 + x));
  return std::max(0.0, kl);
}

/// Same divergence by adaptive Gauss-Kronrod quadrature of
/// p0(x) ln(p0(x) / p1(x)) over [-c max(a, b), c max(a, b)].
inline double kl_numeric(double warden_gain, double power, double noise_sd,
                         double truncation = 12.0) {
  detail::check_kl_args(warden_gain, power, noise_sd);
  const double a = noise_sd;
  const double b = std::sqrt(warden_gain * power + a * a);
  const double log_ratio = std::log(b / a);
  const double inv_a2 = 1.0 / (a * a);
  const double inv_b2 = 1.0 / (b * b);
  const double norm = 1.0 / (std::sqrt(2.0 * std::numbers::pi) * a);
  auto integrand = [&](double x) {
    const double x2 = x * x;
    const double p0 = norm * std::exp(-0.5 * x2 * inv_a2);
    return p0 * (log_ratio - 0.5 * x2 * (inv_a2 - inv_b2));
  };
  const double half_width = truncation * std::max(a, b);
  // Integrand is even; integrate the right half on pieces scaled to p0's width
  // so the adaptive rule sees the peak.
  double total = 0.0;
  double lo = 0.0;
  double hi = std::min(half_width, 8.0 * a);
  while (lo < half_width) {
    double err = 0.0;
    const double piece = boost::math::quadrature::gauss_kronrod<double, 61>::integrate(
        integrand, lo, hi, 15, 1e-14, &err);
    if (!std::isfinite(piece) || err > 1e-11) {
      throw NumericalError("kl_numeric: quadrature did not converge");
    }
    total += piece;
    lo = hi;
    hi = std::min(half_width, hi * 2.0);
  }
  return 2.0 * total;
}

/// Lower bound 1 - sqrt(D / 2) on the warden's total detection error.
inline double detection_error_lower_bound(double kl) {
  if (!(kl >= 0.0)) throw DomainError("detection_error_lower_bound: kl must be >= 0");
  return std::max(0.0, 1.0 - std::sqrt(kl / 2.0));
}

struct CovertCheck {
  bool covert = true;
  double kl = 0.0;
  double radiated_power = 0.0;
};

/// Evaluates the divergence at the power the beamformer actually radiates.
inline CovertCheck is_covert(const Beamformer& bf, const ChannelParams& params,
                             const CovertBudget& budget) {
  CovertCheck c;
  c.radiated_power = bf.total_power();
  c.kl = kl_closed_form(params.warden_gain, c.radiated_power,
                        std::sqrt(params.warden_noise_var));
  c.covert = c.kl <= budget.threshold();
  return c;
}

/// Radiated power at which the divergence equals the budget threshold.
inline double max_covert_power(const CovertBudget& budget, double warden_gain,
                               double noise_sd) {
  if (!(warden_gain > 0.0)) throw DomainError("max_covert_power: warden gain must be > 0");
  const double target = budget.threshold();
  double lo = 0.0;
  double hi = 1.0;
  while (kl_closed_form(warden_gain, hi, noise_sd) < target) hi *= 2.0;
  while (hi - lo > 1e-13 * hi) {
    const double mid = 0.5 * (lo + hi);
    if (kl_closed_form(warden_gain, mid, noise_sd) < target) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

}  // namespace covert_rsma
