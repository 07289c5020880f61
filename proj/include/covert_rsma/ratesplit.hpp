#pragma once

// Rate-splitting downlink: SINRs, finite-blocklength rates, common-rate
// sharing and per-user totals.

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <numbers>
#include <string_view>
#include <utility>
#include <vector>

#include "covert_rsma/channel.hpp"
#include "covert_rsma/numerics.hpp"

namespace covert_rsma {

/// Shortest codeword (channel uses) for which the normal approximation is used.
inline constexpr double kMinBlocklength = 10.0;

enum class Regime { kFinite, kInfinite };

inline std::string_view to_string(Regime r) {
  return r == Regime::kFinite ? "FBL" : "IBL";
}

struct Beamformer {
  ComplexVector common;
  std::vector<ComplexVector> privates;

  [[nodiscard]] double total_power() const noexcept {
    double p = common.squared_norm();
    for (const auto& v : privates) p += v.squared_norm();
    return p;
  }

  static Beamformer zeros(std::size_t users, std::size_t antennas) {
    Beamformer bf;
    bf.common = ComplexVector(antennas);
    bf.privates.assign(users, ComplexVector(antennas));
    return bf;
  }
};

struct SplitLengths {
  std::vector<double> common;   // l_k^c
  std::vector<double> priv;     // l_k^p
  std::vector<double> totals;   // L_k
};

struct RateReport {
  std::vector<double> sinr_common;
  std::vector<double> sinr_private;
  double common_rate = 0.0;
  std::vector<double> common_shares;
  std::vector<double> private_rates;
  std::vector<double> totals;
  double sum_rate = 0.0;
  double min_rate = 0.0;
};

struct Sinr {
  double common = 0.0;
  double priv = 0.0;
};

/// Common stream is decoded first treating all private streams as noise; the
/// private stream is then decoded after SIC with the other privates as noise.
/// Receiver noise is normalized to 1.
inline Sinr sinr(const ChannelState& channel, const Beamformer& bf,
                 std::size_t user) {
  const std::size_t k = channel.realized.size();
  if (user >= k) throw DimensionError("sinr: user index out of range");
  if (bf.privates.size() != k) {
    throw DimensionError("sinr: beamformer has " +
                         std::to_string(bf.privates.size()) +
                         " private precoders for " + std::to_string(k) + " users");
  }
  const ComplexVector& h = channel.realized[user];
  double all_private = 0.0;
  double own = 0.0;
  for (std::size_t j = 0; j < k; ++j) {
    const double g = std::norm(inner_product(h, bf.privates[j]));
    all_private += g;
    if (j == user) own = g;
  }
  const double common_gain = std::norm(inner_product(h, bf.common));
  Sinr out;
  out.common = common_gain / (all_private + 1.0);
  out.priv = own / (all_private - own + 1.0);
  return out;
}

/// Normal-approximation achievable rate (bps/Hz) at blocklength `uses` and
/// decoding error probability `delta`, made an achievable-rate curve: never
/// above log2(1 + sinr) and nondecreasing in the SINR. The raw approximation
/// is quasi-convex in the SINR and, through its log2(n)/(2n) term, exceeds
/// capacity below the crossing point g* where the two are equal; there the
/// rate is capacity, and past g* it is the larger of the raw value and the
/// rate at g* (a receiver can always discard SINR).
inline double fbl_rate(double sinr_value, double uses, double delta) {
  if (!(sinr_value >= 0.0)) throw DomainError("fbl_rate: SINR must be >= 0");
  if (!(uses >= kMinBlocklength)) {
    throw DomainError("fbl_rate: blocklength below minimum");
  }
  if (sinr_value == 0.0) return 0.0;
  // delta is fixed per configuration, so the inverse is memoized.
  thread_local double cached_delta = -1.0;
  thread_local double cached_qinv = 0.0;
  if (delta != cached_delta) {
    cached_qinv = q_inverse(delta);
    cached_delta = delta;
  }
  const double g = sinr_value;
  const double capacity = std::log2(1.0 + g);
  const double bonus = std::log2(uses) / (2.0 * uses);
  const double penalty_scale = cached_qinv / (std::numbers::ln2 * std::sqrt(uses));
  if (penalty_scale <= 0.0) return capacity;
  // Raw = capacity exactly where sqrt(g(g+2))/(g+1) = t.
  const double t = bonus / penalty_scale;
  if (t >= 1.0) return capacity;
  const double g_cross = 1.0 / std::sqrt((1.0 - t) * (1.0 + t)) - 1.0;
  if (g <= g_cross) return capacity;
  const double dispersion = g * (g + 2.0) / ((g + 1.0) * (g + 1.0));
  const double raw = capacity - std::sqrt(dispersion) * penalty_scale + bonus;
  return std::max(std::log2(1.0 + g_cross), raw);
}

inline double shannon_rate(double sinr_value) { return std::log2(1.0 + sinr_value); }

/// Rate of one stream under `regime`. A stream whose share of the blocklength
/// is shorter than kMinBlocklength cannot carry a codeword and gets 0.
inline double stream_rate(double sinr_value, double uses, double delta,
                          Regime regime) {
  if (regime == Regime::kInfinite) return shannon_rate(sinr_value);
  if (uses < kMinBlocklength) return 0.0;
  return fbl_rate(sinr_value, uses, delta);
}

namespace detail {
inline void check_sizes(const ChannelState& channel, const Beamformer& bf,
                        const SplitLengths& lens, std::span<const double> delta) {
  const std::size_t k = channel.realized.size();
  if (bf.privates.size() != k || lens.common.size() != k ||
      lens.priv.size() != k || delta.size() != k) {
    throw DimensionError("rate computation: per-user inputs must have K entries");
  }
}
}  // namespace detail

/// Rate of the common stream: it must be decodable by every user.
inline double common_rate(const ChannelState& channel, const Beamformer& bf,
                          const SplitLengths& lens, std::span<const double> delta,
                          Regime regime) {
  detail::check_sizes(channel, bf, lens, delta);
  double rc = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < channel.realized.size(); ++k) {
    const Sinr s = sinr(channel, bf, k);
    rc = std::min(rc, stream_rate(s.common, lens.common[k], delta[k], regime));
  }
  return rc;
}

inline RateReport rate_report(const ChannelState& channel, const Beamformer& bf,
                              const SplitLengths& lens,
                              std::span<const double> shares,
                              std::span<const double> delta, Regime regime) {
  detail::check_sizes(channel, bf, lens, delta);
  const std::size_t k = channel.realized.size();
  if (shares.size() != k) throw DimensionError("rate_report: shares must have K entries");
  double share_sum = 0.0;
  for (double s : shares) {
    if (!(s >= 0.0)) throw DomainError("rate_report: shares must be >= 0");
    share_sum += s;
  }
  if (share_sum > 1.0 + 1e-9) throw DomainError("rate_report: shares sum above 1");

  RateReport r;
  r.sinr_common.resize(k);
  r.sinr_private.resize(k);
  r.common_shares.resize(k);
  r.private_rates.resize(k);
  r.totals.resize(k);
  double rc = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < k; ++i) {
    const Sinr s = sinr(channel, bf, i);
    r.sinr_common[i] = s.common;
    r.sinr_private[i] = s.priv;
    rc = std::min(rc, stream_rate(s.common, lens.common[i], delta[i], regime));
    r.private_rates[i] = stream_rate(s.priv, lens.priv[i], delta[i], regime);
  }
  r.common_rate = rc;
  r.min_rate = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < k; ++i) {
    r.common_shares[i] = shares[i] * rc;
    r.totals[i] = r.common_shares[i] + r.private_rates[i];
    r.sum_rate += r.totals[i];
    r.min_rate = std::min(r.min_rate, r.totals[i]);
  }
  return r;
}

/// Space-division baseline: no common stream, each private stream uses the
/// whole message length.
inline RateReport sdma_report(const ChannelState& channel,
                              const std::vector<ComplexVector>& privates,
                              std::span<const double> totals,
                              std::span<const double> delta, Regime regime) {
  const std::size_t k = channel.realized.size();
  if (privates.empty()) throw DimensionError("sdma_report: no precoders");
  Beamformer bf;
  bf.common = ComplexVector(privates.front().size());
  bf.privates = privates;
  SplitLengths lens;
  lens.common.assign(k, 0.0);
  lens.priv.assign(totals.begin(), totals.end());
  lens.totals.assign(totals.begin(), totals.end());
  const std::vector<double> shares(k, 0.0);
  return rate_report(channel, bf, lens, shares, delta, regime);
}

}  // namespace covert_rsma
