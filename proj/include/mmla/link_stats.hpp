#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "mmla/util.hpp"

namespace mmla {

/// Beam-training round over a scanned subset of K beam pairs: one beacon slot
/// per pair plus one feedback slot. The matched-filter statistic per scanned
/// pair is exponential with mean 1 + snr*L when that pair is the aligned,
/// unblocked SBPI and mean 1 + rho*snr*L otherwise; the UE reports the argmax
/// if it clears the threshold eta, otherwise "none".
struct BtStats {
  int k = 0;              // |S_BT|
  double snr = 0.0;       // target SNR during scanning
  double symbols = 0.0;   // L
  double rho = 0.0;       // sidelobe-to-mainlobe SNR ratio
  double eta = 0.0;       // detection threshold
  double delta = 0.0;     // equal false-alarm / misdetection rate at eta
  int duration() const { return k + 1; }
};

namespace detail {

inline void check_bt_args(int k, double snr, double symbols, double rho) {
  if (k < 1) throw std::invalid_argument("bt: subset size must be >= 1");
  if (snr <= 0.0 || symbols <= 0.0) throw std::invalid_argument("bt: snr and symbols must be > 0");
  if (rho < 0.0 || rho >= 1.0) throw std::invalid_argument("bt: rho must be in [0, 1)");
}

// P(any single inactive statistic <= eta) and P(the active one <= eta).
inline double cdf_inactive(double eta, double snr, double symbols, double rho) {
  return -std::expm1(-eta / (1.0 + rho * snr * symbols));
}
inline double cdf_active(double eta, double snr, double symbols) {
  return -std::expm1(-eta / (1.0 + snr * symbols));
}

}  // namespace detail

/// P(report = aligned pair | aligned pair scanned and unblocked): probability
/// that the active statistic exceeds eta and beats the K-1 inactive ones,
/// evaluated by the alternating binomial expansion of the order statistic
/// integral. Compensated extended-precision summation keeps it stable for
/// large K.
inline double bt_hit_probability(int k, double snr, double symbols, double rho, double eta) {
  detail::check_bt_args(k, snr, symbols, rho);
  if (eta < 0.0) throw std::invalid_argument("bt: eta must be >= 0");
  const long double m1 = 1.0L + static_cast<long double>(snr) * symbols;
  const long double m0 = 1.0L + static_cast<long double>(rho) * snr * symbols;
  const long double one_minus_s1 = std::exp(-static_cast<long double>(eta) / m1);
  const long double one_minus_s0 = std::exp(-static_cast<long double>(eta) / m0);
  KahanSum<long double> sum;
  long double binom = 1.0L;        // C(k-1, n)
  long double pow0 = 1.0L;         // (1 - Sigma0)^n
  for (int n = 0; n <= k - 1; ++n) {
    const long double sign = (n % 2 == 0) ? 1.0L : -1.0L;
    const long double term = sign * binom * one_minus_s1 * pow0 / (1.0L + n * m1 / m0);
    sum.add(term);
    binom = binom * (k - 1 - n) / (n + 1);
    pow0 *= one_minus_s0;
  }
  const double p = static_cast<double>(sum.value());
  return std::min(1.0, std::max(0.0, p));
}

/// The full report distribution of one BT round. `active` states whether the
/// true SBPI is unblocked AND a member of the scanned subset. Returned as
/// {P(report none), P(report the aligned member), P(report a specific other
/// member)}; with active == false, p_hit is 0 and every member carries
/// p_other_each.
struct BtOutcome {
  double p_none = 0.0;
  double p_hit = 0.0;
  double p_other_each = 0.0;
};

inline BtOutcome bt_outcome_distribution(const BtStats& bt, bool active) {
  detail::check_bt_args(bt.k, bt.snr, bt.symbols, bt.rho);
  const double s0 = detail::cdf_inactive(bt.eta, bt.snr, bt.symbols, bt.rho);
  const double s1 = detail::cdf_active(bt.eta, bt.snr, bt.symbols);
  BtOutcome out;
  if (!active) {
    out.p_none = std::pow(s0, bt.k);
    out.p_other_each = (1.0 - out.p_none) / bt.k;
    return out;
  }
  out.p_none = s1 * std::pow(s0, bt.k - 1);
  out.p_hit = bt_hit_probability(bt.k, bt.snr, bt.symbols, bt.rho, bt.eta);
  out.p_other_each =
      bt.k > 1 ? std::max(0.0, 1.0 - out.p_hit - out.p_none) / (bt.k - 1) : 0.0;
  return out;
}

/// Equal-error threshold: eta at which the false-alarm probability
/// 1 - Sigma0^K (all-inactive round still reports a beam) equals the
/// misdetection probability Sigma1 Sigma0^(K-1) (active round reports none).
/// The first is 1 -> 0 and the second 0 -> 1 in eta, so the root is unique.
inline BtStats solve_bt_threshold(int k, double snr, double symbols, double rho) {
  detail::check_bt_args(k, snr, symbols, rho);
  const auto f = [&](double eta) {
    const double s0 = detail::cdf_inactive(eta, snr, symbols, rho);
    const double s1 = detail::cdf_active(eta, snr, symbols);
    return (1.0 - std::pow(s0, k)) - s1 * std::pow(s0, k - 1);
  };
  const double hi = (1.0 + snr * symbols) * std::log(1e12);
  const RootResult r = bisect(f, 0.0, hi);
  BtStats bt;
  bt.k = k;
  bt.snr = snr;
  bt.symbols = symbols;
  bt.rho = rho;
  bt.eta = r.x;
  const double s0 = detail::cdf_inactive(r.x, snr, symbols, rho);
  bt.delta = 1.0 - std::pow(s0, k);
  return bt;
}

/// Rayleigh-fading outage probability of rate r over bandwidth w at average
/// SNR snr: P(capacity < r) = 1 - exp(-(2^(r/w) - 1)/snr).
inline double outage_probability(double rate, double snr, double bandwidth) {
  if (rate < 0.0 || snr <= 0.0 || bandwidth <= 0.0)
    throw std::invalid_argument("outage_probability: invalid arguments");
  return -std::expm1(-(std::exp2(rate / bandwidth) - 1.0) / snr);
}

/// eps-outage capacity: the largest rate whose outage probability is eps.
inline double epsilon_outage_capacity(double eps, double snr, double bandwidth) {
  if (eps <= 0.0 || eps >= 1.0 || snr <= 0.0 || bandwidth <= 0.0)
    throw std::invalid_argument("epsilon_outage_capacity: invalid arguments");
  return bandwidth * std::log2(1.0 - snr * std::log1p(-eps));
}

struct OutageTarget {
  double eps = 0.0;        // throughput-optimal outage probability
  double capacity = 0.0;   // C_eps at the optimum, bit/s
  double throughput = 0.0; // (1 - kappa)(1 - eps) C_eps, bit/s
};

/// Throughput-optimal outage target: stationary point of
/// (1 - eps)(1 - kappa) C_eps(snr), i.e. the root of
/// ln(X) X = snr with X = 1 - snr ln(1 - eps). Unique on (0, 1).
inline OutageTarget optimal_outage_target(double snr, double kappa, double bandwidth) {
  if (snr <= 0.0 || bandwidth <= 0.0 || kappa < 0.0 || kappa >= 1.0)
    throw std::invalid_argument("optimal_outage_target: invalid arguments");
  const auto g = [&](double eps) {
    const double x = 1.0 - snr * std::log1p(-eps);
    return std::log(x) * x - snr;
  };
  const RootResult r = bisect(g, 1e-300, 1.0 - 1e-16);
  OutageTarget t;
  t.eps = r.x;
  t.capacity = epsilon_outage_capacity(t.eps, snr, bandwidth);
  t.throughput = (1.0 - kappa) * (1.0 - t.eps) * t.capacity;
  return t;
}

/// Data-transmission round bookkeeping: T_DT slots, payload in the first
/// T_DT - 1 at rate C_eps, pilot (fraction kappa of a slot) piggybacked on
/// the second-to-last slot, UE feedback in the last.
struct DtStats {
  int bpi = 0;
  double snr = 0.0;
  int duration = 2;
  double kappa = 0.0;
  double symbols = 0.0;  // L
  double rho = 0.0;
  double eta = 0.0;
  double delta = 0.0;
};

struct DtOutcome {
  double p_ack = 0.0;   // report the probed pair
  double p_none = 0.0;  // report none
};

/// Pilot detection during DT: exponential statistic over kappa*L symbols.
/// Aligned & unblocked: mean 1 + kappa snr L; otherwise 1 + rho kappa snr L.
inline DtOutcome dt_feedback_distribution(const DtStats& dt, bool active) {
  if (dt.snr <= 0.0 || dt.symbols <= 0.0 || dt.kappa <= 0.0 || dt.kappa >= 1.0)
    throw std::invalid_argument("dt: invalid parameters");
  if (dt.rho < 0.0 || dt.rho >= 1.0) throw std::invalid_argument("dt: rho must be in [0, 1)");
  DtOutcome out;
  const double m = active ? 1.0 + dt.kappa * dt.snr * dt.symbols
                          : 1.0 + dt.rho * dt.kappa * dt.snr * dt.symbols;
  out.p_ack = std::exp(-dt.eta / m);
  out.p_none = 1.0 - out.p_ack;
  return out;
}

/// Equal-error DT threshold: false alarm exp(-eta/(1 + rho kappa snr L))
/// equals misdetection 1 - exp(-eta/(1 + kappa snr L)).
inline DtStats solve_dt_threshold(int bpi, double snr, int duration, double kappa, double symbols,
                                  double rho) {
  if (duration < 2) throw std::invalid_argument("dt: duration must be >= 2");
  DtStats dt;
  dt.bpi = bpi;
  dt.snr = snr;
  dt.duration = duration;
  dt.kappa = kappa;
  dt.symbols = symbols;
  dt.rho = rho;
  if (snr <= 0.0 || symbols <= 0.0 || kappa <= 0.0 || kappa >= 1.0 || rho < 0.0 || rho >= 1.0)
    throw std::invalid_argument("dt: invalid parameters");
  const double m1 = 1.0 + kappa * snr * symbols;
  const double m0 = 1.0 + rho * kappa * snr * symbols;
  const auto f = [&](double eta) {
    return std::exp(-eta / m0) - (1.0 - std::exp(-eta / m1));
  };
  const RootResult r = bisect(f, 0.0, m1 * std::log(1e12));
  dt.eta = r.x;
  dt.delta = std::exp(-r.x / m0);
  return dt;
}

}  // namespace mmla
