#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace mmla {

inline double db_to_lin(double db) { return std::pow(10.0, db / 10.0); }
inline double lin_to_db(double lin) { return 10.0 * std::log10(lin); }
inline double dbm_to_watt(double dbm) { return std::pow(10.0, (dbm - 30.0) / 10.0); }
inline double watt_to_dbm(double w) { return 10.0 * std::log10(w) + 30.0; }

/// Mixes a master seed with a stream id into an independent 64-bit seed
/// (splitmix64 finalizer), so episode k is reproducible regardless of how
/// many draws earlier episodes consumed.
inline std::uint64_t substream_seed(std::uint64_t master, std::uint64_t stream) {
  std::uint64_t z = master + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline std::mt19937_64 make_rng(std::uint64_t master, std::uint64_t stream) {
  return std::mt19937_64(substream_seed(master, stream));
}

/// Compensated (Kahan) accumulator for long alternating or ill-conditioned sums.
template <typename T = double>
class KahanSum {
 public:
  void add(T x) {
    T y = x - c_;
    T t = s_ + y;
    c_ = (t - s_) - y;
    s_ = t;
  }
  T value() const { return s_; }

 private:
  T s_ = 0;
  T c_ = 0;
};

struct RootResult {
  double x = 0.0;
  double residual = 0.0;
  int iterations = 0;
};

/// Bisection on a bracketing interval. Runs until the bracket collapses to
/// machine width, so the residual is limited only by f's conditioning.
inline RootResult bisect(const std::function<double(double)>& f, double lo, double hi,
                         int max_iter = 400) {
  double flo = f(lo);
  double fhi = f(hi);
  if (flo == 0.0) return {lo, 0.0, 0};
  if (fhi == 0.0) return {hi, 0.0, 0};
  if ((flo > 0.0) == (fhi > 0.0))
    throw std::invalid_argument("bisect: endpoints do not bracket a sign change");
  int it = 0;
  for (; it < max_iter; ++it) {
    double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;  // interval at machine resolution
    double fm = f(mid);
    if (fm == 0.0) return {mid, 0.0, it + 1};
    if ((fm > 0.0) == (flo > 0.0)) {
      lo = mid;
      flo = fm;
    } else {
      hi = mid;
      fhi = fm;
    }
  }
  double x = std::abs(flo) < std::abs(fhi) ? lo : hi;
  return {x, f(x), it};
}

/// 95% half-width of a normal-approximation confidence interval on a mean.
inline double ci95_halfwidth(double sample_var, std::size_t n) {
  if (n < 2) return std::numeric_limits<double>::infinity();
  return 1.959963985 * std::sqrt(sample_var / static_cast<double>(n));
}

struct MeanVar {
  double mean = 0.0;
  double var = 0.0;  // sample variance (n-1 denominator)
  std::size_t n = 0;
};

inline MeanVar mean_var(const std::vector<double>& xs) {
  MeanVar mv;
  mv.n = xs.size();
  if (xs.empty()) return mv;
  KahanSum<double> s;
  for (double x : xs) s.add(x);
  mv.mean = s.value() / static_cast<double>(xs.size());
  if (xs.size() > 1) {
    KahanSum<double> q;
    for (double x : xs) q.add((x - mv.mean) * (x - mv.mean));
    mv.var = q.value() / static_cast<double>(xs.size() - 1);
  }
  return mv;
}

}  // namespace mmla
