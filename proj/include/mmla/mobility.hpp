#pragma once

#include <cmath>
#include <random>
#include <stdexcept>

namespace mmla {

/// First-order Gauss-Markov speed process with lane changes:
///   V' = gamma V + (1 - gamma) mu_v + sigma_v sqrt(1 - gamma^2) N(0,1)
///   Y' = Y + dt V
/// Speeds are floored at zero (no reversing), positions advance with the
/// pre-update speed. A lane change to an adjacent lane occurs with
/// probability lane_change_prob per slot.
struct MobilityParams {
  double mu_v = 30.0;
  double sigma_v = 10.0;
  double gamma = 0.2;
  double delta_t = 1e-4;
  double lane_change_prob = 0.01;

  void validate() const {
    if (mu_v < 0.0) throw std::invalid_argument("mobility: mu_v must be >= 0");
    if (sigma_v < 0.0) throw std::invalid_argument("mobility: sigma_v must be >= 0");
    if (gamma < 0.0 || gamma > 1.0) throw std::invalid_argument("mobility: gamma must be in [0,1]");
    if (delta_t <= 0.0) throw std::invalid_argument("mobility: delta_t must be > 0");
    if (lane_change_prob < 0.0 || lane_change_prob > 1.0)
      throw std::invalid_argument("mobility: lane_change_prob must be in [0,1]");
  }
};

struct UeKinematics {
  int lane = 0;
  double y = 0.0;
  double v = 0.0;
};

enum class StepResult { kInside, kExited };

inline StepResult mobility_step(UeKinematics& state, const MobilityParams& p, double segment_length,
                                int lane_count, std::mt19937_64& rng) {
  std::normal_distribution<double> n01(0.0, 1.0);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  state.y += p.delta_t * state.v;
  double v = p.gamma * state.v + (1.0 - p.gamma) * p.mu_v +
             p.sigma_v * std::sqrt(1.0 - p.gamma * p.gamma) * n01(rng);
  state.v = std::max(0.0, v);
  if (lane_count > 1 && u01(rng) < p.lane_change_prob) {
    if (state.lane == 0)
      state.lane = 1;
    else if (state.lane == lane_count - 1)
      state.lane = lane_count - 2;
    else
      state.lane += (u01(rng) < 0.5) ? -1 : 1;
  }
  return (state.y < 0.0 || state.y > segment_length) ? StepResult::kExited : StepResult::kInside;
}

/// Two-state LOS blockage chain parameterized by the stationary blocked
/// probability pi0 and the mean blockage duration d0 (seconds). State 0 is
/// blocked, state 1 clear.
struct BlockageParams {
  double pi0 = 0.2;
  double d0 = 0.2;
};

struct BlockageChain {
  double p01 = 0.0;  // blocked -> clear
  double p10 = 0.0;  // clear -> blocked
};

inline BlockageChain blockage_chain(const BlockageParams& p, double delta_t) {
  if (p.pi0 < 0.0 || p.pi0 >= 1.0)
    throw std::invalid_argument("blockage: pi0 must be in [0, 1)");
  if (delta_t <= 0.0) throw std::invalid_argument("blockage: delta_t must be > 0");
  if (p.d0 < delta_t)
    throw std::invalid_argument("blockage: mean duration must be at least one slot");
  BlockageChain c;
  c.p01 = delta_t / p.d0;
  c.p10 = p.pi0 / (1.0 - p.pi0) * delta_t / p.d0;
  return c;
}

}  // namespace mmla
