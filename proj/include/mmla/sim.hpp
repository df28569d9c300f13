#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <bit>
#include <cstdint>
#include <map>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "mmla/model_build.hpp"
#include "mmla/policies.hpp"
#include "mmla/pomdp.hpp"
#include "mmla/solver.hpp"

namespace mmla {

/// Runtime controller interface. The simulator tracks the serving BS and the
/// environment; the policy only maps its internal state to the next action
/// and digests the feedback. inform() injects the true state for genie runs.
class Policy {
 public:
  virtual ~Policy() = default;
  virtual void reset() = 0;
  virtual void inform(int /*u*/) {}
  virtual const ActionSlice& decide(int bs) = 0;
  virtual void observe(const ActionSlice& slice, int obs_id) = 0;
};

class CpbviPolicy : public Policy {
 public:
  CpbviPolicy(const LinkModel& m, const PolicyArtifact& art) : m_(m), art_(art) {}
  void reset() override { belief_ = m_.initial_belief(); }
  const ActionSlice& decide(int bs) override {
    return m_.action(bs, policy_action(art_, belief_, bs).action);
  }
  void observe(const ActionSlice& slice, int obs_id) override {
    if (obs_id < 0) return;
    const BeliefUpdate up = belief_update(belief_, slice, obs_id);
    belief_ = up.status == BeliefStatus::kOk ? up.belief : belief_predict(belief_, slice);
  }

 private:
  const LinkModel& m_;
  const PolicyArtifact& art_;
  Eigen::VectorXd belief_;
};

/// FSM-HEU, or the periodic retraining baseline when periodic_baseline is set.
class FsmPolicy : public Policy {
 public:
  FsmPolicy(const LinkModel& m, const HeuristicGrid& g, bool periodic_baseline = false)
      : m_(m), g_(g), baseline_(periodic_baseline) {}
  void reset() override { node_ = {ActionClass::kBt, 0}; }
  const ActionSlice& decide(int bs) override {
    switch (node_.mode) {
      case ActionClass::kBt:
        return m_.bt_slice(bs, m_.sbpi_sets[bs], g_.snr_bt);
      case ActionClass::kDt:
        return dt_slice(bs, node_.beam);
      case ActionClass::kHo:
        return ho_slice(bs);
    }
    throw std::logic_error("FsmPolicy: unreachable");
  }
  void observe(const ActionSlice& slice, int obs_id) override {
    (void)slice;
    if (obs_id < 0) return;
    node_ = baseline_ ? baseline_step(node_, obs_id) : fsm_step(node_, obs_id);
  }

 protected:
  const ActionSlice& dt_slice(int bs, int j) {
    const auto key = std::make_pair(bs, j);
    auto it = dt_.find(key);
    if (it == dt_.end())
      it = dt_.emplace(key, m_.make_slice(bs, {ActionClass::kDt, {j}, g_.snr_dt, g_.t_dt}))
               .first;
    return it->second;
  }
  const ActionSlice& ho_slice(int bs) {
    auto it = ho_.find(bs);
    if (it == ho_.end())
      it = ho_.emplace(bs, m_.make_slice(bs, {ActionClass::kHo, {}, 0.0, g_.t_ho})).first;
    return it->second;
  }

  const LinkModel& m_;
  HeuristicGrid g_;
  bool baseline_ = false;
  HeuristicNode node_;
  std::map<std::pair<int, int>, ActionSlice> dt_;
  std::map<int, ActionSlice> ho_;
};

/// B-HEU: thresholds on the belief itself pick handover, transmission or an
/// adaptive scan subset.
class BheuPolicy : public FsmPolicy {
 public:
  BheuPolicy(const LinkModel& m, const HeuristicGrid& g, const BheuParams& prm)
      : FsmPolicy(m, g), prm_(prm) {}
  void reset() override { belief_ = m_.initial_belief(); }
  const ActionSlice& decide(int bs) override {
    const ActionSpec spec = bheu_action(m_.chain, m_.sbpi_sets[bs], belief_, bs, g_, prm_);
    switch (spec.cls) {
      case ActionClass::kHo:
        return ho_slice(bs);
      case ActionClass::kDt:
        return dt_slice(bs, spec.bpis[0]);
      case ActionClass::kBt:
        return m_.bt_slice(bs, spec.bpis, g_.snr_bt);
    }
    throw std::logic_error("BheuPolicy: unreachable");
  }
  void observe(const ActionSlice& slice, int obs_id) override {
    if (obs_id < 0) return;
    const BeliefUpdate up = belief_update(belief_, slice, obs_id);
    belief_ = up.status == BeliefStatus::kOk ? up.belief : belief_predict(belief_, slice);
  }

 private:
  BheuParams prm_;
  Eigen::VectorXd belief_;
};

/// Perfect-state-information reference: transmits on the true strongest pair
/// whenever the serving link is clear, hands over otherwise. Needs inform().
class GeniePolicy : public FsmPolicy {
 public:
  GeniePolicy(const LinkModel& m, const HeuristicGrid& g) : FsmPolicy(m, g) {}
  void reset() override { u_ = -1; }
  void inform(int u) override { u_ = u; }
  const ActionSlice& decide(int bs) override {
    if (u_ >= 0 && JointTransitionModel::blockage_of(u_, bs) == 1)
      return dt_slice(bs, m_.chain.sbpi_of(u_, bs));
    return ho_slice(bs);
  }
  void observe(const ActionSlice&, int) override {}

 private:
  int u_ = -1;
};

struct EpisodeResult {
  double bits = 0.0;
  double joules = 0.0;
  double seconds = 0.0;
  long slots = 0;
  int rounds = 0;
  bool truncated = false;
};

/// One action round of an episode, for time-series inspection. u is the true
/// state at the round start (-1 when the analog position maps outside the
/// estimated chain); obs -1 marks the departure observation.
struct TraceRow {
  long slot = 0;
  int u = -1;
  int bs = 0;
  ActionClass cls = ActionClass::kHo;
  int beam = 0;
  int duration = 0;
  int obs = 0;
  double bits = 0.0;
  double joules = 0.0;
};

using EpisodeTrace = std::vector<TraceRow>;

/// Cumulative-row view of the one-step chain for O(log n) state advances;
/// residual mass beyond the row total is the exit event.
class SectoredSampler {
 public:
  explicit SectoredSampler(const Eigen::MatrixXd& one_step) : cum_(one_step.transpose()) {
    for (int u = 0; u < cum_.cols(); ++u)
      for (int j = 1; j < cum_.rows(); ++j) cum_(j, u) += cum_(j - 1, u);
  }

  int step(int u, std::mt19937_64& rng) const {
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    const double r = u01(rng);
    const double* b = cum_.data() + static_cast<std::ptrdiff_t>(u) * cum_.rows();
    const double* e = b + cum_.rows();
    const double* it = std::upper_bound(b, e, r);
    if (it == e) return -1;
    return static_cast<int>(it - b);
  }

 private:
  Eigen::MatrixXd cum_;  // cum_(j, u) = sum_{j' <= j} P(u -> j')
};

namespace detail {

inline int sample_feedback(const ActionSlice& sl, int state, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  const double r = u01(rng);
  double acc = 0.0;
  int col = static_cast<int>(sl.fb.cols()) - 1;
  for (int c = 0; c < sl.fb.cols(); ++c) {
    acc += sl.fb(state, c);
    if (r < acc) {
      col = c;
      break;
    }
  }
  return sl.obs_ids[col];
}

}  // namespace detail

/// One episode on the sectored chain itself: per-slot state advances, feedback
/// sampled at the slot where the abstraction measures it (action start for BT,
/// the pilot slot for DT), full action energy charged up front, payload bits
/// accrued per aligned-and-clear slot. Any exit during an action terminates
/// with the departure observation.
inline EpisodeResult run_episode_sectored(const LinkModel& m, const SectoredSampler& samp,
                                          Policy& pol, long max_slots, std::mt19937_64& rng,
                                          EpisodeTrace* trace = nullptr) {
  EpisodeResult res;
  int u = m.initial_u();
  int bs = m.initial_bs;
  pol.reset();
  while (res.slots < max_slots) {
    pol.inform(u);
    const ActionSlice& sl = pol.decide(bs);
    const ActionSpec& spec = sl.spec;
    TraceRow row{res.slots,     u, bs, spec.cls, spec.bpis.empty() ? 0 : spec.bpis[0],
                 spec.duration, 0, 0.0, sl.energy_j};
    res.joules += sl.energy_j;
    ++res.rounds;
    const bool dt = spec.cls == ActionClass::kDt;
    const double slot_bits = dt ? m.throughput_star(spec.snr) * m.delta_t : 0.0;
    const int pilot_t = dt ? spec.duration - 2 : 0;
    int pilot_state = u;
    bool exited = false;
    for (int t = 0; t < spec.duration; ++t) {
      if (dt && t <= spec.duration - 2 && m.chain.sbpi_of(u, bs) == spec.bpis[0] &&
          JointTransitionModel::blockage_of(u, bs) == 1) {
        res.bits += slot_bits;
        row.bits += slot_bits;
      }
      if (t == pilot_t) pilot_state = u;
      const int next = samp.step(u, rng);
      ++res.slots;
      if (next < 0) {
        exited = true;
        break;
      }
      u = next;
    }
    const int obs = exited ? -1 : detail::sample_feedback(sl, pilot_state, rng);
    row.obs = obs;
    if (trace) trace->push_back(row);
    pol.observe(sl, obs);
    if (exited) break;
    if (sl.flips) bs = 1 - bs;
  }
  res.seconds = res.slots * m.delta_t;
  res.truncated = res.slots >= max_slots;
  return res;
}

/// One episode against the geometric ground truth: Gauss-Markov mobility and
/// the two blockage chains evolve per slot; measurements are exponential
/// matched-filter draws at the true beam gains (grid-resolution lookup) and
/// are compared against the same thresholds the abstraction solved for; DT
/// payload slots succeed per the Rayleigh outage of the rate designed for the
/// target SNR. Model-impossible feedback falls back to the prior predictive
/// inside the policies.
inline EpisodeResult run_episode_analog(const BuiltModel& bm, const ExperimentConfig& cfg,
                                        Policy& pol, long max_slots, std::mt19937_64& rng,
                                        EpisodeTrace* trace = nullptr) {
  const LinkModel& m = bm.model;
  const JointCodebook& cb = bm.codebook;
  const BlockageChain bc = blockage_chain(cfg.blockage, cfg.mobility.delta_t);
  EpisodeResult res;
  UeKinematics ue{0, 0.0, cfg.mobility.mu_v};
  std::array<int, 2> b{1, 1};  // 1 = clear
  int bs = m.initial_bs;
  pol.reset();
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  std::exponential_distribution<double> exp1(1.0);
  std::map<std::uint64_t, OutageTarget> targets;

  const auto advance = [&]() {
    for (int k = 0; k < 2; ++k) {
      const double flip = b[k] == 1 ? bc.p10 : bc.p01;
      if (u01(rng) < flip) b[k] = 1 - b[k];
    }
    const StepResult r =
        mobility_step(ue, cfg.mobility, cfg.scene.segment_length, cfg.scene.lane_count, rng);
    ++res.slots;
    return r == StepResult::kInside;
  };
  const auto snr_at = [&](int which_bs, int bpi, double target_snr) {
    const int cell = cb.cell_index(ue.lane, ue.y);
    const double gpl = b[which_bs] == 1 ? cb.gain_over_pl[which_bs](cell, bpi - 1) : 0.0;
    return m.beam_power_w(which_bs, bpi, target_snr) / m.noise_power_w *
           (gpl + m.sigma_dif_sq);
  };
  const auto true_u = [&]() {
    const int cell = cb.cell_index(ue.lane, ue.y);
    const int pair = m.chain.pair_index(cb.sbpi_grid[0][cell], cb.sbpi_grid[1][cell]);
    return pair < 0 ? -1 : JointTransitionModel::u_index(pair, b[0], b[1]);
  };

  while (res.slots < max_slots) {
    const int u = true_u();
    pol.inform(u);
    const ActionSlice& sl = pol.decide(bs);
    const ActionSpec& spec = sl.spec;
    TraceRow row{res.slots,     u, bs, spec.cls, spec.bpis.empty() ? 0 : spec.bpis[0],
                 spec.duration, 0, 0.0, sl.energy_j};
    const double bits_before = res.bits;
    res.joules += sl.energy_j;
    ++res.rounds;
    int obs = kObsNone;
    bool exited = false;

    switch (spec.cls) {
      case ActionClass::kHo: {
        for (int t = 0; t < spec.duration && !exited; ++t) exited = !advance();
        break;
      }
      case ActionClass::kBt: {
        double best_stat = -1.0;
        int best_j = 0;
        for (std::size_t i = 0; i < spec.bpis.size() && !exited; ++i) {
          const int j = spec.bpis[i];
          const double stat = (1.0 + snr_at(bs, j, spec.snr) * m.symbols) * exp1(rng);
          if (stat > best_stat) {
            best_stat = stat;
            best_j = j;
          }
          exited = !advance();
        }
        if (!exited) exited = !advance();  // report slot
        obs = best_stat >= sl.eta ? best_j : kObsNone;
        break;
      }
      case ActionClass::kDt: {
        const std::uint64_t key = std::bit_cast<std::uint64_t>(spec.snr);
        auto it = targets.find(key);
        if (it == targets.end())
          it = targets.emplace(key, optimal_outage_target(spec.snr, m.kappa, m.bandwidth_hz))
                   .first;
        const OutageTarget& ot = it->second;
        const int j = spec.bpis[0];
        obs = kObsNone;
        for (int t = 0; t <= spec.duration - 2 && !exited; ++t) {
          const double snr = snr_at(bs, j, spec.snr);
          if (snr > 0.0 && u01(rng) >= outage_probability(ot.capacity, snr, m.bandwidth_hz))
            res.bits += (1.0 - m.kappa) * ot.capacity * m.delta_t;
          if (t == spec.duration - 2) {
            const double stat = (1.0 + m.kappa * snr * m.symbols) * exp1(rng);
            if (stat >= sl.eta) obs = j;
          }
          exited = !advance();
        }
        if (!exited) exited = !advance();  // feedback slot
        break;
      }
    }

    row.obs = exited ? -1 : obs;
    row.bits = res.bits - bits_before;
    if (trace != nullptr) trace->push_back(row);
    if (exited) {
      pol.observe(sl, -1);
      break;
    }
    pol.observe(sl, obs);
    if (sl.flips) bs = 1 - bs;
  }
  res.seconds = res.slots * cfg.mobility.delta_t;
  res.truncated = res.slots >= max_slots;
  return res;
}

struct Estimate {
  double value = 0.0;
  double ci95 = 0.0;
};

/// mean(num)/mean(den) with a delta-method confidence interval.
inline Estimate ratio_estimate(const std::vector<double>& num, const std::vector<double>& den) {
  if (num.size() != den.size() || num.empty())
    throw std::invalid_argument("ratio_estimate: mismatched or empty samples");
  const MeanVar mx = mean_var(num);
  const MeanVar my = mean_var(den);
  if (my.mean == 0.0) throw std::invalid_argument("ratio_estimate: zero denominator mean");
  const double r = mx.mean / my.mean;
  KahanSum<double> sxy;
  for (std::size_t i = 0; i < num.size(); ++i)
    sxy.add((num[i] - mx.mean) * (den[i] - my.mean));
  const double cov = num.size() > 1 ? sxy.value() / static_cast<double>(num.size() - 1) : 0.0;
  const double var_eff = (mx.var - 2.0 * r * cov + r * r * my.var) / (my.mean * my.mean);
  return {r, ci95_halfwidth(std::max(var_eff, 0.0), num.size())};
}

enum class SimMode { kSectored, kAnalog };

struct EvalResult {
  long episodes = 0;
  long truncated = 0;
  Estimate bits;            // per episode
  Estimate joules;          // per episode
  Estimate seconds;         // per episode
  Estimate throughput_bps;  // bits over duration
  Estimate power_w;         // energy over duration
  Estimate se;              // throughput over bandwidth
};

/// Monte-Carlo evaluation; episode k draws from substream k of `seed` so the
/// run is reproducible and order independent.
inline EvalResult evaluate(const BuiltModel& bm, const ExperimentConfig& cfg, Policy& pol,
                           SimMode mode, int episodes, std::uint64_t seed) {
  const SectoredSampler samp(bm.model.chain.one_step());
  std::vector<double> bits, joules, seconds;
  bits.reserve(episodes);
  joules.reserve(episodes);
  seconds.reserve(episodes);
  EvalResult out;
  out.episodes = episodes;
  for (int ep = 0; ep < episodes; ++ep) {
    auto rng = make_rng(seed, static_cast<std::uint64_t>(ep));
    const EpisodeResult r = mode == SimMode::kSectored
                                ? run_episode_sectored(bm.model, samp, pol, cfg.max_slots, rng)
                                : run_episode_analog(bm, cfg, pol, cfg.max_slots, rng);
    bits.push_back(r.bits);
    joules.push_back(r.joules);
    seconds.push_back(r.seconds);
    if (r.truncated) ++out.truncated;
  }
  const auto simple = [&](const std::vector<double>& xs) {
    const MeanVar mv = mean_var(xs);
    return Estimate{mv.mean, ci95_halfwidth(mv.var, mv.n)};
  };
  out.bits = simple(bits);
  out.joules = simple(joules);
  out.seconds = simple(seconds);
  out.throughput_bps = ratio_estimate(bits, seconds);
  out.power_w = ratio_estimate(joules, seconds);
  out.se = out.throughput_bps;
  out.se.value /= cfg.bandwidth_hz;
  out.se.ci95 /= cfg.bandwidth_hz;
  return out;
}

/// Policy registry for the CLI. "cpbvi" needs a solved artifact whose lifetime
/// outlives the returned controller; the heuristics only borrow the model.
inline std::unique_ptr<Policy> make_policy(const std::string& name, const LinkModel& m,
                                           const ExperimentConfig& cfg,
                                           const PolicyArtifact* art = nullptr) {
  const HeuristicGrid g = cfg.heuristic_grid();
  if (name == "cpbvi") {
    if (art == nullptr) throw std::invalid_argument("make_policy: cpbvi needs an artifact");
    return std::make_unique<CpbviPolicy>(m, *art);
  }
  if (name == "fsm") return std::make_unique<FsmPolicy>(m, g, false);
  if (name == "baseline") return std::make_unique<FsmPolicy>(m, g, true);
  if (name == "bheu") return std::make_unique<BheuPolicy>(m, g, cfg.bheu);
  if (name == "genie") {
    HeuristicGrid gg = g;
    gg.t_dt = *std::max_element(cfg.t_dt_values.begin(), cfg.t_dt_values.end());
    return std::make_unique<GeniePolicy>(m, gg);
  }
  throw std::invalid_argument("make_policy: unknown policy '" + name + "'");
}

inline const std::vector<std::string>& policy_names() {
  static const std::vector<std::string> names{"cpbvi", "bheu", "fsm", "baseline", "genie"};
  return names;
}

}  // namespace mmla
