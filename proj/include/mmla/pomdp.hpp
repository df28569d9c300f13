#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <bit>
#include <map>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <vector>

#include "mmla/codebook.hpp"
#include "mmla/link_stats.hpp"
#include "mmla/transition_model.hpp"

namespace mmla {

enum class ActionClass { kBt, kDt, kHo };

inline constexpr int kObsNone = 0;  // "no beam reported"; BPI ids are >= 1

/// One control: scan a subset (BT), transmit on a pair (DT), or hand over.
struct ActionSpec {
  ActionClass cls = ActionClass::kHo;
  std::vector<int> bpis;  // scanned subset (BT, sorted) or probed pair (DT)
  double snr = 0.0;       // target SNR, linear
  int duration = 1;       // slots

  void validate() const {
    switch (cls) {
      case ActionClass::kHo:
        if (!bpis.empty() || snr != 0.0 || duration < 1)
          throw std::invalid_argument("action: handover must have no beams, zero snr, T >= 1");
        break;
      case ActionClass::kBt:
        if (bpis.empty() || snr <= 0.0)
          throw std::invalid_argument("action: BT needs beams and positive snr");
        if (!std::is_sorted(bpis.begin(), bpis.end()) ||
            std::adjacent_find(bpis.begin(), bpis.end()) != bpis.end())
          throw std::invalid_argument("action: BT subset must be sorted and unique");
        if (duration != static_cast<int>(bpis.size()) + 1)
          throw std::invalid_argument("action: BT duration must be |subset| + 1");
        break;
      case ActionClass::kDt:
        if (bpis.size() != 1 || snr <= 0.0 || duration < 2)
          throw std::invalid_argument("action: DT needs one beam, positive snr, T >= 2");
        break;
    }
  }
};

struct ActionGrid {
  std::vector<double> snr_values = {};       // linear target SNRs
  std::vector<int> t_dt_values = {20, 30, 40, 50};
  std::vector<int> bt_window_sizes = {2, 4}; // contiguous windows besides the full set
  int t_ho = 1;
};

/// Action family for one BS: handover, then beam-training subsets (full SBPI
/// set plus contiguous windows in SBPI order) crossed with the SNR grid, then
/// one DT action per (pair, SNR, duration).
inline std::vector<ActionSpec> enumerate_actions(const std::vector<int>& sbpi_set,
                                                 const ActionGrid& grid) {
  if (sbpi_set.empty()) throw std::invalid_argument("enumerate_actions: empty SBPI set");
  if (grid.snr_values.empty() || grid.t_dt_values.empty())
    throw std::invalid_argument("enumerate_actions: empty SNR or duration grid");
  std::vector<ActionSpec> out;
  out.push_back({ActionClass::kHo, {}, 0.0, grid.t_ho});

  std::vector<std::vector<int>> subsets;
  subsets.push_back(sbpi_set);
  const int ns = static_cast<int>(sbpi_set.size());
  for (int w : grid.bt_window_sizes) {
    if (w < 1 || w >= ns) continue;  // windows equal to the full set would duplicate it
    for (int start = 0; start + w <= ns; ++start)
      subsets.emplace_back(sbpi_set.begin() + start, sbpi_set.begin() + start + w);
  }
  for (const auto& sub : subsets)
    for (double snr : grid.snr_values)
      out.push_back({ActionClass::kBt, sub, snr, static_cast<int>(sub.size()) + 1});

  for (int j : sbpi_set)
    for (double snr : grid.snr_values)
      for (int t : grid.t_dt_values) out.push_back({ActionClass::kDt, {j}, snr, t});

  for (const auto& a : out) a.validate();
  return out;
}

/// Transition-observation kernel of one action in exactly factored form:
///   P(u', y | u) = sum_m pre(u, m) fb(m, y) post(m, u')
/// pre/post are shared powers of the one-step chain (identity and P(T) for
/// BT/HO, P(T-2) and P(2) for DT, so the feedback stage sits at the slot
/// where the pilot is measured). Exit to the absorbing state is the row's
/// missing mass. reward_bits is the expected payload in bits from each start
/// state; energy_j the transmit energy, which is state independent.
struct ActionSlice {
  ActionSpec spec;
  int bs = 0;
  bool flips = false;
  std::shared_ptr<const Eigen::MatrixXd> pre;
  std::shared_ptr<const Eigen::MatrixXd> post;
  Eigen::MatrixXd fb;        // n_u x n_obs
  std::vector<int> obs_ids;  // global observation ids per fb column
  Eigen::VectorXd reward_bits;
  double energy_j = 0.0;
  double eta = 0.0;
  double delta = 0.0;

  int n_u() const { return static_cast<int>(fb.rows()); }

  int obs_column(int obs_id) const {
    for (std::size_t i = 0; i < obs_ids.size(); ++i)
      if (obs_ids[i] == obs_id) return static_cast<int>(i);
    return -1;
  }

  /// Row masses sum_{u', y} P(u', y | u); deficit is the exit probability.
  Eigen::VectorXd continue_mass() const {
    return (*pre) * (post->rowwise().sum());
  }

  /// Dense per-observation tensor slice M_y(u, u'), for tests and export.
  Eigen::MatrixXd tensor_for_obs(int col) const {
    return (*pre) * fb.col(col).asDiagonal() * (*post);
  }
};

enum class BeliefStatus { kOk, kTerminated, kImpossible };

struct BeliefUpdate {
  BeliefStatus status = BeliefStatus::kOk;
  Eigen::VectorXd belief;
  int bs = 0;
  double obs_prob = 0.0;
};

inline constexpr double kBeliefFloor = 1e-300;

/// Bayes update through the factored kernel. obs_id == -1 denotes the
/// absorbing "left the segment" observation.
inline BeliefUpdate belief_update(const Eigen::VectorXd& belief, const ActionSlice& slice,
                                  int obs_id) {
  BeliefUpdate out;
  out.bs = slice.flips ? 1 - slice.bs : slice.bs;
  if (obs_id < 0) {
    out.status = BeliefStatus::kTerminated;
    return out;
  }
  const int col = slice.obs_column(obs_id);
  if (col < 0) throw std::invalid_argument("belief_update: observation not in action alphabet");
  Eigen::VectorXd mid = (belief.transpose() * (*slice.pre)).transpose();
  mid.array() *= slice.fb.col(col).array();
  Eigen::VectorXd next = (mid.transpose() * (*slice.post)).transpose();
  const double norm = next.sum();
  out.obs_prob = norm;
  if (!(norm >= kBeliefFloor)) {
    out.status = BeliefStatus::kImpossible;
    return out;
  }
  out.belief = next / norm;
  return out;
}

/// Prior-predictive fallback for model-inconsistent observations (analog
/// runs): the one-action-ahead state distribution ignoring the observation,
/// or uniform if even that mass vanished.
inline Eigen::VectorXd belief_predict(const Eigen::VectorXd& belief, const ActionSlice& slice) {
  Eigen::VectorXd mid = (belief.transpose() * (*slice.pre)).transpose();
  Eigen::VectorXd next = (mid.transpose() * (*slice.post)).transpose();
  const double norm = next.sum();
  if (norm >= kBeliefFloor) return next / norm;
  return Eigen::VectorXd::Constant(belief.size(), 1.0 / belief.size());
}

/// Full environment model at the sectored abstraction: the per-slot joint
/// chain, the calibration, channel constants and the materialized action set
/// per serving BS. Extra beam-training subsets (belief-threshold policies
/// choose these online) are built and cached on demand.
class LinkModel {
 public:
  JointTransitionModel chain;
  SectoredCalibration calib;
  double noise_power_w = 0.0;  // sigma_w^2
  double sigma_dif_sq = 0.0;
  double rho = db_to_lin(-15.0);
  double symbols = 100.0;  // L
  double kappa = 0.01;
  double bandwidth_hz = 100e6;
  double delta_t = 1e-4;
  int t_ho = 1;
  std::array<std::vector<int>, 2> sbpi_sets;
  std::array<std::vector<std::shared_ptr<const ActionSlice>>, 2> actions;
  double d_tot_s = 0.0;  // expected traversal time, Monte-Carlo estimate
  int entry_pair_index = -1;
  int initial_bs = 1;
  std::uint64_t config_hash = 0;

  int n_u() const { return chain.n_u(); }

  const ActionSlice& action(int bs, int idx) const { return *actions[bs].at(idx); }
  int n_actions(int bs) const { return static_cast<int>(actions[bs].size()); }

  int initial_u() const {
    if (entry_pair_index < 0) throw std::logic_error("model: no entry state");
    return JointTransitionModel::u_index(entry_pair_index, 1, 1);
  }

  Eigen::VectorXd initial_belief() const {
    Eigen::VectorXd b = Eigen::VectorXd::Zero(n_u());
    b(initial_u()) = 1.0;
    return b;
  }

  double throughput_star(double snr) const {
    auto it = tstar_cache_.find(std::bit_cast<std::uint64_t>(snr));
    if (it != tstar_cache_.end()) return it->second;
    const double t = optimal_outage_target(snr, kappa, bandwidth_hz).throughput;
    tstar_cache_[std::bit_cast<std::uint64_t>(snr)] = t;
    return t;
  }

  double beam_power_w(int bs, int bpi, double snr) const {
    return power_for_target_snr(snr, calib.upsilon_of(bs, bpi), sigma_dif_sq, noise_power_w);
  }

  /// Builds the factored kernel, reward and cost of one action.
  ActionSlice make_slice(int bs, const ActionSpec& spec) const {
    spec.validate();
    ActionSlice sl;
    sl.spec = spec;
    sl.bs = bs;
    sl.flips = spec.cls == ActionClass::kHo;
    const int nu = n_u();
    sl.reward_bits = Eigen::VectorXd::Zero(nu);

    switch (spec.cls) {
      case ActionClass::kHo: {
        sl.pre = chain.power(0);
        sl.post = chain.power(spec.duration);
        sl.fb = Eigen::MatrixXd::Ones(nu, 1);
        sl.obs_ids = {kObsNone};
        sl.energy_j = 0.0;
        break;
      }
      case ActionClass::kBt: {
        const int k = static_cast<int>(spec.bpis.size());
        const BtStats bt = solve_bt_threshold(k, spec.snr, symbols, rho);
        sl.eta = bt.eta;
        sl.delta = bt.delta;
        sl.pre = chain.power(0);
        sl.post = chain.power(spec.duration);
        sl.obs_ids = spec.bpis;
        sl.obs_ids.push_back(kObsNone);
        sl.fb = Eigen::MatrixXd::Zero(nu, k + 1);
        const BtOutcome act = bt_outcome_distribution(bt, true);
        const BtOutcome inact = bt_outcome_distribution(bt, false);
        for (int u = 0; u < nu; ++u) {
          const int s = chain.sbpi_of(u, bs);
          const bool clear = JointTransitionModel::blockage_of(u, bs) == 1;
          const auto it = std::lower_bound(spec.bpis.begin(), spec.bpis.end(), s);
          const bool member = it != spec.bpis.end() && *it == s;
          if (member && clear) {
            const int pos = static_cast<int>(it - spec.bpis.begin());
            for (int c = 0; c < k; ++c) sl.fb(u, c) = act.p_other_each;
            sl.fb(u, pos) = act.p_hit;
            sl.fb(u, k) = act.p_none;
          } else {
            for (int c = 0; c < k; ++c) sl.fb(u, c) = inact.p_other_each;
            sl.fb(u, k) = inact.p_none;
          }
        }
        double psum = 0.0;
        for (int j : spec.bpis) psum += beam_power_w(bs, j, spec.snr);
        sl.energy_j = (spec.duration - 1) * delta_t / k * psum;
        break;
      }
      case ActionClass::kDt: {
        const int j = spec.bpis[0];
        const DtStats dt = solve_dt_threshold(j, spec.snr, spec.duration, kappa, symbols, rho);
        sl.eta = dt.eta;
        sl.delta = dt.delta;
        sl.pre = chain.power(spec.duration - 2);
        sl.post = chain.power(2);
        sl.obs_ids = {j, kObsNone};
        sl.fb = Eigen::MatrixXd::Zero(nu, 2);
        const DtOutcome act = dt_feedback_distribution(dt, true);
        const DtOutcome inact = dt_feedback_distribution(dt, false);
        for (int u = 0; u < nu; ++u) {
          const bool aligned = chain.sbpi_of(u, bs) == j &&
                               JointTransitionModel::blockage_of(u, bs) == 1;
          sl.fb(u, 0) = aligned ? act.p_ack : inact.p_ack;
          sl.fb(u, 1) = aligned ? act.p_none : inact.p_none;
        }
        // Expected payload: T*(snr) delta_t per slot in which the pair is
        // still aligned and clear, over the T-1 payload slots.
        Eigen::VectorXd chi = Eigen::VectorXd::Zero(nu);
        for (int u = 0; u < nu; ++u)
          if (chain.sbpi_of(u, bs) == j && JointTransitionModel::blockage_of(u, bs) == 1)
            chi(u) = 1.0;
        Eigen::VectorXd acc = chi;
        Eigen::VectorXd w = chi;
        for (int t = 1; t <= spec.duration - 2; ++t) {
          w = chain.one_step() * w;
          acc += w;
        }
        sl.reward_bits = throughput_star(spec.snr) * delta_t * acc;
        sl.energy_j = (spec.duration - 1) * delta_t * beam_power_w(bs, j, spec.snr);
        break;
      }
    }
    return sl;
  }

  /// Cached ad-hoc beam-training slice (arbitrary subset), for policies that
  /// pick subsets online.
  const ActionSlice& bt_slice(int bs, const std::vector<int>& subset, double snr) const {
    std::ostringstream key;
    key << bs << ':' << std::bit_cast<std::uint64_t>(snr);
    for (int j : subset) key << ',' << j;
    auto it = adhoc_.find(key.str());
    if (it != adhoc_.end()) return *it->second;
    ActionSpec spec{ActionClass::kBt, subset, snr, static_cast<int>(subset.size()) + 1};
    auto sl = std::make_shared<ActionSlice>(make_slice(bs, spec));
    return *adhoc_.emplace(key.str(), std::move(sl)).first->second;
  }

  void materialize_actions(const ActionGrid& grid) {
    for (int bs = 0; bs < 2; ++bs) {
      actions[bs].clear();
      for (const ActionSpec& spec : enumerate_actions(sbpi_sets[bs], grid))
        actions[bs].push_back(std::make_shared<const ActionSlice>(make_slice(bs, spec)));
    }
  }

 private:
  mutable std::map<std::uint64_t, double> tstar_cache_;
  mutable std::map<std::string, std::shared_ptr<const ActionSlice>> adhoc_;
};

/// Minimal solver-facing view: belief dimension plus the action slices per
/// serving BS. Toy problems build this directly.
struct PlanningProblem {
  int n_u = 0;
  std::array<std::vector<std::shared_ptr<const ActionSlice>>, 2> actions;
  Eigen::VectorXd initial_belief;
  int initial_bs = 0;
  /// SBPI-pair grouping of the state indices (4 blockage configurations per
  /// pair) used for structured belief seeding; empty for unstructured toys.
  std::vector<std::vector<int>> groups;

  static PlanningProblem from_model(const LinkModel& m) {
    PlanningProblem p;
    p.n_u = m.n_u();
    p.actions = m.actions;
    p.initial_belief = m.initial_belief();
    p.initial_bs = m.initial_bs;
    for (int s = 0; s < m.chain.n_pairs(); ++s)
      p.groups.push_back({4 * s, 4 * s + 1, 4 * s + 2, 4 * s + 3});
    return p;
  }
};

}  // namespace mmla
