#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "mmla/pomdp.hpp"

namespace mmla {

/// Heuristic controller state: the current mode plus the tracked pair in DT.
struct HeuristicNode {
  ActionClass mode = ActionClass::kBt;
  int beam = 0;  // BPI, meaningful in DT only
};

/// FSM-HEU transition rule. BT reporting a pair locks onto it; BT reporting
/// nothing hands over; DT keeps transmitting while ACKed and falls back to BT
/// on a missing ACK; a completed handover retrains.
inline HeuristicNode fsm_step(const HeuristicNode& node, int obs_id) {
  switch (node.mode) {
    case ActionClass::kBt:
      if (obs_id == kObsNone) return {ActionClass::kHo, 0};
      return {ActionClass::kDt, obs_id};
    case ActionClass::kDt:
      if (obs_id == node.beam) return node;
      if (obs_id == kObsNone) return {ActionClass::kBt, 0};
      throw std::invalid_argument("fsm_step: observation outside DT alphabet");
    case ActionClass::kHo:
      if (obs_id == kObsNone) return {ActionClass::kBt, 0};
      throw std::invalid_argument("fsm_step: observation outside HO alphabet");
  }
  throw std::logic_error("fsm_step: unreachable");
}

/// Periodic baseline: identical to FSM-HEU except DT always retrains, so every
/// data round is preceded by a fresh scan.
inline HeuristicNode baseline_step(const HeuristicNode& node, int obs_id) {
  if (node.mode == ActionClass::kDt) {
    if (obs_id != node.beam && obs_id != kObsNone)
      throw std::invalid_argument("baseline_step: observation outside DT alphabet");
    return {ActionClass::kBt, 0};
  }
  return fsm_step(node, obs_id);
}

/// Fixed durations and target SNRs the heuristic controllers run at.
struct HeuristicGrid {
  double snr_bt = 1.0;
  double snr_dt = 1.0;
  int t_dt = 10;
  int t_ho = 1;
};

/// Expected bits and energy to absorption for the FSM controllers, computed
/// exactly on the induced chain over (state, serving BS, controller node).
/// Nodes per BS: one full-set BT, one DT per SBPI, one HO.
struct FsmAnalysis {
  struct Node {
    int bs = 0;
    ActionClass cls = ActionClass::kBt;
    int beam = 0;  // BPI for DT nodes
  };
  std::vector<Node> nodes;            // per (bs, controller-node) block
  Eigen::VectorXd r_bits;             // per chain state (block * n_u + u)
  Eigen::VectorXd e_joules;
  int initial_state = 0;
  double r0_bits = 0.0;
  double e0_joules = 0.0;
};

inline FsmAnalysis fsm_closed_form(const LinkModel& m, const HeuristicGrid& hg,
                                   bool periodic_baseline = false) {
  const int nu = m.n_u();
  FsmAnalysis out;
  std::array<int, 2> base{};
  std::array<std::vector<ActionSlice>, 2> slices;
  for (int bs = 0; bs < 2; ++bs) {
    base[bs] = static_cast<int>(out.nodes.size());
    out.nodes.push_back({bs, ActionClass::kBt, 0});
    slices[bs].push_back(m.bt_slice(bs, m.sbpi_sets[bs], hg.snr_bt));
    for (int j : m.sbpi_sets[bs]) {
      out.nodes.push_back({bs, ActionClass::kDt, j});
      slices[bs].push_back(m.make_slice(bs, {ActionClass::kDt, {j}, hg.snr_dt, hg.t_dt}));
    }
    out.nodes.push_back({bs, ActionClass::kHo, 0});
    slices[bs].push_back(m.make_slice(bs, {ActionClass::kHo, {}, 0.0, hg.t_ho}));
  }

  const auto local_of = [&](int bs, const HeuristicNode& n) {
    if (n.mode == ActionClass::kBt) return 0;
    if (n.mode == ActionClass::kHo) return static_cast<int>(m.sbpi_sets[bs].size()) + 1;
    const auto& set = m.sbpi_sets[bs];
    const auto it = std::lower_bound(set.begin(), set.end(), n.beam);
    if (it == set.end() || *it != n.beam)
      throw std::logic_error("fsm_closed_form: DT beam outside SBPI set");
    return 1 + static_cast<int>(it - set.begin());
  };

  const int ng = static_cast<int>(out.nodes.size()) * nu;
  Eigen::MatrixXd p = Eigen::MatrixXd::Zero(ng, ng);
  Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(ng, 2);
  for (int bs = 0; bs < 2; ++bs) {
    for (std::size_t k = 0; k < slices[bs].size(); ++k) {
      const ActionSlice& sl = slices[bs][k];
      const FsmAnalysis::Node& node = out.nodes[base[bs] + k];
      const HeuristicNode hn{node.cls, node.beam};
      const int row0 = (base[bs] + static_cast<int>(k)) * nu;
      rhs.block(row0, 0, nu, 1) = sl.reward_bits;
      rhs.block(row0, 1, nu, 1).setConstant(sl.energy_j);
      const int bs_next = sl.flips ? 1 - bs : bs;
      for (int y = 0; y < sl.fb.cols(); ++y) {
        const HeuristicNode next =
            periodic_baseline ? baseline_step(hn, sl.obs_ids[y]) : fsm_step(hn, sl.obs_ids[y]);
        const int col0 = (base[bs_next] + local_of(bs_next, next)) * nu;
        p.block(row0, col0, nu, nu) += sl.tensor_for_obs(y);
      }
    }
  }

  Eigen::MatrixXd a = Eigen::MatrixXd::Identity(ng, ng) - p;
  Eigen::PartialPivLU<Eigen::MatrixXd> lu(a);
  Eigen::MatrixXd x = lu.solve(rhs);
  const double scale = std::max({1.0, rhs.cwiseAbs().maxCoeff(), x.cwiseAbs().maxCoeff()});
  if (!((a * x - rhs).cwiseAbs().maxCoeff() < 1e-8 * scale))
    throw std::runtime_error("fsm_closed_form: singular absorbing-chain system");

  out.r_bits = x.col(0);
  out.e_joules = x.col(1);
  out.initial_state = base[m.initial_bs] * nu + m.initial_u();
  out.r0_bits = out.r_bits(out.initial_state);
  out.e0_joules = out.e_joules(out.initial_state);
  return out;
}

/// Belief mass on "serving link clear".
inline double belief_clear_mass(const Eigen::VectorXd& b, int bs) {
  double lam = 0.0;
  for (int u = 0; u < b.size(); ++u)
    if (JointTransitionModel::blockage_of(u, bs) == 1) lam += b(u);
  return lam;
}

/// Belief mass on "aligned with pair j and clear", for each j in sbpi_set.
inline std::vector<double> belief_alignment(const JointTransitionModel& chain,
                                            const Eigen::VectorXd& b, int bs,
                                            const std::vector<int>& sbpi_set) {
  std::vector<double> xi(sbpi_set.size(), 0.0);
  for (int u = 0; u < b.size(); ++u) {
    if (JointTransitionModel::blockage_of(u, bs) != 1) continue;
    const int s = chain.sbpi_of(u, bs);
    const auto it = std::lower_bound(sbpi_set.begin(), sbpi_set.end(), s);
    if (it != sbpi_set.end() && *it == s) xi[it - sbpi_set.begin()] += b(u);
  }
  return xi;
}

struct BheuParams {
  double eta1 = 0.1;   // below this clear mass, hand over
  double eta2 = 0.8;   // above this alignment mass, transmit
  double eta3 = 0.60;  // scanned subset must cover this much alignment mass
};

/// Belief-threshold heuristic: hand over when the link is probably blocked,
/// transmit on a pair the belief has nearly pinned down, otherwise scan the
/// smallest subset (greedy by alignment mass) covering eta3, or everything.
inline ActionSpec bheu_action(const JointTransitionModel& chain,
                              const std::vector<int>& sbpi_set, const Eigen::VectorXd& belief,
                              int bs, const HeuristicGrid& hg, const BheuParams& prm) {
  const double lam = belief_clear_mass(belief, bs);
  if (lam < prm.eta1 || lam == 0.0) return {ActionClass::kHo, {}, 0.0, hg.t_ho};

  const std::vector<double> xi = belief_alignment(chain, belief, bs, sbpi_set);
  int best = 0;
  for (std::size_t i = 1; i < xi.size(); ++i)
    if (xi[i] > xi[best]) best = static_cast<int>(i);
  if (xi[best] >= prm.eta2)
    return {ActionClass::kDt, {sbpi_set[best]}, hg.snr_dt, hg.t_dt};

  std::vector<int> order(xi.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return xi[a] > xi[b]; });
  std::vector<int> subset;
  double mass = 0.0;
  for (int i : order) {
    subset.push_back(sbpi_set[i]);
    mass += xi[i];
    if (mass >= prm.eta3) break;
  }
  std::sort(subset.begin(), subset.end());
  return {ActionClass::kBt, subset, hg.snr_bt, static_cast<int>(subset.size()) + 1};
}

}  // namespace mmla
