#pragma once

#include <Eigen/Dense>
#include <array>
#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <vector>

#include "mmla/codebook.hpp"
#include "mmla/mobility.hpp"
#include "mmla/util.hpp"

namespace mmla {

/// One observed slot transition of a finite chain; `exited` marks samples
/// whose successor left the state space (counted in the visit denominator
/// only, which is what makes the estimated rows substochastic).
struct TransitionSample {
  int s = 0;
  int b = 0;
  bool exited = false;
  int s_next = 0;
  int b_next = 0;
};

/// Empirical transition frequencies. Rows with no visits are flagged
/// undefined rather than invented.
struct TransitionEstimate {
  Eigen::MatrixXd s_hat;                                 // P(s'|s)
  std::vector<bool> s_row_defined;
  std::map<std::pair<int, int>, Eigen::MatrixXd> b_hat;  // (s,s') -> P(b'|b)
  std::map<std::pair<int, int>, std::vector<bool>> b_row_defined;
};

inline TransitionEstimate estimate_transitions(int n_s, int n_b,
                                               const std::vector<TransitionSample>& samples) {
  if (n_s < 1 || n_b < 1) throw std::invalid_argument("estimate_transitions: empty state space");
  Eigen::MatrixXd counts = Eigen::MatrixXd::Zero(n_s, n_s);
  Eigen::VectorXd visits = Eigen::VectorXd::Zero(n_s);
  std::map<std::pair<int, int>, Eigen::MatrixXd> bc;
  std::map<std::pair<int, int>, Eigen::VectorXd> bv;
  for (const auto& t : samples) {
    if (t.s < 0 || t.s >= n_s || t.b < 0 || t.b >= n_b)
      throw std::invalid_argument("estimate_transitions: sample out of range");
    visits(t.s) += 1.0;
    if (t.exited) continue;
    counts(t.s, t.s_next) += 1.0;
    const auto key = std::make_pair(t.s, t.s_next);
    auto [it, inserted] = bc.try_emplace(key, Eigen::MatrixXd::Zero(n_b, n_b));
    auto [itv, iv] = bv.try_emplace(key, Eigen::VectorXd::Zero(n_b));
    it->second(t.b, t.b_next) += 1.0;
    itv->second(t.b) += 1.0;
  }
  TransitionEstimate est;
  est.s_hat = Eigen::MatrixXd::Zero(n_s, n_s);
  est.s_row_defined.assign(n_s, false);
  for (int s = 0; s < n_s; ++s) {
    if (visits(s) > 0.0) {
      est.s_row_defined[s] = true;
      est.s_hat.row(s) = counts.row(s) / visits(s);
    }
  }
  for (const auto& [key, m] : bc) {
    Eigen::MatrixXd rows = Eigen::MatrixXd::Zero(n_b, n_b);
    std::vector<bool> defined(n_b, false);
    for (int b = 0; b < n_b; ++b) {
      if (bv.at(key)(b) > 0.0) {
        defined[b] = true;
        rows.row(b) = m.row(b) / bv.at(key)(b);
      }
    }
    est.b_hat[key] = rows;
    est.b_row_defined[key] = defined;
  }
  return est;
}

/// Joint per-slot chain over U = S x {0,1}^2: SBPI pairs that the mobility
/// process actually visits, times the two BS blockage bits. The one-step
/// kernel factors as S(s'|s) B0(b0'|b0) B1(b1'|b1); rows sum to <= 1, the
/// deficit being the probability of leaving the segment. Multi-slot kernels
/// P(T) = P(T-1) P are cached on demand (not thread safe).
class JointTransitionModel {
 public:
  std::vector<std::pair<int, int>> pairs;   // sorted SBPI-id pairs (s0, s1)
  Eigen::MatrixXd s_matrix;                 // |S| x |S|
  std::array<Eigen::Matrix2d, 2> blockage;  // [bs](b, b')

  int n_pairs() const { return static_cast<int>(pairs.size()); }
  int n_u() const { return 4 * n_pairs(); }

  static int u_index(int pair_idx, int b0, int b1) { return pair_idx * 4 + b0 * 2 + b1; }
  static int pair_of(int u) { return u / 4; }
  static int blockage_of(int u, int bs) { return bs == 0 ? (u / 2) % 2 : u % 2; }

  int sbpi_of(int u, int bs) const {
    const auto& p = pairs[pair_of(u)];
    return bs == 0 ? p.first : p.second;
  }

  int pair_index(int s0, int s1) const {
    const auto it = std::lower_bound(pairs.begin(), pairs.end(), std::make_pair(s0, s1));
    if (it == pairs.end() || *it != std::make_pair(s0, s1)) return -1;
    return static_cast<int>(it - pairs.begin());
  }

  void assemble() {
    const int nu = n_u();
    one_step_ = Eigen::MatrixXd::Zero(nu, nu);
    for (int sp = 0; sp < n_pairs(); ++sp) {
      for (int sq = 0; sq < n_pairs(); ++sq) {
        const double ps = s_matrix(sp, sq);
        if (ps == 0.0) continue;
        for (int b0 = 0; b0 < 2; ++b0)
          for (int b1 = 0; b1 < 2; ++b1)
            for (int c0 = 0; c0 < 2; ++c0)
              for (int c1 = 0; c1 < 2; ++c1)
                one_step_(u_index(sp, b0, b1), u_index(sq, c0, c1)) =
                    ps * blockage[0](b0, c0) * blockage[1](b1, c1);
      }
    }
    powers_.clear();
    powers_[1] = std::make_shared<Eigen::MatrixXd>(one_step_);
  }

  const Eigen::MatrixXd& one_step() const { return one_step_; }

  /// P(T), T >= 0, by the step recursion with caching.
  std::shared_ptr<const Eigen::MatrixXd> power(int t) const {
    if (t < 0) throw std::invalid_argument("power: t must be >= 0");
    auto it = powers_.find(t);
    if (it != powers_.end()) return it->second;
    if (t == 0) {
      auto id = std::make_shared<Eigen::MatrixXd>(
          Eigen::MatrixXd::Identity(n_u(), n_u()));
      powers_[0] = id;
      return id;
    }
    auto prev = power(t - 1);
    auto next = std::make_shared<Eigen::MatrixXd>((*prev) * one_step_);
    powers_[t] = next;
    return next;
  }

 private:
  Eigen::MatrixXd one_step_;
  mutable std::map<int, std::shared_ptr<const Eigen::MatrixXd>> powers_;
};

struct JointModelBuild {
  JointTransitionModel model;
  double mean_duration_s = 0.0;     // mean segment traversal time
  std::vector<std::uint64_t> visits;  // per pair state
  int entry_pair_index = -1;        // pair at the lane-0 entry cell
};

/// Estimates the SBPI-pair chain from simulated mobility (lane-uniform entry
/// at the segment start, initial speed mu_v) and combines it with the
/// analytic blockage chains. Pair states are the pairs actually visited,
/// indexed in sorted order.
inline JointModelBuild joint_model_from_samples(const JointCodebook& cb, const MobilityParams& mob,
                                                const std::array<BlockageParams, 2>& blk,
                                                int n_traj, std::uint64_t seed) {
  mob.validate();
  if (n_traj < 1) throw std::invalid_argument("joint_model_from_samples: n_traj must be >= 1");

  std::map<std::pair<int, int>, int> discovered;
  std::vector<std::vector<std::uint64_t>> counts;   // [from][to]
  std::vector<std::uint64_t> visit_count;           // denominator (includes exits)
  const auto intern = [&](int cell) {
    const auto key = std::make_pair(cb.sbpi_grid[0][cell], cb.sbpi_grid[1][cell]);
    auto [it, inserted] = discovered.try_emplace(key, static_cast<int>(discovered.size()));
    if (inserted) {
      for (auto& row : counts) row.push_back(0);
      counts.emplace_back(discovered.size(), 0);
      visit_count.push_back(0);
    }
    return it->second;
  };

  KahanSum<double> slot_sum;
  for (int traj = 0; traj < n_traj; ++traj) {
    auto rng = make_rng(seed, static_cast<std::uint64_t>(traj));
    std::uniform_int_distribution<int> lane_pick(0, cb.scene.lane_count - 1);
    UeKinematics ue{lane_pick(rng), 0.0, mob.mu_v};
    int prev = intern(cb.cell_index(ue.lane, ue.y));
    std::uint64_t slots = 0;
    int last_cell = -1;
    int last_pair = -1;
    while (true) {
      const StepResult r = mobility_step(ue, mob, cb.scene.segment_length, cb.scene.lane_count, rng);
      ++slots;
      visit_count[prev] += 1;
      if (r == StepResult::kExited) break;
      const int cell = cb.cell_index(ue.lane, ue.y);
      int cur;
      if (cell == last_cell) {
        cur = last_pair;
      } else {
        cur = intern(cell);
        last_cell = cell;
        last_pair = cur;
      }
      counts[prev][cur] += 1;
      prev = cur;
    }
    slot_sum.add(static_cast<double>(slots));
  }

  // Reindex in sorted pair order for deterministic state identity.
  std::vector<std::pair<int, int>> pairs;
  pairs.reserve(discovered.size());
  for (const auto& [key, idx] : discovered) pairs.push_back(key);  // map is already sorted
  std::vector<int> old_of_new(pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) old_of_new[i] = discovered.at(pairs[i]);

  JointModelBuild out;
  out.model.pairs = pairs;
  const int ns = static_cast<int>(pairs.size());
  out.model.s_matrix = Eigen::MatrixXd::Zero(ns, ns);
  out.visits.assign(ns, 0);
  for (int i = 0; i < ns; ++i) {
    const std::uint64_t v = visit_count[old_of_new[i]];
    out.visits[i] = v;
    if (v == 0) continue;
    for (int j = 0; j < ns; ++j)
      out.model.s_matrix(i, j) =
          static_cast<double>(counts[old_of_new[i]][old_of_new[j]]) / static_cast<double>(v);
  }
  for (int bs = 0; bs < 2; ++bs) {
    const BlockageChain c = blockage_chain(blk[bs], mob.delta_t);
    out.model.blockage[bs] << 1.0 - c.p01, c.p01, c.p10, 1.0 - c.p10;
  }
  out.model.assemble();
  out.mean_duration_s = slot_sum.value() / n_traj * mob.delta_t;
  const auto entry = std::make_pair(cb.sbpi_grid[0][cb.cell_index(0, 0.0)],
                                    cb.sbpi_grid[1][cb.cell_index(0, 0.0)]);
  out.entry_pair_index = out.model.pair_index(entry.first, entry.second);
  return out;
}

}  // namespace mmla
