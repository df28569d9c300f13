#pragma once

#include <Eigen/Dense>
#include <array>
#include <cmath>
#include <limits>
#include <map>
#include <random>
#include <stdexcept>
#include <vector>

#include "mmla/pomdp.hpp"
#include "mmla/util.hpp"

namespace mmla {

/// Reward/cost hyperplane pair with the action that generated it. The value
/// function at dual variable lambda is max over pairs of <b, r - lambda e>;
/// keeping the two coordinates separate lets the same set price any lambda.
struct HyperplanePair {
  Eigen::VectorXd r;
  Eigen::VectorXd e;
  int action = 0;
};

inline double pair_value(const HyperplanePair& h, const Eigen::VectorXd& b, double lambda) {
  return b.dot(h.r) - lambda * b.dot(h.e);
}

inline int best_pair(const std::vector<HyperplanePair>& q, const Eigen::VectorXd& b,
                     double lambda) {
  if (q.empty()) throw std::logic_error("best_pair: empty hyperplane set");
  int best = 0;
  double best_val = pair_value(q[0], b, lambda);
  for (std::size_t i = 1; i < q.size(); ++i) {
    const double v = pair_value(q[i], b, lambda);
    if (v > best_val || (v == best_val && q[i].action < q[best].action)) {
      best_val = v;
      best = static_cast<int>(i);
    }
  }
  return best;
}

/// Deterministic belief seeds: every point belief, the uniform belief, then
/// one uniform-over-blockage belief per SBPI-pair group, truncated to `size`.
inline std::vector<Eigen::VectorXd> seed_belief_set(const PlanningProblem& p, int size) {
  if (size < p.n_u + 1)
    throw std::invalid_argument("seed_belief_set: size must be at least n_u + 1");
  std::vector<Eigen::VectorXd> out;
  for (int u = 0; u < p.n_u; ++u) {
    Eigen::VectorXd b = Eigen::VectorXd::Zero(p.n_u);
    b(u) = 1.0;
    out.push_back(std::move(b));
  }
  out.push_back(Eigen::VectorXd::Constant(p.n_u, 1.0 / p.n_u));
  for (const auto& g : p.groups) {
    Eigen::VectorXd b = Eigen::VectorXd::Zero(p.n_u);
    for (int u : g) b(u) = 1.0 / g.size();
    out.push_back(std::move(b));
  }
  if (static_cast<int>(out.size()) > size) out.resize(size);
  return out;
}

namespace detail {

inline double min_l1(const std::vector<Eigen::VectorXd>& set, const Eigen::VectorXd& b) {
  double d = std::numeric_limits<double>::infinity();
  for (const auto& x : set) d = std::min(d, (x - b).lpNorm<1>());
  return d;
}

inline int sample_discrete(const Eigen::VectorXd& w, double total, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  const double target = u01(rng) * total;
  double acc = 0.0;
  for (int i = 0; i < w.size(); ++i) {
    acc += w(i);
    if (target < acc) return i;
  }
  return -1;  // residual mass (exit)
}

}  // namespace detail

/// Stochastic-simulation belief expansion: per pass and per stored belief,
/// one-step-simulates every action, keeps the successor belief farthest (min
/// L1) from the target BS's current set, and appends it after the pass.
inline void ssea_expand(const PlanningProblem& p,
                        std::array<std::vector<Eigen::VectorXd>, 2>& sets, int passes,
                        std::mt19937_64& rng) {
  for (int pass = 0; pass < passes; ++pass) {
    const std::array<std::vector<Eigen::VectorXd>, 2> snapshot = sets;
    std::array<std::vector<Eigen::VectorXd>, 2> additions;
    for (int bs = 0; bs < 2; ++bs) {
      for (const Eigen::VectorXd& b : snapshot[bs]) {
        double best_dist = -1.0;
        int best_target = 0;
        Eigen::VectorXd best_belief;
        for (std::size_t a = 0; a < p.actions[bs].size(); ++a) {
          const ActionSlice& sl = *p.actions[bs][a];
          const int u = detail::sample_discrete(b, 1.0, rng);
          const int m = detail::sample_discrete(sl.pre->row(u).transpose(), 1.0, rng);
          if (m < 0) continue;  // exited during the action
          const int y = detail::sample_discrete(sl.fb.row(m).transpose(), 1.0, rng);
          const BeliefUpdate up = belief_update(b, sl, sl.obs_ids[y]);
          if (up.status != BeliefStatus::kOk) continue;
          const double d = detail::min_l1(snapshot[up.bs], up.belief);
          if (d > best_dist) {
            best_dist = d;
            best_target = up.bs;
            best_belief = up.belief;
          }
        }
        if (best_dist > 0.0) additions[best_target].push_back(std::move(best_belief));
      }
    }
    for (int bs = 0; bs < 2; ++bs) {
      for (auto& b : additions[bs]) {
        if (detail::min_l1(sets[bs], b) > 0.0) sets[bs].push_back(std::move(b));
      }
    }
  }
}

struct PerseusResult {
  std::vector<HyperplanePair> q;
  Eigen::VectorXd v_prev;  // value of each stored belief under the old sets
  Eigen::VectorXd v_next;  // value under the returned set, same lambda
};

/// One randomized point-based backup sweep for serving BS `bs`: repeatedly
/// samples a not-yet-improved belief, backs it up against the previous
/// iteration's hyperplane sets of both BSs (handover reads the other BS), and
/// keeps the previous maximizer when the backup does not improve the point.
/// Guarantees v_next >= v_prev on every stored belief at this lambda.
inline PerseusResult perseus_backup(const PlanningProblem& p, int bs,
                                    const std::vector<Eigen::VectorXd>& beliefs,
                                    const std::array<std::vector<HyperplanePair>, 2>& q_prev,
                                    double lambda,
                                    const std::array<Eigen::VectorXd, 2>& scaled_energy,
                                    double reward_scale, std::mt19937_64& rng) {
  const int nb = static_cast<int>(beliefs.size());
  const int nu = p.n_u;
  PerseusResult res;
  res.v_prev.resize(nb);
  std::vector<int> prev_arg(nb);
  for (int i = 0; i < nb; ++i) {
    prev_arg[i] = best_pair(q_prev[bs], beliefs[i], lambda);
    res.v_prev(i) = pair_value(q_prev[bs][prev_arg[i]], beliefs[i], lambda);
  }
  res.v_next = Eigen::VectorXd::Constant(nb, -std::numeric_limits<double>::infinity());

  // Project every previous hyperplane through each distinct post matrix once:
  // columns of pr/pe are post * alpha_r, post * alpha_e; pd prices them at
  // lambda for the observation argmax.
  struct Proj {
    Eigen::MatrixXd pr, pe, pd;
  };
  std::map<std::pair<const Eigen::MatrixXd*, int>, Proj> proj;
  for (std::size_t a = 0; a < p.actions[bs].size(); ++a) {
    const ActionSlice& sl = *p.actions[bs][a];
    const int target = sl.flips ? 1 - bs : bs;
    const auto key = std::make_pair(sl.post.get(), target);
    if (proj.count(key)) continue;
    const auto& q = q_prev[target];
    Proj pj;
    pj.pr.resize(nu, q.size());
    pj.pe.resize(nu, q.size());
    for (std::size_t k = 0; k < q.size(); ++k) {
      pj.pr.col(k) = (*sl.post) * q[k].r;
      pj.pe.col(k) = (*sl.post) * q[k].e;
    }
    pj.pd = pj.pr - lambda * pj.pe;
    proj.emplace(key, std::move(pj));
  }

  std::vector<int> unimproved(nb);
  for (int i = 0; i < nb; ++i) unimproved[i] = i;

  while (!unimproved.empty()) {
    std::uniform_int_distribution<std::size_t> pick(0, unimproved.size() - 1);
    const int bi = unimproved[pick(rng)];
    const Eigen::VectorXd& b = beliefs[bi];

    double best_val = -std::numeric_limits<double>::infinity();
    HyperplanePair best{};
    int best_action = -1;
    std::map<const Eigen::MatrixXd*, Eigen::RowVectorXd> mids;
    for (std::size_t a = 0; a < p.actions[bs].size(); ++a) {
      const ActionSlice& sl = *p.actions[bs][a];
      const int target = sl.flips ? 1 - bs : bs;
      auto mit = mids.find(sl.pre.get());
      if (mit == mids.end())
        mit = mids.emplace(sl.pre.get(), b.transpose() * (*sl.pre)).first;
      const Eigen::RowVectorXd& mid = mit->second;
      const Proj& pj = proj.at(std::make_pair(sl.post.get(), target));

      Eigen::VectorXd hr = Eigen::VectorXd::Zero(nu);
      Eigen::VectorXd he = Eigen::VectorXd::Zero(nu);
      for (int y = 0; y < sl.fb.cols(); ++y) {
        const Eigen::RowVectorXd my = mid.cwiseProduct(sl.fb.col(y).transpose());
        int k_star = 0;
        double k_val = -std::numeric_limits<double>::infinity();
        for (int k = 0; k < pj.pd.cols(); ++k) {
          const double v = my.dot(pj.pd.col(k));
          if (v > k_val) {
            k_val = v;
            k_star = k;
          }
        }
        hr.noalias() += sl.fb.col(y).cwiseProduct(pj.pr.col(k_star));
        he.noalias() += sl.fb.col(y).cwiseProduct(pj.pe.col(k_star));
      }
      Eigen::VectorXd ar = reward_scale * sl.reward_bits + (*sl.pre) * hr;
      Eigen::VectorXd ae = scaled_energy[bs](a) * Eigen::VectorXd::Ones(nu) + (*sl.pre) * he;
      const double val = b.dot(ar) - lambda * b.dot(ae);
      if (val > best_val) {
        best_val = val;
        best = {std::move(ar), std::move(ae), static_cast<int>(a)};
        best_action = static_cast<int>(a);
      }
    }
    (void)best_action;

    HyperplanePair chosen;
    if (best_val >= res.v_prev(bi)) {
      chosen = std::move(best);
    } else {
      chosen = q_prev[bs][prev_arg[bi]];  // keep the previous maximizer
    }
    res.q.push_back(chosen);
    for (int i = 0; i < nb; ++i)
      res.v_next(i) = std::max(res.v_next(i), pair_value(chosen, beliefs[i], lambda));
    std::vector<int> next_unimproved;
    for (int i : unimproved)
      if (res.v_next(i) < res.v_prev(i)) next_unimproved.push_back(i);
    unimproved = std::move(next_unimproved);
  }

  // Exact-duplicate pruning (the keep-previous rule reinserts planes).
  std::vector<HyperplanePair> dedup;
  for (auto& h : res.q) {
    bool dup = false;
    for (const auto& g : dedup)
      if (g.action == h.action && g.r == h.r && g.e == h.e) {
        dup = true;
        break;
      }
    if (!dup) dedup.push_back(std::move(h));
  }
  res.q = std::move(dedup);
  return res;
}

struct ConvergenceRow {
  int n = 0;
  double lambda = 0.0;
  double avg_power_w = 0.0;          // E_n / D_tot
  double spectral_efficiency = 0.0;  // R_n / D_tot / W
  double lagrangian = 0.0;           // normalized units
  double max_dv = 0.0;
};

struct CpbviParams {
  double p_avg_w = dbm_to_watt(16.0);  // +inf disables the constraint
  double d_tot_s = 1.0;
  double w_hz = 100e6;
  double lambda0 = 0.0;
  double gamma0 = 1.0;
  double eps_v = 0.01;
  double eps_e = 0.01;
  int stable_iters = 1;  // consecutive iterations the stop test must hold
  int max_iters = 2000;
  int belief_size = -1;  // -1: full deterministic seed construction
  int ssea_passes = 2;
  std::uint64_t seed = 1;
};

struct PolicyArtifact {
  std::array<std::vector<HyperplanePair>, 2> q;  // normalized units
  double lambda = 0.0;
  bool converged = false;
  int iterations = 0;
  double residual_v = 0.0;
  double constraint_slack = 0.0;  // lambda_n |E - E_max| in normalized units
  double reward_scale = 1.0;      // bits -> value units
  double cost_scale = 1.0;        // joules -> cost units
  double e_max_j = 0.0;
  double d_tot_s = 0.0;
  double w_hz = 0.0;
  double p_avg_w = 0.0;
  std::uint64_t seed = 0;
  std::uint64_t config_hash = 0;
  std::vector<ConvergenceRow> log;
  std::array<std::vector<Eigen::VectorXd>, 2> beliefs;  // final belief sets
};

struct PolicyDecision {
  int action = 0;
  double value = 0.0;
  double rbar = 0.0;  // normalized reward coordinate of the maximizer
  double ebar = 0.0;  // normalized cost coordinate of the maximizer
};

inline PolicyDecision policy_action(const PolicyArtifact& art, const Eigen::VectorXd& belief,
                                    int bs) {
  const int k = best_pair(art.q[bs], belief, art.lambda);
  const HyperplanePair& h = art.q[bs][k];
  PolicyDecision d;
  d.action = h.action;
  d.rbar = belief.dot(h.r);
  d.ebar = belief.dot(h.e);
  d.value = d.rbar - art.lambda * d.ebar;
  return d;
}

/// Constrained point-based value iteration: alternates one randomized backup
/// sweep per BS (each reading the previous iteration's sets of both BSs) with
/// a projected-subgradient step on the dual variable, priced at the initial
/// belief. Rewards are normalized to spectral-efficiency units and costs to
/// budget units so the stopping thresholds are meaningful at O(1) scale.
inline PolicyArtifact cpbvi(const PlanningProblem& p, const CpbviParams& prm) {
  if (p.n_u <= 0 || p.actions[0].empty() || p.actions[1].empty())
    throw std::invalid_argument("cpbvi: empty problem");
  if (prm.d_tot_s <= 0.0 || prm.w_hz <= 0.0)
    throw std::invalid_argument("cpbvi: d_tot and bandwidth must be > 0");

  const bool constrained = std::isfinite(prm.p_avg_w);
  const double e_max_j = prm.p_avg_w * prm.d_tot_s;
  const double reward_scale = 1.0 / (prm.d_tot_s * prm.w_hz);
  const double cost_scale = constrained ? 1.0 / e_max_j : 1.0;
  const double e_max = constrained ? 1.0 : std::numeric_limits<double>::infinity();

  std::array<Eigen::VectorXd, 2> scaled_energy;
  for (int bs = 0; bs < 2; ++bs) {
    scaled_energy[bs].resize(p.actions[bs].size());
    for (std::size_t a = 0; a < p.actions[bs].size(); ++a)
      scaled_energy[bs](a) = p.actions[bs][a]->energy_j * cost_scale;
  }

  auto rng = make_rng(prm.seed, 0);
  std::array<std::vector<Eigen::VectorXd>, 2> beliefs;
  {
    const int full = p.n_u + 1 + static_cast<int>(p.groups.size());
    const int size = prm.belief_size < 0 ? full : prm.belief_size;
    auto seeds = seed_belief_set(p, size);
    beliefs[0] = seeds;
    beliefs[1] = std::move(seeds);
    ssea_expand(p, beliefs, prm.ssea_passes, rng);
  }

  PolicyArtifact art;
  art.reward_scale = reward_scale;
  art.cost_scale = cost_scale;
  art.e_max_j = e_max_j;
  art.d_tot_s = prm.d_tot_s;
  art.w_hz = prm.w_hz;
  art.p_avg_w = prm.p_avg_w;
  art.seed = prm.seed;
  for (int bs = 0; bs < 2; ++bs)
    art.q[bs].push_back({Eigen::VectorXd::Zero(p.n_u), Eigen::VectorXd::Zero(p.n_u), 0});

  double lambda = std::max(0.0, prm.lambda0);
  std::array<Eigen::VectorXd, 2> v_prev_iter;
  for (int bs = 0; bs < 2; ++bs)
    v_prev_iter[bs] = Eigen::VectorXd::Zero(beliefs[bs].size());
  int stable = 0;

  for (int n = 0; n < prm.max_iters; ++n) {
    std::array<std::vector<HyperplanePair>, 2> q_next;
    std::array<Eigen::VectorXd, 2> v_next;
    for (int bs = 0; bs < 2; ++bs) {
      PerseusResult r = perseus_backup(p, bs, beliefs[bs], art.q, lambda, scaled_energy,
                                       reward_scale, rng);
      q_next[bs] = std::move(r.q);
      v_next[bs] = std::move(r.v_next);
    }
    art.q = std::move(q_next);
    // The all-handover plan (zero bits, zero joules) is realizable from any
    // state, so its pair is a valid lower bound at every lambda. Keeping it
    // pinned gives backups a stopping continuation and the dual a feasible
    // fallback once lambda prices transmission out; without it the set's
    // energy floor can only drain one round per iteration.
    for (int bs = 0; bs < 2; ++bs) {
      bool has_zero = false;
      for (const auto& h : art.q[bs])
        if (h.r.isZero(0.0) && h.e.isZero(0.0)) {
          has_zero = true;
          break;
        }
      if (!has_zero)
        art.q[bs].push_back(
            {Eigen::VectorXd::Zero(p.n_u), Eigen::VectorXd::Zero(p.n_u), 0});
    }

    const int k0 = best_pair(art.q[p.initial_bs], p.initial_belief, lambda);
    const double ebar = p.initial_belief.dot(art.q[p.initial_bs][k0].e);
    const double rbar = p.initial_belief.dot(art.q[p.initial_bs][k0].r);

    double max_dv = 0.0;
    for (int bs = 0; bs < 2; ++bs) {
      if (v_prev_iter[bs].size() == v_next[bs].size())
        max_dv = std::max(max_dv, (v_next[bs] - v_prev_iter[bs]).cwiseAbs().maxCoeff());
      else
        max_dv = std::numeric_limits<double>::infinity();
      v_prev_iter[bs] = v_next[bs];
    }

    const double slack = constrained ? lambda * std::abs(ebar - e_max) : 0.0;
    art.log.push_back({n, lambda, ebar / cost_scale / prm.d_tot_s,
                       rbar, rbar - lambda * (ebar - (constrained ? e_max : 0.0)), max_dv});
    art.iterations = n + 1;
    art.residual_v = max_dv;
    art.constraint_slack = slack;
    art.lambda = lambda;

    // A single in-tolerance sample is not enough: while the set is still
    // deepening its plans, the priced energy at beta_0 can pass through the
    // feasible band transiently. Demand a run of consecutive hits so the
    // measurement reflects a stationary plan, not one in mid-growth.
    stable = (max_dv < prm.eps_v && ebar <= e_max && slack < prm.eps_e) ? stable + 1 : 0;
    if (stable >= std::max(1, prm.stable_iters)) {
      art.converged = true;
      break;
    }
    // With no budget the subgradient is -inf, so the projection lands on 0:
    // the first update already recovers the unconstrained solver.
    const double gamma_n = prm.gamma0 / (n + 1.0);
    lambda = constrained ? std::max(lambda + gamma_n * (ebar - e_max), 0.0) : 0.0;
  }
  art.lambda = lambda;
  art.beliefs = std::move(beliefs);
  return art;
}

}  // namespace mmla
