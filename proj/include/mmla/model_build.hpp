#pragma once

#include <array>
#include <cstdint>

#include "mmla/codebook.hpp"
#include "mmla/config.hpp"
#include "mmla/pomdp.hpp"
#include "mmla/solver.hpp"
#include "mmla/transition_model.hpp"

namespace mmla {

// Substream namespaces so model estimation, planning and evaluation never
// share random draws even under the same master seed.
inline constexpr std::uint64_t kModelStream = 0x6d6f64;
inline constexpr std::uint64_t kSolverStream = 0x736f6c;
inline constexpr std::uint64_t kSimStream = 0x73696d;

/// The full experiment environment: geometric ground truth (codebook over the
/// road grid), its sectored abstraction, and the planning model built on it.
struct BuiltModel {
  JointCodebook codebook;
  SectoredCalibration calibration;
  LinkModel model;
  std::vector<std::uint64_t> visits;  // per-pair slot counts behind the chain estimate
};

/// Channel/protocol constants shared by the build and load paths.
inline void apply_config(LinkModel& m, const ExperimentConfig& cfg) {
  const ChannelParams ch = cfg.channel();
  m.noise_power_w = ch.noise_power();
  m.sigma_dif_sq = ch.sigma_dif_sq;
  m.rho = cfg.rho();
  m.symbols = cfg.symbols;
  m.kappa = cfg.kappa;
  m.bandwidth_hz = cfg.bandwidth_hz;
  m.delta_t = cfg.mobility.delta_t;
  m.t_ho = cfg.t_ho;
  m.initial_bs = 1;
  m.config_hash = cfg.hash();
}

inline BuiltModel build_model(const ExperimentConfig& cfg) {
  cfg.validate();
  BuiltModel out;
  out.codebook = build_codebooks(cfg.scene, cfg.arrays, cfg.n_bs_beams, cfg.n_ue_beams,
                                 cfg.grid_step, cfg.coverage_min_frac);
  out.calibration = calibrate_sectored(out.codebook, cfg.resolved_sigma_dif_sq(), cfg.guard_m);

  const std::array<BlockageParams, 2> blk{cfg.blockage, cfg.blockage};
  JointModelBuild jb = joint_model_from_samples(out.codebook, cfg.mobility, blk,
                                                cfg.n_trajectories,
                                                substream_seed(cfg.seed, kModelStream));

  LinkModel& m = out.model;
  m.chain = std::move(jb.model);
  m.calib = out.calibration;
  m.sbpi_sets = out.codebook.sbpi_sets;
  m.d_tot_s = jb.mean_duration_s;
  m.entry_pair_index = jb.entry_pair_index;
  apply_config(m, cfg);
  m.materialize_actions(cfg.action_grid());
  out.visits = std::move(jb.visits);
  return out;
}

inline CpbviParams solver_params(const ExperimentConfig& cfg, const LinkModel& m) {
  CpbviParams p;
  p.p_avg_w = cfg.p_avg_w();
  p.d_tot_s = m.d_tot_s;
  p.w_hz = cfg.bandwidth_hz;
  p.lambda0 = cfg.solver.lambda0;
  p.gamma0 = cfg.solver.gamma0;
  p.eps_v = cfg.solver.eps_v;
  p.eps_e = cfg.solver.eps_e;
  p.stable_iters = cfg.solver.stable_iters;
  p.max_iters = cfg.solver.max_iters;
  p.belief_size = cfg.solver.belief_size;
  p.ssea_passes = cfg.solver.ssea_passes;
  p.seed = substream_seed(cfg.seed, kSolverStream);
  return p;
}

}  // namespace mmla
