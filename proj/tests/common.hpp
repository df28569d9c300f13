#pragma once

#include "mmla/config.hpp"
#include "mmla/model_build.hpp"

namespace mmla_test {

/// Reference-geometry model with a reduced trajectory budget: same codebook,
/// calibration and action set as the default build, rougher chain estimate.
/// Built once per process.
inline const mmla::BuiltModel& small_model() {
  static const mmla::BuiltModel bm = [] {
    mmla::ExperimentConfig cfg;
    cfg.n_trajectories = 300;
    cfg.seed = 7;
    return mmla::build_model(cfg);
  }();
  return bm;
}

}  // namespace mmla_test
