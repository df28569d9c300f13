#include <catch2/catch_amalgamated.hpp>
#include <cmath>
#include <random>
#include <set>
#include <vector>

#include "mmla/mobility.hpp"
#include "mmla/transition_model.hpp"
#include "mmla/util.hpp"

using namespace mmla;

TEST_CASE("Gauss-Markov speed relaxes to the mean", "[mobility]") {
  MobilityParams p;
  p.sigma_v = 0.0;
  p.lane_change_prob = 0.0;
  std::mt19937_64 rng(1);
  UeKinematics ue{0, 0.0, 0.0};
  double expect_v = 0.0;
  double expect_y = 0.0;
  for (int t = 0; t < 200; ++t) {
    expect_y += p.delta_t * expect_v;
    expect_v = p.gamma * expect_v + (1.0 - p.gamma) * p.mu_v;
    REQUIRE(mobility_step(ue, p, 30.0, 2, rng) == StepResult::kInside);
    CHECK(ue.v == Catch::Approx(expect_v).margin(1e-12));
  }
  CHECK(ue.v == Catch::Approx(p.mu_v).margin(1e-9));
  CHECK(ue.y == Catch::Approx(expect_y).margin(1e-12));
}

TEST_CASE("speed process stationary moments", "[mobility]") {
  MobilityParams p;  // mu 30, sigma 10, gamma 0.2
  std::mt19937_64 rng(7);
  UeKinematics ue{0, 0.0, p.mu_v};
  KahanSum<double> s1, s2;
  const int n = 200000;
  for (int t = 0; t < n; ++t) {
    ue.y = 0.0;  // keep it inside; only the speed matters here
    mobility_step(ue, p, 30.0, 2, rng);
    s1.add(ue.v);
    s2.add(ue.v * ue.v);
  }
  const double mean = s1.value() / n;
  const double var = s2.value() / n - mean * mean;
  // Stationary law is N(mu, sigma^2) apart from the rare floor at zero.
  CHECK(mean == Catch::Approx(p.mu_v).margin(0.3));
  CHECK(std::sqrt(var) == Catch::Approx(p.sigma_v).margin(0.3));
}

TEST_CASE("segment exit and lane bounds", "[mobility]") {
  MobilityParams p;
  std::mt19937_64 rng(3);
  UeKinematics ue{1, 0.0, p.mu_v};
  int steps = 0;
  std::set<int> lanes_seen;
  p.lane_change_prob = 0.2;
  while (mobility_step(ue, p, 30.0, 2, rng) == StepResult::kInside) {
    ++steps;
    lanes_seen.insert(ue.lane);
    REQUIRE(ue.lane >= 0);
    REQUIRE(ue.lane <= 1);
    REQUIRE(steps < 200000);
  }
  CHECK(ue.y > 30.0);
  // At 20% per slot both lanes certainly get visited over a full traversal.
  CHECK(lanes_seen == std::set<int>{0, 1});

  // Speeds never go negative, so the rear exit only fires for a state that
  // is already outside.
  UeKinematics back{0, -0.5, 0.0};
  CHECK(mobility_step(back, p, 30.0, 2, rng) == StepResult::kExited);

  // Three lanes: edge lanes move inward, the middle one goes either way.
  p.lane_change_prob = 1.0;
  UeKinematics tri{0, 0.0, 0.0};
  mobility_step(tri, p, 30.0, 3, rng);
  CHECK(tri.lane == 1);
  tri.lane = 2;
  mobility_step(tri, p, 30.0, 3, rng);
  CHECK(tri.lane == 1);

  MobilityParams bad;
  bad.gamma = 1.5;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = MobilityParams{};
  bad.delta_t = 0.0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("blockage chain parameterization", "[mobility]") {
  const BlockageParams bp{0.2, 0.2};
  const double dt = 1e-4;
  const BlockageChain c = blockage_chain(bp, dt);
  CHECK(c.p01 == Catch::Approx(dt / bp.d0));
  CHECK(c.p10 == Catch::Approx(bp.pi0 / (1.0 - bp.pi0) * dt / bp.d0));

  // pi = (pi0, 1 - pi0) is stationary for the two-state kernel.
  const double flow_out = bp.pi0 * c.p01;
  const double flow_in = (1.0 - bp.pi0) * c.p10;
  CHECK(flow_out == Catch::Approx(flow_in).epsilon(1e-12));

  // Empirical check of both stationary mass and mean blocked dwell.
  const BlockageParams fast{0.3, 0.05};
  const double dt2 = 1e-3;
  const BlockageChain c2 = blockage_chain(fast, dt2);
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  int state = 1;
  long blocked_slots = 0, blocked_runs = 0;
  const int n = 2000000;
  for (int t = 0; t < n; ++t) {
    if (state == 0) {
      ++blocked_slots;
      if (u01(rng) < c2.p01) state = 1;
    } else {
      if (u01(rng) < c2.p10) {
        state = 0;
        ++blocked_runs;
      }
    }
  }
  CHECK(static_cast<double>(blocked_slots) / n == Catch::Approx(fast.pi0).margin(0.02));
  const double mean_dwell_s = static_cast<double>(blocked_slots) / blocked_runs * dt2;
  CHECK(mean_dwell_s == Catch::Approx(fast.d0).epsilon(0.1));

  CHECK_THROWS_AS(blockage_chain({1.0, 0.2}, dt), std::invalid_argument);
  CHECK_THROWS_AS(blockage_chain({0.2, 1e-5}, dt), std::invalid_argument);
}

TEST_CASE("transition frequencies from samples", "[mobility]") {
  std::vector<TransitionSample> samples = {
      {0, 0, false, 1, 1}, {0, 1, false, 1, 1}, {0, 0, false, 2, 0},
      {0, 0, true, 0, 0},                        // exit: visit only
      {1, 1, false, 0, 0},
  };
  const TransitionEstimate est = estimate_transitions(3, 2, samples);
  CHECK(est.s_row_defined[0]);
  CHECK(est.s_row_defined[1]);
  CHECK_FALSE(est.s_row_defined[2]);
  CHECK(est.s_hat(0, 1) == Catch::Approx(0.5));
  CHECK(est.s_hat(0, 2) == Catch::Approx(0.25));
  // The exit leaves row 0 substochastic.
  CHECK(est.s_hat.row(0).sum() == Catch::Approx(0.75));
  CHECK(est.s_hat.row(1).sum() == Catch::Approx(1.0));

  const auto key = std::make_pair(0, 1);
  REQUIRE(est.b_hat.count(key) == 1);
  CHECK(est.b_hat.at(key)(0, 1) == Catch::Approx(1.0));
  CHECK(est.b_hat.at(key)(1, 1) == Catch::Approx(1.0));
  CHECK(est.b_row_defined.at(key)[0]);
  CHECK(est.b_row_defined.at(key)[1]);

  CHECK_THROWS_AS(estimate_transitions(0, 2, samples), std::invalid_argument);
  samples.push_back({5, 0, false, 0, 0});
  CHECK_THROWS_AS(estimate_transitions(3, 2, samples), std::invalid_argument);
}

namespace {

Eigen::MatrixXd kron(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  Eigen::MatrixXd out(a.rows() * b.rows(), a.cols() * b.cols());
  for (int i = 0; i < a.rows(); ++i)
    for (int j = 0; j < a.cols(); ++j)
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  return out;
}

}  // namespace

TEST_CASE("joint chain is the product of its factors", "[mobility]") {
  JointTransitionModel m;
  m.pairs = {{1, 1}, {2, 3}};
  m.s_matrix.resize(2, 2);
  m.s_matrix << 0.9, 0.05, 0.1, 0.8;
  m.blockage[0] << 0.7, 0.3, 0.2, 0.8;
  m.blockage[1] << 0.6, 0.4, 0.1, 0.9;
  m.assemble();

  const Eigen::MatrixXd expect =
      kron(m.s_matrix, kron(Eigen::MatrixXd(m.blockage[0]), Eigen::MatrixXd(m.blockage[1])));
  REQUIRE(m.one_step().rows() == 8);
  CHECK((m.one_step() - expect).cwiseAbs().maxCoeff() < 1e-14);

  // Row mass equals the pair-chain row mass; the deficit is the exit mass.
  for (int u = 0; u < m.n_u(); ++u) {
    CHECK(m.one_step().row(u).sum() ==
          Catch::Approx(m.s_matrix.row(JointTransitionModel::pair_of(u)).sum()).epsilon(1e-12));
  }

  // Index algebra round-trips.
  for (int pi = 0; pi < m.n_pairs(); ++pi)
    for (int b0 = 0; b0 < 2; ++b0)
      for (int b1 = 0; b1 < 2; ++b1) {
        const int u = JointTransitionModel::u_index(pi, b0, b1);
        CHECK(JointTransitionModel::pair_of(u) == pi);
        CHECK(JointTransitionModel::blockage_of(u, 0) == b0);
        CHECK(JointTransitionModel::blockage_of(u, 1) == b1);
        CHECK(m.sbpi_of(u, 0) == m.pairs[pi].first);
        CHECK(m.sbpi_of(u, 1) == m.pairs[pi].second);
      }
  CHECK(m.pair_index(2, 3) == 1);
  CHECK(m.pair_index(9, 9) == -1);

  // Multi-slot kernels: identity at zero, matrix powers after, cached.
  CHECK((*m.power(0) - Eigen::MatrixXd::Identity(8, 8)).cwiseAbs().maxCoeff() == 0.0);
  const auto p3 = m.power(3);
  const Eigen::MatrixXd direct = m.one_step() * m.one_step() * m.one_step();
  CHECK((*p3 - direct).cwiseAbs().maxCoeff() < 1e-14);
  CHECK(m.power(3).get() == p3.get());
  CHECK_THROWS_AS(m.power(-1), std::invalid_argument);
}

TEST_CASE("estimated road chain", "[mobility]") {
  const JointCodebook cb = build_codebooks(SceneGeometry{}, ArrayConfig{}, 8, 8);
  const std::array<BlockageParams, 2> blk{BlockageParams{0.2, 0.2}, BlockageParams{0.2, 0.2}};
  const JointModelBuild b = joint_model_from_samples(cb, MobilityParams{}, blk, 200, 42);

  REQUIRE(b.model.n_pairs() > 0);
  CHECK(std::is_sorted(b.model.pairs.begin(), b.model.pairs.end()));
  CHECK(b.entry_pair_index >= 0);
  const int cell0 = cb.cell_index(0, 0.0);
  CHECK(b.model.pairs[b.entry_pair_index] ==
        std::make_pair(cb.sbpi_grid[0][cell0], cb.sbpi_grid[1][cell0]));

  // Substochastic rows with somewhere-positive exit mass.
  double min_mass = 2.0;
  for (int i = 0; i < b.model.n_pairs(); ++i) {
    const double mass = b.model.s_matrix.row(i).sum();
    CHECK(mass <= 1.0 + 1e-12);
    CHECK(mass >= 0.0);
    min_mass = std::min(min_mass, mass);
  }
  CHECK(min_mass < 1.0);

  // 30 m at a mean 30 m/s is about a second per traversal.
  CHECK(b.mean_duration_s == Catch::Approx(1.0).margin(0.2));

  // Same seed reproduces the chain; a different seed moves the estimates.
  const JointModelBuild b2 = joint_model_from_samples(cb, MobilityParams{}, blk, 200, 42);
  CHECK(b.model.pairs == b2.model.pairs);
  CHECK((b.model.s_matrix - b2.model.s_matrix).cwiseAbs().maxCoeff() == 0.0);
  const JointModelBuild b3 = joint_model_from_samples(cb, MobilityParams{}, blk, 200, 43);
  CHECK((b.model.s_matrix - b3.model.s_matrix).cwiseAbs().maxCoeff() > 0.0);
}
