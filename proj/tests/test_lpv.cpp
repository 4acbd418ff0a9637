#include "wlmpc/lpv.hpp"

#include <gtest/gtest.h>

#include "test_helpers.hpp"

using namespace wlmpc;

namespace {

VehicleParams unit_params() {
  VehicleParams p;
  p.l_front = 1.0;
  p.l_rear = 1.0;
  return p;
}

Trajectory straight_trajectory(int n, double v, const VehicleParams& p) {
  Trajectory t;
  t.ts = 0.2;
  VehicleState s{0, 0, 0, 0, Frame::Rear};
  for (int i = 0; i < n; ++i) {
    t.steps.push_back({s, ControlInput{v, 0.0}});
    s = step_euler(s, ControlInput{v, 0.0}, p, t.ts);
  }
  t.finalize(p);
  return t;
}

TEST(LpvEmbed, TrivialPointMatricesMatchScaledJacobians) {
  const VehicleParams p = unit_params();
  const SchedulingPoint rho{0.0, 0.0, 1.0, 0.0, Frame::Rear};
  const LpvMatrices m = embed_at(rho, p, 0.2);
  Mat4 a = Mat4::Identity();
  a(1, 2) = 0.2;
  a(2, 3) = 0.1;
  EXPECT_LT((m.a - a).cwiseAbs().maxCoeff(), 1e-15);
  Mat42 b;
  b << 0.2, 0, 0, 0, 0, -0.1, 0, 0.2;
  EXPECT_LT((m.b - b).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(LpvEmbed, ZeroInputGivesIdentityA) {
  VehicleParams p;
  const SchedulingPoint rho{0.7, 0.3, 0.0, 0.0, Frame::Front};
  const LpvMatrices m = embed_at(rho, p, 0.2);
  EXPECT_LT((m.a - Mat4::Identity()).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(LpvEmbed, RejectsNonPositiveTs) {
  VehicleParams p;
  EXPECT_THROW(embed_at(SchedulingPoint{}, p, 0.0), std::invalid_argument);
}

TEST(LpvEmbed, SecondOrderRemainderRatio) {
  // One-step LPV prediction error is quadratic in the perturbation: halving
  // the perturbation shrinks the error by ~4.
  VehicleParams p;
  test::RandomPointGen gen(4242);
  int checked = 0;
  for (int trial = 0; trial < 200 && checked < 60; ++trial) {
    const Frame f = (trial % 2 == 0) ? Frame::Rear : Frame::Front;
    const VehicleState nom_s = gen.state(p, f);
    const ControlInput nom_u = gen.input(p);
    const SchedulingPoint rho{nom_s.theta, nom_s.gamma, nom_u.v, nom_u.gamma_rate, f};
    const LpvMatrices m = embed_at(rho, p, 0.2);

    const VehicleState ds = gen.state(p, f);
    const ControlInput du = gen.input(p);
    const Vec4 dx = ds.vec().normalized();
    const Vec2 duv = du.vec().normalized();

    auto prediction_error = [&](double h) {
      const VehicleState pert = VehicleState::from_vec(nom_s.vec() + h * dx, f);
      const ControlInput pu{nom_u.v + h * duv(0), nom_u.gamma_rate + h * duv(1)};
      const Vec4 actual =
          step_euler(pert, pu, p, 0.2).vec() - step_euler(nom_s, nom_u, p, 0.2).vec();
      const Vec4 predicted = m.a * (h * dx) + m.b * (h * duv);
      return (actual - predicted).norm();
    };

    const double e1 = prediction_error(1e-2);
    const double e2 = prediction_error(5e-3);
    if (e2 < 1e-12) continue;  // quadratic term vanished at this point
    const double ratio = e1 / e2;
    EXPECT_GT(ratio, 3.2);
    EXPECT_LT(ratio, 4.8);
    ++checked;
  }
  EXPECT_GE(checked, 50);
}

TEST(LpvEmbed, ZeroDeviationStaysZero) {
  VehicleParams p;
  Trajectory t = straight_trajectory(30, 1.0, p);
  const auto seq = embed_horizon(t, 0, 20, p, t.ts);
  Vec4 xe = Vec4::Zero();
  for (const auto& m : seq) xe = m.a * xe + m.b * Vec2::Zero();
  EXPECT_EQ(xe.cwiseAbs().maxCoeff(), 0.0);
}

TEST(LpvEmbed, PredictionIsLinearInInitialErrorAndInputs) {
  VehicleParams p;
  test::RandomPointGen gen(99);
  Trajectory t;
  t.ts = 0.2;
  VehicleState s{0, 0, 0.1, 0.05, Frame::Rear};
  for (int i = 0; i < 15; ++i) {
    const ControlInput u{1.0 + 0.05 * i, 0.02 * (i % 3)};
    t.steps.push_back({s, u});
    s = step_euler(s, u, p, t.ts);
  }
  t.finalize(p);
  const int n = 10;
  const auto seq = embed_horizon(t, 0, n, p, t.ts);

  auto roll = [&](const Vec4& x0, const std::vector<Vec2>& us) {
    Vec4 x = x0;
    for (int i = 0; i < n; ++i) x = seq[static_cast<size_t>(i)].a * x +
                                    seq[static_cast<size_t>(i)].b * us[static_cast<size_t>(i)];
    return x;
  };

  std::vector<Vec2> u1(n), u2(n), usum(n);
  for (int i = 0; i < n; ++i) {
    u1[static_cast<size_t>(i)] = gen.input(p).vec();
    u2[static_cast<size_t>(i)] = gen.input(p).vec();
    usum[static_cast<size_t>(i)] =
        u1[static_cast<size_t>(i)] + 2.0 * u2[static_cast<size_t>(i)];
  }
  const Vec4 a = gen.state(p, Frame::Rear).vec();
  const Vec4 b = gen.state(p, Frame::Rear).vec();
  const Vec4 lhs = roll(a + 2.0 * b, usum);
  const Vec4 rhs = roll(a, u1) + 2.0 * roll(b, u2);
  EXPECT_LT((lhs - rhs).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(LpvEmbed, ScheduledSequenceDiffersFromFrozenOnTurns) {
  VehicleParams p;
  Trajectory t;
  t.ts = 0.2;
  VehicleState s{0, 0, 0, 0, Frame::Rear};
  for (int i = 0; i < 20; ++i) {
    const ControlInput u{1.0, 0.1};  // steadily articulating
    t.steps.push_back({s, u});
    s = step_euler(s, u, p, t.ts);
  }
  t.finalize(p);
  const auto seq = embed_horizon(t, 0, 10, p, t.ts);
  double max_diff = 0.0;
  for (const auto& m : seq)
    max_diff = std::max(max_diff, (m.a - seq[0].a).cwiseAbs().maxCoeff());
  EXPECT_GT(max_diff, 1e-4);
}

TEST(LpvEmbed, ConstantSchedulingGivesIdenticalPairs) {
  VehicleParams p;
  Trajectory t = straight_trajectory(25, 1.2, p);
  const auto seq = embed_horizon(t, 3, 12, p, t.ts);
  for (const auto& m : seq) {
    EXPECT_EQ((m.a - seq[0].a).cwiseAbs().maxCoeff(), 0.0);
    EXPECT_EQ((m.b - seq[0].b).cwiseAbs().maxCoeff(), 0.0);
  }
}

TEST(LpvEmbed, SingletonHorizonIsEmbedAt) {
  VehicleParams p;
  Trajectory t = straight_trajectory(10, -0.8, p);
  const auto seq = embed_horizon(t, 4, 1, p, t.ts);
  ASSERT_EQ(seq.size(), 1u);
  const LpvMatrices direct = embed_at(
      SchedulingPoint::from(t.steps[4], t.frames[4]), p, t.ts);
  EXPECT_EQ((seq[0].a - direct.a).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ((seq[0].b - direct.b).cwiseAbs().maxCoeff(), 0.0);
}

TEST(LpvEmbed, TerminalHoldBeyondEnd) {
  VehicleParams p;
  Trajectory t = straight_trajectory(8, 1.0, p);
  const auto seq = embed_horizon(t, 5, 6, p, t.ts);  // overruns end by 3
  ASSERT_EQ(seq.size(), 6u);
  const LpvMatrices last = embed_at(SchedulingPoint::from(t.steps[7], t.frames[7]), p, t.ts);
  for (size_t k = 2; k < 6; ++k) {
    EXPECT_EQ((seq[k].a - last.a).cwiseAbs().maxCoeff(), 0.0);
    EXPECT_EQ((seq[k].b - last.b).cwiseAbs().maxCoeff(), 0.0);
  }
}

TEST(LpvEmbed, EmptyTrajectoryThrows) {
  VehicleParams p;
  Trajectory t;
  EXPECT_THROW(embed_horizon(t, 0, 5, p, 0.2), std::invalid_argument);
}

TEST(LpvEmbed, HorizonClipsAtDirectionSwitch) {
  VehicleParams p;
  Trajectory t;
  t.ts = 0.2;
  VehicleState s{0, 0, 0, 0, Frame::Rear};
  for (int i = 0; i < 12; ++i) {
    const double v = (i < 6) ? -1.0 : 1.0;  // reverse then forward
    t.steps.push_back({s, ControlInput{v, 0.0}});
    s = step_euler(s, ControlInput{v, 0.0}, p, t.ts);
  }
  t.finalize(p);
  ASSERT_EQ(t.direction_switches.size(), 1u);
  EXPECT_EQ(t.direction_switches[0], 6);
  // A horizon started before the switch holds the last reverse-frame step.
  const auto seq = embed_horizon(t, 3, 8, p, t.ts);
  const LpvMatrices held = embed_at(SchedulingPoint::from(t.steps[5], Frame::Rear), p, t.ts);
  for (size_t k = 2; k < 8; ++k)
    EXPECT_EQ((seq[k].a - held.a).cwiseAbs().maxCoeff(), 0.0);
}

TEST(TrajectoryIndex, SelectFrameRules) {
  EXPECT_EQ(select_frame(1.0, Frame::Rear), Frame::Front);
  EXPECT_EQ(select_frame(-1.0, Frame::Front), Frame::Rear);
  EXPECT_EQ(select_frame(0.0, Frame::Front), Frame::Front);
  EXPECT_EQ(select_frame(0.0, Frame::Rear), Frame::Rear);
  EXPECT_EQ(select_frame(1e-9, Frame::Rear), Frame::Rear);  // below threshold
}

TEST(TrajectoryIndex, ExactMatchReturnsThatIndex) {
  VehicleParams p;
  Trajectory t = straight_trajectory(20, 1.0, p);
  const VehicleState s7 = t.state_in(7, t.frames[7], p);
  EXPECT_EQ(nearest_index(t, Vec2(s7.x, s7.y), t.frames[7], p, 7), 7);
}

TEST(TrajectoryIndex, PerpendicularProjection) {
  VehicleParams p;
  // Straight line along x sampled at 0.2 m.
  Trajectory t = straight_trajectory(30, 1.0, p);  // v*ts = 0.2 m spacing
  // Query near x=1.0 with lateral offset; same-frame positions shift by the
  // body length, so query in the rear frame directly.
  const int idx = nearest_index(t, Vec2(1.03, 0.3), Frame::Rear, p, 5, 30);
  EXPECT_EQ(idx, 5);  // x = 1.0 is sample 5
}

TEST(TrajectoryIndex, MatchesBruteForceOracle) {
  VehicleParams p;
  Trajectory t;
  t.ts = 0.2;
  VehicleState s{0, 0, 0, 0, Frame::Rear};
  for (int i = 0; i < 40; ++i) {
    const ControlInput u{1.0, 0.08 * std::sin(0.3 * i)};
    t.steps.push_back({s, u});
    s = step_euler(s, u, p, t.ts);
  }
  t.finalize(p);
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> off(-1.0, 1.0);
  for (int trial = 0; trial < 100; ++trial) {
    const int truth = static_cast<int>(rng() % 40);
    const VehicleState q = t.state_in(truth, t.frames[0], p);
    const Vec2 query(q.x + 0.05 * off(rng), q.y + 0.05 * off(rng));
    // Full-window search against exhaustive scan.
    int best = 0;
    double best_d2 = std::numeric_limits<double>::infinity();
    for (int i = 0; i < t.size(); ++i) {
      const VehicleState si = t.state_in(i, t.frames[0], p);
      const double d2 = (Vec2(si.x, si.y) - query).squaredNorm();
      if (d2 <= best_d2) {
        best_d2 = d2;
        best = i;
      }
    }
    EXPECT_EQ(nearest_index(t, query, t.frames[0], p, 0, t.size()), best);
  }
}

TEST(TrajectoryIndex, MonotoneWithinWindow) {
  VehicleParams p;
  Trajectory t = straight_trajectory(30, 1.0, p);
  // Query behind the hint: index must not decrease.
  EXPECT_EQ(nearest_index(t, Vec2(0.0, 0.0), Frame::Rear, p, 10), 10);
  // Query ahead inside the window advances.
  EXPECT_EQ(nearest_index(t, Vec2(2.4, 0.0), Frame::Rear, p, 10), 12);
}

}  // namespace
