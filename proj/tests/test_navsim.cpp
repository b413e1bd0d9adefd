#include <gtest/gtest.h>

#include "posetraj/navsim.hpp"
#include "posetraj/synth.hpp"

#include <cmath>
#include <sstream>

using namespace posetraj;
using namespace posetraj::nav;

namespace {

AgentTrack track(const std::string& id, const std::vector<Vec2>& positions) {
  AgentTrack a;
  a.id = id;
  a.positions = positions;
  a.present.assign(positions.size(), true);
  return a;
}

/// Scene whose only agent idles far away from the robot corridor.
Scene lonely_scene() {
  Scene s;
  s.t_obs = 9;
  s.t_pred = 12;
  s.pose_dims = 0;
  s.agents.push_back(track("far", std::vector<Vec2>(21, Vec2(500.0, 500.0))));
  return s;
}

Vec2 rotate(const Vec2& v, double a) { return {std::cos(a) * v.x() - std::sin(a) * v.y(), std::sin(a) * v.x() + std::cos(a) * v.y()}; }

}  // namespace

TEST(SocialForce, PureGoalAttractionAtRest) {
  const SFMParams p;
  const Vec2 a = social_force_step({Vec2(0, 0), Vec2::Zero()}, {}, Vec2(3, 4), p);
  EXPECT_NEAR(a.x(), 1.2 / 0.5 * 0.6, 1e-12);
  EXPECT_NEAR(a.y(), 1.2 / 0.5 * 0.8, 1e-12);
}

TEST(SocialForce, NoForceAtDesiredVelocity) {
  const SFMParams p;
  const Vec2 a = social_force_step({Vec2(0, 0), Vec2(0, 1.2)}, {}, Vec2(0, 10), p);
  EXPECT_NEAR(a.norm(), 0.0, 1e-12);
}

TEST(SocialForce, NeighborAheadRepulsion) {
  const SFMParams p;
  const RobotState r{Vec2(0, 0), Vec2(0, 1.2)};
  const Vec2 a = social_force_step(r, {Vec2(0, 1.4)}, Vec2(0, 10), p);
  EXPECT_NEAR(a.y(), -2.0 * std::exp(-1.0), 1e-12);
  EXPECT_NEAR(a.x(), 0.0, 1e-12);
}

TEST(SocialForce, CoincidentNeighborUsesFixedDirection) {
  const SFMParams p;
  int coincident = 0;
  const Vec2 f = repulsion(Vec2(1, 1), Vec2(1, 1), p, 0, &coincident);
  EXPECT_EQ(coincident, 1);
  EXPECT_NEAR(f.norm(), 2.0 * std::exp(0.6 / 0.8), 1e-12);
  EXPECT_TRUE(f.allFinite());
  EXPECT_NE(repulsion(Vec2(1, 1), Vec2(1, 1), p, 1), f);
}

TEST(PredictionForce, ZeroScaleIsIdentity) {
  SFMParams p;
  p.prediction_scale = 0.0;
  const Vec2 base(0.3, -0.2);
  const std::vector<Matrix> preds = {Matrix::Ones(12, 2)};
  EXPECT_EQ(augment_with_predictions(base, Vec2::Zero(), preds, p), base);
  EXPECT_EQ(augment_with_predictions(base, Vec2::Zero(), {}, SFMParams{}), base);
}

TEST(PredictionForce, StaticNeighborScalesByDiscountedSum) {
  const SFMParams p;
  const Vec2 robot(0, 0), neighbor(0.7, 0.4);
  Matrix track(12, 2);
  track.rowwise() = neighbor.transpose();
  double geometric = 0.0;
  for (int t = 1; t <= 12; ++t) geometric += std::pow(0.85, t);
  const Vec2 expected = 0.6 * geometric * repulsion(robot, neighbor, p);
  const Vec2 got = prediction_force(robot, {track}, p);
  EXPECT_NEAR((got - expected).norm(), 0.0, 1e-12);
}

TEST(PredictionForce, FarPredictionsAreNegligible) {
  Matrix track(12, 2);
  track.rowwise() = Vec2(40.0, 0.0).transpose();
  EXPECT_LT(prediction_force(Vec2::Zero(), {track}, SFMParams{}).norm(), 1e-6);
}

TEST(Episode, EmptySceneIsAStraightRun) {
  const SFMParams p;
  const auto e = run_episode(lonely_scene(), Vec2(0, 0), Vec2(0, 10), PredictorKind::None, nullptr, p, 0);
  EXPECT_TRUE(e.completed);
  EXPECT_FALSE(e.collision);
  EXPECT_NEAR(e.completion_time, 10.0 / 1.2, p.dt);
  for (const auto& t : e.ticks) EXPECT_NEAR(t.robot.position.x(), 0.0, 1e-12);
}

TEST(Episode, SpeedConvergesWithinFiveTau) {
  const SFMParams p;
  const auto e = run_episode(lonely_scene(), Vec2(0, 0), Vec2(0, 10), PredictorKind::None, nullptr, p, 0);
  const auto k = static_cast<std::size_t>(std::lround(5.0 * p.tau / p.dt));
  EXPECT_NEAR(e.ticks[k].robot.velocity.norm(), p.desired_speed, 0.01 * p.desired_speed);
}

TEST(Episode, OracleAvoidsCrossingPedestrian) {
  // A pedestrian crosses the corridor at y = 4 from the right, reaching
  // x = 0 when the no-predictor robot would arrive there.
  Scene s = lonely_scene();
  std::vector<Vec2> cross;
  for (int f = 0; f < 21; ++f) cross.emplace_back(4.2 - 1.2 * ((f - 8) / 2.5), 4.0);
  s.agents.push_back(track("crosser", cross));
  const SFMParams p;
  const auto none = run_episode(s, Vec2(0, 0), Vec2(0, 10), PredictorKind::None, nullptr, p, 0);
  const auto oracle = run_episode(s, Vec2(0, 0), Vec2(0, 10), PredictorKind::Oracle, nullptr, p, 0);
  EXPECT_TRUE(none.collision);
  EXPECT_FALSE(oracle.collision);
  EXPECT_TRUE(oracle.completed);
}

TEST(Episode, SameSeedIsIdentical) {
  synth::WorldConfig w;
  w.seed = 70;
  const auto suite = synth::generate_corpus(w, {}, 3);
  for (const auto& s : suite)
    for (PredictorKind k : {PredictorKind::None, PredictorKind::Oracle})
      EXPECT_EQ(run_episode(s, k, nullptr, SFMParams{}, 4), run_episode(s, k, nullptr, SFMParams{}, 4));
}

TEST(Episode, RotationRotatesThePath) {
  synth::WorldConfig w;
  w.seed = 71;
  const Scene s = synth::generate_corpus(w, {}, 1).front();
  const double angle = 0.7;
  Scene r = s;
  for (auto& a : r.agents)
    for (auto& p : a.positions) p = rotate(p, angle);
  const Vec2 ego = s.primary_track().positions[8];
  const Vec2 start = ego + Vec2(0, -5), goal = ego + Vec2(0, 5);
  for (PredictorKind k : {PredictorKind::None, PredictorKind::Oracle}) {
    const auto a = run_episode(s, start, goal, k, nullptr, SFMParams{}, 0);
    const auto b = run_episode(r, rotate(start, angle), rotate(goal, angle), k, nullptr, SFMParams{}, 0);
    ASSERT_EQ(a.ticks.size(), b.ticks.size());
    for (std::size_t i = 0; i < a.ticks.size(); ++i)
      EXPECT_NEAR((rotate(a.ticks[i].robot.position, angle) - b.ticks[i].robot.position).norm(), 0.0, 1e-6);
  }
}

TEST(Episode, ModelPredictorNeedsMatchingPoseDims) {
  ModelConfig c;
  c.backbone.hidden_dim = 8;
  c.backbone.traj_embed_dim = 8;
  c.backbone.interaction_dim = 8;
  c.backbone.heads = 2;
  c.use_pose = true;
  c.pose.dim = 8;
  c.pose.heads = 2;
  c.pose.layers = 1;
  const Model m(c);
  synth::WorldConfig w;
  const Scene s = synth::project_to_2d(synth::generate_corpus(w, {}, 1).front(), {});
  EXPECT_THROW(run_episode(s, PredictorKind::Model, &m, SFMParams{}, 0), ConfigError);
  EXPECT_THROW(run_episode(s, PredictorKind::Model, nullptr, SFMParams{}, 0), ConfigError);
  SFMParams bad;
  bad.dt = 0.5;
  EXPECT_THROW(run_episode(s, PredictorKind::None, nullptr, bad, 0), ConfigError);
}

TEST(Episode, ModelPredictorRuns) {
  ModelConfig c;
  c.backbone.family = Family::Mlp;
  c.backbone.hidden_dim = 8;
  c.backbone.traj_embed_dim = 8;
  c.backbone.interaction_dim = 8;
  c.backbone.heads = 2;
  c.use_pose = true;
  c.pose.dim = 8;
  c.pose.heads = 2;
  c.pose.layers = 1;
  c.pose.tokenization = Tokenization::PerFrame;
  const Model m(c);
  synth::WorldConfig w;
  w.seed = 72;
  const Scene s = synth::generate_corpus(w, {}, 1).front();
  const auto a = run_episode(s, PredictorKind::Model, &m, SFMParams{}, 3);
  EXPECT_EQ(a, run_episode(s, PredictorKind::Model, &m, SFMParams{}, 3));
  EXPECT_GT(a.ticks.size(), 1u);
}

TEST(Summary, IdenticalEpisodes) {
  NavEpisode e;
  e.completed = true;
  e.completion_time = 8.4;
  const auto s = evaluate_navigation(std::vector<NavEpisode>(5, e));
  EXPECT_DOUBLE_EQ(s.mean_completion_time, 8.4);
  EXPECT_EQ(s.collision_rate, 0.0);
  EXPECT_EQ(s.episodes, 5u);
  EXPECT_THROW(evaluate_navigation({}), DataError);
}

TEST(Summary, OneCollisionInTwenty) {
  std::vector<NavEpisode> eps(20);
  for (auto& e : eps) {
    e.completed = true;
    e.completion_time = 9.0;
  }
  eps[7].collision = true;
  EXPECT_DOUBLE_EQ(evaluate_navigation(eps).collision_rate, 5.0);
}

TEST(Summary, MixedSuiteMatchesHandAggregation) {
  std::vector<NavEpisode> eps(4);
  eps[0] = {};
  eps[0].completed = true;
  eps[0].completion_time = 8.0;
  eps[1].completed = true;
  eps[1].completion_time = 10.0;
  eps[1].collision = true;
  eps[2].completed = false;
  eps[2].completion_time = 30.0;
  eps[2].collision = true;
  eps[3].completed = true;
  eps[3].completion_time = 12.0;
  const auto all = evaluate_navigation(eps);
  EXPECT_DOUBLE_EQ(all.mean_completion_time, 15.0);
  EXPECT_DOUBLE_EQ(all.collision_rate, 50.0);
  EXPECT_EQ(all.timeouts, 1u);
  const auto excl = evaluate_navigation(eps, true);
  EXPECT_DOUBLE_EQ(excl.collision_rate, 100.0 / 3.0);
  EXPECT_DOUBLE_EQ(excl.mean_completion_time, 15.0);
}

TEST(EpisodeLog, OneHeaderAndOneLinePerTick) {
  const auto e = run_episode(lonely_scene(), Vec2(0, 0), Vec2(0, 2), PredictorKind::None, nullptr, SFMParams{}, 0);
  std::ostringstream out;
  write_episode_log(e, 3, out);
  std::istringstream in(out.str());
  std::string line;
  std::size_t lines = 0;
  while (std::getline(in, line)) {
    const auto j = nlohmann::json::parse(line);
    EXPECT_EQ(j.at("episode"), 3);
    if (lines > 0) EXPECT_TRUE(j.contains("forces"));
    ++lines;
  }
  EXPECT_EQ(lines, e.ticks.size() + 1);
}
