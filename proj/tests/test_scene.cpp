#include <gtest/gtest.h>

#include "posetraj/metrics.hpp"
#include "posetraj/scene.hpp"
#include "posetraj/scene_io.hpp"
#include "posetraj/synth.hpp"

#include <filesystem>
#include <random>
#include <sstream>

using namespace posetraj;

namespace {

AgentTrack straight_track(const std::string& id, int frames, Vec2 start, Vec2 step, int joints = 0) {
  AgentTrack a;
  a.id = id;
  for (int t = 0; t < frames; ++t) {
    a.positions.push_back(start + step * t);
    a.present.push_back(true);
    if (joints > 0) {
      PoseFrame f;
      f.joints = Matrix::Constant(joints, 3, 0.01 * t);
      f.joints.row(0).setZero();
      f.mask.assign(static_cast<std::size_t>(joints), true);
      a.poses.push_back(f);
    }
  }
  return a;
}

Scene single_agent_scene(const std::vector<Vec2>& path, int t_obs) {
  Scene s;
  s.t_obs = t_obs;
  s.t_pred = static_cast<int>(path.size()) - t_obs;
  s.pose_dims = 0;
  AgentTrack a;
  a.id = "p";
  a.positions = path;
  a.present.assign(path.size(), true);
  s.agents.push_back(a);
  return s;
}

// Constant-velocity extrapolation from the last two observed frames.
Matrix constant_velocity(const Scene& s) {
  const auto& p = s.primary_track().positions;
  const Vec2 last = p[static_cast<std::size_t>(s.t_obs - 1)];
  const Vec2 v = last - p[static_cast<std::size_t>(s.t_obs - 2)];
  Matrix m(s.t_pred, 2);
  for (int k = 0; k < s.t_pred; ++k) m.row(k) = (last + v * (k + 1)).transpose();
  return m;
}

Matrix future(const Scene& s) {
  Matrix m(s.t_pred, 2);
  const auto& p = s.primary_track().positions;
  for (int k = 0; k < s.t_pred; ++k) m.row(k) = p[static_cast<std::size_t>(s.t_obs + k)].transpose();
  return m;
}

}  // namespace

TEST(SliceScenes, OneAgentThirtyFramesStrideTenGivesOneScene) {
  const auto scenes = slice_scenes({straight_track("a", 30, {0, 0}, {1, 0})}, 9, 12, 10);
  ASSERT_EQ(scenes.size(), 1u);
  EXPECT_EQ(scenes[0].frames(), 21);
}

TEST(SliceScenes, DefaultWindowIsTwentyOneFramesOfEightPointFourSeconds) {
  const auto scenes = slice_scenes({straight_track("a", 21, {0, 0}, {1, 0})}, 9, 12, 1);
  ASSERT_EQ(scenes.size(), 1u);
  EXPECT_EQ(scenes[0].primary_track().frames(), 21u);
  EXPECT_DOUBLE_EQ(scenes[0].frames() / scenes[0].frame_rate(), 8.4);
}

TEST(SliceScenes, GappedAgentIsNotEligibleAsPrimary) {
  std::vector<AgentTrack> tracks = {straight_track("a", 21, {0, 0}, {1, 0}), straight_track("b", 21, {0, 5}, {1, 0}),
                                    straight_track("c", 21, {0, -5}, {1, 0})};
  tracks[1].present[10] = false;
  tracks[1].positions[10] = Vec2::Zero();
  const auto scenes = slice_scenes(tracks, 9, 12, 1);
  ASSERT_EQ(scenes.size(), 2u);
  EXPECT_EQ(scenes[0].primary_track().id, "a");
  EXPECT_EQ(scenes[1].primary_track().id, "c");
  for (const auto& s : scenes) {
    EXPECT_EQ(s.agents.size(), 3u);
    EXPECT_NO_THROW(validate(s));
  }
}

TEST(SliceScenes, PrimaryIsAlwaysFullyObserved) {
  std::mt19937_64 rng(3);
  std::bernoulli_distribution drop(0.05);
  std::vector<AgentTrack> tracks;
  for (int a = 0; a < 5; ++a) {
    auto t = straight_track("a" + std::to_string(a), 60, {0.0, a * 2.0}, {0.5, 0.0});
    for (std::size_t f = 0; f < t.present.size(); ++f)
      if (drop(rng)) t.present[f] = false;
    tracks.push_back(t);
  }
  for (const auto& s : slice_scenes(tracks, 9, 12, 3)) EXPECT_TRUE(s.primary_track().fully_present(0, 21));
}

TEST(SliceScenes, EdgeCases) {
  EXPECT_TRUE(slice_scenes({}, 9, 12, 1).empty());
  EXPECT_THROW(slice_scenes({straight_track("a", 30, {0, 0}, {1, 0})}, 1, 12, 1), ConfigError);
  EXPECT_THROW(slice_scenes({straight_track("a", 30, {0, 0}, {1, 0})}, 9, 12, 0), ConfigError);
}

TEST(Categorize, StationaryPrimaryIsStatic) {
  EXPECT_EQ(categorize(single_agent_scene(std::vector<Vec2>(21, Vec2(3, 4)), 9)), SceneCategory::Static);
}

TEST(Categorize, ConstantVelocityIsLinear) {
  std::vector<Vec2> path;
  for (int t = 0; t < 21; ++t) path.emplace_back(0.4 * t, -0.3 * t);
  EXPECT_EQ(categorize(single_agent_scene(path, 9)), SceneCategory::Linear);
}

TEST(Categorize, TurningPrimaryWithCloseNeighborIsInteraction) {
  std::vector<Vec2> path;
  for (int t = 0; t < 9; ++t) path.emplace_back(t, 0.0);
  for (int k = 1; k <= 12; ++k) path.emplace_back(8.0, k);
  Scene s = single_agent_scene(path, 9);
  AgentTrack n;
  n.id = "n";
  for (int t = 0; t < 21; ++t) {
    n.positions.emplace_back(4.0, 1.0 + 3.0 * (t - 4));
    n.present.push_back(true);
  }
  s.agents.push_back(n);
  // Direct computation: CV extrapolation of the last future frame is (20, 0),
  // actual (8, 12); the neighbor's closest approach is 1 m at frame 4.
  const Vec2 dev = path[20] - Vec2(20.0, 0.0);
  EXPECT_GT(dev.norm(), 0.5);
  double closest = 1e9;
  for (int t = 0; t < 21; ++t) closest = std::min(closest, (n.positions[t] - path[t]).norm());
  EXPECT_DOUBLE_EQ(closest, 1.0);
  EXPECT_EQ(categorize(s), SceneCategory::Interaction);
  s.agents.pop_back();
  EXPECT_EQ(categorize(s), SceneCategory::Other);
}

TEST(Categorize, DegenerateObservationIsStatic) {
  Scene s = single_agent_scene({Vec2(0, 0), Vec2(5, 0)}, 1);
  EXPECT_EQ(categorize(s), SceneCategory::Static);
}

TEST(LocalPose, AllJointsAtPelvisGiveZeros) {
  const Matrix world = Matrix::Constant(17, 3, 2.5);
  EXPECT_EQ(to_local_pose(world, 0), Matrix::Zero(17, 3));
}

TEST(LocalPose, HeadAbovePelvis) {
  Matrix world = Matrix::Zero(17, 3);
  world.row(0) << 1.0, 2.0, 0.0;
  world.row(skeleton::kHead) << 1.0, 2.0, 1.7;
  const Matrix local = to_local_pose(world, 0);
  EXPECT_EQ(local(skeleton::kHead, 0), 0.0);
  EXPECT_EQ(local(skeleton::kHead, 1), 0.0);
  EXPECT_DOUBLE_EQ(local(skeleton::kHead, 2), 1.7);
}

TEST(LocalPose, PreservesPairwiseDistances) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-5.0, 5.0);
  for (int trial = 0; trial < 20; ++trial) {
    Matrix world(17, 3);
    for (Eigen::Index i = 0; i < world.size(); ++i) world.data()[i] = u(rng);
    const Matrix local = to_local_pose(world, 0);
    EXPECT_EQ(local.row(0), Eigen::RowVector3d::Zero());
    for (int i = 0; i < 17; ++i)
      for (int j = 0; j < 17; ++j)
        EXPECT_NEAR((local.row(i) - local.row(j)).norm(), (world.row(i) - world.row(j)).norm(), 1e-12);
  }
}

TEST(LocalPose, MaskedPelvisIsAnError) {
  std::vector<bool> mask(17, true);
  mask[0] = false;
  EXPECT_THROW(to_local_pose(Matrix::Ones(17, 3), 0, &mask), DataError);
  mask[0] = true;
  mask[5] = false;
  EXPECT_EQ(to_local_pose(Matrix::Random(17, 3), 0, &mask).row(5), Eigen::RowVector3d::Zero());
}

TEST(SceneIo, EmptyListRoundTrips) {
  std::stringstream ss;
  write_scenes({}, ss);
  EXPECT_TRUE(ss.str().empty());
  EXPECT_TRUE(read_scenes(ss).empty());
}

TEST(SceneIo, TwoAgentSceneRoundTrips) {
  auto scenes = slice_scenes({straight_track("a", 21, {0.1, 0.2}, {0.31, -0.07}, 17),
                              straight_track("b", 21, {1.0 / 3.0, 2.0}, {0.2, 0.1}, 17)},
                             9, 12, 21);
  ASSERT_EQ(scenes.size(), 2u);
  scenes.resize(1);
  scenes[0].agents[1].poses[3].mask[4] = false;
  scenes[0].agents[1].poses[3].apply_mask();
  std::stringstream ss;
  write_scenes(scenes, ss);
  EXPECT_EQ(read_scenes(ss), scenes);
}

TEST(SceneIo, GeneratedCorpusRoundTripsThroughFile) {
  synth::WorldConfig w;
  w.seed = 21;
  const auto corpus = synth::generate_corpus(w, {}, 1000);
  const auto path = std::filesystem::temp_directory_path() / "posetraj_scene_io_test.jsonl";
  write_scenes(corpus, path);
  const auto back = read_scenes(path);
  std::filesystem::remove(path);
  ASSERT_EQ(back.size(), corpus.size());
  double before = 0.0, after = 0.0;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    EXPECT_EQ(back[i], corpus[i]);
    before += ade(constant_velocity(corpus[i]), future(corpus[i]));
    after += ade(constant_velocity(back[i]), future(back[i]));
  }
  EXPECT_EQ(before, after);
}

TEST(SceneIo, MalformedLineNamesLineNumber) {
  std::stringstream ss;
  write_scenes(slice_scenes({straight_track("a", 21, {0, 0}, {1, 0})}, 9, 12, 1), ss);
  ss.seekp(0, std::ios::end);
  ss << "{not json\n";
  try {
    read_scenes(ss);
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos) << e.what();
  }
}

TEST(SceneIo, VersionMismatchIsRejected) {
  std::stringstream ss;
  write_scenes(slice_scenes({straight_track("a", 21, {0, 0}, {1, 0})}, 9, 12, 1), ss);
  std::string text = ss.str();
  text.replace(text.find("\"version\":1"), 11, "\"version\":7");
  std::stringstream bad(text);
  EXPECT_THROW(read_scenes(bad), DataError);
}

TEST(Scene, ValidateRejectsBrokenInvariants) {
  auto s = slice_scenes({straight_track("a", 21, {0, 0}, {1, 0}, 17)}, 9, 12, 1).front();
  EXPECT_NO_THROW(validate(s));
  auto bad = s;
  bad.primary = 3;
  EXPECT_THROW(validate(bad), DataError);
  bad = s;
  bad.agents[0].positions[2].x() = std::nan("");
  EXPECT_THROW(validate(bad), DataError);
  bad = s;
  bad.agents[0].poses[1].joints = Matrix::Zero(16, 3);
  bad.agents[0].poses[1].mask.assign(16, true);
  EXPECT_THROW(validate(bad), DataError);
}

TEST(Categorize, SyntheticCategoryFrequenciesAreStable) {
  synth::WorldConfig w;
  w.seed = 5;
  auto count = [&] {
    std::map<SceneCategory, int> c;
    for (const auto& s : synth::generate_corpus(w, {}, 300)) ++c[categorize(s)];
    return c;
  };
  EXPECT_EQ(count(), count());
}
