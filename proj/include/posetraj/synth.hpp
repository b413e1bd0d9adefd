#ifndef POSETRAJ_SYNTH_HPP
#define POSETRAJ_SYNTH_HPP

// Synthetic multi-agent scenes with articulated pose.
//
// Agents follow planned headings made of constant-velocity segments joined by
// smoothstep turns, plus short-range repulsion between agents. At every frame
// the skeleton is posed by a gait oscillator in a body frame whose yaw is the
// agent's heading lead_time seconds later, so body rotation precedes a turn.

#include "posetraj/errors.hpp"
#include "posetraj/scene.hpp"
#include "posetraj/skeleton.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <string>
#include <vector>

namespace posetraj::synth {

struct GaitModel {
  /// Gait cycles per second.
  double step_frequency = 0.9;
  /// Forward swing of the ankle at reference speed, meters.
  double stride_amplitude = 0.35;
  /// Phase offsets per joint, radians; the ankles of the two legs differ by pi.
  std::array<double, skeleton::kJoints> limb_phase_offsets = default_phase_offsets();
  /// How far ahead of the path the body is oriented, seconds.
  double lead_time = 0.8;
  /// Gaussian noise added to pelvis-relative joint coordinates, meters.
  double noise_std = 0.0;

  static std::array<double, skeleton::kJoints> default_phase_offsets() {
    using namespace skeleton;
    constexpr double pi = std::numbers::pi;
    std::array<double, kJoints> o{};
    for (int j : kRightLeg) o[static_cast<std::size_t>(j)] = 0.0;
    for (int j : kLeftLeg) o[static_cast<std::size_t>(j)] = pi;
    // Arms swing against the leg on the same side.
    for (int j : kLeftArm) o[static_cast<std::size_t>(j)] = 0.0;
    for (int j : kRightArm) o[static_cast<std::size_t>(j)] = pi;
    return o;
  }
};

struct WorldConfig {
  int n_agents_min = 1;
  int n_agents_max = 3;
  double speed_min = 0.8;
  double speed_max = 1.6;
  /// Expected turns per second (Poisson rate).
  double turn_rate = 0.25;
  double turn_angle_min = 30.0 * std::numbers::pi / 180.0;
  double turn_angle_max = 90.0 * std::numbers::pi / 180.0;
  /// Duration of the smoothstep heading ramp of one turn, seconds.
  double turn_duration = 1.0;
  /// Square arena [-half_extent, half_extent]^2, meters.
  double arena_half_extent = 40.0;
  /// Primaries start within [-spawn_extent, spawn_extent]^2.
  double spawn_extent = 8.0;
  /// Neighbors start within this radius of the primary.
  double neighbor_radius = 6.0;
  /// Agents closer than this push each other apart.
  double repulsion_radius = 1.5;
  double repulsion_gain = 0.8;
  double frame_rate = 2.5;
  double sim_dt = 0.1;
  int t_obs = 9;
  int t_pred = 12;
  std::uint64_t seed = 7;
};

struct Turn {
  /// Time of the ramp midpoint, seconds.
  double time = 0.0;
  double angle = 0.0;
};

/// Planned motion of one agent.
struct AgentPlan {
  Vec2 start = Vec2::Zero();
  double heading = 0.0;
  double speed = 1.2;
  double gait_phase = 0.0;
  std::vector<Turn> turns;
};

inline double smoothstep(double x) {
  x = std::clamp(x, 0.0, 1.0);
  return x * x * (3.0 - 2.0 * x);
}

inline double planned_heading(const AgentPlan& plan, double t, double turn_duration) {
  double h = plan.heading;
  for (const auto& turn : plan.turns) h += turn.angle * smoothstep((t - turn.time) / turn_duration + 0.5);
  return h;
}

inline void check(const WorldConfig& w) {
  if (w.speed_min <= 0.0) throw ConfigError("world.speed_min must be positive");
  if (w.speed_max < w.speed_min) throw ConfigError("world.speed_max must be >= world.speed_min");
  if (w.n_agents_min < 1 || w.n_agents_max < w.n_agents_min) throw ConfigError("world.n_agents range is invalid");
  if (!(w.arena_half_extent > 0.0)) throw ConfigError("world.arena_half_extent must be positive");
  if (!(w.frame_rate > 0.0)) throw ConfigError("world.frame_rate must be positive");
  if (!(w.sim_dt > 0.0)) throw ConfigError("world.sim_dt must be positive");
  if (w.turn_rate < 0.0) throw ConfigError("world.turn_rate must be >= 0");
  if (w.turn_angle_max < w.turn_angle_min) throw ConfigError("world.turn_angle range is invalid");
  if (!(w.turn_duration > 0.0)) throw ConfigError("world.turn_duration must be positive");
  if (w.t_obs < 2 || w.t_pred < 1) throw ConfigError("world.t_obs must be >= 2 and world.t_pred >= 1");
}

inline void check(const GaitModel& g) {
  if (!(g.step_frequency > 0.0)) throw ConfigError("gait.step_frequency must be positive");
  if (g.lead_time < 0.0) throw ConfigError("gait.lead_time must be >= 0");
  if (g.noise_std < 0.0) throw ConfigError("gait.noise_std must be >= 0");
}

/// Pelvis-relative skeleton (J x 3) for a body facing `yaw`.
inline Matrix pose_skeleton(const GaitModel& gait, double yaw, double phase, double speed_ratio) {
  using namespace skeleton;
  Matrix body = Matrix::Zero(kJoints, 3);
  const double swing_amp = gait.stride_amplitude * speed_ratio;
  auto swing = [&](int joint) {
    return swing_amp * std::sin(phase + gait.limb_phase_offsets[static_cast<std::size_t>(joint)]);
  };
  auto set = [&](int j, double x, double y, double z) { body.row(j) << x, y, z; };

  const double hip_half_width = 0.1;
  set(kRightHip, 0.0, -hip_half_width, 0.0);
  set(kLeftHip, 0.0, hip_half_width, 0.0);
  set(kRightKnee, 0.5 * swing(kRightKnee), -hip_half_width, -0.45);
  set(kLeftKnee, 0.5 * swing(kLeftKnee), hip_half_width, -0.45);
  set(kRightAnkle, swing(kRightAnkle), -hip_half_width, -0.9);
  set(kLeftAnkle, swing(kLeftAnkle), hip_half_width, -0.9);
  set(kSpine, 0.0, 0.0, 0.25);
  set(kThorax, 0.0, 0.0, 0.5);
  set(kNeck, 0.03, 0.0, 0.6);
  set(kHead, 0.1, 0.0, 0.7);
  const double shoulder_half_width = 0.18;
  const double arm_amp = 0.6;
  set(kLeftShoulder, 0.0, shoulder_half_width, 0.48);
  set(kRightShoulder, 0.0, -shoulder_half_width, 0.48);
  set(kLeftElbow, 0.5 * arm_amp * swing(kLeftElbow), shoulder_half_width + 0.02, 0.2);
  set(kRightElbow, 0.5 * arm_amp * swing(kRightElbow), -shoulder_half_width - 0.02, 0.2);
  set(kLeftWrist, arm_amp * swing(kLeftWrist), shoulder_half_width + 0.03, -0.07);
  set(kRightWrist, arm_amp * swing(kRightWrist), -shoulder_half_width - 0.03, -0.07);

  const double c = std::cos(yaw);
  const double s = std::sin(yaw);
  Eigen::Matrix3d rot;
  rot << c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0;
  return body * rot.transpose();
}

/// Facing direction encoded by the shoulder line of a pelvis-relative pose.
inline double shoulder_yaw(const PoseFrame& f) {
  const auto l = f.joints.row(skeleton::kLeftShoulder);
  const auto r = f.joints.row(skeleton::kRightShoulder);
  return std::atan2(l(1) - r(1), l(0) - r(0)) - std::numbers::pi / 2.0;
}

/// Angle wrapped into (-pi, pi].
inline double wrap_angle(double a) {
  a = std::fmod(a + std::numbers::pi, 2.0 * std::numbers::pi);
  if (a <= 0.0) a += 2.0 * std::numbers::pi;
  return a - std::numbers::pi;
}

/// Simulates planned agents and samples frames at world.frame_rate.
/// Agent 0 is the primary. Noise (when configured) is drawn from `rng`.
inline Scene simulate_scene(const std::vector<AgentPlan>& plans, const WorldConfig& world, const GaitModel& gait,
                            std::mt19937_64& rng) {
  check(world);
  check(gait);
  const int frames = world.t_obs + world.t_pred;
  const double frame_dt = 1.0 / world.frame_rate;
  const int substeps = std::max(1, static_cast<int>(std::lround(frame_dt / world.sim_dt)));
  const double dt = frame_dt / substeps;
  const int lead_ticks = static_cast<int>(std::lround(gait.lead_time / dt));
  const int ticks = (frames - 1) * substeps + lead_ticks + 1;
  const std::size_t n = plans.size();

  // positions[a][k] at tick k; velocity[a][k] applied during [k, k+1).
  std::vector<std::vector<Vec2>> pos(n, std::vector<Vec2>(static_cast<std::size_t>(ticks) + 1));
  std::vector<std::vector<Vec2>> vel(n, std::vector<Vec2>(static_cast<std::size_t>(ticks) + 1));
  for (std::size_t a = 0; a < n; ++a) pos[a][0] = plans[a].start;

  const double vmin = 0.9 * world.speed_min;
  const double vmax = 1.1 * world.speed_max;
  const double bound = world.arena_half_extent;
  for (int k = 0; k <= ticks; ++k) {
    const double t = k * dt;
    const auto uk = static_cast<std::size_t>(k);
    for (std::size_t a = 0; a < n; ++a) {
      const double h = planned_heading(plans[a], t, world.turn_duration);
      Vec2 v = plans[a].speed * Vec2(std::cos(h), std::sin(h));
      for (std::size_t b = 0; b < n; ++b) {
        if (b == a) continue;
        const Vec2 d = pos[a][uk] - pos[b][uk];
        const double dist = d.norm();
        if (dist < world.repulsion_radius && dist > 1e-9)
          v += world.repulsion_gain * (world.repulsion_radius - dist) / world.repulsion_radius * d / dist;
      }
      const double speed = v.norm();
      if (speed > vmax) v *= vmax / speed;
      if (speed < vmin) v = (speed > 1e-9 ? v / speed : Vec2(std::cos(h), std::sin(h))) * vmin;
      vel[a][uk] = v;
    }
    if (k == ticks) break;
    for (std::size_t a = 0; a < n; ++a) {
      Vec2 next = pos[a][uk] + vel[a][uk] * dt;
      next.x() = std::clamp(next.x(), -bound, bound);
      next.y() = std::clamp(next.y(), -bound, bound);
      pos[a][uk + 1] = next;
    }
  }

  std::normal_distribution<double> noise(0.0, 1.0);
  Scene scene;
  scene.primary = 0;
  scene.t_obs = world.t_obs;
  scene.t_pred = world.t_pred;
  scene.pose_dims = 3;
  const double ref_speed = 0.5 * (world.speed_min + world.speed_max);
  for (std::size_t a = 0; a < n; ++a) {
    AgentTrack track;
    track.id = "a" + std::to_string(a);
    track.frame_rate = world.frame_rate;
    for (int f = 0; f < frames; ++f) {
      const auto k = static_cast<std::size_t>(f * substeps);
      const double t = static_cast<double>(k) * dt;
      track.positions.push_back(pos[a][k]);
      track.present.push_back(true);
      const Vec2 ahead = vel[a][k + static_cast<std::size_t>(lead_ticks)];
      const double yaw = std::atan2(ahead.y(), ahead.x());
      const double phase = 2.0 * std::numbers::pi * gait.step_frequency * t + plans[a].gait_phase;
      PoseFrame frame;
      frame.joints = pose_skeleton(gait, yaw, phase, vel[a][k].norm() / ref_speed);
      frame.mask.assign(skeleton::kJoints, true);
      if (gait.noise_std > 0.0) {
        for (Eigen::Index j = 0; j < frame.joints.rows(); ++j) {
          if (j == skeleton::kPelvis) continue;
          for (Eigen::Index c = 0; c < 3; ++c) frame.joints(j, c) += gait.noise_std * noise(rng);
        }
      }
      track.poses.push_back(std::move(frame));
    }
    scene.agents.push_back(std::move(track));
  }
  scene.category = categorize(scene);
  return scene;
}

/// Independent random stream for one scene of a corpus.
inline std::mt19937_64 scene_stream(std::uint64_t seed, std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
  return std::mt19937_64(seq);
}

inline std::vector<AgentPlan> random_plans(const WorldConfig& world, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> count(world.n_agents_min, world.n_agents_max);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const int n = count(rng);
  const double horizon = (world.t_obs + world.t_pred) / world.frame_rate + 2.0;
  std::vector<AgentPlan> plans;
  for (int a = 0; a < n; ++a) {
    AgentPlan p;
    if (a == 0) {
      p.start = Vec2((2.0 * unit(rng) - 1.0) * world.spawn_extent, (2.0 * unit(rng) - 1.0) * world.spawn_extent);
    } else {
      const double r = world.neighbor_radius * std::sqrt(unit(rng));
      const double th = 2.0 * std::numbers::pi * unit(rng);
      p.start = plans.front().start + r * Vec2(std::cos(th), std::sin(th));
    }
    p.heading = 2.0 * std::numbers::pi * unit(rng) - std::numbers::pi;
    p.speed = world.speed_min + (world.speed_max - world.speed_min) * unit(rng);
    p.gait_phase = 2.0 * std::numbers::pi * unit(rng);
    if (world.turn_rate > 0.0) {
      std::exponential_distribution<double> gap(world.turn_rate);
      for (double t = -world.turn_duration + gap(rng); t < horizon; t += gap(rng)) {
        const double mag = world.turn_angle_min + (world.turn_angle_max - world.turn_angle_min) * unit(rng);
        p.turns.push_back({t, unit(rng) < 0.5 ? -mag : mag});
      }
    }
    plans.push_back(std::move(p));
  }
  return plans;
}

/// Deterministic corpus: scene i depends only on (world.seed, i).
inline std::vector<Scene> generate_corpus(const WorldConfig& world, const GaitModel& gait, int n_scenes) {
  check(world);
  check(gait);
  if (n_scenes < 1) throw ConfigError("n_scenes must be >= 1");
  std::vector<Scene> scenes;
  scenes.reserve(static_cast<std::size_t>(n_scenes));
  for (int i = 0; i < n_scenes; ++i) {
    auto rng = scene_stream(world.seed, static_cast<std::uint64_t>(i));
    const auto plans = random_plans(world, rng);
    scenes.push_back(simulate_scene(plans, world, gait, rng));
  }
  return scenes;
}

// ---------------------------------------------------------------------------
// Pinhole projection to image-plane poses

struct CameraConfig {
  Eigen::Vector3d position{0.0, -60.0, 20.0};
  /// Viewing direction in the ground plane, radians (0 = +x).
  double yaw = std::numbers::pi / 2.0;
  /// Downward tilt, radians.
  double pitch = 0.32;
  /// Focal length in normalized image units per unit depth.
  double focal = 25.0;
  /// Height of the pelvis above the ground plane, meters.
  double pelvis_height = 0.95;
  double near = 0.1;
};

/// Camera axes as rows: right, down, forward.
inline Eigen::Matrix3d camera_rotation(const CameraConfig& cam) {
  const Eigen::Vector3d forward(std::cos(cam.pitch) * std::cos(cam.yaw), std::cos(cam.pitch) * std::sin(cam.yaw),
                                -std::sin(cam.pitch));
  Eigen::Vector3d right = forward.cross(Eigen::Vector3d::UnitZ());
  if (right.norm() < 1e-9) right = Eigen::Vector3d(std::sin(cam.yaw), -std::cos(cam.yaw), 0.0);
  right.normalize();
  const Eigen::Vector3d down = forward.cross(right);
  Eigen::Matrix3d r;
  r.row(0) = right.transpose();
  r.row(1) = down.transpose();
  r.row(2) = forward.transpose();
  return r;
}

/// Projects 3D poses to pelvis-relative image coordinates. Trajectories are
/// unchanged. Joints behind the camera are masked; a frame whose pelvis is
/// behind the camera is masked entirely.
inline Scene project_to_2d(const Scene& scene, const CameraConfig& cam) {
  if (scene.pose_dims != 3) throw DataError("project_to_2d requires 3D poses");
  const Eigen::Matrix3d rot = camera_rotation(cam);
  Scene out = scene;
  out.pose_dims = 2;
  for (auto& agent : out.agents) {
    for (std::size_t t = 0; t < agent.poses.size(); ++t) {
      const PoseFrame& src = agent.poses[t];
      PoseFrame dst = PoseFrame::empty(src.joint_count(), 2);
      const Eigen::Vector3d pelvis(agent.positions[t].x(), agent.positions[t].y(), cam.pelvis_height);
      auto project = [&](const Eigen::Vector3d& world, Eigen::Vector2d& uv) {
        const Eigen::Vector3d c = rot * (world - cam.position);
        if (c.z() <= cam.near) return false;
        uv = cam.focal * Eigen::Vector2d(c.x(), c.y()) / c.z();
        return true;
      };
      Eigen::Vector2d pelvis_uv;
      if (agent.present[t] && project(pelvis, pelvis_uv)) {
        for (int j = 0; j < src.joint_count(); ++j) {
          if (!src.mask[static_cast<std::size_t>(j)]) continue;
          Eigen::Vector2d uv;
          if (!project(pelvis + src.joints.row(j).transpose(), uv)) continue;
          dst.joints.row(j) = (uv - pelvis_uv).transpose();
          dst.mask[static_cast<std::size_t>(j)] = true;
        }
      }
      agent.poses[t] = std::move(dst);
    }
  }
  return out;
}

}  // namespace posetraj::synth

#endif  // POSETRAJ_SYNTH_HPP
