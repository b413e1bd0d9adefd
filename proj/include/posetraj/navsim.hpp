#ifndef POSETRAJ_NAVSIM_HPP
#define POSETRAJ_NAVSIM_HPP

// Social-force robot navigation through replayed pedestrian scenes, with
// optional extra repulsion from predicted pedestrian futures.

#include "posetraj/backbones.hpp"
#include "posetraj/errors.hpp"
#include "posetraj/scene.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <ostream>
#include <random>
#include <string>
#include <string_view>
#include <vector>

namespace posetraj::nav {

struct SFMParams {
  double tau = 0.5;
  double repulsion_strength = 2.0;
  double repulsion_range = 0.8;
  double radius = 0.3;
  double desired_speed = 1.2;
  double dt = 0.1;
  double prediction_scale = 0.6;
  int prediction_horizon = 12;
  double discount = 0.85;
  double max_speed_factor = 1.3;
  double goal_tolerance = 0.5;
  double timeout = 30.0;

  void check() const {
    if (!(tau > 0.0 && repulsion_strength > 0.0 && repulsion_range > 0.0 && radius > 0.0 && desired_speed > 0.0 &&
          dt > 0.0))
      throw ConfigError("navsim parameters must be positive");
    if (dt > 0.4) throw ConfigError("navsim.dt must be <= 0.4 s");
    if (prediction_scale < 0.0) throw ConfigError("navsim.prediction_scale must be >= 0");
    if (prediction_horizon < 1) throw ConfigError("navsim.prediction_horizon must be >= 1");
    if (discount < 0.0) throw ConfigError("navsim.discount must be >= 0");
  }
};

struct RobotState {
  Vec2 position = Vec2::Zero();
  Vec2 velocity = Vec2::Zero();
};

/// Direction used when the robot and a pedestrian coincide; perturbed per
/// call index so repeated coincidences do not stack in one direction.
inline Vec2 coincident_direction(std::size_t salt) {
  const double angle = 0.5 + 0.1 * static_cast<double>(salt % 7);
  return {std::cos(angle), std::sin(angle)};
}

/// A * exp((2r - d) / B) along the unit vector from `other` to `robot`.
inline Vec2 repulsion(const Vec2& robot, const Vec2& other, const SFMParams& p, std::size_t salt = 0,
                      int* coincident = nullptr) {
  const Vec2 diff = robot - other;
  const double d = diff.norm();
  Vec2 n;
  if (d < 1e-12) {
    n = coincident_direction(salt);
    if (coincident != nullptr) ++*coincident;
  } else {
    n = diff / d;
  }
  return p.repulsion_strength * std::exp((2.0 * p.radius - d) / p.repulsion_range) * n;
}

/// Goal attraction (v0 * g_hat - v) / tau.
inline Vec2 goal_force(const RobotState& robot, const Vec2& goal, const SFMParams& p) {
  const Vec2 to_goal = goal - robot.position;
  const double d = to_goal.norm();
  const Vec2 dir = d > 1e-12 ? Vec2(to_goal / d) : Vec2(Vec2::Zero());
  return (p.desired_speed * dir - robot.velocity) / p.tau;
}

/// Social-force acceleration of the robot.
inline Vec2 social_force_step(const RobotState& robot, const std::vector<Vec2>& neighbors, const Vec2& goal,
                              const SFMParams& p, int* coincident = nullptr) {
  Vec2 a = goal_force(robot, goal, p);
  for (std::size_t j = 0; j < neighbors.size(); ++j) a += repulsion(robot.position, neighbors[j], p, j, coincident);
  return a;
}

/// Extra repulsion lambda * sum_j sum_t gamma^t * A exp((2r - d_jt) / B) n_jt from
/// predicted futures (each track is steps x 2; row t - 1 is future frame t).
inline Vec2 prediction_force(const Vec2& robot, const std::vector<Matrix>& predicted, const SFMParams& p) {
  Vec2 f = Vec2::Zero();
  for (std::size_t j = 0; j < predicted.size(); ++j) {
    const Matrix& track = predicted[j];
    const auto steps = std::min<Eigen::Index>(track.rows(), p.prediction_horizon);
    for (Eigen::Index t = 0; t < steps; ++t) {
      const double w = std::pow(p.discount, static_cast<double>(t + 1));
      f += w * repulsion(robot, Vec2(track(t, 0), track(t, 1)), p, j);
    }
  }
  return p.prediction_scale * f;
}

inline Vec2 augment_with_predictions(const Vec2& force, const Vec2& robot, const std::vector<Matrix>& predicted,
                                     const SFMParams& p) {
  return force + prediction_force(robot, predicted, p);
}

enum class PredictorKind { None, Model, Oracle };

inline std::string_view to_string(PredictorKind k) {
  switch (k) {
    case PredictorKind::None:
      return "none";
    case PredictorKind::Model:
      return "model";
    case PredictorKind::Oracle:
      return "oracle";
  }
  return "none";
}

inline PredictorKind predictor_from_string(std::string_view s) {
  if (s == "none") return PredictorKind::None;
  if (s == "model") return PredictorKind::Model;
  if (s == "oracle") return PredictorKind::Oracle;
  throw ConfigError("navsim.predictor must be none, model or oracle (got '" + std::string(s) + "')");
}

struct NavTick {
  double time = 0.0;
  RobotState robot;
  Vec2 goal_force = Vec2::Zero();
  Vec2 social_force = Vec2::Zero();
  Vec2 prediction_force = Vec2::Zero();
  std::vector<Vec2> neighbors;
};

struct NavEpisode {
  std::string predictor = "none";
  Vec2 start = Vec2::Zero();
  Vec2 goal = Vec2::Zero();
  std::vector<NavTick> ticks;
  bool completed = false;
  /// Time of the first tick within goal tolerance, or the timeout.
  double completion_time = 0.0;
  bool collision = false;
  double min_distance = std::numeric_limits<double>::infinity();
  int coincidences = 0;

  bool operator==(const NavEpisode& o) const {
    if (predictor != o.predictor || start != o.start || goal != o.goal || completed != o.completed ||
        completion_time != o.completion_time || collision != o.collision || min_distance != o.min_distance ||
        ticks.size() != o.ticks.size())
      return false;
    for (std::size_t i = 0; i < ticks.size(); ++i)
      if (ticks[i].robot.position != o.ticks[i].robot.position || ticks[i].robot.velocity != o.ticks[i].robot.velocity)
        return false;
    return true;
  }
};

/// Replay of a scene's agents starting at its last observed frame. Positions
/// are linearly interpolated between frames and held after the last frame.
class Replay {
 public:
  explicit Replay(const Scene& scene) : scene_(&scene), fr_(scene.frame_rate()), origin_(scene.t_obs - 1) {}

  int last_frame() const { return scene_->frames() - 1; }

  /// Scene frame index at episode time t (fractional).
  double frame_at(double t) const { return std::min(static_cast<double>(origin_) + t * fr_, static_cast<double>(last_frame())); }

  /// Position of agent a at episode time t, or nothing if absent.
  std::optional<Vec2> position(std::size_t a, double t) const {
    const auto& track = scene_->agents[a];
    const double f = frame_at(t);
    const auto f0 = static_cast<std::size_t>(std::floor(f));
    const auto f1 = std::min(f0 + 1, static_cast<std::size_t>(last_frame()));
    const double w = f - static_cast<double>(f0);
    if (!track.present[f0]) return std::nullopt;
    if (w == 0.0) return track.positions[f0];
    if (!track.present[f1]) return std::nullopt;
    return Vec2((1.0 - w) * track.positions[f0] + w * track.positions[f1]);
  }

  std::vector<Vec2> positions(double t) const {
    std::vector<Vec2> out;
    for (std::size_t a = 0; a < scene_->agents.size(); ++a)
      if (auto p = position(a, t)) out.push_back(*p);
    return out;
  }

  /// Frame of agent a, clamped to the scene.
  const Vec2& frame_position(std::size_t a, int frame) const {
    return scene_->agents[a].positions[static_cast<std::size_t>(std::clamp(frame, 0, last_frame()))];
  }

  bool frame_present(std::size_t a, int frame) const {
    return scene_->agents[a].present[static_cast<std::size_t>(std::clamp(frame, 0, last_frame()))];
  }

  const Scene& scene() const { return *scene_; }
  int origin() const { return origin_; }

 private:
  const Scene* scene_;
  double fr_;
  int origin_;
};

/// Scene in which agent `a` is the primary and the observation window ends at
/// `frame`; frames past the scene end repeat the last frame. Future frames
/// carry the held replay so the window is a valid scene.
inline std::optional<Scene> window_scene(const Scene& scene, std::size_t a, int frame) {
  const int last = scene.frames() - 1;
  const int first = frame - scene.t_obs + 1;
  Scene w;
  w.t_obs = scene.t_obs;
  w.t_pred = scene.t_pred;
  w.pose_dims = scene.pose_dims;
  w.category = scene.category;
  for (std::size_t b = 0; b < scene.agents.size(); ++b) {
    const AgentTrack& src = scene.agents[b];
    AgentTrack t;
    t.id = src.id;
    t.frame_rate = src.frame_rate;
    for (int k = 0; k < scene.frames(); ++k) {
      const auto f = static_cast<std::size_t>(std::clamp(first + k, 0, last));
      t.positions.push_back(src.positions[f]);
      t.present.push_back(src.present[f]);
      if (!src.poses.empty()) t.poses.push_back(src.poses[f]);
    }
    if (b == a) {
      if (!t.fully_present(0, static_cast<std::size_t>(scene.t_obs))) return std::nullopt;
      // Keep the primary valid past the end of its recording.
      for (std::size_t k = 0; k < t.present.size(); ++k)
        if (!t.present[k]) {
          t.present[k] = true;
          t.positions[k] = t.positions[k - 1];
        }
      w.primary = w.agents.size();
    }
    w.agents.push_back(std::move(t));
  }
  return w;
}

/// Predicted futures (t_pred x 2) of every agent observed over the window ending at `frame`.
inline std::vector<Matrix> query_predictions(const Replay& replay, PredictorKind kind, const Model* model, int frame,
                                             std::uint64_t seed) {
  const Scene& scene = replay.scene();
  std::vector<Matrix> out;
  if (kind == PredictorKind::None) return out;
  if (kind == PredictorKind::Oracle) {
    for (std::size_t a = 0; a < scene.agents.size(); ++a) {
      if (!replay.frame_present(a, frame)) continue;
      Matrix m(scene.t_pred, 2);
      for (int k = 0; k < scene.t_pred; ++k) {
        const Vec2& p = replay.frame_position(a, frame + k + 1);
        m.row(k) << p.x(), p.y();
      }
      out.push_back(std::move(m));
    }
    return out;
  }
  if (model == nullptr) throw ConfigError("model predictor requested without a model");
  std::vector<Scene> windows;
  for (std::size_t a = 0; a < scene.agents.size(); ++a)
    if (auto w = window_scene(scene, a, frame)) windows.push_back(std::move(*w));
  if (windows.empty()) return out;
  std::vector<const Scene*> ptrs;
  for (const auto& w : windows) ptrs.push_back(&w);
  for (auto& samples : model->predict(ptrs, 1, seed)) out.push_back(std::move(samples.front()));
  return out;
}

/// One episode with explicit start and goal.
inline NavEpisode run_episode(const Scene& scene, const Vec2& start, const Vec2& goal, PredictorKind kind,
                              const Model* model, const SFMParams& p, std::uint64_t seed) {
  p.check();
  validate(scene);
  if (kind == PredictorKind::Model) {
    if (model == nullptr) throw ConfigError("model predictor requested without a model");
    const auto& mc = model->config();
    if (mc.use_pose && scene.pose_dims != mc.pose.pose_dims)
      throw ConfigError("predictor expects " + std::to_string(mc.pose.pose_dims) + "D pose but the scene has pose_dims " +
                        std::to_string(scene.pose_dims));
  }
  const Replay replay(scene);
  NavEpisode ep;
  ep.predictor = std::string(to_string(kind));
  ep.start = start;
  ep.goal = goal;
  RobotState robot{start, Vec2::Zero()};
  const double fr = scene.frame_rate();
  const int ticks_per_query = std::max(1, static_cast<int>(std::lround(1.0 / (fr * p.dt))));
  const auto max_ticks = static_cast<int>(std::lround(p.timeout / p.dt));
  std::vector<Matrix> predicted;
  const double v_max = p.max_speed_factor * p.desired_speed;

  for (int k = 0;; ++k) {
    const double t = k * p.dt;
    NavTick tick;
    tick.time = t;
    tick.robot = robot;
    tick.neighbors = replay.positions(t);
    for (const auto& n : tick.neighbors) ep.min_distance = std::min(ep.min_distance, (n - robot.position).norm());
    if (ep.min_distance < 2.0 * p.radius) ep.collision = true;
    if ((goal - robot.position).norm() < p.goal_tolerance) {
      ep.completed = true;
      ep.completion_time = t;
      ep.ticks.push_back(std::move(tick));
      break;
    }
    if (k >= max_ticks) {
      ep.completion_time = p.timeout;
      ep.ticks.push_back(std::move(tick));
      break;
    }
    if (kind != PredictorKind::None && k % ticks_per_query == 0) {
      const int frame = replay.origin() + k / ticks_per_query;
      predicted = query_predictions(replay, kind, model, frame, seed + static_cast<std::uint64_t>(k));
    }
    tick.goal_force = goal_force(robot, goal, p);
    tick.social_force = social_force_step(robot, tick.neighbors, goal, p, &ep.coincidences) - tick.goal_force;
    tick.prediction_force = prediction_force(robot.position, predicted, p);
    const Vec2 a = tick.goal_force + tick.social_force + tick.prediction_force;
    robot.velocity += a * p.dt;
    const double speed = robot.velocity.norm();
    if (speed > v_max) robot.velocity *= v_max / speed;
    robot.position += robot.velocity * p.dt;
    if (!robot.position.allFinite()) throw NumericError("robot state became non-finite at t=" + std::to_string(t));
    ep.ticks.push_back(std::move(tick));
  }
  return ep;
}

/// Episode from (x, y - 5) to (x, y + 5) around the primary's last observed position.
inline NavEpisode run_episode(const Scene& scene, PredictorKind kind, const Model* model, const SFMParams& p,
                              std::uint64_t seed) {
  const Vec2 ego = scene.primary_track().positions[static_cast<std::size_t>(scene.t_obs - 1)];
  return run_episode(scene, ego + Vec2(0.0, -5.0), ego + Vec2(0.0, 5.0), kind, model, p, seed);
}

struct NavSummary {
  std::size_t episodes = 0;
  std::size_t timeouts = 0;
  std::size_t collisions = 0;
  double mean_completion_time = 0.0;
  /// Percent of episodes (or of completed episodes when timeouts are excluded).
  double collision_rate = 0.0;
};

/// Timeouts count as the timeout duration; with exclude_timeouts they leave the
/// collision-rate denominator.
inline NavSummary evaluate_navigation(const std::vector<NavEpisode>& episodes, bool exclude_timeouts = false) {
  if (episodes.empty()) throw DataError("no episodes to evaluate");
  NavSummary s;
  s.episodes = episodes.size();
  double time = 0.0;
  std::size_t denom = 0;
  for (const auto& e : episodes) {
    time += e.completion_time;
    if (!e.completed) ++s.timeouts;
    if (exclude_timeouts && !e.completed) continue;
    ++denom;
    if (e.collision) ++s.collisions;
  }
  s.mean_completion_time = time / static_cast<double>(episodes.size());
  s.collision_rate = denom == 0 ? 0.0 : 100.0 * static_cast<double>(s.collisions) / static_cast<double>(denom);
  return s;
}

inline nlohmann::json to_json(const SFMParams& p) {
  return {{"tau", p.tau},
          {"repulsion_strength", p.repulsion_strength},
          {"repulsion_range", p.repulsion_range},
          {"radius", p.radius},
          {"desired_speed", p.desired_speed},
          {"dt", p.dt},
          {"prediction_scale", p.prediction_scale},
          {"prediction_horizon", p.prediction_horizon},
          {"discount", p.discount},
          {"max_speed_factor", p.max_speed_factor},
          {"goal_tolerance", p.goal_tolerance},
          {"timeout", p.timeout}};
}

inline nlohmann::json to_json(const NavSummary& s) {
  return {{"episodes", s.episodes},
          {"timeouts", s.timeouts},
          {"collisions", s.collisions},
          {"mean_completion_time", s.mean_completion_time},
          {"collision_rate_percent", s.collision_rate}};
}

/// Episode log: a header line followed by one line per tick.
inline void write_episode_log(const NavEpisode& e, std::size_t index, std::ostream& out) {
  auto xy = [](const Vec2& v) { return nlohmann::json::array({v.x(), v.y()}); };
  nlohmann::json header = {{"episode", index},
                           {"predictor", e.predictor},
                           {"start", xy(e.start)},
                           {"goal", xy(e.goal)},
                           {"completed", e.completed},
                           {"completion_time", e.completion_time},
                           {"collision", e.collision},
                           {"min_distance", e.min_distance},
                           {"ticks", e.ticks.size()}};
  out << header.dump() << '\n';
  for (std::size_t k = 0; k < e.ticks.size(); ++k) {
    const auto& t = e.ticks[k];
    nlohmann::json neighbors = nlohmann::json::array();
    for (const auto& n : t.neighbors) neighbors.push_back(xy(n));
    nlohmann::json line = {{"episode", index},
                           {"tick", k},
                           {"t", t.time},
                           {"position", xy(t.robot.position)},
                           {"velocity", xy(t.robot.velocity)},
                           {"forces",
                            {{"goal", xy(t.goal_force)}, {"social", xy(t.social_force)}, {"prediction", xy(t.prediction_force)}}},
                           {"neighbors", std::move(neighbors)}};
    out << line.dump() << '\n';
  }
}

}  // namespace posetraj::nav

#endif  // POSETRAJ_NAVSIM_HPP
