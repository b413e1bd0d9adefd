#ifndef POSETRAJ_SCENE_HPP
#define POSETRAJ_SCENE_HPP

// Canonical data model for pose-annotated trajectory scenes.

#include "posetraj/errors.hpp"
#include "posetraj/skeleton.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <string_view>
#include <vector>

namespace posetraj {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vec2 = Eigen::Vector2d;

/// Keypoints of one frame, pelvis-relative. joints is J x C (C = 3 or 2).
/// Masked-out joints carry exact zeros.
struct PoseFrame {
  Matrix joints;
  std::vector<bool> mask;

  static PoseFrame empty(int joints, int dims) {
    return {Matrix::Zero(joints, dims), std::vector<bool>(static_cast<std::size_t>(joints), false)};
  }

  int joint_count() const { return static_cast<int>(joints.rows()); }
  int dims() const { return static_cast<int>(joints.cols()); }
  bool any_observed() const { return std::find(mask.begin(), mask.end(), true) != mask.end(); }

  /// Zeroes every masked joint.
  void apply_mask() {
    for (std::size_t j = 0; j < mask.size(); ++j)
      if (!mask[j]) joints.row(static_cast<Eigen::Index>(j)).setZero();
  }

  bool operator==(const PoseFrame& o) const {
    return joints.rows() == o.joints.rows() && joints.cols() == o.joints.cols() && joints == o.joints &&
           mask == o.mask;
  }
};

/// Positions and poses of one agent over a common frame grid. Absent frames
/// (present[t] == false) hold a zero position and a fully masked pose.
struct AgentTrack {
  std::string id;
  std::vector<Vec2> positions;
  std::vector<bool> present;
  std::vector<PoseFrame> poses;  // empty when the corpus carries no pose
  double frame_rate = 2.5;

  std::size_t frames() const { return positions.size(); }

  bool fully_present(std::size_t begin, std::size_t end) const {
    for (std::size_t t = begin; t < end; ++t)
      if (t >= present.size() || !present[t]) return false;
    return true;
  }

  bool operator==(const AgentTrack& o) const {
    return id == o.id && positions == o.positions && present == o.present && poses == o.poses &&
           frame_rate == o.frame_rate;
  }
};

enum class SceneCategory { Static, Linear, Interaction, Other };

inline std::string_view to_string(SceneCategory c) {
  switch (c) {
    case SceneCategory::Static:
      return "Static";
    case SceneCategory::Linear:
      return "Linear";
    case SceneCategory::Interaction:
      return "Interaction";
    case SceneCategory::Other:
      return "Other";
  }
  return "Other";
}

inline SceneCategory category_from_string(std::string_view s) {
  if (s == "Static") return SceneCategory::Static;
  if (s == "Linear") return SceneCategory::Linear;
  if (s == "Interaction") return SceneCategory::Interaction;
  if (s == "Other") return SceneCategory::Other;
  throw DataError("unknown scene category '" + std::string(s) + "'");
}

/// One prediction instance: the primary agent's future is the target.
struct Scene {
  std::size_t primary = 0;
  std::vector<AgentTrack> agents;
  int t_obs = 9;
  int t_pred = 12;
  SceneCategory category = SceneCategory::Other;
  /// 3 for world-metric poses, 2 for image-plane poses, 0 for no pose.
  int pose_dims = 3;

  int frames() const { return t_obs + t_pred; }
  double frame_rate() const { return agents.empty() ? 2.5 : agents.front().frame_rate; }
  const AgentTrack& primary_track() const { return agents.at(primary); }

  bool operator==(const Scene& o) const = default;
};

/// Throws DataError if the scene violates its invariants.
inline void validate(const Scene& s) {
  if (s.t_obs < 2) throw DataError("scene t_obs must be >= 2");
  if (s.t_pred < 1) throw DataError("scene t_pred must be >= 1");
  if (s.primary >= s.agents.size()) throw DataError("scene primary index out of range");
  if (s.pose_dims != 0 && s.pose_dims != 2 && s.pose_dims != 3) throw DataError("pose_dims must be 0, 2 or 3");
  const auto frames = static_cast<std::size_t>(s.frames());
  int joints = -1;
  for (const auto& a : s.agents) {
    if (a.positions.size() != frames || a.present.size() != frames)
      throw DataError("agent '" + a.id + "' does not span t_obs + t_pred frames");
    if (!(a.frame_rate > 0.0)) throw DataError("agent '" + a.id + "' has non-positive frame rate");
    for (const auto& p : a.positions)
      if (!p.allFinite()) throw DataError("agent '" + a.id + "' has non-finite position");
    if (s.pose_dims == 0) {
      if (!a.poses.empty()) throw DataError("pose-free scene carries poses");
      continue;
    }
    if (a.poses.size() != frames) throw DataError("agent '" + a.id + "' pose count differs from position count");
    for (const auto& f : a.poses) {
      if (f.dims() != s.pose_dims) throw DataError("pose frame dims differ from scene pose_dims");
      if (static_cast<int>(f.mask.size()) != f.joint_count()) throw DataError("pose mask length differs from J");
      if (joints < 0) joints = f.joint_count();
      if (f.joint_count() != joints) throw DataError("inconsistent joint count across frames");
    }
  }
  if (!s.primary_track().fully_present(0, frames)) throw DataError("primary agent is not fully observed");
}

/// Joint count of a scene's poses, or 0 when it carries none.
inline int joint_count(const Scene& s) {
  for (const auto& a : s.agents)
    if (!a.poses.empty()) return a.poses.front().joint_count();
  return 0;
}

/// World joints (J x 3) to pelvis-relative coordinates.
inline Matrix to_local_pose(const Matrix& world_joints, int pelvis_index, const std::vector<bool>* mask = nullptr) {
  if (pelvis_index < 0 || pelvis_index >= world_joints.rows()) throw DataError("pelvis index out of range");
  if (mask != nullptr && !(*mask)[static_cast<std::size_t>(pelvis_index)])
    throw DataError("pelvis joint is masked; mask the whole frame instead");
  Matrix local = world_joints.rowwise() - world_joints.row(pelvis_index);
  local.row(pelvis_index).setZero();
  if (mask != nullptr) {
    for (std::size_t j = 0; j < mask->size(); ++j)
      if (!(*mask)[j]) local.row(static_cast<Eigen::Index>(j)).setZero();
  }
  return local;
}

struct CategorizerConfig {
  double static_eps = 1.0;
  double linear_eps = 0.5;
  double interaction_radius = 3.0;
};

/// Trajnet++-style category of a scene, from the primary track and neighbor distances.
inline SceneCategory categorize(const Scene& scene, const CategorizerConfig& cfg = {}) {
  const auto& p = scene.primary_track();
  const auto obs = static_cast<std::size_t>(scene.t_obs);
  const auto frames = p.positions.size();
  if (obs < 2 || frames == 0) return SceneCategory::Static;

  if ((p.positions.back() - p.positions.front()).norm() < cfg.static_eps) return SceneCategory::Static;

  const Vec2 velocity = (p.positions[obs - 1] - p.positions[0]) / static_cast<double>(obs - 1);
  double deviation = 0.0;
  for (std::size_t t = obs; t < frames; ++t) {
    if (!p.present[t]) continue;
    const Vec2 extrapolated = p.positions[obs - 1] + velocity * static_cast<double>(t - (obs - 1));
    deviation = std::max(deviation, (p.positions[t] - extrapolated).norm());
  }
  if (deviation < cfg.linear_eps) return SceneCategory::Linear;

  for (std::size_t a = 0; a < scene.agents.size(); ++a) {
    if (a == scene.primary) continue;
    const auto& n = scene.agents[a];
    for (std::size_t t = 0; t < frames && t < n.positions.size(); ++t) {
      if (!n.present[t] || !p.present[t]) continue;
      if ((n.positions[t] - p.positions[t]).norm() < cfg.interaction_radius) return SceneCategory::Interaction;
    }
  }
  return SceneCategory::Other;
}

/// Sliding windows of t_obs + t_pred frames over tracks sharing one frame grid.
/// Frame t of every track is the same instant; tracks may be shorter than the
/// longest one, missing frames count as absent. One scene per (window, agent
/// present in every frame of the window).
inline std::vector<Scene> slice_scenes(const std::vector<AgentTrack>& tracks, int t_obs, int t_pred, int stride,
                                       const CategorizerConfig& cat = {}) {
  if (t_obs < 2) throw ConfigError("slice_scenes: t_obs must be >= 2");
  if (t_pred < 1) throw ConfigError("slice_scenes: t_pred must be >= 1");
  if (stride < 1) throw ConfigError("slice_scenes: stride must be >= 1");
  std::vector<Scene> scenes;
  if (tracks.empty()) return scenes;

  std::size_t length = 0;
  int pose_dims = 0;
  int joints = 0;
  for (const auto& t : tracks) {
    length = std::max(length, t.positions.size());
    if (!t.poses.empty()) {
      pose_dims = t.poses.front().dims();
      joints = t.poses.front().joint_count();
    }
  }
  const auto window = static_cast<std::size_t>(t_obs + t_pred);

  for (std::size_t start = 0; start + window <= length; start += static_cast<std::size_t>(stride)) {
    // Window views of every track that appears at least once in the window.
    std::vector<AgentTrack> views;
    for (const auto& t : tracks) {
      AgentTrack v;
      v.id = t.id;
      v.frame_rate = t.frame_rate;
      bool seen = false;
      for (std::size_t k = 0; k < window; ++k) {
        const std::size_t f = start + k;
        const bool here = f < t.positions.size() && f < t.present.size() && t.present[f];
        seen = seen || here;
        v.present.push_back(here);
        v.positions.push_back(here ? t.positions[f] : Vec2::Zero());
        if (pose_dims != 0) {
          if (here && f < t.poses.size()) {
            v.poses.push_back(t.poses[f]);
          } else {
            v.poses.push_back(PoseFrame::empty(joints, pose_dims));
          }
        }
      }
      if (seen) views.push_back(std::move(v));
    }
    for (std::size_t a = 0; a < views.size(); ++a) {
      if (!views[a].fully_present(0, window)) continue;
      Scene s;
      s.primary = a;
      s.agents = views;
      s.t_obs = t_obs;
      s.t_pred = t_pred;
      s.pose_dims = pose_dims;
      s.category = categorize(s, cat);
      scenes.push_back(std::move(s));
    }
  }
  return scenes;
}

}  // namespace posetraj

#endif  // POSETRAJ_SCENE_HPP
