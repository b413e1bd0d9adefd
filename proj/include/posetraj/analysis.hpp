#ifndef POSETRAJ_ANALYSIS_HPP
#define POSETRAJ_ANALYSIS_HPP

// Pose perturbations (noise, occlusion, stripping), joint attention maps and
// top-k joint selection. Perturbations only touch pose fields; trajectories
// are left bit-identical.

#include "posetraj/backbones.hpp"
#include "posetraj/errors.hpp"
#include "posetraj/scene.hpp"
#include "posetraj/skeleton.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <string>
#include <string_view>
#include <vector>

namespace posetraj {

/// Random stream of one scene under a perturbation seed.
inline std::mt19937_64 perturbation_stream(std::uint64_t seed, std::uint64_t scene_index, std::uint64_t salt) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(scene_index), static_cast<std::uint32_t>(scene_index >> 32),
                    static_cast<std::uint32_t>(salt)};
  return std::mt19937_64(seq);
}

/// Adds N(0, std^2) to every observed pose coordinate of every agent.
template <typename Rng>
Scene apply_noise(Scene scene, double std, Rng& rng) {
  if (std < 0.0) throw ConfigError("noise std must be >= 0");
  if (std == 0.0) return scene;
  std::normal_distribution<double> normal(0.0, std);
  for (auto& a : scene.agents)
    for (auto& f : a.poses)
      for (Eigen::Index j = 0; j < f.joints.rows(); ++j) {
        if (!f.mask[static_cast<std::size_t>(j)]) continue;
        for (Eigen::Index c = 0; c < f.joints.cols(); ++c) f.joints(j, c) += normal(rng);
      }
  return scene;
}

inline Scene apply_noise(Scene scene, double std, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return apply_noise(std::move(scene), std, rng);
}

enum class OcclusionScheme { RandomLimb50, StructuredRightLeg, CompleteFrame50 };

inline std::string_view to_string(OcclusionScheme s) {
  switch (s) {
    case OcclusionScheme::RandomLimb50:
      return "random_limb_50";
    case OcclusionScheme::StructuredRightLeg:
      return "structured_right_leg";
    case OcclusionScheme::CompleteFrame50:
      return "complete_frame_50";
  }
  return "random_limb_50";
}

inline OcclusionScheme occlusion_from_string(std::string_view s) {
  if (s == "random_limb_50") return OcclusionScheme::RandomLimb50;
  if (s == "structured_right_leg") return OcclusionScheme::StructuredRightLeg;
  if (s == "complete_frame_50") return OcclusionScheme::CompleteFrame50;
  throw ConfigError("unknown occlusion scheme '" + std::string(s) +
                    "' (random_limb_50, structured_right_leg, complete_frame_50)");
}

namespace detail {

inline void mask_joints(AgentTrack& a, const std::vector<int>& joints) {
  for (auto& f : a.poses) {
    for (int j : joints)
      if (j < f.joint_count()) f.mask[static_cast<std::size_t>(j)] = false;
    f.apply_mask();
  }
}

}  // namespace detail

/// Masks joints according to `scheme`; masked joints are zeroed. Never unmasks.
///   random_limb_50: with probability 0.5 one limb (a leg or an arm, uniformly) is masked in all frames;
///   structured_right_leg: right hip, knee and ankle are masked in all frames;
///   complete_frame_50: each (agent, frame) loses every joint with probability 0.5.
template <typename Rng>
Scene occlude(Scene scene, OcclusionScheme scheme, Rng& rng) {
  switch (scheme) {
    case OcclusionScheme::RandomLimb50: {
      std::bernoulli_distribution hit(0.5);
      std::uniform_int_distribution<int> pick(0, 3);
      if (!hit(rng)) break;
      const int limb = pick(rng);
      std::vector<int> joints;
      switch (limb) {
        case 0:
          joints.assign(skeleton::kRightLeg.begin(), skeleton::kRightLeg.end());
          break;
        case 1:
          joints.assign(skeleton::kLeftLeg.begin(), skeleton::kLeftLeg.end());
          break;
        case 2:
          joints.assign(skeleton::kLeftArm.begin(), skeleton::kLeftArm.end());
          break;
        default:
          joints.assign(skeleton::kRightArm.begin(), skeleton::kRightArm.end());
          break;
      }
      for (auto& a : scene.agents) detail::mask_joints(a, joints);
      break;
    }
    case OcclusionScheme::StructuredRightLeg: {
      const std::vector<int> joints(skeleton::kRightLeg.begin(), skeleton::kRightLeg.end());
      for (auto& a : scene.agents) detail::mask_joints(a, joints);
      break;
    }
    case OcclusionScheme::CompleteFrame50: {
      std::bernoulli_distribution drop(0.5);
      for (auto& a : scene.agents)
        for (auto& f : a.poses)
          if (drop(rng)) {
            std::fill(f.mask.begin(), f.mask.end(), false);
            f.apply_mask();
          }
      break;
    }
  }
  return scene;
}

inline Scene occlude(Scene scene, OcclusionScheme scheme, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return occlude(std::move(scene), scheme, rng);
}

/// Removes all pose data from a scene.
inline Scene strip_pose(Scene scene) {
  for (auto& a : scene.agents) a.poses.clear();
  scene.pose_dims = 0;
  return scene;
}

struct Perturbation {
  enum class Kind { None, GaussianNoise, Occlusion, StripPose };
  Kind kind = Kind::None;
  double std = 0.0;
  double fraction = 1.0;
  OcclusionScheme scheme = OcclusionScheme::RandomLimb50;
  std::uint64_t seed = 0;

  static Perturbation none() { return {}; }
  static Perturbation noise(double std, double fraction, std::uint64_t seed) {
    return {Kind::GaussianNoise, std, fraction, OcclusionScheme::RandomLimb50, seed};
  }
  static Perturbation occlusion(OcclusionScheme scheme, std::uint64_t seed) {
    return {Kind::Occlusion, 0.0, 1.0, scheme, seed};
  }
  static Perturbation strip() { return {Kind::StripPose, 0.0, 1.0, OcclusionScheme::RandomLimb50, 0}; }

  std::string describe() const {
    switch (kind) {
      case Kind::None:
        return "none";
      case Kind::GaussianNoise:
        return "gaussian_noise(std=" + std::to_string(std) + ", fraction=" + std::to_string(fraction) +
               ", seed=" + std::to_string(seed) + ")";
      case Kind::Occlusion:
        return "occlusion(" + std::string(to_string(scheme)) + ", seed=" + std::to_string(seed) + ")";
      case Kind::StripPose:
        return "strip_pose";
    }
    return "none";
  }
};

/// Number of scenes perturbed out of n for a fraction in [0, 1].
inline std::size_t perturbed_count(std::size_t n, double fraction) {
  if (fraction < 0.0 || fraction > 1.0) throw ConfigError("perturbation fraction must be in [0, 1]");
  return std::min(n, static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(n) - 1e-12)));
}

/// Applies a perturbation to a corpus. Scene i draws from its own stream
/// derived from (seed, i); the noisy subset is chosen by a seeded shuffle.
inline std::vector<Scene> apply_perturbation(const std::vector<Scene>& corpus, const Perturbation& p) {
  std::vector<Scene> out = corpus;
  switch (p.kind) {
    case Perturbation::Kind::None:
      break;
    case Perturbation::Kind::StripPose:
      for (auto& s : out) s = strip_pose(std::move(s));
      break;
    case Perturbation::Kind::Occlusion:
      for (std::size_t i = 0; i < out.size(); ++i) {
        auto rng = perturbation_stream(p.seed, i, 1);
        out[i] = occlude(std::move(out[i]), p.scheme, rng);
      }
      break;
    case Perturbation::Kind::GaussianNoise: {
      std::vector<std::size_t> order(out.size());
      std::iota(order.begin(), order.end(), 0);
      auto pick = perturbation_stream(p.seed, out.size(), 2);
      std::shuffle(order.begin(), order.end(), pick);
      order.resize(perturbed_count(out.size(), p.fraction));
      for (std::size_t i : order) {
        auto rng = perturbation_stream(p.seed, i, 3);
        out[i] = apply_noise(std::move(out[i]), p.std, rng);
      }
      break;
    }
  }
  return out;
}

/// Per-joint attention scores, normalized to sum 1.
struct JointAttentionMap {
  std::vector<double> scores;
  std::size_t n_scenes = 0;
  /// Joint ids the scores refer to (the encoder's active joints).
  std::vector<int> joints;
};

/// Attention received by each joint's tokens of the primary agents, averaged
/// over layers, heads, query tokens and frames, then over scenes.
inline JointAttentionMap joint_attention(const Model& model, const std::vector<Scene>& corpus,
                                         std::size_t chunk = 32) {
  const ModelConfig& cfg = model.config();
  if (!cfg.use_pose) throw ConfigError("joint attention needs a model with the pose encoder enabled");
  if (cfg.pose.tokenization != Tokenization::PerFrameJoint)
    throw ConfigError("joint attention needs pose.tokenization = per-frame-joint; retrain the model in that mode");
  if (corpus.empty()) throw DataError("joint attention over an empty corpus");
  const std::vector<int> joints = cfg.pose.active_joints();
  const auto J = joints.size();
  const int frames = cfg.backbone.t_obs;
  const int heads = cfg.pose.heads;
  const int tokens = frames * static_cast<int>(J);

  // Per-scene maps are accumulated in corpus order after being computed, so
  // the sum is independent of how the corpus is chunked.
  std::vector<std::vector<double>> per_scene(corpus.size(), std::vector<double>(J, 0.0));
  for (std::size_t begin = 0; begin < corpus.size(); begin += chunk) {
    const std::size_t end = std::min(corpus.size(), begin + chunk);
    std::vector<Scene> primaries;
    for (std::size_t i = begin; i < end; ++i) {
      Scene s;
      s.agents = {corpus[i].primary_track()};
      s.primary = 0;
      s.t_obs = corpus[i].t_obs;
      s.t_pred = corpus[i].t_pred;
      s.pose_dims = corpus[i].pose_dims;
      primaries.push_back(std::move(s));
    }
    std::vector<const Scene*> ptrs;
    for (const auto& s : primaries) ptrs.push_back(&s);
    const SceneBatch batch = model.make_batch(ptrs, false);
    const PoseLatent latent = model.pose_latent(batch);
    for (std::size_t a = 0; a < primaries.size(); ++a) {
      std::vector<double>& scores = per_scene[begin + a];
      for (const auto& layer : latent.attention)
        for (int h = 0; h < heads; ++h) {
          const Matrix& w = layer[a * static_cast<std::size_t>(heads) + static_cast<std::size_t>(h)];
          const Eigen::RowVectorXd received = w.colwise().sum() / static_cast<double>(w.rows());
          for (int k = 0; k < tokens; ++k) scores[static_cast<std::size_t>(k) % J] += received(k);
        }
    }
  }
  JointAttentionMap map;
  map.joints = joints;
  map.n_scenes = corpus.size();
  map.scores.assign(J, 0.0);
  for (const auto& s : per_scene) {
    const double total = std::accumulate(s.begin(), s.end(), 0.0);
    if (total <= 0.0) continue;
    for (std::size_t j = 0; j < J; ++j) map.scores[j] += s[j] / total;
  }
  const double total = std::accumulate(map.scores.begin(), map.scores.end(), 0.0);
  if (total > 0.0)
    for (double& v : map.scores) v /= total;
  return map;
}

/// Joint ids of the k largest scores, ties broken by lower index, returned in ascending id order.
inline std::vector<int> select_top_joints(const JointAttentionMap& map, std::size_t k) {
  if (k > map.scores.size()) throw ConfigError("top-k larger than the joint count");
  std::vector<std::size_t> order(map.scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return map.scores[a] > map.scores[b]; });
  std::vector<int> out;
  for (std::size_t i = 0; i < k; ++i)
    out.push_back(map.joints.empty() ? static_cast<int>(order[i]) : map.joints[order[i]]);
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace posetraj

#endif  // POSETRAJ_ANALYSIS_HPP
