#ifndef POSETRAJ_CONFIG_HPP
#define POSETRAJ_CONFIG_HPP

// Run configuration: INI-style sections of key = value pairs, overridable by
// `--section.key value` flags. Every key has a default; unknown keys are errors.
//
//   seed = 7
//   [world]
//   scenes = 2000
//   [backbone]
//   family = attention

#include "posetraj/analysis.hpp"
#include "posetraj/backbones.hpp"
#include "posetraj/checkpoint.hpp"
#include "posetraj/errors.hpp"
#include "posetraj/navsim.hpp"
#include "posetraj/synth.hpp"
#include "posetraj/train.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <json.hpp>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

namespace posetraj {

/// Flat "section.key" -> value map with typed accessors.
class RunConfig {
 public:
  RunConfig() : values_(defaults()) {}

  static const std::map<std::string, std::string>& defaults() {
    static const std::map<std::string, std::string> d = {
        {"seed", "7"},
        // world
        {"world.scenes", "2000"},
        {"world.seed", ""},
        {"world.n_agents_min", "1"},
        {"world.n_agents_max", "3"},
        {"world.speed_min", "0.8"},
        {"world.speed_max", "1.6"},
        {"world.turn_rate", "0.25"},
        {"world.turn_angle_min_deg", "30"},
        {"world.turn_angle_max_deg", "90"},
        {"world.turn_duration", "1.0"},
        {"world.arena_half_extent", "40"},
        {"world.spawn_extent", "8"},
        {"world.neighbor_radius", "6"},
        {"world.repulsion_radius", "1.5"},
        {"world.repulsion_gain", "0.8"},
        {"world.frame_rate", "2.5"},
        {"world.t_obs", "9"},
        {"world.t_pred", "12"},
        {"world.pose_mode", "3d"},
        // gait
        {"gait.step_frequency", "0.9"},
        {"gait.stride_amplitude", "0.35"},
        {"gait.lead_time", "0.8"},
        {"gait.noise_std", "0"},
        // camera for 2D pose
        {"camera.height", "20"},
        {"camera.distance", "60"},
        {"camera.pitch", "0.32"},
        {"camera.focal", "25"},
        // backbone
        {"backbone.family", "attention"},
        {"backbone.traj_embed_dim", "64"},
        {"backbone.hidden_dim", "128"},
        {"backbone.interaction", "default"},
        {"backbone.interaction_dim", "256"},
        {"backbone.layers", "2"},
        {"backbone.heads", "16"},
        {"backbone.k_samples", "1"},
        {"backbone.pool_sigma", "2.0"},
        {"backbone.noise_dim", "16"},
        {"backbone.noise_scale", "1.0"},
        {"backbone.teacher_forcing", "false"},
        // pose
        {"pose.enabled", "on"},
        {"pose.dim", "128"},
        {"pose.layers", "2"},
        {"pose.heads", "16"},
        {"pose.ff_dim", "0"},
        {"pose.tokenization", "per-frame-joint"},
        {"pose.pooling", "mean"},
        {"pose.dropout", "0"},
        {"pose.dims", "3"},
        {"pose.joints", ""},
        {"pose.fusion", "concat"},
        // train
        {"train.lr", "0"},
        {"train.lr_decay", "0.5"},
        {"train.decay_every", "10"},
        {"train.batch_size", "64"},
        {"train.epochs", "50"},
        {"train.seed", ""},
        {"train.noise_augment", "off"},
        {"train.noise_std", "0.1"},
        {"train.noise_fraction", "0.5"},
        {"train.occlusion_augment", "off"},
        {"train.occlusion_fraction", "0.5"},
        {"train.patience", "10"},
        {"train.clip_norm", "5.0"},
        {"train.loss", "position"},
        {"train.validation_fraction", "0.1"},
        // eval
        {"eval.k", "1"},
        {"eval.seed", ""},
        {"eval.perturbation", "none"},
        {"eval.noise_std", "0.1"},
        {"eval.noise_fraction", "1.0"},
        {"eval.occlusion", "random_limb_50"},
        // analysis
        {"analysis.top_k", "8"},
        // navsim
        {"navsim.predictor", "none"},
        {"navsim.episodes", "100"},
        {"navsim.seed", ""},
        {"navsim.tau", "0.5"},
        {"navsim.repulsion_strength", "2.0"},
        {"navsim.repulsion_range", "0.8"},
        {"navsim.radius", "0.3"},
        {"navsim.desired_speed", "1.2"},
        {"navsim.dt", "0.1"},
        {"navsim.prediction_scale", "0.6"},
        {"navsim.prediction_horizon", "12"},
        {"navsim.discount", "0.85"},
        {"navsim.timeout", "30"},
        // paths
        {"paths.run_root", ""},
        // plot
        {"plot.scene", "0"},
    };
    return d;
  }

  /// Merges an INI file; unknown keys are rejected.
  void load_file(const std::filesystem::path& path) {
    boost::property_tree::ptree tree;
    try {
      boost::property_tree::ini_parser::read_ini(path.string(), tree);
    } catch (const boost::property_tree::ini_parser_error& e) {
      throw ConfigError(std::string("config: ") + e.what());
    }
    for (const auto& [section, node] : tree) {
      if (node.empty()) {
        set(section, node.data());
        continue;
      }
      for (const auto& [key, leaf] : node) set(section + "." + key, leaf.data());
    }
  }

  void load_string(const std::string& text) {
    std::istringstream in(text);
    boost::property_tree::ptree tree;
    try {
      boost::property_tree::ini_parser::read_ini(in, tree);
    } catch (const boost::property_tree::ini_parser_error& e) {
      throw ConfigError(std::string("config: ") + e.what());
    }
    for (const auto& [section, node] : tree) {
      if (node.empty()) {
        set(section, node.data());
        continue;
      }
      for (const auto& [key, leaf] : node) set(section + "." + key, leaf.data());
    }
  }

  void set(const std::string& key, const std::string& value) {
    if (!defaults().contains(key)) throw ConfigError("unknown config key '" + key + "'");
    values_[key] = value;
  }

  bool has(const std::string& key) const { return defaults().contains(key); }

  const std::string& str(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'");
    return it->second;
  }

  double num(const std::string& key) const {
    const std::string& v = str(key);
    try {
      std::size_t pos = 0;
      const double d = std::stod(v, &pos);
      if (pos != v.size() || !std::isfinite(d)) throw std::invalid_argument(v);
      return d;
    } catch (const std::exception&) {
      throw ConfigError("config key '" + key + "' expects a number (got '" + v + "')");
    }
  }

  long long integer(const std::string& key) const {
    const std::string& v = str(key);
    try {
      std::size_t pos = 0;
      const long long i = std::stoll(v, &pos);
      if (pos != v.size()) throw std::invalid_argument(v);
      return i;
    } catch (const std::exception&) {
      throw ConfigError("config key '" + key + "' expects an integer (got '" + v + "')");
    }
  }

  int int32(const std::string& key) const { return static_cast<int>(integer(key)); }

  bool flag(const std::string& key) const {
    const std::string& v = str(key);
    if (v == "on" || v == "true" || v == "1" || v == "yes") return true;
    if (v == "off" || v == "false" || v == "0" || v == "no") return false;
    throw ConfigError("config key '" + key + "' expects on/off (got '" + v + "')");
  }

  /// Section seed if set, otherwise the global seed.
  std::uint64_t seed_for(const std::string& section) const {
    const std::string key = section + ".seed";
    if (!str(key).empty()) return static_cast<std::uint64_t>(integer(key));
    return static_cast<std::uint64_t>(integer("seed"));
  }

  const std::map<std::string, std::string>& values() const { return values_; }

  /// Sectioned INI text; parsing it back yields the same values.
  std::string to_ini() const {
    std::ostringstream out;
    std::map<std::string, std::map<std::string, std::string>> sections;
    for (const auto& [k, v] : values_) {
      const auto dot = k.find('.');
      if (dot == std::string::npos) {
        out << k << " = " << v << '\n';
      } else {
        sections[k.substr(0, dot)][k.substr(dot + 1)] = v;
      }
    }
    for (const auto& [s, kv] : sections) {
      out << '[' << s << "]\n";
      for (const auto& [k, v] : kv) out << k << " = " << v << '\n';
    }
    return out.str();
  }

  nlohmann::json to_json() const {
    nlohmann::json j = nlohmann::json::object();
    for (const auto& [k, v] : values_) j[k] = v;
    return j;
  }

  std::string hash() const { return git_blob_hash(to_ini()); }

 private:
  std::map<std::string, std::string> values_;
};

inline synth::WorldConfig world_config(const RunConfig& c) {
  synth::WorldConfig w;
  w.n_agents_min = c.int32("world.n_agents_min");
  w.n_agents_max = c.int32("world.n_agents_max");
  w.speed_min = c.num("world.speed_min");
  w.speed_max = c.num("world.speed_max");
  w.turn_rate = c.num("world.turn_rate");
  w.turn_angle_min = c.num("world.turn_angle_min_deg") * std::numbers::pi / 180.0;
  w.turn_angle_max = c.num("world.turn_angle_max_deg") * std::numbers::pi / 180.0;
  w.turn_duration = c.num("world.turn_duration");
  w.arena_half_extent = c.num("world.arena_half_extent");
  w.spawn_extent = c.num("world.spawn_extent");
  w.neighbor_radius = c.num("world.neighbor_radius");
  w.repulsion_radius = c.num("world.repulsion_radius");
  w.repulsion_gain = c.num("world.repulsion_gain");
  w.frame_rate = c.num("world.frame_rate");
  w.t_obs = c.int32("world.t_obs");
  w.t_pred = c.int32("world.t_pred");
  w.seed = c.seed_for("world");
  synth::check(w);
  return w;
}

inline synth::GaitModel gait_config(const RunConfig& c) {
  synth::GaitModel g;
  g.step_frequency = c.num("gait.step_frequency");
  g.stride_amplitude = c.num("gait.stride_amplitude");
  g.lead_time = c.num("gait.lead_time");
  g.noise_std = c.num("gait.noise_std");
  synth::check(g);
  return g;
}

inline synth::CameraConfig camera_config(const RunConfig& c) {
  synth::CameraConfig cam;
  cam.position = Eigen::Vector3d(0.0, -c.num("camera.distance"), c.num("camera.height"));
  cam.pitch = c.num("camera.pitch");
  cam.focal = c.num("camera.focal");
  return cam;
}

inline std::vector<int> parse_joint_list(const std::string& key, const std::string& text) {
  std::vector<int> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.find_first_not_of(" \t") == std::string::npos) continue;
    try {
      out.push_back(std::stoi(item));
    } catch (const std::exception&) {
      throw ConfigError("config key '" + key + "' expects comma-separated joint ids");
    }
  }
  return out;
}

inline ModelConfig model_config(const RunConfig& c) {
  ModelConfig m;
  auto& b = m.backbone;
  b.family = family_from_string(c.str("backbone.family"));
  b.traj_embed_dim = c.int32("backbone.traj_embed_dim");
  b.hidden_dim = c.int32("backbone.hidden_dim");
  const std::string& inter = c.str("backbone.interaction");
  b.interaction = inter == "default" ? default_interaction(b.family) : interaction_from_string(inter);
  b.interaction_dim = c.int32("backbone.interaction_dim");
  b.layers = c.int32("backbone.layers");
  b.heads = c.int32("backbone.heads");
  b.t_obs = c.int32("world.t_obs");
  b.t_pred = c.int32("world.t_pred");
  b.k_samples = c.int32("backbone.k_samples");
  b.pool_sigma = c.num("backbone.pool_sigma");
  b.noise_dim = c.int32("backbone.noise_dim");
  b.noise_scale = c.num("backbone.noise_scale");
  b.teacher_forcing = c.flag("backbone.teacher_forcing");
  m.use_pose = c.flag("pose.enabled");
  m.pose.dim = c.int32("pose.dim");
  m.pose.layers = c.int32("pose.layers");
  m.pose.heads = c.int32("pose.heads");
  m.pose.ff_dim = c.int32("pose.ff_dim");
  m.pose.tokenization = tokenization_from_string(c.str("pose.tokenization"));
  m.pose.pooling = pooling_from_string(c.str("pose.pooling"));
  m.pose.dropout = c.num("pose.dropout");
  m.pose.pose_dims = c.int32("pose.dims");
  m.pose.joint_subset = parse_joint_list("pose.joints", c.str("pose.joints"));
  m.fusion = fusion_from_string(c.str("pose.fusion"));
  m.seed = c.seed_for("train");
  b.check();
  if (m.use_pose) m.pose.check();
  return m;
}

inline TrainConfig train_config(const RunConfig& c) {
  TrainConfig t;
  t.lr = c.num("train.lr");
  t.lr_decay = c.num("train.lr_decay");
  t.decay_every = c.int32("train.decay_every");
  t.batch_size = c.int32("train.batch_size");
  t.epochs = c.int32("train.epochs");
  t.seed = c.seed_for("train");
  t.noise.enabled = c.flag("train.noise_augment");
  t.noise.std = c.num("train.noise_std");
  t.noise.fraction = c.num("train.noise_fraction");
  t.occlusion.enabled = c.flag("train.occlusion_augment");
  t.occlusion.fraction = c.num("train.occlusion_fraction");
  t.patience = c.int32("train.patience");
  t.clip_norm = c.num("train.clip_norm");
  const std::string& loss = c.str("train.loss");
  if (loss == "position") {
    t.loss = LossSpace::Position;
  } else if (loss == "displacement") {
    t.loss = LossSpace::Displacement;
  } else {
    throw ConfigError("config key 'train.loss' must be position or displacement");
  }
  t.validation_fraction = c.num("train.validation_fraction");
  t.check();
  return t;
}

inline Perturbation eval_perturbation(const RunConfig& c) {
  const std::string& kind = c.str("eval.perturbation");
  const std::uint64_t seed = c.seed_for("eval");
  if (kind == "none") return Perturbation::none();
  if (kind == "noise") {
    const double std = c.num("eval.noise_std");
    if (std < 0.0) throw ConfigError("config key 'eval.noise_std' must be >= 0");
    return Perturbation::noise(std, c.num("eval.noise_fraction"), seed);
  }
  if (kind == "occlusion") return Perturbation::occlusion(occlusion_from_string(c.str("eval.occlusion")), seed);
  if (kind == "strip") return Perturbation::strip();
  throw ConfigError("config key 'eval.perturbation' must be none, noise, occlusion or strip");
}

inline nav::SFMParams sfm_params(const RunConfig& c) {
  nav::SFMParams p;
  p.tau = c.num("navsim.tau");
  p.repulsion_strength = c.num("navsim.repulsion_strength");
  p.repulsion_range = c.num("navsim.repulsion_range");
  p.radius = c.num("navsim.radius");
  p.desired_speed = c.num("navsim.desired_speed");
  p.dt = c.num("navsim.dt");
  p.prediction_scale = c.num("navsim.prediction_scale");
  p.prediction_horizon = c.int32("navsim.prediction_horizon");
  p.discount = c.num("navsim.discount");
  p.timeout = c.num("navsim.timeout");
  p.check();
  return p;
}

}  // namespace posetraj

#endif  // POSETRAJ_CONFIG_HPP
