#ifndef POSETRAJ_CHECKPOINT_HPP
#define POSETRAJ_CHECKPOINT_HPP

// Model checkpoints: one JSON document holding a format version, the model
// configuration, the seed, every parameter blob, and a git-style SHA-1
// ("blob <len>\0<content>") over the document without its hash field.

#include "posetraj/backbones.hpp"
#include "posetraj/errors.hpp"

#include <json.hpp>
#include <openssl/sha.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>

namespace posetraj {

inline constexpr int kCheckpointVersion = 1;

inline std::string sha1_hex(std::string_view data) {
  std::array<unsigned char, SHA_DIGEST_LENGTH> digest{};
  SHA1(reinterpret_cast<const unsigned char*>(data.data()), data.size(), digest.data());
  std::string hex;
  char buf[3];
  for (unsigned char b : digest) {
    std::snprintf(buf, sizeof(buf), "%02x", b);
    hex += buf;
  }
  return hex;
}

/// Hash git assigns to a blob with this content.
inline std::string git_blob_hash(std::string_view content) {
  std::string blob = "blob " + std::to_string(content.size());
  blob.push_back('\0');
  blob.append(content);
  return sha1_hex(blob);
}

inline std::string_view to_string(Tokenization t) { return t == Tokenization::PerFrame ? "per-frame" : "per-frame-joint"; }

inline Tokenization tokenization_from_string(std::string_view s) {
  if (s == "per-frame") return Tokenization::PerFrame;
  if (s == "per-frame-joint") return Tokenization::PerFrameJoint;
  throw ConfigError("pose.tokenization must be per-frame or per-frame-joint (got '" + std::string(s) + "')");
}

inline std::string_view to_string(TokenPooling p) { return p == TokenPooling::Mean ? "mean" : "last"; }

inline TokenPooling pooling_from_string(std::string_view s) {
  if (s == "mean") return TokenPooling::Mean;
  if (s == "last") return TokenPooling::LastToken;
  throw ConfigError("pose.pooling must be mean or last (got '" + std::string(s) + "')");
}

inline std::string_view to_string(FusionKind f) { return f == FusionKind::Concat ? "concat" : "cross-attention"; }

inline FusionKind fusion_from_string(std::string_view s) {
  if (s == "concat") return FusionKind::Concat;
  if (s == "cross-attention") return FusionKind::CrossAttention;
  throw ConfigError("pose.fusion must be concat or cross-attention (got '" + std::string(s) + "')");
}

inline nlohmann::json to_json(const ModelConfig& c) {
  const auto& b = c.backbone;
  const auto& p = c.pose;
  return {
      {"backbone",
       {{"family", to_string(b.family)},
        {"traj_embed_dim", b.traj_embed_dim},
        {"hidden_dim", b.hidden_dim},
        {"interaction", to_string(b.interaction)},
        {"interaction_dim", b.interaction_dim},
        {"layers", b.layers},
        {"heads", b.heads},
        {"t_obs", b.t_obs},
        {"t_pred", b.t_pred},
        {"k_samples", b.k_samples},
        {"pool_sigma", b.pool_sigma},
        {"noise_dim", b.noise_dim},
        {"noise_scale", b.noise_scale},
        {"teacher_forcing", b.teacher_forcing}}},
      {"pose",
       {{"enabled", c.use_pose},
        {"dim", p.dim},
        {"layers", p.layers},
        {"heads", p.heads},
        {"ff_dim", p.ff_dim},
        {"tokenization", to_string(p.tokenization)},
        {"pooling", to_string(p.pooling)},
        {"dropout", p.dropout},
        {"joints", p.joints},
        {"pose_dims", p.pose_dims},
        {"joint_subset", p.joint_subset},
        {"fusion", to_string(c.fusion)}}},
      {"seed", c.seed}};
}

inline ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  const auto& b = j.at("backbone");
  c.backbone.family = family_from_string(b.at("family").get<std::string>());
  c.backbone.traj_embed_dim = b.at("traj_embed_dim").get<int>();
  c.backbone.hidden_dim = b.at("hidden_dim").get<int>();
  c.backbone.interaction = interaction_from_string(b.at("interaction").get<std::string>());
  c.backbone.interaction_dim = b.at("interaction_dim").get<int>();
  c.backbone.layers = b.at("layers").get<int>();
  c.backbone.heads = b.at("heads").get<int>();
  c.backbone.t_obs = b.at("t_obs").get<int>();
  c.backbone.t_pred = b.at("t_pred").get<int>();
  c.backbone.k_samples = b.at("k_samples").get<int>();
  c.backbone.pool_sigma = b.at("pool_sigma").get<double>();
  c.backbone.noise_dim = b.at("noise_dim").get<int>();
  c.backbone.noise_scale = b.at("noise_scale").get<double>();
  c.backbone.teacher_forcing = b.at("teacher_forcing").get<bool>();
  const auto& p = j.at("pose");
  c.use_pose = p.at("enabled").get<bool>();
  c.pose.dim = p.at("dim").get<int>();
  c.pose.layers = p.at("layers").get<int>();
  c.pose.heads = p.at("heads").get<int>();
  c.pose.ff_dim = p.at("ff_dim").get<int>();
  c.pose.tokenization = tokenization_from_string(p.at("tokenization").get<std::string>());
  c.pose.pooling = pooling_from_string(p.at("pooling").get<std::string>());
  c.pose.dropout = p.at("dropout").get<double>();
  c.pose.joints = p.at("joints").get<int>();
  c.pose.pose_dims = p.at("pose_dims").get<int>();
  c.pose.joint_subset = p.at("joint_subset").get<std::vector<int>>();
  c.fusion = fusion_from_string(p.at("fusion").get<std::string>());
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

inline nlohmann::json checkpoint_json(const Model& model, const nlohmann::json& extra = nlohmann::json::object()) {
  nlohmann::json params = nlohmann::json::array();
  for (const auto& p : model.parameters()) {
    std::vector<double> data(p.value.data(), p.value.data() + p.value.size());
    params.push_back({{"name", p.name}, {"rows", p.value.rows()}, {"cols", p.value.cols()}, {"data", data}});
  }
  nlohmann::json doc = {{"format", "posetraj-checkpoint"},
                        {"version", kCheckpointVersion},
                        {"config", to_json(model.config())},
                        {"seed", model.config().seed},
                        {"extra", extra},
                        {"parameters", std::move(params)}};
  doc["hash"] = git_blob_hash(doc.dump());
  return doc;
}

inline void save_checkpoint(const Model& model, const std::filesystem::path& path,
                            const nlohmann::json& extra = nlohmann::json::object()) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open '" + path.string() + "' for writing");
  out << checkpoint_json(model, extra).dump() << '\n';
  if (!out) throw DataError("write to '" + path.string() + "' failed");
}

/// Rebuilds a model from a checkpoint document; verifies version, hash and shapes.
inline Model model_from_checkpoint(nlohmann::json doc) {
  if (!doc.is_object() || doc.value("format", "") != "posetraj-checkpoint") throw DataError("not a checkpoint");
  const int version = doc.at("version").get<int>();
  if (version != kCheckpointVersion)
    throw DataError("checkpoint version " + std::to_string(version) + " is not supported");
  const std::string hash = doc.at("hash").get<std::string>();
  doc.erase("hash");
  if (git_blob_hash(doc.dump()) != hash) throw DataError("checkpoint content hash mismatch");
  Model model(model_config_from_json(doc.at("config")));
  auto& store = model.parameters();
  const auto& params = doc.at("parameters");
  if (params.size() != store.size()) throw DataError("checkpoint parameter count differs from the model");
  for (std::size_t i = 0; i < store.size(); ++i) {
    const auto& jp = params[i];
    auto& p = store[i];
    if (jp.at("name").get<std::string>() != p.name || jp.at("rows").get<Eigen::Index>() != p.value.rows() ||
        jp.at("cols").get<Eigen::Index>() != p.value.cols())
      throw DataError("checkpoint parameter '" + jp.at("name").get<std::string>() + "' does not match the model");
    const auto data = jp.at("data").get<std::vector<double>>();
    if (static_cast<Eigen::Index>(data.size()) != p.value.size()) throw DataError("checkpoint blob size mismatch");
    std::copy(data.begin(), data.end(), p.value.data());
  }
  return model;
}

inline Model load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint '" + path.string() + "'");
  try {
    return model_from_checkpoint(nlohmann::json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    throw DataError("checkpoint '" + path.string() + "': " + e.what());
  }
}

}  // namespace posetraj

#endif  // POSETRAJ_CHECKPOINT_HPP
