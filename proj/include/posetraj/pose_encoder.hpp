#ifndef POSETRAJ_POSE_ENCODER_HPP
#define POSETRAJ_POSE_ENCODER_HPP

// Decoupled pose encoder: per-agent pose sequences are embedded into tokens,
// offset by sinusoidal temporal encodings, passed through a transformer
// encoder and pooled into one latent per agent. The latent is concatenated
// with the agent's trajectory latent before any interaction modelling.

#include "posetraj/autodiff/ops.hpp"
#include "posetraj/errors.hpp"
#include "posetraj/nn/layers.hpp"
#include "posetraj/scene.hpp"

#include <cmath>
#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <vector>

namespace posetraj {

enum class Tokenization { PerFrame, PerFrameJoint };
enum class TokenPooling { Mean, LastToken };

struct PoseEncoderConfig {
  int dim = 128;
  int layers = 2;
  int heads = 16;
  /// Feed-forward width inside each layer; 0 means 2 * dim.
  int ff_dim = 0;
  Tokenization tokenization = Tokenization::PerFrameJoint;
  TokenPooling pooling = TokenPooling::Mean;
  double dropout = 0.0;
  int joints = skeleton::kJoints;
  /// 3 for world poses, 2 for image-plane poses.
  int pose_dims = 3;
  /// Restricts the encoder to these joints; empty means all.
  std::vector<int> joint_subset;

  std::vector<int> active_joints() const {
    if (!joint_subset.empty()) return joint_subset;
    std::vector<int> all(static_cast<std::size_t>(joints));
    for (int j = 0; j < joints; ++j) all[static_cast<std::size_t>(j)] = j;
    return all;
  }

  void check() const {
    if (dim < 1 || heads < 1 || dim % heads != 0) throw ConfigError("pose.dim must be divisible by pose.heads");
    if (layers < 1) throw ConfigError("pose.layers must be >= 1");
    if (pose_dims != 2 && pose_dims != 3) throw ConfigError("pose.pose_dims must be 2 or 3");
    if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("pose.dropout must be in [0, 1)");
    for (int j : joint_subset)
      if (j < 0 || j >= joints) throw ConfigError("pose.joint_subset entry out of range");
  }
};

/// Sinusoidal encoding of frame index t: entry d is sin(t / 10000^(d/D)) for
/// even d and cos(t / 10000^(d/D)) for odd d.
inline Eigen::RowVectorXd positional_encoding(double t, int dim) {
  Eigen::RowVectorXd p(dim);
  for (int d = 0; d < dim; ++d) {
    const double angle = t / std::pow(10000.0, static_cast<double>(d) / static_cast<double>(dim));
    p(d) = (d % 2 == 0) ? std::sin(angle) : std::cos(angle);
  }
  return p;
}

/// Pose sequences of a set of agents, observed frames only.
/// coords holds one row per (agent, frame) with the active joints' coordinates
/// flattened joint-major; masked joints are zero.
struct PoseBatch {
  int agents = 0;
  int frames = 0;
  int joints = 0;  // active joints
  int dims = 0;
  Matrix coords;
  std::vector<char> mask;  // (agent, frame, joint) row-major

  bool joint_valid(int agent, int frame, int joint) const {
    return mask[static_cast<std::size_t>((agent * frames + frame) * joints + joint)] != 0;
  }
};

/// Appends the first `frames` pose frames of `track` to a batch under construction.
inline void append_pose(PoseBatch& batch, const AgentTrack& track, int frames, const std::vector<int>& joints,
                        int dims) {
  if (static_cast<int>(track.poses.size()) < frames) throw DataError("agent '" + track.id + "' lacks pose frames");
  const int j_count = static_cast<int>(joints.size());
  const Eigen::Index row0 = batch.coords.rows();
  batch.coords.conservativeResize(row0 + frames, j_count * dims);
  for (int f = 0; f < frames; ++f) {
    const PoseFrame& pf = track.poses[static_cast<std::size_t>(f)];
    if (pf.dims() != dims) throw ConfigError("pose dims of the data do not match the encoder");
    for (int k = 0; k < j_count; ++k) {
      const int j = joints[static_cast<std::size_t>(k)];
      if (j >= pf.joint_count()) throw DataError("pose frame has fewer joints than the encoder expects");
      const bool valid = pf.mask[static_cast<std::size_t>(j)];
      batch.mask.push_back(valid ? 1 : 0);
      for (int c = 0; c < dims; ++c)
        batch.coords(row0 + f, k * dims + c) = valid ? pf.joints(j, c) : 0.0;
    }
  }
  batch.agents += 1;
  batch.frames = frames;
  batch.joints = j_count;
  batch.dims = dims;
}

struct PoseLatent {
  /// agents x dim
  ad::Var h_pose;
  /// Per-token encoder outputs, agents * tokens_per_agent rows.
  ad::Var tokens;
  int tokens_per_agent = 0;
  /// Token validity (masked joints / fully masked frames are invalid).
  std::shared_ptr<std::vector<char>> token_valid;
  /// attention[layer][agent * heads + head] is tokens x tokens.
  std::vector<ad::AttentionWeights> attention;
};

class PoseEncoder {
 public:
  PoseEncoder() = default;

  PoseEncoder(ad::ParameterStore& store, const PoseEncoderConfig& cfg, std::mt19937_64& rng) : cfg_(cfg) {
    cfg_.check();
    const auto active = static_cast<Eigen::Index>(cfg_.active_joints().size());
    const Eigen::Index in = cfg_.tokenization == Tokenization::PerFrame ? active * cfg_.pose_dims : cfg_.pose_dims;
    embed_ = nn::Linear(store, "pose.embed", in, cfg_.dim, rng);
    if (cfg_.tokenization == Tokenization::PerFrameJoint)
      joint_embedding_ = store.add("pose.joint_embedding", nn::fan_in_uniform(active, cfg_.dim, cfg_.dim, rng));
    const int ff = cfg_.ff_dim > 0 ? cfg_.ff_dim : 2 * cfg_.dim;
    for (int l = 0; l < cfg_.layers; ++l)
      layers_.emplace_back(store, "pose.layer" + std::to_string(l), cfg_.dim, cfg_.heads, ff, rng);
  }

  const PoseEncoderConfig& config() const { return cfg_; }
  const nn::Linear& embedding() const { return embed_; }
  std::size_t joint_embedding_index() const { return joint_embedding_; }
  const std::vector<nn::TransformerLayer>& layers() const { return layers_; }

  int tokens_per_agent(int frames) const {
    const int active = static_cast<int>(cfg_.active_joints().size());
    return cfg_.tokenization == Tokenization::PerFrame ? frames : frames * active;
  }

  /// Token matrix M (Emb(x) + p^t per token) for a batch whose coordinates are `coords`.
  /// Frames are indexed 1..T in the temporal encoding.
  ad::Var embed(nn::Binder& b, ad::Var coords, const PoseBatch& batch) const {
    check_batch(batch);
    ad::Tape& t = b.tape();
    if (cfg_.tokenization == Tokenization::PerFrame) {
      Matrix pe(batch.agents * batch.frames, cfg_.dim);
      for (int a = 0; a < batch.agents; ++a)
        for (int f = 0; f < batch.frames; ++f) pe.row(a * batch.frames + f) = positional_encoding(f + 1, cfg_.dim);
      return ad::add(embed_(b, coords), t.constant(std::move(pe)));
    }
    // One token per (agent, frame, joint): reshape coordinates to rows of C.
    const int rows = batch.agents * batch.frames * batch.joints;
    std::vector<ad::Index> joint_ids;
    joint_ids.reserve(static_cast<std::size_t>(rows));
    Matrix pe(rows, cfg_.dim);
    Eigen::Index r = 0;
    for (int a = 0; a < batch.agents; ++a)
      for (int f = 0; f < batch.frames; ++f) {
        const Eigen::RowVectorXd p = positional_encoding(f + 1, cfg_.dim);
        for (int j = 0; j < batch.joints; ++j, ++r) {
          joint_ids.push_back(j);
          pe.row(r) = p;
        }
      }
    ad::Var per_joint = reshape_joint_rows(coords, batch);
    ad::Var tokens = embed_(b, per_joint);
    tokens = ad::add(tokens, ad::gather_rows(b(joint_embedding_), std::move(joint_ids)));
    return ad::add(tokens, t.constant(std::move(pe)));
  }

  /// Transformer encoding of the token matrix followed by pooling over valid tokens.
  template <typename Rng>
  PoseLatent encode(nn::Binder& b, ad::Var tokens, const PoseBatch& batch, Rng& rng) const {
    PoseLatent out;
    const int per_agent = tokens_per_agent(batch.frames);
    out.tokens_per_agent = per_agent;
    out.token_valid = std::make_shared<std::vector<char>>(token_validity(batch));

    ad::AttentionSpec spec;
    spec.key_valid = out.token_valid;
    for (int a = 0; a < batch.agents; ++a)
      spec.segments.push_back({a * per_agent, per_agent, a * per_agent, per_agent});

    ad::Var x = tokens;
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      ad::AttentionWeights w;
      x = layers_[l](b, x, spec, b.tape().recording() ? cfg_.dropout : 0.0, rng, &w);
      if (!x.value().allFinite())
        throw NumericError("pose encoder produced non-finite activations in layer " + std::to_string(l));
      out.attention.push_back(std::move(w));
    }
    out.tokens = x;

    std::vector<ad::RowPool> pools(static_cast<std::size_t>(batch.agents));
    for (int a = 0; a < batch.agents; ++a) {
      std::vector<ad::Index> valid;
      for (int k = 0; k < per_agent; ++k)
        if ((*out.token_valid)[static_cast<std::size_t>(a * per_agent + k)]) valid.push_back(a * per_agent + k);
      if (valid.empty()) continue;
      if (cfg_.pooling == TokenPooling::LastToken) {
        pools[static_cast<std::size_t>(a)].push_back({valid.back(), 1.0});
      } else {
        const double w = 1.0 / static_cast<double>(valid.size());
        for (auto r : valid) pools[static_cast<std::size_t>(a)].push_back({r, w});
      }
    }
    out.h_pose = ad::pool_rows(x, std::move(pools));
    return out;
  }

  template <typename Rng>
  PoseLatent operator()(nn::Binder& b, ad::Var coords, const PoseBatch& batch, Rng& rng) const {
    return encode(b, embed(b, coords, batch), batch, rng);
  }

  std::vector<char> token_validity(const PoseBatch& batch) const {
    std::vector<char> valid;
    if (cfg_.tokenization == Tokenization::PerFrameJoint) return batch.mask;
    for (int a = 0; a < batch.agents; ++a)
      for (int f = 0; f < batch.frames; ++f) {
        char any = 0;
        for (int j = 0; j < batch.joints; ++j) any = static_cast<char>(any | (batch.joint_valid(a, f, j) ? 1 : 0));
        valid.push_back(any);
      }
    return valid;
  }

 private:
  void check_batch(const PoseBatch& batch) const {
    if (batch.dims != cfg_.pose_dims)
      throw ConfigError("pose data has " + std::to_string(batch.dims) + " dims but the encoder expects " +
                        std::to_string(cfg_.pose_dims));
    if (batch.joints != static_cast<int>(cfg_.active_joints().size()))
      throw DataError("pose batch joint count differs from the encoder configuration");
  }

  static ad::Var reshape_joint_rows(ad::Var coords, const PoseBatch& batch) {
    ad::Tape& t = *coords.tape;
    const int rows = batch.agents * batch.frames * batch.joints;
    const int dims = batch.dims;
    Matrix out(rows, dims);
    const Matrix& c = coords.value();
    for (int r = 0; r < batch.agents * batch.frames; ++r)
      for (int j = 0; j < batch.joints; ++j) out.row(r * batch.joints + j) = c.block(r, j * dims, 1, dims);
    return t.push(std::move(out), t.needs_grad(coords.id), [coords, batch_rows = batch.agents * batch.frames,
                                                            joints = batch.joints, dims](ad::Tape& t, std::size_t self) {
      const Matrix& g = t.grad(self);
      Matrix gc(batch_rows, joints * dims);
      for (int r = 0; r < batch_rows; ++r)
        for (int j = 0; j < joints; ++j) gc.block(r, j * dims, 1, dims) = g.row(r * joints + j);
      t.accumulate(coords.id, gc);
    });
  }

  PoseEncoderConfig cfg_;
  nn::Linear embed_;
  std::size_t joint_embedding_ = 0;
  std::vector<nn::TransformerLayer> layers_;
};

/// Embedding-wise fusion: H = H_pose (+) H_traj, column concatenation per agent.
inline ad::Var fuse(ad::Var h_pose, ad::Var h_traj) { return ad::concat_cols({h_pose, h_traj}); }

/// Alternative fusion: each agent's trajectory latent queries its pose tokens.
/// Output is the attention mixture of value-projected pose tokens, concatenated
/// with the trajectory latent.
class CrossAttentionFusion {
 public:
  CrossAttentionFusion() = default;
  CrossAttentionFusion(ad::ParameterStore& store, Eigen::Index traj_dim, Eigen::Index pose_dim, int heads,
                       std::mt19937_64& rng)
      : heads_(heads),
        q_(store, "fusion.q", traj_dim, pose_dim, rng, false),
        k_(store, "fusion.k", pose_dim, pose_dim, rng, false),
        v_(store, "fusion.v", pose_dim, pose_dim, rng, false) {}

  /// pose_tokens has tokens_per_agent rows per agent; h_traj has one row per agent.
  ad::Var attend(nn::Binder& b, ad::Var pose_tokens, int tokens_per_agent, ad::Var h_traj,
                 std::shared_ptr<const std::vector<char>> token_valid = nullptr,
                 ad::AttentionWeights* weights = nullptr) const {
    ad::AttentionSpec spec;
    spec.heads = heads_;
    spec.key_valid = std::move(token_valid);
    for (Eigen::Index a = 0; a < h_traj.rows(); ++a)
      spec.segments.push_back({a, 1, a * tokens_per_agent, tokens_per_agent});
    return ad::attention(q_(b, h_traj), k_(b, pose_tokens), v_(b, pose_tokens), spec, weights);
  }

  ad::Var operator()(nn::Binder& b, ad::Var pose_tokens, int tokens_per_agent, ad::Var h_traj,
                     std::shared_ptr<const std::vector<char>> token_valid = nullptr) const {
    return ad::concat_cols({attend(b, pose_tokens, tokens_per_agent, h_traj, std::move(token_valid)), h_traj});
  }

  const nn::Linear& value() const { return v_; }

 private:
  int heads_ = 1;
  nn::Linear q_, k_, v_;
};

}  // namespace posetraj

#endif  // POSETRAJ_POSE_ENCODER_HPP
