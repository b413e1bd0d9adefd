#ifndef POSETRAJ_BACKBONES_HPP
#define POSETRAJ_BACKBONES_HPP

// Trajectory prediction backbones. Every family follows the same pipeline:
//
//   per-agent trajectory latent  -- encode_trajectory (recurrent | attention | mlp)
//   optional pose latent, fused   -- PoseEncoder + fuse (concatenation)
//   social context per primary    -- interact (none | distance-pool | spatial-attention)
//   autoregressive displacements  -- decode, accumulated onto the last position
//
// Inputs are per-step displacements and relative distances only, so a global
// translation of the scene translates the prediction by the same vector.

#include "posetraj/autodiff/ops.hpp"
#include "posetraj/errors.hpp"
#include "posetraj/nn/layers.hpp"
#include "posetraj/pose_encoder.hpp"
#include "posetraj/scene.hpp"

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace posetraj {

enum class Family { Recurrent, Attention, Mlp };
enum class InteractionKind { None, DistancePool, SpatialAttention };
enum class FusionKind { Concat, CrossAttention };
enum class LossSpace { Position, Displacement };

inline std::string_view to_string(Family f) {
  switch (f) {
    case Family::Recurrent:
      return "recurrent";
    case Family::Attention:
      return "attention";
    case Family::Mlp:
      return "mlp";
  }
  return "attention";
}

inline std::string_view to_string(InteractionKind k) {
  switch (k) {
    case InteractionKind::None:
      return "none";
    case InteractionKind::DistancePool:
      return "distance-pool";
    case InteractionKind::SpatialAttention:
      return "spatial-attention";
  }
  return "none";
}

inline Family family_from_string(std::string_view s) {
  if (s == "recurrent") return Family::Recurrent;
  if (s == "attention") return Family::Attention;
  if (s == "mlp") return Family::Mlp;
  throw ConfigError("backbone.family must be recurrent, attention or mlp (got '" + std::string(s) + "')");
}

inline InteractionKind interaction_from_string(std::string_view s) {
  if (s == "none") return InteractionKind::None;
  if (s == "distance-pool") return InteractionKind::DistancePool;
  if (s == "spatial-attention") return InteractionKind::SpatialAttention;
  throw ConfigError("backbone.interaction must be none, distance-pool or spatial-attention (got '" + std::string(s) +
                    "')");
}

/// Default interaction module of each family.
inline InteractionKind default_interaction(Family f) {
  return f == Family::Attention ? InteractionKind::SpatialAttention : InteractionKind::DistancePool;
}

struct BackboneConfig {
  Family family = Family::Attention;
  int traj_embed_dim = 64;
  int hidden_dim = 128;
  InteractionKind interaction = InteractionKind::SpatialAttention;
  /// Interaction width without pose; doubled when the pose encoder is enabled.
  int interaction_dim = 256;
  /// Transformer depth and heads of the attention family (encoder and decoder).
  int layers = 2;
  int heads = 16;
  int t_obs = 9;
  int t_pred = 12;
  int k_samples = 1;
  /// Length scale of the distance-pool kernel exp(-d / sigma), meters.
  double pool_sigma = 2.0;
  int noise_dim = 16;
  double noise_scale = 1.0;
  /// Feed ground-truth previous displacements to the decoder during training.
  bool teacher_forcing = false;

  void check() const {
    if (t_obs < 2) throw ConfigError("backbone.t_obs must be >= 2 (no displacement defined)");
    if (t_pred < 1) throw ConfigError("backbone.t_pred must be >= 1");
    if (hidden_dim < 1 || traj_embed_dim < 1 || interaction_dim < 1) throw ConfigError("backbone dims must be >= 1");
    if (k_samples < 1) throw ConfigError("backbone.k_samples must be >= 1");
    if (heads < 1 || hidden_dim % heads != 0) throw ConfigError("backbone.hidden_dim must be divisible by heads");
    if (layers < 1) throw ConfigError("backbone.layers must be >= 1");
    if (!(pool_sigma > 0.0)) throw ConfigError("backbone.pool_sigma must be positive");
    if (noise_dim < 0) throw ConfigError("backbone.noise_dim must be >= 0");
  }
};

struct ModelConfig {
  BackboneConfig backbone;
  bool use_pose = false;
  PoseEncoderConfig pose;
  FusionKind fusion = FusionKind::Concat;
  std::uint64_t seed = 0;

  int interaction_dim() const { return use_pose ? 2 * backbone.interaction_dim : backbone.interaction_dim; }
  int fused_dim() const { return backbone.hidden_dim + (use_pose ? pose.dim : 0); }
};

/// Model inputs for a set of scenes. Encoded agents are the primary followed by
/// every neighbor observed in all t_obs frames; agent rows are scene-major.
struct SceneBatch {
  int scenes = 0;
  int t_obs = 0;
  int t_pred = 0;
  std::vector<int> agent_begin;
  std::vector<int> agent_count;
  /// Last observed position per agent.
  std::vector<Vec2> last_position;
  /// agents x 2(t_obs-1): per-step displacements (dx1, dy1, dx2, dy2, ...).
  Matrix displacements;
  bool has_pose = false;
  PoseBatch pose;
  /// Primary ground-truth futures, scene-major rows (scene * t_pred + step); empty if unknown.
  Matrix future;

  int agents() const { return static_cast<int>(last_position.size()); }
};

/// Displacement of the primary over the last observed step of every scene (S x 2).
inline Matrix last_displacement(const SceneBatch& b) {
  Matrix out(b.scenes, 2);
  const auto c = static_cast<Eigen::Index>(2 * (b.t_obs - 2));
  for (int s = 0; s < b.scenes; ++s) out.row(s) = b.displacements.block(b.agent_begin[static_cast<std::size_t>(s)], c, 1, 2);
  return out;
}

class Model {
 public:
  explicit Model(const ModelConfig& cfg) : cfg_(cfg) {
    cfg_.backbone.check();
    if (cfg_.use_pose) cfg_.pose.check();
    std::mt19937_64 rng(cfg_.seed);
    const auto& bb = cfg_.backbone;
    const int H = bb.hidden_dim;
    const int E = bb.traj_embed_dim;
    const int steps = bb.t_obs - 1;

    switch (bb.family) {
      case Family::Recurrent:
        enc_embed_ = nn::Linear(store_, "encoder.embed", 2, E, rng);
        enc_lstm_ = nn::LstmCell(store_, "encoder.lstm", E, H, rng);
        break;
      case Family::Attention:
        enc_embed_ = nn::Linear(store_, "encoder.embed", 2, H, rng);
        for (int l = 0; l < bb.layers; ++l)
          enc_layers_.emplace_back(store_, "encoder.layer" + std::to_string(l), H, bb.heads, 2 * H, rng);
        break;
      case Family::Mlp:
        enc_mlp_ = nn::Mlp(store_, "encoder.mlp", {2 * steps, H, H, H}, rng);
        break;
    }

    if (cfg_.use_pose) {
      pose_ = PoseEncoder(store_, cfg_.pose, rng);
      if (cfg_.fusion == FusionKind::CrossAttention)
        cross_ = CrossAttentionFusion(store_, H, cfg_.pose.dim, cfg_.pose.heads, rng);
    }

    const int F = cfg_.fused_dim();
    const int I = cfg_.interaction_dim();
    switch (bb.interaction) {
      case InteractionKind::None:
        break;
      case InteractionKind::DistancePool:
        pool_proj_ = nn::Linear(store_, "interaction.pool", F, I, rng, false);
        break;
      case InteractionKind::SpatialAttention: {
        if (I % bb.heads != 0) throw ConfigError("interaction dim must be divisible by backbone.heads");
        spatial_ = nn::MultiHeadAttention(store_, "interaction.attn", F, F, I, bb.heads, rng);
        break;
      }
    }

    const int Z = latent_dim();
    switch (bb.family) {
      case Family::Recurrent:
        dec_init_ = nn::Linear(store_, "decoder.init", Z, H, rng);
        dec_embed_ = nn::Linear(store_, "decoder.embed", 2, E, rng);
        dec_lstm_ = nn::LstmCell(store_, "decoder.lstm", E + Z, H, rng);
        dec_out_ = nn::Linear(store_, "decoder.out", H, 2, rng);
        break;
      case Family::Attention:
        dec_embed_ = nn::Linear(store_, "decoder.embed", 2, H, rng);
        dec_init_ = nn::Linear(store_, "decoder.latent", Z, H, rng);
        for (int l = 0; l < bb.layers; ++l)
          dec_layers_.emplace_back(store_, "decoder.layer" + std::to_string(l), H, bb.heads, 2 * H, rng);
        dec_out_ = nn::Linear(store_, "decoder.out", H, 2, rng);
        break;
      case Family::Mlp:
        dec_mlp_ = nn::Mlp(store_, "decoder.mlp", {Z + 2 + bb.t_pred, H, H}, rng);
        dec_out_ = nn::Linear(store_, "decoder.out", H, 2, rng);
        break;
    }
  }

  const ModelConfig& config() const { return cfg_; }
  ad::ParameterStore& parameters() { return store_; }
  const ad::ParameterStore& parameters() const { return store_; }
  std::size_t parameter_count() const { return store_.scalar_count(); }
  const PoseEncoder& pose_encoder() const { return pose_; }

  /// Width of the decoder conditioning vector [H_primary, context, noise].
  int latent_dim() const { return cfg_.fused_dim() + cfg_.interaction_dim() + cfg_.backbone.noise_dim; }

  /// Builds model inputs; throws ConfigError on window or pose-dims mismatch.
  SceneBatch make_batch(std::span<const Scene* const> scenes, bool with_future = true) const {
    const auto& bb = cfg_.backbone;
    SceneBatch b;
    b.scenes = static_cast<int>(scenes.size());
    b.t_obs = bb.t_obs;
    b.t_pred = bb.t_pred;
    b.has_pose = cfg_.use_pose;
    const std::vector<int> joints = cfg_.use_pose ? cfg_.pose.active_joints() : std::vector<int>{};

    std::vector<const AgentTrack*> tracks;
    for (const Scene* s : scenes) {
      if (s->t_obs != bb.t_obs || s->t_pred != bb.t_pred)
        throw ConfigError("scene window " + std::to_string(s->t_obs) + "/" + std::to_string(s->t_pred) +
                          " differs from model window " + std::to_string(bb.t_obs) + "/" + std::to_string(bb.t_pred));
      if (cfg_.use_pose && s->pose_dims != cfg_.pose.pose_dims)
        throw ConfigError("model expects " + std::to_string(cfg_.pose.pose_dims) + "D pose but the scene has pose_dims " +
                          std::to_string(s->pose_dims));
      b.agent_begin.push_back(static_cast<int>(tracks.size()));
      const auto obs = static_cast<std::size_t>(bb.t_obs);
      if (!s->primary_track().fully_present(0, obs)) throw DataError("primary agent is not fully observed");
      tracks.push_back(&s->primary_track());
      for (std::size_t a = 0; a < s->agents.size(); ++a)
        if (a != s->primary && s->agents[a].fully_present(0, obs)) tracks.push_back(&s->agents[a]);
      b.agent_count.push_back(static_cast<int>(tracks.size()) - b.agent_begin.back());
    }

    const int steps = bb.t_obs - 1;
    b.displacements.resize(static_cast<Eigen::Index>(tracks.size()), 2 * steps);
    if (cfg_.use_pose) {
      b.pose.coords.resize(static_cast<Eigen::Index>(tracks.size()) * bb.t_obs,
                           static_cast<Eigen::Index>(joints.size()) * cfg_.pose.pose_dims);
      b.pose.mask.reserve(tracks.size() * static_cast<std::size_t>(bb.t_obs) * joints.size());
      b.pose.frames = bb.t_obs;
      b.pose.joints = static_cast<int>(joints.size());
      b.pose.dims = cfg_.pose.pose_dims;
    }
    for (std::size_t r = 0; r < tracks.size(); ++r) {
      const auto& p = tracks[r]->positions;
      for (int k = 0; k < steps; ++k) {
        const Vec2 d = p[static_cast<std::size_t>(k + 1)] - p[static_cast<std::size_t>(k)];
        b.displacements(static_cast<Eigen::Index>(r), 2 * k) = d.x();
        b.displacements(static_cast<Eigen::Index>(r), 2 * k + 1) = d.y();
      }
      b.last_position.push_back(p[static_cast<std::size_t>(steps)]);
      if (cfg_.use_pose) fill_pose(b.pose, static_cast<int>(r), *tracks[r], joints);
    }
    if (cfg_.use_pose) b.pose.agents = static_cast<int>(tracks.size());

    if (with_future) {
      b.future.resize(static_cast<Eigen::Index>(b.scenes) * bb.t_pred, 2);
      for (int s = 0; s < b.scenes; ++s) {
        const auto& prim = scenes[static_cast<std::size_t>(s)]->primary_track();
        for (int k = 0; k < bb.t_pred; ++k) {
          const Vec2& f = prim.positions[static_cast<std::size_t>(bb.t_obs + k)];
          b.future.row(s * bb.t_pred + k) << f.x(), f.y();
        }
      }
    }
    return b;
  }

  /// Trajectory latent per agent (agents x hidden_dim).
  template <typename Rng>
  ad::Var encode_trajectory(nn::Binder& b, const SceneBatch& batch, Rng& rng) const {
    ad::Tape& t = b.tape();
    const auto& bb = cfg_.backbone;
    const int steps = bb.t_obs - 1;
    const int A = batch.agents();
    switch (bb.family) {
      case Family::Recurrent: {
        auto state = enc_lstm_.zero_state(t, A);
        for (int k = 0; k < steps; ++k) {
          ad::Var x = t.constant(batch.displacements.middleCols(2 * k, 2));
          state = enc_lstm_.step(b, ad::relu(enc_embed_(b, x)), state);
        }
        return state.h;
      }
      case Family::Attention: {
        Matrix tokens(A * steps, 2);
        Matrix pe(A * steps, bb.hidden_dim);
        std::vector<ad::RowPool> pools(static_cast<std::size_t>(A));
        for (int a = 0; a < A; ++a)
          for (int k = 0; k < steps; ++k) {
            tokens.row(a * steps + k) = batch.displacements.block(a, 2 * k, 1, 2);
            pe.row(a * steps + k) = positional_encoding(k + 1, bb.hidden_dim);
            pools[static_cast<std::size_t>(a)].push_back({a * steps + k, 1.0 / steps});
          }
        ad::Var x = ad::add(enc_embed_(b, t.constant(std::move(tokens))), t.constant(std::move(pe)));
        ad::AttentionSpec spec;
        for (int a = 0; a < A; ++a) spec.segments.push_back({a * steps, steps, a * steps, steps});
        for (const auto& layer : enc_layers_) x = layer(b, x, spec, 0.0, rng);
        return ad::pool_rows(x, std::move(pools));
      }
      case Family::Mlp:
        return enc_mlp_(b, t.constant(batch.displacements));
    }
    throw ConfigError("unknown backbone family");
  }

  /// Per-agent latents H_i: fused pose and trajectory latents when pose is on.
  /// `pose_coords` overrides the batch pose coordinates (used for input gradients).
  template <typename Rng>
  ad::Var agent_latents(nn::Binder& b, const SceneBatch& batch, Rng& rng, ad::Var* pose_coords = nullptr,
                        PoseLatent* pose_out = nullptr) const {
    ad::Var h_traj = encode_trajectory(b, batch, rng);
    if (!cfg_.use_pose) return h_traj;
    ad::Var coords = pose_coords != nullptr ? *pose_coords : b.tape().constant(batch.pose.coords);
    PoseLatent latent = pose_(b, coords, batch.pose, rng);
    ad::Var fused = cfg_.fusion == FusionKind::CrossAttention
                        ? cross_(b, latent.tokens, latent.tokens_per_agent, h_traj, latent.token_valid)
                        : fuse(latent.h_pose, h_traj);
    if (pose_out != nullptr) *pose_out = std::move(latent);
    return fused;
  }

  /// Distance-pool weights exp(-d / sigma) of each scene's neighbors around its primary.
  std::vector<ad::RowPool> pooling_weights(const SceneBatch& batch) const {
    std::vector<ad::RowPool> pools(static_cast<std::size_t>(batch.scenes));
    for (int s = 0; s < batch.scenes; ++s) {
      const int p = batch.agent_begin[static_cast<std::size_t>(s)];
      for (int a = p + 1; a < p + batch.agent_count[static_cast<std::size_t>(s)]; ++a) {
        const double d = (batch.last_position[static_cast<std::size_t>(a)] -
                          batch.last_position[static_cast<std::size_t>(p)])
                             .norm();
        pools[static_cast<std::size_t>(s)].push_back({a, std::exp(-d / cfg_.backbone.pool_sigma)});
      }
    }
    return pools;
  }

  /// Social context per scene (scenes x interaction_dim).
  ad::Var interact(nn::Binder& b, ad::Var latents, const SceneBatch& batch) const {
    ad::Tape& t = b.tape();
    const int I = cfg_.interaction_dim();
    switch (cfg_.backbone.interaction) {
      case InteractionKind::None:
        return t.constant(Matrix::Zero(batch.scenes, I));
      case InteractionKind::DistancePool:
        return pool_proj_(b, ad::pool_rows(latents, pooling_weights(batch)));
      case InteractionKind::SpatialAttention: {
        std::vector<ad::Index> primaries(batch.agent_begin.begin(), batch.agent_begin.end());
        ad::Var query = ad::gather_rows(latents, primaries);
        ad::AttentionSpec spec;
        for (int s = 0; s < batch.scenes; ++s)
          spec.segments.push_back({s, 1, batch.agent_begin[static_cast<std::size_t>(s)],
                                   batch.agent_count[static_cast<std::size_t>(s)]});
        return spatial_(b, query, latents, spec);
      }
    }
    throw ConfigError("unknown interaction kind");
  }

  /// Decoder conditioning [H_primary, context, noise] (scenes x latent_dim).
  ad::Var conditioning(nn::Binder& b, ad::Var latents, ad::Var context, const SceneBatch& batch,
                       const Matrix& noise) const {
    std::vector<ad::Index> primaries(batch.agent_begin.begin(), batch.agent_begin.end());
    std::vector<ad::Var> parts = {ad::gather_rows(latents, primaries), context};
    if (cfg_.backbone.noise_dim > 0) parts.push_back(b.tape().constant(noise));
    return ad::concat_cols(parts);
  }

  /// Autoregressive decoding of t_pred displacements, accumulated onto the
  /// primary's last position. With teacher forcing the decoder input at step k
  /// is the ground-truth displacement k-1. Returns positions, scene-major rows.
  template <typename Rng>
  ad::Var decode(nn::Binder& b, ad::Var z, const SceneBatch& batch, bool teacher, Rng& rng) const {
    ad::Tape& t = b.tape();
    const auto& bb = cfg_.backbone;
    const int S = batch.scenes;
    const int T = bb.t_pred;
    if (!z.value().allFinite()) throw NumericError("decoder conditioning is non-finite");
    if (teacher && batch.future.rows() != static_cast<Eigen::Index>(S) * T)
      throw DataError("teacher forcing requires ground-truth futures");

    // Step inputs: previous displacement of the primary (S x 2 each).
    auto teacher_input = [&](int k) -> ad::Var {
      if (k == 0) return t.constant(last_displacement(batch));
      Matrix d(S, 2);
      for (int s = 0; s < S; ++s) {
        const Eigen::RowVector2d prev = k == 1 ? Eigen::RowVector2d(batch.last_position[static_cast<std::size_t>(
                                                                        batch.agent_begin[static_cast<std::size_t>(s)])]
                                                                        .transpose())
                                                : Eigen::RowVector2d(batch.future.row(s * T + k - 2));
        d.row(s) = batch.future.row(s * T + k - 1) - prev;
      }
      return t.constant(std::move(d));
    };

    std::vector<ad::Var> outputs;  // per step, S x 2
    switch (bb.family) {
      case Family::Recurrent: {
        nn::LstmCell::State state{ad::tanh(dec_init_(b, z)), t.constant(Matrix::Zero(S, bb.hidden_dim))};
        ad::Var prev = teacher_input(0);
        for (int k = 0; k < T; ++k) {
          if (k > 0) prev = teacher ? teacher_input(k) : outputs.back();
          ad::Var x = ad::concat_cols({ad::relu(dec_embed_(b, prev)), z});
          state = dec_lstm_.step(b, x, state);
          outputs.push_back(dec_out_(b, state.h));
        }
        break;
      }
      case Family::Mlp: {
        ad::Var prev = teacher_input(0);
        for (int k = 0; k < T; ++k) {
          if (k > 0) prev = teacher ? teacher_input(k) : outputs.back();
          Matrix step = Matrix::Zero(S, T);
          step.col(k).setOnes();
          ad::Var x = ad::concat_cols({z, prev, t.constant(std::move(step))});
          outputs.push_back(dec_out_(b, ad::relu(dec_mlp_(b, x))));
        }
        break;
      }
      case Family::Attention: {
        ad::Var latent = dec_init_(b, z);
        std::vector<ad::Var> inputs = {teacher_input(0)};
        if (teacher) {
          for (int k = 1; k < T; ++k) inputs.push_back(teacher_input(k));
          ad::Var y = attention_decoder(b, latent, inputs, S, rng);
          for (int k = 0; k < T; ++k) outputs.push_back(step_rows(y, S, T, k));
        } else {
          for (int k = 0; k < T; ++k) {
            if (k > 0) inputs.push_back(outputs.back());
            ad::Var y = attention_decoder(b, latent, inputs, S, rng);
            outputs.push_back(step_rows(y, S, k + 1, k));
          }
        }
        break;
      }
    }

    // Scene-major displacement rows, then cumulative sum plus last position.
    ad::Var disp_step_major = ad::concat_rows(outputs);
    std::vector<ad::RowPool> cumsum(static_cast<std::size_t>(S * T));
    Matrix origin(S * T, 2);
    for (int s = 0; s < S; ++s) {
      const Vec2& last = batch.last_position[static_cast<std::size_t>(batch.agent_begin[static_cast<std::size_t>(s)])];
      for (int k = 0; k < T; ++k) {
        auto& pool = cumsum[static_cast<std::size_t>(s * T + k)];
        for (int j = 0; j <= k; ++j) pool.push_back({j * S + s, 1.0});
        origin.row(s * T + k) << last.x(), last.y();
      }
    }
    return ad::add(ad::pool_rows(disp_step_major, std::move(cumsum)), t.constant(std::move(origin)));
  }

  /// Training loss: mean squared error of the primaries' future positions, or
  /// of their per-step displacements with LossSpace::Displacement.
  template <typename Rng>
  ad::Var training_loss(nn::Binder& b, const SceneBatch& batch, Rng& rng, ad::Var* pose_coords = nullptr,
                        LossSpace space = LossSpace::Position) const {
    ad::Var latents = agent_latents(b, batch, rng, pose_coords);
    ad::Var context = interact(b, latents, batch);
    const Matrix noise = Matrix::Zero(batch.scenes, cfg_.backbone.noise_dim);
    ad::Var z = conditioning(b, latents, context, batch, noise);
    ad::Var positions = decode(b, z, batch, cfg_.backbone.teacher_forcing, rng);
    if (space == LossSpace::Position) return ad::mean_squared_distance(positions, batch.future);

    const int T = batch.t_pred;
    std::vector<ad::RowPool> diff(static_cast<std::size_t>(batch.scenes * T));
    Matrix target(batch.scenes * T, 2);
    for (int s = 0; s < batch.scenes; ++s) {
      const Vec2& last = batch.last_position[static_cast<std::size_t>(batch.agent_begin[static_cast<std::size_t>(s)])];
      for (int k = 0; k < T; ++k) {
        auto& pool = diff[static_cast<std::size_t>(s * T + k)];
        pool.push_back({s * T + k, 1.0});
        if (k > 0) {
          pool.push_back({s * T + k - 1, -1.0});
          target.row(s * T + k) = batch.future.row(s * T + k) - batch.future.row(s * T + k - 1);
        } else {
          target.row(s * T) = batch.future.row(s * T) - Eigen::RowVector2d(last.transpose());
        }
      }
    }
    // The first step's origin is the constant last position, which drops out of the gradient.
    Matrix origin = Matrix::Zero(batch.scenes * T, 2);
    for (int s = 0; s < batch.scenes; ++s) {
      const Vec2& last = batch.last_position[static_cast<std::size_t>(batch.agent_begin[static_cast<std::size_t>(s)])];
      origin.row(s * T) << last.x(), last.y();
    }
    ad::Var disp = ad::sub(ad::pool_rows(positions, std::move(diff)), b.tape().constant(std::move(origin)));
    return ad::mean_squared_distance(disp, target);
  }

  /// k sampled futures per scene (each t_pred x 2, world frame). Sample 0 uses
  /// zero decoder noise; samples 1..k-1 draw noise from a stream seeded by `seed`.
  std::vector<std::vector<Matrix>> predict(std::span<const Scene* const> scenes, int k, std::uint64_t seed = 0) const {
    if (k < 1) throw ConfigError("k must be >= 1");
    const SceneBatch batch = make_batch(scenes, false);
    return predict_batch(batch, k, seed);
  }

  std::vector<std::vector<Matrix>> predict_batch(const SceneBatch& batch, int k, std::uint64_t seed = 0) const {
    ad::Tape tape(false);
    nn::Binder b(tape, store_);
    std::mt19937_64 rng(seed);
    ad::Var latents = agent_latents(b, batch, rng);
    ad::Var context = interact(b, latents, batch);
    std::normal_distribution<double> normal(0.0, 1.0);
    const int S = batch.scenes;
    const int T = cfg_.backbone.t_pred;
    std::vector<std::vector<Matrix>> out(static_cast<std::size_t>(S));
    for (int sample = 0; sample < k; ++sample) {
      Matrix noise = Matrix::Zero(S, cfg_.backbone.noise_dim);
      if (sample > 0)
        for (Eigen::Index i = 0; i < noise.size(); ++i) noise.data()[i] = cfg_.backbone.noise_scale * normal(rng);
      ad::Var z = conditioning(b, latents, context, batch, noise);
      const Matrix pos = decode(b, z, batch, false, rng).value();
      if (!pos.allFinite()) throw NumericError("prediction is non-finite");
      for (int s = 0; s < S; ++s) out[static_cast<std::size_t>(s)].push_back(pos.middleRows(s * T, T));
    }
    return out;
  }

  /// Pose encoding of a batch with attention weights, for analysis.
  PoseLatent pose_latent(const SceneBatch& batch) const {
    if (!cfg_.use_pose) throw ConfigError("model has no pose encoder");
    ad::Tape tape(false);
    nn::Binder b(tape, store_);
    std::mt19937_64 rng(0);
    PoseLatent latent = pose_(b, tape.constant(batch.pose.coords), batch.pose, rng);
    // Detach values from the local tape.
    latent.h_pose = {};
    latent.tokens = {};
    return latent;
  }

  /// Pose latent values (agents x dim).
  Matrix pose_embedding(const SceneBatch& batch) const {
    if (!cfg_.use_pose) throw ConfigError("model has no pose encoder");
    ad::Tape tape(false);
    nn::Binder b(tape, store_);
    std::mt19937_64 rng(0);
    return pose_(b, tape.constant(batch.pose.coords), batch.pose, rng).h_pose.value();
  }

 private:
  static void fill_pose(PoseBatch& pb, int agent, const AgentTrack& track, const std::vector<int>& joints) {
    const int frames = pb.frames;
    const int dims = pb.dims;
    if (static_cast<int>(track.poses.size()) < frames) throw DataError("agent '" + track.id + "' lacks pose frames");
    for (int f = 0; f < frames; ++f) {
      const PoseFrame& pf = track.poses[static_cast<std::size_t>(f)];
      if (pf.dims() != dims) throw ConfigError("pose dims of the data do not match the encoder");
      for (std::size_t k = 0; k < joints.size(); ++k) {
        const int j = joints[k];
        if (j >= pf.joint_count()) throw DataError("pose frame has fewer joints than the encoder expects");
        const bool valid = pf.mask[static_cast<std::size_t>(j)];
        pb.mask.push_back(valid ? 1 : 0);
        for (int c = 0; c < dims; ++c)
          pb.coords(agent * frames + f, static_cast<Eigen::Index>(k) * dims + c) = valid ? pf.joints(j, c) : 0.0;
      }
    }
  }

  /// Rows of step k from a scene-major (scene * len + step) matrix.
  static ad::Var step_rows(ad::Var y, int scenes, int len, int k) {
    std::vector<ad::Index> idx;
    for (int s = 0; s < scenes; ++s) idx.push_back(s * len + k);
    return ad::gather_rows(y, std::move(idx));
  }

  /// Causal transformer decoder over the step inputs so far; returns S*L x 2
  /// displacement rows, scene-major.
  template <typename Rng>
  ad::Var attention_decoder(nn::Binder& b, ad::Var latent, const std::vector<ad::Var>& inputs, int S,
                            Rng& rng) const {
    ad::Tape& t = b.tape();
    const int L = static_cast<int>(inputs.size());
    const int H = cfg_.backbone.hidden_dim;
    ad::Var step_major = ad::concat_rows(inputs);
    std::vector<ad::Index> to_scene_major;
    std::vector<ad::Index> latent_rows;
    Matrix pe(S * L, H);
    for (int s = 0; s < S; ++s)
      for (int k = 0; k < L; ++k) {
        to_scene_major.push_back(k * S + s);
        latent_rows.push_back(s);
        pe.row(s * L + k) = positional_encoding(k + 1, H);
      }
    ad::Var x = dec_embed_(b, ad::gather_rows(step_major, std::move(to_scene_major)));
    x = ad::add(ad::add(x, t.constant(std::move(pe))), ad::gather_rows(latent, std::move(latent_rows)));
    ad::AttentionSpec spec;
    spec.causal = true;
    for (int s = 0; s < S; ++s) spec.segments.push_back({s * L, L, s * L, L});
    for (const auto& layer : dec_layers_) x = layer(b, x, spec, 0.0, rng);
    return dec_out_(b, x);
  }

  ModelConfig cfg_;
  ad::ParameterStore store_;

  nn::Linear enc_embed_;
  nn::LstmCell enc_lstm_;
  std::vector<nn::TransformerLayer> enc_layers_;
  nn::Mlp enc_mlp_;

  PoseEncoder pose_;
  CrossAttentionFusion cross_;

  nn::Linear pool_proj_;
  nn::MultiHeadAttention spatial_;

  nn::Linear dec_init_;
  nn::Linear dec_embed_;
  nn::LstmCell dec_lstm_;
  std::vector<nn::TransformerLayer> dec_layers_;
  nn::Mlp dec_mlp_;
  nn::Linear dec_out_;
};

}  // namespace posetraj

#endif  // POSETRAJ_BACKBONES_HPP
