#include <gtest/gtest.h>

#include "posetraj/pose_encoder.hpp"

#include <cmath>
#include <random>

using namespace posetraj;
using ad::Tape;
using ad::Var;

namespace {

AgentTrack random_track(int frames, int joints, int dims, std::mt19937_64& rng, double mask_rate = 0.0) {
  std::normal_distribution<double> n(0.0, 0.3);
  std::bernoulli_distribution drop(mask_rate);
  AgentTrack a;
  a.id = "a";
  for (int f = 0; f < frames; ++f) {
    a.positions.emplace_back(0.0, 0.0);
    a.present.push_back(true);
    PoseFrame pf;
    pf.joints = Matrix(joints, dims);
    for (Eigen::Index i = 0; i < pf.joints.size(); ++i) pf.joints.data()[i] = n(rng);
    pf.mask.assign(static_cast<std::size_t>(joints), true);
    for (int j = 0; j < joints; ++j)
      if (drop(rng)) pf.mask[static_cast<std::size_t>(j)] = false;
    pf.apply_mask();
    a.poses.push_back(pf);
  }
  return a;
}

PoseBatch make_pose_batch(const std::vector<AgentTrack>& tracks, int frames, const PoseEncoderConfig& cfg) {
  PoseBatch b;
  b.coords.resize(0, static_cast<Eigen::Index>(cfg.active_joints().size()) * cfg.pose_dims);
  for (const auto& t : tracks) append_pose(b, t, frames, cfg.active_joints(), cfg.pose_dims);
  return b;
}

PoseEncoderConfig tiny_config(Tokenization tok) {
  PoseEncoderConfig c;
  c.dim = 8;
  c.layers = 1;
  c.heads = 2;
  c.joints = 4;
  c.tokenization = tok;
  return c;
}

// Independent evaluation via exp/log rather than pow.
double pe_oracle(int t, int d, int dim) {
  const double angle = t * std::exp(-(static_cast<double>(d) / dim) * std::log(10000.0));
  return d % 2 == 0 ? std::sin(angle) : std::cos(angle);
}

}  // namespace

TEST(PositionalEncoding, ZeroTimeAlternatesZeroOne) {
  for (int dim : {2, 7, 64}) {
    const auto p = positional_encoding(0, dim);
    for (int d = 0; d < dim; ++d) EXPECT_EQ(p(d), d % 2 == 0 ? 0.0 : 1.0);
  }
}

TEST(PositionalEncoding, FirstEntryAtTimeOneIsSinOne) {
  EXPECT_NEAR(positional_encoding(1, 4)(0), 0.841471, 1e-6);
  EXPECT_DOUBLE_EQ(positional_encoding(1, 4)(0), std::sin(1.0));
}

TEST(PositionalEncoding, MatchesDirectEvaluation) {
  for (int dim : {8, 64, 128})
    for (int t = 1; t <= 9; ++t) {
      const auto p = positional_encoding(t, dim);
      for (int d = 0; d < dim; ++d) {
        EXPECT_NEAR(p(d), pe_oracle(t, d, dim), 1e-12);
        EXPECT_LE(std::abs(p(d)), 1.0);
      }
    }
}

TEST(PoseEncoder, TokenCounts) {
  std::mt19937_64 rng(1);
  PoseEncoderConfig frame_cfg;
  frame_cfg.tokenization = Tokenization::PerFrame;
  frame_cfg.dim = 16;
  frame_cfg.heads = 4;
  PoseEncoderConfig joint_cfg = frame_cfg;
  joint_cfg.tokenization = Tokenization::PerFrameJoint;
  ad::ParameterStore s1, s2;
  const PoseEncoder frame_enc(s1, frame_cfg, rng), joint_enc(s2, joint_cfg, rng);
  const auto track = random_track(9, 17, 3, rng);
  for (const auto* enc : {&frame_enc, &joint_enc}) {
    const auto& store = enc == &frame_enc ? s1 : s2;
    const PoseBatch batch = make_pose_batch({track}, 9, enc->config());
    Tape t(false);
    nn::Binder b(t, store);
    const Var tokens = enc->embed(b, t.constant(batch.coords), batch);
    EXPECT_EQ(tokens.rows(), enc == &frame_enc ? 9 : 153);
    EXPECT_EQ(tokens.cols(), 16);
  }
}

TEST(PoseEncoder, ZeroPoseAndZeroEmbeddingGivesPositionalEncodings) {
  std::mt19937_64 rng(2);
  for (auto tok : {Tokenization::PerFrame, Tokenization::PerFrameJoint}) {
    ad::ParameterStore store;
    const PoseEncoder enc(store, tiny_config(tok), rng);
    store[enc.embedding().weight_index()].value.setZero();
    store[*enc.embedding().bias_index()].value.setZero();
    if (tok == Tokenization::PerFrameJoint) store[enc.joint_embedding_index()].value.setZero();
    AgentTrack track = random_track(3, 4, 3, rng);
    for (auto& f : track.poses) f.joints.setZero();
    const PoseBatch batch = make_pose_batch({track}, 3, enc.config());
    Tape t(false);
    nn::Binder b(t, store);
    const Matrix tokens = enc.embed(b, t.constant(batch.coords), batch).value();
    const int per_frame = tok == Tokenization::PerFrame ? 1 : 4;
    for (Eigen::Index r = 0; r < tokens.rows(); ++r)
      EXPECT_EQ(tokens.row(r), positional_encoding(static_cast<double>(r / per_frame + 1), 8)) << r;
  }
}

TEST(PoseEncoder, EqualTokensGiveUniformAttention) {
  std::mt19937_64 rng(3);
  ad::ParameterStore store;
  const PoseEncoder enc(store, tiny_config(Tokenization::PerFrame), rng);
  const PoseBatch batch = make_pose_batch({random_track(5, 4, 3, rng)}, 5, enc.config());
  Tape t(false);
  nn::Binder b(t, store);
  Var tokens = t.constant(Matrix::Constant(5, 8, 0.7));
  const PoseLatent latent = enc.encode(b, tokens, batch, rng);
  for (const auto& a : latent.attention.front())
    for (Eigen::Index i = 0; i < a.rows(); ++i)
      for (Eigen::Index j = 0; j < a.cols(); ++j) EXPECT_NEAR(a(i, j), 0.2, 1e-15);
}

TEST(PoseEncoder, AttentionRowsSumToOne) {
  std::mt19937_64 rng(4);
  PoseEncoderConfig cfg = tiny_config(Tokenization::PerFrameJoint);
  cfg.layers = 2;
  ad::ParameterStore store;
  const PoseEncoder enc(store, cfg, rng);
  const PoseBatch batch = make_pose_batch({random_track(3, 4, 3, rng, 0.3), random_track(3, 4, 3, rng)}, 3, cfg);
  Tape t(false);
  nn::Binder b(t, store);
  const PoseLatent latent = enc(b, t.constant(batch.coords), batch, rng);
  ASSERT_EQ(latent.attention.size(), 2u);
  for (const auto& layer : latent.attention)
    for (const auto& a : layer)
      for (Eigen::Index i = 0; i < a.rows(); ++i) EXPECT_NEAR(a.row(i).sum(), 1.0, 1e-6);
  EXPECT_TRUE(latent.h_pose.value().allFinite());
  EXPECT_EQ(latent.h_pose.rows(), 2);
}

TEST(PoseEncoder, SingleLayerOnTwoTokensMatchesHandAttention) {
  // D = 2, one head, identity projections, zero feed-forward: out = x + softmax(x x^T / sqrt 2) x.
  std::mt19937_64 rng(5);
  PoseEncoderConfig cfg;
  cfg.dim = 2;
  cfg.heads = 1;
  cfg.layers = 1;
  cfg.joints = 1;
  cfg.tokenization = Tokenization::PerFrame;
  ad::ParameterStore store;
  const PoseEncoder enc(store, cfg, rng);
  const auto& layer = enc.layers().front();
  for (const auto* lin : {&layer.attention().query(), &layer.attention().key(), &layer.attention().value(),
                          &layer.attention().output()})
    store[lin->weight_index()].value = Matrix::Identity(2, 2);
  store[*layer.attention().output().bias_index()].value.setZero();
  for (const auto* lin : {&layer.ff1(), &layer.ff2()}) {
    store[lin->weight_index()].value.setZero();
    store[*lin->bias_index()].value.setZero();
  }
  Matrix x(2, 2);
  x << 1.0, 0.0, 0.5, 2.0;
  const PoseBatch batch = make_pose_batch({random_track(2, 1, 3, rng)}, 2, cfg);
  Tape t(false);
  nn::Binder b(t, store);
  const PoseLatent latent = enc.encode(b, t.constant(x), batch, rng);
  const double s = 1.0 / std::sqrt(2.0);
  // Row 0 scores: (1, 0.5) * s; row 1: (0.5, 4.25) * s.
  const double a00 = 1.0 / (1.0 + std::exp((0.5 - 1.0) * s));
  const double a10 = 1.0 / (1.0 + std::exp((4.25 - 0.5) * s));
  Matrix expected(2, 2);
  expected.row(0) = x.row(0) + a00 * x.row(0) + (1.0 - a00) * x.row(1);
  expected.row(1) = x.row(1) + a10 * x.row(0) + (1.0 - a10) * x.row(1);
  EXPECT_TRUE(latent.tokens.value().isApprox(expected, 1e-14));
  EXPECT_TRUE(latent.h_pose.value().isApprox(0.5 * (expected.row(0) + expected.row(1)), 1e-14));
}

TEST(PoseEncoder, LastTokenPooling) {
  std::mt19937_64 rng(6);
  PoseEncoderConfig cfg = tiny_config(Tokenization::PerFrame);
  cfg.pooling = TokenPooling::LastToken;
  ad::ParameterStore store;
  const PoseEncoder enc(store, cfg, rng);
  const PoseBatch batch = make_pose_batch({random_track(3, 4, 3, rng)}, 3, cfg);
  Tape t(false);
  nn::Binder b(t, store);
  const PoseLatent latent = enc(b, t.constant(batch.coords), batch, rng);
  EXPECT_EQ(latent.h_pose.value().row(0), latent.tokens.value().row(2));
}

TEST(PoseEncoder, MaskedJointValuesDoNotReachTheOutput) {
  std::mt19937_64 rng(7);
  std::normal_distribution<double> garbage(0.0, 50.0);
  for (auto tok : {Tokenization::PerFrame, Tokenization::PerFrameJoint}) {
    ad::ParameterStore store;
    const PoseEncoder enc(store, tiny_config(tok), rng);
    for (int trial = 0; trial < 50; ++trial) {
      const AgentTrack clean = random_track(3, 4, 3, rng, 0.4);
      AgentTrack dirty = clean;
      for (auto& f : dirty.poses)
        for (int j = 0; j < 4; ++j)
          if (!f.mask[static_cast<std::size_t>(j)])
            for (int c = 0; c < 3; ++c) f.joints(j, c) = garbage(rng);
      for (auto& f : dirty.poses) f.apply_mask();
      auto run = [&](const AgentTrack& track) {
        const PoseBatch batch = make_pose_batch({track}, 3, enc.config());
        Tape t(false);
        nn::Binder b(t, store);
        return Matrix(enc(b, t.constant(batch.coords), batch, rng).h_pose.value());
      };
      EXPECT_EQ(run(clean), run(dirty));
    }
  }
}

TEST(PoseEncoder, InputGradientsMatchFiniteDifferences) {
  std::mt19937_64 rng(8);
  for (auto tok : {Tokenization::PerFrame, Tokenization::PerFrameJoint}) {
    ad::ParameterStore store;
    const PoseEncoder enc(store, tiny_config(tok), rng);
    const PoseBatch batch = make_pose_batch({random_track(3, 4, 3, rng)}, 3, enc.config());
    Matrix w(1, 8);
    for (int d = 0; d < 8; ++d) w(0, d) = 0.2 + 0.1 * d;
    auto loss = [&](Tape& t, Var coords) {
      nn::Binder b(t, static_cast<const ad::ParameterStore&>(store));
      const PoseLatent l = enc(b, coords, batch, rng);
      return ad::sum(ad::hadamard(ad::tanh(l.h_pose), t.constant(w)));
    };
    Tape tape;
    Var x = tape.input(batch.coords);
    tape.backward(loss(tape, x));
    const Matrix analytic = tape.grad(x.id);
    const double h = 1e-4;
    for (Eigen::Index i = 0; i < batch.coords.size(); ++i) {
      Matrix xp = batch.coords, xm = batch.coords;
      xp.data()[i] += h;
      xm.data()[i] -= h;
      Tape tp(false), tm(false);
      const double numeric =
          (loss(tp, tp.constant(xp)).value()(0, 0) - loss(tm, tm.constant(xm)).value()(0, 0)) / (2.0 * h);
      const double rel = std::abs(analytic.data()[i] - numeric) / std::max(std::abs(numeric), 1e-6);
      EXPECT_LE(std::min(rel, std::abs(analytic.data()[i] - numeric)), 1e-4) << i;
    }
  }
}

TEST(PoseEncoder, InconsistentConfigurationIsRejected) {
  PoseEncoderConfig cfg;
  cfg.dim = 10;
  cfg.heads = 4;
  EXPECT_THROW(cfg.check(), ConfigError);
  cfg = {};
  cfg.layers = 0;
  EXPECT_THROW(cfg.check(), ConfigError);
  std::mt19937_64 rng(9);
  ad::ParameterStore store;
  const PoseEncoder enc(store, tiny_config(Tokenization::PerFrame), rng);
  PoseEncoderConfig twod = tiny_config(Tokenization::PerFrame);
  twod.pose_dims = 2;
  const PoseBatch batch = make_pose_batch({random_track(3, 4, 2, rng)}, 3, twod);
  Tape t(false);
  nn::Binder b(t, store);
  EXPECT_THROW(enc.embed(b, t.constant(batch.coords), batch), ConfigError);
}

TEST(Fusion, ConcatenationIsExact) {
  Tape t(false);
  Matrix hp(1, 2), ht(1, 2);
  hp << 1.5, -2.0;
  ht << 3.0, 4.25;
  const Matrix fused = fuse(t.constant(hp), t.constant(ht)).value();
  Matrix expected(1, 4);
  expected << 1.5, -2.0, 3.0, 4.25;
  EXPECT_EQ(fused, expected);
  EXPECT_EQ(Matrix(fused.leftCols(2)), hp);
}

TEST(Fusion, CrossAttentionSingleTokenReturnsValueProjection) {
  std::mt19937_64 rng(10);
  ad::ParameterStore store;
  const CrossAttentionFusion cross(store, 4, 4, 2, rng);
  Matrix token = Matrix::Random(1, 4), traj = Matrix::Random(1, 4);
  Tape t(false);
  nn::Binder b(t, store);
  const Matrix out = cross.attend(b, t.constant(token), 1, t.constant(traj)).value();
  const Matrix expected = token * store[cross.value().weight_index()].value;
  EXPECT_TRUE(out.isApprox(expected, 1e-14));
}

TEST(Fusion, CrossAttentionEqualKeysAreUniform) {
  std::mt19937_64 rng(11);
  ad::ParameterStore store;
  const CrossAttentionFusion cross(store, 4, 4, 1, rng);
  Matrix tokens(3, 4);
  tokens << Matrix::Constant(3, 4, 0.3);
  Tape t(false);
  nn::Binder b(t, store);
  ad::AttentionWeights w;
  cross.attend(b, t.constant(tokens), 3, t.constant(Matrix::Random(1, 4)), nullptr, &w);
  ASSERT_EQ(w.size(), 1u);
  for (Eigen::Index j = 0; j < 3; ++j) EXPECT_NEAR(w[0](0, j), 1.0 / 3.0, 1e-15);
}

TEST(Fusion, CrossAttentionTwoTokenHandExample) {
  std::mt19937_64 rng(12);
  ad::ParameterStore store;
  const CrossAttentionFusion cross(store, 2, 2, 1, rng);
  for (auto& p : store) p.value = Matrix::Identity(2, 2);
  Matrix tokens(2, 2), traj(1, 2);
  tokens << 1.0, 0.0, 0.0, 1.0;
  traj << 2.0, 0.0;
  Tape t(false);
  nn::Binder b(t, store);
  const Matrix out = cross(b, t.constant(tokens), 2, t.constant(traj)).value();
  const double a0 = 1.0 / (1.0 + std::exp(-2.0 / std::sqrt(2.0)));
  EXPECT_NEAR(out(0, 0), a0, 1e-15);
  EXPECT_NEAR(out(0, 1), 1.0 - a0, 1e-15);
  EXPECT_EQ(out(0, 2), 2.0);
  EXPECT_EQ(out(0, 3), 0.0);
}
