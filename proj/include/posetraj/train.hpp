#ifndef POSETRAJ_TRAIN_HPP
#define POSETRAJ_TRAIN_HPP

// Deterministic training loop and evaluation reports.

#include "posetraj/analysis.hpp"
#include "posetraj/backbones.hpp"
#include "posetraj/checkpoint.hpp"
#include "posetraj/errors.hpp"
#include "posetraj/metrics.hpp"
#include "posetraj/scene.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <iomanip>
#include <map>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace posetraj {

struct NoiseAugment {
  bool enabled = false;
  double std = 0.1;
  double fraction = 0.5;
};

/// Replaces a fraction of each batch's scenes with occluded copies, the scheme
/// drawn uniformly from the three occlusion schemes.
struct OcclusionAugment {
  bool enabled = false;
  double fraction = 0.5;
};

struct TrainConfig {
  /// 0 selects the family default: 7.5e-4 for attention, 1e-3 otherwise.
  double lr = 0.0;
  double lr_decay = 0.5;
  int decay_every = 10;
  int batch_size = 64;
  int epochs = 50;
  std::uint64_t seed = 0;
  NoiseAugment noise;
  OcclusionAugment occlusion;
  /// Early stopping on validation ADE; 0 disables it.
  int patience = 10;
  double clip_norm = 5.0;
  LossSpace loss = LossSpace::Position;
  /// Share of the training corpus held out for validation when none is given.
  double validation_fraction = 0.1;

  double initial_lr(Family f) const {
    if (lr > 0.0) return lr;
    return f == Family::Attention ? 7.5e-4 : 1e-3;
  }

  void check() const {
    if (lr < 0.0) throw ConfigError("train.lr must be > 0");
    if (batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
    if (epochs < 1) throw ConfigError("train.epochs must be >= 1");
    if (decay_every < 1) throw ConfigError("train.decay_every must be >= 1");
    if (!(lr_decay > 0.0)) throw ConfigError("train.lr_decay must be > 0");
    if (noise.fraction < 0.0 || noise.fraction > 1.0) throw ConfigError("train.noise_fraction must be in [0, 1]");
    if (noise.std < 0.0) throw ConfigError("train.noise_std must be >= 0");
    if (occlusion.fraction < 0.0 || occlusion.fraction > 1.0)
      throw ConfigError("train.occlusion_fraction must be in [0, 1]");
    if (validation_fraction < 0.0 || validation_fraction >= 1.0)
      throw ConfigError("train.validation_fraction must be in [0, 1)");
  }
};

inline nlohmann::json to_json(const TrainConfig& c) {
  return {{"lr", c.lr},
          {"lr_decay", c.lr_decay},
          {"decay_every", c.decay_every},
          {"batch_size", c.batch_size},
          {"epochs", c.epochs},
          {"seed", c.seed},
          {"noise_augment", c.noise.enabled},
          {"noise_std", c.noise.std},
          {"noise_fraction", c.noise.fraction},
          {"occlusion_augment", c.occlusion.enabled},
          {"occlusion_fraction", c.occlusion.fraction},
          {"patience", c.patience},
          {"clip_norm", c.clip_norm},
          {"loss", c.loss == LossSpace::Position ? "position" : "displacement"},
          {"validation_fraction", c.validation_fraction}};
}

struct EpochStats {
  int epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  double val_ade = 0.0;
};

struct TrainResult {
  std::vector<EpochStats> curve;
  int best_epoch = 0;
  double best_val_ade = 0.0;
  bool stopped_early = false;
};

inline void write_loss_csv(const TrainResult& r, std::ostream& out) {
  out << "epoch,lr,train_loss,val_ade\n";
  out << std::setprecision(17);
  for (const auto& e : r.curve) out << e.epoch << ',' << e.lr << ',' << e.train_loss << ',' << e.val_ade << '\n';
}

/// Adds fresh N(0, std^2) noise to the observed pose coordinates of exactly
/// ceil(fraction * scenes) scenes of a batch. Returns the perturbed scene indices.
template <typename Rng>
std::vector<int> augment_pose_noise(SceneBatch& batch, double std, double fraction, Rng& rng) {
  std::vector<int> chosen;
  if (!batch.has_pose) return chosen;
  std::vector<int> order(static_cast<std::size_t>(batch.scenes));
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  order.resize(perturbed_count(order.size(), fraction));
  std::sort(order.begin(), order.end());
  std::normal_distribution<double> normal(0.0, std);
  const PoseBatch& pb = batch.pose;
  for (int s : order) {
    const int a0 = batch.agent_begin[static_cast<std::size_t>(s)];
    const int a1 = a0 + batch.agent_count[static_cast<std::size_t>(s)];
    for (int a = a0; a < a1; ++a)
      for (int f = 0; f < pb.frames; ++f)
        for (int j = 0; j < pb.joints; ++j) {
          if (!pb.joint_valid(a, f, j)) continue;
          for (int c = 0; c < pb.dims; ++c) batch.pose.coords(a * pb.frames + f, j * pb.dims + c) += normal(rng);
        }
    chosen.push_back(s);
  }
  return chosen;
}

/// Swaps ceil(fraction * n) of the batch pointers for occluded copies stored in `storage`.
template <typename Rng>
std::vector<int> augment_occlusion(std::vector<const Scene*>& batch, std::vector<Scene>& storage, double fraction,
                                   Rng& rng) {
  std::vector<int> order(batch.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  order.resize(perturbed_count(order.size(), fraction));
  std::sort(order.begin(), order.end());
  storage.clear();
  storage.reserve(order.size());
  std::uniform_int_distribution<int> pick(0, 2);
  for (int i : order) {
    const auto scheme = static_cast<OcclusionScheme>(pick(rng));
    storage.push_back(occlude(*batch[static_cast<std::size_t>(i)], scheme, rng));
    batch[static_cast<std::size_t>(i)] = &storage.back();
  }
  return order;
}

/// Mean single-sample ADE of the model over a corpus.
inline double mean_ade(const Model& model, const std::vector<Scene>& corpus, std::size_t chunk = 128) {
  if (corpus.empty()) throw DataError("empty corpus");
  double sum = 0.0;
  for (std::size_t begin = 0; begin < corpus.size(); begin += chunk) {
    const std::size_t end = std::min(corpus.size(), begin + chunk);
    std::vector<const Scene*> ptrs;
    for (std::size_t i = begin; i < end; ++i) ptrs.push_back(&corpus[i]);
    const SceneBatch batch = model.make_batch(ptrs, true);
    const auto preds = model.predict_batch(batch, 1);
    for (std::size_t i = 0; i < preds.size(); ++i)
      sum += ade(preds[i][0], batch.future.middleRows(static_cast<Eigen::Index>(i) * batch.t_pred, batch.t_pred));
  }
  return sum / static_cast<double>(corpus.size());
}

using EpochCallback = std::function<void(const EpochStats&, const Model&)>;

/// Trains on `train`, early-stopping on validation ADE; the parameters of the
/// best validation epoch are restored at the end.
inline TrainResult train(Model& model, const std::vector<Scene>& train_set, const std::vector<Scene>& val_set,
                         const TrainConfig& cfg, const EpochCallback& on_epoch = nullptr) {
  cfg.check();
  if (train_set.empty()) throw DataError("training corpus is empty");
  const ModelConfig& mc = model.config();
  auto& store = model.parameters();
  nn::Adam adam(store);
  std::mt19937_64 rng(cfg.seed);

  std::vector<const Scene*> all;
  for (const auto& s : train_set) all.push_back(&s);
  // Validates window and pose dims up front.
  (void)model.make_batch(std::span<const Scene* const>(all.data(), 1));

  TrainResult result;
  result.best_val_ade = std::numeric_limits<double>::infinity();
  std::vector<Matrix> best;
  int since_best = 0;
  const double lr0 = cfg.initial_lr(mc.backbone.family);
  std::vector<Scene> occluded;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const double lr = lr0 * std::pow(cfg.lr_decay, static_cast<double>((epoch - 1) / cfg.decay_every));
    std::shuffle(all.begin(), all.end(), rng);
    double loss_sum = 0.0;
    int steps = 0;
    for (std::size_t begin = 0; begin < all.size(); begin += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end = std::min(all.size(), begin + static_cast<std::size_t>(cfg.batch_size));
      std::vector<const Scene*> members(all.begin() + static_cast<std::ptrdiff_t>(begin),
                                        all.begin() + static_cast<std::ptrdiff_t>(end));
      if (cfg.occlusion.enabled && mc.use_pose) augment_occlusion(members, occluded, cfg.occlusion.fraction, rng);
      SceneBatch batch = model.make_batch(members, true);
      if (cfg.noise.enabled) augment_pose_noise(batch, cfg.noise.std, cfg.noise.fraction, rng);

      ad::Tape tape;
      nn::Binder binder(tape, store);
      ad::Var loss = model.training_loss(binder, batch, rng, nullptr, cfg.loss);
      const double value = loss.value()(0, 0);
      if (!std::isfinite(value))
        throw NumericError("loss became non-finite at epoch " + std::to_string(epoch) + " step " +
                           std::to_string(steps + 1));
      store.zero_grad();
      tape.backward(loss);
      nn::clip_grad_norm(store, cfg.clip_norm);
      adam.step(store, lr);
      loss_sum += value;
      ++steps;
    }

    EpochStats stats{epoch, lr, loss_sum / steps, 0.0};
    stats.val_ade = val_set.empty() ? stats.train_loss : mean_ade(model, val_set);
    if (!std::isfinite(stats.val_ade)) throw NumericError("validation ADE is non-finite at epoch " + std::to_string(epoch));
    result.curve.push_back(stats);
    if (on_epoch) on_epoch(stats, model);

    if (stats.val_ade < result.best_val_ade) {
      result.best_val_ade = stats.val_ade;
      result.best_epoch = epoch;
      best.clear();
      for (const auto& p : store) best.push_back(p.value);
      since_best = 0;
    } else if (cfg.patience > 0 && ++since_best >= cfg.patience) {
      result.stopped_early = true;
      break;
    }
  }
  for (std::size_t i = 0; i < best.size(); ++i) store[i].value = best[i];
  return result;
}

/// Splits off the last validation_fraction of a seeded permutation for validation.
inline TrainResult train(Model& model, const std::vector<Scene>& corpus, const TrainConfig& cfg,
                         const EpochCallback& on_epoch = nullptr) {
  cfg.check();
  std::vector<std::size_t> order(corpus.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(cfg.seed ^ 0x5eedULL);
  std::shuffle(order.begin(), order.end(), rng);
  const auto n_val = static_cast<std::size_t>(std::floor(cfg.validation_fraction * static_cast<double>(corpus.size())));
  std::vector<Scene> tr, val;
  for (std::size_t i = 0; i < order.size(); ++i) (i < order.size() - n_val ? tr : val).push_back(corpus[order[i]]);
  return train(model, tr, val, cfg, on_epoch);
}

struct SceneMetrics {
  SceneCategory category = SceneCategory::Other;
  double ade = 0.0;
  double fde = 0.0;
  double aswaee = 0.0;
  double min_ade = 0.0;
  double min_fde = 0.0;
  double min_aswaee = 0.0;
};

struct MetricSummary {
  std::size_t n = 0;
  double ade = 0.0;
  double fde = 0.0;
  double aswaee = 0.0;
  double min_ade = 0.0;
  double min_fde = 0.0;
  double min_aswaee = 0.0;
};

struct MetricsReport {
  MetricSummary overall;
  std::map<std::string, MetricSummary> by_category;
  std::vector<SceneMetrics> scenes;
  int k = 1;
  bool has_aswaee = false;
  std::uint64_t seed = 0;
  std::string perturbation = "none";
  nlohmann::json config = nlohmann::json::object();
};

/// Aggregates per-scene metrics of k sampled predictions per scene.
inline MetricsReport evaluate_predictions(const std::vector<Scene>& corpus,
                                          const std::vector<std::vector<Matrix>>& predictions) {
  if (corpus.empty()) throw DataError("evaluation corpus is empty");
  if (predictions.size() != corpus.size()) throw DataError("one prediction set per scene is required");
  MetricsReport r;
  r.k = static_cast<int>(predictions.front().size());
  const double fr = corpus.front().frame_rate();
  r.has_aswaee = aswaee_defined(corpus.front().t_pred, fr);
  auto add = [&](MetricSummary& m, const SceneMetrics& s) {
    ++m.n;
    m.ade += s.ade;
    m.fde += s.fde;
    m.aswaee += s.aswaee;
    m.min_ade += s.min_ade;
    m.min_fde += s.min_fde;
    m.min_aswaee += s.min_aswaee;
  };
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const Scene& sc = corpus[i];
    const auto& p = sc.primary_track().positions;
    Matrix gt(sc.t_pred, 2);
    for (int k = 0; k < sc.t_pred; ++k) gt.row(k) << p[static_cast<std::size_t>(sc.t_obs + k)].x(),
        p[static_cast<std::size_t>(sc.t_obs + k)].y();
    const auto& samples = predictions[i];
    if (static_cast<int>(samples.size()) != r.k) throw DataError("scenes carry different sample counts");
    SceneMetrics m;
    m.category = sc.category;
    m.ade = ade(samples.front(), gt);
    m.fde = fde(samples.front(), gt);
    m.min_ade = min_of_k(ade, samples, gt);
    m.min_fde = min_of_k(fde, samples, gt);
    if (r.has_aswaee) {
      auto as = [fr](const Matrix& a, const Matrix& b) { return aswaee(a, b, fr); };
      m.aswaee = as(samples.front(), gt);
      m.min_aswaee = min_of_k(as, samples, gt);
    }
    r.scenes.push_back(m);
    add(r.overall, m);
    add(r.by_category[std::string(to_string(m.category))], m);
  }
  auto finish = [](MetricSummary& m) {
    const double n = static_cast<double>(m.n);
    m.ade /= n;
    m.fde /= n;
    m.aswaee /= n;
    m.min_ade /= n;
    m.min_fde /= n;
    m.min_aswaee /= n;
  };
  finish(r.overall);
  for (auto& [name, m] : r.by_category) finish(m);
  return r;
}

/// Evaluates a model on a corpus, applying `perturbation` to the inputs first.
inline MetricsReport evaluate(const Model& model, const std::vector<Scene>& corpus, int k,
                              const Perturbation& perturbation = Perturbation::none(), std::uint64_t seed = 0,
                              std::size_t chunk = 128) {
  if (corpus.empty()) throw DataError("evaluation corpus is empty");
  if (k < 1) throw ConfigError("eval.k must be >= 1");
  const std::vector<Scene> inputs = apply_perturbation(corpus, perturbation);
  std::vector<std::vector<Matrix>> preds;
  preds.reserve(inputs.size());
  for (std::size_t begin = 0; begin < inputs.size(); begin += chunk) {
    const std::size_t end = std::min(inputs.size(), begin + chunk);
    std::vector<const Scene*> ptrs;
    for (std::size_t i = begin; i < end; ++i) ptrs.push_back(&inputs[i]);
    // Each chunk draws decoder noise from its own stream so results do not depend on chunking order.
    auto out = model.predict(ptrs, k, seed + begin);
    for (auto& p : out) preds.push_back(std::move(p));
  }
  MetricsReport r = evaluate_predictions(corpus, preds);
  r.seed = seed;
  r.perturbation = perturbation.describe();
  r.config = to_json(model.config());
  return r;
}

inline nlohmann::json summary_json(const MetricSummary& m, bool aswaee_on) {
  nlohmann::json j = {{"n_scenes", m.n}, {"ade", m.ade}, {"fde", m.fde}, {"min_ade", m.min_ade}, {"min_fde", m.min_fde}};
  if (aswaee_on) {
    j["aswaee"] = m.aswaee;
    j["min_aswaee"] = m.min_aswaee;
  }
  return j;
}

inline nlohmann::json to_json(const MetricsReport& r, const CategorizerConfig& cat = {}) {
  nlohmann::json by_cat = nlohmann::json::object();
  for (const auto& [name, m] : r.by_category) by_cat[name] = summary_json(m, r.has_aswaee);
  nlohmann::json per_scene = nlohmann::json::array();
  for (const auto& s : r.scenes) {
    nlohmann::json j = {{"category", to_string(s.category)}, {"ade", s.ade}, {"fde", s.fde}, {"min_ade", s.min_ade},
                        {"min_fde", s.min_fde}};
    if (r.has_aswaee) {
      j["aswaee"] = s.aswaee;
      j["min_aswaee"] = s.min_aswaee;
    }
    per_scene.push_back(std::move(j));
  }
  return {{"k", r.k},
          {"seed", r.seed},
          {"perturbation", r.perturbation},
          {"categorizer",
           {{"static_eps", cat.static_eps}, {"linear_eps", cat.linear_eps}, {"interaction_radius", cat.interaction_radius}}},
          {"aswaee_mapping", "nearest prediction frame, row = round(t * frame_rate) - 1"},
          {"loss", "MSE on future positions"},
          {"overall", summary_json(r.overall, r.has_aswaee)},
          {"by_category", by_cat},
          {"scenes", per_scene},
          {"config", r.config}};
}

/// Plain-text table of single-sample and min-of-k metrics per category.
inline std::string report_table(const MetricsReport& r) {
  std::ostringstream out;
  out << std::fixed << std::setprecision(4);
  out << std::left << std::setw(12) << "category" << std::right << std::setw(7) << "n" << std::setw(10) << "ADE"
      << std::setw(10) << "FDE";
  if (r.has_aswaee) out << std::setw(10) << "ASWAEE";
  out << std::setw(12) << ("minADE@" + std::to_string(r.k)) << std::setw(12) << ("minFDE@" + std::to_string(r.k))
      << '\n';
  auto row = [&](const std::string& name, const MetricSummary& m) {
    out << std::left << std::setw(12) << name << std::right << std::setw(7) << m.n << std::setw(10) << m.ade
        << std::setw(10) << m.fde;
    if (r.has_aswaee) out << std::setw(10) << m.aswaee;
    out << std::setw(12) << m.min_ade << std::setw(12) << m.min_fde << '\n';
  };
  for (const auto& [name, m] : r.by_category) row(name, m);
  row("all", r.overall);
  return out.str();
}

}  // namespace posetraj

#endif  // POSETRAJ_TRAIN_HPP
