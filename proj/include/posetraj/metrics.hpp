#ifndef POSETRAJ_METRICS_HPP
#define POSETRAJ_METRICS_HPP

// Displacement metrics over predicted and ground-truth tracks (rows are steps,
// columns x and y, meters).

#include "posetraj/errors.hpp"
#include "posetraj/scene.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <vector>

namespace posetraj {

/// Wall-clock checkpoints of the per-second error, seconds after the last observation.
inline constexpr std::array<double, 5> kAswaeeTimes = {0.44, 0.96, 1.48, 2.00, 2.52};

inline void check_pair(const Matrix& pred, const Matrix& gt) {
  if (pred.rows() != gt.rows() || pred.cols() != gt.cols())
    throw ConfigError("prediction and ground truth differ in shape");
  if (pred.rows() < 1) throw ConfigError("empty prediction");
  if (pred.cols() != 2) throw ConfigError("tracks must have two columns");
}

/// Mean Euclidean error over steps.
inline double ade(const Matrix& pred, const Matrix& gt) {
  check_pair(pred, gt);
  return (pred - gt).rowwise().norm().mean();
}

/// Euclidean error at the last step.
inline double fde(const Matrix& pred, const Matrix& gt) {
  check_pair(pred, gt);
  return (pred.row(pred.rows() - 1) - gt.row(gt.rows() - 1)).norm();
}

/// Zero-based prediction row nearest to `seconds` after the last observation.
/// Row i is at (i + 1) / frame_rate seconds, so the row is round(t * fr) - 1.
inline int aswaee_row(double seconds, double frame_rate) {
  return static_cast<int>(std::lround(seconds * frame_rate)) - 1;
}

/// Mean error at the five fixed checkpoints, each mapped to its nearest frame.
inline double aswaee(const Matrix& pred, const Matrix& gt, double frame_rate) {
  check_pair(pred, gt);
  if (!(frame_rate > 0.0)) throw ConfigError("frame rate must be positive");
  const int last = aswaee_row(kAswaeeTimes.back(), frame_rate);
  if (last >= pred.rows())
    throw ConfigError("prediction horizon of " + std::to_string(pred.rows()) + " frames does not cover 2.52 s");
  double sum = 0.0;
  for (double t : kAswaeeTimes) {
    const int r = std::max(aswaee_row(t, frame_rate), 0);
    sum += (pred.row(r) - gt.row(r)).norm();
  }
  return sum / static_cast<double>(kAswaeeTimes.size());
}

inline bool aswaee_defined(int t_pred, double frame_rate) {
  return aswaee_row(kAswaeeTimes.back(), frame_rate) < t_pred;
}

/// Minimum of `metric` over k sampled predictions.
inline double min_of_k(const std::function<double(const Matrix&, const Matrix&)>& metric,
                       const std::vector<Matrix>& samples, const Matrix& gt) {
  if (samples.empty()) throw ConfigError("min_of_k needs at least one sample");
  double best = std::numeric_limits<double>::infinity();
  for (const auto& s : samples) best = std::min(best, metric(s, gt));
  return best;
}

}  // namespace posetraj

#endif  // POSETRAJ_METRICS_HPP
