#ifndef POSETRAJ_PLOT_HPP
#define POSETRAJ_PLOT_HPP

// SVG figures: trajectory comparisons (ground truth green, baseline red, pose
// model blue), joint attention heatmaps on a skeleton, navigation traces.

#include "posetraj/analysis.hpp"
#include "posetraj/scene.hpp"
#include "posetraj/skeleton.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

namespace posetraj::plot {

inline constexpr const char* kGroundTruth = "#2ca02c";
inline constexpr const char* kBaseline = "#d62728";
inline constexpr const char* kPoseModel = "#1f77b4";
inline constexpr const char* kObserved = "#555555";

struct Polyline {
  std::vector<Vec2> points;
  std::string color;
  std::string label;
  bool dashed = false;
};

namespace detail {

inline std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3f", v);
  return buf;
}

/// World-to-canvas mapping that fits all points with a margin, y pointing up.
struct Frame {
  double min_x = 0.0, min_y = 0.0, scale = 1.0, width = 640.0, height = 640.0, margin = 40.0;

  static Frame fit(const std::vector<Vec2>& pts, double width = 640.0, double height = 640.0) {
    Frame f;
    f.width = width;
    f.height = height;
    double max_x = -std::numeric_limits<double>::infinity(), max_y = max_x;
    f.min_x = std::numeric_limits<double>::infinity();
    f.min_y = f.min_x;
    for (const auto& p : pts) {
      f.min_x = std::min(f.min_x, p.x());
      f.min_y = std::min(f.min_y, p.y());
      max_x = std::max(max_x, p.x());
      max_y = std::max(max_y, p.y());
    }
    if (pts.empty()) f.min_x = f.min_y = max_x = max_y = 0.0;
    const double span = std::max({max_x - f.min_x, max_y - f.min_y, 1.0});
    f.scale = std::min(width, height - 30.0) - 2.0 * f.margin;
    f.scale /= span;
    return f;
  }

  double x(const Vec2& p) const { return margin + (p.x() - min_x) * scale; }
  double y(const Vec2& p) const { return height - margin - (p.y() - min_y) * scale; }
};

inline void header(std::ostringstream& out, double w, double h) {
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << fmt(w) << "\" height=\"" << fmt(h)
      << "\" viewBox=\"0 0 " << fmt(w) << ' ' << fmt(h) << "\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
}

inline void polyline(std::ostringstream& out, const Frame& f, const Polyline& line) {
  if (line.points.empty()) return;
  out << "<polyline class=\"track\" fill=\"none\" stroke=\"" << line.color << "\" stroke-width=\"2\"";
  if (line.dashed) out << " stroke-dasharray=\"6 4\"";
  out << " points=\"";
  for (const auto& p : line.points) out << fmt(f.x(p)) << ',' << fmt(f.y(p)) << ' ';
  out << "\"/>\n";
  for (const auto& p : line.points)
    out << "<circle cx=\"" << fmt(f.x(p)) << "\" cy=\"" << fmt(f.y(p)) << "\" r=\"2.5\" fill=\"" << line.color
        << "\"/>\n";
}

inline void legend(std::ostringstream& out, const std::vector<Polyline>& lines) {
  double x = 10.0;
  for (const auto& l : lines) {
    if (l.label.empty()) continue;
    out << "<rect x=\"" << fmt(x) << "\" y=\"8\" width=\"12\" height=\"12\" fill=\"" << l.color << "\"/>";
    out << "<text x=\"" << fmt(x + 16) << "\" y=\"18\" font-family=\"sans-serif\" font-size=\"12\">" << l.label
        << "</text>\n";
    x += 24.0 + 7.0 * static_cast<double>(l.label.size());
  }
}

}  // namespace detail

inline std::string polylines_svg(const std::vector<Polyline>& lines, const std::string& title = "") {
  std::vector<Vec2> all;
  for (const auto& l : lines) all.insert(all.end(), l.points.begin(), l.points.end());
  const auto f = detail::Frame::fit(all);
  std::ostringstream out;
  detail::header(out, f.width, f.height);
  if (!title.empty())
    out << "<text x=\"10\" y=\"" << detail::fmt(f.height - 10) << "\" font-family=\"sans-serif\" font-size=\"12\">"
        << title << "</text>\n";
  detail::legend(out, lines);
  for (const auto& l : lines) detail::polyline(out, f, l);
  out << "</svg>\n";
  return out.str();
}

inline std::vector<Vec2> to_points(const Matrix& m) {
  std::vector<Vec2> p;
  for (Eigen::Index r = 0; r < m.rows(); ++r) p.emplace_back(m(r, 0), m(r, 1));
  return p;
}

/// Observed path, ground-truth future, and optional baseline / pose-model predictions of a scene's primary.
inline std::string trajectory_svg(const Scene& scene, const Matrix* baseline, const Matrix* pose_model) {
  const auto& p = scene.primary_track().positions;
  Polyline obs{{p.begin(), p.begin() + scene.t_obs}, kObserved, "observed"};
  Polyline gt{{p.begin() + scene.t_obs - 1, p.end()}, kGroundTruth, "ground truth"};
  std::vector<Polyline> lines = {obs, gt};
  // Neighbors' observed paths for context.
  for (std::size_t a = 0; a < scene.agents.size(); ++a) {
    if (a == scene.primary) continue;
    Polyline n{{}, "#bbbbbb", "", true};
    for (int t = 0; t < scene.frames(); ++t)
      if (scene.agents[a].present[static_cast<std::size_t>(t)]) n.points.push_back(scene.agents[a].positions[static_cast<std::size_t>(t)]);
    lines.push_back(n);
  }
  auto with_origin = [&](const Matrix& m) {
    std::vector<Vec2> pts = {p[static_cast<std::size_t>(scene.t_obs - 1)]};
    const auto rest = to_points(m);
    pts.insert(pts.end(), rest.begin(), rest.end());
    return pts;
  };
  if (baseline != nullptr) lines.push_back({with_origin(*baseline), kBaseline, "baseline"});
  if (pose_model != nullptr) lines.push_back({with_origin(*pose_model), kPoseModel, "pose model"});
  return polylines_svg(lines, "category: " + std::string(to_string(scene.category)));
}

/// Front-view 2D layout of the 17-joint skeleton, meters.
inline std::array<Vec2, skeleton::kJoints> skeleton_layout() {
  using namespace skeleton;
  std::array<Vec2, kJoints> p;
  p[kPelvis] = {0.0, 0.0};
  p[kRightHip] = {-0.12, -0.02};
  p[kRightKnee] = {-0.14, -0.45};
  p[kRightAnkle] = {-0.15, -0.88};
  p[kLeftHip] = {0.12, -0.02};
  p[kLeftKnee] = {0.14, -0.45};
  p[kLeftAnkle] = {0.15, -0.88};
  p[kSpine] = {0.0, 0.25};
  p[kThorax] = {0.0, 0.5};
  p[kNeck] = {0.0, 0.6};
  p[kHead] = {0.0, 0.75};
  p[kLeftShoulder] = {0.2, 0.48};
  p[kLeftElbow] = {0.3, 0.2};
  p[kLeftWrist] = {0.34, -0.05};
  p[kRightShoulder] = {-0.2, 0.48};
  p[kRightElbow] = {-0.3, 0.2};
  p[kRightWrist] = {-0.34, -0.05};
  return p;
}

/// Skeleton heatmap: one circle per joint, radius and color by score.
inline std::string attention_svg(const JointAttentionMap& map) {
  if (map.scores.empty()) throw DataError("attention map has no scores");
  const auto layout = skeleton_layout();
  std::vector<Vec2> pts(layout.begin(), layout.end());
  const auto f = detail::Frame::fit(pts, 420.0, 640.0);
  std::ostringstream out;
  detail::header(out, f.width, f.height);
  for (int j = 1; j < skeleton::kJoints; ++j) {
    const Vec2& a = layout[static_cast<std::size_t>(j)];
    const Vec2& b = layout[static_cast<std::size_t>(skeleton::kParent[static_cast<std::size_t>(j)])];
    out << "<line x1=\"" << detail::fmt(f.x(a)) << "\" y1=\"" << detail::fmt(f.y(a)) << "\" x2=\"" << detail::fmt(f.x(b))
        << "\" y2=\"" << detail::fmt(f.y(b)) << "\" stroke=\"#999999\" stroke-width=\"3\"/>\n";
  }
  const double max_score = *std::max_element(map.scores.begin(), map.scores.end());
  for (std::size_t k = 0; k < map.scores.size(); ++k) {
    const int joint = map.joints.empty() ? static_cast<int>(k) : map.joints[k];
    if (joint < 0 || joint >= skeleton::kJoints) continue;
    const double s = max_score > 0.0 ? map.scores[k] / max_score : 0.0;
    const int red = static_cast<int>(std::lround(255.0 * s));
    const int blue = 255 - red;
    char color[8];
    std::snprintf(color, sizeof(color), "#%02x40%02x", red, blue);
    const Vec2& p = layout[static_cast<std::size_t>(joint)];
    out << "<circle class=\"joint\" data-joint=\"" << skeleton::kNames[static_cast<std::size_t>(joint)] << "\" cx=\""
        << detail::fmt(f.x(p)) << "\" cy=\"" << detail::fmt(f.y(p)) << "\" r=\"" << detail::fmt(5.0 + 10.0 * s)
        << "\" fill=\"" << color << "\"><title>" << skeleton::kNames[static_cast<std::size_t>(joint)] << ' '
        << detail::fmt(map.scores[k]) << "</title></circle>\n";
  }
  out << "</svg>\n";
  return out.str();
}

/// Robot path (blue), pedestrian traces (gray), start and goal markers.
inline std::string navigation_svg(const std::vector<Vec2>& robot, const std::vector<std::vector<Vec2>>& neighbors,
                                  const Vec2& start, const Vec2& goal) {
  std::vector<Polyline> lines;
  for (const auto& n : neighbors) lines.push_back({n, "#999999", "", true});
  lines.push_back({robot, kPoseModel, "robot"});
  lines.push_back({{start}, "#000000", "start"});
  lines.push_back({{goal}, kGroundTruth, "goal"});
  return polylines_svg(lines);
}

}  // namespace posetraj::plot

#endif  // POSETRAJ_PLOT_HPP
