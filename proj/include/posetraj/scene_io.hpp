#ifndef POSETRAJ_SCENE_IO_HPP
#define POSETRAJ_SCENE_IO_HPP

// Line-delimited JSON persistence of scenes, one scene per line.
//
//   {"version":1, "frame_rate":2.5, "t_obs":9, "t_pred":12, "primary":0,
//    "category":"Linear", "pose_dims":3,
//    "agents":[{"id":"a0", "xy":[[x,y] | null, ...],
//               "pose":[[[x,y,z], ...J], ...T], "mask":[[bool, ...J], ...T]}]}
//
// Absent frames are written as null in "xy". Doubles are printed in shortest
// round-trip form, so read(write(s)) == s bit-exactly.

#include "posetraj/errors.hpp"
#include "posetraj/scene.hpp"

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace posetraj {

inline constexpr int kSceneFormatVersion = 1;

inline nlohmann::json scene_to_json(const Scene& s) {
  using nlohmann::json;
  json j;
  j["version"] = kSceneFormatVersion;
  j["frame_rate"] = s.frame_rate();
  j["t_obs"] = s.t_obs;
  j["t_pred"] = s.t_pred;
  j["primary"] = s.primary;
  j["category"] = std::string(to_string(s.category));
  j["pose_dims"] = s.pose_dims;
  json agents = json::array();
  for (const auto& a : s.agents) {
    json ja;
    ja["id"] = a.id;
    json xy = json::array();
    for (std::size_t t = 0; t < a.positions.size(); ++t) {
      if (a.present[t]) {
        xy.push_back({a.positions[t].x(), a.positions[t].y()});
      } else {
        xy.push_back(nullptr);
      }
    }
    ja["xy"] = std::move(xy);
    json pose = json::array();
    json mask = json::array();
    for (const auto& f : a.poses) {
      json frame = json::array();
      for (Eigen::Index r = 0; r < f.joints.rows(); ++r) {
        json joint = json::array();
        for (Eigen::Index c = 0; c < f.joints.cols(); ++c) joint.push_back(f.joints(r, c));
        frame.push_back(std::move(joint));
      }
      pose.push_back(std::move(frame));
      json m = json::array();
      for (bool b : f.mask) m.push_back(b);
      mask.push_back(std::move(m));
    }
    ja["pose"] = std::move(pose);
    ja["mask"] = std::move(mask);
    agents.push_back(std::move(ja));
  }
  j["agents"] = std::move(agents);
  return j;
}

inline Scene scene_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw DataError("scene record is not a JSON object");
  const int version = j.at("version").get<int>();
  if (version != kSceneFormatVersion)
    throw DataError("scene format version " + std::to_string(version) + " is not supported (expected " +
                    std::to_string(kSceneFormatVersion) + ")");
  Scene s;
  const double rate = j.at("frame_rate").get<double>();
  s.t_obs = j.at("t_obs").get<int>();
  s.t_pred = j.at("t_pred").get<int>();
  s.primary = j.at("primary").get<std::size_t>();
  s.category = category_from_string(j.at("category").get<std::string>());
  s.pose_dims = j.value("pose_dims", 3);
  for (const auto& ja : j.at("agents")) {
    AgentTrack a;
    a.id = ja.at("id").get<std::string>();
    a.frame_rate = rate;
    for (const auto& p : ja.at("xy")) {
      if (p.is_null()) {
        a.positions.emplace_back(0.0, 0.0);
        a.present.push_back(false);
      } else {
        if (!p.is_array() || p.size() != 2) throw DataError("xy entry must be [x, y] or null");
        a.positions.emplace_back(p[0].get<double>(), p[1].get<double>());
        a.present.push_back(true);
      }
    }
    const auto& pose = ja.at("pose");
    const auto& mask = ja.at("mask");
    if (pose.size() != mask.size()) throw DataError("pose and mask frame counts differ");
    for (std::size_t t = 0; t < pose.size(); ++t) {
      const auto& frame = pose[t];
      PoseFrame f;
      const auto joints = static_cast<Eigen::Index>(frame.size());
      const auto dims = joints > 0 ? static_cast<Eigen::Index>(frame[0].size()) : 0;
      f.joints.resize(joints, dims);
      for (Eigen::Index r = 0; r < joints; ++r) {
        if (static_cast<Eigen::Index>(frame[static_cast<std::size_t>(r)].size()) != dims)
          throw DataError("ragged joint coordinates");
        for (Eigen::Index c = 0; c < dims; ++c)
          f.joints(r, c) = frame[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)].get<double>();
      }
      for (const auto& b : mask[t]) f.mask.push_back(b.get<bool>());
      a.poses.push_back(std::move(f));
    }
    s.agents.push_back(std::move(a));
  }
  validate(s);
  return s;
}

inline void write_scenes(const std::vector<Scene>& scenes, std::ostream& out) {
  for (const auto& s : scenes) out << scene_to_json(s).dump() << '\n';
}

inline void write_scenes(const std::vector<Scene>& scenes, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open '" + path.string() + "' for writing");
  write_scenes(scenes, out);
  if (!out) throw DataError("write to '" + path.string() + "' failed");
}

inline std::vector<Scene> read_scenes(std::istream& in) {
  std::vector<Scene> scenes;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      scenes.push_back(scene_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw DataError("line " + std::to_string(line_no) + ": " + e.what());
    } catch (const DataError& e) {
      throw DataError("line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return scenes;
}

inline std::vector<Scene> read_scenes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path.string() + "' for reading");
  return read_scenes(in);
}

}  // namespace posetraj

#endif  // POSETRAJ_SCENE_IO_HPP
