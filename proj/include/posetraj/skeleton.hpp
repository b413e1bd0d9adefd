#ifndef POSETRAJ_SKELETON_HPP
#define POSETRAJ_SKELETON_HPP

#include <array>
#include <string_view>
#include <vector>

namespace posetraj::skeleton {

// 17-joint layout in Human3.6M order.
inline constexpr int kJoints = 17;

enum Joint : int {
  kPelvis = 0,
  kRightHip = 1,
  kRightKnee = 2,
  kRightAnkle = 3,
  kLeftHip = 4,
  kLeftKnee = 5,
  kLeftAnkle = 6,
  kSpine = 7,
  kThorax = 8,
  kNeck = 9,
  kHead = 10,
  kLeftShoulder = 11,
  kLeftElbow = 12,
  kLeftWrist = 13,
  kRightShoulder = 14,
  kRightElbow = 15,
  kRightWrist = 16,
};

inline constexpr std::array<std::string_view, kJoints> kNames = {
    "pelvis",    "r_hip",      "r_knee",  "r_ankle",    "l_hip",   "l_knee",      "l_ankle",   "spine",   "thorax",
    "neck",      "head",       "l_shoulder", "l_elbow", "l_wrist", "r_shoulder", "r_elbow", "r_wrist"};

// Parent of each joint; the pelvis is the root.
inline constexpr std::array<int, kJoints> kParent = {-1, 0, 1, 2, 0, 4, 5, 0, 7, 8, 9, 8, 11, 12, 8, 14, 15};

// Limb groups. A leg is {hip, knee, ankle}, an arm is {shoulder, elbow, wrist}.
inline const std::vector<int> kRightLeg = {kRightHip, kRightKnee, kRightAnkle};
inline const std::vector<int> kLeftLeg = {kLeftHip, kLeftKnee, kLeftAnkle};
inline const std::vector<int> kLeftArm = {kLeftShoulder, kLeftElbow, kLeftWrist};
inline const std::vector<int> kRightArm = {kRightShoulder, kRightElbow, kRightWrist};
inline const std::vector<int> kTorso = {kPelvis, kSpine, kThorax, kNeck, kHead};

inline std::vector<int> legs() { return {kRightHip, kRightKnee, kRightAnkle, kLeftHip, kLeftKnee, kLeftAnkle}; }
inline std::vector<int> arms() {
  return {kLeftShoulder, kLeftElbow, kLeftWrist, kRightShoulder, kRightElbow, kRightWrist};
}

}  // namespace posetraj::skeleton

#endif  // POSETRAJ_SKELETON_HPP
