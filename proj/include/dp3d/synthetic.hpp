#pragma once

// Pinhole camera and a forward-kinematics motion generator that produces a
// labelled, class-separable stand-in for motion-capture corpora.

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "dp3d/skeleton.hpp"

namespace dp3d {

struct Camera {
  double focal = 1000.0;  // pixels
  double cx = 500.0;
  double cy = 500.0;
  int width = 1000;
  int height = 1000;
  double depth_offset_mm = 4500.0;  // root distance from the camera

  void validate() const;
};

/// Pinhole projection of one frame (J x 3, camera coordinates in mm) to
/// normalised image coordinates (J x 2) in [-1, 1]. Throws RangeError for a
/// joint at nonpositive depth.
Mat project_pinhole(const Mat& frame, const Camera& camera);

/// Projects a root-relative sequence placed at `root` (mm, camera frame;
/// default (0, 0, depth_offset)).
Pose2DSequence project_sequence(const Pose3DSequence& pose, const Camera& camera, const Eigen::RowVector3d& root);
Pose2DSequence project_sequence(const Pose3DSequence& pose, const Camera& camera);

enum class MotionClass { Walk = 0, Sit = 1, Wave = 2, Throw = 3 };
inline constexpr int kMotionClassCount = 4;

MotionClass parse_motion_class(const std::string& name);
std::string to_string(MotionClass motion);

struct SyntheticMotionSpec {
  MotionClass action = MotionClass::Walk;
  int frames = 16;
  double amplitude = 1.0;   // scales every joint angle excursion
  double frequency = 1.0;   // cycles per sequence
  double phase = 0.0;       // radians
  double yaw = 0.0;         // radians, body rotation about the vertical axis
  double body_scale = 1.0;  // scales every bone length
  double noise_2d = 0.0;    // std of Gaussian noise on normalised 2D keypoints
  uint64_t seed = 0;

  void validate() const;
};

/// Draws the per-sequence parameters of a spec from `rng`.
SyntheticMotionSpec random_motion_spec(MotionClass action, int frames, double noise_2d, std::mt19937_64& rng);

/// Root-relative 3D sequence on the h36m17 topology (mm, camera axes:
/// x right, y down, z away from the camera).
Pose3DSequence synthesize_motion(const SyntheticMotionSpec& spec);

}  // namespace dp3d
