#pragma once

#include <Eigen/Core>

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "dp3d/params.hpp"

namespace dp3d {

/// Kinematic tree over J joints plus the left/right bone pairing used by the
/// bone-length regulariser.
struct SkeletonTopology {
  std::string id;
  std::vector<std::string> joint_names;
  /// (parent, child) joint indices; must form a spanning tree.
  std::vector<std::pair<int, int>> edges;
  /// (left bone, right bone) edge indices.
  std::vector<std::pair<int, int>> paired_bones;
  int root = 0;

  int joint_count() const { return static_cast<int>(joint_names.size()); }
  int bone_count() const { return static_cast<int>(edges.size()); }
  int joint_index(const std::string& name) const;

  /// Throws FormatError when any structural invariant is violated.
  void validate() const;

  /// 17-joint Human3.6M-style tree rooted at the pelvis.
  static SkeletonTopology h36m17();
  /// Reads the structured-text (JSON) topology definition.
  static SkeletonTopology load(const std::filesystem::path& path);
  static SkeletonTopology from_json_text(const std::string& text);
  std::string to_json_text() const;
};

/// N x J x 3 joint positions in millimetres; rows of `data` are frame-major
/// (row = frame * J + joint).
struct Pose3DSequence {
  int frames = 0;
  int joints = 0;
  Mat data;

  static Pose3DSequence zeros(int frames, int joints);
  Eigen::Vector3d joint(int frame, int j) const { return data.row(frame * joints + j).transpose(); }
  /// J x 3 block of one frame.
  Mat frame(int f) const { return data.middleRows(f * joints, joints); }
  void validate() const;
};

/// N x J x 2 keypoints in normalised image coordinates, optional N x J confidence.
struct Pose2DSequence {
  int frames = 0;
  int joints = 0;
  Mat data;
  Mat confidence;

  static Pose2DSequence zeros(int frames, int joints);
  void validate() const;
};

struct AffinityMatrices {
  Mat local;
  Mat global;
  Mat fused;
};

/// Symmetric-normalised adjacency: 1/sqrt(deg i * deg j) on tree edges.
Mat build_local_affinity(const SkeletonTopology& topology);

/// ((A_L + A_G) + (A_L + A_G)^T) / 2.
Mat fuse_affinity(const Mat& local, const Mat& global);

/// Euclidean length of every bone of one J x 3 frame, in edge order.
Eigen::VectorXd bone_length_vector(const Mat& frame, const SkeletonTopology& topology);

/// Subtracts the root joint from every joint, frame by frame.
Pose3DSequence root_center(const Pose3DSequence& pose, int root = 0);

/// Mean bone length over all frames of a sequence.
double mean_bone_length(const Pose3DSequence& pose, const SkeletonTopology& topology);

}  // namespace dp3d
