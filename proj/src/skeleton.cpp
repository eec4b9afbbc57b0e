#include "dp3d/skeleton.hpp"

#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

#include "dp3d/error.hpp"

namespace dp3d {

namespace {

int find_root(std::vector<int>& parent, int x) {
  while (parent[static_cast<size_t>(x)] != x) {
    parent[static_cast<size_t>(x)] = parent[static_cast<size_t>(parent[static_cast<size_t>(x)])];
    x = parent[static_cast<size_t>(x)];
  }
  return x;
}

void require_finite(const Mat& m, const char* what) {
  if (!m.allFinite()) throw NumericError(std::string(what) + ": non-finite values");
}

}  // namespace

int SkeletonTopology::joint_index(const std::string& name) const {
  for (int i = 0; i < joint_count(); ++i) {
    if (joint_names[static_cast<size_t>(i)] == name) return i;
  }
  return -1;
}

void SkeletonTopology::validate() const {
  const int j = joint_count();
  if (j <= 0) throw FormatError("topology: no joints");
  if (root < 0 || root >= j) throw FormatError("topology: root out of range");
  if (bone_count() != j - 1) {
    throw FormatError("topology: a spanning tree over " + std::to_string(j) + " joints needs " +
                      std::to_string(j - 1) + " edges, got " + std::to_string(bone_count()));
  }
  std::vector<int> parent(static_cast<size_t>(j));
  std::iota(parent.begin(), parent.end(), 0);
  for (const auto& [a, b] : edges) {
    if (a < 0 || a >= j || b < 0 || b >= j) throw FormatError("topology: edge index out of range");
    if (a == b) throw FormatError("topology: self loop");
    const int ra = find_root(parent, a);
    const int rb = find_root(parent, b);
    if (ra == rb) throw FormatError("topology: edges contain a cycle");
    parent[static_cast<size_t>(ra)] = rb;
  }
  // J-1 edges without a cycle on J nodes is connected.
  std::vector<int> used(static_cast<size_t>(bone_count()), 0);
  for (const auto& [l, r] : paired_bones) {
    if (l < 0 || l >= bone_count() || r < 0 || r >= bone_count()) {
      throw FormatError("topology: paired bone index out of range");
    }
    if (l == r) throw FormatError("topology: a bone cannot be paired with itself");
    if (used[static_cast<size_t>(l)]++ != 0 || used[static_cast<size_t>(r)]++ != 0) {
      throw FormatError("topology: bone appears in more than one pair");
    }
  }
}

SkeletonTopology SkeletonTopology::h36m17() {
  SkeletonTopology t;
  t.id = "h36m17";
  t.joint_names = {"Pelvis",    "RHip",      "RKnee",  "RAnkle", "LHip",      "LKnee",
                   "LAnkle",    "Spine",     "Thorax", "Neck",   "Head",      "LShoulder",
                   "LElbow",    "LWrist",    "RShoulder", "RElbow", "RWrist"};
  t.edges = {{0, 1},  {1, 2},  {2, 3},  {0, 4},   {4, 5},   {5, 6},   {0, 7},   {7, 8},
             {8, 9},  {9, 10}, {8, 11}, {11, 12}, {12, 13}, {8, 14},  {14, 15}, {15, 16}};
  // left hip/thigh/shin vs right, left clavicle/upper arm/forearm vs right
  t.paired_bones = {{3, 0}, {4, 1}, {5, 2}, {10, 13}, {11, 14}, {12, 15}};
  t.root = 0;
  return t;
}

SkeletonTopology SkeletonTopology::from_json_text(const std::string& text) {
  SkeletonTopology t;
  try {
    const auto j = nlohmann::json::parse(text);
    t.id = j.value("id", std::string("custom"));
    t.joint_names = j.at("joints").get<std::vector<std::string>>();
    for (const auto& e : j.at("edges")) t.edges.emplace_back(e.at(0).get<int>(), e.at(1).get<int>());
    if (j.contains("paired_bones")) {
      for (const auto& p : j.at("paired_bones")) {
        t.paired_bones.emplace_back(p.at(0).get<int>(), p.at(1).get<int>());
      }
    }
    t.root = j.value("root", 0);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("topology: ") + e.what());
  }
  t.validate();
  return t;
}

SkeletonTopology SkeletonTopology::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("topology: cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return from_json_text(ss.str());
}

std::string SkeletonTopology::to_json_text() const {
  nlohmann::json j;
  j["id"] = id;
  j["joints"] = joint_names;
  j["edges"] = nlohmann::json::array();
  for (const auto& [a, b] : edges) j["edges"].push_back({a, b});
  j["paired_bones"] = nlohmann::json::array();
  for (const auto& [l, r] : paired_bones) j["paired_bones"].push_back({l, r});
  j["root"] = root;
  return j.dump(2);
}

Pose3DSequence Pose3DSequence::zeros(int frames, int joints) {
  return {frames, joints, Mat::Zero(frames * joints, 3)};
}

void Pose3DSequence::validate() const {
  if (frames <= 0 || joints <= 0 || data.rows() != frames * joints || data.cols() != 3) {
    throw ShapeError("Pose3DSequence: data must be (N*J) x 3");
  }
  require_finite(data, "Pose3DSequence");
}

Pose2DSequence Pose2DSequence::zeros(int frames, int joints) {
  return {frames, joints, Mat::Zero(frames * joints, 2), Mat()};
}

void Pose2DSequence::validate() const {
  if (frames <= 0 || joints <= 0 || data.rows() != frames * joints || data.cols() != 2) {
    throw ShapeError("Pose2DSequence: data must be (N*J) x 2");
  }
  require_finite(data, "Pose2DSequence");
  if (confidence.size() > 0) {
    if (confidence.rows() != frames || confidence.cols() != joints) {
      throw ShapeError("Pose2DSequence: confidence must be N x J");
    }
    if ((confidence.array() < 0.0).any() || (confidence.array() > 1.0).any()) {
      throw RangeError("Pose2DSequence: confidence outside [0, 1]");
    }
  }
}

Mat build_local_affinity(const SkeletonTopology& topology) {
  topology.validate();
  const int j = topology.joint_count();
  std::vector<double> degree(static_cast<size_t>(j), 0.0);
  for (const auto& [a, b] : topology.edges) {
    degree[static_cast<size_t>(a)] += 1.0;
    degree[static_cast<size_t>(b)] += 1.0;
  }
  Mat a = Mat::Zero(j, j);
  for (const auto& [p, c] : topology.edges) {
    const double w = 1.0 / std::sqrt(degree[static_cast<size_t>(p)] * degree[static_cast<size_t>(c)]);
    a(p, c) = w;
    a(c, p) = w;
  }
  return a;
}

Mat fuse_affinity(const Mat& local, const Mat& global) {
  if (local.rows() != local.cols() || global.rows() != local.rows() || global.cols() != local.cols()) {
    throw ShapeError("fuse_affinity: both matrices must be J x J");
  }
  require_finite(local, "fuse_affinity local");
  require_finite(global, "fuse_affinity global");
  const Mat s = local + global;
  return 0.5 * (s + s.transpose());
}

Eigen::VectorXd bone_length_vector(const Mat& frame, const SkeletonTopology& topology) {
  if (frame.rows() != topology.joint_count() || frame.cols() != 3) {
    throw ShapeError("bone_length_vector: frame must be J x 3");
  }
  require_finite(frame, "bone_length_vector");
  Eigen::VectorXd len(topology.bone_count());
  for (int e = 0; e < topology.bone_count(); ++e) {
    const auto& [p, c] = topology.edges[static_cast<size_t>(e)];
    len(e) = (frame.row(c) - frame.row(p)).norm();
  }
  return len;
}

Pose3DSequence root_center(const Pose3DSequence& pose, int root) {
  pose.validate();
  if (root < 0 || root >= pose.joints) throw RangeError("root_center: root joint out of range");
  Pose3DSequence out = pose;
  for (int f = 0; f < pose.frames; ++f) {
    const Eigen::RowVector3d r = pose.data.row(f * pose.joints + root);
    out.data.middleRows(f * pose.joints, pose.joints).rowwise() -= r;
  }
  return out;
}

double mean_bone_length(const Pose3DSequence& pose, const SkeletonTopology& topology) {
  double sum = 0.0;
  for (int f = 0; f < pose.frames; ++f) sum += bone_length_vector(pose.frame(f), topology).sum();
  return sum / (static_cast<double>(pose.frames) * topology.bone_count());
}

}  // namespace dp3d
