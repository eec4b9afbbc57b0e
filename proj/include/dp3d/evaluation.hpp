#pragma once

// Pose metrics (mm): mPJPE, similarity-Procrustes mPJPE, PCK, AUC, per-action
// reports and trajectory export for plotting.

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "dp3d/skeleton.hpp"

namespace dp3d {

inline constexpr double kPckThresholdMm = 150.0;
inline constexpr double kAucStepMm = 5.0;

/// Thresholds 0, 5, ..., 150 mm.
std::vector<double> auc_thresholds();

/// Per-joint Euclidean errors, one entry per row.
Eigen::VectorXd joint_errors(const Pose3DSequence& pred, const Pose3DSequence& gt);

double mpjpe(const Pose3DSequence& pred, const Pose3DSequence& gt);

/// Similarity transform (s R x + t) minimising the squared distance of `pred`
/// onto `gt` for one frame (J x 3). Falls back to translation only when the
/// frame is rank deficient; `degenerate` reports that case.
Mat procrustes_align(const Mat& pred, const Mat& gt, bool with_scale = true, bool* degenerate = nullptr);

/// Per-frame Procrustes alignment followed by mPJPE.
double p_mpjpe(const Pose3DSequence& pred, const Pose3DSequence& gt, bool with_scale = true);

/// Percentage of joints whose error is strictly below the threshold.
double pck(const Pose3DSequence& pred, const Pose3DSequence& gt, double threshold_mm = kPckThresholdMm);
/// Mean PCK over auc_thresholds().
double auc(const Pose3DSequence& pred, const Pose3DSequence& gt);

struct MetricReport {
  double mpjpe = 0.0;
  double p_mpjpe = 0.0;
  double pck = 0.0;
  double auc = 0.0;
  double pck_threshold_mm = kPckThresholdMm;
  std::vector<double> auc_grid_mm;
  std::map<std::string, double> per_action;  // label -> mPJPE
  double average = 0.0;                       // unweighted mean over per_action
  long long frame_count = 0;
  int joint_count = 0;

  std::string to_json_text() const;
};

/// Accumulates metrics sequence by sequence; every joint counts equally in
/// the pooled numbers, each action counts once in `average`.
class MetricAccumulator {
 public:
  void add(const Pose3DSequence& pred, const Pose3DSequence& gt, const std::string& action);
  MetricReport report() const;

 private:
  struct Sums {
    double err = 0.0;
    double count = 0.0;
  };
  double err_ = 0.0, aligned_ = 0.0, pck_hits_ = 0.0, count_ = 0.0;
  std::vector<double> auc_hits_;
  std::map<std::string, Sums> per_action_;
  long long frames_ = 0;
  int joints_ = 0;
};

struct TrajectoryPoint {
  std::string series;  // "pred" or "gt"
  int frame = 0;
  std::string joint;
  double x = 0.0, y = 0.0, z = 0.0;
};

/// CSV with header series,frame,joint,x,y,z; rows ordered by series (pred,
/// gt), frame, then the given joint order.
void export_trajectories(const Pose3DSequence& pred, const Pose3DSequence& gt, const std::vector<int>& joints,
                         const SkeletonTopology& topology, const std::filesystem::path& out);
std::vector<TrajectoryPoint> read_trajectories(const std::filesystem::path& path);

}  // namespace dp3d
