#include "dp3d/evaluation.hpp"

#include <Eigen/LU>
#include <Eigen/SVD>

#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "dp3d/error.hpp"

namespace dp3d {

namespace {

void check_pair(const Pose3DSequence& pred, const Pose3DSequence& gt) {
  pred.validate();
  gt.validate();
  if (pred.frames != gt.frames || pred.joints != gt.joints) {
    throw ShapeError("metrics: prediction is " + std::to_string(pred.frames) + "x" + std::to_string(pred.joints) +
                     " but ground truth is " + std::to_string(gt.frames) + "x" + std::to_string(gt.joints));
  }
}

double percent_below(const Eigen::VectorXd& err, double threshold) {
  return 100.0 * static_cast<double>((err.array() < threshold).count()) / static_cast<double>(err.size());
}

}  // namespace

std::vector<double> auc_thresholds() {
  std::vector<double> t;
  for (int i = 0; i <= 30; ++i) t.push_back(kAucStepMm * i);
  return t;
}

Eigen::VectorXd joint_errors(const Pose3DSequence& pred, const Pose3DSequence& gt) {
  check_pair(pred, gt);
  return (pred.data - gt.data).rowwise().norm();
}

double mpjpe(const Pose3DSequence& pred, const Pose3DSequence& gt) { return joint_errors(pred, gt).mean(); }

Mat procrustes_align(const Mat& pred, const Mat& gt, bool with_scale, bool* degenerate) {
  if (pred.rows() != gt.rows() || pred.cols() != 3 || gt.cols() != 3) throw ShapeError("procrustes: shape mismatch");
  const Eigen::RowVector3d mu_p = pred.colwise().mean();
  const Eigen::RowVector3d mu_g = gt.colwise().mean();
  const Mat x = pred.rowwise() - mu_p;
  const Mat y = gt.rowwise() - mu_g;
  const Eigen::Matrix3d cov = y.transpose() * x;  // sum_j y_j x_j^T
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Eigen::Vector3d sv = svd.singularValues();
  const double norm_x = x.squaredNorm();
  const bool rank_deficient = norm_x < 1e-24 || sv(1) <= 1e-12 * std::max(1.0, sv(0));
  if (degenerate != nullptr) *degenerate = rank_deficient;
  if (rank_deficient) return x.rowwise() + mu_g;

  Eigen::Matrix3d d = Eigen::Matrix3d::Identity();
  if ((svd.matrixU() * svd.matrixV().transpose()).determinant() < 0.0) d(2, 2) = -1.0;
  const Eigen::Matrix3d r = svd.matrixU() * d * svd.matrixV().transpose();
  const double s = with_scale ? (sv.asDiagonal() * d).trace() / norm_x : 1.0;
  return ((s * x * r.transpose()).rowwise() + mu_g);
}

double p_mpjpe(const Pose3DSequence& pred, const Pose3DSequence& gt, bool with_scale) {
  check_pair(pred, gt);
  double sum = 0.0;
  int degenerate_frames = 0;
  for (int f = 0; f < pred.frames; ++f) {
    bool degenerate = false;
    const Mat g = gt.frame(f);
    const Mat aligned = procrustes_align(pred.frame(f), g, with_scale, &degenerate);
    degenerate_frames += degenerate ? 1 : 0;
    sum += (aligned - g).rowwise().norm().sum();
  }
  if (degenerate_frames > 0) {
    std::clog << "warning: p_mpjpe: " << degenerate_frames << " rank-deficient frame(s) aligned by translation only\n";
  }
  return sum / (static_cast<double>(pred.frames) * pred.joints);
}

double pck(const Pose3DSequence& pred, const Pose3DSequence& gt, double threshold_mm) {
  return percent_below(joint_errors(pred, gt), threshold_mm);
}

double auc(const Pose3DSequence& pred, const Pose3DSequence& gt) {
  const Eigen::VectorXd err = joint_errors(pred, gt);
  const auto grid = auc_thresholds();
  double sum = 0.0;
  for (double t : grid) sum += percent_below(err, t);
  return sum / static_cast<double>(grid.size());
}

std::string MetricReport::to_json_text() const {
  nlohmann::json j;
  j["mpjpe_mm"] = mpjpe;
  j["p_mpjpe_mm"] = p_mpjpe;
  j["pck_percent"] = pck;
  j["pck_threshold_mm"] = pck_threshold_mm;
  j["auc_percent"] = auc;
  j["auc_grid_mm"] = auc_grid_mm;
  j["per_action_mpjpe_mm"] = per_action;
  j["average_mpjpe_mm"] = average;
  j["frame_count"] = frame_count;
  j["joint_count"] = joint_count;
  return j.dump(2);
}

void MetricAccumulator::add(const Pose3DSequence& pred, const Pose3DSequence& gt, const std::string& action) {
  const Eigen::VectorXd err = joint_errors(pred, gt);
  if (joints_ != 0 && joints_ != pred.joints) throw ShapeError("metric accumulator: joint count changed");
  joints_ = pred.joints;
  const auto grid = auc_thresholds();
  if (auc_hits_.empty()) auc_hits_.assign(grid.size(), 0.0);
  const double n = static_cast<double>(err.size());
  err_ += err.sum();
  aligned_ += p_mpjpe(pred, gt) * n;
  pck_hits_ += static_cast<double>((err.array() < kPckThresholdMm).count());
  for (size_t i = 0; i < grid.size(); ++i) auc_hits_[i] += static_cast<double>((err.array() < grid[i]).count());
  count_ += n;
  frames_ += pred.frames;
  auto& a = per_action_[action];
  a.err += err.sum();
  a.count += n;
}

MetricReport MetricAccumulator::report() const {
  MetricReport r;
  r.auc_grid_mm = auc_thresholds();
  r.frame_count = frames_;
  r.joint_count = joints_;
  if (count_ == 0.0) return r;
  r.mpjpe = err_ / count_;
  r.p_mpjpe = aligned_ / count_;
  r.pck = 100.0 * pck_hits_ / count_;
  double auc_sum = 0.0;
  for (double h : auc_hits_) auc_sum += 100.0 * h / count_;
  r.auc = auc_sum / static_cast<double>(auc_hits_.size());
  double avg = 0.0;
  for (const auto& [label, s] : per_action_) {
    r.per_action[label] = s.err / s.count;
    avg += s.err / s.count;
  }
  r.average = avg / static_cast<double>(per_action_.size());
  return r;
}

void export_trajectories(const Pose3DSequence& pred, const Pose3DSequence& gt, const std::vector<int>& joints,
                         const SkeletonTopology& topology, const std::filesystem::path& out) {
  check_pair(pred, gt);
  if (topology.joint_count() != pred.joints) throw ShapeError("export_trajectories: topology joint count mismatch");
  for (int j : joints) {
    if (j < 0 || j >= pred.joints) throw RangeError("export_trajectories: joint index " + std::to_string(j));
  }
  std::ofstream f(out);
  if (!f) throw std::runtime_error("export_trajectories: cannot open " + out.string());
  f << "series,frame,joint,x,y,z\n" << std::setprecision(9);
  for (const auto* s : {&pred, &gt}) {
    const char* name = s == &pred ? "pred" : "gt";
    for (int fr = 0; fr < s->frames; ++fr) {
      for (int j : joints) {
        const auto row = s->data.row(fr * s->joints + j);
        f << name << ',' << fr << ',' << topology.joint_names[static_cast<size_t>(j)] << ','
          << static_cast<float>(row(0)) << ',' << static_cast<float>(row(1)) << ',' << static_cast<float>(row(2))
          << '\n';
      }
    }
  }
  if (!f) throw std::runtime_error("export_trajectories: write failed for " + out.string());
}

std::vector<TrajectoryPoint> read_trajectories(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("read_trajectories: cannot open " + path.string());
  std::string line;
  if (!std::getline(f, line) || line != "series,frame,joint,x,y,z") {
    throw FormatError("read_trajectories: unexpected header in " + path.string());
  }
  std::vector<TrajectoryPoint> out;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string field;
    std::vector<std::string> parts;
    while (std::getline(ss, field, ',')) parts.push_back(field);
    if (parts.size() != 6) throw FormatError("read_trajectories: malformed row: " + line);
    try {
      out.push_back({parts[0], std::stoi(parts[1]), parts[2], std::stod(parts[3]), std::stod(parts[4]),
                     std::stod(parts[5])});
    } catch (const std::logic_error&) {
      throw FormatError("read_trajectories: malformed number in row: " + line);
    }
  }
  return out;
}

}  // namespace dp3d
