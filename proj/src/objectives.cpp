#include "dp3d/objectives.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>

#include "dp3d/error.hpp"

namespace dp3d {

std::vector<double> hallucination_weights(int n) {
  std::vector<double> w;
  for (int k : hallucination_offsets(n)) w.push_back(1.0 / (1.0 + std::abs(k)));
  return w;
}

WeightRule parse_weight_rule(const std::string& name) {
  if (name == "controlled") return WeightRule::Controlled;
  if (name == "fixed") return WeightRule::Fixed;
  if (name == "falloff") return WeightRule::Falloff;
  throw RangeError("unknown weight rule: " + name);
}

std::string to_string(WeightRule rule) {
  switch (rule) {
    case WeightRule::Controlled: return "controlled";
    case WeightRule::Fixed: return "fixed";
    case WeightRule::Falloff: return "falloff";
  }
  return "controlled";
}

void SamplingSchedule::validate() const {
  if (stage1_epochs < 0) throw RangeError("sampling schedule: stage1_epochs must be >= 0");
  hallucination_offsets(stage2_n);
}

ScheduleStep schedule_n(int epoch, const SamplingSchedule& schedule) {
  schedule.validate();
  if (epoch < 0) throw RangeError("schedule_n: negative epoch");
  switch (schedule.rule) {
    case WeightRule::Fixed:
      return {schedule.stage2_n, std::vector<double>(static_cast<size_t>(schedule.stage2_n), 1.0)};
    case WeightRule::Falloff:
      return {schedule.stage2_n, hallucination_weights(schedule.stage2_n)};
    case WeightRule::Controlled:
      if (epoch < schedule.stage1_epochs) return {1, {1.0}};
      return {schedule.stage2_n, hallucination_weights(schedule.stage2_n)};
  }
  return {};
}

void LossWeights::validate() const {
  if (lambda_3d.empty() || lambda_3d.size() % 2 == 0) throw RangeError("loss weights: lambda_3d needs odd length");
  for (double w : lambda_3d) {
    if (w < 0.0) throw RangeError("loss weights: negative lambda_3d");
  }
  if (lambda_3d[lambda_3d.size() / 2] != 1.0) throw RangeError("loss weights: centre lambda_3d must be 1");
  if (lambda_act < 0.0 || lambda_bl < 0.0) throw RangeError("loss weights: negative lambda");
}

std::vector<int> shifted_rows(int frames, int joints, int offset) {
  std::vector<int> rows;
  rows.reserve(static_cast<size_t>(frames) * joints);
  for (int f = 0; f < frames; ++f) {
    const int src = std::clamp(f + offset, 0, frames - 1);
    for (int j = 0; j < joints; ++j) rows.push_back(src * joints + j);
  }
  return rows;
}

double hallucination_loss(const HallucinationSet& pred, const Pose3DSequence& gt, const std::vector<double>& weights) {
  gt.validate();
  if (weights.size() != pred.offsets.size() || pred.sequences.size() != pred.offsets.size()) {
    throw ShapeError("hallucination_loss: weights do not match the hallucination set");
  }
  if (pred.frames != gt.frames || pred.joints != gt.joints) throw ShapeError("hallucination_loss: N/J mismatch");
  double total = 0.0;
  for (size_t s = 0; s < pred.offsets.size(); ++s) {
    const Mat& p = pred.sequences[s];
    if (p.rows() != gt.data.rows() || p.cols() != 3) throw ShapeError("hallucination_loss: sequence shape mismatch");
    const auto rows = shifted_rows(gt.frames, gt.joints, pred.offsets[s]);
    double sum = 0.0;
    for (size_t r = 0; r < rows.size(); ++r) {
      for (int c = 0; c < 3; ++c) sum += std::abs(p(static_cast<Eigen::Index>(r), c) - gt.data(rows[r], c));
    }
    total += weights[s] * sum / static_cast<double>(p.size());
  }
  return total;
}

double action_loss(const Eigen::RowVectorXd& logits, int label) {
  if (label < 0 || label >= logits.size()) throw RangeError("action_loss: label out of range");
  const double m = logits.maxCoeff();
  return m + std::log((logits.array() - m).exp().sum()) - logits(label);
}

double bone_length_loss(const Pose3DSequence& pred, const SkeletonTopology& topology, const Pose3DSequence* gt) {
  pred.validate();
  if (gt != nullptr) {
    double sum = 0.0;
    for (int f = 0; f < pred.frames; ++f) {
      sum += (bone_length_vector(pred.frame(f), topology) - bone_length_vector(gt->frame(f), topology)).cwiseAbs().sum();
    }
    return sum / (static_cast<double>(pred.frames) * topology.bone_count());
  }
  if (topology.paired_bones.empty()) {
    std::clog << "warning: bone_length_loss: topology has no paired bones, loss is 0\n";
    return 0.0;
  }
  double sum = 0.0;
  for (int f = 0; f < pred.frames; ++f) {
    const Eigen::VectorXd len = bone_length_vector(pred.frame(f), topology);
    for (const auto& [l, r] : topology.paired_bones) sum += std::abs(len(l) - len(r));
  }
  return sum / (static_cast<double>(pred.frames) * static_cast<double>(topology.paired_bones.size()));
}

LossBreakdown combine_losses(double l3d, double act, double bl, const LossWeights& weights) {
  return {l3d, act, bl, l3d + weights.lambda_act * act + weights.lambda_bl * bl};
}

LossBreakdown total_loss(const HallucinationSet& pred, const Pose3DSequence& gt, const Eigen::RowVectorXd& logits,
                         int label, const SkeletonTopology& topology, const LossWeights& weights) {
  const Pose3DSequence center{pred.frames, pred.joints, pred.center()};
  return combine_losses(hallucination_loss(pred, gt, weights.lambda_3d), action_loss(logits, label),
                        bone_length_loss(center, topology), weights);
}

namespace loss {

ag::Var hallucination(ag::Tape& tape, const std::vector<ag::Var>& sequences, const std::vector<int>& offsets,
                      ag::Var gt, int frames, int joints, const std::vector<double>& weights) {
  if (sequences.size() != offsets.size() || weights.size() != offsets.size() || sequences.empty()) {
    throw ShapeError("hallucination loss: sequences, offsets and weights must align");
  }
  ag::Var total = tape.constant(Mat::Zero(1, 1));
  for (size_t s = 0; s < sequences.size(); ++s) {
    ag::Var target = ag::gather_rows(gt, shifted_rows(frames, joints, offsets[s]));
    total = ag::add(total, ag::scale(ag::mean_abs(ag::sub(sequences[s], target)), weights[s]));
  }
  return total;
}

namespace {

ag::Var bone_vectors(ag::Var pose, int frames, int joints, const std::vector<int>& edges,
                     const SkeletonTopology& topology) {
  std::vector<int> parents, children;
  for (int f = 0; f < frames; ++f) {
    for (int e : edges) {
      parents.push_back(f * joints + topology.edges[static_cast<size_t>(e)].first);
      children.push_back(f * joints + topology.edges[static_cast<size_t>(e)].second);
    }
  }
  return ag::row_norm(ag::sub(ag::gather_rows(pose, std::move(children)), ag::gather_rows(pose, std::move(parents))));
}

}  // namespace

ag::Var bone_length(ag::Tape& tape, ag::Var pred, int frames, const SkeletonTopology& topology) {
  if (topology.paired_bones.empty()) return tape.constant(Mat::Zero(1, 1));
  std::vector<int> left, right;
  for (const auto& [l, r] : topology.paired_bones) {
    left.push_back(l);
    right.push_back(r);
  }
  const int joints = topology.joint_count();
  return ag::mean_abs(
      ag::sub(bone_vectors(pred, frames, joints, left, topology), bone_vectors(pred, frames, joints, right, topology)));
}

ag::Var bone_length_vs_gt(ag::Tape&, ag::Var pred, ag::Var gt, int frames, const SkeletonTopology& topology) {
  std::vector<int> all(static_cast<size_t>(topology.bone_count()));
  for (int e = 0; e < topology.bone_count(); ++e) all[static_cast<size_t>(e)] = e;
  const int joints = topology.joint_count();
  return ag::mean_abs(
      ag::sub(bone_vectors(pred, frames, joints, all, topology), bone_vectors(gt, frames, joints, all, topology)));
}

Terms total(ag::Tape& tape, ag::Var l3d, ag::Var act, ag::Var bl, const LossWeights& weights) {
  Terms t{l3d, act, bl, l3d};
  if (act.tape != nullptr && weights.lambda_act != 0.0) t.total = ag::add(t.total, ag::scale(act, weights.lambda_act));
  if (bl.tape != nullptr && weights.lambda_bl != 0.0) t.total = ag::add(t.total, ag::scale(bl, weights.lambda_bl));
  (void)tape;
  return t;
}

}  // namespace loss

}  // namespace dp3d
