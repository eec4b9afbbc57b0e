#pragma once

// Training objective: weighted L1 over hallucinated sequences, action
// cross-entropy, left/right bone-length consistency, and the two-stage
// schedule that controls how many hallucinated sequences are supervised.

#include <string>
#include <vector>

#include "dp3d/autodiff.hpp"
#include "dp3d/denoiser.hpp"
#include "dp3d/skeleton.hpp"

namespace dp3d {

/// [1 / (1 + |k|)] for k = -(n-1)/2 .. (n-1)/2.
std::vector<double> hallucination_weights(int n);

enum class WeightRule {
  Controlled,  // n = 1 for the first stage, then 1/(1+|k|)
  Fixed,       // stage2_n from the start, every weight 1
  Falloff,     // stage2_n from the start, 1/(1+|k|)
};

WeightRule parse_weight_rule(const std::string& name);
std::string to_string(WeightRule rule);

struct SamplingSchedule {
  int stage1_epochs = 25;
  int stage2_n = 3;
  WeightRule rule = WeightRule::Controlled;

  void validate() const;
};

struct ScheduleStep {
  int n = 1;
  std::vector<double> weights{1.0};
};

ScheduleStep schedule_n(int epoch, const SamplingSchedule& schedule);

struct LossWeights {
  std::vector<double> lambda_3d{1.0};
  double lambda_act = 0.01;
  double lambda_bl = 0.1;

  void validate() const;
};

struct LossBreakdown {
  double l3d = 0.0;
  double act = 0.0;
  double bl = 0.0;
  double total = 0.0;
};

/// Row indices of ground truth matched to the offset-k prediction: frame f
/// maps to clamp(f + k, 0, N - 1).
std::vector<int> shifted_rows(int frames, int joints, int offset);

/// Plain evaluations (no tape), used for reporting and as reference values.
double hallucination_loss(const HallucinationSet& pred, const Pose3DSequence& gt, const std::vector<double>& weights);
double action_loss(const Eigen::RowVectorXd& logits, int label);
/// Mean over pairs and frames of |len(left) - len(right)| on the prediction.
/// With against_gt, mean over bones and frames of |len(pred) - len(gt)|.
double bone_length_loss(const Pose3DSequence& pred, const SkeletonTopology& topology,
                        const Pose3DSequence* gt = nullptr);
LossBreakdown combine_losses(double l3d, double act, double bl, const LossWeights& weights);
LossBreakdown total_loss(const HallucinationSet& pred, const Pose3DSequence& gt, const Eigen::RowVectorXd& logits,
                         int label, const SkeletonTopology& topology, const LossWeights& weights);

namespace loss {

ag::Var hallucination(ag::Tape& tape, const std::vector<ag::Var>& sequences, const std::vector<int>& offsets,
                      ag::Var gt, int frames, int joints, const std::vector<double>& weights);
ag::Var bone_length(ag::Tape& tape, ag::Var pred, int frames, const SkeletonTopology& topology);
/// Per-bone |len(pred) - len(gt)| variant.
ag::Var bone_length_vs_gt(ag::Tape& tape, ag::Var pred, ag::Var gt, int frames, const SkeletonTopology& topology);

struct Terms {
  ag::Var l3d;
  ag::Var act;  // tape == nullptr when the action term is disabled
  ag::Var bl;
  ag::Var total;
};

/// L_net = L'_3D + lambda_act L_act + lambda_BL L_BL; act may be an empty Var.
Terms total(ag::Tape& tape, ag::Var l3d, ag::Var act, ag::Var bl, const LossWeights& weights);

}  // namespace loss

}  // namespace dp3d
