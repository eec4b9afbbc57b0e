#pragma once

// The assembled lifter: intent classifier -> prompt -> frozen text encoder
// -> context head -> prompt-conditioned denoiser, plus the diffusion
// schedule used for training and sampling.

#include <memory>
#include <string>
#include <vector>

#include "dp3d/config.hpp"
#include "dp3d/dataset.hpp"

namespace dp3d {

struct InferResult {
  Pose3DSequence pose;  // mm, root-relative
  int label = -1;       // predicted class (-1 without prompting)
  std::string prompt;
  int steps = 0;
  uint64_t seed = 0;
};

class PoseLifter {
 public:
  /// Initialises every parameter from config.seed.
  PoseLifter(const TrainConfig& config, const SkeletonTopology& topology, const ActionVocabulary& vocabulary,
             std::shared_ptr<const TextEncoder> encoder);

  const TrainConfig& config() const { return config_; }
  const SkeletonTopology& topology() const { return topology_; }
  const ActionVocabulary& vocabulary() const { return vocabulary_; }
  const TextEncoder& encoder() const { return *encoder_; }
  const NoiseSchedule& schedule() const { return schedule_; }
  const Denoiser& denoiser() const { return denoiser_; }
  const IntentClassifier& classifier() const { return classifier_; }
  ParameterSet& params() { return params_; }
  const ParameterSet& params() const { return params_; }

  /// Pooled frozen-encoder features of the prompt for a label (cached).
  const Mat& prompt_features(int label) const;
  /// E_c for a label (zeros when prompting is disabled).
  ag::Var context(ag::Tape& tape, int label) const;
  Mat context_values(int label) const;

  /// Converts between mm and model units.
  Mat to_model(const Mat& mm) const { return mm / config_.pose_scale_mm; }
  Mat to_mm(const Mat& model) const { return model * config_.pose_scale_mm; }

  struct LossInput {
    const Pose3DSequence* pose = nullptr;  // ground truth, mm
    const Pose2DSequence* keypoints = nullptr;
    int label = 0;
    int t = 1;
    const Mat* noise = nullptr;  // (N*J) x 3
  };
  /// L_net for one sequence under the given hallucination step.
  loss::Terms loss(ag::Tape& tape, const LossInput& in, const ScheduleStep& step) const;

  IntentPrediction classify(const Pose2DSequence& keypoints) const;
  InferResult infer(const Pose2DSequence& keypoints, const SamplerOptions& options) const;

 private:
  TrainConfig config_;
  SkeletonTopology topology_;
  ActionVocabulary vocabulary_;
  std::shared_ptr<const TextEncoder> encoder_;
  NoiseSchedule schedule_;
  ParameterSet params_;
  IntentClassifier classifier_;
  ContextHead context_head_;
  Denoiser denoiser_;
  std::vector<Mat> prompt_cache_;
};

}  // namespace dp3d
