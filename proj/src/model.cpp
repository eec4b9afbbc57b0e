#include "dp3d/model.hpp"

#include "dp3d/error.hpp"

namespace dp3d {

PoseLifter::PoseLifter(const TrainConfig& config, const SkeletonTopology& topology,
                       const ActionVocabulary& vocabulary, std::shared_ptr<const TextEncoder> encoder)
    : config_(config),
      topology_(topology),
      vocabulary_(vocabulary),
      encoder_(std::move(encoder)),
      schedule_(config.noise_family, config.diffusion_steps) {
  config.validate();
  topology.validate();
  vocabulary.validate();
  if (!encoder_) throw BackendUnavailable("pose lifter: no text encoder");
  std::mt19937_64 rng(config.seed);
  const int joints = topology.joint_count();
  classifier_ = IntentClassifier(params_, "classifier", config.classifier_config(joints, vocabulary.size()), rng);
  context_head_ = ContextHead(params_, "context", encoder_->width(), config.channels, config.context_slots, rng);
  denoiser_ = Denoiser(config.denoiser(joints), topology, params_, rng);
  for (int c = 0; c < vocabulary.size(); ++c) {
    const auto tokens = tokenize_prompt(render_prompt(c, vocabulary), *encoder_);
    prompt_cache_.push_back(context_head_.pool(encoder_->encode(tokens)));
  }
}

const Mat& PoseLifter::prompt_features(int label) const {
  if (label < 0 || label >= vocabulary_.size()) throw RangeError("label out of vocabulary");
  return prompt_cache_[static_cast<size_t>(label)];
}

ag::Var PoseLifter::context(ag::Tape& tape, int label) const {
  if (!config_.use_apl) return tape.constant(Mat::Zero(config_.context_slots, config_.channels));
  return context_head_.forward(tape, params_, prompt_features(label));
}

Mat PoseLifter::context_values(int label) const {
  ag::Tape tape(false);
  return context(tape, label).value();
}

loss::Terms PoseLifter::loss(ag::Tape& tape, const LossInput& in, const ScheduleStep& step) const {
  const Pose3DSequence& gt = *in.pose;
  const Pose2DSequence& x = *in.keypoints;
  if (gt.frames != x.frames || gt.joints != x.joints) throw ShapeError("loss: 2D/3D sequence mismatch");
  const Mat y0 = to_model(gt.data);
  const Mat yt = forward_diffuse(y0, in.t, *in.noise, schedule_);

  ag::Var x2d = tape.constant(x.data);
  const auto out = denoiser_.denoise(tape, params_, tape.constant(yt), tape.constant(x.data * config_.keypoint_gain),
                                     context(tape, in.label), in.t, step.n);
  ag::Var gt_var = tape.constant(y0);
  ag::Var l3d = loss::hallucination(tape, out.sequences, out.offsets, gt_var, gt.frames, gt.joints, step.weights);
  ag::Var bl = config_.bl_against_gt ? loss::bone_length_vs_gt(tape, out.center(), gt_var, gt.frames, topology_)
                                     : loss::bone_length(tape, out.center(), gt.frames, topology_);
  ag::Var act;
  LossWeights w = config_.loss_weights(step.n);
  w.lambda_3d = step.weights;
  if (config_.use_apl && config_.lambda_act > 0.0) {
    act = ag::cross_entropy(classifier_.forward(tape, params_, x2d, x.frames), in.label);
  }
  return loss::total(tape, l3d, act, bl, w);
}

IntentPrediction PoseLifter::classify(const Pose2DSequence& keypoints) const {
  return classify_intent(keypoints, classifier_, params_);
}

namespace {

/// Denoiser adapter with a fixed context embedding.
class Adapter final : public PoseDenoiser {
 public:
  Adapter(const Denoiser& d, const ParameterSet& ps, double gain) : d_(d), ps_(ps), gain_(gain) {}
  Mat predict_clean(const Mat& yt, const Pose2DSequence& x2d, const Mat& context, int t) const override {
    Pose2DSequence scaled = x2d;
    scaled.data *= gain_;
    return d_.denoise_values(ps_, yt, scaled, context, t, 1).center();
  }

 private:
  const Denoiser& d_;
  const ParameterSet& ps_;
  double gain_;
};

}  // namespace

InferResult PoseLifter::infer(const Pose2DSequence& keypoints, const SamplerOptions& options) const {
  keypoints.validate();
  if (keypoints.joints != topology_.joint_count()) throw ShapeError("infer: joint count differs from the model");
  if (keypoints.frames < 1 || keypoints.frames > config_.frames) {
    throw ShapeError("infer: sequence length " + std::to_string(keypoints.frames) + " exceeds the model's " +
                     std::to_string(config_.frames) + " frames");
  }
  InferResult r;
  Mat ctx;
  if (config_.use_apl) {
    r.label = classify(keypoints).label;
    r.prompt = render_prompt(r.label, vocabulary_);
    ctx = context_values(r.label);
  } else {
    ctx = Mat::Zero(config_.context_slots, config_.channels);
  }
  Adapter adapter(denoiser_, params_, config_.keypoint_gain);
  const Mat y = reverse_sample(keypoints, ctx, adapter, schedule_, options);
  r.pose = root_center(Pose3DSequence{keypoints.frames, keypoints.joints, to_mm(y)}, topology_.root);
  r.steps = options.steps;
  r.seed = options.seed;
  return r;
}

}  // namespace dp3d
