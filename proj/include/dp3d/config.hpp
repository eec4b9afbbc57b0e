#pragma once

// Training / model configuration, its JSON form, named profiles and the
// ablation presets.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "dp3d/denoiser.hpp"
#include "dp3d/diffusion.hpp"
#include "dp3d/objectives.hpp"
#include "dp3d/prompting.hpp"

namespace dp3d {

struct OptimizerConfig {
  double lr = 3e-3;
  double weight_decay = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double grad_clip = 1.0;   // global norm; 0 disables
  bool cosine_decay = true;  // decays to min_lr_fraction * lr at max_steps
  double min_lr_fraction = 0.05;
  int warmup_steps = 100;  // linear ramp from lr / warmup_steps
};

struct TrainConfig {
  std::string profile = "desk";

  // model
  int frames = 16;
  int channels = 64;
  int depth = 2;  // M
  int heads = 2;  // L
  int block_heads = 2;
  int hidden = 128;
  int max_hallucination = 3;
  bool use_affinity = true;
  int context_slots = 2;
  double pose_scale_mm = 1000.0;  // model units = mm / pose_scale_mm
  double keypoint_gain = 4.0;     // 2D keypoints are multiplied by this before the denoiser
  double position_init_std = 1.0;
  ClassifierConfig classifier;

  // conditioning
  bool use_apl = true;
  std::string text_encoder = "stub";

  // schedule & diffusion
  SamplingSchedule schedule;
  ScheduleFamily noise_family = ScheduleFamily::Cosine;
  int diffusion_steps = 50;  // T
  int sampling_steps = 5;    // K
  bool deterministic_sampling = false;

  // objective
  double lambda_act = 0.01;
  double lambda_bl = 0.1;
  bool bl_against_gt = false;

  // optimisation
  OptimizerConfig optimizer;
  uint64_t seed = 0;
  int epochs = 1000;
  int max_steps = 3000;
  int batch_size = 8;

  void validate() const;
  DenoiserConfig denoiser(int joints) const;
  ClassifierConfig classifier_config(int joints, int classes) const;
  LossWeights loss_weights(int n) const;

  std::string to_json_text() const;
  static TrainConfig from_json_text(const std::string& text);
  static TrainConfig load(const std::filesystem::path& path);
  uint64_t hash() const;

  /// "desk" (N=16, C=64, M=2, L=2, T=50, K=5) or "full" (N=243, C=512,
  /// M=16, L=6, lr 1e-5, wd 1e-4, batch 4).
  static TrainConfig profile_named(const std::string& name);
};

/// fixed | falloff | controlled | n1 | n3 | n5 | n7 | no-apl | no-sre | no-hpd
const std::vector<std::string>& ablation_presets();
TrainConfig apply_preset(TrainConfig config, const std::string& preset);

/// DP3D_TEXT_ENCODER if set, else the configured encoder.
std::string resolve_text_encoder(const TrainConfig& config);

}  // namespace dp3d
