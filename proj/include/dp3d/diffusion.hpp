#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dp3d/nn.hpp"
#include "dp3d/skeleton.hpp"

namespace dp3d {

enum class ScheduleFamily { Cosine, Linear };

ScheduleFamily parse_schedule_family(const std::string& name);
std::string to_string(ScheduleFamily family);

/// Cumulative signal levels alpha_bar_t for t = 0..T; alpha_bar_0 = 1 and the
/// sequence is strictly decreasing inside (0, 1].
class NoiseSchedule {
 public:
  NoiseSchedule(ScheduleFamily family, int max_steps);
  static NoiseSchedule cosine(int max_steps) { return {ScheduleFamily::Cosine, max_steps}; }
  static NoiseSchedule linear(int max_steps) { return {ScheduleFamily::Linear, max_steps}; }

  int max_steps() const { return max_steps_; }
  ScheduleFamily family() const { return family_; }
  double alpha_bar(int t) const;
  const std::vector<double>& alpha_bars() const { return alpha_bar_; }

 private:
  ScheduleFamily family_;
  int max_steps_;
  std::vector<double> alpha_bar_;
};

/// sqrt(alpha_bar_t) * y0 + sqrt(1 - alpha_bar_t) * eps, elementwise.
Mat forward_diffuse(const Mat& y0, int t, const Mat& eps, const NoiseSchedule& schedule);

/// Interleaved [sin(w_0 t), cos(w_0 t), sin(w_1 t), ...] with w_i spaced
/// geometrically from 1 down to 1/10000. Returns a 1 x width row.
Mat sinusoidal_embed(int t, int width);

/// MLP_t: sinusoidal code -> Linear -> GELU -> Linear, width channels.
class TimestepEmbedding {
 public:
  TimestepEmbedding() = default;
  TimestepEmbedding(ParameterSet& ps, const std::string& name, int width, int max_steps, std::mt19937_64& rng);

  ag::Var forward(ag::Tape& tape, const ParameterSet& ps, int t) const;
  Mat embed(const ParameterSet& ps, int t) const;
  int width() const { return width_; }

 private:
  nn::Linear fc1_;
  nn::Linear fc2_;
  int width_ = 0;
  int max_steps_ = 0;
};

/// Anything that predicts the clean sequence Y_0 from (Y_t, X, E_c, t).
class PoseDenoiser {
 public:
  virtual ~PoseDenoiser() = default;
  /// yt and the result are (N*J) x 3 in model units.
  virtual Mat predict_clean(const Mat& yt, const Pose2DSequence& x2d, const Mat& context, int t) const = 0;
};

struct SamplerOptions {
  int steps = 5;
  /// eps = 0 when re-noising between steps; otherwise eps is redrawn per step.
  bool deterministic = false;
  uint64_t seed = 0;
};

/// The K decreasing timesteps visited by the sampler: round(T * k / K) for
/// k = K..1 (duplicates removed, so K > T degrades to every step).
std::vector<int> sampling_timesteps(int max_steps, int steps);

/// Starts from Y_T ~ N(0, I), alternates clean prediction and re-noising to
/// the next visited timestep, and returns the last clean prediction.
/// Throws NumericError naming the step if the denoiser emits NaN/Inf.
Mat reverse_sample(const Pose2DSequence& x2d, const Mat& context, const PoseDenoiser& denoiser,
                   const NoiseSchedule& schedule, const SamplerOptions& options);

}  // namespace dp3d
