#pragma once

#include <vector>

#include "dp3d/config.hpp"
#include "dp3d/params.hpp"

namespace dp3d {

/// Adam with decoupled weight decay. Parameters are rounded to the float32
/// grid after every update.
class AdamW {
 public:
  AdamW(const OptimizerConfig& config, const ParameterSet& ps);

  /// grads is indexed like the parameter set; empty entries count as zero.
  void step(ParameterSet& ps, const std::vector<Mat>& grads, double lr);
  int steps() const { return steps_; }
  const OptimizerConfig& config() const { return config_; }

 private:
  OptimizerConfig config_;
  std::vector<Mat> m_;
  std::vector<Mat> v_;
  int steps_ = 0;
};

/// Learning rate for a step under the configured decay.
double scheduled_lr(const OptimizerConfig& config, int step, int total_steps);

/// Scales grads in place so their global L2 norm is at most max_norm;
/// returns the norm before clipping.
double clip_global_norm(std::vector<Mat>& grads, double max_norm);

}  // namespace dp3d
