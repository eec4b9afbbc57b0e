#include "dp3d/optimizer.hpp"

#include <cmath>
#include <numbers>

#include "dp3d/error.hpp"

namespace dp3d {

AdamW::AdamW(const OptimizerConfig& config, const ParameterSet& ps) : config_(config) {
  for (const auto& p : ps) {
    m_.push_back(Mat::Zero(p.value.rows(), p.value.cols()));
    v_.push_back(Mat::Zero(p.value.rows(), p.value.cols()));
  }
}

void AdamW::step(ParameterSet& ps, const std::vector<Mat>& grads, double lr) {
  if (static_cast<int>(grads.size()) != ps.size() || static_cast<int>(m_.size()) != ps.size()) {
    throw ShapeError("AdamW: gradient list does not match the parameter set");
  }
  ++steps_;
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, steps_);
  const double c2 = 1.0 - std::pow(b2, steps_);
  for (int i = 0; i < ps.size(); ++i) {
    Mat& w = ps[i].value;
    Mat& m = m_[static_cast<size_t>(i)];
    Mat& v = v_[static_cast<size_t>(i)];
    const Mat& g = grads[static_cast<size_t>(i)];
    if (g.size() > 0) {
      if (g.rows() != w.rows() || g.cols() != w.cols()) throw ShapeError("AdamW: gradient shape for " + ps[i].name);
      m = b1 * m + (1.0 - b1) * g;
      v = b2 * v + (1.0 - b2) * g.cwiseProduct(g);
    } else {
      m *= b1;
      v *= b2;
    }
    const Mat update = (m / c1).array() / ((v / c2).array().sqrt() + config_.eps);
    w -= lr * (update + config_.weight_decay * w);
    round_to_float32(w);
  }
}

double scheduled_lr(const OptimizerConfig& config, int step, int total_steps) {
  const double ramp = step < config.warmup_steps ? static_cast<double>(step + 1) / config.warmup_steps : 1.0;
  if (!config.cosine_decay || total_steps <= 1) return config.lr * ramp;
  const double progress = std::clamp(static_cast<double>(step) / (total_steps - 1), 0.0, 1.0);
  const double floor = config.min_lr_fraction;
  return ramp * config.lr * (floor + (1.0 - floor) * 0.5 * (1.0 + std::cos(std::numbers::pi * progress)));
}

double clip_global_norm(std::vector<Mat>& grads, double max_norm) {
  double sq = 0.0;
  for (const auto& g : grads) sq += g.squaredNorm();
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double s = max_norm / norm;
    for (auto& g : grads) g *= s;
  }
  return norm;
}

}  // namespace dp3d
