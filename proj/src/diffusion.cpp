#include "dp3d/diffusion.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "dp3d/error.hpp"

namespace dp3d {

ScheduleFamily parse_schedule_family(const std::string& name) {
  if (name == "cosine") return ScheduleFamily::Cosine;
  if (name == "linear") return ScheduleFamily::Linear;
  throw RangeError("unknown noise schedule family: " + name);
}

std::string to_string(ScheduleFamily family) {
  return family == ScheduleFamily::Cosine ? "cosine" : "linear";
}

NoiseSchedule::NoiseSchedule(ScheduleFamily family, int max_steps) : family_(family), max_steps_(max_steps) {
  if (max_steps < 1) throw RangeError("noise schedule needs at least one step");
  const auto t_max = static_cast<double>(max_steps);
  std::vector<double> betas(static_cast<size_t>(max_steps) + 1, 0.0);
  if (family == ScheduleFamily::Cosine) {
    constexpr double s = 0.008;
    auto f = [&](double t) {
      const double c = std::cos((t / t_max + s) / (1.0 + s) * M_PI / 2.0);
      return c * c;
    };
    for (int t = 1; t <= max_steps; ++t) {
      betas[static_cast<size_t>(t)] = std::min(1.0 - f(t) / f(t - 1), 0.999);
    }
  } else {
    // Standard 1e-4..0.02 range rescaled so short schedules still reach noise.
    const double scale = 1000.0 / t_max;
    const double lo = 1e-4 * scale;
    const double hi = std::min(0.02 * scale, 0.999);
    for (int t = 1; t <= max_steps; ++t) {
      const double u = max_steps == 1 ? 1.0 : static_cast<double>(t - 1) / (t_max - 1.0);
      betas[static_cast<size_t>(t)] = lo + (hi - lo) * u;
    }
  }
  alpha_bar_.assign(static_cast<size_t>(max_steps) + 1, 1.0);
  for (int t = 1; t <= max_steps; ++t) {
    alpha_bar_[static_cast<size_t>(t)] = alpha_bar_[static_cast<size_t>(t) - 1] * (1.0 - betas[static_cast<size_t>(t)]);
  }
  for (int t = 1; t <= max_steps; ++t) {
    const double a = alpha_bar_[static_cast<size_t>(t)];
    if (!(a > 0.0 && a < alpha_bar_[static_cast<size_t>(t) - 1])) {
      throw NumericError("noise schedule is not strictly decreasing in (0, 1] at t=" + std::to_string(t));
    }
  }
}

double NoiseSchedule::alpha_bar(int t) const {
  if (t < 0 || t > max_steps_) {
    throw RangeError("timestep " + std::to_string(t) + " outside [0, " + std::to_string(max_steps_) + "]");
  }
  return alpha_bar_[static_cast<size_t>(t)];
}

Mat forward_diffuse(const Mat& y0, int t, const Mat& eps, const NoiseSchedule& schedule) {
  const double a = schedule.alpha_bar(t);
  if (eps.rows() != y0.rows() || eps.cols() != y0.cols()) throw ShapeError("forward_diffuse: noise shape mismatch");
  if (t == 0) return y0;
  return std::sqrt(a) * y0 + std::sqrt(1.0 - a) * eps;
}

Mat sinusoidal_embed(int t, int width) {
  if (width < 2 || width % 2 != 0) throw RangeError("sinusoidal_embed: width must be even and >= 2");
  const int half = width / 2;
  Mat out(1, width);
  for (int i = 0; i < half; ++i) {
    const double exponent = half == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(half - 1);
    const double freq = std::pow(10000.0, -exponent);
    out(0, 2 * i) = std::sin(freq * t);
    out(0, 2 * i + 1) = std::cos(freq * t);
  }
  return out;
}

TimestepEmbedding::TimestepEmbedding(ParameterSet& ps, const std::string& name, int width, int max_steps,
                                     std::mt19937_64& rng)
    : fc1_(nn::Linear::create(ps, name + ".fc1", width, width, rng)),
      fc2_(nn::Linear::create(ps, name + ".fc2", width, width, rng)),
      width_(width),
      max_steps_(max_steps) {}

ag::Var TimestepEmbedding::forward(ag::Tape& tape, const ParameterSet& ps, int t) const {
  if (t < 0 || t > max_steps_) throw RangeError("timestep_embed: t out of range");
  ag::Var code = tape.constant(sinusoidal_embed(t, width_));
  return fc2_(tape, ps, ag::gelu(fc1_(tape, ps, code)));
}

Mat TimestepEmbedding::embed(const ParameterSet& ps, int t) const {
  ag::Tape tape(false);
  return forward(tape, ps, t).value();
}

std::vector<int> sampling_timesteps(int max_steps, int steps) {
  if (steps < 1) throw RangeError("sampler needs K >= 1");
  std::vector<int> ts;
  for (int k = steps; k >= 1; --k) {
    const int t = static_cast<int>(std::lround(static_cast<double>(max_steps) * k / steps));
    if (t >= 1 && (ts.empty() || t < ts.back())) ts.push_back(t);
  }
  return ts;
}

Mat reverse_sample(const Pose2DSequence& x2d, const Mat& context, const PoseDenoiser& denoiser,
                   const NoiseSchedule& schedule, const SamplerOptions& options) {
  const std::vector<int> ts = sampling_timesteps(schedule.max_steps(), options.steps);
  std::mt19937_64 rng(options.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  auto noise = [&] {
    Mat m(static_cast<Eigen::Index>(x2d.frames) * x2d.joints, 3);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = normal(rng);
    return m;
  };
  Mat yt = noise();
  Mat y0;
  for (size_t k = 0; k < ts.size(); ++k) {
    y0 = denoiser.predict_clean(yt, x2d, context, ts[k]);
    if (!y0.allFinite()) {
      throw NumericError("reverse_sample: denoiser produced non-finite output at step " + std::to_string(k) +
                         " (t=" + std::to_string(ts[k]) + ")");
    }
    if (k + 1 < ts.size()) {
      const Mat eps = options.deterministic ? Mat::Zero(y0.rows(), y0.cols()) : noise();
      yt = forward_diffuse(y0, ts[k + 1], eps, schedule);
    }
  }
  return y0;
}

}  // namespace dp3d
