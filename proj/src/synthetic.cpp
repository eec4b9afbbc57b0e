#include "dp3d/synthetic.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

#include "dp3d/error.hpp"

namespace dp3d {

void Camera::validate() const {
  if (focal == 0.0 || !std::isfinite(focal)) throw RangeError("camera: focal length must be nonzero");
  if (width <= 0 || height <= 0) throw RangeError("camera: image size must be positive");
  if (!std::isfinite(cx) || !std::isfinite(cy) || !std::isfinite(depth_offset_mm)) {
    throw RangeError("camera: non-finite parameters");
  }
}

Mat project_pinhole(const Mat& frame, const Camera& camera) {
  camera.validate();
  if (frame.cols() != 3) throw ShapeError("project_pinhole: expected J x 3");
  Mat out(frame.rows(), 2);
  for (Eigen::Index j = 0; j < frame.rows(); ++j) {
    const double z = frame(j, 2);
    if (!(z > 0.0)) throw RangeError("project_pinhole: joint " + std::to_string(j) + " has nonpositive depth");
    const double u = camera.focal * frame(j, 0) / z + camera.cx;
    const double v = camera.focal * frame(j, 1) / z + camera.cy;
    out(j, 0) = 2.0 * u / camera.width - 1.0;
    out(j, 1) = 2.0 * v / camera.height - 1.0;
  }
  return out;
}

Pose2DSequence project_sequence(const Pose3DSequence& pose, const Camera& camera, const Eigen::RowVector3d& root) {
  pose.validate();
  Pose2DSequence out = Pose2DSequence::zeros(pose.frames, pose.joints);
  for (int f = 0; f < pose.frames; ++f) {
    try {
      out.data.middleRows(f * pose.joints, pose.joints) = project_pinhole(pose.frame(f).rowwise() + root, camera);
    } catch (const RangeError& e) {
      throw RangeError("frame " + std::to_string(f) + ": " + e.what());
    }
  }
  return out;
}

Pose2DSequence project_sequence(const Pose3DSequence& pose, const Camera& camera) {
  return project_sequence(pose, camera, Eigen::RowVector3d(0.0, 0.0, camera.depth_offset_mm));
}

MotionClass parse_motion_class(const std::string& name) {
  if (name == "walk") return MotionClass::Walk;
  if (name == "sit") return MotionClass::Sit;
  if (name == "wave") return MotionClass::Wave;
  if (name == "throw") return MotionClass::Throw;
  throw RangeError("unknown motion class: " + name);
}

std::string to_string(MotionClass motion) {
  switch (motion) {
    case MotionClass::Walk: return "walk";
    case MotionClass::Sit: return "sit";
    case MotionClass::Wave: return "wave";
    case MotionClass::Throw: return "throw";
  }
  return "walk";
}

void SyntheticMotionSpec::validate() const {
  if (frames < 1) throw RangeError("motion spec: frames must be positive");
  if (noise_2d < 0.0) throw RangeError("motion spec: noise must be nonnegative");
  if (!(amplitude > 0.0) || !(frequency > 0.0) || !(body_scale > 0.0)) {
    throw RangeError("motion spec: amplitude, frequency and scale must be positive");
  }
}

SyntheticMotionSpec random_motion_spec(MotionClass action, int frames, double noise_2d, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  SyntheticMotionSpec s;
  s.action = action;
  s.frames = frames;
  s.amplitude = 0.85 + 0.3 * u(rng);
  s.frequency = 0.8 + 0.4 * u(rng);
  s.phase = 2.0 * std::numbers::pi * u(rng);
  s.yaw = (u(rng) - 0.5) * std::numbers::pi / 3.0;
  s.body_scale = 0.95 + 0.1 * u(rng);
  s.noise_2d = noise_2d;
  s.seed = rng();
  return s;
}

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

// Bone lengths (mm) of the reference body.
constexpr double kHip = 130.0, kThigh = 450.0, kShin = 440.0, kSpine = 230.0, kThorax = 250.0, kNeck = 100.0,
                 kHead = 120.0, kShoulder = 160.0, kUpperArm = 280.0, kForearm = 250.0;

/// Body frame: x to the body's left, y up, z forward.
Eigen::Vector3d limb(double pitch, double abduct, double side) {
  // Starts pointing down, swings forward by pitch and outward by abduct.
  return {side * std::sin(abduct), -std::cos(abduct) * std::cos(pitch), std::cos(abduct) * std::sin(pitch)};
}

struct Angles {
  double hip_l = 0, hip_r = 0, knee_l = 0, knee_r = 0;
  double lean = 0, twist = 0;
  double sh_pitch_l = 0, sh_pitch_r = 0, sh_abd_l = 8 * kDeg, sh_abd_r = 8 * kDeg;
  double elbow_l = 10 * kDeg, elbow_r = 10 * kDeg;
  double elbow_abd_r = 0;
};

Angles pose_angles(const SyntheticMotionSpec& s, double time) {
  const double a = s.amplitude;
  const double w = 2.0 * std::numbers::pi * s.frequency;
  const double c = std::sin(w * time + s.phase);
  const double ramp = 0.5 - 0.5 * std::cos(std::numbers::pi * std::clamp(time, 0.0, 1.0));  // 0 -> 1
  Angles g;
  switch (s.action) {
    case MotionClass::Walk:
      g.hip_l = a * 25 * kDeg * c;
      g.hip_r = -g.hip_l;
      g.knee_l = a * 35 * kDeg * std::max(0.0, -c);
      g.knee_r = a * 35 * kDeg * std::max(0.0, c);
      g.sh_pitch_l = -a * 22 * kDeg * c;
      g.sh_pitch_r = -g.sh_pitch_l;
      g.elbow_l = g.elbow_r = 20 * kDeg;
      break;
    case MotionClass::Sit: {
      const double depth = a * (0.55 + 0.45 * ramp);
      g.hip_l = g.hip_r = depth * 85 * kDeg;
      g.knee_l = g.knee_r = depth * 95 * kDeg;
      g.lean = depth * 20 * kDeg;
      g.sh_pitch_l = g.sh_pitch_r = depth * 35 * kDeg + 4 * kDeg * c;
      g.elbow_l = g.elbow_r = depth * 50 * kDeg;
      break;
    }
    case MotionClass::Wave:
      g.sh_abd_r = (150 + 10 * a) * kDeg;
      g.elbow_abd_r = a * 30 * kDeg * std::sin(2.0 * w * time + s.phase);
      g.elbow_r = 0.0;
      g.hip_l = g.hip_r = 3 * kDeg * c;
      break;
    case MotionClass::Throw: {
      // Wind up behind the body then release forward over the shoulder.
      const double swing = -70 + 230 * ramp;
      g.sh_pitch_r = a * swing * kDeg;
      g.sh_abd_r = 25 * kDeg;
      g.elbow_r = a * 70 * kDeg * (1.0 - ramp);
      g.twist = a * (-25 + 50 * ramp) * kDeg;
      g.lean = a * 15 * kDeg * ramp;
      g.hip_l = a * 30 * kDeg * ramp;
      g.knee_l = a * 20 * kDeg * ramp;
      g.hip_r = -a * 15 * kDeg * ramp;
      g.sh_pitch_l = a * 30 * kDeg * (1.0 - ramp);
      break;
    }
  }
  return g;
}

Eigen::Matrix3d rot_x(double t) { return Eigen::AngleAxisd(t, Eigen::Vector3d::UnitX()).toRotationMatrix(); }
Eigen::Matrix3d rot_y(double t) { return Eigen::AngleAxisd(t, Eigen::Vector3d::UnitY()).toRotationMatrix(); }

}  // namespace

Pose3DSequence synthesize_motion(const SyntheticMotionSpec& spec) {
  spec.validate();
  const double k = spec.body_scale;
  Pose3DSequence out = Pose3DSequence::zeros(spec.frames, 17);
  // Body frame -> camera frame: facing the camera, so left = +x, up = -y,
  // forward = -z; yaw spins the body about its vertical axis.
  const Eigen::Matrix3d to_camera = Eigen::Vector3d(1, -1, -1).asDiagonal() * rot_y(spec.yaw);
  for (int f = 0; f < spec.frames; ++f) {
    const double time = spec.frames > 1 ? static_cast<double>(f) / (spec.frames - 1) : 0.0;
    const Angles g = pose_angles(spec, time);
    std::array<Eigen::Vector3d, 17> p;
    p[0] = Eigen::Vector3d::Zero();
    const Eigen::Vector3d left(1, 0, 0);
    p[4] = k * kHip * left;   // LHip
    p[1] = -k * kHip * left;  // RHip
    auto leg = [&](int hip, int knee, int ankle, double hp, double kn) {
      p[knee] = p[hip] + k * kThigh * limb(hp, 0.0, 0.0);
      p[ankle] = p[knee] + k * kShin * limb(hp - kn, 0.0, 0.0);
    };
    leg(4, 5, 6, g.hip_l, g.knee_l);
    leg(1, 2, 3, g.hip_r, g.knee_r);

    const Eigen::Matrix3d torso = rot_y(g.twist) * rot_x(-g.lean);  // lean forward
    const Eigen::Vector3d up(0, 1, 0);
    p[7] = torso * (k * kSpine * up);
    p[8] = p[7] + torso * (k * kThorax * up);
    p[9] = p[8] + torso * (k * kNeck * up);
    p[10] = p[9] + torso * (k * kHead * up);
    p[11] = p[8] + torso * (k * kShoulder * left);
    p[14] = p[8] - torso * (k * kShoulder * left);
    auto arm = [&](int sh, int el, int wr, double pitch, double abd, double elbow, double side, double el_abd) {
      p[el] = p[sh] + torso * (k * kUpperArm * limb(pitch, abd, side));
      p[wr] = p[el] + torso * (k * kForearm * limb(pitch + elbow, abd + el_abd, side));
    };
    arm(11, 12, 13, g.sh_pitch_l, g.sh_abd_l, g.elbow_l, 1.0, 0.0);
    arm(14, 15, 16, g.sh_pitch_r, g.sh_abd_r, g.elbow_r, -1.0, g.elbow_abd_r);
    for (int j = 0; j < 17; ++j) out.data.row(f * 17 + j) = (to_camera * p[static_cast<size_t>(j)]).transpose();
  }
  return out;
}

}  // namespace dp3d
