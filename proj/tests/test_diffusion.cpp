#include <cmath>
#include <cstring>
#include <random>

#include "doctest.h"
#include "dp3d/diffusion.hpp"
#include "dp3d/error.hpp"
#include "gradcheck.hpp"

using namespace dp3d;
using dp3d::testing::random_mat;

namespace {

/// Returns the stored ground truth regardless of its input; counts calls.
class OracleDenoiser final : public PoseDenoiser {
 public:
  explicit OracleDenoiser(Mat y0) : y0_(std::move(y0)) {}
  Mat predict_clean(const Mat& yt, const Pose2DSequence&, const Mat&, int t) const override {
    CHECK(yt.rows() == y0_.rows());
    ++calls;
    visited.push_back(t);
    return y0_;
  }
  mutable int calls = 0;
  mutable std::vector<int> visited;

 private:
  Mat y0_;
};

class NanDenoiser final : public PoseDenoiser {
 public:
  Mat predict_clean(const Mat& yt, const Pose2DSequence&, const Mat&, int t) const override {
    Mat out = yt;
    if (t < 50) out(0, 0) = std::nan("");
    return out;
  }
};

}  // namespace

TEST_CASE("noise schedules start at one and decrease strictly") {
  for (auto s : {NoiseSchedule::cosine(50), NoiseSchedule::linear(50), NoiseSchedule::cosine(1000)}) {
    CHECK(s.alpha_bar(0) == 1.0);
    for (int t = 1; t <= s.max_steps(); ++t) {
      CHECK(s.alpha_bar(t) < s.alpha_bar(t - 1));
      CHECK(s.alpha_bar(t) > 0.0);
    }
    CHECK_THROWS_AS(s.alpha_bar(-1), RangeError);
    CHECK_THROWS_AS(s.alpha_bar(s.max_steps() + 1), RangeError);
  }
  CHECK(parse_schedule_family("linear") == ScheduleFamily::Linear);
  CHECK_THROWS_AS(parse_schedule_family("sigmoid"), RangeError);
}

TEST_CASE("forward diffusion identities") {
  std::mt19937_64 rng(3);
  const auto s = NoiseSchedule::cosine(50);
  const Mat y0 = random_mat(16 * 17, 3, rng, 0.3);
  const Mat eps = random_mat(16 * 17, 3, rng);
  const Mat at0 = forward_diffuse(y0, 0, eps, s);
  CHECK(std::memcmp(at0.data(), y0.data(), sizeof(double) * static_cast<size_t>(y0.size())) == 0);

  const Mat z = forward_diffuse(y0, 20, Mat::Zero(y0.rows(), 3), s);
  CHECK((z - std::sqrt(s.alpha_bar(20)) * y0).cwiseAbs().maxCoeff() <= 1e-15);

  // Near the end of the cosine schedule the signal has essentially vanished.
  const Mat late = forward_diffuse(y0, 50, eps, s);
  CHECK(s.alpha_bar(50) < 1e-4);
  CHECK((late - eps).cwiseAbs().maxCoeff() < 0.05);

  CHECK_THROWS_AS(forward_diffuse(y0, 3, Mat::Zero(4, 3), s), ShapeError);
  CHECK_THROWS_AS(forward_diffuse(y0, 51, eps, s), RangeError);
}

TEST_CASE("forward diffusion noise statistics") {
  const auto s = NoiseSchedule::cosine(50);
  std::mt19937_64 rng(17);
  std::normal_distribution<double> normal;
  const Mat y0 = Mat::Constant(1, 1, 0.7);
  const int draws = 10000;
  const int t = 25;
  double sum = 0.0, sumsq = 0.0;
  for (int i = 0; i < draws; ++i) {
    const Mat e = Mat::Constant(1, 1, normal(rng));
    const double x = forward_diffuse(y0, t, e, s)(0, 0);
    sum += x;
    sumsq += x * x;
  }
  const double mean = sum / draws;
  const double var = sumsq / draws - mean * mean;
  const double expect_mean = std::sqrt(s.alpha_bar(t)) * 0.7;
  const double expect_var = 1.0 - s.alpha_bar(t);
  CHECK(std::abs(mean - expect_mean) < 3.0 * std::sqrt(expect_var / draws));
  // Standard error of a Gaussian sample variance: sigma^2 sqrt(2 / n).
  CHECK(std::abs(var - expect_var) < 3.0 * expect_var * std::sqrt(2.0 / draws));
}

TEST_CASE("sinusoidal timestep code") {
  const Mat zero = sinusoidal_embed(0, 8);
  for (int i = 0; i < 4; ++i) {
    CHECK(zero(0, 2 * i) == 0.0);
    CHECK(zero(0, 2 * i + 1) == 1.0);
  }
  const Mat one = sinusoidal_embed(1, 2);
  CHECK(one(0, 0) == doctest::Approx(std::sin(1.0)));
  CHECK(one(0, 1) == doctest::Approx(std::cos(1.0)));
  const Mat wide = sinusoidal_embed(7, 8);
  CHECK(wide(0, 6) == doctest::Approx(std::sin(7.0 / 10000.0)));
  CHECK(sinusoidal_embed(3, 64).rows() == 1);
  CHECK_THROWS_AS(sinusoidal_embed(1, 3), RangeError);
  CHECK_THROWS_AS(sinusoidal_embed(1, 0), RangeError);
}

TEST_CASE("timestep embedding gradients") {
  std::mt19937_64 rng(2);
  ParameterSet ps;
  TimestepEmbedding emb(ps, "time", 16, 50, rng);
  CHECK(emb.embed(ps, 10).cols() == 16);
  CHECK_THROWS_AS(emb.embed(ps, 51), RangeError);
  const Mat r = random_mat(1, 16, rng);
  const auto check = dp3d::testing::param_gradient_check(
      [&](ag::Tape& tape, const ParameterSet& p) {
        return ag::sum_all(ag::mul(emb.forward(tape, p, 13), tape.constant(r)));
      },
      ps, 200, 5);
  CHECK(check.worst() < 1e-4);
}

TEST_CASE("sampling timesteps") {
  CHECK(sampling_timesteps(50, 1) == std::vector<int>{50});
  CHECK(sampling_timesteps(50, 5) == std::vector<int>{50, 40, 30, 20, 10});
  CHECK(sampling_timesteps(4, 8) == std::vector<int>{4, 3, 2, 1});
  CHECK(sampling_timesteps(50, 50).size() == 50);
  CHECK_THROWS_AS(sampling_timesteps(50, 0), RangeError);
}

TEST_CASE("reverse sampling with an oracle denoiser recovers the clean sequence") {
  std::mt19937_64 rng(8);
  const auto s = NoiseSchedule::cosine(50);
  const Pose2DSequence x = Pose2DSequence::zeros(4, 5);
  const Mat y0 = random_mat(20, 3, rng, 0.2);
  for (int k : {1, 4, 50}) {
    for (bool det : {false, true}) {
      OracleDenoiser oracle(y0);
      const Mat out = reverse_sample(x, Mat::Zero(2, 8), oracle, s, {k, det, 99});
      CHECK((out - y0).cwiseAbs().maxCoeff() <= 1e-9);
      CHECK(oracle.calls == k);
      CHECK(oracle.visited.front() == 50);
    }
  }
}

TEST_CASE("reverse sampling is seed deterministic and reports bad steps") {
  const auto s = NoiseSchedule::cosine(50);
  const Pose2DSequence x = Pose2DSequence::zeros(2, 3);
  class Echo final : public PoseDenoiser {
   public:
    Mat predict_clean(const Mat& yt, const Pose2DSequence&, const Mat&, int) const override { return 0.5 * yt; }
  } echo;
  const Mat a = reverse_sample(x, Mat::Zero(1, 4), echo, s, {5, false, 1});
  const Mat b = reverse_sample(x, Mat::Zero(1, 4), echo, s, {5, false, 1});
  const Mat c = reverse_sample(x, Mat::Zero(1, 4), echo, s, {5, false, 2});
  CHECK(a == b);
  CHECK(a != c);
  NanDenoiser bad;
  try {
    reverse_sample(x, Mat::Zero(1, 4), bad, s, {5, false, 1});
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("step 1") != std::string::npos);
  }
}
