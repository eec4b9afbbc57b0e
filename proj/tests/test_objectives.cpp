#include <cmath>
#include <random>

#include "doctest.h"
#include "dp3d/error.hpp"
#include "dp3d/objectives.hpp"
#include "gradcheck.hpp"

using namespace dp3d;
using dp3d::testing::random_mat;

TEST_CASE("hallucination weights") {
  CHECK(hallucination_weights(1) == std::vector<double>{1.0});
  CHECK(hallucination_weights(3) == std::vector<double>{0.5, 1.0, 0.5});
  CHECK(hallucination_weights(5) == std::vector<double>{1.0 / 3, 0.5, 1.0, 0.5, 1.0 / 3});
  CHECK(hallucination_weights(7) == std::vector<double>{0.25, 1.0 / 3, 0.5, 1.0, 0.5, 1.0 / 3, 0.25});
  CHECK_THROWS_AS(hallucination_weights(4), RangeError);
}

TEST_CASE("two stage sampling schedule") {
  SamplingSchedule s;
  for (int e = 0; e < 25; ++e) {
    const auto step = schedule_n(e, s);
    CHECK(step.n == 1);
    CHECK(step.weights == std::vector<double>{1.0});
  }
  for (int e : {25, 26, 100}) {
    const auto step = schedule_n(e, s);
    CHECK(step.n == 3);
    CHECK(step.weights == std::vector<double>{0.5, 1.0, 0.5});
  }
  s.rule = WeightRule::Fixed;
  CHECK(schedule_n(0, s).n == 3);
  CHECK(schedule_n(0, s).weights == std::vector<double>{1.0, 1.0, 1.0});
  s.rule = WeightRule::Falloff;
  CHECK(schedule_n(0, s).weights == std::vector<double>{0.5, 1.0, 0.5});
  CHECK(schedule_n(40, s).weights == std::vector<double>{0.5, 1.0, 0.5});
  CHECK_THROWS_AS(schedule_n(-1, s), RangeError);
  s.stage2_n = 4;
  CHECK_THROWS_AS(schedule_n(0, s), RangeError);
  CHECK(parse_weight_rule("falloff") == WeightRule::Falloff);
  CHECK_THROWS_AS(parse_weight_rule("other"), RangeError);
}

TEST_CASE("shifted ground truth clamps at the sequence edges") {
  CHECK(shifted_rows(3, 1, -1) == std::vector<int>{0, 0, 1});
  CHECK(shifted_rows(3, 1, 1) == std::vector<int>{1, 2, 2});
  CHECK(shifted_rows(2, 2, 0) == std::vector<int>{0, 1, 2, 3});
}

TEST_CASE("loss value examples") {
  Eigen::RowVectorXd uniform = Eigen::RowVectorXd::Zero(4);
  CHECK(action_loss(uniform, 2) == doctest::Approx(std::log(4.0)));
  CHECK_THROWS_AS(action_loss(uniform, 4), RangeError);

  SkeletonTopology t;
  t.id = "v";
  t.joint_names = {"root", "left", "right"};
  t.edges = {{0, 1}, {0, 2}};
  t.paired_bones = {{0, 1}};
  Pose3DSequence p = Pose3DSequence::zeros(1, 3);
  p.data << 0, 0, 0, 3, 4, 0, 0, 0, 2;
  CHECK(bone_length_loss(p, t) == doctest::Approx(3.0));
  Pose3DSequence q = p;
  q.data(2, 2) = 5;
  CHECK(bone_length_loss(q, t) == 0.0);
  CHECK(bone_length_loss(p, t, &q) == doctest::Approx(1.5));
  t.paired_bones.clear();
  CHECK(bone_length_loss(p, t) == 0.0);

  Pose3DSequence gt = Pose3DSequence::zeros(2, 1);
  gt.data << 0, 0, 0, 1, 1, 1;
  HallucinationSet h{2, 1, {-1, 0, 1}, {gt.data, gt.data, gt.data}};
  // Offsets -1 and +1 each mismatch one frame by 1 in every coordinate.
  CHECK(hallucination_loss(h, gt, {0.5, 1.0, 0.5}) == doctest::Approx(0.5 * 0.5 + 0.5 * 0.5));
  CHECK_THROWS_AS(hallucination_loss(h, gt, {1.0}), ShapeError);

  LossWeights w;
  const auto c = combine_losses(1.0, 2.0, 3.0, w);
  CHECK(c.total == doctest::Approx(1.0 + 0.02 + 0.3));
  w.lambda_3d = {0.5, 0.9, 0.5};
  CHECK_THROWS_AS(w.validate(), RangeError);
}

TEST_CASE("tape losses agree with plain evaluations") {
  std::mt19937_64 rng(21);
  const auto topo = SkeletonTopology::h36m17();
  const int frames = 5;
  Pose3DSequence gt{frames, 17, random_mat(frames * 17, 3, rng, 0.3)};
  HallucinationSet h{frames, 17, {-1, 0, 1}, {}};
  for (int i = 0; i < 3; ++i) h.sequences.push_back(random_mat(frames * 17, 3, rng, 0.3));
  const std::vector<double> w{0.5, 1.0, 0.5};

  ag::Tape tape(false);
  std::vector<ag::Var> seq;
  for (const auto& s : h.sequences) seq.push_back(tape.constant(s));
  const ag::Var g = tape.constant(gt.data);
  CHECK(loss::hallucination(tape, seq, h.offsets, g, frames, 17, w).scalar() ==
        doctest::Approx(hallucination_loss(h, gt, w)).epsilon(1e-12));
  const Pose3DSequence center{frames, 17, h.center()};
  CHECK(loss::bone_length(tape, seq[1], frames, topo).scalar() ==
        doctest::Approx(bone_length_loss(center, topo)).epsilon(1e-12));
  CHECK(loss::bone_length_vs_gt(tape, seq[1], g, frames, topo).scalar() ==
        doctest::Approx(bone_length_loss(center, topo, &gt)).epsilon(1e-12));
}

TEST_CASE("loss gradients with respect to predictions") {
  std::mt19937_64 rng(22);
  const auto topo = SkeletonTopology::h36m17();
  const int frames = 3;
  const Mat gt = random_mat(frames * 17, 3, rng, 0.3);
  const std::vector<double> w{0.5, 1.0, 0.5};
  const double l3d = dp3d::testing::op_gradient_error(
      [&](ag::Tape& tape, const std::vector<ag::Var>& in) {
        return loss::hallucination(tape, in, {-1, 0, 1}, tape.constant(gt), frames, 17, w);
      },
      {random_mat(frames * 17, 3, rng, 0.3), random_mat(frames * 17, 3, rng, 0.3), random_mat(frames * 17, 3, rng, 0.3)});
  CHECK(l3d < 1e-5);
  const double bl = dp3d::testing::op_gradient_error(
      [&](ag::Tape& tape, const std::vector<ag::Var>& in) { return loss::bone_length(tape, in[0], frames, topo); },
      {random_mat(frames * 17, 3, rng, 0.3)});
  CHECK(bl < 1e-5);
}
