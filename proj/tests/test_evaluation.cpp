#include <cmath>
#include <filesystem>
#include <random>

#include <Eigen/Geometry>

#include "doctest.h"
#include "dp3d/error.hpp"
#include "dp3d/evaluation.hpp"
#include "gradcheck.hpp"

using namespace dp3d;
using dp3d::testing::random_mat;

namespace {

Pose3DSequence random_pose(int frames, int joints, std::mt19937_64& rng, double scale = 200.0) {
  return {frames, joints, random_mat(frames * joints, 3, rng, scale)};
}

Eigen::Matrix3d random_rotation(std::mt19937_64& rng) {
  Eigen::Quaterniond q(random_mat(4, 1, rng).col(0).data());
  return q.normalized().toRotationMatrix();
}

/// Same pose with every joint displaced by `dist` mm along x.
Pose3DSequence offset(const Pose3DSequence& p, double dist) {
  Pose3DSequence o = p;
  o.data.col(0).array() += dist;
  return o;
}

double naive_mpjpe(const Pose3DSequence& a, const Pose3DSequence& b) {
  double sum = 0.0;
  for (int f = 0; f < a.frames; ++f) {
    for (int j = 0; j < a.joints; ++j) {
      double sq = 0.0;
      for (int c = 0; c < 3; ++c) {
        const double d = a.data(f * a.joints + j, c) - b.data(f * b.joints + j, c);
        sq += d * d;
      }
      sum += std::sqrt(sq);
    }
  }
  return sum / (a.frames * a.joints);
}

}  // namespace

TEST_CASE("mpjpe hand cases and loop oracle") {
  Pose3DSequence gt = Pose3DSequence::zeros(1, 2);
  Pose3DSequence pred = gt;
  pred.data.row(0) << 3, 4, 0;
  CHECK(mpjpe(pred, gt) == 2.5);
  CHECK(mpjpe(gt, gt) == 0.0);

  std::mt19937_64 rng(1);
  for (int i = 0; i < 50; ++i) {
    const auto a = random_pose(5, 17, rng), b = random_pose(5, 17, rng), c = random_pose(5, 17, rng);
    CHECK(std::abs(mpjpe(a, b) - naive_mpjpe(a, b)) <= 1e-9);
    CHECK(mpjpe(a, b) == doctest::Approx(mpjpe(b, a)).epsilon(1e-14));
    CHECK(mpjpe(a, c) <= mpjpe(a, b) + mpjpe(b, c) + 1e-9);
  }
  CHECK_THROWS_AS(mpjpe(Pose3DSequence::zeros(2, 3), Pose3DSequence::zeros(3, 3)), ShapeError);
}

TEST_CASE("procrustes mpjpe removes similarity transforms") {
  std::mt19937_64 rng(2);
  double worst = 0.0;
  for (int i = 0; i < 200; ++i) {
    const auto gt = random_pose(3, 17, rng);
    Pose3DSequence pred = gt;
    for (int f = 0; f < 3; ++f) {
      const Eigen::Matrix3d r = random_rotation(rng);
      const double s = std::exp(random_mat(1, 1, rng)(0, 0));
      const Eigen::RowVector3d t = random_mat(1, 3, rng, 500.0);
      pred.data.middleRows(f * 17, 17) = ((s * gt.frame(f) * r.transpose()).rowwise() + t);
    }
    worst = std::max(worst, p_mpjpe(pred, gt));
  }
  CHECK(worst <= 1e-6);

  const auto gt = random_pose(2, 17, rng);
  Pose3DSequence doubled{2, 17, 2.0 * gt.data};
  CHECK(p_mpjpe(doubled, gt) <= 1e-6);
  CHECK(p_mpjpe(doubled, gt, false) > 1.0);

  // Reflections are not similarity transforms: a mirrored copy keeps error.
  Pose3DSequence mirrored = gt;
  mirrored.data.col(0) *= -1.0;
  CHECK(p_mpjpe(mirrored, gt) > 1.0);
}

TEST_CASE("procrustes never exceeds plain mpjpe") {
  std::mt19937_64 rng(3);
  int violations = 0;
  for (int i = 0; i < 1000; ++i) {
    const auto a = random_pose(2, 17, rng), b = random_pose(2, 17, rng);
    if (p_mpjpe(a, b) > mpjpe(a, b) + 1e-9) ++violations;
  }
  CHECK(violations == 0);
}

TEST_CASE("procrustes degenerate frames fall back to translation") {
  Pose3DSequence pred = Pose3DSequence::zeros(1, 4);
  pred.data.col(0) << 0, 1, 2, 3;  // collinear
  Pose3DSequence gt = Pose3DSequence::zeros(1, 4);
  gt.data.col(1) << 0, 1, 2, 3;
  bool degenerate = false;
  procrustes_align(Mat::Zero(4, 3), gt.data, true, &degenerate);
  CHECK(degenerate);
  CHECK(std::isfinite(p_mpjpe(pred, gt)));
}

TEST_CASE("pck and auc hand cases") {
  std::mt19937_64 rng(4);
  // Integer coordinates keep the threshold arithmetic exact.
  Pose3DSequence gt = random_pose(2, 4, rng);
  gt.data = gt.data.array().round();
  CHECK(pck(offset(gt, 100.0), gt) == 100.0);
  CHECK(pck(offset(gt, 200.0), gt) == 0.0);
  Pose3DSequence half = offset(gt, 100.0);
  for (int r = 0; r < 8; r += 2) half.data(r, 0) += 100.0;
  CHECK(pck(half, gt) == 50.0);
  CHECK(pck(offset(gt, 150.0), gt) == 0.0);  // strict inequality

  CHECK(auc(gt, gt) == 100.0 * 30.0 / 31.0);
  CHECK(auc(offset(gt, 151.0), gt) == 0.0);
  CHECK(auc(offset(gt, 75.0), gt) == 100.0 * 15.0 / 31.0);

  const auto grid = auc_thresholds();
  CHECK(grid.size() == 31);
  CHECK(grid.back() == 150.0);
  const auto noisy = random_pose(4, 17, rng, 80.0);
  const auto base = random_pose(4, 17, rng, 0.0);
  double sum = 0.0, prev = -1.0;
  for (double t : grid) {
    const double p = pck(noisy, base, t);
    CHECK(p >= prev);
    prev = p;
    sum += p;
  }
  CHECK(auc(noisy, base) == sum / 31.0);
}

TEST_CASE("metric accumulator aggregates per action") {
  std::mt19937_64 rng(5);
  MetricAccumulator acc;
  const auto g1 = random_pose(4, 17, rng), g2 = random_pose(4, 17, rng), g3 = random_pose(4, 17, rng);
  acc.add(offset(g1, 10.0), g1, "Walking");
  acc.add(offset(g2, 30.0), g2, "Walking");
  acc.add(offset(g3, 100.0), g3, "Sitting");
  const auto r = acc.report();
  CHECK(r.per_action.size() == 2);
  CHECK(r.per_action.at("Walking") == doctest::Approx(20.0));
  CHECK(r.per_action.at("Sitting") == doctest::Approx(100.0));
  CHECK(r.average == doctest::Approx(60.0));
  CHECK(r.mpjpe == doctest::Approx(140.0 / 3.0));
  CHECK(r.pck == 100.0);
  CHECK(r.p_mpjpe <= r.mpjpe + 1e-9);
  CHECK(r.frame_count == 12);
  CHECK(r.to_json_text().find("per_action_mpjpe_mm") != std::string::npos);
}

TEST_CASE("trajectory export round trip") {
  std::mt19937_64 rng(6);
  const auto topo = SkeletonTopology::h36m17();
  const auto gt = random_pose(5, 17, rng);
  const auto pred = offset(gt, 3.25);
  const auto path = std::filesystem::temp_directory_path() / "dp3d_traj.csv";
  const std::vector<int> joints{13, 16, 0};
  export_trajectories(pred, gt, joints, topo, path);
  const auto rows = read_trajectories(path);
  REQUIRE(rows.size() == 5 * 3 * 2);
  CHECK(rows[0].series == "pred");
  CHECK(rows[0].joint == "LWrist");
  CHECK(rows[15].series == "gt");
  for (const auto& p : rows) {
    const auto& src = p.series == "pred" ? pred : gt;
    const int j = topo.joint_index(p.joint);
    CHECK(static_cast<float>(p.x) == static_cast<float>(src.data(p.frame * 17 + j, 0)));
    CHECK(static_cast<float>(p.z) == static_cast<float>(src.data(p.frame * 17 + j, 2)));
  }
  export_trajectories(gt, gt, joints, topo, path);
  const auto same = read_trajectories(path);
  for (size_t i = 0; i < 15; ++i) CHECK(same[i].x == same[i + 15].x);
  CHECK_THROWS_AS(export_trajectories(gt, gt, {17}, topo, path), RangeError);
  std::filesystem::remove(path);
}
