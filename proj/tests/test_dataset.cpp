#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>

#include "doctest.h"
#include "dp3d/dataset.hpp"
#include "dp3d/error.hpp"

using namespace dp3d;

TEST_CASE("pinhole projection examples") {
  Camera cam;
  Mat p(1, 3);
  p << 100, 0, 1000;
  const Mat uv = project_pinhole(p, cam);
  CHECK(uv(0, 0) == doctest::Approx(0.2));
  CHECK(uv(0, 1) == doctest::Approx(0.0));

  Mat axis(1, 3);
  axis << 0, 0, 2500;
  CHECK(project_pinhole(axis, cam).cwiseAbs().maxCoeff() == 0.0);

  Mat near(1, 3), far(1, 3);
  near << 120, -80, 2000;
  far << 120, -80, 4000;
  CHECK((project_pinhole(far, cam) - 0.5 * project_pinhole(near, cam)).cwiseAbs().maxCoeff() < 1e-15);

  Mat behind(1, 3);
  behind << 0, 0, 0;
  CHECK_THROWS_AS(project_pinhole(behind, cam), RangeError);
  Camera bad;
  bad.focal = 0.0;
  CHECK_THROWS_AS(project_pinhole(p, bad), RangeError);
}

TEST_CASE("synthetic motions keep the skeleton rigid and root-relative") {
  const auto topo = SkeletonTopology::h36m17();
  std::mt19937_64 rng(1);
  for (int a = 0; a < kMotionClassCount; ++a) {
    const auto spec = random_motion_spec(static_cast<MotionClass>(a), 16, 0.0, rng);
    const auto pose = synthesize_motion(spec);
    CHECK(pose.frames == 16);
    const Eigen::VectorXd first = bone_length_vector(pose.frame(0), topo);
    for (int f = 0; f < 16; ++f) {
      CHECK(pose.data.row(f * 17).isZero());
      CHECK((bone_length_vector(pose.frame(f), topo) - first).cwiseAbs().maxCoeff() < 1e-9);
    }
    // Left and right limbs match, so the pairing loss is zero on ground truth.
    for (const auto& [l, r] : topo.paired_bones) CHECK(first(l) == doctest::Approx(first(r)));
    const double mean = mean_bone_length(pose, topo);
    CHECK(mean > 200.0);
    CHECK(mean < 320.0);
  }
}

TEST_CASE("corpus generation is deterministic and exact without noise") {
  CorpusSpec spec;
  spec.count = 6;
  const auto a = generate_corpus(spec, 42);
  const auto b = generate_corpus(spec, 42);
  CHECK(encode_container(a) == encode_container(b));
  CHECK(encode_container(a) != encode_container(generate_corpus(spec, 43)));
  CHECK(a.labels_present() == std::vector<int>{0, 1, 2});
  for (const auto& r : a.records) {
    const auto exact = project_sequence(r.pose, a.camera);
    // Stored keypoints are float32; the projection of the stored pose agrees
    // to float32 precision.
    CHECK((exact.data - r.keypoints.data).cwiseAbs().maxCoeff() < 1e-6);
    CHECK(r.keypoints.data.cwiseAbs().maxCoeff() < 1.0);
  }
  spec.noise_2d = 0.01;
  const auto noisy = generate_corpus(spec, 42);
  const double diff = (noisy.records[0].keypoints.data - a.records[0].keypoints.data).cwiseAbs().maxCoeff();
  CHECK(diff > 1e-4);
}

TEST_CASE("motion classes are separated by simple statistics") {
  // Statistics: mean right-wrist height, right-wrist vertical variance and
  // mean knee forward offset, measured on 100 sequences per class.
  std::mt19937_64 rng(7);
  const int per_class = 100;
  std::map<int, std::vector<Eigen::Vector3d>> stats;
  for (int a = 0; a < kMotionClassCount; ++a) {
    for (int i = 0; i < per_class; ++i) {
      auto spec = random_motion_spec(static_cast<MotionClass>(a), 16, 0.0, rng);
      spec.yaw = 0.0;
      const auto p = synthesize_motion(spec);
      Eigen::VectorXd wrist_y(16), knee_z(16);
      for (int f = 0; f < 16; ++f) {
        wrist_y(f) = -p.data(f * 17 + 16, 1);
        knee_z(f) = -(p.data(f * 17 + 2, 2) + p.data(f * 17 + 5, 2)) / 2.0;
      }
      const double mean_y = wrist_y.mean();
      const double var_y = (wrist_y.array() - mean_y).square().mean();
      stats[a].push_back({mean_y, std::sqrt(var_y), knee_z.mean()});
    }
  }
  for (int a = 0; a < kMotionClassCount; ++a) {
    for (int b = a + 1; b < kMotionClassCount; ++b) {
      double best = 0.0;
      for (int s = 0; s < 3; ++s) {
        auto moments = [&](int c) {
          double m = 0.0, v = 0.0;
          for (const auto& x : stats[c]) m += x(s);
          m /= per_class;
          for (const auto& x : stats[c]) v += (x(s) - m) * (x(s) - m);
          return std::pair{m, std::sqrt(v / (per_class - 1))};
        };
        const auto [ma, sa] = moments(a);
        const auto [mb, sb] = moments(b);
        best = std::max(best, std::abs(ma - mb) / std::max(sa, sb));
      }
      INFO("classes " << a << " vs " << b);
      CHECK(best > 5.0);
    }
  }
}

TEST_CASE("container round trip and corruption") {
  CorpusSpec spec;
  spec.count = 4;
  spec.frames = 5;
  const auto corpus = generate_corpus(spec, 3);
  const auto bytes = encode_container(corpus);
  const auto back = decode_container(bytes);
  CHECK(encode_container(back) == bytes);
  CHECK(back.records[2].pose.data == corpus.records[2].pose.data);
  CHECK(back.records[1].label == corpus.records[1].label);

  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  CHECK_THROWS_AS(decode_container(bad_magic), FormatError);
  auto truncated = bytes;
  truncated.resize(bytes.size() - 3);
  CHECK_THROWS_AS(decode_container(truncated), FormatError);
  auto trailing = bytes;
  trailing.push_back(0);
  CHECK_THROWS_AS(decode_container(trailing), FormatError);
  auto bad_len = bytes;
  bad_len[8] = 0xFF;
  bad_len[9] = 0xFF;
  CHECK_THROWS_AS(decode_container(bad_len), FormatError);
  auto bad_version = bytes;
  bad_version[4] = 9;
  CHECK_THROWS_AS(decode_container(bad_version), FormatError);

  const auto path = std::filesystem::temp_directory_path() / "dp3d_corpus.bin";
  write_container(corpus, path);
  CHECK(encode_container(read_container(path)) == bytes);
  std::filesystem::remove(path);
  CHECK_THROWS_AS(read_container("/nonexistent/x.bin"), FormatError);
}

TEST_CASE("corpus spec parsing") {
  const auto s = CorpusSpec::from_json_text(R"({"actions":["walk","throw"],"count":8,"frames":12,"noise_2d":0.002})");
  CHECK(s.actions.size() == 2);
  CHECK(s.actions[1] == MotionClass::Throw);
  CHECK(s.count == 8);
  CHECK(CorpusSpec::from_json_text(s.to_json_text()).to_json_text() == s.to_json_text());
  CHECK_THROWS_AS(CorpusSpec::from_json_text(R"({"actions":["dance"]})"), RangeError);
  CHECK_THROWS_AS(CorpusSpec::from_json_text(R"({"count":0})"), RangeError);
}

TEST_CASE("human3.6m layout reader") {
  const auto path = std::filesystem::temp_directory_path() / "dp3d_h36m.csv";
  {
    std::ofstream f(path);
    for (int fr = 0; fr < 2; ++fr) {
      for (int j = 0; j < 32; ++j) {
        for (int c = 0; c < 3; ++c) f << (j * 10 + c + fr * 1000) << (j == 31 && c == 2 ? "\n" : ",");
      }
    }
  }
  const auto p = read_h36m_csv(path);
  CHECK(p.frames == 2);
  CHECK(p.joints == 17);
  CHECK(p.data.row(0).isZero());
  // Joint 16 (RWrist) comes from source joint 27: offset (270, 270, 270) from the root.
  CHECK(p.data(16, 0) == 270.0);
  {
    std::ofstream f(path);
    f << "1,2,3\n";
  }
  CHECK_THROWS_AS(read_h36m_csv(path), FormatError);
  std::filesystem::remove(path);
}
