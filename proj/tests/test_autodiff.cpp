#include <random>

#include "doctest.h"
#include "dp3d/autodiff.hpp"
#include "dp3d/error.hpp"
#include "gradcheck.hpp"

using dp3d::Mat;
using dp3d::testing::op_gradient_error;
using dp3d::testing::random_mat;
namespace ag = dp3d::ag;

namespace {
constexpr double kTol = 1e-6;
}

TEST_CASE("elementwise and matrix ops match finite differences") {
  std::mt19937_64 rng(1);
  const Mat a = random_mat(3, 4, rng), b = random_mat(3, 4, rng), w = random_mat(4, 5, rng);
  const Mat row = random_mat(1, 4, rng), bias = random_mat(1, 5, rng);
  CHECK(op_gradient_error([](ag::Tape&, auto& v) { return ag::matmul(v[0], v[1]); }, {a, w}) < kTol);
  CHECK(op_gradient_error([](ag::Tape&, auto& v) { return ag::add(v[0], v[1]); }, {a, b}) < kTol);
  CHECK(op_gradient_error([](ag::Tape&, auto& v) { return ag::sub(v[0], v[1]); }, {a, b}) < kTol);
  CHECK(op_gradient_error([](ag::Tape&, auto& v) { return ag::mul(v[0], v[1]); }, {a, b}) < kTol);
  CHECK(op_gradient_error([](ag::Tape&, auto& v) { return ag::scale(v[0], -2.5); }, {a}) < kTol);
  CHECK(op_gradient_error([](ag::Tape&, auto& v) { return ag::add_row(v[0], v[1]); }, {a, row}) < kTol);
  CHECK(op_gradient_error([](ag::Tape&, auto& v) { return ag::linear(v[0], v[1], v[2]); }, {a, w, bias}) <
        kTol);
  CHECK(op_gradient_error([](ag::Tape&, auto& v) { return ag::gelu(v[0]); }, {a}) < kTol);
  CHECK(op_gradient_error([](ag::Tape&, auto& v) { return ag::concat_cols(v[0], v[1]); }, {a, b}) < kTol);
  CHECK(op_gradient_error([](ag::Tape&, auto& v) { return ag::reshape(v[0], 2, 6); }, {a}) < kTol);
  CHECK(op_gradient_error([](ag::Tape&, auto& v) { return ag::mean_rows(v[0]); }, {a}) < kTol);
  CHECK(op_gradient_error([](ag::Tape&, auto& v) { return ag::sum_all(v[0]); }, {a}) < kTol);
  CHECK(op_gradient_error([](ag::Tape&, auto& v) { return ag::mean_abs(v[0]); }, {a}) < kTol);
  CHECK(op_gradient_error([](ag::Tape&, auto& v) { return ag::row_norm(v[0]); }, {a}) < kTol);
  CHECK(op_gradient_error([](ag::Tape&, auto& v) { return ag::gather_rows(v[0], {2, 0, 2, 1}); }, {a}) <
        kTol);
}

TEST_CASE("layer norm, softmax losses and transposed convolution gradients") {
  std::mt19937_64 rng(2);
  const Mat x = random_mat(5, 6, rng), g = random_mat(1, 6, rng), b = random_mat(1, 6, rng);
  CHECK(op_gradient_error([](ag::Tape&, auto& v) { return ag::layer_norm(v[0], v[1], v[2]); }, {x, g, b}) <
        1e-5);
  const Mat logits = random_mat(1, 4, rng);
  CHECK(op_gradient_error([](ag::Tape&, auto& v) { return ag::cross_entropy(v[0], 2); }, {logits}) < kTol);
  const Mat seq = random_mat(3, 4, rng), w = random_mat(4, 2 * 5, rng), bias = random_mat(1, 5, rng);
  CHECK(op_gradient_error([](ag::Tape&, auto& v) { return ag::conv_transpose1d(v[0], v[1], v[2], 2, 2); },
                          {seq, w, bias}) < kTol);
  CHECK(op_gradient_error([](ag::Tape&, auto& v) { return ag::conv_transpose1d(v[0], v[1], v[2], 2, 1); },
                          {seq, w, bias}) < kTol);
}

TEST_CASE("attention and affinity ops match finite differences") {
  std::mt19937_64 rng(3);
  const int frames = 3, joints = 4, c = 6;
  const Mat q = random_mat(frames * joints, c, rng), k = random_mat(frames * joints, c, rng),
            v = random_mat(frames * joints, c, rng);
  for (auto layout : {ag::GroupLayout::spatial(frames, joints), ag::GroupLayout::temporal(frames, joints)}) {
    CHECK(op_gradient_error(
              [layout](ag::Tape&, auto& in) { return ag::grouped_attention(in[0], in[1], in[2], 2, layout); },
              {q, k, v}) < 1e-5);
  }
  const Mat ck = random_mat(2, c, rng), cv = random_mat(2, c, rng);
  CHECK(op_gradient_error([](ag::Tape&, auto& in) { return ag::cross_attention(in[0], in[1], in[2], 3); },
                          {q, ck, cv}) < 1e-5);
  const Mat a = random_mat(joints, joints, rng);
  CHECK(op_gradient_error([joints](ag::Tape&, auto& in) { return ag::joint_mix(in[0], in[1], joints); },
                          {a, v}) < kTol);
  CHECK(op_gradient_error([](ag::Tape&, auto& in) { return ag::symmetrize(in[0]); }, {a}) < kTol);
}

TEST_CASE("transposed convolution matches a brute-force scatter") {
  std::mt19937_64 rng(4);
  const int len = 3, cin = 2, cout = 3, kernel = 3, stride = 2;
  const Mat x = random_mat(len, cin, rng), w = random_mat(cin, kernel * cout, rng), b = random_mat(1, cout, rng);
  ag::Tape tape(false);
  const Mat out = ag::conv_transpose1d(tape.constant(x), tape.constant(w), tape.constant(b), kernel, stride).value();
  REQUIRE(out.rows() == (len - 1) * stride + kernel);
  Mat expect = Mat::Zero(out.rows(), cout);
  for (int p = 0; p < out.rows(); ++p) expect.row(p) = b;
  for (int l = 0; l < len; ++l)
    for (int kk = 0; kk < kernel; ++kk)
      for (int ci = 0; ci < cin; ++ci)
        for (int co = 0; co < cout; ++co) expect(l * stride + kk, co) += x(l, ci) * w(ci, kk * cout + co);
  CHECK((out - expect).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("spatial and temporal layouts address frame-major rows") {
  const auto s = ag::GroupLayout::spatial(3, 4);
  const auto t = ag::GroupLayout::temporal(3, 4);
  CHECK(s.row(1, 2) == 6);
  CHECK(t.row(2, 1) == 6);
  CHECK(s.total_rows() == 12);
  CHECK(t.total_rows() == 12);
}

TEST_CASE("parameters bind once per tape and gradients accumulate") {
  dp3d::ParameterSet ps;
  const int w = ps.add("w", Mat::Constant(1, 1, 2.0));
  ag::Tape tape;
  ag::Var a = tape.param(ps, w);
  ag::Var b = tape.param(ps, w);
  CHECK(a.id == b.id);
  ag::Var loss = ag::sum_all(ag::mul(a, b));
  tape.backward(loss);
  std::vector<Mat> grads(1);
  tape.accumulate_param_grads(grads);
  CHECK(grads[0](0, 0) == doctest::Approx(4.0));
  tape.accumulate_param_grads(grads);
  CHECK(grads[0](0, 0) == doctest::Approx(8.0));
}

TEST_CASE("shape errors are reported") {
  ag::Tape tape;
  auto a = tape.leaf(Mat::Zero(2, 3));
  auto b = tape.leaf(Mat::Zero(2, 2));
  CHECK_THROWS_AS(ag::matmul(a, b), dp3d::ShapeError);
  CHECK_THROWS_AS(ag::add(a, b), dp3d::ShapeError);
  CHECK_THROWS_AS(tape.backward(a), dp3d::ShapeError);
  CHECK_THROWS_AS(ag::cross_entropy(ag::reshape(a, 1, 6), 6), dp3d::RangeError);
}
