#pragma once

// Tape-based reverse-mode differentiation over row-major double matrices.
//
// A Tape records every operation of one forward pass. Nodes are appended in
// creation order, so walking the tape backwards is a valid topological order.
// One tape per forward pass; tapes are not shared between threads.

#include <Eigen/Core>

#include <functional>
#include <unordered_map>
#include <vector>

#include "dp3d/params.hpp"

namespace dp3d::ag {

class Tape;

/// Handle to a node on a tape.
struct Var {
  Tape* tape = nullptr;
  int id = -1;

  const Mat& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  /// Value of a 1x1 node.
  double scalar() const;
};

/// Row addressing for grouped attention: element i of group g lives in row
/// g * group_stride + i * elem_stride.
struct GroupLayout {
  int groups = 1;
  int group_size = 1;
  int group_stride = 0;
  int elem_stride = 1;

  int row(int g, int i) const { return g * group_stride + i * elem_stride; }
  int total_rows() const { return groups * group_size; }

  /// Attention inside each frame (joint axis); rows are frame-major.
  static GroupLayout spatial(int frames, int joints) { return {frames, joints, joints, 1}; }
  /// Attention across frames for each joint.
  static GroupLayout temporal(int frames, int joints) { return {joints, frames, 1, joints}; }
};

class Tape {
 public:
  /// With record_gradients = false, leaves and parameters carry no gradient
  /// and no backward closures are stored (inference mode).
  explicit Tape(bool record_gradients = true) : record_(record_gradients) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// A value that never receives a gradient.
  Var constant(Mat value);
  /// A leaf that receives a gradient (readable through grad()).
  Var leaf(Mat value);
  /// Leaf bound to a parameter; repeated calls for the same index return the
  /// same node. The parameter storage must outlive the tape.
  Var param(const ParameterSet& params, int index);

  /// Seeds d(root)/d(root) = 1 and propagates. root must be 1x1.
  void backward(Var root);

  const Mat& value(int id) const;
  /// Gradient of the last backward() root w.r.t. node id; zeros if the node
  /// did not influence the root.
  Mat grad(int id) const;
  bool needs_grad(int id) const { return nodes_[static_cast<size_t>(id)].needs_grad; }

  /// Adds the gradients of every bound parameter into grads (indexed like
  /// the parameter set; empty entries are allocated on demand).
  void accumulate_param_grads(std::vector<Mat>& grads) const;

  size_t size() const { return nodes_.size(); }

  // Used by op implementations.
  Var push(Mat value, bool needs_grad, std::function<void(Tape&, int)> backward);
  Mat& grad_ref(int id);
  bool has_grad(int id) const { return nodes_[static_cast<size_t>(id)].grad.size() > 0; }

 private:
  struct Node {
    Mat own;
    const Mat* external = nullptr;
    Mat grad;
    bool needs_grad = false;
    std::function<void(Tape&, int)> backward;
  };
  std::vector<Node> nodes_;
  std::unordered_map<int, int> param_nodes_;  // parameter index -> node id
  bool record_ = true;

  friend struct Var;
};

// ---------------------------------------------------------------- operations
// Shapes: "rows x cols". Row vectors are 1 x cols.

Var matmul(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);  // elementwise
Var scale(Var a, double s);
/// a (r x c) + row (1 x c) broadcast over rows.
Var add_row(Var a, Var row);
/// x W + b, with W (in x out) and b (1 x out).
Var linear(Var x, Var w, Var b);
/// Exact (erf) GELU.
Var gelu(Var a);
/// Per-row layer normalisation with affine gain/bias rows.
Var layer_norm(Var x, Var gain, Var bias, double eps = 1e-5);
/// Multi-head scaled dot-product attention within groups of rows.
/// q, k, v: rows x C with C divisible by heads.
Var grouped_attention(Var q, Var k, Var v, int heads, const GroupLayout& layout);
/// Every query row attends over the same set of key/value rows.
Var cross_attention(Var q, Var k, Var v, int heads);
/// Per frame: out_frame = A x_frame, x rows = frames * joints (frame-major).
Var joint_mix(Var a, Var x, int joints);
/// (A + A^T) / 2 for square A.
Var symmetrize(Var a);
Var gather_rows(Var x, std::vector<int> rows);
Var concat_cols(Var a, Var b);
/// Row-major reinterpretation; rows*cols must be preserved.
Var reshape(Var a, Eigen::Index rows, Eigen::Index cols);
/// Mean over rows: (r x c) -> (1 x c).
Var mean_rows(Var a);
/// Sum of all entries -> 1x1.
Var sum_all(Var a);
/// Mean of |a| over all entries -> 1x1.
Var mean_abs(Var a);
/// Euclidean norm of each row -> (r x 1).
Var row_norm(Var a);
/// Softmax cross-entropy of a (1 x C) logit row against label -> 1x1.
Var cross_entropy(Var logits, int label);
/// 1-D transposed convolution. x: (L x Cin), w: (Cin x kernel*Cout) laid out
/// as w(ci, k*Cout + co), b: (1 x Cout). Output length (L-1)*stride + kernel.
Var conv_transpose1d(Var x, Var w, Var b, int kernel, int stride);

}  // namespace dp3d::ag
