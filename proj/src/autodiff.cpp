#include "dp3d/autodiff.hpp"

#include <cmath>
#include <memory>
#include <string>

#include "dp3d/error.hpp"

namespace dp3d::ag {

namespace {

Tape& same_tape(Var a, Var b) {
  if (a.tape == nullptr || a.tape != b.tape) throw Error("variables live on different tapes");
  return *a.tape;
}

void require_shape(bool ok, const char* op, const Mat& a, const Mat& b) {
  if (!ok) {
    throw ShapeError(std::string(op) + ": incompatible shapes " + std::to_string(a.rows()) + "x" +
                     std::to_string(a.cols()) + " and " + std::to_string(b.rows()) + "x" +
                     std::to_string(b.cols()));
  }
}

// Copies block (rows of a group, columns [col, col+width)) into a dense matrix.
Mat gather_group(const Mat& src, const GroupLayout& layout, int g, int col, int width) {
  Mat out(layout.group_size, width);
  for (int i = 0; i < layout.group_size; ++i) {
    out.row(i) = src.block(layout.row(g, i), col, 1, width);
  }
  return out;
}

void scatter_add_group(Mat& dst, const Mat& block, const GroupLayout& layout, int g, int col) {
  for (int i = 0; i < layout.group_size; ++i) {
    dst.block(layout.row(g, i), col, 1, block.cols()) += block.row(i);
  }
}

void softmax_rows_inplace(Mat& s) {
  for (Eigen::Index r = 0; r < s.rows(); ++r) {
    const double m = s.row(r).maxCoeff();
    s.row(r) = (s.row(r).array() - m).exp().matrix();
    s.row(r) /= s.row(r).sum();
  }
}

// dS from dP for row-wise softmax P.
Mat softmax_backward(const Mat& p, const Mat& dp) {
  const Eigen::VectorXd dots = (dp.array() * p.array()).rowwise().sum();
  return (p.array() * (dp.colwise() - dots).array()).matrix();
}

}  // namespace

// ---------------------------------------------------------------------- Var

const Mat& Var::value() const { return tape->value(id); }

double Var::scalar() const {
  const Mat& v = value();
  if (v.rows() != 1 || v.cols() != 1) throw ShapeError("scalar() on a non 1x1 node");
  return v(0, 0);
}

// --------------------------------------------------------------------- Tape

Var Tape::push(Mat value, bool needs_grad, std::function<void(Tape&, int)> backward) {
  Node n;
  n.own = std::move(value);
  n.needs_grad = needs_grad;
  if (needs_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return {this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::constant(Mat value) { return push(std::move(value), false, {}); }

Var Tape::leaf(Mat value) { return push(std::move(value), record_, {}); }

Var Tape::param(const ParameterSet& params, int index) {
  if (auto it = param_nodes_.find(index); it != param_nodes_.end()) return {this, it->second};
  Node n;
  n.external = &params[index].value;
  n.needs_grad = record_;
  nodes_.push_back(std::move(n));
  const int id = static_cast<int>(nodes_.size()) - 1;
  param_nodes_.emplace(index, id);
  return {this, id};
}

const Mat& Tape::value(int id) const {
  const Node& n = nodes_[static_cast<size_t>(id)];
  return n.external != nullptr ? *n.external : n.own;
}

Mat& Tape::grad_ref(int id) {
  Node& n = nodes_[static_cast<size_t>(id)];
  if (n.grad.size() == 0) {
    const Mat& v = n.external != nullptr ? *n.external : n.own;
    n.grad = Mat::Zero(v.rows(), v.cols());
  }
  return n.grad;
}

Mat Tape::grad(int id) const {
  const Node& n = nodes_[static_cast<size_t>(id)];
  if (n.grad.size() > 0) return n.grad;
  const Mat& v = value(id);
  return Mat::Zero(v.rows(), v.cols());
}

void Tape::backward(Var root) {
  if (root.tape != this) throw Error("backward: root belongs to another tape");
  const Mat& rv = value(root.id);
  if (rv.rows() != 1 || rv.cols() != 1) throw ShapeError("backward: root must be 1x1");
  for (auto& n : nodes_) n.grad.resize(0, 0);
  grad_ref(root.id)(0, 0) = 1.0;
  for (int i = root.id; i >= 0; --i) {
    Node& n = nodes_[static_cast<size_t>(i)];
    if (n.needs_grad && n.backward && n.grad.size() > 0) n.backward(*this, i);
  }
}

void Tape::accumulate_param_grads(std::vector<Mat>& grads) const {
  for (const auto& [index, id] : param_nodes_) {
    const Node& n = nodes_[static_cast<size_t>(id)];
    if (n.grad.size() == 0) continue;
    Mat& g = grads[static_cast<size_t>(index)];
    if (g.size() == 0) {
      g = n.grad;
    } else {
      g += n.grad;
    }
  }
}

// --------------------------------------------------------------- operations

Var matmul(Var a, Var b) {
  Tape& t = same_tape(a, b);
  require_shape(a.cols() == b.rows(), "matmul", a.value(), b.value());
  const int ia = a.id, ib = b.id;
  return t.push(a.value() * b.value(), t.needs_grad(ia) || t.needs_grad(ib),
                [ia, ib](Tape& t, int self) {
                  const Mat& g = t.grad_ref(self);
                  if (t.needs_grad(ia)) t.grad_ref(ia).noalias() += g * t.value(ib).transpose();
                  if (t.needs_grad(ib)) t.grad_ref(ib).noalias() += t.value(ia).transpose() * g;
                });
}

Var add(Var a, Var b) {
  Tape& t = same_tape(a, b);
  require_shape(a.rows() == b.rows() && a.cols() == b.cols(), "add", a.value(), b.value());
  const int ia = a.id, ib = b.id;
  return t.push(a.value() + b.value(), t.needs_grad(ia) || t.needs_grad(ib),
                [ia, ib](Tape& t, int self) {
                  const Mat& g = t.grad_ref(self);
                  if (t.needs_grad(ia)) t.grad_ref(ia) += g;
                  if (t.needs_grad(ib)) t.grad_ref(ib) += g;
                });
}

Var sub(Var a, Var b) {
  Tape& t = same_tape(a, b);
  require_shape(a.rows() == b.rows() && a.cols() == b.cols(), "sub", a.value(), b.value());
  const int ia = a.id, ib = b.id;
  return t.push(a.value() - b.value(), t.needs_grad(ia) || t.needs_grad(ib),
                [ia, ib](Tape& t, int self) {
                  const Mat& g = t.grad_ref(self);
                  if (t.needs_grad(ia)) t.grad_ref(ia) += g;
                  if (t.needs_grad(ib)) t.grad_ref(ib) -= g;
                });
}

Var mul(Var a, Var b) {
  Tape& t = same_tape(a, b);
  require_shape(a.rows() == b.rows() && a.cols() == b.cols(), "mul", a.value(), b.value());
  const int ia = a.id, ib = b.id;
  return t.push(a.value().cwiseProduct(b.value()), t.needs_grad(ia) || t.needs_grad(ib),
                [ia, ib](Tape& t, int self) {
                  const Mat& g = t.grad_ref(self);
                  if (t.needs_grad(ia)) t.grad_ref(ia) += g.cwiseProduct(t.value(ib));
                  if (t.needs_grad(ib)) t.grad_ref(ib) += g.cwiseProduct(t.value(ia));
                });
}

Var scale(Var a, double s) {
  Tape& t = *a.tape;
  const int ia = a.id;
  return t.push(a.value() * s, t.needs_grad(ia),
                [ia, s](Tape& t, int self) { t.grad_ref(ia) += s * t.grad_ref(self); });
}

Var add_row(Var a, Var row) {
  Tape& t = same_tape(a, row);
  require_shape(row.rows() == 1 && row.cols() == a.cols(), "add_row", a.value(), row.value());
  const int ia = a.id, ir = row.id;
  Mat out = a.value();
  out.rowwise() += row.value().row(0);
  return t.push(std::move(out), t.needs_grad(ia) || t.needs_grad(ir),
                [ia, ir](Tape& t, int self) {
                  const Mat& g = t.grad_ref(self);
                  if (t.needs_grad(ia)) t.grad_ref(ia) += g;
                  if (t.needs_grad(ir)) t.grad_ref(ir) += g.colwise().sum();
                });
}

Var linear(Var x, Var w, Var b) {
  Tape& t = same_tape(x, w);
  same_tape(x, b);
  require_shape(x.cols() == w.rows(), "linear", x.value(), w.value());
  require_shape(b.rows() == 1 && b.cols() == w.cols(), "linear bias", w.value(), b.value());
  const int ix = x.id, iw = w.id, ib = b.id;
  Mat out(x.rows(), w.cols());
  out.noalias() = x.value() * w.value();
  out.rowwise() += b.value().row(0);
  return t.push(std::move(out), t.needs_grad(ix) || t.needs_grad(iw) || t.needs_grad(ib),
                [ix, iw, ib](Tape& t, int self) {
                  const Mat& g = t.grad_ref(self);
                  if (t.needs_grad(ix)) t.grad_ref(ix).noalias() += g * t.value(iw).transpose();
                  if (t.needs_grad(iw)) t.grad_ref(iw).noalias() += t.value(ix).transpose() * g;
                  if (t.needs_grad(ib)) t.grad_ref(ib) += g.colwise().sum();
                });
}

Var gelu(Var a) {
  Tape& t = *a.tape;
  const int ia = a.id;
  const Mat& x = a.value();
  Mat out(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double v = x.data()[i];
    out.data()[i] = 0.5 * v * (1.0 + std::erf(v * M_SQRT1_2));
  }
  return t.push(std::move(out), t.needs_grad(ia), [ia](Tape& t, int self) {
    const Mat& g = t.grad_ref(self);
    const Mat& x = t.value(ia);
    Mat& dx = t.grad_ref(ia);
    constexpr double inv_sqrt_2pi = 0.3989422804014327;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      const double v = x.data()[i];
      const double d = 0.5 * (1.0 + std::erf(v * M_SQRT1_2)) + v * inv_sqrt_2pi * std::exp(-0.5 * v * v);
      dx.data()[i] += g.data()[i] * d;
    }
  });
}

Var layer_norm(Var x, Var gain, Var bias, double eps) {
  Tape& t = same_tape(x, gain);
  same_tape(x, bias);
  const Mat& xv = x.value();
  const Eigen::Index c = xv.cols();
  require_shape(gain.rows() == 1 && gain.cols() == c, "layer_norm gain", xv, gain.value());
  require_shape(bias.rows() == 1 && bias.cols() == c, "layer_norm bias", xv, bias.value());
  auto xhat = std::make_shared<Mat>(xv.rows(), c);
  auto inv_std = std::make_shared<Eigen::VectorXd>(xv.rows());
  for (Eigen::Index r = 0; r < xv.rows(); ++r) {
    const double mu = xv.row(r).mean();
    const double var = (xv.row(r).array() - mu).square().mean();
    (*inv_std)(r) = 1.0 / std::sqrt(var + eps);
    xhat->row(r) = (xv.row(r).array() - mu) * (*inv_std)(r);
  }
  Mat out = xhat->array().rowwise() * gain.value().row(0).array();
  out.rowwise() += bias.value().row(0);
  const int ix = x.id, ig = gain.id, ib = bias.id;
  return t.push(std::move(out), t.needs_grad(ix) || t.needs_grad(ig) || t.needs_grad(ib),
                [ix, ig, ib, xhat, inv_std](Tape& t, int self) {
                  const Mat& g = t.grad_ref(self);
                  if (t.needs_grad(ig)) t.grad_ref(ig) += g.cwiseProduct(*xhat).colwise().sum();
                  if (t.needs_grad(ib)) t.grad_ref(ib) += g.colwise().sum();
                  if (!t.needs_grad(ix)) return;
                  const Mat dxhat = g.array().rowwise() * t.value(ig).row(0).array();
                  const double c = static_cast<double>(g.cols());
                  Mat& dx = t.grad_ref(ix);
                  for (Eigen::Index r = 0; r < g.rows(); ++r) {
                    const double s1 = dxhat.row(r).sum();
                    const double s2 = dxhat.row(r).dot(xhat->row(r));
                    dx.row(r).array() += (*inv_std)(r) / c *
                                         (c * dxhat.row(r).array() - s1 - xhat->row(r).array() * s2);
                  }
                });
}

Var grouped_attention(Var q, Var k, Var v, int heads, const GroupLayout& layout) {
  Tape& t = same_tape(q, k);
  same_tape(q, v);
  const Eigen::Index c = q.cols();
  require_shape(k.cols() == c && v.cols() == c && k.rows() == q.rows() && v.rows() == q.rows(),
                "grouped_attention", q.value(), k.value());
  if (heads <= 0 || c % heads != 0) throw ShapeError("grouped_attention: channels not divisible by heads");
  if (layout.total_rows() != q.rows()) throw ShapeError("grouped_attention: layout does not cover rows");
  const int dh = static_cast<int>(c) / heads;
  const double sc = 1.0 / std::sqrt(static_cast<double>(dh));
  auto probs = std::make_shared<std::vector<Mat>>();
  probs->reserve(static_cast<size_t>(layout.groups * heads));
  Mat out = Mat::Zero(q.rows(), c);
  for (int g = 0; g < layout.groups; ++g) {
    for (int h = 0; h < heads; ++h) {
      const Mat qg = gather_group(q.value(), layout, g, h * dh, dh);
      const Mat kg = gather_group(k.value(), layout, g, h * dh, dh);
      const Mat vg = gather_group(v.value(), layout, g, h * dh, dh);
      Mat p = qg.lazyProduct(kg.transpose()) * sc;
      softmax_rows_inplace(p);
      scatter_add_group(out, p.lazyProduct(vg), layout, g, h * dh);
      probs->push_back(std::move(p));
    }
  }
  const int iq = q.id, ik = k.id, iv = v.id;
  return t.push(std::move(out), t.needs_grad(iq) || t.needs_grad(ik) || t.needs_grad(iv),
                [iq, ik, iv, heads, dh, sc, layout, probs](Tape& t, int self) {
                  const Mat& g = t.grad_ref(self);
                  const Mat& qv = t.value(iq);
                  const Mat& kv = t.value(ik);
                  const Mat& vv = t.value(iv);
                  Mat* dq = t.needs_grad(iq) ? &t.grad_ref(iq) : nullptr;
                  Mat* dk = t.needs_grad(ik) ? &t.grad_ref(ik) : nullptr;
                  Mat* dv = t.needs_grad(iv) ? &t.grad_ref(iv) : nullptr;
                  for (int gi = 0; gi < layout.groups; ++gi) {
                    for (int h = 0; h < heads; ++h) {
                      const Mat& p = (*probs)[static_cast<size_t>(gi * heads + h)];
                      const Mat dout = gather_group(g, layout, gi, h * dh, dh);
                      const Mat vg = gather_group(vv, layout, gi, h * dh, dh);
                      if (dv != nullptr) scatter_add_group(*dv, p.transpose().lazyProduct(dout), layout, gi, h * dh);
                      if (dq == nullptr && dk == nullptr) continue;
                      const Mat ds = softmax_backward(p, dout.lazyProduct(vg.transpose())) * sc;
                      if (dq != nullptr) {
                        const Mat kg = gather_group(kv, layout, gi, h * dh, dh);
                        scatter_add_group(*dq, ds.lazyProduct(kg), layout, gi, h * dh);
                      }
                      if (dk != nullptr) {
                        const Mat qg = gather_group(qv, layout, gi, h * dh, dh);
                        scatter_add_group(*dk, ds.transpose().lazyProduct(qg), layout, gi, h * dh);
                      }
                    }
                  }
                });
}

Var cross_attention(Var q, Var k, Var v, int heads) {
  Tape& t = same_tape(q, k);
  same_tape(q, v);
  const Eigen::Index c = q.cols();
  require_shape(k.cols() == c && v.cols() == c && k.rows() == v.rows(), "cross_attention",
                q.value(), k.value());
  if (heads <= 0 || c % heads != 0) throw ShapeError("cross_attention: channels not divisible by heads");
  const int dh = static_cast<int>(c) / heads;
  const double sc = 1.0 / std::sqrt(static_cast<double>(dh));
  auto probs = std::make_shared<std::vector<Mat>>();
  Mat out(q.rows(), c);
  for (int h = 0; h < heads; ++h) {
    Mat p = (q.value().middleCols(h * dh, dh) * k.value().middleCols(h * dh, dh).transpose()) * sc;
    softmax_rows_inplace(p);
    out.middleCols(h * dh, dh).noalias() = p * v.value().middleCols(h * dh, dh);
    probs->push_back(std::move(p));
  }
  const int iq = q.id, ik = k.id, iv = v.id;
  return t.push(std::move(out), t.needs_grad(iq) || t.needs_grad(ik) || t.needs_grad(iv),
                [iq, ik, iv, heads, dh, sc, probs](Tape& t, int self) {
                  const Mat& g = t.grad_ref(self);
                  for (int h = 0; h < heads; ++h) {
                    const Mat& p = (*probs)[static_cast<size_t>(h)];
                    const auto dout = g.middleCols(h * dh, dh);
                    if (t.needs_grad(iv)) t.grad_ref(iv).middleCols(h * dh, dh).noalias() += p.transpose() * dout;
                    if (!t.needs_grad(iq) && !t.needs_grad(ik)) continue;
                    const Mat ds =
                        softmax_backward(p, dout * t.value(iv).middleCols(h * dh, dh).transpose()) * sc;
                    if (t.needs_grad(iq))
                      t.grad_ref(iq).middleCols(h * dh, dh).noalias() += ds * t.value(ik).middleCols(h * dh, dh);
                    if (t.needs_grad(ik))
                      t.grad_ref(ik).middleCols(h * dh, dh).noalias() +=
                          ds.transpose() * t.value(iq).middleCols(h * dh, dh);
                  }
                });
}

Var joint_mix(Var a, Var x, int joints) {
  Tape& t = same_tape(a, x);
  require_shape(a.rows() == joints && a.cols() == joints && x.rows() % joints == 0, "joint_mix",
                a.value(), x.value());
  const Eigen::Index frames = x.rows() / joints;
  Mat out(x.rows(), x.cols());
  for (Eigen::Index f = 0; f < frames; ++f) {
    out.middleRows(f * joints, joints).noalias() = a.value() * x.value().middleRows(f * joints, joints);
  }
  const int ia = a.id, ix = x.id;
  return t.push(std::move(out), t.needs_grad(ia) || t.needs_grad(ix),
                [ia, ix, joints, frames](Tape& t, int self) {
                  const Mat& g = t.grad_ref(self);
                  for (Eigen::Index f = 0; f < frames; ++f) {
                    const auto gf = g.middleRows(f * joints, joints);
                    if (t.needs_grad(ix))
                      t.grad_ref(ix).middleRows(f * joints, joints).noalias() += t.value(ia).transpose() * gf;
                    if (t.needs_grad(ia))
                      t.grad_ref(ia).noalias() += gf * t.value(ix).middleRows(f * joints, joints).transpose();
                  }
                });
}

Var symmetrize(Var a) {
  Tape& t = *a.tape;
  if (a.rows() != a.cols()) throw ShapeError("symmetrize: matrix is not square");
  const int ia = a.id;
  Mat out = 0.5 * (a.value() + a.value().transpose());
  return t.push(std::move(out), t.needs_grad(ia), [ia](Tape& t, int self) {
    const Mat& g = t.grad_ref(self);
    t.grad_ref(ia) += 0.5 * (g + g.transpose());
  });
}

Var gather_rows(Var x, std::vector<int> rows) {
  Tape& t = *x.tape;
  Mat out(static_cast<Eigen::Index>(rows.size()), x.cols());
  for (size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] < 0 || rows[i] >= x.rows()) throw RangeError("gather_rows: row index out of range");
    out.row(static_cast<Eigen::Index>(i)) = x.value().row(rows[i]);
  }
  const int ix = x.id;
  return t.push(std::move(out), t.needs_grad(ix), [ix, rows = std::move(rows)](Tape& t, int self) {
    const Mat& g = t.grad_ref(self);
    Mat& dx = t.grad_ref(ix);
    for (size_t i = 0; i < rows.size(); ++i) dx.row(rows[i]) += g.row(static_cast<Eigen::Index>(i));
  });
}

Var concat_cols(Var a, Var b) {
  Tape& t = same_tape(a, b);
  require_shape(a.rows() == b.rows(), "concat_cols", a.value(), b.value());
  Mat out(a.rows(), a.cols() + b.cols());
  out << a.value(), b.value();
  const int ia = a.id, ib = b.id;
  const Eigen::Index ca = a.cols(), cb = b.cols();
  return t.push(std::move(out), t.needs_grad(ia) || t.needs_grad(ib),
                [ia, ib, ca, cb](Tape& t, int self) {
                  const Mat& g = t.grad_ref(self);
                  if (t.needs_grad(ia)) t.grad_ref(ia) += g.leftCols(ca);
                  if (t.needs_grad(ib)) t.grad_ref(ib) += g.rightCols(cb);
                });
}

Var reshape(Var a, Eigen::Index rows, Eigen::Index cols) {
  Tape& t = *a.tape;
  if (rows * cols != a.value().size()) throw ShapeError("reshape: element count changes");
  Mat out = Eigen::Map<const Mat>(a.value().data(), rows, cols);
  const int ia = a.id;
  const Eigen::Index r0 = a.rows(), c0 = a.cols();
  return t.push(std::move(out), t.needs_grad(ia), [ia, r0, c0](Tape& t, int self) {
    const Mat& g = t.grad_ref(self);
    t.grad_ref(ia) += Eigen::Map<const Mat>(g.data(), r0, c0);
  });
}

Var mean_rows(Var a) {
  Tape& t = *a.tape;
  const int ia = a.id;
  Mat out = a.value().colwise().mean();
  return t.push(std::move(out), t.needs_grad(ia), [ia](Tape& t, int self) {
    const Mat& g = t.grad_ref(self);
    Mat& da = t.grad_ref(ia);
    da.rowwise() += g.row(0) / static_cast<double>(da.rows());
  });
}

Var sum_all(Var a) {
  Tape& t = *a.tape;
  const int ia = a.id;
  Mat out(1, 1);
  out(0, 0) = a.value().sum();
  return t.push(std::move(out), t.needs_grad(ia), [ia](Tape& t, int self) {
    t.grad_ref(ia).array() += t.grad_ref(self)(0, 0);
  });
}

Var mean_abs(Var a) {
  Tape& t = *a.tape;
  const int ia = a.id;
  Mat out(1, 1);
  out(0, 0) = a.value().cwiseAbs().mean();
  return t.push(std::move(out), t.needs_grad(ia), [ia](Tape& t, int self) {
    const double g = t.grad_ref(self)(0, 0);
    const Mat& x = t.value(ia);
    Mat& dx = t.grad_ref(ia);
    const double w = g / static_cast<double>(x.size());
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      const double v = x.data()[i];
      dx.data()[i] += v > 0.0 ? w : (v < 0.0 ? -w : 0.0);
    }
  });
}

Var row_norm(Var a) {
  Tape& t = *a.tape;
  const int ia = a.id;
  Mat out = a.value().rowwise().norm();
  return t.push(std::move(out), t.needs_grad(ia), [ia](Tape& t, int self) {
    const Mat& g = t.grad_ref(self);
    const Mat& x = t.value(ia);
    const Mat& n = t.value(self);
    Mat& dx = t.grad_ref(ia);
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
      if (n(r, 0) > 0.0) dx.row(r) += (g(r, 0) / n(r, 0)) * x.row(r);
    }
  });
}

Var cross_entropy(Var logits, int label) {
  Tape& t = *logits.tape;
  const Mat& z = logits.value();
  if (z.rows() != 1) throw ShapeError("cross_entropy: logits must be a single row");
  if (label < 0 || label >= z.cols()) throw RangeError("cross_entropy: label out of range");
  const double m = z.maxCoeff();
  const double lse = m + std::log((z.array() - m).exp().sum());
  Mat out(1, 1);
  out(0, 0) = lse - z(0, label);
  const int il = logits.id;
  return t.push(std::move(out), t.needs_grad(il), [il, label, lse](Tape& t, int self) {
    const double g = t.grad_ref(self)(0, 0);
    Mat p = (t.value(il).array() - lse).exp();
    p(0, label) -= 1.0;
    t.grad_ref(il) += g * p;
  });
}

Var conv_transpose1d(Var x, Var w, Var b, int kernel, int stride) {
  Tape& t = same_tape(x, w);
  same_tape(x, b);
  if (kernel <= 0 || stride <= 0) throw RangeError("conv_transpose1d: kernel and stride must be positive");
  const Eigen::Index len = x.rows();
  const Eigen::Index cout = b.cols();
  require_shape(w.rows() == x.cols() && w.cols() == kernel * cout, "conv_transpose1d", x.value(), w.value());
  const Eigen::Index out_len = (len - 1) * stride + kernel;
  const Mat y = x.value() * w.value();
  Mat out(out_len, cout);
  out.rowwise() = b.value().row(0);
  for (Eigen::Index l = 0; l < len; ++l) {
    for (int k = 0; k < kernel; ++k) out.row(l * stride + k) += y.block(l, k * cout, 1, cout);
  }
  const int ix = x.id, iw = w.id, ib = b.id;
  return t.push(std::move(out), t.needs_grad(ix) || t.needs_grad(iw) || t.needs_grad(ib),
                [ix, iw, ib, kernel, stride, len, cout](Tape& t, int self) {
                  const Mat& g = t.grad_ref(self);
                  Mat dy(len, kernel * cout);
                  for (Eigen::Index l = 0; l < len; ++l) {
                    for (int k = 0; k < kernel; ++k) dy.block(l, k * cout, 1, cout) = g.row(l * stride + k);
                  }
                  if (t.needs_grad(ix)) t.grad_ref(ix).noalias() += dy * t.value(iw).transpose();
                  if (t.needs_grad(iw)) t.grad_ref(iw).noalias() += t.value(ix).transpose() * dy;
                  if (t.needs_grad(ib)) t.grad_ref(ib) += g.colwise().sum();
                });
}

}  // namespace dp3d::ag
