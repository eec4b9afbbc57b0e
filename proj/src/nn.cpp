#include "dp3d/nn.hpp"

#include <cmath>

namespace dp3d::nn {

Linear Linear::create(ParameterSet& ps, const std::string& name, int in, int out, std::mt19937_64& rng,
                      bool zero_init) {
  Linear l;
  if (zero_init) {
    l.weight = ps.add_zeros(name + ".weight", in, out);
  } else {
    l.weight = ps.add_normal(name + ".weight", in, out, 1.0 / std::sqrt(static_cast<double>(in)), rng);
  }
  l.bias = ps.add_zeros(name + ".bias", 1, out);
  return l;
}

ag::Var Linear::operator()(ag::Tape& tape, const ParameterSet& ps, ag::Var x) const {
  return ag::linear(x, tape.param(ps, weight), tape.param(ps, bias));
}

LayerNorm LayerNorm::create(ParameterSet& ps, const std::string& name, int dim) {
  return {ps.add(name + ".gain", Mat::Ones(1, dim)), ps.add_zeros(name + ".bias", 1, dim)};
}

ag::Var LayerNorm::operator()(ag::Tape& tape, const ParameterSet& ps, ag::Var x) const {
  return ag::layer_norm(x, tape.param(ps, gain), tape.param(ps, bias));
}

FeedForward FeedForward::create(ParameterSet& ps, const std::string& name, int dim, int hidden,
                                std::mt19937_64& rng, bool zero_output) {
  FeedForward f;
  f.fc1 = Linear::create(ps, name + ".fc1", dim, hidden, rng);
  f.fc2 = Linear::create(ps, name + ".fc2", hidden, dim, rng, zero_output);
  return f;
}

ag::Var FeedForward::operator()(ag::Tape& tape, const ParameterSet& ps, ag::Var x) const {
  return fc2(tape, ps, ag::gelu(fc1(tape, ps, x)));
}

MultiHeadAttention MultiHeadAttention::create(ParameterSet& ps, const std::string& name, int dim, int heads,
                                              std::mt19937_64& rng, bool zero_output) {
  MultiHeadAttention m;
  const int inner = heads * ((dim + heads - 1) / heads);
  m.query = Linear::create(ps, name + ".query", dim, inner, rng);
  m.key = Linear::create(ps, name + ".key", dim, inner, rng);
  m.value = Linear::create(ps, name + ".value", dim, inner, rng);
  m.output = Linear::create(ps, name + ".output", inner, dim, rng, zero_output);
  m.heads = heads;
  return m;
}

ag::Var MultiHeadAttention::operator()(ag::Tape& tape, const ParameterSet& ps, ag::Var x,
                                       const ag::GroupLayout& layout) const {
  ag::Var q = query(tape, ps, x);
  ag::Var k = key(tape, ps, x);
  ag::Var v = value(tape, ps, x);
  return output(tape, ps, ag::grouped_attention(q, k, v, heads, layout));
}

TransformerBlock TransformerBlock::create(ParameterSet& ps, const std::string& name, int dim, int heads,
                                          int hidden, std::mt19937_64& rng, bool zero_output) {
  TransformerBlock b;
  b.norm1 = LayerNorm::create(ps, name + ".norm1", dim);
  b.attention = MultiHeadAttention::create(ps, name + ".attn", dim, heads, rng, zero_output);
  b.norm2 = LayerNorm::create(ps, name + ".norm2", dim);
  b.feed_forward = FeedForward::create(ps, name + ".ff", dim, hidden, rng, zero_output);
  return b;
}

ag::Var TransformerBlock::operator()(ag::Tape& tape, const ParameterSet& ps, ag::Var x,
                                     const ag::GroupLayout& layout) const {
  ag::Var h = ag::add(x, attention(tape, ps, norm1(tape, ps, x), layout));
  return ag::add(h, feed_forward(tape, ps, norm2(tape, ps, h)));
}

}  // namespace dp3d::nn
