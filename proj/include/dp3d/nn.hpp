#pragma once

// Small layer library on top of the tape: parameter indices live in the layer
// structs, values live in a ParameterSet.

#include <random>
#include <string>

#include "dp3d/autodiff.hpp"

namespace dp3d::nn {

struct Linear {
  int weight = -1;  // in x out
  int bias = -1;    // 1 x out

  /// Weights ~ N(0, 1/in); zero_init gives an all-zero layer.
  static Linear create(ParameterSet& ps, const std::string& name, int in, int out, std::mt19937_64& rng,
                       bool zero_init = false);
  ag::Var operator()(ag::Tape& tape, const ParameterSet& ps, ag::Var x) const;
};

struct LayerNorm {
  int gain = -1;
  int bias = -1;

  static LayerNorm create(ParameterSet& ps, const std::string& name, int dim);
  ag::Var operator()(ag::Tape& tape, const ParameterSet& ps, ag::Var x) const;
};

/// Linear -> GELU -> Linear.
struct FeedForward {
  Linear fc1;
  Linear fc2;

  static FeedForward create(ParameterSet& ps, const std::string& name, int dim, int hidden,
                            std::mt19937_64& rng, bool zero_output = false);
  ag::Var operator()(ag::Tape& tape, const ParameterSet& ps, ag::Var x) const;
};

/// Heads of width ceil(dim / heads); the output projection maps back to dim.
struct MultiHeadAttention {
  Linear query;
  Linear key;
  Linear value;
  Linear output;
  int heads = 1;

  static MultiHeadAttention create(ParameterSet& ps, const std::string& name, int dim, int heads,
                                   std::mt19937_64& rng, bool zero_output = false);
  ag::Var operator()(ag::Tape& tape, const ParameterSet& ps, ag::Var x, const ag::GroupLayout& layout) const;
};

/// Pre-norm residual block: x + MHA(LN x), then + FF(LN x).
struct TransformerBlock {
  LayerNorm norm1;
  MultiHeadAttention attention;
  LayerNorm norm2;
  FeedForward feed_forward;

  static TransformerBlock create(ParameterSet& ps, const std::string& name, int dim, int heads, int hidden,
                                 std::mt19937_64& rng, bool zero_output = false);
  ag::Var operator()(ag::Tape& tape, const ParameterSet& ps, ag::Var x, const ag::GroupLayout& layout) const;
};

}  // namespace dp3d::nn
