#pragma once

// Prompt-conditioned pose denoiser: affinity-modulated spatial attention,
// cross-attention on the context embedding, temporal attention, a stack of
// alternating spatial/temporal transformer blocks and the hallucination head
// that regresses one full sequence per temporal offset.

#include <random>
#include <string>
#include <vector>

#include "dp3d/diffusion.hpp"
#include "dp3d/nn.hpp"
#include "dp3d/skeleton.hpp"

namespace dp3d {

struct DenoiserConfig {
  int frames = 16;    // maximum sequence length
  int joints = 17;
  int channels = 64;
  int depth = 2;      // M stacks of spatial + temporal blocks
  int heads = 2;      // L, spatial representation encoder
  int block_heads = 2;  // cross, temporal and stacked blocks; must divide channels
  int hidden = 128;   // feed-forward width
  int max_steps = 50;
  int max_hallucination = 3;  // largest odd n the head supports
  bool use_affinity = true;   // false: plain spatial attention on the tokens
  bool positional = true;
  double position_init_std = 0.02;
  bool zero_init_outputs = false;

  void validate() const;
};

/// n full sequences, one per temporal offset k = -(n-1)/2 .. (n-1)/2.
struct HallucinationSet {
  int frames = 0;
  int joints = 0;
  std::vector<int> offsets;
  std::vector<Mat> sequences;  // each (N*J) x 3

  int n() const { return static_cast<int>(offsets.size()); }
  const Mat& center() const;
};

/// Temporal offsets for an odd n; throws RangeError for even or non-positive n.
std::vector<int> hallucination_offsets(int n);

class Denoiser {
 public:
  Denoiser() = default;
  Denoiser(const DenoiserConfig& config, const SkeletonTopology& topology, ParameterSet& ps,
           std::mt19937_64& rng, const std::string& name = "denoiser");

  const DenoiserConfig& config() const { return config_; }
  const Mat& local_affinity() const { return local_affinity_; }
  int global_affinity_param() const { return global_affinity_; }

  /// Fused joint affinity on the tape (gradient flows into A_G).
  ag::Var fused_affinity(ag::Tape& tape, const ParameterSet& ps) const;
  /// Per-joint (2D || 3D) 5-vectors, (N*J) x 5.
  static ag::Var concat_pose(ag::Var x2d, ag::Var yt);
  /// Concatenation followed by the linear projection to channel width.
  ag::Var build_pose_tokens(ag::Tape& tape, const ParameterSet& ps, ag::Var x2d, ag::Var yt) const;
  /// Learned temporal + spatial positions for the first `frames` frames.
  ag::Var positions(ag::Tape& tape, const ParameterSet& ps, int frames) const;
  /// Z_S = MultiHead(X_A) + X_A + E_c with X_A = A_j-mixed tokens.
  ag::Var sre_forward(ag::Tape& tape, const ParameterSet& ps, ag::Var tokens, ag::Var affinity,
                      ag::Var context) const;
  /// Z_c = Z_S + attention(W_q Z_S, W_k E_c, W_v E_c).
  ag::Var cross_attend(ag::Tape& tape, const ParameterSet& ps, ag::Var zs, ag::Var context) const;
  /// Raw cross-attention output without the residual.
  ag::Var cross_attention_core(ag::Tape& tape, const ParameterSet& ps, ag::Var zs, ag::Var context) const;
  /// Residual transformer block attending across frames for each joint.
  ag::Var temporal_attend(ag::Tape& tape, const ParameterSet& ps, ag::Var z, int frames) const;
  /// M alternating spatial / temporal blocks.
  ag::Var spatiotemporal_encode(ag::Tape& tape, const ParameterSet& ps, ag::Var z, int frames) const;
  /// One (N*J) x 3 regression per offset of hallucination_offsets(n).
  std::vector<ag::Var> decode_hallucinations(ag::Tape& tape, const ParameterSet& ps, ag::Var zhat, int n,
                                             int frames) const;

  struct Output {
    ag::Var tokens;
    std::vector<int> offsets;
    std::vector<ag::Var> sequences;
    const ag::Var& center() const { return sequences[sequences.size() / 2]; }
  };

  /// Full pass. yt: (N*J) x 3, x2d: (N*J) x 2, context: slots x channels.
  /// Throws NumericError naming the first stage that produced NaN/Inf.
  Output denoise(ag::Tape& tape, const ParameterSet& ps, ag::Var yt, ag::Var x2d, ag::Var context, int t,
                 int n) const;

  /// Gradient-free convenience wrapper returning plain matrices.
  HallucinationSet denoise_values(const ParameterSet& ps, const Mat& yt, const Pose2DSequence& x2d,
                                  const Mat& context, int t, int n) const;

  const TimestepEmbedding& timestep_embedding() const { return time_; }

 private:
  DenoiserConfig config_;
  Mat local_affinity_;
  int global_affinity_ = -1;
  nn::Linear input_;
  int temporal_position_ = -1;
  int spatial_position_ = -1;
  TimestepEmbedding time_;
  nn::MultiHeadAttention sre_attention_;
  nn::Linear cross_query_;
  nn::Linear cross_key_;
  nn::Linear cross_value_;
  nn::TransformerBlock temporal_block_;
  std::vector<nn::TransformerBlock> spatial_blocks_;
  std::vector<nn::TransformerBlock> temporal_blocks_;
  nn::LayerNorm head_norm_;
  std::vector<nn::Linear> heads_;  // indexed by offset + (max_hallucination - 1) / 2
};

/// Adapts a Denoiser (plus fixed parameters) to the sampler interface,
/// returning the centre (k = 0) sequence.
class ModelDenoiser final : public PoseDenoiser {
 public:
  ModelDenoiser(const Denoiser& model, const ParameterSet& ps) : model_(model), ps_(ps) {}
  Mat predict_clean(const Mat& yt, const Pose2DSequence& x2d, const Mat& context, int t) const override;

 private:
  const Denoiser& model_;
  const ParameterSet& ps_;
};

}  // namespace dp3d
