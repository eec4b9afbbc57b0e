#include "dp3d/denoiser.hpp"

#include <cmath>

#include "dp3d/error.hpp"

namespace dp3d {

namespace {

void check_finite(const ag::Var& v, const char* stage) {
  if (!v.value().allFinite()) throw NumericError(std::string("denoise: non-finite values after ") + stage);
}

}  // namespace

void DenoiserConfig::validate() const {
  if (frames < 1 || joints < 1 || channels < 1 || depth < 0 || heads < 1 || block_heads < 1 || hidden < 1 ||
      max_steps < 1) {
    throw RangeError("denoiser config: sizes must be positive");
  }
  if (channels % block_heads != 0) throw RangeError("denoiser config: channels must be divisible by block_heads");
  if (max_hallucination < 1 || max_hallucination % 2 == 0) {
    throw RangeError("denoiser config: max_hallucination must be odd and positive");
  }
}

const Mat& HallucinationSet::center() const { return sequences[sequences.size() / 2]; }

std::vector<int> hallucination_offsets(int n) {
  if (n < 1 || n % 2 == 0) throw RangeError("hallucination count n must be odd and positive, got " + std::to_string(n));
  std::vector<int> offsets;
  for (int k = -(n - 1) / 2; k <= (n - 1) / 2; ++k) offsets.push_back(k);
  return offsets;
}

Denoiser::Denoiser(const DenoiserConfig& config, const SkeletonTopology& topology, ParameterSet& ps,
                   std::mt19937_64& rng, const std::string& name)
    : config_(config) {
  config.validate();
  if (topology.joint_count() != config.joints) throw ShapeError("denoiser: topology joint count mismatch");
  const int c = config.channels;
  const bool zero = config.zero_init_outputs;
  local_affinity_ = build_local_affinity(topology);
  global_affinity_ = ps.add_zeros(name + ".affinity_global", config.joints, config.joints);
  input_ = nn::Linear::create(ps, name + ".input", 5, c, rng);
  temporal_position_ = ps.add_normal(name + ".temporal_position", config.frames, c, config.position_init_std, rng);
  spatial_position_ = ps.add_normal(name + ".spatial_position", config.joints, c, config.position_init_std, rng);
  time_ = TimestepEmbedding(ps, name + ".time", c, config.max_steps, rng);
  sre_attention_ = nn::MultiHeadAttention::create(ps, name + ".sre", c, config.heads, rng, zero);
  cross_query_ = nn::Linear::create(ps, name + ".cross.query", c, c, rng);
  cross_key_ = nn::Linear::create(ps, name + ".cross.key", c, c, rng);
  cross_value_ = nn::Linear::create(ps, name + ".cross.value", c, c, rng, zero);
  temporal_block_ = nn::TransformerBlock::create(ps, name + ".temporal", c, config.block_heads, config.hidden, rng, zero);
  for (int m = 0; m < config.depth; ++m) {
    spatial_blocks_.push_back(nn::TransformerBlock::create(ps, name + ".stack" + std::to_string(m) + ".spatial", c,
                                                           config.block_heads, config.hidden, rng, zero));
    temporal_blocks_.push_back(nn::TransformerBlock::create(ps, name + ".stack" + std::to_string(m) + ".temporal",
                                                            c, config.block_heads, config.hidden, rng, zero));
  }
  head_norm_ = nn::LayerNorm::create(ps, name + ".head_norm", c);
  for (int k : hallucination_offsets(config.max_hallucination)) {
    heads_.push_back(nn::Linear::create(ps, name + ".hpd" + std::to_string(k), c, 3, rng));
  }
}

ag::Var Denoiser::fused_affinity(ag::Tape& tape, const ParameterSet& ps) const {
  return ag::symmetrize(ag::add(tape.constant(local_affinity_), tape.param(ps, global_affinity_)));
}

ag::Var Denoiser::concat_pose(ag::Var x2d, ag::Var yt) {
  if (x2d.rows() != yt.rows()) throw ShapeError("build_pose_tokens: 2D and 3D sequences differ in N or J");
  if (x2d.cols() != 2 || yt.cols() != 3) throw ShapeError("build_pose_tokens: expected (N*J)x2 and (N*J)x3");
  return ag::concat_cols(x2d, yt);
}

ag::Var Denoiser::build_pose_tokens(ag::Tape& tape, const ParameterSet& ps, ag::Var x2d, ag::Var yt) const {
  if (x2d.rows() % config_.joints != 0) throw ShapeError("build_pose_tokens: rows not a multiple of J");
  return input_(tape, ps, concat_pose(x2d, yt));
}

ag::Var Denoiser::positions(ag::Tape& tape, const ParameterSet& ps, int frames) const {
  std::vector<int> frame_rows, joint_rows;
  for (int f = 0; f < frames; ++f) {
    for (int j = 0; j < config_.joints; ++j) {
      frame_rows.push_back(f);
      joint_rows.push_back(j);
    }
  }
  return ag::add(ag::gather_rows(tape.param(ps, temporal_position_), std::move(frame_rows)),
                 ag::gather_rows(tape.param(ps, spatial_position_), std::move(joint_rows)));
}

ag::Var Denoiser::sre_forward(ag::Tape& tape, const ParameterSet& ps, ag::Var tokens, ag::Var affinity,
                              ag::Var context) const {
  const Mat& a = affinity.value();
  if ((a - a.transpose()).cwiseAbs().maxCoeff() > 1e-12) throw RangeError("sre_forward: affinity is not symmetric");
  const int frames = static_cast<int>(tokens.rows()) / config_.joints;
  ag::Var xa = config_.use_affinity ? ag::joint_mix(affinity, tokens, config_.joints) : tokens;
  ag::Var attended = sre_attention_(tape, ps, xa, ag::GroupLayout::spatial(frames, config_.joints));
  return ag::add_row(ag::add(attended, xa), ag::mean_rows(context));
}

ag::Var Denoiser::cross_attention_core(ag::Tape& tape, const ParameterSet& ps, ag::Var zs, ag::Var context) const {
  ag::Var q = cross_query_(tape, ps, zs);
  ag::Var k = cross_key_(tape, ps, context);
  ag::Var v = cross_value_(tape, ps, context);
  return ag::cross_attention(q, k, v, config_.block_heads);
}

ag::Var Denoiser::cross_attend(ag::Tape& tape, const ParameterSet& ps, ag::Var zs, ag::Var context) const {
  return ag::add(zs, cross_attention_core(tape, ps, zs, context));
}

ag::Var Denoiser::temporal_attend(ag::Tape& tape, const ParameterSet& ps, ag::Var z, int frames) const {
  return temporal_block_(tape, ps, z, ag::GroupLayout::temporal(frames, config_.joints));
}

ag::Var Denoiser::spatiotemporal_encode(ag::Tape& tape, const ParameterSet& ps, ag::Var z, int frames) const {
  for (size_t m = 0; m < spatial_blocks_.size(); ++m) {
    z = spatial_blocks_[m](tape, ps, z, ag::GroupLayout::spatial(frames, config_.joints));
    z = temporal_blocks_[m](tape, ps, z, ag::GroupLayout::temporal(frames, config_.joints));
  }
  return z;
}

std::vector<ag::Var> Denoiser::decode_hallucinations(ag::Tape& tape, const ParameterSet& ps, ag::Var zhat, int n,
                                                     int frames) const {
  const auto offsets = hallucination_offsets(n);
  if (n > config_.max_hallucination) {
    throw RangeError("decode_hallucinations: n=" + std::to_string(n) + " exceeds the configured maximum " +
                     std::to_string(config_.max_hallucination));
  }
  if (n > frames) throw RangeError("decode_hallucinations: n exceeds the sequence length");
  ag::Var normed = head_norm_(tape, ps, zhat);
  const int center = (config_.max_hallucination - 1) / 2;
  std::vector<ag::Var> out;
  for (int k : offsets) out.push_back(heads_[static_cast<size_t>(center + k)](tape, ps, normed));
  return out;
}

Denoiser::Output Denoiser::denoise(ag::Tape& tape, const ParameterSet& ps, ag::Var yt, ag::Var x2d,
                                   ag::Var context, int t, int n) const {
  const int frames = static_cast<int>(yt.rows()) / config_.joints;
  if (frames < 1 || frames > config_.frames || yt.rows() != frames * config_.joints) {
    throw ShapeError("denoise: input does not match the configured frames/joints");
  }
  if (context.cols() != config_.channels) throw ShapeError("denoise: context width differs from channels");
  ag::Var t_emb = time_.forward(tape, ps, t);

  ag::Var tokens = build_pose_tokens(tape, ps, x2d, yt);
  if (config_.positional) tokens = ag::add(tokens, positions(tape, ps, frames));
  tokens = ag::add_row(tokens, t_emb);
  check_finite(tokens, "pose tokens");

  ag::Var zs = sre_forward(tape, ps, tokens, fused_affinity(tape, ps), context);
  check_finite(zs, "spatial representation encoder");
  ag::Var zc = ag::add_row(cross_attend(tape, ps, zs, context), t_emb);
  check_finite(zc, "cross attention");
  ag::Var zt = temporal_attend(tape, ps, zc, frames);
  check_finite(zt, "temporal attention");
  ag::Var zhat = spatiotemporal_encode(tape, ps, zt, frames);
  check_finite(zhat, "spatio-temporal encoder");

  Output out;
  out.tokens = zhat;
  out.offsets = hallucination_offsets(n);
  out.sequences = decode_hallucinations(tape, ps, zhat, n, frames);
  for (const auto& s : out.sequences) check_finite(s, "hallucination decoder");
  return out;
}

HallucinationSet Denoiser::denoise_values(const ParameterSet& ps, const Mat& yt, const Pose2DSequence& x2d,
                                          const Mat& context, int t, int n) const {
  ag::Tape tape(false);
  const Output o = denoise(tape, ps, tape.constant(yt), tape.constant(x2d.data), tape.constant(context), t, n);
  HallucinationSet set;
  set.frames = x2d.frames;
  set.joints = x2d.joints;
  set.offsets = o.offsets;
  for (const auto& s : o.sequences) set.sequences.push_back(s.value());
  return set;
}

Mat ModelDenoiser::predict_clean(const Mat& yt, const Pose2DSequence& x2d, const Mat& context, int t) const {
  return model_.denoise_values(ps_, yt, x2d, context, t, 1).center();
}

}  // namespace dp3d
