#pragma once

// Action prompting: intent classification from 2D motion, template prompts,
// the 40/37 token layout, pluggable frozen text encoders and the MLP head
// that turns encoder output into context embeddings.

#include <array>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "dp3d/nn.hpp"
#include "dp3d/skeleton.hpp"

namespace dp3d {

inline constexpr int kSubjectTokens = 40;
inline constexpr int kActionTokens = 37;
inline constexpr int kPromptTokens = kSubjectTokens + kActionTokens;
inline constexpr const char* kSubjectTemplate = "a person";

struct ActionVocabulary {
  std::vector<std::string> labels;   // e.g. "Walking"
  std::vector<std::string> phrases;  // e.g. "walking"

  int size() const { return static_cast<int>(labels.size()); }
  /// Index of a label (case-insensitive) or -1.
  int index_of(const std::string& label) const;
  void validate() const;

  /// Walking, Sitting, Waving, Throwing.
  static ActionVocabulary standard();
  static ActionVocabulary from_json_text(const std::string& text);
  static ActionVocabulary load(const std::filesystem::path& path);
  std::string to_json_text() const;
};

/// "a person <phrase>" for a class index.
std::string render_prompt(int label, const ActionVocabulary& vocab);

struct PromptTokens {
  std::array<int, kSubjectTokens> subject{};
  std::array<int, kActionTokens> action{};
  /// Set when the action text did not fit in its segment.
  bool truncated = false;

  std::vector<int> flat() const;
};

/// Frozen text encoder behind a stable interface.
class TextEncoder {
 public:
  virtual ~TextEncoder() = default;
  virtual std::string id() const = 0;
  virtual int vocab_size() const = 0;
  virtual int width() const = 0;
  virtual int start_token() const { return vocab_size() - 2; }
  virtual int end_token() const { return vocab_size() - 1; }
  virtual int pad_token() const { return 0; }
  /// Id of one lower-case word, in [1, vocab_size() - 2).
  virtual int word_token(const std::string& word) const;
  /// 77 x width token features.
  virtual Mat encode(const PromptTokens& tokens) const = 0;
  /// Hash of every frozen weight; must never change during training.
  virtual uint64_t weight_hash() const = 0;
};

/// Deterministic stand-in: each position looks up a fixed Gaussian table
/// through a seeded hash of its token id and of the token prefix.
class StubTextEncoder final : public TextEncoder {
 public:
  explicit StubTextEncoder(uint64_t seed = 0, int width = 32, int table_rows = 1024);
  std::string id() const override;
  int vocab_size() const override { return 49408; }
  int width() const override { return width_; }
  Mat encode(const PromptTokens& tokens) const override;
  uint64_t weight_hash() const override;

 private:
  uint64_t seed_;
  int width_;
  Mat table_;
};

/// Adapter for an exported pretrained text encoder: a JSON header
/// ({"id", "vocab_size", "width", "payload"}) next to a little-endian float32
/// payload holding vocab_size x width token embeddings followed by
/// 77 x width position embeddings.
class ExternalTextEncoder final : public TextEncoder {
 public:
  /// Throws BackendUnavailable if the export cannot be read.
  explicit ExternalTextEncoder(const std::filesystem::path& header);
  std::string id() const override { return "external:" + name_; }
  int vocab_size() const override { return vocab_size_; }
  int width() const override { return width_; }
  Mat encode(const PromptTokens& tokens) const override;
  uint64_t weight_hash() const override;

 private:
  std::string name_;
  int vocab_size_ = 0;
  int width_ = 0;
  Mat token_embedding_;
  Mat position_embedding_;
};

/// "stub", "stub:<seed>" or "external:<header path>".
std::unique_ptr<TextEncoder> make_text_encoder(const std::string& spec);

/// Splits "a person <action>" into the two token segments, padding each.
/// Throws FormatError when the prompt does not start with the template.
PromptTokens tokenize_prompt(const std::string& prompt, const TextEncoder& encoder);

/// MLP_p: pools encoder features into context slots (1 = whole prompt,
/// 2 = subject / action segments) and maps them to the denoiser width.
class ContextHead {
 public:
  ContextHead() = default;
  ContextHead(ParameterSet& ps, const std::string& name, int text_width, int channels, int slots,
              std::mt19937_64& rng);

  /// Encoder features (77 x text width) pooled per slot; frozen input.
  Mat pool(const Mat& features) const;
  /// slots x channels context embedding E_c.
  ag::Var forward(ag::Tape& tape, const ParameterSet& ps, const Mat& pooled) const;
  int slots() const { return slots_; }

 private:
  nn::Linear fc1_;
  nn::Linear fc2_;
  int slots_ = 2;
};

struct ClassifierConfig {
  int frames = 16;
  int joints = 17;
  int classes = 4;
  int channels = 32;
  int heads = 2;
  int deconv_channels = 16;
  int deconv_kernel = 2;
  int hidden = 32;
};

/// Transformer motion encoder over per-frame tokens, followed by global
/// average pooling, one transposed-convolution stage and a single-hidden-
/// layer MLP producing class logits. The final layer starts at zero, so an
/// untrained classifier emits uniform logits.
class IntentClassifier {
 public:
  IntentClassifier() = default;
  IntentClassifier(ParameterSet& ps, const std::string& name, const ClassifierConfig& config,
                   std::mt19937_64& rng);

  /// x2d: (N*J) x 2 -> 1 x classes logits.
  ag::Var forward(ag::Tape& tape, const ParameterSet& ps, ag::Var x2d, int frames) const;
  const ClassifierConfig& config() const { return config_; }

 private:
  ClassifierConfig config_;
  nn::Linear input_;
  int position_ = -1;
  nn::TransformerBlock block_;
  nn::LayerNorm norm_;
  int deconv_weight_ = -1;
  int deconv_bias_ = -1;
  nn::Linear hidden_;
  nn::Linear logits_;
};

struct IntentPrediction {
  Eigen::RowVectorXd logits;
  int label = 0;
};

/// Argmax with ties broken toward the lowest index.
int argmax_lowest(const Eigen::RowVectorXd& logits);

IntentPrediction classify_intent(const Pose2DSequence& x2d, const IntentClassifier& model,
                                 const ParameterSet& ps);

}  // namespace dp3d
