#include "dp3d/prompting.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "dp3d/error.hpp"

namespace dp3d {

namespace {

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  return s;
}

std::vector<std::string> split_words(const std::string& text) {
  std::vector<std::string> words;
  std::string cur;
  for (unsigned char c : text) {
    if (std::isalnum(c) || c == '\'' || c == '-') {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else if (!cur.empty()) {
      words.push_back(cur);
      cur.clear();
    }
  }
  if (!cur.empty()) words.push_back(cur);
  return words;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

// ---------------------------------------------------------------- vocabulary

int ActionVocabulary::index_of(const std::string& label) const {
  const std::string key = lower(label);
  for (int i = 0; i < size(); ++i) {
    if (lower(labels[static_cast<size_t>(i)]) == key) return i;
  }
  return -1;
}

void ActionVocabulary::validate() const {
  if (labels.empty()) throw FormatError("vocabulary is empty");
  if (labels.size() != phrases.size()) throw FormatError("vocabulary labels and phrases differ in length");
  for (size_t i = 0; i < labels.size(); ++i) {
    if (labels[i].empty()) throw FormatError("vocabulary label is empty");
    for (size_t j = 0; j < i; ++j) {
      if (lower(labels[i]) == lower(labels[j])) throw FormatError("duplicate vocabulary label: " + labels[i]);
    }
  }
}

ActionVocabulary ActionVocabulary::standard() {
  return {{"Walking", "Sitting", "Waving", "Throwing"}, {"walking", "sitting", "waving", "throwing"}};
}

ActionVocabulary ActionVocabulary::from_json_text(const std::string& text) {
  ActionVocabulary v;
  try {
    const auto j = nlohmann::json::parse(text);
    for (const auto& entry : j.at("actions")) {
      v.labels.push_back(entry.at("label").get<std::string>());
      v.phrases.push_back(entry.at("phrase").get<std::string>());
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("vocabulary: ") + e.what());
  }
  v.validate();
  return v;
}

ActionVocabulary ActionVocabulary::load(const std::filesystem::path& path) {
  return from_json_text(read_file(path));
}

std::string ActionVocabulary::to_json_text() const {
  nlohmann::json j;
  j["actions"] = nlohmann::json::array();
  for (size_t i = 0; i < labels.size(); ++i) j["actions"].push_back({{"label", labels[i]}, {"phrase", phrases[i]}});
  return j.dump(2);
}

std::string render_prompt(int label, const ActionVocabulary& vocab) {
  if (label < 0 || label >= vocab.size()) throw RangeError("render_prompt: label out of range");
  return std::string(kSubjectTemplate) + " " + vocab.phrases[static_cast<size_t>(label)];
}

// -------------------------------------------------------------- tokenization

std::vector<int> PromptTokens::flat() const {
  std::vector<int> out(subject.begin(), subject.end());
  out.insert(out.end(), action.begin(), action.end());
  return out;
}

int TextEncoder::word_token(const std::string& word) const {
  const uint64_t h = fnv1a(word.data(), word.size());
  return 1 + static_cast<int>(h % static_cast<uint64_t>(vocab_size() - 3));
}

PromptTokens tokenize_prompt(const std::string& prompt, const TextEncoder& encoder) {
  const auto words = split_words(prompt);
  const auto subject_words = split_words(kSubjectTemplate);
  if (words.size() < subject_words.size() ||
      !std::equal(subject_words.begin(), subject_words.end(), words.begin())) {
    throw FormatError("tokenize_prompt: prompt does not start with \"" + std::string(kSubjectTemplate) + "\"");
  }
  PromptTokens tokens;
  tokens.subject.fill(encoder.pad_token());
  tokens.action.fill(encoder.pad_token());
  size_t s = 0;
  tokens.subject[s++] = encoder.start_token();
  for (const auto& w : subject_words) tokens.subject[s++] = encoder.word_token(w);

  std::vector<int> action;
  for (size_t i = subject_words.size(); i < words.size(); ++i) action.push_back(encoder.word_token(words[i]));
  if (!action.empty()) {
    if (action.size() + 1 > static_cast<size_t>(kActionTokens)) {
      action.resize(kActionTokens - 1);
      tokens.truncated = true;
    }
    action.push_back(encoder.end_token());
  }
  std::copy(action.begin(), action.end(), tokens.action.begin());
  return tokens;
}

// ------------------------------------------------------------- text encoders

StubTextEncoder::StubTextEncoder(uint64_t seed, int width, int table_rows)
    : seed_(seed), width_(width), table_(table_rows, width) {
  std::mt19937_64 rng(seed ^ 0x5eedc11bULL);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (Eigen::Index i = 0; i < table_.size(); ++i) table_.data()[i] = normal(rng);
  round_to_float32(table_);
}

std::string StubTextEncoder::id() const { return "stub:" + std::to_string(seed_); }

Mat StubTextEncoder::encode(const PromptTokens& tokens) const {
  const auto ids = tokens.flat();
  const auto rows = static_cast<uint64_t>(table_.rows());
  Mat out(kPromptTokens, width_);
  uint64_t prefix = fnv1a(&seed_, sizeof(seed_));
  for (int p = 0; p < kPromptTokens; ++p) {
    const int tok = ids[static_cast<size_t>(p)];
    if (tok < 0 || tok >= vocab_size()) throw RangeError("stub encoder: token id out of range");
    prefix = fnv1a(&tok, sizeof(tok), prefix);
    const uint64_t own = fnv1a(&tok, sizeof(tok), fnv1a(&seed_, sizeof(seed_)));
    out.row(p) = table_.row(static_cast<Eigen::Index>(own % rows)) +
                 0.25 * table_.row(static_cast<Eigen::Index>(prefix % rows));
  }
  return out;
}

uint64_t StubTextEncoder::weight_hash() const { return hash_matrix(table_, seed_); }

ExternalTextEncoder::ExternalTextEncoder(const std::filesystem::path& header) {
  try {
    const auto j = nlohmann::json::parse(read_file(header));
    name_ = j.at("id").get<std::string>();
    vocab_size_ = j.at("vocab_size").get<int>();
    width_ = j.at("width").get<int>();
    const auto payload = header.parent_path() / j.at("payload").get<std::string>();
    const std::string bytes = read_file(payload);
    const size_t expect = (static_cast<size_t>(vocab_size_) + kPromptTokens) * static_cast<size_t>(width_) * 4;
    if (vocab_size_ < 4 || width_ < 1 || bytes.size() != expect) {
      throw FormatError("payload size does not match declared vocab_size/width");
    }
    std::vector<float> values(bytes.size() / 4);
    std::memcpy(values.data(), bytes.data(), bytes.size());
    token_embedding_.resize(vocab_size_, width_);
    position_embedding_.resize(kPromptTokens, width_);
    size_t k = 0;
    for (Eigen::Index i = 0; i < token_embedding_.size(); ++i) token_embedding_.data()[i] = values[k++];
    for (Eigen::Index i = 0; i < position_embedding_.size(); ++i) position_embedding_.data()[i] = values[k++];
  } catch (const std::exception& e) {
    throw BackendUnavailable("external text encoder " + header.string() + ": " + e.what());
  }
}

Mat ExternalTextEncoder::encode(const PromptTokens& tokens) const {
  const auto ids = tokens.flat();
  Mat out(kPromptTokens, width_);
  for (int p = 0; p < kPromptTokens; ++p) {
    const int tok = ids[static_cast<size_t>(p)];
    if (tok < 0 || tok >= vocab_size_) throw RangeError("external encoder: token id out of range");
    out.row(p) = token_embedding_.row(tok) + position_embedding_.row(p);
  }
  return out;
}

uint64_t ExternalTextEncoder::weight_hash() const {
  return hash_matrix(position_embedding_, hash_matrix(token_embedding_));
}

std::unique_ptr<TextEncoder> make_text_encoder(const std::string& spec) {
  if (spec == "stub") return std::make_unique<StubTextEncoder>(0);
  if (spec.rfind("stub:", 0) == 0) {
    try {
      return std::make_unique<StubTextEncoder>(std::stoull(spec.substr(5)));
    } catch (const std::logic_error&) {
      throw RangeError("invalid stub encoder seed: " + spec);
    }
  }
  if (spec.rfind("external:", 0) == 0) return std::make_unique<ExternalTextEncoder>(spec.substr(9));
  throw RangeError("unknown text encoder: " + spec);
}

// --------------------------------------------------------------- MLP_p head

ContextHead::ContextHead(ParameterSet& ps, const std::string& name, int text_width, int channels, int slots,
                         std::mt19937_64& rng)
    : fc1_(nn::Linear::create(ps, name + ".fc1", text_width, channels, rng)),
      fc2_(nn::Linear::create(ps, name + ".fc2", channels, channels, rng)),
      slots_(slots) {
  if (slots != 1 && slots != 2) throw RangeError("context head supports 1 or 2 slots");
}

Mat ContextHead::pool(const Mat& features) const {
  if (features.rows() != kPromptTokens) throw ShapeError("context head expects 77 token features");
  if (slots_ == 1) return features.colwise().mean();
  Mat out(2, features.cols());
  out.row(0) = features.topRows(kSubjectTokens).colwise().mean();
  out.row(1) = features.bottomRows(kActionTokens).colwise().mean();
  return out;
}

ag::Var ContextHead::forward(ag::Tape& tape, const ParameterSet& ps, const Mat& pooled) const {
  return fc2_(tape, ps, ag::gelu(fc1_(tape, ps, tape.constant(pooled))));
}

// --------------------------------------------------------- intent classifier

IntentClassifier::IntentClassifier(ParameterSet& ps, const std::string& name, const ClassifierConfig& config,
                                   std::mt19937_64& rng)
    : config_(config) {
  if (config.classes < 1) throw RangeError("classifier needs at least one class");
  input_ = nn::Linear::create(ps, name + ".input", 2 * config.joints, config.channels, rng);
  position_ = ps.add_normal(name + ".position", config.frames, config.channels, 0.02, rng);
  block_ = nn::TransformerBlock::create(ps, name + ".block", config.channels, config.heads, 2 * config.channels, rng);
  norm_ = nn::LayerNorm::create(ps, name + ".norm", config.channels);
  deconv_weight_ = ps.add_normal(name + ".deconv.weight", config.channels,
                                 config.deconv_kernel * config.deconv_channels,
                                 1.0 / std::sqrt(static_cast<double>(config.channels)), rng);
  deconv_bias_ = ps.add_zeros(name + ".deconv.bias", 1, config.deconv_channels);
  hidden_ = nn::Linear::create(ps, name + ".hidden", config.deconv_kernel * config.deconv_channels, config.hidden, rng);
  logits_ = nn::Linear::create(ps, name + ".logits", config.hidden, config.classes, rng, /*zero_init=*/true);
}

ag::Var IntentClassifier::forward(ag::Tape& tape, const ParameterSet& ps, ag::Var x2d, int frames) const {
  if (frames < 1 || frames > config_.frames || x2d.rows() != frames * config_.joints || x2d.cols() != 2) {
    throw ShapeError("classify_intent: input does not match the classifier configuration");
  }
  std::vector<int> rows(static_cast<size_t>(frames));
  for (int f = 0; f < frames; ++f) rows[static_cast<size_t>(f)] = f;
  ag::Var per_frame = ag::reshape(x2d, frames, 2 * config_.joints);
  ag::Var h = ag::add(input_(tape, ps, per_frame), ag::gather_rows(tape.param(ps, position_), rows));
  h = block_(tape, ps, h, ag::GroupLayout{1, frames, 0, 1});
  ag::Var pooled = ag::mean_rows(norm_(tape, ps, h));
  ag::Var up = ag::conv_transpose1d(pooled, tape.param(ps, deconv_weight_), tape.param(ps, deconv_bias_),
                                    config_.deconv_kernel, config_.deconv_kernel);
  ag::Var flat = ag::reshape(ag::gelu(up), 1, static_cast<Eigen::Index>(config_.deconv_kernel) * config_.deconv_channels);
  return logits_(tape, ps, ag::gelu(hidden_(tape, ps, flat)));
}

int argmax_lowest(const Eigen::RowVectorXd& logits) {
  int best = 0;
  for (int i = 1; i < logits.size(); ++i) {
    if (logits(i) > logits(best)) best = i;
  }
  return best;
}

IntentPrediction classify_intent(const Pose2DSequence& x2d, const IntentClassifier& model,
                                 const ParameterSet& ps) {
  x2d.validate();
  if (x2d.joints != model.config().joints) throw ShapeError("classify_intent: joint count mismatch");
  ag::Tape tape(false);
  const Mat logits = model.forward(tape, ps, tape.constant(x2d.data), x2d.frames).value();
  IntentPrediction out;
  out.logits = logits.row(0);
  out.label = argmax_lowest(out.logits);
  return out;
}

}  // namespace dp3d
