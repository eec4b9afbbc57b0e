#include "dp3d/config.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "dp3d/error.hpp"

namespace dp3d {

using nlohmann::json;

void TrainConfig::validate() const {
  auto positive = [](int v, const char* name) {
    if (v < 1) throw RangeError(std::string("config: ") + name + " must be positive");
  };
  positive(frames, "frames");
  positive(channels, "channels");
  positive(heads, "heads");
  positive(block_heads, "block_heads");
  positive(hidden, "hidden");
  positive(diffusion_steps, "diffusion_steps");
  positive(sampling_steps, "sampling_steps");
  positive(batch_size, "batch_size");
  if (depth < 0 || epochs < 0 || max_steps < 0) throw RangeError("config: depth, epochs and max_steps must be >= 0");
  if (channels % block_heads != 0) throw RangeError("config: channels must be divisible by block_heads");
  if (context_slots != 1 && context_slots != 2) throw RangeError("config: context_slots must be 1 or 2");
  if (!(pose_scale_mm > 0.0)) throw RangeError("config: pose_scale_mm must be positive");
  if (!(keypoint_gain > 0.0) || position_init_std < 0.0) throw RangeError("config: invalid input scaling");
  schedule.validate();
  if (max_hallucination < schedule.stage2_n || max_hallucination % 2 == 0) {
    throw RangeError("config: max_hallucination must be odd and >= stage2_n");
  }
  if (frames < schedule.stage2_n) throw RangeError("config: frames must be >= stage2_n");
  if (lambda_act < 0.0 || lambda_bl < 0.0) throw RangeError("config: loss weights must be nonnegative");
  const auto& o = optimizer;
  if (!(o.lr > 0.0) || o.weight_decay < 0.0 || o.beta1 < 0.0 || o.beta1 >= 1.0 || o.beta2 < 0.0 || o.beta2 >= 1.0 ||
      !(o.eps > 0.0) || o.grad_clip < 0.0 || o.min_lr_fraction < 0.0 || o.min_lr_fraction > 1.0 || o.warmup_steps < 0) {
    throw RangeError("config: invalid optimizer settings");
  }
  if (classifier.channels % classifier.heads != 0) throw RangeError("config: classifier channels % heads != 0");
}

DenoiserConfig TrainConfig::denoiser(int joints) const {
  DenoiserConfig d;
  d.frames = frames;
  d.joints = joints;
  d.channels = channels;
  d.depth = depth;
  d.heads = heads;
  d.block_heads = block_heads;
  d.hidden = hidden;
  d.max_steps = diffusion_steps;
  d.max_hallucination = max_hallucination;
  d.use_affinity = use_affinity;
  d.position_init_std = position_init_std;
  return d;
}

ClassifierConfig TrainConfig::classifier_config(int joints, int classes) const {
  ClassifierConfig c = classifier;
  c.frames = frames;
  c.joints = joints;
  c.classes = classes;
  return c;
}

LossWeights TrainConfig::loss_weights(int n) const {
  LossWeights w;
  w.lambda_3d = hallucination_weights(n);
  w.lambda_act = use_apl ? lambda_act : 0.0;
  w.lambda_bl = lambda_bl;
  return w;
}

std::string TrainConfig::to_json_text() const {
  json j;
  j["profile"] = profile;
  j["model"] = {{"frames", frames},
                {"channels", channels},
                {"depth", depth},
                {"heads", heads},
                {"block_heads", block_heads},
                {"hidden", hidden},
                {"max_hallucination", max_hallucination},
                {"use_affinity", use_affinity},
                {"context_slots", context_slots},
                {"pose_scale_mm", pose_scale_mm},
                {"keypoint_gain", keypoint_gain},
                {"position_init_std", position_init_std}};
  j["classifier"] = {{"channels", classifier.channels},
                     {"heads", classifier.heads},
                     {"deconv_channels", classifier.deconv_channels},
                     {"deconv_kernel", classifier.deconv_kernel},
                     {"hidden", classifier.hidden}};
  j["conditioning"] = {{"use_apl", use_apl}, {"text_encoder", text_encoder}};
  j["schedule"] = {{"stage1_epochs", schedule.stage1_epochs},
                   {"stage2_n", schedule.stage2_n},
                   {"rule", to_string(schedule.rule)}};
  j["diffusion"] = {{"family", to_string(noise_family)},
                    {"steps", diffusion_steps},
                    {"sampling_steps", sampling_steps},
                    {"deterministic", deterministic_sampling}};
  j["loss"] = {{"lambda_act", lambda_act}, {"lambda_bl", lambda_bl}, {"bl_against_gt", bl_against_gt}};
  j["optimizer"] = {{"lr", optimizer.lr},
                    {"weight_decay", optimizer.weight_decay},
                    {"beta1", optimizer.beta1},
                    {"beta2", optimizer.beta2},
                    {"eps", optimizer.eps},
                    {"grad_clip", optimizer.grad_clip},
                    {"cosine_decay", optimizer.cosine_decay},
                    {"min_lr_fraction", optimizer.min_lr_fraction},
                    {"warmup_steps", optimizer.warmup_steps}};
  j["training"] = {{"seed", seed}, {"epochs", epochs}, {"max_steps", max_steps}, {"batch_size", batch_size}};
  return j.dump(2);
}

TrainConfig TrainConfig::from_json_text(const std::string& text) {
  TrainConfig c;
  try {
    const json j = json::parse(text);
    if (j.contains("profile")) c = profile_named(j.at("profile").get<std::string>());
    auto read = [](const json& obj, const char* section, const char* key, auto& field) {
      if (obj.contains(section) && obj.at(section).contains(key)) {
        field = obj.at(section).at(key).get<std::decay_t<decltype(field)>>();
      }
    };
    read(j, "model", "frames", c.frames);
    read(j, "model", "channels", c.channels);
    read(j, "model", "depth", c.depth);
    read(j, "model", "heads", c.heads);
    read(j, "model", "block_heads", c.block_heads);
    read(j, "model", "hidden", c.hidden);
    read(j, "model", "max_hallucination", c.max_hallucination);
    read(j, "model", "use_affinity", c.use_affinity);
    read(j, "model", "context_slots", c.context_slots);
    read(j, "model", "pose_scale_mm", c.pose_scale_mm);
    read(j, "model", "keypoint_gain", c.keypoint_gain);
    read(j, "model", "position_init_std", c.position_init_std);
    read(j, "classifier", "channels", c.classifier.channels);
    read(j, "classifier", "heads", c.classifier.heads);
    read(j, "classifier", "deconv_channels", c.classifier.deconv_channels);
    read(j, "classifier", "deconv_kernel", c.classifier.deconv_kernel);
    read(j, "classifier", "hidden", c.classifier.hidden);
    read(j, "conditioning", "use_apl", c.use_apl);
    read(j, "conditioning", "text_encoder", c.text_encoder);
    read(j, "schedule", "stage1_epochs", c.schedule.stage1_epochs);
    read(j, "schedule", "stage2_n", c.schedule.stage2_n);
    std::string rule = to_string(c.schedule.rule), family = to_string(c.noise_family);
    read(j, "schedule", "rule", rule);
    c.schedule.rule = parse_weight_rule(rule);
    read(j, "diffusion", "family", family);
    c.noise_family = parse_schedule_family(family);
    read(j, "diffusion", "steps", c.diffusion_steps);
    read(j, "diffusion", "sampling_steps", c.sampling_steps);
    read(j, "diffusion", "deterministic", c.deterministic_sampling);
    read(j, "loss", "lambda_act", c.lambda_act);
    read(j, "loss", "lambda_bl", c.lambda_bl);
    read(j, "loss", "bl_against_gt", c.bl_against_gt);
    read(j, "optimizer", "lr", c.optimizer.lr);
    read(j, "optimizer", "weight_decay", c.optimizer.weight_decay);
    read(j, "optimizer", "beta1", c.optimizer.beta1);
    read(j, "optimizer", "beta2", c.optimizer.beta2);
    read(j, "optimizer", "eps", c.optimizer.eps);
    read(j, "optimizer", "grad_clip", c.optimizer.grad_clip);
    read(j, "optimizer", "cosine_decay", c.optimizer.cosine_decay);
    read(j, "optimizer", "min_lr_fraction", c.optimizer.min_lr_fraction);
    read(j, "optimizer", "warmup_steps", c.optimizer.warmup_steps);
    read(j, "training", "seed", c.seed);
    read(j, "training", "epochs", c.epochs);
    read(j, "training", "max_steps", c.max_steps);
    read(j, "training", "batch_size", c.batch_size);
  } catch (const json::exception& e) {
    throw FormatError(std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

TrainConfig TrainConfig::load(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw FormatError("config: cannot open " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  return from_json_text(ss.str());
}

uint64_t TrainConfig::hash() const {
  const std::string canonical = json::parse(to_json_text()).dump();
  return fnv1a(canonical.data(), canonical.size());
}

TrainConfig TrainConfig::profile_named(const std::string& name) {
  TrainConfig c;
  if (name == "desk") return c;
  if (name == "full") {
    c.profile = "full";
    c.frames = 243;
    c.channels = 512;
    c.depth = 16;
    c.heads = 6;
    c.block_heads = 8;
    c.hidden = 1024;
    c.optimizer.lr = 1e-5;
    c.optimizer.warmup_steps = 0;
    c.keypoint_gain = 1.0;
    c.position_init_std = 0.02;
    c.optimizer.weight_decay = 1e-4;
    c.optimizer.cosine_decay = false;
    c.batch_size = 4;
    c.epochs = 100;
    c.max_steps = 0;
    c.classifier.channels = 128;
    c.classifier.heads = 4;
    c.classifier.hidden = 128;
    return c;
  }
  throw RangeError("unknown profile: " + name);
}

const std::vector<std::string>& ablation_presets() {
  static const std::vector<std::string> p{"fixed", "falloff", "controlled", "n1",     "n3",
                                          "n5",    "n7",      "no-apl",     "no-sre", "no-hpd"};
  return p;
}

TrainConfig apply_preset(TrainConfig c, const std::string& preset) {
  auto set_n = [&](int n) {
    c.schedule.stage2_n = n;
    c.max_hallucination = std::max(c.max_hallucination, n);
  };
  if (preset == "fixed") {
    c.schedule.rule = WeightRule::Fixed;
  } else if (preset == "falloff") {
    c.schedule.rule = WeightRule::Falloff;
  } else if (preset == "controlled") {
    c.schedule.rule = WeightRule::Controlled;
  } else if (preset == "n1" || preset == "n3" || preset == "n5" || preset == "n7") {
    set_n(preset[1] - '0');
  } else if (preset == "no-apl") {
    c.use_apl = false;
  } else if (preset == "no-sre") {
    c.use_affinity = false;
  } else if (preset == "no-hpd") {
    c.schedule.stage2_n = 1;
    c.max_hallucination = 1;
  } else {
    throw RangeError("unknown ablation preset: " + preset);
  }
  c.validate();
  return c;
}

std::string resolve_text_encoder(const TrainConfig& config) {
  if (const char* env = std::getenv("DP3D_TEXT_ENCODER"); env != nullptr && *env != '\0') return env;
  return config.text_encoder;
}

}  // namespace dp3d
