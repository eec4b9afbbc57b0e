#include "dp3d/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "dp3d/error.hpp"

namespace dp3d {

using nlohmann::json;

namespace {

constexpr const char* kFormat = "dp3d-checkpoint";

std::string hex(uint64_t v) {
  std::ostringstream s;
  s << std::hex << v;
  return s.str();
}

std::string read_text(const std::filesystem::path& p) {
  std::ifstream f(p);
  if (!f) throw FormatError("checkpoint: cannot open " + p.string());
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

}  // namespace

std::vector<uint8_t> parameter_payload(const ParameterSet& ps) {
  std::vector<uint8_t> out;
  out.reserve(ps.scalar_count() * 4);
  for (const auto& p : ps) {
    for (Eigen::Index i = 0; i < p.value.size(); ++i) {
      const float f = static_cast<float>(p.value.data()[i]);
      uint32_t bits;
      std::memcpy(&bits, &f, 4);
      for (int b = 0; b < 4; ++b) out.push_back(static_cast<uint8_t>(bits >> (8 * b)));
    }
  }
  return out;
}

void save_checkpoint(const PoseLifter& model, const CheckpointState& state, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const auto& ps = model.params();
  json tensors = json::array();
  size_t offset = 0;
  for (const auto& p : ps) {
    tensors.push_back({{"name", p.name}, {"rows", p.value.rows()}, {"cols", p.value.cols()}, {"offset", offset}});
    offset += static_cast<size_t>(p.value.size()) * 4;
  }
  const TrainConfig& cfg = model.config();
  json m;
  m["format"] = kFormat;
  m["version"] = 1;
  m["config"] = json::parse(cfg.to_json_text());
  m["config_hash"] = hex(cfg.hash());
  m["epoch"] = state.epoch;
  m["step"] = state.step;
  m["rng_state"] = state.rng_state;
  m["vocabulary"] = json::parse(model.vocabulary().to_json_text());
  m["topology"] = json::parse(model.topology().to_json_text());
  m["text_encoder"] = {{"id", model.encoder().id()}, {"weight_hash", hex(model.encoder().weight_hash())}};
  m["parameter_hash"] = hex(ps.hash());
  m["tensors"] = tensors;
  m["payload"] = "params.bin";
  m["payload_bytes"] = offset;

  // Write to temporaries and rename so a crash never leaves a torn checkpoint.
  const auto payload = parameter_payload(ps);
  const auto bin_tmp = dir / "params.bin.tmp";
  const auto man_tmp = dir / "manifest.json.tmp";
  {
    std::ofstream f(bin_tmp, std::ios::binary);
    f.write(reinterpret_cast<const char*>(payload.data()), static_cast<std::streamsize>(payload.size()));
    if (!f) throw std::runtime_error("checkpoint: cannot write " + bin_tmp.string());
  }
  {
    std::ofstream f(man_tmp);
    f << m.dump(2) << '\n';
    if (!f) throw std::runtime_error("checkpoint: cannot write " + man_tmp.string());
  }
  std::filesystem::rename(bin_tmp, dir / "params.bin");
  std::filesystem::rename(man_tmp, dir / "manifest.json");
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& dir) {
  json m;
  try {
    m = json::parse(read_text(dir / "manifest.json"));
  } catch (const json::exception& e) {
    throw FormatError(std::string("checkpoint manifest: ") + e.what());
  }
  LoadedCheckpoint out;
  try {
    if (m.at("format") != kFormat) throw FormatError("checkpoint: unknown format");
    const TrainConfig cfg = TrainConfig::from_json_text(m.at("config").dump());
    if (hex(cfg.hash()) != m.at("config_hash").get<std::string>()) {
      throw FormatError("checkpoint: config hash mismatch");
    }
    const auto topo = SkeletonTopology::from_json_text(m.at("topology").dump());
    const auto vocab = ActionVocabulary::from_json_text(m.at("vocabulary").dump());
    const std::string encoder_id = m.at("text_encoder").at("id").get<std::string>();
    std::shared_ptr<const TextEncoder> encoder;
    if (encoder_id.rfind("stub", 0) == 0) {
      encoder = make_text_encoder(encoder_id);
    } else {
      // External encoders are located through DP3D_TEXT_ENCODER.
      encoder = make_text_encoder(resolve_text_encoder(cfg));
    }
    if (hex(encoder->weight_hash()) != m.at("text_encoder").at("weight_hash").get<std::string>()) {
      throw BackendUnavailable("checkpoint: text encoder " + encoder->id() + " differs from the recorded " +
                               encoder_id);
    }
    out.model = std::make_unique<PoseLifter>(cfg, topo, vocab, encoder);
    out.state.epoch = m.at("epoch").get<int>();
    out.state.step = m.at("step").get<int>();
    out.state.rng_state = m.at("rng_state").get<std::string>();

    std::ifstream f(dir / m.at("payload").get<std::string>(), std::ios::binary);
    if (!f) throw FormatError("checkpoint: missing payload");
    const std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    if (bytes.size() != m.at("payload_bytes").get<size_t>()) throw FormatError("checkpoint: payload size mismatch");
    ParameterSet& ps = out.model->params();
    const auto& tensors = m.at("tensors");
    if (static_cast<int>(tensors.size()) != ps.size()) throw FormatError("checkpoint: tensor count mismatch");
    for (const auto& t : tensors) {
      const int idx = ps.find(t.at("name").get<std::string>());
      if (idx < 0) throw FormatError("checkpoint: unknown tensor " + t.at("name").get<std::string>());
      Mat& v = ps[idx].value;
      if (v.rows() != t.at("rows").get<Eigen::Index>() || v.cols() != t.at("cols").get<Eigen::Index>()) {
        throw FormatError("checkpoint: shape mismatch for " + ps[idx].name);
      }
      const size_t off = t.at("offset").get<size_t>();
      if (off + static_cast<size_t>(v.size()) * 4 > bytes.size()) throw FormatError("checkpoint: tensor out of range");
      for (Eigen::Index i = 0; i < v.size(); ++i) {
        uint32_t bits = 0;
        for (int b = 0; b < 4; ++b) bits |= static_cast<uint32_t>(bytes[off + static_cast<size_t>(i) * 4 + b]) << (8 * b);
        float fl;
        std::memcpy(&fl, &bits, 4);
        v.data()[i] = fl;
      }
    }
    out.parameter_hash = ps.hash();
    if (hex(out.parameter_hash) != m.at("parameter_hash").get<std::string>()) {
      throw FormatError("checkpoint: parameter hash mismatch");
    }
  } catch (const json::exception& e) {
    throw FormatError(std::string("checkpoint manifest: ") + e.what());
  }
  return out;
}

}  // namespace dp3d
