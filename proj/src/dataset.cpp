#include "dp3d/dataset.hpp"

#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "dp3d/error.hpp"

namespace dp3d {

using nlohmann::json;

void Corpus::validate() const {
  topology.validate();
  vocabulary.validate();
  camera.validate();
  for (size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    const std::string where = "corpus record " + std::to_string(i) + ": ";
    if (r.label < 0 || r.label >= vocabulary.size()) throw FormatError(where + "label out of vocabulary");
    if (r.pose.joints != topology.joint_count()) throw FormatError(where + "joint count differs from topology");
    if (r.keypoints.frames != r.pose.frames || r.keypoints.joints != r.pose.joints) {
      throw FormatError(where + "2D and 3D shapes differ");
    }
    r.pose.validate();
    r.keypoints.validate();
  }
}

std::vector<int> Corpus::labels_present() const {
  std::set<int> s;
  for (const auto& r : records) s.insert(r.label);
  return {s.begin(), s.end()};
}

void CorpusSpec::validate() const {
  if (actions.empty()) throw RangeError("corpus spec: no actions");
  if (count < 1 || frames < 1) throw RangeError("corpus spec: count and frames must be positive");
  if (noise_2d < 0.0) throw RangeError("corpus spec: noise must be nonnegative");
  camera.validate();
}

namespace {

json camera_json(const Camera& c) {
  return {{"focal", c.focal}, {"cx", c.cx},          {"cy", c.cy},
          {"width", c.width}, {"height", c.height}, {"depth_offset_mm", c.depth_offset_mm}};
}

Camera camera_from(const json& j) {
  Camera c;
  c.focal = j.value("focal", c.focal);
  c.cx = j.value("cx", c.cx);
  c.cy = j.value("cy", c.cy);
  c.width = j.value("width", c.width);
  c.height = j.value("height", c.height);
  c.depth_offset_mm = j.value("depth_offset_mm", c.depth_offset_mm);
  return c;
}

}  // namespace

CorpusSpec CorpusSpec::from_json_text(const std::string& text) {
  CorpusSpec s;
  try {
    const json j = json::parse(text);
    if (j.contains("actions")) {
      s.actions.clear();
      for (const auto& a : j.at("actions")) s.actions.push_back(parse_motion_class(a.get<std::string>()));
    }
    s.count = j.value("count", s.count);
    s.frames = j.value("frames", s.frames);
    s.noise_2d = j.value("noise_2d", s.noise_2d);
    if (j.contains("camera")) s.camera = camera_from(j.at("camera"));
  } catch (const json::exception& e) {
    throw FormatError(std::string("corpus spec: ") + e.what());
  }
  s.validate();
  return s;
}

CorpusSpec CorpusSpec::load(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw FormatError("corpus spec: cannot open " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  return from_json_text(ss.str());
}

std::string CorpusSpec::to_json_text() const {
  json j;
  j["actions"] = json::array();
  for (auto a : actions) j["actions"].push_back(to_string(a));
  j["count"] = count;
  j["frames"] = frames;
  j["noise_2d"] = noise_2d;
  j["camera"] = camera_json(camera);
  return j.dump(2);
}

Corpus generate_corpus(const std::vector<SyntheticMotionSpec>& specs, const Camera& camera) {
  if (specs.empty()) throw RangeError("generate_corpus: no sequences requested");
  camera.validate();
  Corpus c;
  c.camera = camera;
  for (const auto& s : specs) {
    SequenceRecord r;
    r.label = static_cast<int>(s.action);
    r.pose = synthesize_motion(s);
    r.keypoints = project_sequence(r.pose, camera);
    if (s.noise_2d > 0.0) {
      std::mt19937_64 rng(s.seed);
      std::normal_distribution<double> n(0.0, s.noise_2d);
      for (Eigen::Index i = 0; i < r.keypoints.data.size(); ++i) r.keypoints.data.data()[i] += n(rng);
    }
    // Stored payloads are float32; keep the in-memory copy on that grid too.
    round_to_float32(r.pose.data);
    round_to_float32(r.keypoints.data);
    c.records.push_back(std::move(r));
  }
  return c;
}

Corpus generate_corpus(const CorpusSpec& spec, uint64_t seed) {
  spec.validate();
  std::mt19937_64 rng(seed);
  std::vector<SyntheticMotionSpec> specs;
  for (int i = 0; i < spec.count; ++i) {
    const MotionClass a = spec.actions[static_cast<size_t>(i) % spec.actions.size()];
    specs.push_back(random_motion_spec(a, spec.frames, spec.noise_2d, rng));
  }
  return generate_corpus(specs, spec.camera);
}

// ------------------------------------------------------------------ container

namespace {

void put_u32(std::vector<uint8_t>& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<uint8_t>(v >> (8 * i)));
}

void put_f32(std::vector<uint8_t>& out, const Mat& m) {
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    const float f = static_cast<float>(m.data()[i]);
    uint32_t bits;
    std::memcpy(&bits, &f, 4);
    put_u32(out, bits);
  }
}

class Reader {
 public:
  explicit Reader(const std::vector<uint8_t>& b) : b_(b) {}
  void need(size_t n, const char* what) const {
    if (pos_ + n > b_.size()) throw FormatError(std::string("container truncated while reading ") + what);
  }
  uint32_t u32(const char* what) {
    need(4, what);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(b_[pos_ + static_cast<size_t>(i)]) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::string bytes(size_t n, const char* what) {
    need(n, what);
    std::string s(reinterpret_cast<const char*>(b_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  Mat f32(Eigen::Index rows, Eigen::Index cols, const char* what) {
    need(static_cast<size_t>(rows * cols) * 4, what);
    Mat m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) {
      const uint32_t bits = u32(what);
      float f;
      std::memcpy(&f, &bits, 4);
      m.data()[i] = f;
    }
    return m;
  }
  bool done() const { return pos_ == b_.size(); }

 private:
  const std::vector<uint8_t>& b_;
  size_t pos_ = 0;
};

}  // namespace

std::vector<uint8_t> encode_container(const Corpus& corpus) {
  corpus.validate();
  std::vector<uint8_t> out{'D', 'P', '3', 'D'};
  put_u32(out, kContainerVersion);
  json manifest;
  manifest["topology"] = json::parse(corpus.topology.to_json_text());
  manifest["camera"] = camera_json(corpus.camera);
  manifest["vocabulary"] = json::parse(corpus.vocabulary.to_json_text());
  const std::string m = manifest.dump();
  put_u32(out, static_cast<uint32_t>(m.size()));
  out.insert(out.end(), m.begin(), m.end());
  put_u32(out, static_cast<uint32_t>(corpus.records.size()));
  for (const auto& r : corpus.records) {
    put_u32(out, static_cast<uint32_t>(r.pose.frames));
    put_u32(out, static_cast<uint32_t>(r.pose.joints));
    put_u32(out, static_cast<uint32_t>(r.label));
    put_f32(out, r.pose.data);
    put_f32(out, r.keypoints.data);
  }
  return out;
}

Corpus decode_container(const std::vector<uint8_t>& bytes) {
  Reader in(bytes);
  if (in.bytes(4, "magic") != "DP3D") throw FormatError("container: bad magic");
  const uint32_t version = in.u32("version");
  if (version != kContainerVersion) throw FormatError("container: unsupported version " + std::to_string(version));
  const uint32_t mlen = in.u32("manifest length");
  Corpus c;
  try {
    const json m = json::parse(in.bytes(mlen, "manifest"));
    c.topology = SkeletonTopology::from_json_text(m.at("topology").dump());
    c.camera = camera_from(m.at("camera"));
    c.vocabulary = ActionVocabulary::from_json_text(m.at("vocabulary").dump());
  } catch (const json::exception& e) {
    throw FormatError(std::string("container manifest: ") + e.what());
  }
  const uint32_t count = in.u32("record count");
  const int joints = c.topology.joint_count();
  for (uint32_t i = 0; i < count; ++i) {
    SequenceRecord r;
    const uint32_t n = in.u32("record header");
    const uint32_t j = in.u32("record header");
    r.label = static_cast<int>(in.u32("record header"));
    if (n == 0 || n > (1u << 20) || static_cast<int>(j) != joints) {
      throw FormatError("container: record " + std::to_string(i) + " has invalid shape");
    }
    const auto rows = static_cast<Eigen::Index>(n) * j;
    r.pose = {static_cast<int>(n), static_cast<int>(j), in.f32(rows, 3, "3D payload")};
    r.keypoints = {static_cast<int>(n), static_cast<int>(j), in.f32(rows, 2, "2D payload"), Mat()};
    c.records.push_back(std::move(r));
  }
  if (!in.done()) throw FormatError("container: trailing bytes after the last record");
  c.validate();
  return c;
}

void write_container(const Corpus& corpus, const std::filesystem::path& path) {
  const auto bytes = encode_container(corpus);
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw std::runtime_error("write failed for " + path.string());
}

Corpus read_container(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw FormatError("cannot open container " + path.string());
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return decode_container(bytes);
}

const std::vector<int>& h36m32_to_17() {
  static const std::vector<int> map{0, 1, 2, 3, 6, 7, 8, 12, 13, 14, 15, 17, 18, 19, 25, 26, 27};
  return map;
}

Pose3DSequence read_h36m_csv(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw FormatError("cannot open " + path.string());
  std::vector<Mat> frames;
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<double> v;
    try {
      while (std::getline(ss, cell, ',')) v.push_back(std::stod(cell));
    } catch (const std::logic_error&) {
      throw FormatError("h36m csv: non-numeric value on frame " + std::to_string(frames.size()));
    }
    if (v.size() != 96) {
      throw FormatError("h36m csv: frame " + std::to_string(frames.size()) + " has " + std::to_string(v.size()) +
                        " values, expected 96");
    }
    Mat fr(17, 3);
    const auto& map = h36m32_to_17();
    for (int j = 0; j < 17; ++j) {
      for (int c = 0; c < 3; ++c) fr(j, c) = v[static_cast<size_t>(map[static_cast<size_t>(j)] * 3 + c)];
    }
    frames.push_back(fr);
  }
  if (frames.empty()) throw FormatError("h36m csv: no frames in " + path.string());
  Pose3DSequence p = Pose3DSequence::zeros(static_cast<int>(frames.size()), 17);
  for (size_t i = 0; i < frames.size(); ++i) p.data.middleRows(static_cast<Eigen::Index>(i) * 17, 17) = frames[i];
  return root_center(p);
}

}  // namespace dp3d
