#pragma once

// Labelled sequence corpus and its binary container:
//   "DP3D" | u32 version | u32 manifest bytes | manifest JSON |
//   u32 record count | records (u32 N, u32 J, u32 label,
//   N*J*3 f32 pose, N*J*2 f32 keypoints)
// All integers and floats little-endian.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "dp3d/prompting.hpp"
#include "dp3d/skeleton.hpp"
#include "dp3d/synthetic.hpp"

namespace dp3d {

inline constexpr uint32_t kContainerVersion = 1;

struct SequenceRecord {
  int label = 0;
  Pose3DSequence pose;  // mm, root-relative
  Pose2DSequence keypoints;
};

struct Corpus {
  SkeletonTopology topology = SkeletonTopology::h36m17();
  Camera camera;
  ActionVocabulary vocabulary = ActionVocabulary::standard();
  std::vector<SequenceRecord> records;

  void validate() const;
  int size() const { return static_cast<int>(records.size()); }
  /// Labels present, in vocabulary order.
  std::vector<int> labels_present() const;
};

/// Generation request: `count` sequences cycling through `actions`.
struct CorpusSpec {
  std::vector<MotionClass> actions{MotionClass::Walk, MotionClass::Sit, MotionClass::Wave};
  int count = 50;
  int frames = 16;
  double noise_2d = 0.0;
  Camera camera;

  void validate() const;
  static CorpusSpec from_json_text(const std::string& text);
  static CorpusSpec load(const std::filesystem::path& path);
  std::string to_json_text() const;
};

/// Synthesises, projects and (optionally) perturbs every sequence.
/// Deterministic in (spec, seed).
Corpus generate_corpus(const CorpusSpec& spec, uint64_t seed);
/// Builds records from explicit motion specs.
Corpus generate_corpus(const std::vector<SyntheticMotionSpec>& specs, const Camera& camera);

std::vector<uint8_t> encode_container(const Corpus& corpus);
/// Throws FormatError on bad magic, version, lengths or trailing bytes.
Corpus decode_container(const std::vector<uint8_t>& bytes);
void write_container(const Corpus& corpus, const std::filesystem::path& path);
Corpus read_container(const std::filesystem::path& path);

/// Joint subset that maps the 32-joint Human3.6M layout onto h36m17.
const std::vector<int>& h36m32_to_17();

/// Reads a Human3.6M-layout CSV (one frame per line, 32 joints x 3 values,
/// mm) into a root-relative h36m17 sequence. Adapter stub for licensed data.
Pose3DSequence read_h36m_csv(const std::filesystem::path& path);

}  // namespace dp3d
