#pragma once

// Checkpoint directory: manifest.json (config, tensor table, hashes, epoch,
// rng state, vocabulary, topology, encoder id) + params.bin (little-endian
// float32 tensors in manifest order).

#include <filesystem>
#include <memory>
#include <string>

#include "dp3d/model.hpp"

namespace dp3d {

struct CheckpointState {
  int epoch = 0;
  int step = 0;
  std::string rng_state;  // std::mt19937_64 text state
};

void save_checkpoint(const PoseLifter& model, const CheckpointState& state, const std::filesystem::path& dir);

struct LoadedCheckpoint {
  std::unique_ptr<PoseLifter> model;
  CheckpointState state;
  uint64_t parameter_hash = 0;
};

/// Rebuilds the model from its stored config and overwrites every tensor.
/// Throws FormatError on hash or shape mismatches and BackendUnavailable if
/// the recorded text encoder cannot be reconstructed identically.
LoadedCheckpoint load_checkpoint(const std::filesystem::path& dir);

/// Raw float32 payload of a parameter set, in order.
std::vector<uint8_t> parameter_payload(const ParameterSet& ps);

}  // namespace dp3d
