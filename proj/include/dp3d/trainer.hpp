#pragma once

#include <filesystem>
#include <functional>
#include <ostream>
#include <string>

#include "dp3d/checkpoint.hpp"
#include "dp3d/evaluation.hpp"
#include "dp3d/model.hpp"

namespace dp3d {

struct TrainOptions {
  std::filesystem::path checkpoint_dir;  // empty: no checkpoints
  std::ostream* log = nullptr;           // JSON lines, one per step
  int log_every = 1;
  /// Called after each optimiser step with (step, breakdown).
  std::function<void(int, const LossBreakdown&)> on_step;
};

struct TrainResult {
  int steps = 0;
  int epochs = 0;
  bool halted = false;  // stopped on a non-finite loss
  std::string message;
  LossBreakdown last;
  uint64_t parameter_hash = 0;
  uint64_t encoder_hash_before = 0;
  uint64_t encoder_hash_after = 0;
  double seconds = 0.0;
};

/// Runs the configured number of steps/epochs on the corpus. Each step
/// draws batch_size sequences (shuffled per epoch), a timestep and noise per
/// sequence, and applies one AdamW update on the mean gradient of L_net.
TrainResult train(PoseLifter& model, const Corpus& corpus, const TrainOptions& options = {});

/// Runs inference on every sequence and aggregates metrics per action.
MetricReport evaluate(const PoseLifter& model, const Corpus& corpus, const SamplerOptions& options);

/// Fraction of sequences whose predicted intent equals the label.
double classifier_accuracy(const PoseLifter& model, const Corpus& corpus);

}  // namespace dp3d
