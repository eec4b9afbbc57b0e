#include "dp3d/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <sstream>

#include <nlohmann/json.hpp>

#include "dp3d/error.hpp"
#include "dp3d/optimizer.hpp"

namespace dp3d {

namespace {

std::string rng_text(const std::mt19937_64& rng) {
  std::ostringstream s;
  s << rng;
  return s.str();
}

void check_corpus(const PoseLifter& model, const Corpus& corpus) {
  corpus.validate();
  if (corpus.records.empty()) throw RangeError("train: empty corpus");
  if (corpus.topology.joint_count() != model.topology().joint_count()) {
    throw ShapeError("corpus topology differs from the model");
  }
  for (const auto& r : corpus.records) {
    if (r.pose.frames > model.config().frames) throw ShapeError("corpus sequence longer than the model window");
    if (r.label >= model.vocabulary().size()) throw RangeError("corpus label outside the model vocabulary");
  }
}

}  // namespace

TrainResult train(PoseLifter& model, const Corpus& corpus, const TrainOptions& options) {
  check_corpus(model, corpus);
  const auto start = std::chrono::steady_clock::now();
  const TrainConfig& cfg = model.config();
  ParameterSet& ps = model.params();
  TrainResult result;
  result.encoder_hash_before = model.encoder().weight_hash();

  std::mt19937_64 rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  std::uniform_int_distribution<int> pick_t(1, cfg.diffusion_steps);
  std::normal_distribution<double> normal(0.0, 1.0);
  AdamW opt(cfg.optimizer, ps);
  std::vector<int> order(static_cast<size_t>(corpus.size()));

  const int batches_per_epoch = (corpus.size() + cfg.batch_size - 1) / cfg.batch_size;
  const long long by_epochs = static_cast<long long>(cfg.epochs) * batches_per_epoch;
  const int total_steps = static_cast<int>(cfg.max_steps > 0 ? std::min<long long>(cfg.max_steps, by_epochs) : by_epochs);

  if (!options.checkpoint_dir.empty()) save_checkpoint(model, {0, 0, rng_text(rng)}, options.checkpoint_dir);

  int step = 0;
  for (int epoch = 0; epoch < cfg.epochs && step < total_steps; ++epoch) {
    for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    std::shuffle(order.begin(), order.end(), rng);
    const ScheduleStep sched = schedule_n(epoch, cfg.schedule);
    for (int b = 0; b < batches_per_epoch && step < total_steps; ++b) {
      std::vector<Mat> grads(static_cast<size_t>(ps.size()));
      LossBreakdown mean;
      const int first = b * cfg.batch_size;
      const int count = std::min(cfg.batch_size, corpus.size() - first);
      for (int k = 0; k < count; ++k) {
        const auto& rec = corpus.records[static_cast<size_t>(order[static_cast<size_t>(first + k)])];
        const int t = pick_t(rng);
        Mat eps(rec.pose.data.rows(), 3);
        for (Eigen::Index i = 0; i < eps.size(); ++i) eps.data()[i] = normal(rng);
        ag::Tape tape;
        const auto terms = model.loss(tape, {&rec.pose, &rec.keypoints, rec.label, t, &eps}, sched);
        mean.l3d += terms.l3d.scalar() / count;
        mean.act += (terms.act.tape != nullptr ? terms.act.scalar() : 0.0) / count;
        mean.bl += terms.bl.scalar() / count;
        mean.total += terms.total.scalar() / count;
        if (!std::isfinite(terms.total.scalar())) break;
        tape.backward(terms.total);
        tape.accumulate_param_grads(grads);
      }
      if (!std::isfinite(mean.total)) {
        result.halted = true;
        result.message = "non-finite loss at epoch " + std::to_string(epoch) + ", step " + std::to_string(step) +
                         "; last good checkpoint kept";
        result.epochs = epoch;
        result.steps = step;
        result.parameter_hash = ps.hash();
        result.encoder_hash_after = model.encoder().weight_hash();
        return result;
      }
      for (auto& g : grads) {
        if (g.size() > 0) g /= count;
      }
      clip_global_norm(grads, cfg.optimizer.grad_clip);
      opt.step(ps, grads, scheduled_lr(cfg.optimizer, step, total_steps));
      ++step;
      result.last = mean;
      if (options.log != nullptr && (step % std::max(1, options.log_every) == 0 || step == total_steps)) {
        nlohmann::json j{{"epoch", epoch}, {"step", step},          {"n", sched.n},
                         {"l3d", mean.l3d}, {"l_act", mean.act},    {"l_bl", mean.bl},
                         {"l_net", mean.total}};
        *options.log << j.dump() << '\n';
      }
      if (options.on_step) options.on_step(step, mean);
    }
    result.epochs = epoch + 1;
    if (!options.checkpoint_dir.empty()) save_checkpoint(model, {epoch + 1, step, rng_text(rng)}, options.checkpoint_dir);
  }
  result.steps = step;
  result.parameter_hash = ps.hash();
  result.encoder_hash_after = model.encoder().weight_hash();
  result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

MetricReport evaluate(const PoseLifter& model, const Corpus& corpus, const SamplerOptions& options) {
  check_corpus(model, corpus);
  MetricAccumulator acc;
  for (size_t i = 0; i < corpus.records.size(); ++i) {
    const auto& rec = corpus.records[i];
    SamplerOptions o = options;
    o.seed = options.seed + i;
    const auto out = model.infer(rec.keypoints, o);
    acc.add(out.pose, root_center(rec.pose, corpus.topology.root),
            corpus.vocabulary.labels[static_cast<size_t>(rec.label)]);
  }
  return acc.report();
}

double classifier_accuracy(const PoseLifter& model, const Corpus& corpus) {
  check_corpus(model, corpus);
  int hits = 0;
  for (const auto& rec : corpus.records) hits += model.classify(rec.keypoints).label == rec.label ? 1 : 0;
  return static_cast<double>(hits) / corpus.size();
}

}  // namespace dp3d
