#include <cmath>
#include <filesystem>
#include <random>
#include <sstream>

#include "doctest.h"
#include "dp3d/error.hpp"
#include "dp3d/optimizer.hpp"
#include "dp3d/trainer.hpp"
#include "gradcheck.hpp"

using namespace dp3d;
using dp3d::testing::random_mat;

namespace {

/// Tiny configuration so the loop tests finish in seconds.
TrainConfig tiny_config() {
  TrainConfig c;
  c.frames = 4;
  c.channels = 8;
  c.depth = 1;
  c.heads = 2;
  c.block_heads = 2;
  c.hidden = 16;
  c.classifier.channels = 8;
  c.classifier.deconv_channels = 4;
  c.classifier.hidden = 8;
  c.diffusion_steps = 10;
  c.sampling_steps = 2;
  c.schedule.stage1_epochs = 1;
  c.max_steps = 6;
  c.batch_size = 2;
  return c;
}

Corpus tiny_corpus(uint64_t seed = 5) {
  CorpusSpec s;
  s.count = 6;
  s.frames = 4;
  return generate_corpus(s, seed);
}

std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / name;
  std::filesystem::remove_all(p);
  return p;
}

}  // namespace

TEST_CASE("config json round trip and validation") {
  TrainConfig c = tiny_config();
  c.schedule.rule = WeightRule::Falloff;
  c.noise_family = ScheduleFamily::Linear;
  const auto back = TrainConfig::from_json_text(c.to_json_text());
  CHECK(back.to_json_text() == c.to_json_text());
  CHECK(back.hash() == c.hash());
  c.seed = 99;
  CHECK(back.hash() != c.hash());

  CHECK_THROWS_AS(TrainConfig::from_json_text(R"({"model":{"channels":10,"block_heads":4}})"), RangeError);
  CHECK_THROWS_AS(TrainConfig::from_json_text(R"({"schedule":{"stage2_n":2}})"), RangeError);
  CHECK_THROWS_AS(TrainConfig::from_json_text("{not json"), FormatError);
  CHECK(TrainConfig::from_json_text(R"({"training":{"seed":7}})").seed == 7);
}

TEST_CASE("profiles and presets") {
  const auto desk = TrainConfig::profile_named("desk");
  CHECK(desk.frames == 16);
  CHECK(desk.channels == 64);
  CHECK(desk.depth == 2);
  CHECK(desk.heads == 2);
  CHECK(desk.diffusion_steps == 50);
  CHECK(desk.sampling_steps == 5);
  const auto full = TrainConfig::profile_named("full");
  CHECK(full.frames == 243);
  CHECK(full.channels == 512);
  CHECK(full.depth == 16);
  CHECK(full.heads == 6);
  CHECK(full.optimizer.lr == 1e-5);
  CHECK(full.optimizer.weight_decay == 1e-4);
  CHECK(full.batch_size == 4);
  CHECK_NOTHROW(full.validate());
  CHECK_THROWS_AS(TrainConfig::profile_named("huge"), RangeError);

  for (const auto& p : ablation_presets()) CHECK_NOTHROW(apply_preset(desk, p));
  CHECK(apply_preset(desk, "fixed").schedule.rule == WeightRule::Fixed);
  CHECK(apply_preset(desk, "falloff").schedule.rule == WeightRule::Falloff);
  CHECK(apply_preset(desk, "n7").schedule.stage2_n == 7);
  CHECK(apply_preset(desk, "n7").max_hallucination == 7);
  CHECK(apply_preset(desk, "n1").schedule.stage2_n == 1);
  CHECK_FALSE(apply_preset(desk, "no-apl").use_apl);
  CHECK_FALSE(apply_preset(desk, "no-sre").use_affinity);
  CHECK(apply_preset(desk, "no-hpd").max_hallucination == 1);
  CHECK_THROWS_AS(apply_preset(desk, "n9"), RangeError);
}

TEST_CASE("attention with heads that do not divide the width") {
  std::mt19937_64 rng(1);
  ParameterSet ps;
  const auto mha = nn::MultiHeadAttention::create(ps, "m", 10, 3, rng);
  ag::Tape tape(false);
  const Mat out = mha(tape, ps, tape.constant(random_mat(8, 10, rng)), ag::GroupLayout::spatial(2, 4)).value();
  CHECK(out.rows() == 8);
  CHECK(out.cols() == 10);
  CHECK(ps[ps.find("m.query.weight")].value.cols() == 12);
}

TEST_CASE("adamw matches a hand-computed update") {
  ParameterSet ps;
  Mat w(1, 2);
  w << 1.0, -2.0;
  ps.add("w", w);
  OptimizerConfig cfg;
  cfg.lr = 0.1;
  cfg.weight_decay = 0.01;
  cfg.warmup_steps = 0;
  AdamW opt(cfg, ps);
  Mat g(1, 2);
  g << 0.5, -0.25;
  opt.step(ps, {g}, cfg.lr);
  // First step: m_hat = g, v_hat = g^2, so the adaptive term is sign(g).
  const double e0 = 1.0 - 0.1 * (0.5 / (0.5 + 1e-8) + 0.01 * 1.0);
  const double e1 = -2.0 - 0.1 * (-0.25 / (0.25 + 1e-8) + 0.01 * -2.0);
  CHECK(ps[0].value(0, 0) == static_cast<double>(static_cast<float>(e0)));
  CHECK(ps[0].value(0, 1) == static_cast<double>(static_cast<float>(e1)));
  CHECK(opt.steps() == 1);
  CHECK_THROWS_AS(opt.step(ps, {}, 0.1), ShapeError);

  std::vector<Mat> big{Mat::Constant(2, 2, 3.0)};
  CHECK(clip_global_norm(big, 1.0) == doctest::Approx(6.0));
  CHECK(big[0].norm() == doctest::Approx(1.0));
  CHECK(scheduled_lr(cfg, 0, 100) == doctest::Approx(0.1));
  CHECK(scheduled_lr(cfg, 99, 100) == doctest::Approx(0.1 * cfg.min_lr_fraction));
  cfg.warmup_steps = 10;
  CHECK(scheduled_lr(cfg, 0, 100) == doctest::Approx(0.01));
  CHECK(scheduled_lr(cfg, 4, 100) < scheduled_lr(cfg, 9, 100));
}

TEST_CASE("full objective gradients through the model") {
  TrainConfig cfg = tiny_config();
  cfg.max_hallucination = 3;
  cfg.schedule.stage2_n = 3;
  const auto corpus = tiny_corpus();
  PoseLifter model(cfg, corpus.topology, corpus.vocabulary, make_text_encoder("stub"));
  std::mt19937_64 rng(3);
  auto& ps = model.params();
  for (int i = 0; i < ps.size(); ++i) {
    if (ps[i].value.isZero()) ps[i].value = random_mat(ps[i].value.rows(), ps[i].value.cols(), rng, 0.1);
  }
  const auto& rec = corpus.records[1];
  const Mat eps = random_mat(rec.pose.data.rows(), 3, rng);
  const ScheduleStep step{3, hallucination_weights(3)};
  const auto check = dp3d::testing::param_gradient_check(
      [&](ag::Tape& tape, const ParameterSet&) {
        return model.loss(tape, {&rec.pose, &rec.keypoints, rec.label, 4, &eps}, step).total;
      },
      model.params(), 300, 4, 1e-5);
  CHECK(check.pass_fraction(1e-3) >= 0.99);
}

TEST_CASE("training is deterministic and leaves the encoder untouched") {
  const auto corpus = tiny_corpus();
  const TrainConfig cfg = tiny_config();
  PoseLifter a(cfg, corpus.topology, corpus.vocabulary, make_text_encoder("stub"));
  PoseLifter b(cfg, corpus.topology, corpus.vocabulary, make_text_encoder("stub"));
  const uint64_t init = a.params().hash();
  std::ostringstream log;
  TrainOptions opts;
  opts.log = &log;
  const auto ra = train(a, corpus, opts);
  const auto rb = train(b, corpus);
  CHECK(ra.steps == 6);
  CHECK(ra.parameter_hash == rb.parameter_hash);
  CHECK(ra.parameter_hash != init);
  CHECK(ra.encoder_hash_before == ra.encoder_hash_after);
  const std::string lines = log.str();
  CHECK(std::count(lines.begin(), lines.end(), '\n') == 6);
  CHECK(log.str().find("\"l_net\"") != std::string::npos);

  TrainConfig zero = cfg;
  zero.epochs = 0;
  PoseLifter z(zero, corpus.topology, corpus.vocabulary, make_text_encoder("stub"));
  CHECK(train(z, corpus).parameter_hash == init);
}

TEST_CASE("checkpoint round trip is bitwise stable") {
  const auto corpus = tiny_corpus();
  PoseLifter model(tiny_config(), corpus.topology, corpus.vocabulary, make_text_encoder("stub"));
  const auto dir = temp_dir("dp3d_ckpt_test");
  TrainOptions opts;
  opts.checkpoint_dir = dir;
  const auto r = train(model, corpus, opts);
  const auto loaded = load_checkpoint(dir);
  CHECK(loaded.parameter_hash == r.parameter_hash);
  CHECK(loaded.state.step == 6);
  CHECK(parameter_payload(loaded.model->params()) == parameter_payload(model.params()));
  const auto dir2 = temp_dir("dp3d_ckpt_test2");
  save_checkpoint(*loaded.model, loaded.state, dir2);
  const auto reloaded = load_checkpoint(dir2);
  CHECK(parameter_payload(reloaded.model->params()) == parameter_payload(model.params()));
  for (int i = 0; i < model.params().size(); ++i) CHECK(reloaded.model->params()[i].value == model.params()[i].value);

  const auto x = corpus.records[0].keypoints;
  CHECK(loaded.model->infer(x, {2, false, 3}).pose.data == model.infer(x, {2, false, 3}).pose.data);

  // Corrupt the payload length.
  std::filesystem::resize_file(dir2 / "params.bin", 12);
  CHECK_THROWS_AS(load_checkpoint(dir2), FormatError);
  CHECK_THROWS_AS(load_checkpoint(temp_dir("dp3d_missing")), FormatError);
  std::filesystem::remove_all(dir);
  std::filesystem::remove_all(dir2);
}

TEST_CASE("inference provenance and shapes") {
  const auto corpus = tiny_corpus();
  PoseLifter model(tiny_config(), corpus.topology, corpus.vocabulary, make_text_encoder("stub"));
  const auto& x = corpus.records[2].keypoints;
  const auto a = model.infer(x, {2, false, 11});
  const auto b = model.infer(x, {2, false, 11});
  CHECK(a.pose.data == b.pose.data);
  CHECK(a.pose.frames == 4);
  CHECK(a.pose.joints == 17);
  CHECK(a.pose.data.row(0).isZero());
  CHECK(a.label == 0);  // untrained classifier: uniform logits
  CHECK(a.prompt == "a person walking");
  CHECK(a.steps == 2);
  CHECK(a.seed == 11);
  CHECK_THROWS_AS(model.infer(Pose2DSequence::zeros(5, 17), {2, false, 0}), ShapeError);

  TrainConfig cfg = tiny_config();
  cfg.use_apl = false;
  PoseLifter plain(cfg, corpus.topology, corpus.vocabulary, make_text_encoder("stub"));
  CHECK(plain.infer(x, {2, false, 0}).label == -1);
  CHECK(plain.context_values(1).isZero());
}

TEST_CASE("evaluation report keys follow the corpus labels") {
  const auto corpus = tiny_corpus();
  PoseLifter model(tiny_config(), corpus.topology, corpus.vocabulary, make_text_encoder("stub"));
  const auto r = evaluate(model, corpus, {2, false, 0});
  CHECK(r.per_action.size() == 3);
  CHECK(r.per_action.count("Walking") == 1);
  CHECK(r.per_action.count("Sitting") == 1);
  CHECK(r.per_action.count("Waving") == 1);
  double avg = 0.0;
  for (const auto& [k, v] : r.per_action) avg += v;
  CHECK(r.average == doctest::Approx(avg / 3.0));
  CHECK(r.p_mpjpe <= r.mpjpe + 1e-9);
  CHECK(classifier_accuracy(model, corpus) == doctest::Approx(2.0 / 6.0));
}
