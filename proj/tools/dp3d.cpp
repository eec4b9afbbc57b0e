// dp3d command-line front end.

#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "dp3d/error.hpp"
#include "dp3d/trainer.hpp"

using namespace dp3d;
using nlohmann::json;

namespace {

Pose2DSequence read_keypoint_csv(const std::filesystem::path& path, int joints) {
  std::ifstream f(path);
  if (!f) throw FormatError("cannot open " + path.string());
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<double> v;
    while (std::getline(ss, cell, ',')) v.push_back(std::stod(cell));
    if (static_cast<int>(v.size()) != 2 * joints) {
      throw FormatError("2D csv: expected " + std::to_string(2 * joints) + " values per frame");
    }
    rows.push_back(std::move(v));
  }
  Pose2DSequence x = Pose2DSequence::zeros(static_cast<int>(rows.size()), joints);
  for (size_t fr = 0; fr < rows.size(); ++fr) {
    for (int j = 0; j < joints; ++j) {
      x.data(static_cast<Eigen::Index>(fr) * joints + j, 0) = rows[fr][static_cast<size_t>(2 * j)];
      x.data(static_cast<Eigen::Index>(fr) * joints + j, 1) = rows[fr][static_cast<size_t>(2 * j + 1)];
    }
  }
  x.validate();
  return x;
}

bool is_container(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  char magic[4] = {};
  f.read(magic, 4);
  return f.gcount() == 4 && std::string(magic, 4) == "DP3D";
}

json pose_json(const Pose3DSequence& p) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < p.data.rows(); ++r) rows.push_back({p.data(r, 0), p.data(r, 1), p.data(r, 2)});
  return rows;
}

/// A 3D sequence from an inference output (JSON) or a container record.
Pose3DSequence load_sequence(const std::filesystem::path& path, int index) {
  if (is_container(path)) {
    const Corpus c = read_container(path);
    if (index < 0 || index >= c.size()) throw RangeError("sequence index out of range");
    return c.records[static_cast<size_t>(index)].pose;
  }
  std::ifstream f(path);
  if (!f) throw FormatError("cannot open " + path.string());
  const json j = json::parse(f);
  const auto& seqs = j.at("sequences");
  if (index < 0 || index >= static_cast<int>(seqs.size())) throw RangeError("sequence index out of range");
  const auto& s = seqs.at(static_cast<size_t>(index));
  Pose3DSequence p = Pose3DSequence::zeros(s.at("frames").get<int>(), s.at("joints").get<int>());
  const auto& rows = s.at("pose");
  if (static_cast<Eigen::Index>(rows.size()) != p.data.rows()) throw FormatError("pose row count mismatch");
  for (size_t r = 0; r < rows.size(); ++r) {
    for (int c = 0; c < 3; ++c) p.data(static_cast<Eigen::Index>(r), c) = rows[r][static_cast<size_t>(c)].get<double>();
  }
  return p;
}

std::vector<int> parse_joints(const std::string& csv, const SkeletonTopology& topo) {
  std::vector<int> out;
  std::stringstream ss(csv);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (tok.empty()) continue;
    int j = topo.joint_index(tok);
    if (j < 0) {
      try {
        j = std::stoi(tok);
      } catch (const std::logic_error&) {
        throw RangeError("unknown joint: " + tok);
      }
    }
    out.push_back(j);
  }
  if (out.empty()) throw RangeError("no joints given");
  return out;
}

TrainConfig base_config(const std::string& path) {
  return path.empty() ? TrainConfig::profile_named("desk") : TrainConfig::load(path);
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream f(path);
  f << text << '\n';
  if (!f) throw std::runtime_error("cannot write " + path.string());
}

TrainResult run_training(PoseLifter& model, const Corpus& corpus, const std::filesystem::path& out,
                         const std::string& log_path) {
  std::ofstream log;
  TrainOptions opts;
  opts.checkpoint_dir = out;
  if (!log_path.empty()) {
    const auto parent = std::filesystem::path(log_path).parent_path();
    if (!parent.empty()) std::filesystem::create_directories(parent);
    log.open(log_path);
    if (!log) throw std::runtime_error("cannot write " + log_path);
    opts.log = &log;
  }
  opts.on_step = [](int step, const LossBreakdown& l) {
    if (step % 100 == 0) {
      std::cerr << "step " << step << "  L3D " << l.l3d << "  Lact " << l.act << "  LBL " << l.bl << "  Lnet "
                << l.total << '\n';
    }
  };
  const auto r = train(model, corpus, opts);
  if (r.halted) std::cerr << "training halted: " << r.message << '\n';
  std::cerr << "trained " << r.steps << " steps (" << r.epochs << " epochs) in " << r.seconds << " s\n";
  return r;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dp3d: prompt-conditioned diffusion for 3D pose lifting"};
  app.require_subcommand(1);

  std::string spec_path, out, data, config_path, ckpt, input, report, pred, gt, joints, preset, log_path;
  uint64_t seed = 0;
  int steps = -1, index = 0, max_steps = -1;

  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic labelled corpus");
  gen->add_option("--spec", spec_path, "Corpus spec (JSON); defaults to 50 sequences of walk/sit/wave");
  gen->add_option("--out", out, "Output container")->required();
  gen->add_option("--seed", seed, "Generator seed");

  auto* tr = app.add_subcommand("train", "Train a model");
  tr->add_option("--config", config_path, "Training config (JSON); defaults to the desk profile");
  tr->add_option("--data", data, "Training container")->required();
  tr->add_option("--out", out, "Checkpoint directory")->required();
  tr->add_option("--log", log_path, "Per-step JSON-lines log");
  tr->add_option("--preset", preset, "Apply an ablation preset to the config");

  auto* inf = app.add_subcommand("infer", "Lift 2D keypoints to 3D");
  inf->add_option("--ckpt", ckpt, "Checkpoint directory")->required();
  inf->add_option("--input", input, "Container or 2D csv (one frame per line, J*2 values)")->required();
  inf->add_option("--out", out, "Output JSON")->required();
  inf->add_option("--seed", seed, "Sampler seed");
  inf->add_option("--steps", steps, "Sampling steps K (default from the config)");

  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint on a corpus");
  ev->add_option("--ckpt", ckpt, "Checkpoint directory")->required();
  ev->add_option("--data", data, "Container with ground truth")->required();
  ev->add_option("--report", report, "Report JSON")->required();
  ev->add_option("--seed", seed, "Sampler seed");
  ev->add_option("--steps", steps, "Sampling steps K");

  auto* pt = app.add_subcommand("plot-traj", "Export joint trajectories for plotting");
  pt->add_option("--pred", pred, "Inference output JSON or container")->required();
  pt->add_option("--gt", gt, "Container or inference output JSON")->required();
  pt->add_option("--joints", joints, "Comma-separated joint names or indices")->required();
  pt->add_option("--out", out, "Output csv")->required();
  pt->add_option("--index", index, "Sequence index in both inputs");

  auto* ab = app.add_subcommand("ablate", "Train and evaluate one ablation preset");
  ab->add_option("--preset", preset, "Preset")
      ->required()
      ->check(CLI::IsMember(ablation_presets()));
  ab->add_option("--config", config_path, "Base config (JSON); defaults to the desk profile");
  ab->add_option("--data", data, "Training/evaluation container; generated when omitted");
  ab->add_option("--out", out, "Output directory")->required();
  ab->add_option("--seed", seed, "Seed for the generated corpus and the sampler");
  ab->add_option("--max-steps", max_steps, "Override the optimiser step budget");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) {
      const CorpusSpec spec = spec_path.empty() ? CorpusSpec{} : CorpusSpec::load(spec_path);
      const Corpus c = generate_corpus(spec, seed);
      write_container(c, out);
      std::cerr << "wrote " << c.size() << " sequences to " << out << '\n';
    } else if (*tr) {
      TrainConfig cfg = base_config(config_path);
      if (!preset.empty()) cfg = apply_preset(cfg, preset);
      cfg.text_encoder = resolve_text_encoder(cfg);
      const Corpus corpus = read_container(data);
      PoseLifter model(cfg, corpus.topology, corpus.vocabulary, make_text_encoder(cfg.text_encoder));
      const auto r = run_training(model, corpus, out, log_path);
      return r.halted ? 3 : 0;
    } else if (*inf) {
      const auto loaded = load_checkpoint(ckpt);
      const PoseLifter& model = *loaded.model;
      std::vector<Pose2DSequence> inputs;
      if (is_container(input)) {
        for (const auto& r : read_container(input).records) inputs.push_back(r.keypoints);
      } else {
        inputs.push_back(read_keypoint_csv(input, model.topology().joint_count()));
      }
      SamplerOptions o{steps > 0 ? steps : model.config().sampling_steps, model.config().deterministic_sampling, seed};
      json j;
      j["checkpoint"] = ckpt;
      j["sequences"] = json::array();
      for (size_t i = 0; i < inputs.size(); ++i) {
        o.seed = seed + i;
        const auto r = model.infer(inputs[i], o);
        j["sequences"].push_back({{"frames", r.pose.frames},
                                  {"joints", r.pose.joints},
                                  {"predicted_label", r.label},
                                  {"predicted_action", r.label >= 0 ? model.vocabulary().labels[static_cast<size_t>(r.label)] : ""},
                                  {"prompt", r.prompt},
                                  {"sampling_steps", r.steps},
                                  {"seed", r.seed},
                                  {"units", "mm, root-relative"},
                                  {"pose", pose_json(r.pose)}});
      }
      write_text(out, j.dump(2));
    } else if (*ev) {
      const auto loaded = load_checkpoint(ckpt);
      const Corpus corpus = read_container(data);
      const auto& cfg = loaded.model->config();
      const auto r = evaluate(*loaded.model, corpus,
                              {steps > 0 ? steps : cfg.sampling_steps, cfg.deterministic_sampling, seed});
      write_text(report, r.to_json_text());
      std::cout << "mPJPE " << r.mpjpe << " mm  P-mPJPE " << r.p_mpjpe << " mm  PCK " << r.pck << "  AUC " << r.auc
                << '\n';
    } else if (*pt) {
      const auto topo = SkeletonTopology::h36m17();
      const auto p = load_sequence(pred, index);
      const auto g = root_center(load_sequence(gt, index));
      export_trajectories(p, g, parse_joints(joints, topo), topo, out);
    } else if (*ab) {
      TrainConfig cfg = apply_preset(base_config(config_path), preset);
      if (max_steps >= 0) cfg.max_steps = max_steps;
      cfg.text_encoder = resolve_text_encoder(cfg);
      const Corpus corpus = data.empty() ? generate_corpus(CorpusSpec{}, seed) : read_container(data);
      PoseLifter model(cfg, corpus.topology, corpus.vocabulary, make_text_encoder(cfg.text_encoder));
      const auto tr_result = run_training(model, corpus, std::filesystem::path(out) / "checkpoint",
                                          (std::filesystem::path(out) / "train_log.jsonl").string());
      const auto r = evaluate(model, corpus, {cfg.sampling_steps, cfg.deterministic_sampling, seed});
      json j = json::parse(r.to_json_text());
      j["preset"] = preset;
      j["steps"] = tr_result.steps;
      j["train_seconds"] = tr_result.seconds;
      j["halted"] = tr_result.halted;
      j["intent_accuracy"] = classifier_accuracy(model, corpus);
      j["config"] = json::parse(cfg.to_json_text());
      write_text(std::filesystem::path(out) / "report.json", j.dump(2));
      std::cout << preset << ": mPJPE " << r.mpjpe << " mm  P-mPJPE " << r.p_mpjpe << " mm\n";
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
