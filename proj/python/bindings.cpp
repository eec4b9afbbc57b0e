#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "dp3d/error.hpp"
#include "dp3d/trainer.hpp"

namespace py = pybind11;
using namespace dp3d;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

// (frames, joints, k) arrays <-> (frames*joints) x k row-major matrices.
Mat from_array(const Array& a, int cols) {
  if (a.ndim() != 3 || a.shape(2) != cols) {
    throw ShapeError("expected an array of shape (frames, joints, " + std::to_string(cols) + ")");
  }
  Mat m(a.shape(0) * a.shape(1), cols);
  std::copy(a.data(), a.data() + a.size(), m.data());
  return m;
}

Array to_array(const Mat& m, int frames, int joints) {
  Array a({frames, joints, static_cast<int>(m.cols())});
  std::copy(m.data(), m.data() + m.size(), a.mutable_data());
  return a;
}

Pose3DSequence pose3d(const Array& a) {
  Pose3DSequence p{static_cast<int>(a.shape(0)), static_cast<int>(a.ndim() == 3 ? a.shape(1) : 0), from_array(a, 3)};
  p.validate();
  return p;
}

Pose2DSequence pose2d(const Array& a) {
  Pose2DSequence p = Pose2DSequence::zeros(static_cast<int>(a.shape(0)), a.ndim() == 3 ? static_cast<int>(a.shape(1)) : 0);
  p.data = from_array(a, 2);
  p.validate();
  return p;
}

}  // namespace

PYBIND11_MODULE(_dp3d, m) {
  m.doc() = "dp3d core bindings";
  m.attr("__version__") = "0.1.0";

  auto base = py::register_exception<Error>(m, "Dp3dError");
  py::register_exception<ShapeError>(m, "ShapeError", base.ptr());
  py::register_exception<RangeError>(m, "RangeError", base.ptr());
  py::register_exception<FormatError>(m, "FormatError", base.ptr());
  py::register_exception<NumericError>(m, "NumericError", base.ptr());
  py::register_exception<BackendUnavailable>(m, "BackendUnavailable", base.ptr());

  py::class_<SkeletonTopology>(m, "SkeletonTopology")
      .def_static("h36m17", &SkeletonTopology::h36m17)
      .def_static("load", &SkeletonTopology::load)
      .def_readonly("id", &SkeletonTopology::id)
      .def_readonly("joint_names", &SkeletonTopology::joint_names)
      .def_readonly("edges", &SkeletonTopology::edges)
      .def_property_readonly("joint_count", &SkeletonTopology::joint_count)
      .def("to_json", &SkeletonTopology::to_json_text);

  m.def("build_local_affinity", &build_local_affinity);
  m.def("fuse_affinity", &fuse_affinity);
  m.def("bone_lengths", [](const Eigen::MatrixXd& frame, const SkeletonTopology& t) {
    return Eigen::VectorXd(bone_length_vector(Mat(frame), t));
  });

  m.def("cosine_alpha_bars", [](int steps) { return NoiseSchedule::cosine(steps).alpha_bars(); });
  m.def(
      "forward_diffuse",
      [](const Array& y0, int t, const Array& eps, int max_steps) {
        const Mat out = forward_diffuse(from_array(y0, 3), t, from_array(eps, 3), NoiseSchedule::cosine(max_steps));
        return to_array(out, static_cast<int>(y0.shape(0)), static_cast<int>(y0.shape(1)));
      },
      py::arg("y0"), py::arg("t"), py::arg("eps"), py::arg("max_steps") = 50);
  m.def("sampling_timesteps", &sampling_timesteps);

  m.def("hallucination_weights", &hallucination_weights);
  m.def(
      "schedule_n",
      [](int epoch, const std::string& rule, int stage1_epochs, int stage2_n) {
        SamplingSchedule s{stage1_epochs, stage2_n, parse_weight_rule(rule)};
        const auto step = schedule_n(epoch, s);
        return py::make_tuple(step.n, step.weights);
      },
      py::arg("epoch"), py::arg("rule") = "controlled", py::arg("stage1_epochs") = 25, py::arg("stage2_n") = 3);

  m.def("mpjpe", [](const Array& p, const Array& g) { return mpjpe(pose3d(p), pose3d(g)); });
  m.def(
      "p_mpjpe", [](const Array& p, const Array& g, bool scale) { return p_mpjpe(pose3d(p), pose3d(g), scale); },
      py::arg("pred"), py::arg("gt"), py::arg("with_scale") = true);
  m.def(
      "pck", [](const Array& p, const Array& g, double thr) { return pck(pose3d(p), pose3d(g), thr); },
      py::arg("pred"), py::arg("gt"), py::arg("threshold_mm") = kPckThresholdMm);
  m.def("auc", [](const Array& p, const Array& g) { return auc(pose3d(p), pose3d(g)); });

  py::class_<TrainConfig>(m, "TrainConfig")
      .def(py::init<>())
      .def_static("profile", &TrainConfig::profile_named)
      .def_static("from_json", &TrainConfig::from_json_text)
      .def_static("load", &TrainConfig::load)
      .def("to_json", &TrainConfig::to_json_text)
      .def("apply_preset", [](const TrainConfig& c, const std::string& p) { return apply_preset(c, p); })
      .def_readwrite("seed", &TrainConfig::seed)
      .def_readwrite("max_steps", &TrainConfig::max_steps)
      .def_readwrite("epochs", &TrainConfig::epochs)
      .def_readwrite("batch_size", &TrainConfig::batch_size)
      .def_readwrite("use_apl", &TrainConfig::use_apl)
      .def_readwrite("text_encoder", &TrainConfig::text_encoder);
  m.def("ablation_presets", &ablation_presets);

  py::class_<Corpus>(m, "Corpus")
      .def("__len__", &Corpus::size)
      .def_property_readonly("labels", [](const Corpus& c) {
        std::vector<int> out;
        for (const auto& r : c.records) out.push_back(r.label);
        return out;
      })
      .def_property_readonly("actions", [](const Corpus& c) { return c.vocabulary.labels; })
      .def("pose", [](const Corpus& c, int i) {
        const auto& p = c.records.at(static_cast<size_t>(i)).pose;
        return to_array(p.data, p.frames, p.joints);
      })
      .def("keypoints", [](const Corpus& c, int i) {
        const auto& k = c.records.at(static_cast<size_t>(i)).keypoints;
        return to_array(k.data, k.frames, k.joints);
      })
      .def("save", [](const Corpus& c, const std::filesystem::path& p) { write_container(c, p); });
  m.def(
      "generate_corpus",
      [](int count, int frames, std::vector<std::string> actions, uint64_t seed) {
        CorpusSpec spec;
        spec.count = count;
        spec.frames = frames;
        if (!actions.empty()) {
          spec.actions.clear();
          for (const auto& a : actions) spec.actions.push_back(parse_motion_class(a));
        }
        return generate_corpus(spec, seed);
      },
      py::arg("count") = 50, py::arg("frames") = 16, py::arg("actions") = std::vector<std::string>{},
      py::arg("seed") = 0);
  m.def("read_corpus", &read_container);

  py::class_<PoseLifter>(m, "PoseLifter")
      .def(py::init([](const TrainConfig& cfg, const Corpus& c) {
             return std::make_unique<PoseLifter>(cfg, c.topology, c.vocabulary,
                                                 make_text_encoder(resolve_text_encoder(cfg)));
           }),
           py::arg("config"), py::arg("corpus"))
      .def_static("load", [](const std::filesystem::path& dir) { return std::move(load_checkpoint(dir).model); })
      .def("save", [](const PoseLifter& m, const std::filesystem::path& dir) { save_checkpoint(m, {}, dir); })
      .def("parameter_hash", [](const PoseLifter& m) { return m.params().hash(); })
      .def("parameter_count", [](const PoseLifter& m) { return m.params().scalar_count(); })
      .def(
          "train",
          [](PoseLifter& m, const Corpus& c) {
            TrainResult r;
            {
              py::gil_scoped_release release;
              r = train(m, c);
            }
            return py::dict(py::arg("steps") = r.steps, py::arg("epochs") = r.epochs, py::arg("halted") = r.halted,
                            py::arg("loss") = r.last.total, py::arg("seconds") = r.seconds);
          })
      .def(
          "infer",
          [](const PoseLifter& m, const Array& keypoints, int steps, uint64_t seed, bool deterministic) {
            const auto r = m.infer(pose2d(keypoints), {steps, deterministic, seed});
            return py::make_tuple(to_array(r.pose.data, r.pose.frames, r.pose.joints), r.label, r.prompt);
          },
          py::arg("keypoints"), py::arg("steps") = 5, py::arg("seed") = 0, py::arg("deterministic") = false)
      .def(
          "evaluate",
          [](const PoseLifter& m, const Corpus& c, int steps, uint64_t seed) {
            return evaluate(m, c, {steps, m.config().deterministic_sampling, seed}).to_json_text();
          },
          py::arg("corpus"), py::arg("steps") = 5, py::arg("seed") = 0)
      .def("classifier_accuracy", [](const PoseLifter& m, const Corpus& c) { return classifier_accuracy(m, c); });
}
