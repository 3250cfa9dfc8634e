#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <cstring>

#include "leafwood/cloud.hpp"
#include "leafwood/errors.hpp"
#include "leafwood/evaluation.hpp"
#include "leafwood/network.hpp"
#include "leafwood/prior_features.hpp"
#include "leafwood/sampling.hpp"
#include "leafwood/splitter.hpp"
#include "leafwood/synthgen.hpp"

namespace py = pybind11;
using namespace leafwood;

namespace {

using Points = py::array_t<double, py::array::c_style | py::array::forcecast>;
using Labels = py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>;
using Values = py::array_t<double, py::array::c_style | py::array::forcecast>;

std::vector<Point3> to_points(const Points& a) {
  if (a.ndim() != 2 || a.shape(1) != 3) throw ContractError("points must have shape (n, 3)");
  std::vector<Point3> out(static_cast<std::size_t>(a.shape(0)));
  std::memcpy(out.data(), a.data(), out.size() * sizeof(Point3));
  return out;
}

std::vector<ClassLabel> to_labels(const Labels& a) {
  std::vector<ClassLabel> out;
  out.reserve(static_cast<std::size_t>(a.size()));
  for (py::ssize_t i = 0; i < a.size(); ++i) {
    const auto v = a.data()[i];
    if (v > 1) throw DomainError("labels must be 0 (leaf) or 1 (wood)");
    out.push_back(static_cast<ClassLabel>(v));
  }
  return out;
}

std::vector<double> to_values(const Values& a) {
  return {a.data(), a.data() + a.size()};
}

Points from_points(std::span<const Point3> pts) {
  Points out({static_cast<py::ssize_t>(pts.size()), py::ssize_t{3}});
  std::memcpy(out.mutable_data(), pts.data(), pts.size() * sizeof(Point3));
  return out;
}

Labels from_labels(std::span<const ClassLabel> labels) {
  Labels out(static_cast<py::ssize_t>(labels.size()));
  for (std::size_t i = 0; i < labels.size(); ++i) out.mutable_data()[i] = static_cast<std::uint8_t>(labels[i]);
  return out;
}

template <class T>
py::array_t<T> from_vector(const std::vector<T>& v) {
  return py::array_t<T>(static_cast<py::ssize_t>(v.size()), v.data());
}

LabeledCloud make_cloud(const Points& points, const std::optional<Labels>& labels,
                        const std::optional<Values>& linearity) {
  std::optional<std::vector<ClassLabel>> l;
  std::optional<std::vector<double>> f;
  if (labels) l = to_labels(*labels);
  if (linearity) f = to_values(*linearity);
  return LabeledCloud(to_points(points), std::move(l), std::move(f));
}

py::dict cloud_dict(const LabeledCloud& c) {
  py::dict d;
  d["points"] = from_points(c.points());
  d["labels"] = c.has_labels() ? py::object(from_labels(c.labels())) : py::none();
  d["linearity"] = c.has_linearity()
                       ? py::object(from_vector(std::vector<double>(c.linearity().begin(), c.linearity().end())))
                       : py::none();
  return d;
}

py::dict report_dict(const MetricsReport& r) {
  py::dict d;
  d["tp"] = r.counts.tp;
  d["tn"] = r.counts.tn;
  d["fp"] = r.counts.fp;
  d["fn"] = r.counts.fn;
  d["oa"] = r.oa;
  d["iou_wood"] = r.iou_wood;
  d["iou_leaf"] = r.iou_leaf;
  d["miou"] = r.miou;
  d["precision"] = r.precision;
  d["recall"] = r.recall;
  d["f1"] = r.f1;
  d["sensitivity"] = r.sensitivity;
  d["specificity"] = r.specificity;
  return d;
}

ModelConfig preset(const std::string& name) {
  if (name == "toy") return ModelConfig::toy();
  if (name == "full") return ModelConfig{};
  if (name == "micro") return ModelConfig::micro();
  throw ContractError("unknown preset '" + name + "'");
}

/// A trained or loaded network plus its configuration.
class Model {
 public:
  Model(ModelConfig config, ModelParams params) : config_(std::move(config)), params_(std::move(params)) {}

  static Model initial(const std::string& preset_name, std::uint64_t seed, bool use_linearity) {
    ModelConfig c = preset(preset_name);
    c.use_linearity = use_linearity;
    return Model(c, init_params(c, seed));
  }

  static Model load(const std::filesystem::path& path) {
    auto ck = load_checkpoint(path);
    return Model(std::move(ck.config), std::move(ck.params));
  }

  void save(const std::filesystem::path& path) const { save_checkpoint({config_, params_}, path); }

  std::vector<double> fit(const Points& points, const Labels& labels, const Values& linearity,
                          std::size_t epochs, double lr, std::uint64_t seed, std::size_t max_points) {
    TrainConfig tc;
    tc.epochs = epochs;
    tc.learning_rate = lr;
    tc.seed = seed;
    const auto chunks = prepare_training_chunks(make_cloud(points, labels, linearity), max_points);
    TrainResult r;
    {
      py::gil_scoped_release release;
      r = train(params_, config_, chunks, tc);
    }
    params_ = std::move(r.params);
    return r.epoch_losses;
  }

  Labels predict(const Points& points, const Values& linearity, std::size_t max_points) const {
    const auto cloud = make_cloud(points, std::nullopt, linearity);
    std::vector<ClassLabel> out;
    {
      py::gil_scoped_release release;
      out = leafwood::predict(params_, config_, cloud, max_points);
    }
    return from_labels(out);
  }

  std::string config_json() const { return to_json(config_); }
  std::size_t parameter_count() const { return params_.parameter_count(); }

 private:
  ModelConfig config_;
  ModelParams params_;
};

}  // namespace

PYBIND11_MODULE(_leafwood, m) {
  m.doc() = "Wood-leaf classification for tree point clouds";

  py::register_exception<ContractError>(m, "ContractError", PyExc_ValueError);
  py::register_exception<DomainError>(m, "DomainError", PyExc_ValueError);
  py::register_exception<ParseError>(m, "ParseError", PyExc_ValueError);
  py::register_exception<FormatError>(m, "FormatError", PyExc_ValueError);
  py::register_exception<IoError>(m, "IoError", PyExc_OSError);
  py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);

  m.attr("DEFAULT_RADIUS") = kDefaultRadius;
  m.attr("DEFAULT_MAX_POINTS") = kDefaultMaxPointNum;

  m.def("load_xyz", [](const std::filesystem::path& p) { return cloud_dict(load_xyz(p)); },
        py::arg("path"), "Read an XYZ file into a dict of numpy arrays.");
  m.def(
      "save_xyz",
      [](const std::filesystem::path& p, const Points& points, std::optional<Labels> labels,
         std::optional<Values> linearity) { save_xyz(make_cloud(points, labels, linearity), p); },
      py::arg("path"), py::arg("points"), py::arg("labels") = py::none(),
      py::arg("linearity") = py::none());
  m.def(
      "export_colored_ply",
      [](const std::filesystem::path& p, const Points& points, const Labels& labels, bool binary) {
        const LabeledCloud c(to_points(points));
        export_colored_ply(c, to_labels(labels), p,
                           binary ? PlyEncoding::binary_little_endian : PlyEncoding::ascii);
      },
      py::arg("path"), py::arg("points"), py::arg("labels"), py::arg("binary") = false);

  m.def(
      "linearity",
      [](const Points& points, double radius) {
        const LabeledCloud c(to_points(points));
        LinearityField f;
        {
          py::gil_scoped_release release;
          f = compute_linearity_field(c, build_index(c), radius);
        }
        return from_vector(f.values);
      },
      py::arg("points"), py::arg("radius") = kDefaultRadius,
      "Per-point linearity (l1 - l2) / l1 over closed-ball neighborhoods.");
  m.def(
      "radius_query",
      [](const Points& points, std::size_t center, double radius) {
        const LabeledCloud c(to_points(points));
        return from_vector(build_index(c).radius_query(center, radius).member_indices);
      },
      py::arg("points"), py::arg("center"), py::arg("radius"));

  m.def("plan_split", [](std::size_t n, std::size_t max) { return plan_split(n, max).chunk_sizes; },
        py::arg("total_points"), py::arg("max_points") = kDefaultMaxPointNum);
  m.def(
      "split",
      [](const Points& points, std::size_t max) {
        const LabeledCloud c(to_points(points));
        py::list out;
        for (const auto& ch : split(c, plan_split(c.size(), max))) out.append(from_vector(ch.original_indices));
        return out;
      },
      py::arg("points"), py::arg("max_points") = kDefaultMaxPointNum,
      "Original-index arrays of each chunk of the median split.");

  m.def("random_centroids",
        [](std::size_t n, std::size_t k, std::uint64_t seed) { return from_vector(random_centroids(n, k, seed).indices); },
        py::arg("n"), py::arg("k"), py::arg("seed") = 0);
  m.def(
      "farthest_point_sampling",
      [](const Points& points, std::size_t k, std::size_t start) {
        return from_vector(farthest_point_sampling(to_points(points), k, start).indices);
      },
      py::arg("points"), py::arg("k"), py::arg("start") = 0);

  m.def(
      "evaluate",
      [](const Labels& pred, const Labels& truth) { return report_dict(evaluate(to_labels(pred), to_labels(truth))); },
      py::arg("pred"), py::arg("truth"), "Confusion counts and every metric, wood positive.");
  m.def("tpmp", &tpmp, py::arg("total_points"), py::arg("wall_seconds"));

  m.def(
      "generate_tree",
      [](std::uint64_t seed, double pitch, std::size_t branches, std::size_t leaf_clusters,
         std::size_t leaf_points) {
        SynthTreeSpec s;
        s.seed = seed;
        s.surface_sample_pitch_m = pitch;
        s.branch_count = branches;
        s.leaf_cluster_count = leaf_clusters;
        s.leaf_points_per_cluster = leaf_points;
        return cloud_dict(generate_tree(s));
      },
      py::arg("seed") = 1, py::arg("pitch") = SynthTreeSpec{}.surface_sample_pitch_m,
      py::arg("branches") = SynthTreeSpec{}.branch_count,
      py::arg("leaf_clusters") = SynthTreeSpec{}.leaf_cluster_count,
      py::arg("leaf_points") = SynthTreeSpec{}.leaf_points_per_cluster);

  py::class_<Model>(m, "Model")
      .def_static("initial", &Model::initial, py::arg("preset") = "toy", py::arg("seed") = 1,
                  py::arg("use_linearity") = true)
      .def_static("load", &Model::load, py::arg("path"))
      .def("save", &Model::save, py::arg("path"))
      .def("fit", &Model::fit, py::arg("points"), py::arg("labels"), py::arg("linearity"),
           py::arg("epochs") = 60, py::arg("lr") = 0.001, py::arg("seed") = 1,
           py::arg("max_points") = kDefaultMaxPointNum, "Train in place; returns per-epoch losses.")
      .def("predict", &Model::predict, py::arg("points"), py::arg("linearity"),
           py::arg("max_points") = kDefaultMaxPointNum)
      .def_property_readonly("config_json", &Model::config_json)
      .def_property_readonly("parameter_count", &Model::parameter_count);
}
