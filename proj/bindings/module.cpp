// Python bindings for the streaming dynamic-tree engine. The surface mirrors
// the C++ API: configure a cloud, feed it observations one at a time, query
// predictions, and round-trip the full state through bytes.

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "streamtree/smc.hpp"
#include "streamtree/streams.hpp"

namespace py = pybind11;
using namespace streamtree;

namespace {

std::vector<Observation> make_observations(const Eigen::MatrixXd& X,
                                           const Eigen::VectorXd& y, Task task,
                                           std::int64_t t0) {
  if (X.rows() != y.size())
    throw std::invalid_argument("X and y must have the same number of rows");
  std::vector<Observation> out;
  out.reserve(static_cast<std::size_t>(X.rows()));
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    Observation obs;
    obs.x = X.row(i).transpose();
    obs.t = t0 + i;
    if (task == Task::kClassification)
      obs.label = static_cast<int>(y[i]);
    else
      obs.y = y[i];
    out.push_back(std::move(obs));
  }
  return out;
}

}  // namespace

PYBIND11_MODULE(_streamtree, m) {
  m.doc() = "Streaming dynamic trees with datapoint retirement";

  py::enum_<Task>(m, "Task")
      .value("regression", Task::kRegression)
      .value("classification", Task::kClassification);

  py::enum_<LeafModel>(m, "LeafModel")
      .value("constant", LeafModel::kConstant)
      .value("linear", LeafModel::kLinear)
      .value("multinomial", LeafModel::kMultinomial);

  py::enum_<DiscardPolicy>(m, "DiscardPolicy")
      .value("historical", DiscardPolicy::kHistorical)
      .value("random", DiscardPolicy::kRandom)
      .value("alc", DiscardPolicy::kAlc)
      .value("entropy", DiscardPolicy::kEntropy);

  py::class_<CloudConfig>(m, "CloudConfig")
      .def(py::init([](Task task, LeafModel leaf_model, int particles,
                       std::int64_t capacity, double lambda_, DiscardPolicy policy,
                       int n_classes, std::uint64_t seed) {
             CloudConfig cfg;
             cfg.task = task;
             cfg.leaf_model = leaf_model;
             cfg.n_particles = particles;
             cfg.capacity = capacity;
             cfg.lambda = lambda_;
             cfg.policy = policy;
             cfg.n_classes = n_classes;
             cfg.seed = seed;
             return cfg;
           }),
           py::arg("task") = Task::kRegression,
           py::arg("leaf_model") = LeafModel::kLinear, py::arg("particles") = 100,
           py::arg("capacity") = 200, py::arg("lam") = 1.0,
           py::arg("policy") = DiscardPolicy::kHistorical, py::arg("n_classes") = 2,
           py::arg("seed") = 1)
      .def_readwrite("task", &CloudConfig::task)
      .def_readwrite("leaf_model", &CloudConfig::leaf_model)
      .def_readwrite("particles", &CloudConfig::n_particles)
      .def_readwrite("capacity", &CloudConfig::capacity)
      .def_readwrite("lam", &CloudConfig::lambda)
      .def_readwrite("policy", &CloudConfig::policy)
      .def_readwrite("n_classes", &CloudConfig::n_classes)
      .def_readwrite("seed", &CloudConfig::seed);

  py::class_<Prediction>(m, "Prediction")
      .def_readonly("mean", &Prediction::mean)
      .def_readonly("variance", &Prediction::variance)
      .def_readonly("probs", &Prediction::probs);

  py::class_<ParticleCloud>(m, "ParticleCloud")
      .def_static(
          "init",
          [](const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
             const CloudConfig& cfg) {
            return ParticleCloud::init(make_observations(X, y, cfg.task, 0), cfg);
          },
          py::arg("X"), py::arg("y"), py::arg("config"),
          "Initialise the particle cloud from a first batch of rows.")
      .def(
          "update",
          [](ParticleCloud& self, const Eigen::VectorXd& x, double y) {
            Observation obs;
            obs.x = x;
            obs.t = self.step();
            if (self.config().task == Task::kClassification)
              obs.label = static_cast<int>(y);
            else
              obs.y = y;
            self.update(obs);
          },
          py::arg("x"), py::arg("y"),
          "Absorb one observation (resample, propagate, retire if over budget).")
      .def("predict", &ParticleCloud::predict, py::arg("x"))
      .def(
          "predict_mean",
          [](const ParticleCloud& self, const Eigen::MatrixXd& X) {
            Eigen::VectorXd out(X.rows());
            for (Eigen::Index i = 0; i < X.rows(); ++i)
              out[i] = self.predict(X.row(i).transpose()).mean;
            return out;
          },
          py::arg("X"), "Posterior predictive mean for each row of X.")
      .def("log_predictive_density", &ParticleCloud::log_predictive_density,
           py::arg("x"), py::arg("y"))
      .def_property_readonly("step", &ParticleCloud::step)
      .def_property_readonly("pool_size", &ParticleCloud::pool_size)
      .def_property_readonly("mean_height", &ParticleCloud::mean_height)
      .def_property_readonly("config", &ParticleCloud::config)
      .def("to_bytes",
           [](const ParticleCloud& self) {
             std::ostringstream out(std::ios::binary);
             self.save(out);
             return py::bytes(out.str());
           })
      .def_static("from_bytes", [](const py::bytes& blob) {
        std::istringstream in(std::string(blob), std::ios::binary);
        return ParticleCloud::load(in);
      });

  m.def("friedman_mean", &friedman_mean, py::arg("x"), py::arg("a") = 1.0);
  m.def(
      "gen_friedman",
      [](std::int64_t n, std::uint64_t seed, double noise_sd) {
        auto obs = gen_friedman(n, seed, {}, noise_sd);
        Eigen::MatrixXd X(n, 5);
        Eigen::VectorXd y(n);
        for (std::int64_t i = 0; i < n; ++i) {
          X.row(i) = obs[static_cast<std::size_t>(i)].x.transpose();
          y[i] = obs[static_cast<std::size_t>(i)].y;
        }
        return py::make_tuple(X, y);
      },
      py::arg("n"), py::arg("seed"), py::arg("noise_sd") = 1.0,
      "Friedman benchmark stream; returns (X, y).");
  m.def(
      "gen_moving_xor",
      [](std::int64_t n, std::uint64_t seed, double rotation_rate, double blob_sd) {
        auto obs = gen_moving_xor(n, seed, rotation_rate, blob_sd);
        Eigen::MatrixXd X(n, 2);
        Eigen::VectorXd y(n);
        for (std::int64_t i = 0; i < n; ++i) {
          X.row(i) = obs[static_cast<std::size_t>(i)].x.transpose();
          y[i] = obs[static_cast<std::size_t>(i)].label;
        }
        return py::make_tuple(X, y);
      },
      py::arg("n"), py::arg("seed"), py::arg("rotation_rate"),
      py::arg("blob_sd") = 0.5, "Rotating fuzzy-XOR stream; returns (X, labels).");
}
