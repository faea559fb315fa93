#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "sumflow/data_io.hpp"
#include "sumflow/evaluation.hpp"
#include "sumflow/gradients.hpp"
#include "sumflow/overparam.hpp"
#include "sumflow/serialization.hpp"
#include "sumflow/spn.hpp"
#include "sumflow/training.hpp"

namespace py = pybind11;
using namespace sumflow;

namespace {

// The python surface keeps a network together with its chain map; the map
// is what ties deepened weights back to the mixture components they encode.
struct Model {
  Spn spn;
  std::optional<LayerIndexMap> map;
};

Dataset to_dataset(const std::vector<std::vector<int>>& rows) {
  if (rows.empty()) throw Error("dataset needs at least one row");
  const std::size_t cols = rows.front().size();
  std::vector<std::uint8_t> values;
  values.reserve(rows.size() * cols);
  for (const auto& r : rows) {
    if (r.size() != cols) throw Error("dataset rows must have equal length");
    for (int v : r) {
      if (v != 0 && v != 1) throw Error("dataset entries must be 0 or 1");
      values.push_back(static_cast<std::uint8_t>(v));
    }
  }
  return Dataset(rows.size(), static_cast<std::int32_t>(cols),
                 std::move(values));
}

// None marginalises a variable, 0/1 observe it.
Assignment to_assignment(const std::vector<std::optional<int>>& row) {
  std::vector<ObsValue> v;
  v.reserve(row.size());
  for (const auto& e : row) {
    if (!e.has_value())
      v.push_back(ObsValue::kMarginalized);
    else if (*e == 0)
      v.push_back(ObsValue::kZero);
    else if (*e == 1)
      v.push_back(ObsValue::kOne);
    else
      throw Error("assignment entries must be 0, 1 or None");
  }
  return Assignment(std::move(v));
}

py::dict trace_to_dict(const TrainTrace& trace) {
  py::dict d;
  d["llh"] = trace.llh;
  d["clamp_events"] = trace.clamp_events;
  d["wall_ms"] = trace.wall_ms;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "sum-product mixtures: evaluation, gradient ascent and the "
            "depth transform";

  py::register_exception<Error>(m, "SumflowError");

  py::class_<Model>(m, "Model")
      .def_static(
          "mixture",
          [](const std::vector<double>& weights,
             const std::vector<std::vector<double>>& leaf_p) {
            return Model{build_mixture(weights, leaf_p), std::nullopt};
          },
          py::arg("weights"), py::arg("leaf_p"),
          "Shallow mixture: one component per weight, Bernoulli leaves "
          "under a product per component.")
      .def_static(
          "random_mixture",
          [](std::int32_t components, std::int32_t dims, std::uint64_t seed) {
            Rng rng(splitmix64(seed));
            Model m{build_shallow_mixture(components, dims, rng),
                    std::nullopt};
            std::vector<double> w(
                static_cast<std::size_t>(components));
            double total = 0.0;
            for (double& v : w) {
              v = rng.uniform(0.2, 1.0);
              total += v;
            }
            for (double& v : w) v /= total;
            m.spn.set_weights_flat(w);
            return m;
          },
          py::arg("components"), py::arg("dims"), py::arg("seed"),
          "Random Bernoulli leaves and random normalised root weights.")
      .def_static(
          "from_json",
          [](const std::string& text) {
            ParsedModel parsed = deserialize(text);
            return Model{std::move(parsed.spn), std::move(parsed.layer_map)};
          },
          py::arg("text"))
      .def("to_json",
           [](const Model& self) {
             return serialize(self.spn, self.map ? &*self.map : nullptr);
           })
      .def("deepen",
           [](const Model& self, std::int32_t layers, std::int32_t branching) {
             DeepMixture deep = overparameterize(self.spn, layers, branching);
             return Model{std::move(deep.spn), std::move(deep.map)};
           },
           py::arg("layers"), py::arg("branching") = 1,
           "Replace every root edge by a chain of `layers` sum edges "
           "(grouped b-fold when branching > 1) without changing the "
           "encoded distribution family.")
      .def("match_weights",
           [](Model& self, const std::vector<double>& targets) {
             if (!self.map) throw Error("model has no chain map");
             match_weights(self.spn, *self.map, targets);
           },
           py::arg("targets"),
           "Set chain weights so every effective weight equals its target.")
      .def("effective_weights",
           [](const Model& self) {
             if (!self.map) throw Error("model has no chain map");
             return effective_weights(self.spn, *self.map);
           },
           "Per component, the product of the weights along its chain.")
      .def("init_near_zero",
           [](Model& self, double scale, std::uint64_t seed) {
             Rng rng(splitmix64(seed));
             initialize_near_zero(self.spn, scale, rng);
           },
           py::arg("scale"), py::arg("seed"))
      .def("log_value",
           [](const Model& self, const std::vector<std::optional<int>>& row) {
             return log_value(self.spn, to_assignment(row)).root_log_value;
           },
           py::arg("row"), "Log of the unnormalised network value.")
      .def("log_partition",
           [](const Model& self) { return log_partition(self.spn); })
      .def("log_likelihood",
           [](const Model& self, const std::vector<std::vector<int>>& rows) {
             return log_likelihood(self.spn, to_dataset(rows)).value;
           },
           py::arg("data"), "Total normalised data log likelihood.")
      .def("gradients",
           [](const Model& self, const std::vector<std::vector<int>>& rows) {
             const GradientMap res = llh_gradients(self.spn, to_dataset(rows));
             const auto g = res.values();
             return std::vector<double>(g.begin(), g.end());
           },
           py::arg("data"),
           "Likelihood gradient per sum edge, aligned with sum_edges().")
      .def("sum_edges",
           [](const Model& self) {
             std::vector<std::pair<std::uint32_t, std::uint32_t>> edges;
             for (const EdgeRef& e : self.spn.sum_edges())
               edges.emplace_back(e.node, e.child);
             return edges;
           })
      .def_property(
          "weights",
          [](const Model& self) { return self.spn.weights_flat(); },
          [](Model& self, const std::vector<double>& w) {
            self.spn.set_weights_flat(w);
          })
      .def("validate",
           [](const Model& self) {
             std::vector<std::string> out;
             for (const Violation& v : self.spn.validate())
               out.push_back(v.to_string());
             return out;
           })
      .def("count_trees",
           [](const Model& self) { return count_induced_trees(self.spn); })
      .def_property_readonly(
          "num_variables",
          [](const Model& self) { return self.spn.num_variables(); })
      .def_property_readonly(
          "node_count",
          [](const Model& self) { return self.spn.node_count(); })
      .def("__repr__", [](const Model& self) {
        return "<sumflow.Model with " + std::to_string(self.spn.node_count()) +
               " nodes, " + std::to_string(self.spn.sum_edge_count()) +
               " sum edges>";
      });

  m.def(
      "train",
      [](Model& model, const std::vector<std::vector<int>>& rows, double eta,
         std::int64_t iterations, double clamp_floor, bool train_leaves,
         const std::string& gradient_scale) {
        TrainConfig cfg;
        cfg.eta = eta;
        cfg.iterations = iterations;
        cfg.clamp_floor = clamp_floor;
        cfg.train_leaves = train_leaves;
        if (gradient_scale == "total")
          cfg.gradient_scale = GradientScale::kTotal;
        else if (gradient_scale != "mean")
          throw Error("gradient_scale must be 'mean' or 'total'");
        const Dataset data = to_dataset(rows);
        return trace_to_dict(
            train(model.spn, data, cfg, model.map ? &*model.map : nullptr));
      },
      py::arg("model"), py::arg("data"), py::arg("eta") = 0.01,
      py::arg("iterations") = 500, py::arg("clamp_floor") = 1e-8,
      py::arg("train_leaves") = false, py::arg("gradient_scale") = "mean",
      "Gradient ascent on the weights in place; returns the llh curve.");

  m.def(
      "synthesize",
      [](std::int32_t components, std::int32_t dims, std::size_t samples,
         std::uint64_t seed) {
        const Synthesis s = synthesize(components, dims, samples, seed);
        std::vector<std::vector<int>> rows(s.data.rows(),
                                           std::vector<int>(s.data.cols()));
        for (std::size_t n = 0; n < s.data.rows(); ++n)
          for (std::int32_t d = 0; d < s.data.cols(); ++d)
            rows[n][d] = s.data.at(n, d);
        return rows;
      },
      py::arg("components") = 8, py::arg("dims") = 16,
      py::arg("samples") = 16181, py::arg("seed") = 20240101,
      "Sample binary rows from a random ground-truth mixture.");

  m.def(
      "run_experiment",
      [](const std::vector<std::vector<int>>& rows, std::int32_t components,
         const std::vector<std::int32_t>& depths, std::int32_t branching,
         std::int32_t runs, double eta, std::int64_t iterations,
         double init_scale, std::uint64_t seed, double threshold_nats) {
        ExperimentConfig cfg;
        cfg.components = components;
        cfg.depths = depths;
        cfg.branching = branching;
        cfg.runs = runs;
        cfg.eta = eta;
        cfg.iterations = iterations;
        cfg.init_scale = init_scale;
        cfg.seed = seed;
        cfg.threshold_nats = threshold_nats;
        const ExperimentResult r = run_experiment(to_dataset(rows), cfg);
        py::list cells;
        for (const ExperimentCell& c : r.cells) {
          py::dict d;
          d["depth"] = c.depth;
          d["run"] = c.run;
          d["seed"] = c.seed;
          d["iterations_to_threshold"] = c.iterations_to_threshold;
          d["final_llh_per_sample"] = c.final_llh_per_sample;
          d["llh"] = c.trace.llh;
          cells.append(std::move(d));
        }
        py::dict out;
        out["depths"] = r.depths;
        out["mean_iterations_to_threshold"] = r.mean_iterations_to_threshold;
        out["cells"] = std::move(cells);
        return out;
      },
      py::arg("data"), py::arg("components") = 8,
      py::arg("depths") = std::vector<std::int32_t>{1, 2, 3},
      py::arg("branching") = 1, py::arg("runs") = 2, py::arg("eta") = 0.01,
      py::arg("iterations") = 500, py::arg("init_scale") = 0.2,
      py::arg("seed") = 20240101, py::arg("threshold_nats") = 0.1,
      "Depth sweep on one dataset; deeper parameterisations of the same "
      "mixture should reach their final likelihood in fewer iterations.");

#ifdef SUMFLOW_VERSION_INFO
  m.attr("__version__") = SUMFLOW_VERSION_INFO;
#else
  m.attr("__version__") = "dev";
#endif
}
