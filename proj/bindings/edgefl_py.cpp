#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "edgefl/data.hpp"
#include "edgefl/errors.hpp"
#include "edgefl/fedavg.hpp"
#include "edgefl/partitioner.hpp"
#include "edgefl/rng.hpp"
#include "edgefl/trainer.hpp"
#include "edgefl/weights.hpp"

namespace py = pybind11;
using namespace edgefl;

PYBIND11_MODULE(edgefl, m) {
    m.doc() = "EdgeFL core operations: model weights, training, partitioning, FedAvg baseline";

    py::register_exception<Error>(m, "EdgeflError");

    py::class_<WeightEntry>(m, "WeightEntry")
        .def(py::init<>())
        .def(py::init([](std::string name, std::vector<uint32_t> shape, std::vector<float> data) {
                 return WeightEntry{std::move(name), std::move(shape), std::move(data)};
             }),
             py::arg("name"), py::arg("shape"), py::arg("data"))
        .def_readwrite("name", &WeightEntry::name)
        .def_readwrite("shape", &WeightEntry::shape)
        .def_readwrite("data", &WeightEntry::data);

    py::class_<WeightSet>(m, "WeightSet")
        .def(py::init<>())
        .def_readwrite("entries", &WeightSet::entries)
        .def_readwrite("version", &WeightSet::version)
        .def_readwrite("producer", &WeightSet::producer)
        .def_readwrite("produced_at_ms", &WeightSet::produced_at_ms)
        .def("shape_compatible", &WeightSet::shape_compatible);

    m.def("average", &average, py::arg("inputs"), py::arg("weights") = std::nullopt,
          py::arg("producer") = std::string{});
    m.def(
        "serialize",
        [](const WeightSet& w) {
            const auto bytes = serialize(w);
            return py::bytes(reinterpret_cast<const char*>(bytes.data()), bytes.size());
        },
        py::arg("weights"));
    m.def(
        "deserialize",
        [](const py::bytes& b) {
            const std::string s = b;
            return deserialize(reinterpret_cast<const uint8_t*>(s.data()), s.size());
        },
        py::arg("bytes"));

    py::class_<Dataset>(m, "Dataset")
        .def(py::init<>())
        .def_readwrite("features", &Dataset::features)
        .def_readwrite("feature_dim", &Dataset::feature_dim)
        .def_readwrite("labels", &Dataset::labels)
        .def_readwrite("class_count", &Dataset::class_count)
        .def("__len__", &Dataset::size);

    m.def("subset", &subset, py::arg("dataset"), py::arg("indices"));
    m.def("split_train_test", &split_train_test, py::arg("dataset"), py::arg("test_fraction"),
          py::arg("seed"));

    py::enum_<ModelKind>(m, "ModelKind")
        .value("softmax_linear", ModelKind::softmax_linear)
        .value("mlp", ModelKind::mlp);

    py::class_<ModelSpec>(m, "ModelSpec")
        .def(py::init<>())
        .def_readwrite("kind", &ModelSpec::kind)
        .def_readwrite("feature_dim", &ModelSpec::feature_dim)
        .def_readwrite("class_count", &ModelSpec::class_count)
        .def_readwrite("hidden_dims", &ModelSpec::hidden_dims)
        .def_readwrite("init_seed", &ModelSpec::init_seed);

    py::class_<TrainConfig>(m, "TrainConfig")
        .def(py::init<>())
        .def_readwrite("batch_size", &TrainConfig::batch_size)
        .def_readwrite("local_epochs", &TrainConfig::local_epochs)
        .def_readwrite("learning_rate", &TrainConfig::learning_rate)
        .def_readwrite("shuffle_seed", &TrainConfig::shuffle_seed);

    m.def("init_weights", &init_weights, py::arg("spec"));
    m.def("node_training", &node_training, py::arg("weights"), py::arg("data"), py::arg("config"));
    m.def("evaluate", &evaluate, py::arg("weights"), py::arg("data"));
    m.def(
        "loss_and_grad",
        [](const WeightSet& w, const Dataset& batch) {
            const LossGrad lg = loss_and_grad(w, batch);
            return py::make_tuple(lg.loss, lg.grad);
        },
        py::arg("weights"), py::arg("batch"));

    py::enum_<PartitionScheme>(m, "PartitionScheme")
        .value("uniform", PartitionScheme::uniform)
        .value("normal", PartitionScheme::normal);

    py::class_<PartitionPlan>(m, "PartitionPlan")
        .def(py::init<>())
        .def_readwrite("scheme", &PartitionPlan::scheme)
        .def_readwrite("node_count", &PartitionPlan::node_count)
        .def_readwrite("seed", &PartitionPlan::seed)
        .def_readwrite("spread", &PartitionPlan::spread)
        .def_readwrite("assignments", &PartitionPlan::assignments)
        .def_readwrite("class_histogram", &PartitionPlan::class_histogram);

    m.def("partition_uniform", &partition_uniform, py::arg("labels"), py::arg("class_count"),
          py::arg("node_count"), py::arg("seed"));
    m.def("partition_normal", &partition_normal, py::arg("labels"), py::arg("class_count"),
          py::arg("node_count"), py::arg("seed"), py::arg("spread") = 0.2);
    m.def("normal_class_proportions", &normal_class_proportions, py::arg("class_count"),
          py::arg("node_count"), py::arg("node_id"), py::arg("spread") = 0.2);
    m.def("generate_blobs", &generate_blobs, py::arg("classes"), py::arg("per_class"),
          py::arg("feature_dim"), py::arg("separation"), py::arg("seed"));
    m.def("load_idx", &load_idx, py::arg("images_path"), py::arg("labels_path"));
    m.def("plan_to_json", &plan_to_json, py::arg("plan"));
    m.def("plan_from_json", &plan_from_json, py::arg("json_text"));

    py::class_<FedAvgRound>(m, "FedAvgRound")
        .def_readonly("global_weights", &FedAvgRound::global)
        .def_readonly("node_accuracy", &FedAvgRound::node_accuracy);

    py::class_<FedAvgResult>(m, "FedAvgResult").def_readonly("rounds", &FedAvgResult::rounds);

    py::class_<FedAvgConfig>(m, "FedAvgConfig")
        .def(py::init<>())
        .def_readwrite("node_count", &FedAvgConfig::node_count)
        .def_readwrite("client_fraction", &FedAvgConfig::client_fraction)
        .def_readwrite("rounds", &FedAvgConfig::rounds)
        .def_readwrite("train", &FedAvgConfig::train)
        .def_readwrite("model", &FedAvgConfig::model)
        .def_readwrite("partition", &FedAvgConfig::partition)
        .def_readwrite("seed", &FedAvgConfig::seed)
        .def_readwrite("test_fraction", &FedAvgConfig::test_fraction);

    m.def("run_fedavg", &run_fedavg, py::arg("config"), py::arg("data"));

    m.def(
        "derive_experiment_seeds",
        [](uint64_t experiment_seed) {
            const ExperimentSeeds s = derive_experiment_seeds(experiment_seed);
            return py::make_tuple(s.shuffle_seed, s.split_seed);
        },
        py::arg("experiment_seed"));
}
