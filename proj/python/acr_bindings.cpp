#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "acr/buffer.hpp"
#include "acr/confidence.hpp"
#include "acr/data.hpp"
#include "acr/evaluate.hpp"
#include "acr/harness.hpp"
#include "acr/model.hpp"
#include "acr/rng.hpp"

namespace py = pybind11;
using namespace acr;

namespace {

Tensor tensor_from_rows(const std::vector<std::vector<double>>& rows, const char* what) {
    if (rows.empty()) {
        throw std::invalid_argument(std::string(what) + ": empty matrix");
    }
    const std::size_t cols = rows[0].size();
    std::vector<double> flat;
    flat.reserve(rows.size() * cols);
    for (const auto& row : rows) {
        if (row.size() != cols) {
            throw std::invalid_argument(std::string(what) + ": ragged rows");
        }
        flat.insert(flat.end(), row.begin(), row.end());
    }
    return Tensor::from_values({rows.size(), cols}, std::move(flat));
}

py::dict row_to_dict(const SummaryRow& row) {
    py::dict d;
    d["policy"] = row.policy;
    d["seed"] = row.seed;
    d["acc_iid"] = row.acc_iid;
    d["bwt_iid"] = row.bwt_iid;
    d["acc_ood"] = row.acc_ood;
    d["bwt_ood"] = row.bwt_ood;
    d["cv_tasks"] = row.cv_tasks;
    d["cv_classes"] = row.cv_classes;
    return d;
}

}  // namespace

PYBIND11_MODULE(_acr, m) {
    m.doc() = "Replay-based continual learning on synthetic task streams";

    py::enum_<InputKind>(m, "InputKind")
            .value("vector", InputKind::Vector)
            .value("image", InputKind::Image);

    py::class_<Sample>(m, "Sample")
            .def_readonly("id", &Sample::id)
            .def_readonly("features", &Sample::features)
            .def_readonly("label", &Sample::label)
            .def_readonly("task_id", &Sample::task_id);

    py::class_<Task>(m, "Task")
            .def_readonly("id", &Task::id)
            .def_readonly("classes", &Task::classes)
            .def_readonly("train", &Task::train)
            .def_readonly("test", &Task::test);

    py::class_<TaskStream>(m, "TaskStream")
            .def_readonly("kind", &TaskStream::kind)
            .def_readonly("dim", &TaskStream::dim)
            .def_readonly("side", &TaskStream::side)
            .def_readonly("tasks", &TaskStream::tasks)
            .def("total_classes", &TaskStream::total_classes);

    m.def("make_synthetic_stream", &make_synthetic_stream, py::arg("tasks"),
          py::arg("classes_per_task"), py::arg("samples_per_class"), py::arg("dim"),
          py::arg("seed"), py::arg("margin") = 3.0,
          "Gaussian-blob vector classes split 80/20 per class");
    m.def("make_image_stream", &make_image_stream, py::arg("tasks"),
          py::arg("classes_per_task"), py::arg("side"), py::arg("seed"),
          py::arg("samples_per_class") = 250, py::arg("jitter") = 1.0,
          py::arg("outlier_fraction") = 0.08,
          "Procedural grayscale glyph classes with per-sample jitter");
    m.def("cache_stream", &cache_stream, py::arg("stream"), py::arg("dir"));
    m.def("load_stream_cache", &load_stream_cache, py::arg("dir"));

    m.def(
            "corrupt",
            [](const std::vector<Sample>& test_set, const std::string& spec,
               std::size_t side, std::uint32_t seed) {
                const CorruptionSpec parsed = parse_corruption(spec);
                std::mt19937 rng = seeded_rng(seed, "corrupt-" + corruption_label(parsed));
                return corrupt(test_set, parsed, side, rng);
            },
            py::arg("test_set"), py::arg("spec"), py::arg("side"), py::arg("seed") = 0,
            "Apply a kind:severity corruption to every sample of a test set");

    m.def(
            "pcl_loss",
            [](const std::vector<std::vector<double>>& z,
               const std::vector<std::size_t>& labels,
               const std::vector<std::vector<double>>& proxies, double tau) {
                return pcl_loss(tensor_from_rows(z, "z"), labels,
                                tensor_from_rows(proxies, "proxies"), tau)
                        .value();
            },
            py::arg("z"), py::arg("labels"), py::arg("proxies"), py::arg("tau") = 1.0,
            "Contrastive loss over the proxies of the classes in the batch");
    m.def(
            "ce_loss",
            [](const std::vector<std::vector<double>>& z,
               const std::vector<std::size_t>& labels,
               const std::vector<std::vector<double>>& proxies) {
                return ce_loss(tensor_from_rows(z, "z"), labels,
                               tensor_from_rows(proxies, "proxies"))
                        .value();
            },
            py::arg("z"), py::arg("labels"), py::arg("proxies"),
            "Softmax cross-entropy against every known class");

    m.def(
            "confidence_variance",
            [](const std::vector<double>& gammas) {
                if (gammas.empty()) {
                    throw std::invalid_argument("confidence_variance: empty history");
                }
                ConfidenceLedger ledger(gammas.size(), 0);
                for (std::size_t e = 0; e < gammas.size(); ++e) {
                    ledger.record(0, e + 1, {gammas[e], 1.0 - gammas[e]}, 0);
                }
                return ledger.variance(0);
            },
            py::arg("gammas"),
            "Population variance of a per-epoch confidence history");

    m.def("class_quotas", &class_quotas, py::arg("capacity"), py::arg("task_classes"),
          "Even per-class buffer slots with round-robin remainder");
    m.def("coefficient_of_variation", &coefficient_of_variation, py::arg("counts"),
          "(population std / mean) * 100; NaN when every count is zero");

    py::class_<AccuracyMatrix>(m, "AccuracyMatrix")
            .def(py::init<std::size_t>(), py::arg("tasks"))
            .def("set", &AccuracyMatrix::set, py::arg("stage"), py::arg("task"),
                 py::arg("accuracy"))
            .def("at", &AccuracyMatrix::at, py::arg("stage"), py::arg("task"))
            .def("has", &AccuracyMatrix::has, py::arg("stage"), py::arg("task"))
            .def("task_count", &AccuracyMatrix::task_count)
            .def("write_csv", &AccuracyMatrix::write_csv, py::arg("path"));
    m.def("acc", &acc, py::arg("matrix"), "Mean of the final row");
    m.def(
            "bwt", [](const AccuracyMatrix& matrix) { return bwt(matrix); },
            py::arg("matrix"),
            "Mean accuracy change on earlier tasks; None for a single task");

    m.def("gradcheck_max_error", &gradcheck_max_error, py::arg("configurations") = 20,
          py::arg("seed") = 0,
          "Worst relative error between backprop and finite differences");

    m.def("default_config", [] { return config_to_json_text(RunConfig{}); },
          "The default run configuration as a JSON string");
    m.def(
            "run_experiment",
            [](const std::string& config_json) {
                const RunConfig config = config_from_json_text(config_json, "config");
                const ExperimentResult result = ::acr::run_experiment(config);
                py::list rows;
                for (const SummaryRow& row : result.rows) rows.append(row_to_dict(row));
                return rows;
            },
            py::arg("config_json"),
            "Run the full per-seed protocol; returns the summary rows");
}
