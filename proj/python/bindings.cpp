#include <sstream>

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "cli.hpp"
#include "reflcausal/cesr.hpp"
#include "reflcausal/errors.hpp"
#include "reflcausal/icp.hpp"
#include "reflcausal/intervention.hpp"
#include "reflcausal/rng.hpp"
#include "reflcausal/stats.hpp"
#include "reflcausal/synthetic.hpp"

namespace py = pybind11;
using namespace reflcausal;

namespace {

py::dict test_dict(const stats::TestResult &t) {
    py::dict d;
    d["statistic"] = t.statistic;
    d["df1"] = t.df1;
    d["df2"] = t.df2 ? py::cast(*t.df2) : py::none();
    d["p_value"] = t.p_value;
    d["effect_size"] = t.effect_size ? py::cast(*t.effect_size) : py::none();
    return d;
}

// Rows of 0/1 with the outcome in the last column; labels name the columns.
BinaryDataset dataset_from_rows(const std::vector<std::vector<int>> &rows, const std::vector<std::string> &labels) {
    if (labels.empty()) throw ValidationError("labels must not be empty");
    std::vector<VariableId> vars;
    for (std::size_t c = 0; c + 1 < labels.size(); ++c) {
        const auto at = labels[c].rfind('@');
        if (at == std::string::npos) throw ValidationError("label '" + labels[c] + "' must look like NAME@ROUND");
        vars.push_back({VariableKind::SemanticPattern, labels[c].substr(0, at), std::stoi(labels[c].substr(at + 1))});
    }
    vars.push_back({VariableKind::Outcome, labels.back(), std::nullopt});
    std::vector<std::vector<std::uint8_t>> cols(labels.size());
    for (const auto &r : rows) {
        if (r.size() != labels.size()) throw ValidationError("row width differs from the label count");
        for (std::size_t c = 0; c < r.size(); ++c) {
            if (r[c] != 0 && r[c] != 1) throw ValidationError("dataset entries must be 0 or 1");
            cols[c].push_back(static_cast<std::uint8_t>(r[c]));
        }
    }
    return BinaryDataset(std::move(vars), std::move(cols), labels.size() - 1);
}

} // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Causal analysis of self-reflection trajectories";

    // Translators run newest first, so the subclass goes last.
    py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
    py::register_exception<ValidationError>(m, "ValidationError", PyExc_ValueError);

    m.def("partial_eta_squared", &stats::partial_eta_squared, py::arg("f"), py::arg("df_between"),
          py::arg("df_within"));
    m.def("levene", [](const stats::Groups &g) { return test_dict(stats::levene(g)); });
    m.def("anova_oneway", [](const stats::Groups &g) { return test_dict(stats::anova_oneway(g)); });
    m.def("cochran_q",
          [](const std::vector<std::vector<std::uint8_t>> &blocks) { return test_dict(stats::cochran_q(blocks)); });

    m.def("cvll_gain", &cvll_gain, py::arg("opt"), py::arg("base"));
    m.def("classify_stability", [](double levene_p, double anova_p, double eta) {
        return std::string(to_string(classify_stability(levene_p, anova_p, eta)));
    });

    m.def("token_jaccard", &token_jaccard);
    m.def(
        "select_representative",
        [](const std::vector<std::string> &samples, double threshold) {
            const auto r = select_representative(samples, threshold);
            return py::make_tuple(r.text, r.index, r.stats.n_clusters, r.stats.largest_size);
        },
        py::arg("samples"), py::arg("threshold") = 0.5);

    m.def(
        "run_pipeline_json",
        [](const std::vector<std::vector<int>> &rows, const std::vector<std::string> &labels, std::uint64_t seed,
           std::size_t k) {
            const auto data = dataset_from_rows(rows, labels);
            PipelineConfig cfg;
            cfg.seed = seed;
            cfg.k = k;
            py::gil_scoped_release release;
            return to_json(run_pipeline(data, cfg), data).dump();
        },
        py::arg("rows"), py::arg("labels"), py::arg("seed") = 0, py::arg("k") = 5);

    m.def(
        "synth_json",
        [](int rounds, int patterns, double density, std::size_t n, std::uint64_t seed) {
            const auto model = sample_model(rounds, patterns, density, seed);
            const auto data = forward_sample(model, n, 0, derive_seed(seed, 1));
            std::vector<std::vector<int>> rows(data.n_rows(), std::vector<int>(data.n_cols()));
            for (std::size_t r = 0; r < data.n_rows(); ++r)
                for (std::size_t c = 0; c < data.n_cols(); ++c) rows[r][c] = data.at(r, c);
            return py::make_tuple(to_json(model).dump(), data.labels(), rows);
        },
        py::arg("rounds"), py::arg("patterns"), py::arg("density"), py::arg("n"), py::arg("seed") = 0);

    m.def(
        "self_refine_json",
        [](const std::string &query, int t_max, std::size_t resample_count, std::uint64_t seed,
           const std::string &backend_spec) {
            SelfRefineConfig cfg;
            cfg.t_max = t_max;
            cfg.resample_count = resample_count;
            auto backend = make_backend(backend_spec);
            RefineRequest req;
            req.query = query;
            req.trajectory_id = "t0";
            const auto t = run_self_refine(req, cfg, *backend, {}, seed);
            std::size_t calls = 0;
            if (auto *mock = dynamic_cast<MockBackend *>(backend.get())) calls = mock->calls();
            return py::make_tuple(to_json(t).dump(), calls);
        },
        py::arg("query"), py::arg("t_max") = 5, py::arg("resample_count") = 20, py::arg("seed") = 0,
        py::arg("backend") = "mock");

    m.def(
        "cochran_from_counts_json",
        [](const std::vector<std::string> &conditions, const std::vector<std::vector<std::uint8_t>> &matrix) {
            return to_json(analyze_matrix(conditions, matrix)).dump();
        },
        py::arg("conditions"), py::arg("matrix"));

    m.def(
        "run_cli",
        [](const std::vector<std::string> &args) {
            std::ostringstream out, err;
            std::vector<std::string> argv{"reflcausal"};
            argv.insert(argv.end(), args.begin(), args.end());
            int code;
            {
                py::gil_scoped_release release;
                code = cli::run(argv, out, err);
            }
            return py::make_tuple(code, out.str(), err.str());
        },
        py::arg("args"));
}
