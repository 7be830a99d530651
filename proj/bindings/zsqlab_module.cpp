// Copyright 2026 The zsqlab Authors
// Licensed under the Apache License, Version 2.0
//
// Python bindings for the main lab operations: the quantizer, the
// distillation losses, GI scheduling/search plumbing, the Hessian tooling,
// and the experiment driver.

#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "zsq/config.hpp"
#include "zsq/diag.hpp"
#include "zsq/experiment.hpp"
#include "zsq/losses.hpp"
#include "zsq/quant.hpp"
#include "zsq/selftest.hpp"

namespace py = pybind11;
using namespace zsq;

namespace {

Tensor matrix_tensor(const std::vector<std::vector<double>>& rows) {
  ZSQ_CHECK(!rows.empty() && !rows[0].empty(), "matrix must be nonempty");
  Tensor t({rows.size(), rows[0].size()});
  for (std::size_t r = 0; r < rows.size(); ++r) {
    ZSQ_CHECK(rows[r].size() == rows[0].size(), "ragged matrix");
    for (std::size_t c = 0; c < rows[r].size(); ++c) t.at(r, c) = rows[r][c];
  }
  return t;
}

HvpFn matrix_hvp(const std::vector<std::vector<double>>& a) {
  const Tensor m = matrix_tensor(a);
  ZSQ_CHECK(m.rows() == m.cols(), "matrix must be square");
  return [m](const std::vector<double>& v) {
    ZSQ_CHECK(v.size() == m.rows(), "vector size mismatch");
    std::vector<double> out(v.size(), 0.0);
    for (std::size_t r = 0; r < m.rows(); ++r)
      for (std::size_t c = 0; c < m.cols(); ++c) out[r] += m.at(r, c) * v[c];
    return out;
  };
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "zsqlab: zero-shot quantization laboratory (C++ core)";

  // --- quantizer -----------------------------------------------------------
  m.def(
      "quant_params",
      [](double theta_min, double theta_max, int bits) {
        const AffineParams p = quant_params(theta_min, theta_max, bits);
        return py::make_tuple(p.scale, p.zero);
      },
      py::arg("theta_min"), py::arg("theta_max"), py::arg("bits"),
      "Scale S and offset z of the symmetric uniform quantizer.");
  m.def(
      "quantize",
      [](const std::vector<double>& values, double theta_min, double theta_max, int bits) {
        const AffineParams p = quant_params(theta_min, theta_max, bits);
        return quantize(Tensor({values.size()}, values), p, bits);
      },
      py::arg("values"), py::arg("theta_min"), py::arg("theta_max"), py::arg("bits"));
  m.def(
      "dequantize",
      [](const std::vector<std::int32_t>& q, double theta_min, double theta_max, int bits) {
        const AffineParams p = quant_params(theta_min, theta_max, bits);
        return dequantize(q, {q.size()}, p).vec();
      },
      py::arg("q"), py::arg("theta_min"), py::arg("theta_max"), py::arg("bits"));
  m.def(
      "fake_quant",
      [](const std::vector<double>& values, int bits) {
        QuantizedLayerState st;
        return fake_quant_forward(Tensor({values.size()}, values), bits, st).vec();
      },
      py::arg("values"), py::arg("bits"),
      "Quantize-then-dequantize with parameters fitted to the tensor.");
  m.def(
      "count_threshold_crossings",
      [](const std::vector<std::int32_t>& a, const std::vector<std::int32_t>& b) {
        return count_threshold_crossings(a, b);
      },
      py::arg("before"), py::arg("after"));

  // --- losses ---------------------------------------------------------------
  m.def(
      "cross_entropy",
      [](const std::vector<std::vector<double>>& logits, const std::vector<int>& labels) {
        return cross_entropy(matrix_tensor(logits), labels);
      },
      py::arg("logits"), py::arg("labels"));
  m.def(
      "kl_divergence",
      [](const std::vector<std::vector<double>>& student,
         const std::vector<std::vector<double>>& teacher, double temperature) {
        return kl_divergence(matrix_tensor(student), matrix_tensor(teacher), temperature);
      },
      py::arg("student_logits"), py::arg("teacher_logits"), py::arg("temperature") = 1.0);
  m.def(
      "smooth_labels",
      [](const std::vector<int>& labels, double c, int classes) {
        const Tensor t = smooth_labels(labels, c, classes);
        std::vector<std::vector<double>> out(t.rows(), std::vector<double>(t.cols()));
        for (std::size_t r = 0; r < t.rows(); ++r)
          for (std::size_t col = 0; col < t.cols(); ++col) out[r][col] = t.at(r, col);
        return out;
      },
      py::arg("labels"), py::arg("c"), py::arg("classes"));

  // --- gradient inundation ---------------------------------------------------
  m.def(
      "rho_schedule",
      [](int epoch, double rho0, double decay_factor, int decay_interval) {
        GIConfig cfg;
        cfg.rho0 = rho0;
        cfg.decay_factor = decay_factor;
        cfg.decay_interval = decay_interval;
        return rho_schedule(epoch, cfg);
      },
      py::arg("epoch"), py::arg("rho0") = 0.01, py::arg("decay_factor") = 0.1,
      py::arg("decay_interval") = 100);
  m.def(
      "target_count",
      [](double rho, std::size_t dim) { return rho * static_cast<double>(dim); },
      py::arg("rho"), py::arg("dim"));

  // --- Hessian tooling --------------------------------------------------------
  m.def(
      "hutchinson_trace",
      [](const std::vector<std::vector<double>>& matrix, int probes, std::uint64_t seed) {
        const TraceEstimate est =
            hutchinson_trace(matrix_hvp(matrix), matrix.size(), probes, seed);
        return py::make_tuple(est.trace, est.std_error);
      },
      py::arg("matrix"), py::arg("probes") = 1000, py::arg("seed") = 0);
  m.def(
      "lanczos_eigenvalues",
      [](const std::vector<std::vector<double>>& matrix, int m_steps, std::uint64_t seed) {
        return lanczos_spectrum(matrix_hvp(matrix), matrix.size(), m_steps, seed).ritz;
      },
      py::arg("matrix"), py::arg("m"), py::arg("seed") = 0);
  m.def(
      "grad_cosine",
      [](const std::vector<double>& a, const std::vector<double>& b) -> py::object {
        const auto c = grad_cosine(a, b);
        if (!c) return py::none();
        return py::float_(*c);
      },
      py::arg("a"), py::arg("b"));

  // --- experiment driver --------------------------------------------------------
  m.def("default_config", []() { return canonical_config(default_config()); });
  m.def(
      "config_hash",
      [](const std::string& text) { return config_hash_hex(parse_config_text(text)); },
      py::arg("config_text"));
  m.def(
      "run_experiment",
      [](const std::string& config_text, const std::string& out_dir) {
        const ExperimentConfig cfg = parse_config_text(config_text);
        LabContext ctx = make_context(cfg);
        RunRecord rec = run_experiment(cfg, ctx.teacher, ctx.data, out_dir);
        py::dict d;
        d["arm"] = rec.arm;
        d["seed"] = rec.seed;
        d["config_hash"] = rec.config_hash;
        d["final_val_acc"] = rec.final_val_acc;
        d["final_train_acc"] = rec.final_train_acc;
        d["final_kl"] = rec.final_kl;
        d["teacher_train_acc"] = ctx.teacher_train_acc;
        d["aborted"] = rec.aborted;
        d["epochs_run"] = rec.metrics.size();
        return d;
      },
      py::arg("config_text"), py::arg("out_dir") = std::string(),
      "Pretrains the teacher, runs the configured arm, returns the summary.");
  m.def("selftest", []() {
    py::list results;
    bool all = true;
    for (const auto& r : run_selftests()) {
      py::dict d;
      d["name"] = r.name;
      d["pass"] = r.pass;
      results.append(d);
      all = all && r.pass;
    }
    return py::make_tuple(all, results);
  });

  m.attr("__version__") = "0.1.0";
}
