// Copyright 2026 The zsqlab Authors
// Licensed under the Apache License, Version 2.0

#include "zsq/selftest.hpp"

#include <cmath>

#include "zsq/config.hpp"
#include "zsq/dataset.hpp"
#include "zsq/diag.hpp"
#include "zsq/gi.hpp"
#include "zsq/losses.hpp"
#include "zsq/model.hpp"
#include "zsq/optim.hpp"
#include "zsq/quant.hpp"
#include "zsq/rng.hpp"

namespace zsq {

namespace {

void check(std::vector<SelftestResult>& out, const std::string& name, bool pass,
           const std::string& detail = "") {
  out.push_back({name, pass, detail});
}

bool near(double a, double b, double tol) { return std::fabs(a - b) <= tol; }

}  // namespace

std::vector<SelftestResult> run_selftests() {
  std::vector<SelftestResult> out;

  // quantsim
  {
    const AffineParams p = quant_params(-1.0, 1.0, 4);
    check(out, "quant_params(-1,1,4)", near(p.scale, 7.5, 1e-12) && near(p.zero, 0.5, 1e-12));
    const Tensor ends({2}, {-1.0, 1.0});
    const auto q = quantize(ends, p, 4);
    check(out, "quantize endpoints", q[0] == -8 && q[1] == 7);
    const Tensor back = dequantize(q, {2}, p);
    check(out, "dequantize endpoints", near(back.at(0), -1.0, 1e-12) && near(back.at(1), 1.0, 1e-12));
    Rng rng(3);
    bool rt = true, bound = true, mono = true;
    double prev = -1.0;
    std::int32_t prev_q = -8;
    for (int i = 0; i < 2000; ++i) {
      const double v = rng.uniform(-1.0, 1.0);
      const Tensor t({1}, {v});
      const auto qq = quantize(t, p, 4);
      const Tensor d = dequantize(qq, {1}, p);
      bound = bound && std::fabs(d.at(0) - v) <= 0.5 / p.scale + 1e-12;
      const auto q2 = quantize(d, p, 4);
      rt = rt && q2[0] == qq[0];
      if (v >= prev)
        mono = mono && qq[0] >= prev_q;
      prev = v;
      prev_q = qq[0];
    }
    check(out, "quantizer round-trip/bound", rt && bound);
  }

  // tensor-core gradients vs finite differences
  {
    Rng rng(7);
    ModelSpec spec{4, {6}, 3};
    ClassifierNet net = build_teacher(spec, rng);
    Tensor x({5, 4});
    for (std::size_t i = 0; i < x.numel(); ++i) x.at(i) = rng.uniform(-1.0, 1.0);
    std::vector<int> labels = {0, 1, 2, 0, 1};
    const Tensor target = one_hot(labels, 3);
    ForwardCache cache = forward(net.g, {{"x", x}, {"target", target}}, Mode::probe);
    Gradients grads = backward(net.g, cache, net.loss);
    bool ok = true;
    for (std::size_t p = 0; p < net.g.param_count() && ok; ++p) {
      const Tensor fd = finite_diff_grad(
          [&](const Tensor& th) {
            Graph g2 = net.g;
            g2.param_mut(static_cast<int>(p)) = th;
            ForwardCache c2 = forward(g2, {{"x", x}, {"target", target}}, Mode::probe);
            return c2.at(net.loss).at(0);
          },
          net.g.param(static_cast<int>(p)), 1e-5);
      for (std::size_t i = 0; i < fd.numel(); ++i) {
        const double a = grads.param[p].at(i), b = fd.at(i);
        const double diff = std::fabs(a - b);
        if (diff > 1e-8 && diff / std::max(std::fabs(a), std::fabs(b)) > 1e-5) ok = false;
      }
    }
    check(out, "backward vs finite differences", ok);
  }

  // losses closed forms
  {
    const Tensor logits({1, 2}, {10.0, 0.0});
    check(out, "cross_entropy margin",
          near(cross_entropy(logits, std::vector<int>{0}), std::log1p(std::exp(-10.0)), 1e-12));
    const Tensor s({1, 2}, {0.0, 2.0});
    const Tensor t({1, 2}, {2.0, 0.0});
    const double p0 = std::exp(2.0) / (std::exp(2.0) + 1.0);
    const double expect = p0 * std::log(p0 / (1.0 - p0)) + (1.0 - p0) * std::log((1.0 - p0) / p0);
    check(out, "kl closed form", near(kl_divergence(s, t, 1.0), expect, 1e-12));
    const Tensor sm = smooth_labels({3}, 0.1, 10);
    check(out, "smooth_labels", near(sm.at(0, 3), 0.91, 1e-12) && near(sm.at(0, 0), 0.01, 1e-12));
  }

  // gi-opt
  {
    check(out, "rho_schedule", near(rho_schedule(100, GIConfig{true, 0.001}), 0.0001, 1e-15));
    OptimizerState opt;
    opt.kind = OptKind::sgd_nesterov;
    opt.lr = 0.1;
    opt.momentum = 0.0;
    const Tensor th({1}, {1.0});
    const Tensor g({1}, {1.0});
    check(out, "sgd step", near(optimizer_step_single(opt, th, g).at(0), 0.9, 1e-15));

    // search_kappa on a hand-set layer vs a direct doubling replay.
    QuantizedLayerState st;
    st.layer = "probe";
    st.bits = 4;
    Tensor w({5}, {-0.9, -0.3, 0.1, 0.45, 0.8});
    Tensor wg({5}, {0.01, -0.02, 0.015, -0.01, 0.02});
    st.affine = quant_params(-0.9, 0.8, 4);
    st.qweights = quantize(w, st.affine, 4);
    st.initialized = true;
    OptimizerState sgd;
    sgd.kind = OptKind::sgd_nesterov;
    sgd.momentum = 0.0;
    sgd.lr = 0.1;
    sgd.buf_m.push_back(Tensor::zeros_like(w));
    sgd.buf_v.push_back(Tensor::zeros_like(w));
    GIConfig cfg;
    const auto res = search_kappa(st, w, wg, sgd, 0, 2.0, cfg, true);
    const std::size_t committed = count_threshold_crossings(
        st.qweights, quantize(preview_update(sgd, 0, w, wg, res.kappa), st.affine, 4));
    check(out, "search_kappa guarantee",
          committed == res.report.crossings &&
              (static_cast<double>(committed) > 2.0 || res.report.capped));
  }

  // surface-diag on a known quadratic
  {
    const std::vector<double> diag_a = {2.0, 6.0};
    GradFn gfn = [&](const std::vector<double>& th) {
      return std::vector<double>{diag_a[0] * th[0], diag_a[1] * th[1]};
    };
    HvpFn hfn = [&](const std::vector<double>& v) {
      return hvp(gfn, {0.3, -0.2}, v, 1e-4);
    };
    const TraceEstimate tr = hutchinson_trace(hfn, 2, 200, 9);
    check(out, "hutchinson quadratic", near(tr.trace, 8.0, 1e-6));
    const SpectrumEstimate sp = lanczos_spectrum(hfn, 2, 2, 9);
    check(out, "lanczos quadratic",
          sp.ritz.size() == 2 && near(sp.ritz[0], 6.0, 1e-8) && near(sp.ritz[1], 2.0, 1e-8));
  }

  // lab-cli pieces
  {
    DatasetSpec spec;
    spec.classes = 4;
    spec.train_per_class = 20;
    spec.val_per_class = 5;
    const Dataset a = make_dataset(spec);
    const Dataset b = make_dataset(spec);
    check(out, "dataset determinism", a.train_x.vec() == b.train_x.vec() && a.train_y == b.train_y);
    ExperimentConfig c1 = default_config();
    const std::string text = canonical_config(c1);
    ExperimentConfig c2 = parse_config_text(text);
    check(out, "config hash stability", config_hash_hex(c1) == config_hash_hex(c2));
  }

  return out;
}

}  // namespace zsq
