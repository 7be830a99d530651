// Copyright 2026 The zsqlab Authors
// Licensed under the Apache License, Version 2.0

#include "zsq/optim.hpp"

#include <cmath>

namespace zsq {

OptKind opt_kind_from_string(const std::string& s) {
  if (s == "sgd_nesterov") return OptKind::sgd_nesterov;
  if (s == "adam") return OptKind::adam;
  if (s == "rmsprop") return OptKind::rmsprop;
  fail("unknown optimizer kind: " + s);
}

std::string opt_kind_to_string(OptKind k) {
  switch (k) {
    case OptKind::sgd_nesterov: return "sgd_nesterov";
    case OptKind::adam: return "adam";
    case OptKind::rmsprop: return "rmsprop";
  }
  return "?";
}

void OptimizerState::bind(const Graph& g) {
  buf_m.clear();
  buf_v.clear();
  for (std::size_t p = 0; p < g.param_count(); ++p) {
    buf_m.push_back(Tensor::zeros_like(g.param(static_cast<int>(p))));
    buf_v.push_back(Tensor::zeros_like(g.param(static_cast<int>(p))));
  }
  step_count = 0;
}

namespace {

// Shared update kernel. Preview and commit run the exact same arithmetic so
// a committed step is bitwise the candidate the search evaluated.
void apply_update(const OptimizerState& opt, int slot, const Tensor& theta, const Tensor& grad,
                  double kappa, std::int64_t t_next, Tensor& theta_out, Tensor* m_out,
                  Tensor* v_out) {
  ZSQ_CHECK(theta.same_shape(grad), "optimizer: theta/grad shape mismatch");
  const std::size_t n = theta.numel();
  const Tensor& m = opt.buf_m[static_cast<std::size_t>(slot)];
  const Tensor& v = opt.buf_v[static_cast<std::size_t>(slot)];
  theta_out = theta;
  switch (opt.kind) {
    case OptKind::sgd_nesterov: {
      for (std::size_t i = 0; i < n; ++i) {
        const double gp = kappa * grad.at(i);
        const double buf = opt.momentum * m.at(i) + gp;
        const double d = gp + opt.momentum * buf;
        theta_out.at(i) = theta.at(i) - opt.lr * d;
        if (m_out) m_out->at(i) = buf;
      }
      break;
    }
    case OptKind::adam: {
      const double bc1 = 1.0 - std::pow(opt.beta1, static_cast<double>(t_next));
      const double bc2 = 1.0 - std::pow(opt.beta2, static_cast<double>(t_next));
      for (std::size_t i = 0; i < n; ++i) {
        const double gp = kappa * grad.at(i);
        const double mn = opt.beta1 * m.at(i) + (1.0 - opt.beta1) * gp;
        const double vn = opt.beta2 * v.at(i) + (1.0 - opt.beta2) * gp * gp;
        const double mhat = mn / bc1;
        const double vhat = vn / bc2;
        theta_out.at(i) = theta.at(i) - opt.lr * mhat / (std::sqrt(vhat) + opt.eps);
        if (m_out) m_out->at(i) = mn;
        if (v_out) v_out->at(i) = vn;
      }
      break;
    }
    case OptKind::rmsprop: {
      for (std::size_t i = 0; i < n; ++i) {
        const double gp = kappa * grad.at(i);
        const double vn = opt.alpha * m.at(i) + (1.0 - opt.alpha) * gp * gp;
        theta_out.at(i) = theta.at(i) - opt.lr * gp / (std::sqrt(vn) + opt.eps);
        if (m_out) m_out->at(i) = vn;
      }
      break;
    }
  }
}

}  // namespace

Tensor preview_update(const OptimizerState& opt, int slot, const Tensor& theta,
                      const Tensor& grad, double kappa) {
  Tensor out;
  apply_update(opt, slot, theta, grad, kappa, opt.step_count + 1, out, nullptr, nullptr);
  return out;
}

void commit_update(OptimizerState& opt, int slot, Tensor& theta, const Tensor& grad,
                   double kappa) {
  Tensor out;
  Tensor m_new = Tensor::zeros_like(theta);
  Tensor v_new = Tensor::zeros_like(theta);
  apply_update(opt, slot, theta, grad, kappa, opt.step_count + 1, out, &m_new, &v_new);
  opt.buf_m[static_cast<std::size_t>(slot)] = std::move(m_new);
  if (opt.kind == OptKind::adam) opt.buf_v[static_cast<std::size_t>(slot)] = std::move(v_new);
  theta = std::move(out);
}

void optimizer_step(OptimizerState& opt, Graph& g, const Gradients& grads) {
  ZSQ_CHECK(grads.param.size() == g.param_count(), "optimizer_step: gradient count mismatch");
  ZSQ_CHECK(opt.buf_m.size() == g.param_count(), "optimizer not bound to this graph");
  for (std::size_t p = 0; p < g.param_count(); ++p)
    commit_update(opt, static_cast<int>(p), g.param_mut(static_cast<int>(p)),
                  grads.param[p], 1.0);
  ++opt.step_count;
}

Tensor optimizer_step_single(OptimizerState& opt, const Tensor& theta, const Tensor& grad) {
  if (opt.buf_m.empty()) {
    opt.buf_m.push_back(Tensor::zeros_like(theta));
    opt.buf_v.push_back(Tensor::zeros_like(theta));
  }
  Tensor th = theta;
  commit_update(opt, 0, th, grad, 1.0);
  ++opt.step_count;
  ZSQ_CHECK(th.all_finite(), "optimizer_step: non-finite result");
  return th;
}

}  // namespace zsq
