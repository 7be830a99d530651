// Copyright 2026 The zsqlab Authors
// Licensed under the Apache License, Version 2.0

#include "zsq/diag.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

#include "zsq/rng.hpp"

namespace zsq {

GradLayout GradLayout::of(const Graph& g) {
  GradLayout l;
  std::size_t off = 0;
  for (std::size_t p = 0; p < g.param_count(); ++p) {
    const std::size_t n = g.param(static_cast<int>(p)).numel();
    l.offset.push_back(off);
    l.length.push_back(n);
    off += n;
  }
  l.total = off;
  return l;
}

std::vector<double> flatten_params(const Graph& g) {
  std::vector<double> out;
  out.reserve(g.total_param_elems());
  for (std::size_t p = 0; p < g.param_count(); ++p) {
    const Tensor& t = g.param(static_cast<int>(p));
    out.insert(out.end(), t.vec().begin(), t.vec().end());
  }
  return out;
}

void set_params_flat(Graph& g, const std::vector<double>& theta) {
  ZSQ_CHECK(theta.size() == g.total_param_elems(), "set_params_flat: size mismatch");
  std::size_t off = 0;
  for (std::size_t p = 0; p < g.param_count(); ++p) {
    Tensor& t = g.param_mut(static_cast<int>(p));
    for (std::size_t i = 0; i < t.numel(); ++i) t.at(i) = theta[off + i];
    off += t.numel();
  }
}

std::vector<double> flatten_grads(const Gradients& grads, const GradLayout& layout) {
  std::vector<double> out(layout.total, 0.0);
  for (std::size_t p = 0; p < grads.param.size(); ++p) {
    const Tensor& t = grads.param[p];
    ZSQ_CHECK(t.numel() == layout.length[p], "flatten_grads: layout mismatch");
    for (std::size_t i = 0; i < t.numel(); ++i) out[layout.offset[p] + i] = t.at(i);
  }
  return out;
}

std::optional<double> grad_cosine(const std::vector<double>& a, const std::vector<double>& b) {
  ZSQ_CHECK(a.size() == b.size(), "grad_cosine: layout mismatch");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) return std::nullopt;
  double c = dot / (std::sqrt(na) * std::sqrt(nb));
  c = std::clamp(c, -1.0, 1.0);
  return c;
}

std::vector<double> epoch_mean_grad(const std::vector<std::vector<double>>& step_grads) {
  ZSQ_CHECK(!step_grads.empty(), "epoch_mean_grad: empty epoch");
  const std::size_t n = step_grads[0].size();
  std::vector<double> mean(n, 0.0);
  for (const auto& g : step_grads) {
    ZSQ_CHECK(g.size() == n, "epoch_mean_grad: inconsistent layouts");
    for (std::size_t i = 0; i < n; ++i) mean[i] += g[i];
  }
  const double inv = 1.0 / static_cast<double>(step_grads.size());
  for (double& v : mean) v *= inv;
  return mean;
}

std::optional<double> inter_epoch_cosine(const std::vector<double>& mean_t,
                                         const std::vector<double>& mean_prev) {
  return grad_cosine(mean_t, mean_prev);
}

std::vector<double> hvp(const GradFn& grad, const std::vector<double>& theta,
                        const std::vector<double>& v, double eps) {
  ZSQ_CHECK(eps > 0.0, "hvp: eps must be positive");
  double norm = 0.0;
  for (double x : v) norm += x * x;
  norm = std::sqrt(norm);
  ZSQ_CHECK(norm > 0.0, "hvp: zero direction");
  std::vector<double> plus(theta.size()), minus(theta.size());
  for (std::size_t i = 0; i < theta.size(); ++i) {
    const double d = eps * v[i] / norm;
    plus[i] = theta[i] + d;
    minus[i] = theta[i] - d;
  }
  const std::vector<double> gp = grad(plus);
  const std::vector<double> gm = grad(minus);
  ZSQ_CHECK(gp.size() == theta.size() && gm.size() == theta.size(), "hvp: gradient size mismatch");
  std::vector<double> out(theta.size());
  const double s = norm / (2.0 * eps);
  for (std::size_t i = 0; i < theta.size(); ++i) {
    out[i] = (gp[i] - gm[i]) * s;
    ZSQ_CHECK(std::isfinite(out[i]), "hvp: non-finite gradient evaluation");
  }
  return out;
}

TraceEstimate hutchinson_trace(const HvpFn& hvp_fn, std::size_t dim, int probes,
                               std::uint64_t seed,
                               const std::function<bool(const std::vector<double>&)>& accept) {
  ZSQ_CHECK(probes >= 1, "hutchinson_trace: probes must be >= 1");
  Rng rng(seed);
  TraceEstimate est;
  est.probes = probes;
  std::vector<double> samples;
  samples.reserve(static_cast<std::size_t>(probes));
  std::vector<double> v(dim);
  for (int p = 0; p < probes; ++p) {
    bool ok = false;
    for (int attempt = 0; attempt < 6 && !ok; ++attempt) {
      for (std::size_t i = 0; i < dim; ++i) v[i] = rng.sign();
      ok = !accept || accept(v);
      if (!ok && attempt == 5) {
        ++est.flagged;  // keep the last draw, flagged
        ok = true;
      }
    }
    const std::vector<double> hv = hvp_fn(v);
    double q = 0.0;
    for (std::size_t i = 0; i < dim; ++i) q += v[i] * hv[i];
    ZSQ_CHECK(std::isfinite(q), "hutchinson_trace: non-finite probe");
    samples.push_back(q);
  }
  double mean = 0.0;
  for (double s : samples) mean += s;
  mean /= static_cast<double>(samples.size());
  double var = 0.0;
  for (double s : samples) var += (s - mean) * (s - mean);
  if (samples.size() > 1) var /= static_cast<double>(samples.size() - 1);
  est.trace = mean;
  est.std_error = std::sqrt(var / static_cast<double>(samples.size()));
  return est;
}

SpectrumEstimate lanczos_spectrum(const HvpFn& hvp_fn, std::size_t dim, int m,
                                  std::uint64_t seed) {
  ZSQ_CHECK(m >= 1 && static_cast<std::size_t>(m) <= dim, "lanczos_spectrum: need 1 <= m <= dim");
  Rng rng(seed);
  SpectrumEstimate est;

  std::vector<std::vector<double>> basis;  // full reorthogonalization set
  std::vector<double> alphas, betas;

  std::vector<double> q(dim);
  double norm = 0.0;
  for (std::size_t i = 0; i < dim; ++i) {
    q[i] = rng.normal();
    norm += q[i] * q[i];
  }
  norm = std::sqrt(norm);
  for (double& x : q) x /= norm;
  basis.push_back(q);

  for (int j = 0; j < m; ++j) {
    std::vector<double> w = hvp_fn(basis.back());
    double alpha = 0.0;
    for (std::size_t i = 0; i < dim; ++i) alpha += w[i] * basis.back()[i];
    alphas.push_back(alpha);
    // w <- w - alpha q_j - beta q_{j-1}, then two reorthogonalization sweeps.
    for (int sweep = 0; sweep < 2; ++sweep) {
      for (const auto& qb : basis) {
        double proj = 0.0;
        for (std::size_t i = 0; i < dim; ++i) proj += w[i] * qb[i];
        for (std::size_t i = 0; i < dim; ++i) w[i] -= proj * qb[i];
      }
    }
    double beta = 0.0;
    for (double x : w) beta += x * x;
    beta = std::sqrt(beta);
    est.steps = j + 1;
    if (j + 1 == m) break;
    if (beta < 1e-12) {
      est.breakdown = true;
      break;
    }
    betas.push_back(beta);
    for (double& x : w) x /= beta;
    basis.push_back(std::move(w));
  }

  const int k = static_cast<int>(alphas.size());
  Eigen::MatrixXd t = Eigen::MatrixXd::Zero(k, k);
  for (int i = 0; i < k; ++i) {
    t(i, i) = alphas[static_cast<std::size_t>(i)];
    if (i + 1 < k) {
      t(i, i + 1) = betas[static_cast<std::size_t>(i)];
      t(i + 1, i) = betas[static_cast<std::size_t>(i)];
    }
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(t);
  ZSQ_CHECK(es.info() == Eigen::Success, "lanczos_spectrum: tridiagonal eigensolve failed");

  est.ritz.resize(static_cast<std::size_t>(k));
  for (int i = 0; i < k; ++i) est.ritz[static_cast<std::size_t>(i)] = es.eigenvalues()(k - 1 - i);

  // Map the top Ritz vector back through the Lanczos basis.
  est.top_eigvec.assign(dim, 0.0);
  const Eigen::VectorXd y = es.eigenvectors().col(k - 1);
  for (int j = 0; j < k; ++j)
    for (std::size_t i = 0; i < dim; ++i)
      est.top_eigvec[i] += y(j) * basis[static_cast<std::size_t>(j)][i];
  double en = 0.0;
  for (double x : est.top_eigvec) en += x * x;
  en = std::sqrt(en);
  if (en > 0.0)
    for (double& x : est.top_eigvec) x /= en;
  return est;
}

std::vector<SlicePoint> loss_slice(const LossFn& loss, const std::vector<double>& theta,
                                   const std::vector<double>& e, double ghat,
                                   const std::vector<double>& ks) {
  ZSQ_CHECK(e.size() == theta.size(), "loss_slice: direction size mismatch");
  double en = 0.0;
  for (double x : e) en += x * x;
  ZSQ_CHECK(std::fabs(std::sqrt(en) - 1.0) < 1e-6, "loss_slice: direction must be unit-norm");
  std::vector<SlicePoint> out;
  out.reserve(ks.size());
  std::vector<double> probe(theta.size());
  for (double k : ks) {
    ZSQ_CHECK(k >= -0.5 && k <= 0.5, "loss_slice: k outside [-0.5, 0.5]");
    SlicePoint pt;
    pt.k = k;
    double l;
    if (k == 0.0) {
      l = loss(theta);
    } else {
      for (std::size_t i = 0; i < theta.size(); ++i) probe[i] = theta[i] + k * ghat * e[i];
      l = loss(probe);
    }
    if (std::isfinite(l)) {
      pt.loss = l;
    } else {
      pt.ok = false;
    }
    out.push_back(pt);
  }
  return out;
}

CrossingHistogram crossing_histogram(const std::vector<std::vector<LayerUpdateReport>>& steps) {
  ZSQ_CHECK(!steps.empty(), "crossing_histogram: no steps");
  CrossingHistogram h;
  h.steps = steps.size();
  std::map<int, double> totals;
  for (const auto& step : steps)
    for (const auto& rep : step) totals[rep.layer] += static_cast<double>(rep.crossings);
  double grand = 0.0;
  for (const auto& [layer, total] : totals) {
    h.layer.push_back(layer);
    h.mean_crossings.push_back(total / static_cast<double>(steps.size()));
    grand += total;
  }
  if (grand > 0.0) {
    std::vector<double> sorted;
    for (const auto& [layer, total] : totals) sorted.push_back(total);
    std::sort(sorted.rbegin(), sorted.rend());
    double top = 0.0;
    for (std::size_t i = 0; i < sorted.size() && i < 3; ++i) top += sorted[i];
    h.top3_fraction = top / grand;
  }
  return h;
}

double gini(const std::vector<double>& x) {
  if (x.empty()) return 0.0;
  double total = 0.0;
  for (double v : x) total += v;
  if (total <= 0.0) return 0.0;
  double diff = 0.0;
  for (double a : x)
    for (double b : x) diff += std::fabs(a - b);
  return diff / (2.0 * static_cast<double>(x.size()) * total);
}

}  // namespace zsq
