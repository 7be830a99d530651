// Copyright 2026 The zsqlab Authors
// Licensed under the Apache License, Version 2.0

#include "zsq/gi.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace zsq {

double rho_schedule(int epoch, const GIConfig& cfg) {
  ZSQ_CHECK(epoch >= 0, "rho_schedule: negative epoch");
  ZSQ_CHECK(cfg.decay_interval > 0, "rho_schedule: decay interval must be positive");
  const int k = epoch / cfg.decay_interval;
  return cfg.rho0 * std::pow(cfg.decay_factor, static_cast<double>(k));
}

double target_count(double rho, const QuantizedLayerState& layer) {
  ZSQ_CHECK(rho >= 0.0 && rho <= 1.0, "target_count: rho out of [0,1]");
  return rho * static_cast<double>(layer.qweights.size());
}

namespace {

struct Candidate {
  double kappa = 1.0;
  std::size_t crossings = 0;
};

// Selection rule over every candidate evaluated in both phases.
// Constrained form: among candidates exceeding T, minimize |crossings - T|;
// if none exceeds, the closest overall. Ties break toward smaller kappa.
Candidate select_best(const std::vector<Candidate>& cands, double target, bool constrained) {
  const Candidate* best = nullptr;
  bool best_exceeds = false;
  for (const Candidate& c : cands) {
    const bool exceeds = static_cast<double>(c.crossings) > target;
    const double dist = std::fabs(static_cast<double>(c.crossings) - target);
    if (!best) {
      best = &c;
      best_exceeds = exceeds;
      continue;
    }
    const double best_dist = std::fabs(static_cast<double>(best->crossings) - target);
    bool better;
    if (constrained && exceeds != best_exceeds) {
      better = exceeds;
    } else {
      better = dist < best_dist || (dist == best_dist && c.kappa < best->kappa);
    }
    if (better) {
      best = &c;
      best_exceeds = exceeds;
    }
  }
  return *best;
}

}  // namespace

KappaSearchResult search_kappa(const QuantizedLayerState& layer, const Tensor& theta,
                               const Tensor& grad, const OptimizerState& opt, int slot,
                               double target, const GIConfig& cfg, bool in_warmup) {
  ZSQ_CHECK(layer.initialized, "search_kappa: layer has no quantized forward yet");
  ZSQ_CHECK(layer.qweights.size() == theta.numel(), "search_kappa: layer/theta size mismatch");
  ZSQ_CHECK(target >= 0.0, "search_kappa: negative target");

  KappaSearchResult res;
  res.report.layer = -1;
  res.report.name = layer.layer;
  res.report.target = target;

  bool all_zero = true;
  for (std::size_t i = 0; i < grad.numel(); ++i)
    if (grad.at(i) != 0.0) {
      all_zero = false;
      break;
    }
  if (all_zero) {
    // No scaling can create crossings.
    res.kappa = 1.0;
    res.report.kappa = 1.0;
    res.report.crossings = 0;
    res.report.zero_grad = true;
    return res;
  }

  auto crossings_at = [&](double kappa) -> std::size_t {
    const Tensor cand = preview_update(opt, slot, theta, grad, kappa);
    return count_threshold_crossings(layer.qweights,
                                     quantize(cand, layer.affine, layer.bits));
  };

  std::vector<Candidate> cands;
  const std::size_t d1 = crossings_at(1.0);
  cands.push_back({1.0, d1});
  if (static_cast<double>(d1) > target) {
    res.kappa = 1.0;
    res.report.kappa = 1.0;
    res.report.crossings = d1;
    return res;
  }

  const double cap =
      in_warmup ? cfg.kappa_cap_warmup : std::ldexp(1.0, cfg.doubling_cap);  // 2^doubling_cap
  int steps = 0;
  double kappa = 1.0;
  bool bracket = false;
  while (kappa < cap) {
    kappa = std::min(kappa * 2.0, cap);
    const std::size_t d = crossings_at(kappa);
    ++steps;
    cands.push_back({kappa, d});
    if (static_cast<double>(d) > target) {
      bracket = true;
      break;
    }
  }

  if (bracket) {
    double lo = kappa / 2.0, hi = kappa;
    for (int it = 0; it < cfg.search_budget; ++it) {
      const double mid = 0.5 * (lo + hi);
      const std::size_t d = crossings_at(mid);
      ++steps;
      cands.push_back({mid, d});
      if (static_cast<double>(d) > target)
        hi = mid;
      else
        lo = mid;
    }
  } else {
    res.report.capped = true;
  }

  const Candidate best = select_best(cands, target, cfg.constrained_argmin);
  res.kappa = best.kappa;
  res.report.kappa = best.kappa;
  res.report.crossings = best.crossings;
  res.report.search_steps = steps;
  return res;
}

std::vector<LayerUpdateReport> gi_step(Graph& g, const Gradients& grads, OptimizerState& opt,
                                       double rho, const GIConfig& cfg, bool in_warmup) {
  ZSQ_CHECK(grads.param.size() == g.param_count(), "gi_step: gradient count mismatch");
  ZSQ_CHECK(opt.buf_m.size() == g.param_count(), "gi_step: optimizer not bound to this graph");
  std::vector<LayerUpdateReport> reports;

  std::vector<int> wq_of_param(g.param_count(), -1);
  for (const auto& [pid, wq] : g.quantized_params()) wq_of_param[static_cast<std::size_t>(pid)] = wq;

  for (std::size_t p = 0; p < g.param_count(); ++p) {
    const int pid = static_cast<int>(p);
    const int wq = wq_of_param[p];
    if (wq >= 0 && g.wq_state(wq).initialized) {
      const QuantizedLayerState& st = g.wq_state(wq);
      const double target = (cfg.enabled && rho > 0.0) ? target_count(rho, st) : 0.0;
      LayerUpdateReport rep;
      double kappa = 1.0;
      if (target > 0.0) {
        KappaSearchResult r =
            search_kappa(st, g.param(pid), grads.param[p], opt, pid, target, cfg, in_warmup);
        kappa = r.kappa;
        rep = r.report;
      } else {
        rep.name = st.layer;
        rep.target = 0.0;
      }
      rep.layer = wq;
      commit_update(opt, pid, g.param_mut(pid), grads.param[p], kappa);
      if (target <= 0.0) {
        // Plain step; the crossing count is still recorded for diagnostics.
        rep.kappa = 1.0;
        rep.crossings = count_threshold_crossings(
            st.qweights, quantize(g.param(pid), st.affine, st.bits));
        bool all_zero = true;
        for (std::size_t i = 0; i < grads.param[p].numel(); ++i)
          if (grads.param[p].at(i) != 0.0) {
            all_zero = false;
            break;
          }
        rep.zero_grad = all_zero;
      }
      ZSQ_CHECK(g.param(pid).all_finite(),
                "gi_step: non-finite parameters after step in layer " + st.layer);
      reports.push_back(std::move(rep));
    } else {
      commit_update(opt, pid, g.param_mut(pid), grads.param[p], 1.0);
      ZSQ_CHECK(g.param(pid).all_finite(),
                "gi_step: non-finite parameters after step in " + g.param_name(pid));
    }
  }
  ++opt.step_count;
  return reports;
}

}  // namespace zsq
