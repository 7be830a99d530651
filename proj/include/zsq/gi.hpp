// Copyright 2026 The zsqlab Authors
// Licensed under the Apache License, Version 2.0

#pragma once

#include <string>
#include <vector>

#include "zsq/graph.hpp"
#include "zsq/optim.hpp"
#include "zsq/quant.hpp"

namespace zsq {

/// Gradient-inundation schedule and search limits.
struct GIConfig {
  bool enabled = true;
  double rho0 = 0.01;            // initial crossing proportion
  double decay_factor = 0.1;     // rho multiplier per interval
  int decay_interval = 100;      // epochs between decays
  int warmup_epochs = 20;        // kappa capped at kappa_cap_warmup while warm
  double kappa_cap_warmup = 128.0;
  int search_budget = 5;         // binary-search iterations
  int doubling_cap = 40;         // post-warm-up doublings (kappa <= 2^40)
  bool constrained_argmin = true;  // prefer candidates with crossings > T
};

/// One layer's record for one committed step.
struct LayerUpdateReport {
  int layer = -1;  // weight-quant state index
  std::string name;
  double kappa = 1.0;
  std::size_t crossings = 0;  // committed integer-weight changes
  double target = 0.0;        // T = rho * dim
  int search_steps = 0;       // scaled-candidate evaluations beyond kappa=1
  bool capped = false;
  bool zero_grad = false;
};

/// rho = rho0 * decay_factor^floor(epoch / decay_interval)
double rho_schedule(int epoch, const GIConfig& cfg);

/// T = rho * dim(theta_l), kept real-valued.
double target_count(double rho, const QuantizedLayerState& layer);

struct KappaSearchResult {
  double kappa = 1.0;
  LayerUpdateReport report;
};

/// Two-phase search: starting from 1.0 kappa doubles until the previewed
/// step crosses more than T thresholds (or a cap is hit), then up to
/// `search_budget` binary-search iterations refine within [kappa/2, kappa].
/// Crossings are measured against the layer's current integer weights under
/// its current affine params; ranges are not re-fit inside the search.
KappaSearchResult search_kappa(const QuantizedLayerState& layer, const Tensor& theta,
                               const Tensor& grad, const OptimizerState& opt, int slot,
                               double target, const GIConfig& cfg, bool in_warmup);

/// Commits one optimizer step over all graph parameters. Quantized dense
/// weights step with their searched kappa; everything else steps plainly.
/// Reports carry the committed crossing counts even when GI is disabled,
/// which is what the starvation diagnostics read.
std::vector<LayerUpdateReport> gi_step(Graph& g, const Gradients& grads, OptimizerState& opt,
                                       double rho, const GIConfig& cfg, bool in_warmup);

}  // namespace zsq
