// Copyright 2026 The zsqlab Authors
// Licensed under the Apache License, Version 2.0

#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "zsq/gi.hpp"
#include "zsq/graph.hpp"

namespace zsq {

/// Offsets of each parameter inside the flattened gradient vector.
struct GradLayout {
  std::vector<std::size_t> offset;
  std::vector<std::size_t> length;
  std::size_t total = 0;
  static GradLayout of(const Graph& g);
};

std::vector<double> flatten_params(const Graph& g);
void set_params_flat(Graph& g, const std::vector<double>& theta);
std::vector<double> flatten_grads(const Gradients& grads, const GradLayout& layout);

/// a.b / (|a||b|); nullopt when either norm is zero (missing datum, not 0).
std::optional<double> grad_cosine(const std::vector<double>& a, const std::vector<double>& b);

/// Arithmetic mean in fixed summation order.
std::vector<double> epoch_mean_grad(const std::vector<std::vector<double>>& step_grads);

std::optional<double> inter_epoch_cosine(const std::vector<double>& mean_t,
                                         const std::vector<double>& mean_prev);

using LossFn = std::function<double(const std::vector<double>&)>;
using GradFn = std::function<std::vector<double>(const std::vector<double>&)>;
using HvpFn = std::function<std::vector<double>(const std::vector<double>&)>;

/// Central finite difference of gradients along v:
///   (grad(theta + eps v^) - grad(theta - eps v^)) / (2 eps) * |v|.
std::vector<double> hvp(const GradFn& grad, const std::vector<double>& theta,
                        const std::vector<double>& v, double eps);

struct TraceEstimate {
  double trace = 0.0;
  double std_error = 0.0;
  int probes = 0;
  int flagged = 0;  // probes that straddled a rounding threshold after resampling
};

/// Rademacher-probe trace estimator. `accept` (optional) rejects a probe
/// direction; rejected probes are redrawn up to 5 times, then flagged.
TraceEstimate hutchinson_trace(const HvpFn& hvp_fn, std::size_t dim, int probes,
                               std::uint64_t seed,
                               const std::function<bool(const std::vector<double>&)>& accept = {});

struct SpectrumEstimate {
  std::vector<double> ritz;         // descending
  std::vector<double> top_eigvec;   // unit-norm, FlatGradient layout
  int steps = 0;                    // Lanczos iterations completed
  bool breakdown = false;
  TraceEstimate trace;              // optional companion estimate
};

/// m-step Lanczos with full reorthogonalization from a seeded start vector.
SpectrumEstimate lanczos_spectrum(const HvpFn& hvp_fn, std::size_t dim, int m,
                                  std::uint64_t seed);

struct SlicePoint {
  double k = 0.0;
  double loss = 0.0;
  bool ok = true;
};

/// L(theta + k * ghat * e) over the grid; ks must lie in [-0.5, 0.5].
/// k = 0 evaluates at theta itself, bitwise.
std::vector<SlicePoint> loss_slice(const LossFn& loss, const std::vector<double>& theta,
                                   const std::vector<double>& e, double ghat,
                                   const std::vector<double>& ks);

struct CrossingHistogram {
  std::vector<int> layer;               // weight-quant state indices
  std::vector<double> mean_crossings;   // per layer per step
  double top3_fraction = 0.0;           // concentration of the total mass
  std::size_t steps = 0;
};

CrossingHistogram crossing_histogram(const std::vector<std::vector<LayerUpdateReport>>& steps);

/// Gini coefficient of a nonnegative vector (0 when the mass is uniform or empty).
double gini(const std::vector<double>& x);

}  // namespace zsq
