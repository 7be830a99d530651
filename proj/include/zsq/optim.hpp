// Copyright 2026 The zsqlab Authors
// Licensed under the Apache License, Version 2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "zsq/graph.hpp"
#include "zsq/tensor.hpp"

namespace zsq {

enum class OptKind { sgd_nesterov, adam, rmsprop };

OptKind opt_kind_from_string(const std::string& s);
std::string opt_kind_to_string(OptKind k);

/// Optimizer bound to a graph's parameter table (one buffer slot per param).
struct OptimizerState {
  OptKind kind = OptKind::sgd_nesterov;
  double lr = 1e-4;
  double momentum = 0.9;   // sgd_nesterov
  double beta1 = 0.9;      // adam
  double beta2 = 0.999;    // adam
  double eps = 1e-8;       // adam / rmsprop
  double alpha = 0.99;     // rmsprop smoothing
  std::int64_t step_count = 0;
  std::vector<Tensor> buf_m;  // momentum / first moment / square average
  std::vector<Tensor> buf_v;  // second moment (adam only)

  void bind(const Graph& g);
};

/// Parameters the optimizer WOULD produce from gradient kappa*g, without
/// touching any state.
Tensor preview_update(const OptimizerState& opt, int slot, const Tensor& theta,
                      const Tensor& grad, double kappa);

/// Applies the update for one parameter and writes its buffers. Does not
/// advance step_count; the caller owns step boundaries.
void commit_update(OptimizerState& opt, int slot, Tensor& theta, const Tensor& grad,
                   double kappa);

/// One full plain step (kappa = 1 on every parameter), advancing step_count.
void optimizer_step(OptimizerState& opt, Graph& g, const Gradients& grads);

/// Single-tensor convenience used by tests and the oracle suites.
Tensor optimizer_step_single(OptimizerState& opt, const Tensor& theta, const Tensor& grad);

}  // namespace zsq
