// Copyright 2026 The zsqlab Authors
// Licensed under the Apache License, Version 2.0

#pragma once

#include <utility>
#include <vector>

#include "zsq/tensor.hpp"

namespace zsq {

struct BatchNormState;

/// Generator/student loss mixing knobs.
struct LossWeights {
  double alpha = 0.5;        // generator mix: (1-a) CE + a BNS
  double delta = 0.5;        // student mix: (1-d) CE + d KL; d=1 is the KL-only setting
  double smoothing = 0.0;    // label smoothing c in [0,1)
  double temperature = 1.0;  // KL softening temperature
};

/// Mean over the batch of -sum_k y_k log softmax(logits)_k against a
/// full label distribution.
double cross_entropy(const Tensor& logits, const Tensor& target_dist);

/// Hard-label convenience overload.
double cross_entropy(const Tensor& logits, const std::vector<int>& labels);

/// Mean over the batch of KL(softmax(teacher/T) || softmax(student/T)),
/// scaled by T^2.
double kl_divergence(const Tensor& student_logits, const Tensor& teacher_logits,
                     double temperature);

/// One layer's batch-statistics penalty:
/// (||mean_b - mean_r||^2 + ||var_b - var_r||^2) / F with biased batch variance.
double bns_penalty_value(const Tensor& x, const Tensor& running_mean, const Tensor& running_var);

/// Sum of per-layer penalties over aligned (batch stats, teacher state) lists.
double bns_loss(const std::vector<std::pair<Tensor, Tensor>>& batch_stats,
                const std::vector<const BatchNormState*>& teacher_bn);

/// (1-d) CE + d KL on precomputed logits.
double student_loss(const Tensor& student_logits, const Tensor& teacher_logits,
                    const Tensor& target_dist, double delta, const LossWeights& w);

/// y' = (1-c) onehot + c/K.
Tensor smooth_labels(const std::vector<int>& labels, double c, int num_classes);

/// Batch (mean, biased var) per feature of a rank-2 tensor.
std::pair<Tensor, Tensor> batch_mean_var(const Tensor& x);

}  // namespace zsq
