// Copyright 2026 The zsqlab Authors
// Licensed under the Apache License, Version 2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "zsq/tensor.hpp"

namespace zsq {

/// Affine parameters of a symmetric uniform per-tensor quantizer:
///   q  = round_half_even(theta * scale - zero), clamped to the n-bit range
///   th = (q + zero) / scale
struct AffineParams {
  double scale = 1.0;      // S = (2^n - 1) / (theta_max - theta_min)
  double zero = 0.0;       // z = S * theta_min + 2^(n-1)
  double theta_min = 0.0;
  double theta_max = 0.0;
};

enum class RangeSource { weights, activations };

struct QuantConfig {
  int bits = 8;
  RangeSource source = RangeSource::weights;
};

/// Moving-average min/max tracker for activation ranges.
struct ActivationObserver {
  double running_min = 0.0;
  double running_max = 0.0;
  double momentum = 0.1;
  std::int64_t observed_batches = 0;
};

/// Per-layer quantization bookkeeping: the integer weights of the last
/// quantized forward and the affine parameters that produced them.
struct QuantizedLayerState {
  std::string layer;
  int bits = 4;
  AffineParams affine{};
  std::vector<std::int32_t> qweights;
  bool initialized = false;
};

std::int64_t quant_min(int bits);
std::int64_t quant_max(int bits);

/// Scale and offset for [theta_min, theta_max] at the given bit-width.
/// Requires theta_min < theta_max; degenerate ranges are the caller's
/// problem (see widen_degenerate).
AffineParams quant_params(double theta_min, double theta_max, int bits);

/// Symmetric 1e-8 widening applied when a tensor is constant.
void widen_degenerate(double& theta_min, double& theta_max);

std::vector<std::int32_t> quantize(const Tensor& theta, const AffineParams& p, int bits);
std::int32_t quantize_scalar(double v, const AffineParams& p, int bits);
Tensor dequantize(const std::vector<std::int32_t>& q, const std::vector<std::size_t>& shape,
                  const AffineParams& p);

/// Quantize-then-dequantize with parameters fitted to the live tensor
/// (weight path). Records the integer weights and params in `state`.
Tensor fake_quant_forward(const Tensor& theta, int bits, QuantizedLayerState& state);

/// Quantize-then-dequantize under fixed affine parameters (activation path).
Tensor fake_quant_with_params(const Tensor& x, const AffineParams& p, int bits);

/// Clipped straight-through gradient: upstream passes where theta lies in
/// [theta_min, theta_max], zero outside.
Tensor ste_backward(const Tensor& upstream, const Tensor& theta, const AffineParams& p);

/// First batch initializes the range; later batches blend with momentum:
/// running <- (1 - m) * running + m * batch_extreme.
void observe_activation(ActivationObserver& obs, const Tensor& batch);

AffineParams observer_params(const ActivationObserver& obs, int bits);

/// Number of positions whose integer value changed.
std::size_t count_threshold_crossings(const std::vector<std::int32_t>& before,
                                      const std::vector<std::int32_t>& after);

}  // namespace zsq
