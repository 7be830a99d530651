// Copyright 2026 The zsqlab Authors
// Licensed under the Apache License, Version 2.0

#include "zsq/quant.hpp"

#include <cmath>

namespace zsq {

std::int64_t quant_min(int bits) { return -(std::int64_t{1} << (bits - 1)); }
std::int64_t quant_max(int bits) { return (std::int64_t{1} << (bits - 1)) - 1; }

AffineParams quant_params(double theta_min, double theta_max, int bits) {
  ZSQ_CHECK(bits >= 2, "bit-width must be >= 2");
  ZSQ_CHECK(theta_min < theta_max, "degenerate quantization range");
  AffineParams p;
  p.theta_min = theta_min;
  p.theta_max = theta_max;
  const double levels = static_cast<double>((std::int64_t{1} << bits) - 1);
  p.scale = levels / (theta_max - theta_min);
  p.zero = p.scale * theta_min + static_cast<double>(std::int64_t{1} << (bits - 1));
  return p;
}

void widen_degenerate(double& theta_min, double& theta_max) {
  if (theta_min == theta_max) {
    theta_min -= 1e-8;
    theta_max += 1e-8;
  }
}

std::int32_t quantize_scalar(double v, const AffineParams& p, int bits) {
  const double lo = static_cast<double>(quant_min(bits));
  const double hi = static_cast<double>(quant_max(bits));
  double r = std::nearbyint(v * p.scale - p.zero);
  if (r < lo) r = lo;
  if (r > hi) r = hi;
  return static_cast<std::int32_t>(r);
}

std::vector<std::int32_t> quantize(const Tensor& theta, const AffineParams& p, int bits) {
  ZSQ_CHECK(theta.all_finite(), "quantize: non-finite input");
  const double lo = static_cast<double>(quant_min(bits));
  const double hi = static_cast<double>(quant_max(bits));
  std::vector<std::int32_t> q(theta.numel());
  for (std::size_t i = 0; i < theta.numel(); ++i) {
    // nearbyint under the default FP environment rounds half to even.
    double r = std::nearbyint(theta.at(i) * p.scale - p.zero);
    if (r < lo) r = lo;
    if (r > hi) r = hi;
    q[i] = static_cast<std::int32_t>(r);
  }
  return q;
}

Tensor dequantize(const std::vector<std::int32_t>& q, const std::vector<std::size_t>& shape,
                  const AffineParams& p) {
  Tensor out(shape);
  ZSQ_CHECK(out.numel() == q.size(), "dequantize: shape mismatch");
  for (std::size_t i = 0; i < q.size(); ++i)
    out.at(i) = (static_cast<double>(q[i]) + p.zero) / p.scale;
  return out;
}

Tensor fake_quant_forward(const Tensor& theta, int bits, QuantizedLayerState& state) {
  ZSQ_CHECK(theta.numel() > 0, "fake_quant_forward: empty tensor");
  double lo = theta.min_value();
  double hi = theta.max_value();
  widen_degenerate(lo, hi);
  state.bits = bits;
  state.affine = quant_params(lo, hi, bits);
  state.qweights = quantize(theta, state.affine, bits);
  state.initialized = true;
  return dequantize(state.qweights, theta.shape(), state.affine);
}

Tensor fake_quant_with_params(const Tensor& x, const AffineParams& p, int bits) {
  return dequantize(quantize(x, p, bits), x.shape(), p);
}

Tensor ste_backward(const Tensor& upstream, const Tensor& theta, const AffineParams& p) {
  ZSQ_CHECK(upstream.same_shape(theta), "ste_backward: shape mismatch");
  Tensor out = Tensor::zeros_like(upstream);
  for (std::size_t i = 0; i < theta.numel(); ++i) {
    const double t = theta.at(i);
    out.at(i) = (t >= p.theta_min && t <= p.theta_max) ? upstream.at(i) : 0.0;
  }
  return out;
}

void observe_activation(ActivationObserver& obs, const Tensor& batch) {
  ZSQ_CHECK(batch.numel() > 0, "observe_activation: empty batch");
  ZSQ_CHECK(batch.all_finite(), "observe_activation: non-finite batch values");
  const double lo = batch.min_value();
  const double hi = batch.max_value();
  if (obs.observed_batches == 0) {
    obs.running_min = lo;
    obs.running_max = hi;
  } else {
    obs.running_min = (1.0 - obs.momentum) * obs.running_min + obs.momentum * lo;
    obs.running_max = (1.0 - obs.momentum) * obs.running_max + obs.momentum * hi;
  }
  obs.observed_batches += 1;
}

AffineParams observer_params(const ActivationObserver& obs, int bits) {
  ZSQ_CHECK(obs.observed_batches >= 1, "observer_params: no observations yet");
  double lo = obs.running_min;
  double hi = obs.running_max;
  widen_degenerate(lo, hi);
  return quant_params(lo, hi, bits);
}

std::size_t count_threshold_crossings(const std::vector<std::int32_t>& before,
                                      const std::vector<std::int32_t>& after) {
  ZSQ_CHECK(before.size() == after.size(), "count_threshold_crossings: shape mismatch");
  std::size_t n = 0;
  for (std::size_t i = 0; i < before.size(); ++i) n += before[i] != after[i] ? 1 : 0;
  return n;
}

}  // namespace zsq
