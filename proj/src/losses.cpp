// Copyright 2026 The zsqlab Authors
// Licensed under the Apache License, Version 2.0

#include "zsq/losses.hpp"

#include <cmath>

#include "zsq/graph.hpp"

namespace zsq {

namespace {

// Row-wise log-softmax into `out`.
void log_softmax_rows(const Tensor& x, Tensor& out) {
  const std::size_t B = x.rows(), K = x.cols();
  for (std::size_t r = 0; r < B; ++r) {
    double mx = x.at(r, 0);
    for (std::size_t c = 1; c < K; ++c) mx = std::max(mx, x.at(r, c));
    double z = 0.0;
    for (std::size_t c = 0; c < K; ++c) z += std::exp(x.at(r, c) - mx);
    const double lz = std::log(z);
    for (std::size_t c = 0; c < K; ++c) out.at(r, c) = x.at(r, c) - mx - lz;
  }
}

}  // namespace

double cross_entropy(const Tensor& logits, const Tensor& target_dist) {
  ZSQ_CHECK(logits.rank() == 2 && target_dist.rank() == 2, "cross_entropy expects rank-2 inputs");
  ZSQ_CHECK(logits.rows() == target_dist.rows() && logits.cols() == target_dist.cols(),
            "cross_entropy: logits rows must equal label rows");
  ZSQ_CHECK(logits.rows() > 0, "cross_entropy: empty batch");
  const std::size_t B = logits.rows(), K = logits.cols();
  Tensor ls = Tensor::zeros_like(logits);
  log_softmax_rows(logits, ls);
  double total = 0.0;
  for (std::size_t r = 0; r < B; ++r) {
    double row = 0.0;
    for (std::size_t c = 0; c < K; ++c) row -= target_dist.at(r, c) * ls.at(r, c);
    total += row;
  }
  return total / static_cast<double>(B);
}

double cross_entropy(const Tensor& logits, const std::vector<int>& labels) {
  ZSQ_CHECK(logits.rank() == 2, "cross_entropy expects rank-2 logits");
  ZSQ_CHECK(logits.rows() == labels.size(), "cross_entropy: logits rows must equal label count");
  ZSQ_CHECK(!labels.empty(), "cross_entropy: empty batch");
  const std::size_t B = logits.rows(), K = logits.cols();
  Tensor ls = Tensor::zeros_like(logits);
  log_softmax_rows(logits, ls);
  double total = 0.0;
  for (std::size_t r = 0; r < B; ++r) {
    const int y = labels[r];
    ZSQ_CHECK(y >= 0 && y < static_cast<int>(K), "cross_entropy: label out of range");
    total -= ls.at(r, static_cast<std::size_t>(y));
  }
  return total / static_cast<double>(B);
}

double kl_divergence(const Tensor& student_logits, const Tensor& teacher_logits,
                     double temperature) {
  ZSQ_CHECK(student_logits.same_shape(teacher_logits), "kl_divergence: shape mismatch");
  ZSQ_CHECK(temperature > 0.0, "kl_divergence: temperature must be positive");
  ZSQ_CHECK(student_logits.rank() == 2 && student_logits.rows() > 0,
            "kl_divergence expects a nonempty rank-2 batch");
  const std::size_t B = student_logits.rows(), K = student_logits.cols();
  Tensor st = Tensor::zeros_like(student_logits);
  Tensor tt = Tensor::zeros_like(teacher_logits);
  for (std::size_t i = 0; i < st.numel(); ++i) {
    st.at(i) = student_logits.at(i) / temperature;
    tt.at(i) = teacher_logits.at(i) / temperature;
  }
  Tensor ls_q = Tensor::zeros_like(st);
  Tensor ls_p = Tensor::zeros_like(tt);
  log_softmax_rows(st, ls_q);
  log_softmax_rows(tt, ls_p);
  double total = 0.0;
  for (std::size_t r = 0; r < B; ++r) {
    double row = 0.0;
    for (std::size_t c = 0; c < K; ++c) {
      const double p = std::exp(ls_p.at(r, c));
      row += p * (ls_p.at(r, c) - ls_q.at(r, c));
    }
    total += row;
  }
  return total * temperature * temperature / static_cast<double>(B);
}

std::pair<Tensor, Tensor> batch_mean_var(const Tensor& x) {
  ZSQ_CHECK(x.rank() == 2 && x.rows() > 0, "batch_mean_var expects nonempty rank-2 input");
  const std::size_t B = x.rows(), F = x.cols();
  Tensor mean({F}), var({F});
  for (std::size_t c = 0; c < F; ++c) {
    double m = 0.0;
    for (std::size_t r = 0; r < B; ++r) m += x.at(r, c);
    m /= static_cast<double>(B);
    double v = 0.0;
    for (std::size_t r = 0; r < B; ++r) {
      const double d = x.at(r, c) - m;
      v += d * d;
    }
    mean.at(c) = m;
    var.at(c) = v / static_cast<double>(B);
  }
  return {mean, var};
}

double bns_penalty_value(const Tensor& x, const Tensor& running_mean, const Tensor& running_var) {
  const auto [mean, var] = batch_mean_var(x);
  const std::size_t F = mean.numel();
  ZSQ_CHECK(running_mean.numel() == F && running_var.numel() == F,
            "bns_penalty_value: feature mismatch");
  double s = 0.0;
  for (std::size_t c = 0; c < F; ++c) {
    const double dm = mean.at(c) - running_mean.at(c);
    const double dv = var.at(c) - running_var.at(c);
    s += dm * dm + dv * dv;
  }
  return s / static_cast<double>(F);
}

double bns_loss(const std::vector<std::pair<Tensor, Tensor>>& batch_stats,
                const std::vector<const BatchNormState*>& teacher_bn) {
  ZSQ_CHECK(batch_stats.size() == teacher_bn.size(), "bns_loss: misaligned layer lists");
  double total = 0.0;
  for (std::size_t l = 0; l < batch_stats.size(); ++l) {
    const Tensor& mean = batch_stats[l].first;
    const Tensor& var = batch_stats[l].second;
    const BatchNormState& st = *teacher_bn[l];
    const std::size_t F = mean.numel();
    ZSQ_CHECK(st.running_mean.numel() == F && var.numel() == F, "bns_loss: feature mismatch");
    double s = 0.0;
    for (std::size_t c = 0; c < F; ++c) {
      const double dm = mean.at(c) - st.running_mean.at(c);
      const double dv = var.at(c) - st.running_var.at(c);
      s += dm * dm + dv * dv;
    }
    total += s / static_cast<double>(F);
  }
  return total;
}

double student_loss(const Tensor& student_logits, const Tensor& teacher_logits,
                    const Tensor& target_dist, double delta, const LossWeights& w) {
  ZSQ_CHECK(delta >= 0.0 && delta <= 1.0, "student_loss: delta out of [0,1]");
  const double ce = cross_entropy(student_logits, target_dist);
  const double kl = kl_divergence(student_logits, teacher_logits, w.temperature);
  return (1.0 - delta) * ce + delta * kl;
}

Tensor smooth_labels(const std::vector<int>& labels, double c, int num_classes) {
  ZSQ_CHECK(c >= 0.0 && c < 1.0, "smooth_labels: c out of [0,1)");
  ZSQ_CHECK(num_classes > 0, "smooth_labels: bad class count");
  Tensor y({labels.size(), static_cast<std::size_t>(num_classes)});
  const double off = c / static_cast<double>(num_classes);
  for (std::size_t r = 0; r < labels.size(); ++r) {
    ZSQ_CHECK(labels[r] >= 0 && labels[r] < num_classes, "smooth_labels: label out of range");
    for (int k = 0; k < num_classes; ++k) y.at(r, static_cast<std::size_t>(k)) = off;
    y.at(r, static_cast<std::size_t>(labels[r])) += 1.0 - c;
  }
  return y;
}

}  // namespace zsq
