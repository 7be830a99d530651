// Copyright 2026 The zsqlab Authors
// Licensed under the Apache License, Version 2.0

#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "zsq/config.hpp"
#include "zsq/dataset.hpp"
#include "zsq/diag.hpp"
#include "zsq/model.hpp"

namespace zsq {

/// One row of the per-epoch metrics stream.
struct EpochMetrics {
  int epoch = 0;
  double loss_g = 0.0;
  double loss_q = 0.0;
  double ce = 0.0;
  double kl = 0.0;
  double acc = 0.0;  // batch accuracy against the hard labels
  std::uint64_t crossings_total = 0;
  double crossings_gini = 0.0;
  double val_acc = 0.0;  // real validation accuracy (summary only, not in the CSV)
};

/// Per-run diagnostic series (the material behind the figure exports).
struct DiagSeries {
  std::vector<int> cos_epochs;
  std::vector<double> cosine_ce_kl;           // per-epoch mean step cosine
  std::vector<int> inter_epochs;
  std::vector<double> inter_cos_ce, inter_cos_kl;
  std::vector<int> trace_epochs;
  std::vector<double> trace_ce, trace_kl, trace_ce_se, trace_kl_se;
  SpectrumEstimate spectrum_ce, spectrum_kl;
  int spectrum_epoch = -1;
  std::vector<SlicePoint> slice_ce, slice_kl;
  int slice_epoch = -1;
  std::vector<std::pair<int, CrossingHistogram>> crossings;  // (epoch, histogram)
};

/// Guards the train/validation separation: every training input row is
/// hashed and checked against the validation rows.
struct ValGuard {
  std::unordered_set<std::uint64_t> val_hashes;
  std::uint64_t overlap_count = 0;
  void index(const Tensor& val_x);
  void check_batch(const Tensor& batch);
};

double accuracy(const Tensor& logits, const std::vector<int>& labels);

/// Batched eval-mode forward returning accuracy on (x, y).
double evaluate_accuracy(ClassifierNet& net, const Tensor& x, const std::vector<int>& y);

struct PretrainResult {
  ClassifierNet teacher;
  double train_acc = 0.0;
  double val_acc = 0.0;
};

/// Trains the full-precision teacher on real data (Adam, CE). Fails below
/// 80% train accuracy; the default task reaches well above 95%.
PretrainResult pretrain_teacher(const ExperimentConfig& cfg, const Dataset& data);

/// Generator-driven zero-shot training of the quantized student.
class ZsqTrainer {
 public:
  ZsqTrainer(const ExperimentConfig& cfg, const ClassifierNet& teacher, const Dataset& data);

  EpochMetrics run_epoch(int epoch);

  ClassifierNet& student() { return student_; }
  GeneratorNet& generator() { return gen_; }
  const DiagSeries& diag() const { return diag_; }
  const std::vector<std::vector<LayerUpdateReport>>& gi_reports() const { return gi_reports_; }
  const std::vector<int>& gi_report_epochs() const { return gi_report_epochs_; }
  ValGuard& guard() { return guard_; }
  int gi_warmup_end() const { return cfg_.gen.warmup_epochs + cfg_.gi.warmup_epochs; }

 private:
  void student_step(int epoch, const SyntheticBatch& batch, bool in_gi_warmup, double rho,
                    EpochMetrics& m, std::vector<std::vector<double>>& ce_grads,
                    std::vector<std::vector<double>>& kl_grads,
                    std::vector<std::vector<LayerUpdateReport>>& step_reports);
  void epoch_diagnostics(int epoch, const std::vector<std::vector<double>>& ce_grads,
                         const std::vector<std::vector<double>>& kl_grads,
                         const std::vector<std::vector<LayerUpdateReport>>& step_reports);
  void ensure_probe_batch();
  SyntheticBatch draw_batch(int n);

  ExperimentConfig cfg_;
  const Dataset& data_;
  ClassifierNet teacher_;
  GenObjective gen_obj_;
  GeneratorNet gen_;
  ClassifierNet student_;
  OptimizerState opt_g_, opt_q_;
  Rng rng_;
  GradLayout layout_;
  ValGuard guard_;
  DiagSeries diag_;
  std::vector<std::vector<LayerUpdateReport>> gi_reports_;  // one entry per student step
  std::vector<int> gi_report_epochs_;
  std::map<std::string, Tensor> probe_inputs_;
  bool probe_ready_ = false;
  std::vector<double> prev_mean_ce_, prev_mean_kl_;
  bool have_prev_mean_ = false;
};

/// Real-data knowledge distillation (the comparison arm): full-precision
/// student, same architecture, random init.
class KdTrainer {
 public:
  KdTrainer(const ExperimentConfig& cfg, const ClassifierNet& teacher, const Dataset& data);

  EpochMetrics run_epoch(int epoch);

  ClassifierNet& student() { return student_; }
  const DiagSeries& diag() const { return diag_; }
  ValGuard& guard() { return guard_; }

 private:
  void epoch_diagnostics(int epoch, const std::vector<std::vector<double>>& ce_grads,
                         const std::vector<std::vector<double>>& kl_grads);

  ExperimentConfig cfg_;
  const Dataset& data_;
  ClassifierNet teacher_;
  ClassifierNet student_;
  OptimizerState opt_q_;
  Rng rng_;
  GradLayout layout_;
  ValGuard guard_;
  DiagSeries diag_;
  std::map<std::string, Tensor> probe_inputs_;
  bool probe_ready_ = false;
  std::vector<double> prev_mean_ce_, prev_mean_kl_;
  bool have_prev_mean_ = false;
};

}  // namespace zsq
