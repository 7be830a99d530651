// Copyright 2026 The zsqlab Authors
// Licensed under the Apache License, Version 2.0

#pragma once

#include <string>
#include <utility>
#include <vector>

#include "zsq/config.hpp"
#include "zsq/train.hpp"

namespace zsq {

/// One experiment's outcome, ready for serialization.
struct RunRecord {
  std::string arm;
  std::uint64_t seed = 0;
  std::string config_hash;
  std::string canonical_cfg;
  std::vector<EpochMetrics> metrics;
  double teacher_train_acc = 0.0;
  double teacher_val_acc = 0.0;
  double final_train_acc = 0.0;
  double final_val_acc = 0.0;
  double final_ce = 0.0;
  double final_kl = 0.0;
  double wall_seconds = 0.0;
  bool aborted = false;
  std::string abort_reason;
  std::uint64_t val_overlap_count = 0;
  DiagSeries diag;
  std::vector<std::vector<LayerUpdateReport>> gi_reports;  // per student step
  std::vector<int> gi_report_epochs;
  int gi_warmup_end = 0;
};

/// Runs one arm end to end and, when out_dir is nonempty, writes
/// reports/metrics.csv, summary.json, diag CSVs, and final checkpoints.
RunRecord run_experiment(const ExperimentConfig& cfg, const ClassifierNet& teacher,
                         const Dataset& data, const std::string& out_dir);

/// Convenience: builds the dataset and pretrains (or reuses) the teacher.
struct LabContext {
  Dataset data;
  ClassifierNet teacher;
  double teacher_train_acc = 0.0;
  double teacher_val_acc = 0.0;
};
LabContext make_context(const ExperimentConfig& cfg);

/// Grid sweep: cartesian product of key -> value-list overrides, `repeat`
/// seeds per point. Runs are parallel across processes of the grid up to
/// ZSQ_THREADS. Returns records in grid order.
struct SweepPoint {
  std::vector<std::pair<std::string, std::string>> overrides;
  std::uint64_t seed = 0;
  RunRecord record;
};
std::vector<SweepPoint> sweep(const ExperimentConfig& base,
                              const std::vector<std::pair<std::string, std::vector<std::string>>>& grid,
                              int repeat, const std::string& out_dir);

/// ablation.csv (one row per arm, first-seen order) + summary.json.
/// Byte-stable for identical inputs.
void export_report(const std::vector<RunRecord>& records, const std::string& out_dir);

/// Applies key=value overrides on top of a config (re-parse path).
ExperimentConfig with_overrides(const ExperimentConfig& base,
                                const std::vector<std::pair<std::string, std::string>>& kv);

void write_metrics_csv(const std::string& path, const std::vector<EpochMetrics>& metrics);
void write_summary_json(const std::string& path, const RunRecord& rec);
void write_diag_files(const std::string& dir, const RunRecord& rec);
void write_gi_csv(const std::string& path, const RunRecord& rec);

}  // namespace zsq
