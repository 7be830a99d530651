// Copyright 2026 The zsqlab Authors
// Licensed under the Apache License, Version 2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "zsq/dataset.hpp"
#include "zsq/gi.hpp"
#include "zsq/losses.hpp"
#include "zsq/model.hpp"
#include "zsq/optim.hpp"

namespace zsq {

struct OptSpec {
  OptKind kind = OptKind::sgd_nesterov;
  double lr = 1e-4;
  double momentum = 0.9;
};

struct GenCfg {
  int noise_dim = 16;
  int embed_dim = 16;
  std::vector<int> hidden = {64, 64};
  double lr = 1e-3;       // Adam
  int warmup_epochs = 4;  // generator-only epochs before the student trains
};

struct TrainCfg {
  int epochs = 120;
  int batch = 64;
  int steps_per_epoch = 0;  // 0: ceil(train size / batch)
  int teacher_epochs = 30;
  double teacher_lr = 1e-3;  // Adam
};

struct DiagCfg {
  bool cosine = false;         // per-step CE/KL gradient cosine
  int hessian_every = 0;       // 0: off; N: trace every N epochs
  int hessian_probes = 8;
  int probe_batch = 256;
  int lanczos_m = 64;          // spectrum run at the final epoch when hessian on
  int slice_points = 21;       // loss-slice grid at the final epoch when hessian on
  bool gi_csv = false;         // stream per-step GI reports
};

/// Everything a run needs; parsed from flat key=value text.
struct ExperimentConfig {
  DatasetSpec dataset;
  std::vector<int> hidden = {64, 64};  // classifier hidden widths
  int w_bits = 4;
  int a_bits = 4;
  LossWeights loss;
  OptSpec opt;
  GenCfg gen;
  GIConfig gi;
  TrainCfg train;
  DiagCfg diag;
  std::string arm = "baseline";
  std::uint64_t seed = 1;

  ModelSpec model_spec() const {
    return ModelSpec{dataset.dim, hidden, dataset.classes};
  }
  GeneratorSpec generator_spec() const {
    GeneratorSpec g;
    g.noise_dim = gen.noise_dim;
    g.embed_dim = gen.embed_dim;
    g.hidden = gen.hidden;
    g.out_dim = dataset.dim;
    g.classes = dataset.classes;
    return g;
  }
};

ExperimentConfig default_config();

/// Flat `section.key=value` lines, '#' comments. Unknown keys are rejected;
/// every field is validated.
ExperimentConfig parse_config_text(const std::string& text);
ExperimentConfig load_config_file(const std::string& path);

/// All keys, sorted, canonically formatted. Reordering-insensitive.
std::string canonical_config(const ExperimentConfig& cfg);

/// FNV-1a 64 of the canonical text, as 16 hex digits.
std::string config_hash_hex(const ExperimentConfig& cfg);

/// Known experiment arms.
std::vector<std::string> known_arms();

/// Applies the arm's fixed choices (delta, GI on/off, learning-rate factor).
void apply_arm(ExperimentConfig& cfg);

}  // namespace zsq
