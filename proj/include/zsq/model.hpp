// Copyright 2026 The zsqlab Authors
// Licensed under the Apache License, Version 2.0

#pragma once

#include <string>
#include <vector>

#include "zsq/graph.hpp"
#include "zsq/losses.hpp"
#include "zsq/rng.hpp"

namespace zsq {

struct ModelSpec {
  int input_dim = 16;
  std::vector<int> hidden = {64, 64};
  int classes = 10;
};

struct GeneratorSpec {
  int noise_dim = 16;
  int embed_dim = 16;
  std::vector<int> hidden = {64, 64};
  int out_dim = 16;
  int classes = 10;
  double out_scale = 1.25;  // stretch past tanh so sample tails are reachable
};

/// Classifier: input -> [dense(no bias) -> BN -> ReLU]* -> dense -> logits.
/// The same structure serves the teacher and both student variants; the
/// student additionally fake-quantizes dense weights and layer inputs.
struct ClassifierNet {
  Graph g;
  int input = -1;
  int target = -1;        // label-distribution input
  int teacher_logits = -1;  // reference input (students only, else -1)
  int logits = -1;
  int ce = -1;            // scalar nodes
  int kl = -1;
  int loss = -1;          // (1-delta) ce + delta kl (students), ce (teacher)
  std::vector<int> bn_inputs;    // pre-BN activation nodes
  std::vector<int> bn_states;
  bool quantized = false;
};

/// Teacher / KD-student: full precision, loss = CE (teacher) or mixed (student).
ClassifierNet build_teacher(const ModelSpec& spec, Rng& rng);

/// Distillation student. When w_bits/a_bits > 0 the dense weights and layer
/// inputs are fake-quantized. delta mixes CE with KL at build time.
ClassifierNet build_student(const ModelSpec& spec, int w_bits, int a_bits, double delta,
                            double temperature, Rng& rng);

/// Conditional generator: (noise, one-hot label) -> sample.
struct GeneratorNet {
  Graph g;
  int noise = -1;
  int label = -1;  // one-hot input
  int out = -1;
  GeneratorSpec spec;
};

GeneratorNet build_generator(const GeneratorSpec& spec, Rng& rng);

/// Frozen copy of the teacher wired for the generator objective:
/// loss = (1-alpha) CE(teacher(x), target) + alpha * sum_l BNS_l(x).
/// Teacher BN layers run on running stats; the penalty reads the batch
/// statistics of their inputs.
struct GenObjective {
  Graph g;
  int sample = -1;
  int target = -1;
  int ce = -1;
  int bns = -1;
  int loss = -1;
};

GenObjective build_gen_objective(const ClassifierNet& teacher, double alpha);

/// Copies parameters, BN running stats between same-architecture nets.
void copy_classifier_state(const ClassifierNet& src, ClassifierNet& dst);

struct SyntheticBatch {
  Tensor samples;
  std::vector<int> labels;
};

/// Deterministic generator evaluation: noise rows must equal label count.
SyntheticBatch generate_samples(GeneratorNet& gen, const Tensor& noise,
                                const std::vector<int>& labels, Mode mode);

/// Eq.-5-style scalar on a live teacher (measurement path; training uses the
/// objective graph, which computes the same value).
double generator_loss(ClassifierNet& teacher, const SyntheticBatch& batch, double alpha,
                      double label_smoothing);

Tensor one_hot(const std::vector<int>& labels, int classes);

}  // namespace zsq
