// Copyright 2026 The zsqlab Authors
// Licensed under the Apache License, Version 2.0

#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "zsq/quant.hpp"
#include "zsq/tensor.hpp"

namespace zsq {

/// Forward evaluation mode.
///  train: batch-norm uses batch statistics and updates running stats;
///         observers update; weight-quant states are refreshed.
///  eval:  running statistics everywhere, no state writes.
///  probe: batch statistics like train but with no state writes, so the
///         loss is a pure function of the parameters (used by finite
///         differences and the curvature probes).
enum class Mode { train, eval, probe };

struct BatchNormState {
  Tensor running_mean;  // [F]
  Tensor running_var;   // [F]
  double momentum = 0.1;
  double eps = 1e-5;
};

enum class Op {
  input,
  dense,
  batch_norm,
  relu,
  tanh_act,
  softmax,
  log_softmax,
  concat,
  add,
  scale,
  sum,
  mean,
  ce_loss,
  kl_loss,
  bns_penalty,
  act_quant,
  stop_grad,
};

struct Node {
  Op op{};
  int in0 = -1, in1 = -1;   // input node ids
  int w = -1, b = -1;       // dense parameters (b may be -1)
  int gamma = -1, beta = -1;  // batch-norm parameters
  int bn = -1;              // batch-norm state index
  bool bn_frozen = false;   // frozen layers always use running stats
  int wq = -1;              // weight-quant state index (dense only)
  int obs = -1;             // activation observer index (act_quant only)
  int bits = 0;             // act_quant bit-width
  double c = 0.0;           // scale factor / KL temperature
};

/// Static computation graph over a parameter table. Node order is the
/// topological order (inputs always precede consumers).
class Graph {
 public:
  int add_input(const std::string& name, std::size_t features);
  int add_param(const std::string& name, Tensor value);

  int dense(int x, int w_param, int b_param = -1, int wq_state = -1);
  int batch_norm(int x, int gamma, int beta, int bn_state, bool frozen = false);
  int relu(int x);
  int tanh_act(int x);
  int softmax(int x);
  int log_softmax(int x);
  int concat(int a, int b);
  int add(int a, int b);
  int scale(int x, double c);
  int sum(int x);
  int mean(int x);
  int ce_loss(int logits, int target);
  int kl_loss(int logits, int reference, double temperature);
  int bns_penalty(int x, int bn_state);
  int act_quant(int x, int observer, int bits);
  int stop_grad(int x);

  int add_bn_state(std::size_t features, double momentum = 0.1, double eps = 1e-5);
  int add_observer(double momentum = 0.1);
  int add_wq_state(const std::string& layer, int bits);

  std::size_t node_count() const { return nodes_.size(); }
  const Node& node(int id) const { return nodes_[static_cast<std::size_t>(id)]; }

  std::size_t param_count() const { return params_.size(); }
  const std::string& param_name(int id) const { return param_names_[static_cast<std::size_t>(id)]; }
  const Tensor& param(int id) const { return params_[static_cast<std::size_t>(id)]; }
  Tensor& param_mut(int id) {
    ++version_;
    return params_[static_cast<std::size_t>(id)];
  }
  int find_param(const std::string& name) const;

  std::size_t bn_state_count() const { return bn_states_.size(); }
  const BatchNormState& bn_state(int id) const { return bn_states_[static_cast<std::size_t>(id)]; }
  BatchNormState& bn_state_mut(int id) { return bn_states_[static_cast<std::size_t>(id)]; }

  std::size_t observer_count() const { return observers_.size(); }
  const ActivationObserver& observer(int id) const { return observers_[static_cast<std::size_t>(id)]; }
  ActivationObserver& observer_mut(int id) { return observers_[static_cast<std::size_t>(id)]; }

  std::size_t wq_state_count() const { return wq_states_.size(); }
  const QuantizedLayerState& wq_state(int id) const { return wq_states_[static_cast<std::size_t>(id)]; }
  QuantizedLayerState& wq_state_mut(int id) { return wq_states_[static_cast<std::size_t>(id)]; }

  /// (param id, wq state id) for every quantized dense weight, in node order.
  std::vector<std::pair<int, int>> quantized_params() const;

  const std::map<std::string, int>& inputs() const { return inputs_; }
  std::size_t input_features(int node_id) const {
    return input_features_[static_cast<std::size_t>(node_id)];
  }

  std::uint64_t version() const { return version_; }
  std::size_t total_param_elems() const;

 private:
  int push(Node n);
  void check_node(int id) const;
  void check_param(int id) const;

  std::vector<Node> nodes_;
  std::vector<Tensor> params_;
  std::vector<std::string> param_names_;
  std::vector<BatchNormState> bn_states_;
  std::vector<ActivationObserver> observers_;
  std::vector<QuantizedLayerState> wq_states_;
  std::map<std::string, int> inputs_;          // name -> input node id
  std::vector<std::size_t> input_features_;    // by input node id order of nodes_
  std::uint64_t version_ = 0;
};

/// Per-forward cached values and the auxiliary data backward needs.
struct ForwardCache {
  struct Aux {
    Tensor a;           // dense: effective (dequantized) weights; bn: batch mean
    Tensor b;           // bn: inverse std
    AffineParams qp{};  // quantization params used this pass
    bool quantized = false;
  };
  std::vector<Tensor> value;
  std::vector<Aux> aux;
  Mode mode = Mode::probe;
  std::uint64_t version = 0;

  const Tensor& at(int node) const { return value[static_cast<std::size_t>(node)]; }
};

/// Evaluates every node. Inputs are matched by name and must match the
/// declared feature widths; every declared input must be provided.
ForwardCache forward(Graph& g, const std::map<std::string, Tensor>& inputs, Mode mode);

struct Gradients {
  std::vector<Tensor> param;            // by param id; zero for unreached params
  std::map<int, Tensor> input;          // by input node id
  const Tensor& for_param(int id) const { return param[static_cast<std::size_t>(id)]; }
};

/// Reverse-mode gradients of `seed_node` w.r.t. parameters and inputs.
/// Without an upstream tensor the seed must be scalar (a loss node).
/// Fails if the graph's parameters changed since the forward pass.
Gradients backward(const Graph& g, const ForwardCache& cache, int seed_node,
                   const Tensor* upstream = nullptr);

/// Central-difference gradient oracle: (L(th + e_i eps) - L(th - e_i eps)) / (2 eps).
Tensor finite_diff_grad(const std::function<double(const Tensor&)>& loss, const Tensor& theta,
                        double eps);

}  // namespace zsq
