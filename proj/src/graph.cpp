// Copyright 2026 The zsqlab Authors
// Licensed under the Apache License, Version 2.0

#include "zsq/graph.hpp"

#include <algorithm>
#include <cmath>

#include "zsq/losses.hpp"

namespace zsq {

namespace {

void check_finite(const Tensor& t, const char* where) {
  ZSQ_CHECK(t.all_finite(), std::string("non-finite value in ") + where);
}

// y [B,O] = x [B,I] * w [I,O] (+ b [O])
Tensor matmul_bias(const Tensor& x, const Tensor& w, const Tensor* b) {
  ZSQ_CHECK(x.rank() == 2 && w.rank() == 2, "dense expects rank-2 operands");
  ZSQ_CHECK(x.cols() == w.rows(), "dense shape mismatch: x " + shape_str(x) + " w " + shape_str(w));
  const std::size_t B = x.rows(), I = x.cols(), O = w.cols();
  Tensor y({B, O});
  for (std::size_t r = 0; r < B; ++r) {
    double* yr = y.data() + r * O;
    if (b) {
      for (std::size_t c = 0; c < O; ++c) yr[c] = b->at(c);
    }
    const double* xr = x.data() + r * I;
    for (std::size_t k = 0; k < I; ++k) {
      const double xv = xr[k];
      const double* wk = w.data() + k * O;
      for (std::size_t c = 0; c < O; ++c) yr[c] += xv * wk[c];
    }
  }
  return y;
}

void softmax_rows(const Tensor& x, Tensor& out, bool log_form) {
  const std::size_t B = x.rows(), K = x.cols();
  for (std::size_t r = 0; r < B; ++r) {
    const double* xr = x.data() + r * K;
    double* orow = out.data() + r * K;
    double mx = xr[0];
    for (std::size_t c = 1; c < K; ++c) mx = std::max(mx, xr[c]);
    double z = 0.0;
    for (std::size_t c = 0; c < K; ++c) z += std::exp(xr[c] - mx);
    const double lz = std::log(z);
    for (std::size_t c = 0; c < K; ++c) {
      const double l = xr[c] - mx - lz;
      orow[c] = log_form ? l : std::exp(l);
    }
  }
}

}  // namespace

int Graph::push(Node n) {
  nodes_.push_back(n);
  return static_cast<int>(nodes_.size()) - 1;
}

void Graph::check_node(int id) const {
  ZSQ_CHECK(id >= 0 && id < static_cast<int>(nodes_.size()), "bad node id");
}

void Graph::check_param(int id) const {
  ZSQ_CHECK(id >= 0 && id < static_cast<int>(params_.size()), "bad param id");
}

int Graph::add_input(const std::string& name, std::size_t features) {
  ZSQ_CHECK(inputs_.find(name) == inputs_.end(), "duplicate input name " + name);
  Node n;
  n.op = Op::input;
  const int id = push(n);
  inputs_[name] = id;
  input_features_.resize(nodes_.size(), 0);
  input_features_[static_cast<std::size_t>(id)] = features;
  ++version_;
  return id;
}

int Graph::add_param(const std::string& name, Tensor value) {
  ZSQ_CHECK(value.numel() > 0, "empty parameter " + name);
  params_.push_back(std::move(value));
  param_names_.push_back(name);
  ++version_;
  return static_cast<int>(params_.size()) - 1;
}

int Graph::find_param(const std::string& name) const {
  for (std::size_t i = 0; i < param_names_.size(); ++i)
    if (param_names_[i] == name) return static_cast<int>(i);
  return -1;
}

int Graph::dense(int x, int w_param, int b_param, int wq_state) {
  check_node(x);
  check_param(w_param);
  if (b_param >= 0) check_param(b_param);
  Node n;
  n.op = Op::dense;
  n.in0 = x;
  n.w = w_param;
  n.b = b_param;
  n.wq = wq_state;
  ++version_;
  return push(n);
}

int Graph::batch_norm(int x, int gamma, int beta, int bn_state, bool frozen) {
  check_node(x);
  check_param(gamma);
  check_param(beta);
  Node n;
  n.op = Op::batch_norm;
  n.in0 = x;
  n.gamma = gamma;
  n.beta = beta;
  n.bn = bn_state;
  n.bn_frozen = frozen;
  ++version_;
  return push(n);
}

#define ZSQ_UNARY(fn, kind)       \
  int Graph::fn(int x) {          \
    check_node(x);                \
    Node n;                       \
    n.op = kind;                  \
    n.in0 = x;                    \
    ++version_;                   \
    return push(n);               \
  }

ZSQ_UNARY(relu, Op::relu)
ZSQ_UNARY(tanh_act, Op::tanh_act)
ZSQ_UNARY(softmax, Op::softmax)
ZSQ_UNARY(log_softmax, Op::log_softmax)
ZSQ_UNARY(sum, Op::sum)
ZSQ_UNARY(mean, Op::mean)
ZSQ_UNARY(stop_grad, Op::stop_grad)
#undef ZSQ_UNARY

int Graph::concat(int a, int b) {
  check_node(a);
  check_node(b);
  Node n;
  n.op = Op::concat;
  n.in0 = a;
  n.in1 = b;
  ++version_;
  return push(n);
}

int Graph::add(int a, int b) {
  check_node(a);
  check_node(b);
  Node n;
  n.op = Op::add;
  n.in0 = a;
  n.in1 = b;
  ++version_;
  return push(n);
}

int Graph::scale(int x, double c) {
  check_node(x);
  Node n;
  n.op = Op::scale;
  n.in0 = x;
  n.c = c;
  ++version_;
  return push(n);
}

int Graph::ce_loss(int logits, int target) {
  check_node(logits);
  check_node(target);
  Node n;
  n.op = Op::ce_loss;
  n.in0 = logits;
  n.in1 = target;
  ++version_;
  return push(n);
}

int Graph::kl_loss(int logits, int reference, double temperature) {
  check_node(logits);
  check_node(reference);
  ZSQ_CHECK(temperature > 0.0, "kl_loss: temperature must be positive");
  Node n;
  n.op = Op::kl_loss;
  n.in0 = logits;
  n.in1 = reference;
  n.c = temperature;
  ++version_;
  return push(n);
}

int Graph::bns_penalty(int x, int bn_state) {
  check_node(x);
  ZSQ_CHECK(bn_state >= 0 && bn_state < static_cast<int>(bn_states_.size()),
            "bns_penalty: bad bn state");
  Node n;
  n.op = Op::bns_penalty;
  n.in0 = x;
  n.bn = bn_state;
  ++version_;
  return push(n);
}

int Graph::act_quant(int x, int observer, int bits) {
  check_node(x);
  ZSQ_CHECK(observer >= 0 && observer < static_cast<int>(observers_.size()),
            "act_quant: bad observer");
  ZSQ_CHECK(bits >= 2, "act_quant: bit-width must be >= 2");
  Node n;
  n.op = Op::act_quant;
  n.in0 = x;
  n.obs = observer;
  n.bits = bits;
  ++version_;
  return push(n);
}

int Graph::add_bn_state(std::size_t features, double momentum, double eps) {
  BatchNormState s;
  s.running_mean = Tensor({features});
  s.running_var = Tensor::full({features}, 1.0);
  s.momentum = momentum;
  s.eps = eps;
  bn_states_.push_back(std::move(s));
  return static_cast<int>(bn_states_.size()) - 1;
}

int Graph::add_observer(double momentum) {
  ActivationObserver o;
  o.momentum = momentum;
  observers_.push_back(o);
  return static_cast<int>(observers_.size()) - 1;
}

int Graph::add_wq_state(const std::string& layer, int bits) {
  QuantizedLayerState s;
  s.layer = layer;
  s.bits = bits;
  wq_states_.push_back(std::move(s));
  return static_cast<int>(wq_states_.size()) - 1;
}

std::vector<std::pair<int, int>> Graph::quantized_params() const {
  std::vector<std::pair<int, int>> out;
  for (const Node& n : nodes_)
    if (n.op == Op::dense && n.wq >= 0) out.emplace_back(n.w, n.wq);
  return out;
}

std::size_t Graph::total_param_elems() const {
  std::size_t n = 0;
  for (const Tensor& p : params_) n += p.numel();
  return n;
}

// ---------------------------------------------------------------------------
// forward

ForwardCache forward(Graph& g, const std::map<std::string, Tensor>& inputs, Mode mode) {
  for (const auto& [name, tensor] : inputs)
    ZSQ_CHECK(g.inputs().count(name) == 1, "unknown input " + name);
  for (const auto& [name, id] : g.inputs())
    ZSQ_CHECK(inputs.count(name) == 1, "missing input " + name);

  ForwardCache cache;
  cache.mode = mode;
  cache.version = g.version();
  const std::size_t N = g.node_count();
  cache.value.resize(N);
  cache.aux.resize(N);

  for (std::size_t id = 0; id < N; ++id) {
    const Node& n = g.node(static_cast<int>(id));
    Tensor& out = cache.value[id];
    ForwardCache::Aux& aux = cache.aux[id];
    switch (n.op) {
      case Op::input: {
        std::string name;
        for (const auto& [nm, nid] : g.inputs())
          if (nid == static_cast<int>(id)) name = nm;
        const Tensor& x = inputs.at(name);
        ZSQ_CHECK(x.rank() == 2, "input " + name + " must be rank-2 [batch, features]");
        const std::size_t want = g.input_features(static_cast<int>(id));
        ZSQ_CHECK(x.cols() == want, "input " + name + " expects " + std::to_string(want) +
                                        " features, got " + std::to_string(x.cols()));
        out = x;
        break;
      }
      case Op::dense: {
        const Tensor& x = cache.value[static_cast<std::size_t>(n.in0)];
        const Tensor* bias = n.b >= 0 ? &g.param(n.b) : nullptr;
        if (n.wq >= 0) {
          // Weight path: range refit from the live tensor every pass.
          const Tensor& w = g.param(n.w);
          QuantizedLayerState local = g.wq_state(n.wq);
          Tensor wq = fake_quant_forward(w, local.bits, local);
          aux.a = wq;
          aux.qp = local.affine;
          aux.quantized = true;
          if (mode == Mode::train) g.wq_state_mut(n.wq) = local;
          out = matmul_bias(x, wq, bias);
        } else {
          out = matmul_bias(x, g.param(n.w), bias);
        }
        break;
      }
      case Op::batch_norm: {
        const Tensor& x = cache.value[static_cast<std::size_t>(n.in0)];
        ZSQ_CHECK(x.rank() == 2, "batch_norm expects rank-2 input");
        const std::size_t B = x.rows(), F = x.cols();
        const Tensor& gamma = g.param(n.gamma);
        const Tensor& beta = g.param(n.beta);
        BatchNormState& st = g.bn_state_mut(n.bn);
        ZSQ_CHECK(gamma.numel() == F && beta.numel() == F && st.running_mean.numel() == F,
                  "batch_norm feature mismatch");
        const bool use_batch = !n.bn_frozen && mode != Mode::eval;
        Tensor mean({F}), invstd({F});
        if (use_batch) {
          Tensor var({F});
          for (std::size_t c = 0; c < F; ++c) {
            double m = 0.0;
            for (std::size_t r = 0; r < B; ++r) m += x.at(r, c);
            m /= static_cast<double>(B);
            double v = 0.0;
            for (std::size_t r = 0; r < B; ++r) {
              const double d = x.at(r, c) - m;
              v += d * d;
            }
            v /= static_cast<double>(B);
            mean.at(c) = m;
            var.at(c) = v;
            invstd.at(c) = 1.0 / std::sqrt(v + st.eps);
          }
          if (mode == Mode::train && !n.bn_frozen) {
            for (std::size_t c = 0; c < F; ++c) {
              st.running_mean.at(c) =
                  (1.0 - st.momentum) * st.running_mean.at(c) + st.momentum * mean.at(c);
              st.running_var.at(c) =
                  (1.0 - st.momentum) * st.running_var.at(c) + st.momentum * var.at(c);
            }
          }
        } else {
          for (std::size_t c = 0; c < F; ++c) {
            mean.at(c) = st.running_mean.at(c);
            invstd.at(c) = 1.0 / std::sqrt(st.running_var.at(c) + st.eps);
          }
        }
        out = Tensor({B, F});
        for (std::size_t r = 0; r < B; ++r)
          for (std::size_t c = 0; c < F; ++c)
            out.at(r, c) = gamma.at(c) * (x.at(r, c) - mean.at(c)) * invstd.at(c) + beta.at(c);
        aux.a = mean;
        aux.b = invstd;
        break;
      }
      case Op::relu: {
        const Tensor& x = cache.value[static_cast<std::size_t>(n.in0)];
        out = Tensor::zeros_like(x);
        for (std::size_t i = 0; i < x.numel(); ++i) out.at(i) = x.at(i) > 0.0 ? x.at(i) : 0.0;
        break;
      }
      case Op::tanh_act: {
        const Tensor& x = cache.value[static_cast<std::size_t>(n.in0)];
        out = Tensor::zeros_like(x);
        for (std::size_t i = 0; i < x.numel(); ++i) out.at(i) = std::tanh(x.at(i));
        break;
      }
      case Op::softmax:
      case Op::log_softmax: {
        const Tensor& x = cache.value[static_cast<std::size_t>(n.in0)];
        ZSQ_CHECK(x.rank() == 2, "softmax expects rank-2 input");
        out = Tensor::zeros_like(x);
        softmax_rows(x, out, n.op == Op::log_softmax);
        break;
      }
      case Op::concat: {
        const Tensor& a = cache.value[static_cast<std::size_t>(n.in0)];
        const Tensor& b = cache.value[static_cast<std::size_t>(n.in1)];
        ZSQ_CHECK(a.rank() == 2 && b.rank() == 2 && a.rows() == b.rows(),
                  "concat expects rank-2 inputs with equal batch");
        out = Tensor({a.rows(), a.cols() + b.cols()});
        for (std::size_t r = 0; r < a.rows(); ++r) {
          for (std::size_t c = 0; c < a.cols(); ++c) out.at(r, c) = a.at(r, c);
          for (std::size_t c = 0; c < b.cols(); ++c) out.at(r, a.cols() + c) = b.at(r, c);
        }
        break;
      }
      case Op::add: {
        const Tensor& a = cache.value[static_cast<std::size_t>(n.in0)];
        const Tensor& b = cache.value[static_cast<std::size_t>(n.in1)];
        ZSQ_CHECK(a.same_shape(b), "add shape mismatch");
        out = Tensor::zeros_like(a);
        for (std::size_t i = 0; i < a.numel(); ++i) out.at(i) = a.at(i) + b.at(i);
        break;
      }
      case Op::scale: {
        const Tensor& x = cache.value[static_cast<std::size_t>(n.in0)];
        out = Tensor::zeros_like(x);
        for (std::size_t i = 0; i < x.numel(); ++i) out.at(i) = n.c * x.at(i);
        break;
      }
      case Op::sum: {
        const Tensor& x = cache.value[static_cast<std::size_t>(n.in0)];
        double s = 0.0;
        for (std::size_t i = 0; i < x.numel(); ++i) s += x.at(i);
        out = Tensor::scalar(s);
        break;
      }
      case Op::mean: {
        const Tensor& x = cache.value[static_cast<std::size_t>(n.in0)];
        double s = 0.0;
        for (std::size_t i = 0; i < x.numel(); ++i) s += x.at(i);
        out = Tensor::scalar(s / static_cast<double>(x.numel()));
        break;
      }
      case Op::ce_loss: {
        const Tensor& logits = cache.value[static_cast<std::size_t>(n.in0)];
        const Tensor& target = cache.value[static_cast<std::size_t>(n.in1)];
        out = Tensor::scalar(cross_entropy(logits, target));
        break;
      }
      case Op::kl_loss: {
        const Tensor& logits = cache.value[static_cast<std::size_t>(n.in0)];
        const Tensor& ref = cache.value[static_cast<std::size_t>(n.in1)];
        out = Tensor::scalar(kl_divergence(logits, ref, n.c));
        break;
      }
      case Op::bns_penalty: {
        const Tensor& x = cache.value[static_cast<std::size_t>(n.in0)];
        const BatchNormState& st = g.bn_state(n.bn);
        out = Tensor::scalar(bns_penalty_value(x, st.running_mean, st.running_var));
        break;
      }
      case Op::act_quant: {
        const Tensor& x = cache.value[static_cast<std::size_t>(n.in0)];
        if (mode == Mode::train) observe_activation(g.observer_mut(n.obs), x);
        const ActivationObserver& obs = g.observer(n.obs);
        if (obs.observed_batches == 0) {
          // Not calibrated yet: pass through (gradients pass too).
          out = x;
          aux.quantized = false;
        } else {
          aux.qp = observer_params(obs, n.bits);
          aux.quantized = true;
          out = fake_quant_with_params(x, aux.qp, n.bits);
        }
        break;
      }
      case Op::stop_grad: {
        out = cache.value[static_cast<std::size_t>(n.in0)];
        break;
      }
    }
    check_finite(out, "forward node output");
  }
  return cache;
}

// ---------------------------------------------------------------------------
// backward

Gradients backward(const Graph& g, const ForwardCache& cache, int seed_node,
                   const Tensor* upstream) {
  ZSQ_CHECK(cache.version == g.version(),
            "stale activations: graph parameters changed since forward");
  ZSQ_CHECK(seed_node >= 0 && seed_node < static_cast<int>(g.node_count()), "bad seed node");
  const Tensor& seed_val = cache.at(seed_node);
  Tensor seed_grad;
  if (upstream) {
    ZSQ_CHECK(upstream->same_shape(seed_val), "upstream gradient shape mismatch");
    seed_grad = *upstream;
  } else {
    ZSQ_CHECK(seed_val.numel() == 1, "backward without upstream requires a scalar loss node");
    seed_grad = Tensor::scalar(1.0);
  }

  std::vector<Tensor> adj(g.node_count());
  adj[static_cast<std::size_t>(seed_node)] = seed_grad;

  Gradients grads;
  grads.param.resize(g.param_count());
  for (std::size_t p = 0; p < g.param_count(); ++p)
    grads.param[p] = Tensor::zeros_like(g.param(static_cast<int>(p)));

  auto touch = [&](int node) -> Tensor& {
    Tensor& t = adj[static_cast<std::size_t>(node)];
    if (t.numel() == 0) t = Tensor::zeros_like(cache.at(node));
    return t;
  };

  for (int id = seed_node; id >= 0; --id) {
    const Tensor& gy = adj[static_cast<std::size_t>(id)];
    if (gy.numel() == 0) continue;  // node not on any path to the seed
    const Node& n = g.node(id);
    const ForwardCache::Aux& aux = cache.aux[static_cast<std::size_t>(id)];
    switch (n.op) {
      case Op::input:
        break;
      case Op::dense: {
        const Tensor& x = cache.at(n.in0);
        const Tensor& weff = aux.quantized ? aux.a : g.param(n.w);
        const std::size_t B = x.rows(), I = x.cols(), O = weff.cols();
        // dX = gY * W^T
        Tensor& gx = touch(n.in0);
        for (std::size_t r = 0; r < B; ++r)
          for (std::size_t k = 0; k < I; ++k) {
            double s = 0.0;
            const double* wk = weff.data() + k * O;
            const double* gr = gy.data() + r * O;
            for (std::size_t c = 0; c < O; ++c) s += gr[c] * wk[c];
            gx.at(r, k) += s;
          }
        // dW = X^T * gY (straight-through onto the stored full-precision weights)
        Tensor gw({I, O});
        for (std::size_t k = 0; k < I; ++k)
          for (std::size_t r = 0; r < B; ++r) {
            const double xv = x.at(r, k);
            const double* gr = gy.data() + r * O;
            double* gwk = gw.data() + k * O;
            for (std::size_t c = 0; c < O; ++c) gwk[c] += xv * gr[c];
          }
        if (aux.quantized) gw = ste_backward(gw, g.param(n.w), aux.qp);
        Tensor& acc = grads.param[static_cast<std::size_t>(n.w)];
        for (std::size_t i = 0; i < gw.numel(); ++i) acc.at(i) += gw.at(i);
        if (n.b >= 0) {
          Tensor& gb = grads.param[static_cast<std::size_t>(n.b)];
          for (std::size_t r = 0; r < B; ++r)
            for (std::size_t c = 0; c < O; ++c) gb.at(c) += gy.at(r, c);
        }
        break;
      }
      case Op::batch_norm: {
        const Tensor& x = cache.at(n.in0);
        const std::size_t B = x.rows(), F = x.cols();
        const Tensor& gamma = g.param(n.gamma);
        const Tensor& mean = aux.a;
        const Tensor& invstd = aux.b;
        Tensor& gx = touch(n.in0);
        Tensor& ggamma = grads.param[static_cast<std::size_t>(n.gamma)];
        Tensor& gbeta = grads.param[static_cast<std::size_t>(n.beta)];
        const bool used_batch = !n.bn_frozen && cache.mode != Mode::eval;
        for (std::size_t c = 0; c < F; ++c) {
          const double m = mean.at(c), is = invstd.at(c), gm = gamma.at(c);
          double sum_gy = 0.0, sum_gy_xhat = 0.0;
          for (std::size_t r = 0; r < B; ++r) {
            const double xhat = (x.at(r, c) - m) * is;
            sum_gy += gy.at(r, c);
            sum_gy_xhat += gy.at(r, c) * xhat;
          }
          gbeta.at(c) += sum_gy;
          ggamma.at(c) += sum_gy_xhat;
          if (used_batch) {
            // Train-statistics backward; biased batch variance.
            const double inv_b = 1.0 / static_cast<double>(B);
            for (std::size_t r = 0; r < B; ++r) {
              const double xhat = (x.at(r, c) - m) * is;
              const double gxhat = gy.at(r, c) * gm;
              gx.at(r, c) +=
                  is * (gxhat - inv_b * (gm * sum_gy + xhat * gm * sum_gy_xhat));
            }
          } else {
            for (std::size_t r = 0; r < B; ++r) gx.at(r, c) += gy.at(r, c) * gm * is;
          }
        }
        break;
      }
      case Op::relu: {
        const Tensor& x = cache.at(n.in0);
        Tensor& gx = touch(n.in0);
        for (std::size_t i = 0; i < x.numel(); ++i)
          if (x.at(i) > 0.0) gx.at(i) += gy.at(i);
        break;
      }
      case Op::tanh_act: {
        const Tensor& y = cache.at(id);
        Tensor& gx = touch(n.in0);
        for (std::size_t i = 0; i < y.numel(); ++i)
          gx.at(i) += gy.at(i) * (1.0 - y.at(i) * y.at(i));
        break;
      }
      case Op::softmax: {
        const Tensor& y = cache.at(id);
        Tensor& gx = touch(n.in0);
        const std::size_t B = y.rows(), K = y.cols();
        for (std::size_t r = 0; r < B; ++r) {
          double dot = 0.0;
          for (std::size_t c = 0; c < K; ++c) dot += gy.at(r, c) * y.at(r, c);
          for (std::size_t c = 0; c < K; ++c) gx.at(r, c) += y.at(r, c) * (gy.at(r, c) - dot);
        }
        break;
      }
      case Op::log_softmax: {
        const Tensor& y = cache.at(id);
        Tensor& gx = touch(n.in0);
        const std::size_t B = y.rows(), K = y.cols();
        for (std::size_t r = 0; r < B; ++r) {
          double sum_gy = 0.0;
          for (std::size_t c = 0; c < K; ++c) sum_gy += gy.at(r, c);
          for (std::size_t c = 0; c < K; ++c)
            gx.at(r, c) += gy.at(r, c) - std::exp(y.at(r, c)) * sum_gy;
        }
        break;
      }
      case Op::concat: {
        const Tensor& a = cache.at(n.in0);
        const Tensor& b = cache.at(n.in1);
        Tensor& ga = touch(n.in0);
        Tensor& gb = touch(n.in1);
        for (std::size_t r = 0; r < a.rows(); ++r) {
          for (std::size_t c = 0; c < a.cols(); ++c) ga.at(r, c) += gy.at(r, c);
          for (std::size_t c = 0; c < b.cols(); ++c) gb.at(r, c) += gy.at(r, a.cols() + c);
        }
        break;
      }
      case Op::add: {
        Tensor& ga = touch(n.in0);
        Tensor& gb = touch(n.in1);
        for (std::size_t i = 0; i < gy.numel(); ++i) {
          ga.at(i) += gy.at(i);
          gb.at(i) += gy.at(i);
        }
        break;
      }
      case Op::scale: {
        Tensor& gx = touch(n.in0);
        for (std::size_t i = 0; i < gy.numel(); ++i) gx.at(i) += n.c * gy.at(i);
        break;
      }
      case Op::sum: {
        Tensor& gx = touch(n.in0);
        const double s = gy.at(0);
        for (std::size_t i = 0; i < gx.numel(); ++i) gx.at(i) += s;
        break;
      }
      case Op::mean: {
        Tensor& gx = touch(n.in0);
        const double s = gy.at(0) / static_cast<double>(gx.numel());
        for (std::size_t i = 0; i < gx.numel(); ++i) gx.at(i) += s;
        break;
      }
      case Op::ce_loss: {
        const Tensor& logits = cache.at(n.in0);
        const Tensor& target = cache.at(n.in1);
        const std::size_t B = logits.rows(), K = logits.cols();
        const double up = gy.at(0) / static_cast<double>(B);
        Tensor p = Tensor::zeros_like(logits);
        softmax_rows(logits, p, false);
        Tensor& gx = touch(n.in0);
        Tensor& gt = touch(n.in1);
        Tensor ls = Tensor::zeros_like(logits);
        softmax_rows(logits, ls, true);
        for (std::size_t r = 0; r < B; ++r) {
          double tsum = 0.0;
          for (std::size_t c = 0; c < K; ++c) tsum += target.at(r, c);
          for (std::size_t c = 0; c < K; ++c) {
            gx.at(r, c) += up * (p.at(r, c) * tsum - target.at(r, c));
            gt.at(r, c) += -up * ls.at(r, c);
          }
        }
        break;
      }
      case Op::kl_loss: {
        // Distillation convention: the reference side is a constant; no
        // gradient flows into in1.
        const Tensor& s = cache.at(n.in0);
        const Tensor& t = cache.at(n.in1);
        const double temp = n.c;
        const std::size_t B = s.rows(), K = s.cols();
        Tensor q({B, K}), p({B, K});
        {
          Tensor st = Tensor::zeros_like(s), tt = Tensor::zeros_like(t);
          for (std::size_t i = 0; i < s.numel(); ++i) {
            st.at(i) = s.at(i) / temp;
            tt.at(i) = t.at(i) / temp;
          }
          softmax_rows(st, q, false);
          softmax_rows(tt, p, false);
        }
        Tensor& gx = touch(n.in0);
        const double up = gy.at(0) * temp / static_cast<double>(B);
        for (std::size_t i = 0; i < s.numel(); ++i) gx.at(i) += up * (q.at(i) - p.at(i));
        break;
      }
      case Op::bns_penalty: {
        const Tensor& x = cache.at(n.in0);
        const BatchNormState& st = g.bn_state(n.bn);
        const std::size_t B = x.rows(), F = x.cols();
        const double up = gy.at(0);
        Tensor& gx = touch(n.in0);
        for (std::size_t c = 0; c < F; ++c) {
          double m = 0.0;
          for (std::size_t r = 0; r < B; ++r) m += x.at(r, c);
          m /= static_cast<double>(B);
          double v = 0.0;
          for (std::size_t r = 0; r < B; ++r) {
            const double d = x.at(r, c) - m;
            v += d * d;
          }
          v /= static_cast<double>(B);
          const double dm = m - st.running_mean.at(c);
          const double dv = v - st.running_var.at(c);
          const double k = up * 2.0 / (static_cast<double>(F) * static_cast<double>(B));
          for (std::size_t r = 0; r < B; ++r)
            gx.at(r, c) += k * (dm + dv * 2.0 * (x.at(r, c) - m));
        }
        break;
      }
      case Op::act_quant: {
        const Tensor& x = cache.at(n.in0);
        Tensor& gx = touch(n.in0);
        if (aux.quantized) {
          Tensor masked = ste_backward(gy, x, aux.qp);
          for (std::size_t i = 0; i < x.numel(); ++i) gx.at(i) += masked.at(i);
        } else {
          for (std::size_t i = 0; i < x.numel(); ++i) gx.at(i) += gy.at(i);
        }
        break;
      }
      case Op::stop_grad:
        break;
    }
  }

  for (const auto& [name, id] : g.inputs()) {
    Tensor& t = adj[static_cast<std::size_t>(id)];
    if (t.numel() > 0 && id <= seed_node) grads.input[id] = std::move(t);
  }
  return grads;
}

Tensor finite_diff_grad(const std::function<double(const Tensor&)>& loss, const Tensor& theta,
                        double eps) {
  ZSQ_CHECK(eps > 0.0, "finite_diff_grad: eps must be positive");
  Tensor g = Tensor::zeros_like(theta);
  Tensor probe = theta;
  for (std::size_t i = 0; i < theta.numel(); ++i) {
    const double orig = probe.at(i);
    probe.at(i) = orig + eps;
    const double lp = loss(probe);
    probe.at(i) = orig - eps;
    const double lm = loss(probe);
    probe.at(i) = orig;
    ZSQ_CHECK(std::isfinite(lp) && std::isfinite(lm), "finite_diff_grad: non-finite loss");
    g.at(i) = (lp - lm) / (2.0 * eps);
  }
  return g;
}

}  // namespace zsq
