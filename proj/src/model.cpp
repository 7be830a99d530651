// Copyright 2026 The zsqlab Authors
// Licensed under the Apache License, Version 2.0

#include "zsq/model.hpp"

#include <cmath>

namespace zsq {

namespace {

Tensor he_init(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  Tensor w({fan_in, fan_out});
  const double std = std::sqrt(2.0 / static_cast<double>(fan_in));
  for (std::size_t i = 0; i < w.numel(); ++i) w.at(i) = std * rng.normal();
  return w;
}

Tensor xavier_init(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  Tensor w({fan_in, fan_out});
  const double std = std::sqrt(1.0 / static_cast<double>(fan_in));
  for (std::size_t i = 0; i < w.numel(); ++i) w.at(i) = std * rng.normal();
  return w;
}

struct ClassifierBody {
  int logits = -1;
  std::vector<int> bn_inputs;
  std::vector<int> bn_states;
};

// Shared classifier topology. When quantized, each dense input passes an
// activation fake-quant node and each dense weight owns a wq state.
ClassifierBody classifier_body(Graph& g, int input, const ModelSpec& spec, int w_bits,
                               int a_bits, Rng& rng, const std::string& prefix) {
  ClassifierBody body;
  int x = input;
  std::size_t in_dim = static_cast<std::size_t>(spec.input_dim);
  const bool quant = w_bits > 0;
  for (std::size_t l = 0; l < spec.hidden.size(); ++l) {
    const std::size_t out_dim = static_cast<std::size_t>(spec.hidden[l]);
    const std::string name = prefix + "d" + std::to_string(l + 1);
    const int w = g.add_param(name + ".w", he_init(in_dim, out_dim, rng));
    int xin = x;
    if (quant && a_bits > 0) xin = g.act_quant(x, g.add_observer(0.1), a_bits);
    const int wq = quant ? g.add_wq_state(name, w_bits) : -1;
    const int h = g.dense(xin, w, -1, wq);
    body.bn_inputs.push_back(h);
    const int gamma = g.add_param(name + ".gamma", Tensor::full({out_dim}, 1.0));
    const int beta = g.add_param(name + ".beta", Tensor({out_dim}));
    const int bn = g.add_bn_state(out_dim);
    body.bn_states.push_back(bn);
    const int normed = g.batch_norm(h, gamma, beta, bn);
    x = g.relu(normed);
    in_dim = out_dim;
  }
  const std::string name = prefix + "d" + std::to_string(spec.hidden.size() + 1);
  const std::size_t out_dim = static_cast<std::size_t>(spec.classes);
  const int w = g.add_param(name + ".w", xavier_init(in_dim, out_dim, rng));
  const int b = g.add_param(name + ".b", Tensor({out_dim}));
  int xin = x;
  if (quant && a_bits > 0) xin = g.act_quant(x, g.add_observer(0.1), a_bits);
  const int wq = quant ? g.add_wq_state(name, w_bits) : -1;
  body.logits = g.dense(xin, w, b, wq);
  return body;
}

}  // namespace

ClassifierNet build_teacher(const ModelSpec& spec, Rng& rng) {
  ClassifierNet net;
  net.input = net.g.add_input("x", static_cast<std::size_t>(spec.input_dim));
  net.target = net.g.add_input("target", static_cast<std::size_t>(spec.classes));
  ClassifierBody body = classifier_body(net.g, net.input, spec, 0, 0, rng, "t.");
  net.logits = body.logits;
  net.bn_inputs = body.bn_inputs;
  net.bn_states = body.bn_states;
  net.ce = net.g.ce_loss(net.logits, net.target);
  net.loss = net.ce;
  return net;
}

ClassifierNet build_student(const ModelSpec& spec, int w_bits, int a_bits, double delta,
                            double temperature, Rng& rng) {
  ZSQ_CHECK(delta >= 0.0 && delta <= 1.0, "build_student: delta out of [0,1]");
  ClassifierNet net;
  net.quantized = w_bits > 0;
  net.input = net.g.add_input("x", static_cast<std::size_t>(spec.input_dim));
  net.target = net.g.add_input("target", static_cast<std::size_t>(spec.classes));
  net.teacher_logits = net.g.add_input("teacher_logits", static_cast<std::size_t>(spec.classes));
  ClassifierBody body = classifier_body(net.g, net.input, spec, w_bits, a_bits, rng, "q.");
  net.logits = body.logits;
  net.bn_inputs = body.bn_inputs;
  net.bn_states = body.bn_states;
  net.ce = net.g.ce_loss(net.logits, net.target);
  net.kl = net.g.kl_loss(net.logits, net.teacher_logits, temperature);
  net.loss = net.g.add(net.g.scale(net.ce, 1.0 - delta), net.g.scale(net.kl, delta));
  return net;
}

GeneratorNet build_generator(const GeneratorSpec& spec, Rng& rng) {
  GeneratorNet net;
  net.spec = spec;
  Graph& g = net.g;
  net.noise = g.add_input("noise", static_cast<std::size_t>(spec.noise_dim));
  net.label = g.add_input("label", static_cast<std::size_t>(spec.classes));
  const int embed = g.add_param(
      "g.embed", xavier_init(static_cast<std::size_t>(spec.classes),
                             static_cast<std::size_t>(spec.embed_dim), rng));
  const int emb = g.dense(net.label, embed);
  int x = g.concat(net.noise, emb);
  std::size_t in_dim = static_cast<std::size_t>(spec.noise_dim + spec.embed_dim);
  for (std::size_t l = 0; l < spec.hidden.size(); ++l) {
    const std::size_t out_dim = static_cast<std::size_t>(spec.hidden[l]);
    const std::string name = "g.d" + std::to_string(l + 1);
    const int w = g.add_param(name + ".w", he_init(in_dim, out_dim, rng));
    const int h = g.dense(x, w);
    const int gamma = g.add_param(name + ".gamma", Tensor::full({out_dim}, 1.0));
    const int beta = g.add_param(name + ".beta", Tensor({out_dim}));
    const int bn = g.add_bn_state(out_dim);
    x = g.relu(g.batch_norm(h, gamma, beta, bn));
    in_dim = out_dim;
  }
  const std::string name = "g.out";
  const int w = g.add_param(name + ".w",
                            xavier_init(in_dim, static_cast<std::size_t>(spec.out_dim), rng));
  const int b = g.add_param(name + ".b", Tensor({static_cast<std::size_t>(spec.out_dim)}));
  net.out = g.scale(g.tanh_act(g.dense(x, w, b)), spec.out_scale);
  return net;
}

GenObjective build_gen_objective(const ClassifierNet& teacher, double alpha) {
  ZSQ_CHECK(alpha >= 0.0 && alpha <= 1.0, "build_gen_objective: alpha out of [0,1]");
  GenObjective obj;
  Graph& g = obj.g;
  // Rebuild the teacher topology frozen, copying parameters and BN stats.
  const Graph& tg = teacher.g;
  std::size_t input_dim = 0, classes = 0;
  for (const auto& [name, id] : tg.inputs()) {
    if (name == "x") input_dim = tg.input_features(id);
    if (name == "target") classes = tg.input_features(id);
  }
  obj.sample = g.add_input("x", input_dim);
  obj.target = g.add_input("target", classes);

  int x = obj.sample;
  std::vector<int> penalties;
  int logits = -1;
  // Walk the teacher graph nodes and mirror dense/bn/relu in order.
  for (std::size_t id = 0; id < tg.node_count(); ++id) {
    const Node& n = tg.node(static_cast<int>(id));
    switch (n.op) {
      case Op::dense: {
        const int w = g.add_param(tg.param_name(n.w), tg.param(n.w));
        const int b = n.b >= 0 ? g.add_param(tg.param_name(n.b), tg.param(n.b)) : -1;
        logits = x = g.dense(x, w, b);
        break;
      }
      case Op::batch_norm: {
        const int gamma = g.add_param(tg.param_name(n.gamma), tg.param(n.gamma));
        const int beta = g.add_param(tg.param_name(n.beta), tg.param(n.beta));
        const int bn = g.add_bn_state(tg.param(n.gamma).numel());
        g.bn_state_mut(bn) = tg.bn_state(n.bn);
        penalties.push_back(g.bns_penalty(x, bn));
        x = g.batch_norm(x, gamma, beta, bn, /*frozen=*/true);
        break;
      }
      case Op::relu:
        x = g.relu(x);
        break;
      case Op::input:
      case Op::ce_loss:
        break;
      default:
        fail("build_gen_objective: unsupported teacher op");
    }
  }
  ZSQ_CHECK(!penalties.empty(), "build_gen_objective: teacher has no batch-norm layers");
  obj.ce = g.ce_loss(logits, obj.target);
  int bns = penalties[0];
  for (std::size_t i = 1; i < penalties.size(); ++i) bns = g.add(bns, penalties[i]);
  obj.bns = bns;
  obj.loss = g.add(g.scale(obj.ce, 1.0 - alpha), g.scale(obj.bns, alpha));
  return obj;
}

void copy_classifier_state(const ClassifierNet& src, ClassifierNet& dst) {
  ZSQ_CHECK(src.g.param_count() == dst.g.param_count(),
            "copy_classifier_state: architecture mismatch");
  for (std::size_t p = 0; p < src.g.param_count(); ++p) {
    const Tensor& s = src.g.param(static_cast<int>(p));
    Tensor& d = dst.g.param_mut(static_cast<int>(p));
    ZSQ_CHECK(s.numel() == d.numel(), "copy_classifier_state: parameter shape mismatch");
    d = s;
  }
  ZSQ_CHECK(src.g.bn_state_count() == dst.g.bn_state_count(),
            "copy_classifier_state: bn state mismatch");
  for (std::size_t i = 0; i < src.g.bn_state_count(); ++i)
    dst.g.bn_state_mut(static_cast<int>(i)) = src.g.bn_state(static_cast<int>(i));
}

SyntheticBatch generate_samples(GeneratorNet& gen, const Tensor& noise,
                                const std::vector<int>& labels, Mode mode) {
  ZSQ_CHECK(noise.rank() == 2 && noise.rows() == labels.size(),
            "generate_samples: noise rows must equal label count");
  SyntheticBatch batch;
  batch.labels = labels;
  const Tensor onehot = one_hot(labels, gen.spec.classes);
  ForwardCache cache = forward(gen.g, {{"noise", noise}, {"label", onehot}}, mode);
  batch.samples = cache.at(gen.out);
  return batch;
}

double generator_loss(ClassifierNet& teacher, const SyntheticBatch& batch, double alpha,
                      double label_smoothing) {
  ZSQ_CHECK(alpha >= 0.0 && alpha <= 1.0, "generator_loss: alpha out of [0,1]");
  // Logits in eval mode (frozen running stats); the BNS term reads the
  // batch statistics of each BN layer's input on the same samples.
  std::size_t classes = 0;
  for (const auto& [name, id] : teacher.g.inputs())
    if (name == "target") classes = teacher.g.input_features(id);
  const Tensor target = smooth_labels(batch.labels, label_smoothing, static_cast<int>(classes));
  ForwardCache cache = forward(teacher.g, {{"x", batch.samples}, {"target", target}}, Mode::eval);
  const double ce = cross_entropy(cache.at(teacher.logits), target);
  std::vector<std::pair<Tensor, Tensor>> stats;
  std::vector<const BatchNormState*> states;
  for (std::size_t l = 0; l < teacher.bn_inputs.size(); ++l) {
    stats.push_back(batch_mean_var(cache.at(teacher.bn_inputs[l])));
    states.push_back(&teacher.g.bn_state(teacher.bn_states[l]));
  }
  return (1.0 - alpha) * ce + alpha * bns_loss(stats, states);
}

Tensor one_hot(const std::vector<int>& labels, int classes) {
  Tensor t({labels.size(), static_cast<std::size_t>(classes)});
  for (std::size_t r = 0; r < labels.size(); ++r) {
    ZSQ_CHECK(labels[r] >= 0 && labels[r] < classes, "one_hot: label out of range");
    t.at(r, static_cast<std::size_t>(labels[r])) = 1.0;
  }
  return t;
}

}  // namespace zsq
