// Copyright 2026 The zsqlab Authors
// Licensed under the Apache License, Version 2.0

#include "zsq/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace zsq {

namespace {

std::uint64_t fnv_row(const Tensor& x, std::size_t row) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::size_t c = 0; c < x.cols(); ++c) {
    const double v = x.at(row, c);
    unsigned char bytes[8];
    std::memcpy(bytes, &v, 8);
    for (unsigned char b : bytes) {
      h ^= b;
      h *= 0x100000001b3ULL;
    }
  }
  return h;
}

/// Inputs map with zero fillers for every declared input except "x".
std::map<std::string, Tensor> eval_inputs(const ClassifierNet& net, const Tensor& x) {
  std::map<std::string, Tensor> in;
  for (const auto& [name, id] : net.g.inputs()) {
    if (name == "x")
      in[name] = x;
    else
      in[name] = Tensor({x.rows(), net.g.input_features(id)});
  }
  return in;
}

Tensor gather_rows(const Tensor& x, const std::vector<int>& idx, std::size_t begin,
                   std::size_t end) {
  Tensor out({end - begin, x.cols()});
  for (std::size_t r = begin; r < end; ++r)
    for (std::size_t c = 0; c < x.cols(); ++c)
      out.at(r - begin, c) = x.at(static_cast<std::size_t>(idx[r]), c);
  return out;
}

// --- surface-diagnostics plumbing -----------------------------------------

struct SurfaceProbe {
  Graph g;  // snapshot of the student graph
  std::map<std::string, Tensor> inputs;
  int ce_node = -1, kl_node = -1;
  GradLayout layout;

  double loss(int node, const std::vector<double>& th) {
    set_params_flat(g, th);
    ForwardCache c = forward(g, inputs, Mode::probe);
    return c.at(node).at(0);
  }
  std::vector<double> grad(int node, const std::vector<double>& th) {
    set_params_flat(g, th);
    ForwardCache c = forward(g, inputs, Mode::probe);
    Gradients gr = backward(g, c, node);
    return flatten_grads(gr, layout);
  }
};

double hvp_eps(const std::vector<double>& theta) {
  double mx = 0.0;
  for (double v : theta) mx = std::max(mx, std::fabs(v));
  return 1e-4 * (1.0 + mx);
}

/// Rejects Hutchinson probe directions whose FD displacement would push any
/// quantized weight across a rounding threshold.
std::function<bool(const std::vector<double>&)> straddle_filter(const SurfaceProbe& probe,
                                                                const std::vector<double>& theta,
                                                                double eps) {
  const auto qparams = probe.g.quantized_params();
  if (qparams.empty()) return {};
  // Copy what the lambda needs; the probe graph outlives it in practice but
  // value capture keeps this self-contained.
  struct LayerView {
    std::size_t offset, length;
    AffineParams affine;
    int bits;
  };
  std::vector<LayerView> layers;
  for (const auto& [pid, wq] : qparams) {
    const QuantizedLayerState& st = probe.g.wq_state(wq);
    if (!st.initialized) continue;
    layers.push_back({probe.layout.offset[static_cast<std::size_t>(pid)],
                      probe.layout.length[static_cast<std::size_t>(pid)], st.affine, st.bits});
  }
  if (layers.empty()) return {};
  return [layers, theta, eps](const std::vector<double>& v) -> bool {
    double n2 = 0.0;
    for (double x : v) n2 += x * x;
    const double inv = eps / std::sqrt(n2);
    for (const LayerView& l : layers) {
      for (std::size_t i = 0; i < l.length; ++i) {
        const double th = theta[l.offset + i];
        const double d = inv * v[l.offset + i];
        const std::int32_t q0 = quantize_scalar(th, l.affine, l.bits);
        if (quantize_scalar(th + d, l.affine, l.bits) != q0 ||
            quantize_scalar(th - d, l.affine, l.bits) != q0)
          return false;
      }
    }
    return true;
  };
}

void hessian_traces(SurfaceProbe& probe, int probes, std::uint64_t seed, double& trace_ce,
                    double& se_ce, double& trace_kl, double& se_kl) {
  const std::vector<double> theta = flatten_params(probe.g);
  const double eps = hvp_eps(theta);
  auto run = [&](int node, std::uint64_t s) {
    GradFn gfn = [&probe, node](const std::vector<double>& th) { return probe.grad(node, th); };
    HvpFn hfn = [&, gfn](const std::vector<double>& v) { return hvp(gfn, theta, v, eps); };
    return hutchinson_trace(hfn, theta.size(), probes, s, straddle_filter(probe, theta, eps));
  };
  const TraceEstimate ce = run(probe.ce_node, seed);
  const TraceEstimate kl = run(probe.kl_node, seed ^ 0x5bd1e995ULL);
  trace_ce = ce.trace;
  se_ce = ce.std_error;
  trace_kl = kl.trace;
  se_kl = kl.std_error;
}

void spectrum_and_slices(SurfaceProbe& probe, const ExperimentConfig& cfg,
                         const std::vector<double>& mean_ce, const std::vector<double>& mean_kl,
                         std::uint64_t seed, DiagSeries& out, int epoch) {
  const std::vector<double> theta = flatten_params(probe.g);
  const double eps = hvp_eps(theta);
  const int m = std::min<int>(cfg.diag.lanczos_m, static_cast<int>(theta.size()));
  auto spectrum = [&](int node, std::uint64_t s) {
    GradFn gfn = [&probe, node](const std::vector<double>& th) { return probe.grad(node, th); };
    HvpFn hfn = [&, gfn](const std::vector<double>& v) { return hvp(gfn, theta, v, eps); };
    return lanczos_spectrum(hfn, theta.size(), m, s);
  };
  out.spectrum_ce = spectrum(probe.ce_node, seed);
  out.spectrum_kl = spectrum(probe.kl_node, seed ^ 0x9e3779b9ULL);
  out.spectrum_epoch = epoch;

  std::vector<double> ks;
  for (int i = 0; i < cfg.diag.slice_points; ++i)
    ks.push_back(-0.5 + static_cast<double>(i) / static_cast<double>(cfg.diag.slice_points - 1));
  auto slice = [&](int node, const SpectrumEstimate& sp, const std::vector<double>& mean_grad) {
    double ghat = 0.0;
    if (mean_grad.size() == sp.top_eigvec.size())
      for (std::size_t i = 0; i < mean_grad.size(); ++i) ghat += mean_grad[i] * sp.top_eigvec[i];
    LossFn lfn = [&probe, node](const std::vector<double>& th) { return probe.loss(node, th); };
    return loss_slice(lfn, theta, sp.top_eigvec, ghat, ks);
  };
  out.slice_ce = slice(probe.ce_node, out.spectrum_ce, mean_ce);
  out.slice_kl = slice(probe.kl_node, out.spectrum_kl, mean_kl);
  out.slice_epoch = epoch;
}

}  // namespace

void ValGuard::index(const Tensor& val_x) {
  val_hashes.clear();
  for (std::size_t r = 0; r < val_x.rows(); ++r) val_hashes.insert(fnv_row(val_x, r));
}

void ValGuard::check_batch(const Tensor& batch) {
  if (val_hashes.empty()) return;
  for (std::size_t r = 0; r < batch.rows(); ++r)
    if (val_hashes.count(fnv_row(batch, r))) ++overlap_count;
}

double accuracy(const Tensor& logits, const std::vector<int>& labels) {
  ZSQ_CHECK(logits.rows() == labels.size(), "accuracy: row mismatch");
  std::size_t hits = 0;
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < logits.cols(); ++c)
      if (logits.at(r, c) > logits.at(r, best)) best = c;
    if (static_cast<int>(best) == labels[r]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(labels.size());
}

double evaluate_accuracy(ClassifierNet& net, const Tensor& x, const std::vector<int>& y) {
  const std::size_t chunk = 512;
  std::size_t hits = 0;
  for (std::size_t begin = 0; begin < x.rows(); begin += chunk) {
    const std::size_t end = std::min(begin + chunk, x.rows());
    Tensor part({end - begin, x.cols()});
    for (std::size_t r = begin; r < end; ++r)
      for (std::size_t c = 0; c < x.cols(); ++c) part.at(r - begin, c) = x.at(r, c);
    ForwardCache cache = forward(net.g, eval_inputs(net, part), Mode::eval);
    const Tensor& logits = cache.at(net.logits);
    for (std::size_t r = 0; r < logits.rows(); ++r) {
      std::size_t best = 0;
      for (std::size_t c = 1; c < logits.cols(); ++c)
        if (logits.at(r, c) > logits.at(r, best)) best = c;
      if (static_cast<int>(best) == y[begin + r]) ++hits;
    }
  }
  return static_cast<double>(hits) / static_cast<double>(x.rows());
}

PretrainResult pretrain_teacher(const ExperimentConfig& cfg, const Dataset& data) {
  // The teacher is tied to the dataset seed so every arm and run seed shares it.
  Rng init_rng = Rng(cfg.dataset.seed).fork(101);
  PretrainResult res;
  res.teacher = build_teacher(cfg.model_spec(), init_rng);
  ClassifierNet& t = res.teacher;

  OptimizerState opt;
  opt.kind = OptKind::adam;
  opt.lr = cfg.train.teacher_lr;
  opt.bind(t.g);

  Rng shuffle_rng = Rng(cfg.dataset.seed).fork(102);
  const std::size_t n = data.train_x.rows();
  std::vector<int> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = static_cast<int>(i);
  const std::size_t batch = static_cast<std::size_t>(cfg.train.batch);

  for (int epoch = 0; epoch < cfg.train.teacher_epochs; ++epoch) {
    shuffle_rng.shuffle(idx);
    for (std::size_t begin = 0; begin < n; begin += batch) {
      const std::size_t end = std::min(begin + batch, n);
      Tensor x = gather_rows(data.train_x, idx, begin, end);
      std::vector<int> y;
      for (std::size_t r = begin; r < end; ++r) y.push_back(data.train_y[static_cast<std::size_t>(idx[r])]);
      const Tensor target = one_hot(y, cfg.dataset.classes);
      ForwardCache cache = forward(t.g, {{"x", x}, {"target", target}}, Mode::train);
      Gradients grads = backward(t.g, cache, t.loss);
      optimizer_step(opt, t.g, grads);
    }
  }
  res.train_acc = evaluate_accuracy(t, data.train_x, data.train_y);
  res.val_acc = evaluate_accuracy(t, data.val_x, data.val_y);
  ZSQ_CHECK(res.train_acc >= 0.8,
            "pretrain_teacher: teacher stuck at " + std::to_string(res.train_acc) +
                " train accuracy; dataset/model mismatch");
  return res;
}

// --- ZsqTrainer -------------------------------------------------------------

ZsqTrainer::ZsqTrainer(const ExperimentConfig& cfg, const ClassifierNet& teacher,
                       const Dataset& data)
    : cfg_(cfg),
      data_(data),
      teacher_(teacher),
      gen_obj_(build_gen_objective(teacher, cfg.loss.alpha)),
      rng_(splitmix64(cfg.seed ^ 0x7a5a5a5aULL)) {
  Rng gen_init = Rng(cfg.seed).fork(201);
  gen_ = build_generator(cfg.generator_spec(), gen_init);
  Rng stu_init = Rng(cfg.seed).fork(202);
  student_ = build_student(cfg.model_spec(), cfg.w_bits, cfg.a_bits, cfg.loss.delta,
                           cfg.loss.temperature, stu_init);
  // Zero-shot starting point: the quantized network is the teacher itself.
  copy_classifier_state(teacher_, student_);
  opt_g_.kind = OptKind::adam;
  opt_g_.lr = cfg.gen.lr;
  opt_g_.bind(gen_.g);
  opt_q_.kind = cfg.opt.kind;
  opt_q_.lr = cfg.opt.lr;
  opt_q_.momentum = cfg.opt.momentum;
  opt_q_.bind(student_.g);
  layout_ = GradLayout::of(student_.g);
  guard_.index(data.val_x);
}

SyntheticBatch ZsqTrainer::draw_batch(int n) {
  Tensor noise({static_cast<std::size_t>(n), static_cast<std::size_t>(cfg_.gen.noise_dim)});
  for (std::size_t i = 0; i < noise.numel(); ++i) noise.at(i) = rng_.normal();
  std::vector<int> labels(static_cast<std::size_t>(n));
  for (auto& l : labels)
    l = static_cast<int>(rng_.uniform_int(0, cfg_.dataset.classes - 1));
  return generate_samples(gen_, noise, labels, Mode::train);
}

EpochMetrics ZsqTrainer::run_epoch(int epoch) {
  const std::size_t n = data_.train_x.rows();
  const int batch = cfg_.train.batch;
  const int steps = cfg_.train.steps_per_epoch > 0
                        ? cfg_.train.steps_per_epoch
                        : static_cast<int>((n + static_cast<std::size_t>(batch) - 1) /
                                           static_cast<std::size_t>(batch));
  const bool in_gi_warmup = epoch < gi_warmup_end();
  const double rho = cfg_.gi.enabled ? rho_schedule(epoch, cfg_.gi) : 0.0;

  EpochMetrics m;
  m.epoch = epoch;
  std::vector<std::vector<double>> ce_grads, kl_grads;
  std::vector<std::vector<LayerUpdateReport>> step_reports;

  for (int step = 0; step < steps; ++step) {
    // Generator step on Eq.-5-style objective.
    {
      Tensor noise({static_cast<std::size_t>(batch), static_cast<std::size_t>(cfg_.gen.noise_dim)});
      for (std::size_t i = 0; i < noise.numel(); ++i) noise.at(i) = rng_.normal();
      std::vector<int> labels(static_cast<std::size_t>(batch));
      for (auto& l : labels)
        l = static_cast<int>(rng_.uniform_int(0, cfg_.dataset.classes - 1));
      const Tensor onehot = one_hot(labels, cfg_.dataset.classes);
      ForwardCache gcache = forward(gen_.g, {{"noise", noise}, {"label", onehot}}, Mode::train);
      const Tensor& sample = gcache.at(gen_.out);
      const Tensor target = smooth_labels(labels, cfg_.loss.smoothing, cfg_.dataset.classes);
      ForwardCache ocache = forward(gen_obj_.g, {{"x", sample}, {"target", target}}, Mode::probe);
      const double loss_g = ocache.at(gen_obj_.loss).at(0);
      ZSQ_CHECK(std::isfinite(loss_g), "generator diverged (non-finite loss) at epoch " +
                                           std::to_string(epoch));
      Gradients ograds = backward(gen_obj_.g, ocache, gen_obj_.loss);
      const Tensor& upstream = ograds.input.at(gen_obj_.sample);
      Gradients ggrads = backward(gen_.g, gcache, gen_.out, &upstream);
      optimizer_step(opt_g_, gen_.g, ggrads);
      m.loss_g += loss_g;
    }
    // Fresh batch for the student.
    SyntheticBatch batch2 = draw_batch(batch);
    guard_.check_batch(batch2.samples);
    student_step(epoch, batch2, in_gi_warmup, rho, m, ce_grads, kl_grads, step_reports);
  }

  const double inv = 1.0 / static_cast<double>(steps);
  m.loss_g *= inv;
  m.loss_q *= inv;
  m.ce *= inv;
  m.kl *= inv;
  m.acc *= inv;
  if (!step_reports.empty()) {
    std::map<int, double> per_layer;
    for (const auto& reps : step_reports)
      for (const auto& r : reps) per_layer[r.layer] += static_cast<double>(r.crossings);
    std::vector<double> totals;
    for (const auto& [layer, total] : per_layer) totals.push_back(total);
    m.crossings_gini = gini(totals);
  }
  m.val_acc = evaluate_accuracy(student_, data_.val_x, data_.val_y);

  epoch_diagnostics(epoch, ce_grads, kl_grads, step_reports);
  return m;
}

void ZsqTrainer::student_step(int epoch, const SyntheticBatch& batch, bool in_gi_warmup,
                              double rho, EpochMetrics& m,
                              std::vector<std::vector<double>>& ce_grads,
                              std::vector<std::vector<double>>& kl_grads,
                              std::vector<std::vector<LayerUpdateReport>>& step_reports) {
  ForwardCache tcache = forward(teacher_.g, eval_inputs(teacher_, batch.samples), Mode::eval);
  const Tensor& t_logits = tcache.at(teacher_.logits);
  const Tensor target = smooth_labels(batch.labels, cfg_.loss.smoothing, cfg_.dataset.classes);
  std::map<std::string, Tensor> inputs = {
      {"x", batch.samples}, {"target", target}, {"teacher_logits", t_logits}};

  const bool in_gen_warmup = epoch < cfg_.gen.warmup_epochs;
  if (in_gen_warmup) {
    // Generator-only phase: measure, do not step.
    ForwardCache scache = forward(student_.g, inputs, Mode::probe);
    m.loss_q += scache.at(student_.loss).at(0);
    m.ce += scache.at(student_.ce).at(0);
    m.kl += scache.at(student_.kl).at(0);
    m.acc += accuracy(scache.at(student_.logits), batch.labels);
    return;
  }

  ForwardCache scache = forward(student_.g, inputs, Mode::train);
  const double loss_q = scache.at(student_.loss).at(0);
  ZSQ_CHECK(std::isfinite(loss_q),
            "student diverged (non-finite loss) at epoch " + std::to_string(epoch));
  m.loss_q += loss_q;
  m.ce += scache.at(student_.ce).at(0);
  m.kl += scache.at(student_.kl).at(0);
  m.acc += accuracy(scache.at(student_.logits), batch.labels);

  Gradients sgrads = backward(student_.g, scache, student_.loss);
  if (cfg_.diag.cosine || cfg_.diag.hessian_every > 0) {
    ce_grads.push_back(flatten_grads(backward(student_.g, scache, student_.ce), layout_));
    kl_grads.push_back(flatten_grads(backward(student_.g, scache, student_.kl), layout_));
  }
  std::vector<LayerUpdateReport> reports =
      gi_step(student_.g, sgrads, opt_q_, rho, cfg_.gi, in_gi_warmup);
  for (const auto& r : reports) m.crossings_total += r.crossings;
  step_reports.push_back(reports);
  gi_reports_.push_back(std::move(reports));
  gi_report_epochs_.push_back(epoch);
}

void ZsqTrainer::ensure_probe_batch() {
  if (probe_ready_) return;
  // Held-out probe batch: seeded noise through the generator as of the first
  // diagnostic epoch, frozen for the rest of the run so trace series compare.
  Rng prng = Rng(cfg_.seed).fork(777);
  const int n = cfg_.diag.probe_batch;
  Tensor noise({static_cast<std::size_t>(n), static_cast<std::size_t>(cfg_.gen.noise_dim)});
  for (std::size_t i = 0; i < noise.numel(); ++i) noise.at(i) = prng.normal();
  std::vector<int> labels(static_cast<std::size_t>(n));
  for (auto& l : labels)
    l = static_cast<int>(prng.uniform_int(0, cfg_.dataset.classes - 1));
  SyntheticBatch batch = generate_samples(gen_, noise, labels, Mode::eval);
  ForwardCache tcache = forward(teacher_.g, eval_inputs(teacher_, batch.samples), Mode::eval);
  probe_inputs_ = {{"x", batch.samples},
                   {"target", smooth_labels(labels, cfg_.loss.smoothing, cfg_.dataset.classes)},
                   {"teacher_logits", tcache.at(teacher_.logits)}};
  probe_ready_ = true;
}

void ZsqTrainer::epoch_diagnostics(int epoch, const std::vector<std::vector<double>>& ce_grads,
                                   const std::vector<std::vector<double>>& kl_grads,
                                   const std::vector<std::vector<LayerUpdateReport>>& step_reports) {
  const bool final_epoch = epoch == cfg_.train.epochs - 1;
  std::vector<double> mean_ce, mean_kl;
  if (!ce_grads.empty()) {
    if (cfg_.diag.cosine) {
      double sum = 0.0;
      int defined = 0;
      for (std::size_t s = 0; s < ce_grads.size(); ++s) {
        if (auto c = grad_cosine(ce_grads[s], kl_grads[s])) {
          sum += *c;
          ++defined;
        }
      }
      if (defined > 0) {
        diag_.cos_epochs.push_back(epoch);
        diag_.cosine_ce_kl.push_back(sum / static_cast<double>(defined));
      }
    }
    mean_ce = epoch_mean_grad(ce_grads);
    mean_kl = epoch_mean_grad(kl_grads);
    if (have_prev_mean_) {
      const auto ic = inter_epoch_cosine(mean_ce, prev_mean_ce_);
      const auto ik = inter_epoch_cosine(mean_kl, prev_mean_kl_);
      if (ic && ik) {
        diag_.inter_epochs.push_back(epoch);
        diag_.inter_cos_ce.push_back(*ic);
        diag_.inter_cos_kl.push_back(*ik);
      }
    }
    prev_mean_ce_ = mean_ce;
    prev_mean_kl_ = mean_kl;
    have_prev_mean_ = true;
  }

  const bool student_active = epoch >= cfg_.gen.warmup_epochs;
  if (cfg_.diag.hessian_every > 0 && student_active &&
      (epoch % cfg_.diag.hessian_every == 0 || final_epoch)) {
    ensure_probe_batch();
    SurfaceProbe probe{student_.g, probe_inputs_, student_.ce, student_.kl,
                       GradLayout::of(student_.g)};
    double tc, sc, tk, sk;
    hessian_traces(probe, cfg_.diag.hessian_probes,
                   splitmix64(cfg_.seed ^ (0xabcdULL + static_cast<std::uint64_t>(epoch))), tc,
                   sc, tk, sk);
    diag_.trace_epochs.push_back(epoch);
    diag_.trace_ce.push_back(tc);
    diag_.trace_ce_se.push_back(sc);
    diag_.trace_kl.push_back(tk);
    diag_.trace_kl_se.push_back(sk);
    if (final_epoch) {
      spectrum_and_slices(probe, cfg_, mean_ce, mean_kl,
                          splitmix64(cfg_.seed ^ 0xfeedULL), diag_, epoch);
    }
  }

  if (!step_reports.empty() && (final_epoch || epoch == cfg_.train.epochs / 2))
    diag_.crossings.emplace_back(epoch, crossing_histogram(step_reports));
}

// --- KdTrainer ---------------------------------------------------------------

KdTrainer::KdTrainer(const ExperimentConfig& cfg, const ClassifierNet& teacher,
                     const Dataset& data)
    : cfg_(cfg), data_(data), teacher_(teacher), rng_(splitmix64(cfg.seed ^ 0x11223344ULL)) {
  Rng stu_init = Rng(cfg.seed).fork(203);
  student_ = build_student(cfg.model_spec(), 0, 0, cfg.loss.delta, cfg.loss.temperature,
                           stu_init);
  opt_q_.kind = cfg.opt.kind;
  opt_q_.lr = cfg.opt.lr;
  opt_q_.momentum = cfg.opt.momentum;
  opt_q_.bind(student_.g);
  layout_ = GradLayout::of(student_.g);
  guard_.index(data.val_x);
}

EpochMetrics KdTrainer::run_epoch(int epoch) {
  const std::size_t n = data_.train_x.rows();
  const std::size_t batch = static_cast<std::size_t>(cfg_.train.batch);
  std::vector<int> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = static_cast<int>(i);
  rng_.shuffle(idx);

  EpochMetrics m;
  m.epoch = epoch;
  std::vector<std::vector<double>> ce_grads, kl_grads;
  int steps = 0;
  for (std::size_t begin = 0; begin < n; begin += batch, ++steps) {
    const std::size_t end = std::min(begin + batch, n);
    Tensor x = gather_rows(data_.train_x, idx, begin, end);
    std::vector<int> y;
    for (std::size_t r = begin; r < end; ++r)
      y.push_back(data_.train_y[static_cast<std::size_t>(idx[r])]);
    guard_.check_batch(x);

    ForwardCache tcache = forward(teacher_.g, eval_inputs(teacher_, x), Mode::eval);
    const Tensor& t_logits = tcache.at(teacher_.logits);
    const Tensor target = smooth_labels(y, cfg_.loss.smoothing, cfg_.dataset.classes);
    std::map<std::string, Tensor> inputs = {
        {"x", x}, {"target", target}, {"teacher_logits", t_logits}};
    ForwardCache scache = forward(student_.g, inputs, Mode::train);
    const double loss_q = scache.at(student_.loss).at(0);
    ZSQ_CHECK(std::isfinite(loss_q),
              "kd student diverged (non-finite loss) at epoch " + std::to_string(epoch));
    m.loss_q += loss_q;
    m.ce += scache.at(student_.ce).at(0);
    m.kl += scache.at(student_.kl).at(0);
    m.acc += accuracy(scache.at(student_.logits), y);

    Gradients grads = backward(student_.g, scache, student_.loss);
    if (cfg_.diag.cosine || cfg_.diag.hessian_every > 0) {
      ce_grads.push_back(flatten_grads(backward(student_.g, scache, student_.ce), layout_));
      kl_grads.push_back(flatten_grads(backward(student_.g, scache, student_.kl), layout_));
    }
    optimizer_step(opt_q_, student_.g, grads);
  }

  const double inv = 1.0 / static_cast<double>(steps);
  m.loss_q *= inv;
  m.ce *= inv;
  m.kl *= inv;
  m.acc *= inv;
  m.val_acc = evaluate_accuracy(student_, data_.val_x, data_.val_y);
  epoch_diagnostics(epoch, ce_grads, kl_grads);
  return m;
}

void KdTrainer::epoch_diagnostics(int epoch, const std::vector<std::vector<double>>& ce_grads,
                                  const std::vector<std::vector<double>>& kl_grads) {
  const bool final_epoch = epoch == cfg_.train.epochs - 1;
  std::vector<double> mean_ce, mean_kl;
  if (!ce_grads.empty()) {
    if (cfg_.diag.cosine) {
      double sum = 0.0;
      int defined = 0;
      for (std::size_t s = 0; s < ce_grads.size(); ++s) {
        if (auto c = grad_cosine(ce_grads[s], kl_grads[s])) {
          sum += *c;
          ++defined;
        }
      }
      if (defined > 0) {
        diag_.cos_epochs.push_back(epoch);
        diag_.cosine_ce_kl.push_back(sum / static_cast<double>(defined));
      }
    }
    mean_ce = epoch_mean_grad(ce_grads);
    mean_kl = epoch_mean_grad(kl_grads);
    if (have_prev_mean_) {
      const auto ic = inter_epoch_cosine(mean_ce, prev_mean_ce_);
      const auto ik = inter_epoch_cosine(mean_kl, prev_mean_kl_);
      if (ic && ik) {
        diag_.inter_epochs.push_back(epoch);
        diag_.inter_cos_ce.push_back(*ic);
        diag_.inter_cos_kl.push_back(*ik);
      }
    }
    prev_mean_ce_ = mean_ce;
    prev_mean_kl_ = mean_kl;
    have_prev_mean_ = true;
  }

  if (cfg_.diag.hessian_every > 0 && (epoch % cfg_.diag.hessian_every == 0 || final_epoch)) {
    if (!probe_ready_) {
      // Fixed real probe batch: the first rows of the training split.
      const std::size_t p = std::min<std::size_t>(
          static_cast<std::size_t>(cfg_.diag.probe_batch), data_.train_x.rows());
      Tensor x({p, data_.train_x.cols()});
      std::vector<int> y;
      for (std::size_t r = 0; r < p; ++r) {
        for (std::size_t c = 0; c < x.cols(); ++c) x.at(r, c) = data_.train_x.at(r, c);
        y.push_back(data_.train_y[r]);
      }
      ForwardCache tcache = forward(teacher_.g, eval_inputs(teacher_, x), Mode::eval);
      probe_inputs_ = {{"x", x},
                       {"target", smooth_labels(y, cfg_.loss.smoothing, cfg_.dataset.classes)},
                       {"teacher_logits", tcache.at(teacher_.logits)}};
      probe_ready_ = true;
    }
    SurfaceProbe probe{student_.g, probe_inputs_, student_.ce, student_.kl,
                       GradLayout::of(student_.g)};
    double tc, sc, tk, sk;
    hessian_traces(probe, cfg_.diag.hessian_probes,
                   splitmix64(cfg_.seed ^ (0xabcdULL + static_cast<std::uint64_t>(epoch))), tc,
                   sc, tk, sk);
    diag_.trace_epochs.push_back(epoch);
    diag_.trace_ce.push_back(tc);
    diag_.trace_ce_se.push_back(sc);
    diag_.trace_kl.push_back(tk);
    diag_.trace_kl_se.push_back(sk);
    if (final_epoch)
      spectrum_and_slices(probe, cfg_, mean_ce, mean_kl, splitmix64(cfg_.seed ^ 0xfeedULL),
                          diag_, epoch);
  }
}

}  // namespace zsq
