#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "zsq/gi.hpp"
#include "zsq/graph.hpp"
#include "zsq/optim.hpp"
#include "zsq/rng.hpp"

#include "support/kappa_replay.hpp"

using namespace zsq;


namespace {

OptimizerState make_opt(OptKind kind, double lr, double momentum = 0.0) {
  OptimizerState o;
  o.kind = kind;
  o.lr = lr;
  o.momentum = momentum;
  return o;
}

void bind_single(OptimizerState& o, std::size_t n) {
  o.buf_m.assign(1, Tensor({n}));
  o.buf_v.assign(1, Tensor({n}));
}

}  // namespace

TEST_CASE("optimizer_step closed forms") {
  // Plain SGD: theta - lr * g.
  {
    OptimizerState o = make_opt(OptKind::sgd_nesterov, 0.1, 0.0);
    CHECK(optimizer_step_single(o, Tensor({1}, {1.0}), Tensor({1}, {1.0})).at(0) ==
          doctest::Approx(0.9).epsilon(1e-15));
  }
  // Adam first step against the hand-evaluated first-iteration formula.
  {
    OptimizerState o = make_opt(OptKind::adam, 0.1);
    const double g = 0.7, th = 1.0;
    const double m = 0.1 * g, v = 0.001 * g * g;
    const double mhat = m / (1.0 - 0.9), vhat = v / (1.0 - 0.999);
    const double expect = th - 0.1 * mhat / (std::sqrt(vhat) + 1e-8);
    CHECK(optimizer_step_single(o, Tensor({1}, {th}), Tensor({1}, {g})).at(0) ==
          doctest::Approx(expect).epsilon(1e-15));
  }
  // RMSProp with zero gradient leaves parameters unchanged.
  {
    OptimizerState o = make_opt(OptKind::rmsprop, 0.5);
    CHECK(optimizer_step_single(o, Tensor({1}, {2.5}), Tensor({1}, {0.0})).at(0) == 2.5);
  }
}

TEST_CASE("preview_update: zero kappa, exact plain step, nesterov recurrence") {
  const Tensor th({2}, {0.8, -0.3});
  const Tensor g({2}, {0.25, -0.5});
  {
    OptimizerState o = make_opt(OptKind::sgd_nesterov, 0.1, 0.0);
    bind_single(o, 2);
    const Tensor cand = preview_update(o, 0, th, g, 0.0);
    CHECK(cand.vec() == th.vec());
    const Tensor cand1 = preview_update(o, 0, th, g, 1.0);
    for (std::size_t i = 0; i < 2; ++i) CHECK(cand1.at(i) == th.at(i) - 0.1 * g.at(i));
  }
  // Three nesterov commits match the hand recurrence; a preview after two
  // commits equals the recurrence's third step.
  {
    const double mu = 0.9, lr = 0.05;
    OptimizerState o = make_opt(OptKind::sgd_nesterov, lr, mu);
    bind_single(o, 2);
    std::vector<Tensor> gs = {Tensor({2}, {0.1, -0.2}), Tensor({2}, {0.05, 0.3}),
                              Tensor({2}, {-0.2, 0.1})};
    std::vector<double> hand_th = {0.8, -0.3}, hand_buf = {0.0, 0.0};
    Tensor cur = th;
    for (int s = 0; s < 3; ++s) {
      if (s == 2) {
        const Tensor cand = preview_update(o, 0, cur, gs[s], 1.0);
        std::vector<double> expect(2);
        for (std::size_t i = 0; i < 2; ++i) {
          const double buf = mu * hand_buf[i] + gs[s].at(i);
          expect[i] = hand_th[i] - lr * (gs[s].at(i) + mu * buf);
        }
        CHECK(cand.vec() == expect);
      }
      commit_update(o, 0, cur, gs[s], 1.0);
      for (std::size_t i = 0; i < 2; ++i) {
        hand_buf[i] = mu * hand_buf[i] + gs[s].at(i);
        hand_th[i] = hand_th[i] - lr * (gs[s].at(i) + mu * hand_buf[i]);
      }
      CHECK(cur.vec() == hand_th);
    }
  }
}

TEST_CASE("preview leaves the optimizer state bit-identical") {
  Rng rng(3);
  OptimizerState o = make_opt(OptKind::adam, 0.01);
  bind_single(o, 8);
  Tensor th({8}), g({8});
  for (std::size_t i = 0; i < 8; ++i) {
    th.at(i) = rng.uniform(-1.0, 1.0);
    g.at(i) = rng.uniform(-1.0, 1.0);
    o.buf_m[0].at(i) = rng.uniform(-0.1, 0.1);
    o.buf_v[0].at(i) = rng.uniform(0.0, 0.01);
  }
  const std::vector<double> m_before = o.buf_m[0].vec();
  const std::vector<double> v_before = o.buf_v[0].vec();
  const std::int64_t t_before = o.step_count;
  (void)preview_update(o, 0, th, g, 17.0);
  CHECK(o.buf_m[0].vec() == m_before);
  CHECK(o.buf_v[0].vec() == v_before);
  CHECK(o.step_count == t_before);
}

TEST_CASE("rho_schedule and target_count") {
  GIConfig cfg;
  cfg.rho0 = 0.001;
  CHECK(rho_schedule(0, cfg) == doctest::Approx(0.001).epsilon(1e-15));
  CHECK(rho_schedule(100, cfg) == doctest::Approx(0.0001).epsilon(1e-12));
  CHECK(rho_schedule(250, cfg) == doctest::Approx(0.00001).epsilon(1e-12));

  QuantizedLayerState st;
  st.qweights.assign(10000, 0);
  CHECK(target_count(0.001, st) == doctest::Approx(10.0).epsilon(1e-12));
  CHECK(target_count(0.0, st) == 0.0);
  CHECK(target_count(1.0, st) == 10000.0);
}

TEST_CASE("search_kappa degenerate inputs") {
  QuantizedLayerState st;
  st.bits = 4;
  Tensor th({6}, {-0.9, -0.5, -0.1, 0.2, 0.6, 0.9});
  st.affine = quant_params(-0.9, 0.9, 4);
  st.qweights = quantize(th, st.affine, 4);
  st.initialized = true;
  OptimizerState o = make_opt(OptKind::sgd_nesterov, 0.1, 0.0);
  bind_single(o, 6);
  GIConfig cfg;

  // Large gradient: already crossing more than T at kappa = 1.
  {
    const Tensor g({6}, {5.0, -5.0, 5.0, -5.0, 5.0, -5.0});
    const auto r = search_kappa(st, th, g, o, 0, 2.0, cfg, false);
    CHECK(r.kappa == 1.0);
    CHECK(r.report.search_steps == 0);
    CHECK(static_cast<double>(r.report.crossings) > 2.0);
  }
  // Zero gradient: kappa 1, no crossings, not capped.
  {
    const Tensor g({6});
    const auto r = search_kappa(st, th, g, o, 0, 2.0, cfg, false);
    CHECK(r.kappa == 1.0);
    CHECK(r.report.crossings == 0);
    CHECK(r.report.zero_grad);
    CHECK_FALSE(r.report.capped);
  }
  // Tiny gradient in warm-up: capped at 128.
  {
    const Tensor g({6}, {1e-12, -1e-12, 1e-12, -1e-12, 1e-12, -1e-12});
    const auto r = search_kappa(st, th, g, o, 0, 2.0, cfg, true);
    CHECK(r.report.capped);
    CHECK(r.kappa <= 128.0);
  }
}

TEST_CASE("search_kappa matches the independent replay oracle") {
  Rng rng(97);
  int checked = 0;
  for (int trial = 0; trial < 60; ++trial) {
    const std::size_t dim = static_cast<std::size_t>(rng.uniform_int(5, 50));
    Tensor th({dim}), g({dim});
    for (std::size_t i = 0; i < dim; ++i) th.at(i) = rng.uniform(-1.0, 1.0);
    const double gscale = std::pow(10.0, rng.uniform(-6.0, -1.0));
    for (std::size_t i = 0; i < dim; ++i) g.at(i) = gscale * rng.normal();
    if (trial % 7 == 0)
      for (std::size_t i = 0; i < dim; ++i) g.at(i) = 0.0;

    QuantizedLayerState st;
    st.bits = 4;
    double lo = th.min_value(), hi = th.max_value();
    widen_degenerate(lo, hi);
    st.affine = quant_params(lo, hi, 4);
    st.qweights = quantize(th, st.affine, 4);
    st.initialized = true;

    const OptKind kinds[3] = {OptKind::sgd_nesterov, OptKind::adam, OptKind::rmsprop};
    OptimizerState o = make_opt(kinds[rng.uniform_int(0, 2)],
                                std::pow(10.0, rng.uniform(-4.0, -1.0)),
                                rng.uniform() < 0.5 ? 0.0 : 0.9);
    bind_single(o, dim);
    o.step_count = rng.uniform_int(0, 5);
    for (std::size_t i = 0; i < dim; ++i) {
      // The rmsprop slot holds a square average, which is nonnegative.
      o.buf_m[0].at(i) =
          o.kind == OptKind::rmsprop ? rng.uniform(0.0, 0.01) : rng.uniform(-0.1, 0.1);
      o.buf_v[0].at(i) = rng.uniform(0.0, 0.01);
    }

    const double target = rng.uniform(0.02, 0.5) * static_cast<double>(dim);
    const bool warm = rng.uniform() < 0.5;
    GIConfig cfg;

    const auto got = search_kappa(st, th, g, o, 0, target, cfg, warm);

    kappa_replay::Opt ro{o.kind, o.lr,  o.momentum, o.beta1,
                   o.beta2, o.eps, o.alpha,    o.step_count + 1,
                   o.buf_m[0].vec(), o.buf_v[0].vec()};
    const auto want = kappa_replay::search(th.vec(), g.vec(), st.qweights, st.affine.scale,
                                     st.affine.zero, 4, ro, target, warm, cfg.doubling_cap,
                                     cfg.search_budget);
    CHECK(got.kappa == want.kappa);
    CHECK(got.report.crossings == want.crossings);
    CHECK(got.report.capped == want.capped);
    CHECK(got.report.zero_grad == want.zero_grad);
    CHECK(got.report.search_steps <= cfg.doubling_cap + cfg.search_budget);
    CHECK(got.kappa >= 1.0);
    ++checked;
  }
  CHECK(checked == 60);
}

namespace {

struct QuantToy {
  Graph g;
  int x = -1, loss = -1, w = -1;
};

QuantToy make_quant_toy(Rng& rng, std::size_t in = 4, std::size_t out = 8) {
  QuantToy t;
  t.x = t.g.add_input("x", in);
  Tensor w({in, out});
  for (std::size_t i = 0; i < w.numel(); ++i) w.at(i) = rng.uniform(-1.0, 1.0);
  t.w = t.g.add_param("w", w);
  const int wq = t.g.add_wq_state("toy", 4);
  const int y = t.g.dense(t.x, t.w, -1, wq);
  t.loss = t.g.sum(y);
  return t;
}

}  // namespace

TEST_CASE("gi_step with rho 0 and plain SGD is bitwise the plain step") {
  Rng rng(7);
  QuantToy toy = make_quant_toy(rng);
  Graph clone = toy.g;

  Tensor x({3, 4});
  for (std::size_t i = 0; i < x.numel(); ++i) x.at(i) = rng.uniform(-1.0, 1.0);
  ForwardCache c1 = forward(toy.g, {{"x", x}}, Mode::train);
  Gradients grads = backward(toy.g, c1, toy.loss);

  OptimizerState o1 = make_opt(OptKind::sgd_nesterov, 0.05, 0.0);
  o1.bind(toy.g);
  GIConfig cfg;
  cfg.enabled = true;
  const auto reports = gi_step(toy.g, grads, o1, 0.0, cfg, false);
  REQUIRE(reports.size() == 1);
  CHECK(reports[0].kappa == 1.0);

  // Plain Eq.-7 loop on the clone.
  forward(clone, {{"x", x}}, Mode::train);
  for (std::size_t i = 0; i < clone.param(0).numel(); ++i)
    clone.param_mut(0).at(i) = clone.param(0).at(i) - 0.05 * grads.param[0].at(i);
  CHECK(toy.g.param(0).vec() == clone.param(0).vec());
}

TEST_CASE("gi_step post-commit guarantee and report contract") {
  Rng rng(13);
  QuantToy toy = make_quant_toy(rng, 6, 32);
  OptimizerState o = make_opt(OptKind::sgd_nesterov, 1e-3, 0.9);
  o.bind(toy.g);
  GIConfig cfg;
  cfg.enabled = true;

  for (int step = 0; step < 25; ++step) {
    Tensor x({4, 6});
    for (std::size_t i = 0; i < x.numel(); ++i) x.at(i) = rng.uniform(-1.0, 1.0);
    ForwardCache c = forward(toy.g, {{"x", x}}, Mode::train);
    Gradients grads = backward(toy.g, c, toy.loss);
    const double rho = 0.1;
    const auto reports = gi_step(toy.g, grads, o, rho, cfg, step < 5);
    for (const auto& r : reports) {
      CHECK(r.kappa >= 1.0);
      const bool ok = static_cast<double>(r.crossings) >= std::ceil(r.target) || r.capped ||
                      r.zero_grad;
      CHECK(ok);
      CHECK(r.search_steps <= cfg.doubling_cap + cfg.search_budget);
      // The committed parameters really did cross what the report claims.
      const QuantizedLayerState& st = toy.g.wq_state(r.layer);
      const auto now = quantize(toy.g.param(toy.w), st.affine, st.bits);
      CHECK(count_threshold_crossings(st.qweights, now) == r.crossings);
    }
  }
}

TEST_CASE("gi_step steps non-quantized parameters plainly") {
  Rng rng(19);
  Graph g;
  const int x = g.add_input("x", 3);
  Tensor w({3, 4}), b({4});
  for (std::size_t i = 0; i < w.numel(); ++i) w.at(i) = rng.uniform(-1.0, 1.0);
  for (std::size_t i = 0; i < b.numel(); ++i) b.at(i) = rng.uniform(-0.5, 0.5);
  const int wq = g.add_wq_state("w", 4);
  const int wid = g.add_param("w", w);
  const int bid = g.add_param("b", b);
  const int y = g.dense(x, wid, bid, wq);
  const int loss = g.sum(y);

  Tensor xin({2, 3});
  for (std::size_t i = 0; i < xin.numel(); ++i) xin.at(i) = rng.uniform(-1.0, 1.0);
  ForwardCache c = forward(g, {{"x", xin}}, Mode::train);
  Gradients grads = backward(g, c, loss);

  OptimizerState o = make_opt(OptKind::sgd_nesterov, 0.01, 0.0);
  o.bind(g);
  GIConfig cfg;
  const Tensor b_before = g.param(bid);
  gi_step(g, grads, o, 0.25, cfg, false);
  for (std::size_t i = 0; i < b.numel(); ++i)
    CHECK(g.param(bid).at(i) == b_before.at(i) - 0.01 * grads.param[static_cast<std::size_t>(bid)].at(i));
}
