// Acceptance suite: one check per criterion, each printed as a PASS/FAIL
// line with its measured quantities. Exit code is the number of failures.
//
// Run a subset with:  zsq_acceptance 3 8 9

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "support/kappa_replay.hpp"
#include "zsq/diag.hpp"
#include "zsq/experiment.hpp"
#include "zsq/rng.hpp"

using namespace zsq;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

// --------------------------------------------------------------------------
// 1. Gradient correctness on random tiny graphs.

struct RandomGraph {
  Graph g;
  int loss = -1;
  std::vector<int> relu_inputs;
  std::map<std::string, Tensor> inputs;
};

RandomGraph make_random_graph(Rng& rng) {
  RandomGraph out;
  Graph& g = out.g;
  const int depth = static_cast<int>(rng.uniform_int(1, 3));
  const std::size_t in_dim = static_cast<std::size_t>(rng.uniform_int(2, 6));
  const std::size_t classes = static_cast<std::size_t>(rng.uniform_int(2, 5));
  const std::size_t batch = static_cast<std::size_t>(rng.uniform_int(2, 6));

  const int x = g.add_input("x", in_dim);
  const int t = g.add_input("target", classes);
  int cur = x;
  std::size_t cur_dim = in_dim;
  for (int l = 0; l < depth; ++l) {
    const std::size_t width = static_cast<std::size_t>(rng.uniform_int(3, 10));
    Tensor w({cur_dim, width});
    for (std::size_t i = 0; i < w.numel(); ++i) w.at(i) = rng.uniform(-1.0, 1.0);
    const int wid = g.add_param("w" + std::to_string(l), w);
    Tensor b({width});
    for (std::size_t i = 0; i < b.numel(); ++i) b.at(i) = rng.uniform(-1.0, 1.0);
    const int bid = g.add_param("b" + std::to_string(l), b);
    cur = g.dense(cur, wid, bid);
    const int kind = static_cast<int>(rng.uniform_int(0, 2));
    if (kind == 0) {
      out.relu_inputs.push_back(cur);
      cur = g.relu(cur);
    } else if (kind == 1) {
      cur = g.tanh_act(cur);
    } else {
      const int gamma = g.add_param("gm" + std::to_string(l), Tensor::full({width}, 1.0));
      const int beta = g.add_param("bt" + std::to_string(l), Tensor({width}));
      cur = g.batch_norm(cur, gamma, beta, g.add_bn_state(width));
      out.relu_inputs.push_back(cur);
      cur = g.relu(cur);
    }
    cur_dim = width;
  }
  Tensor w({cur_dim, classes});
  for (std::size_t i = 0; i < w.numel(); ++i) w.at(i) = rng.uniform(-1.0, 1.0);
  const int logits = g.dense(cur, g.add_param("w_out", w));
  out.loss = g.ce_loss(logits, t);

  Tensor xin({batch, in_dim});
  for (std::size_t i = 0; i < xin.numel(); ++i) xin.at(i) = rng.uniform(-1.0, 1.0);
  std::vector<int> labels;
  for (std::size_t i = 0; i < batch; ++i)
    labels.push_back(static_cast<int>(rng.uniform_int(0, static_cast<int>(classes) - 1)));
  out.inputs = {{"x", xin}, {"target", one_hot(labels, static_cast<int>(classes))}};
  (void)t;
  return out;
}

bool kink_free(const RandomGraph& rg, const ForwardCache& cache) {
  for (int node : rg.relu_inputs) {
    const Tensor& pre = cache.at(node);
    for (std::size_t i = 0; i < pre.numel(); ++i)
      if (std::fabs(pre.at(i)) < 1e-4) return false;
  }
  return true;
}

Outcome criterion1() {
  Rng rng(1001);
  double worst = 0.0;
  int graphs = 0;
  std::size_t total_params = 0;
  while (graphs < 50) {
    RandomGraph rg = make_random_graph(rng);
    if (rg.g.total_param_elems() > 500) continue;
    ForwardCache cache = forward(rg.g, rg.inputs, Mode::probe);
    if (!kink_free(rg, cache)) continue;  // redraw away from ReLU kinks
    Gradients grads = backward(rg.g, cache, rg.loss);
    for (std::size_t p = 0; p < rg.g.param_count(); ++p) {
      const Tensor fd = finite_diff_grad(
          [&](const Tensor& th) {
            Graph g2 = rg.g;
            g2.param_mut(static_cast<int>(p)) = th;
            return forward(g2, rg.inputs, Mode::probe).at(rg.loss).at(0);
          },
          rg.g.param(static_cast<int>(p)), 1e-5);
      for (std::size_t i = 0; i < fd.numel(); ++i) {
        const double a = grads.param[p].at(i), b = fd.at(i);
        const double diff = std::fabs(a - b);
        if (diff <= 1e-8) continue;  // absolute floor
        worst = std::max(worst, diff / std::max(std::fabs(a), std::fabs(b)));
      }
    }
    total_params += rg.g.total_param_elems();
    ++graphs;
  }
  char buf[160];
  std::snprintf(buf, sizeof(buf), "50 graphs (%zu params total), max rel err %.3g (<= 1e-5)",
                total_params, worst);
  return {worst <= 1e-5, buf};
}

// --------------------------------------------------------------------------
// 2. Quantizer suite.

Outcome criterion2() {
  Rng rng(2002);
  for (int bits : {2, 3, 4, 8}) {
    const double lo = rng.uniform(-2.0, -0.1);
    const double hi = rng.uniform(0.1, 2.0);
    const AffineParams p = quant_params(lo, hi, bits);

    // Endpoint mappings must be exact.
    const auto qend = quantize(Tensor({2}, {lo, hi}), p, bits);
    if (qend[0] != quant_min(bits) || qend[1] != quant_max(bits))
      return {false, "endpoint mapping failed at n=" + std::to_string(bits)};

    // Grid idempotence over every level.
    for (std::int64_t q = quant_min(bits); q <= quant_max(bits); ++q) {
      const Tensor back = dequantize({static_cast<std::int32_t>(q)}, {1}, p);
      if (quantize(back, p, bits)[0] != static_cast<std::int32_t>(q))
        return {false, "grid idempotence failed at n=" + std::to_string(bits)};
    }

    // 1e5 random scalars: error bound, monotonicity, level count.
    const std::size_t N = 100000;
    std::vector<double> vals(N);
    for (double& v : vals) v = rng.uniform(lo, hi);
    std::set<std::int32_t> levels;
    for (double v : vals) {
      const auto q = quantize(Tensor({1}, {v}), p, bits);
      levels.insert(q[0]);
      const double back = dequantize(q, {1}, p).at(0);
      if (std::fabs(back - v) > 0.5 / p.scale + 1e-12)
        return {false, "error bound violated at n=" + std::to_string(bits)};
    }
    if (levels.size() > (std::size_t{1} << bits))
      return {false, "too many levels at n=" + std::to_string(bits)};
    std::sort(vals.begin(), vals.end());
    std::int32_t prev = quant_min(bits);
    bool first = true;
    for (double v : vals) {
      const std::int32_t q = quantize(Tensor({1}, {v}), p, bits)[0];
      if (!first && q < prev) return {false, "monotonicity violated at n=" + std::to_string(bits)};
      prev = q;
      first = false;
    }
  }
  return {true, "round-trip, monotone, <= 2^n levels, 1/(2S) bound on 1e5 scalars x {2,3,4,8}"};
}

// --------------------------------------------------------------------------
// experiment helpers

RunRecord run_arm(const LabContext& ctx, const ExperimentConfig& base, const std::string& arm,
                  std::uint64_t seed, bool diag) {
  ExperimentConfig cfg = base;
  cfg.arm = arm;
  cfg.seed = seed;
  if (diag) {
    cfg.diag.cosine = true;
    cfg.diag.hessian_every = 4;
    cfg.diag.hessian_probes = 12;
    cfg.diag.probe_batch = 128;
  }
  return run_experiment(cfg, ctx.teacher, ctx.data, "");
}

// --------------------------------------------------------------------------
// 3. GI guarantee over a full desk-scale AIT run.

Outcome criterion3(const LabContext& ctx, const ExperimentConfig& base) {
  RunRecord rec = run_arm(ctx, base, "ait", 11, false);
  if (rec.aborted) return {false, "run aborted: " + rec.abort_reason};
  std::size_t total = 0, ok = 0, post = 0, post_outright = 0;
  for (std::size_t s = 0; s < rec.gi_reports.size(); ++s) {
    const bool warm = rec.gi_report_epochs[s] < rec.gi_warmup_end;
    for (const auto& r : rec.gi_reports[s]) {
      ++total;
      const bool satisfied =
          static_cast<double>(r.crossings) > r.target || r.capped || r.zero_grad;
      if (satisfied) ++ok;
      if (!warm) {
        ++post;
        if (static_cast<double>(r.crossings) > r.target) ++post_outright;
      }
    }
  }
  const double all_frac = total ? static_cast<double>(ok) / static_cast<double>(total) : 0.0;
  const double post_frac =
      post ? static_cast<double>(post_outright) / static_cast<double>(post) : 0.0;
  char buf[200];
  std::snprintf(buf, sizeof(buf),
                "%zu layer-steps: guarantee %.4f%% (need 100%%), post-warm-up outright %.2f%% "
                "(need >= 95%%)",
                total, 100.0 * all_frac, 100.0 * post_frac);
  return {all_frac == 1.0 && post_frac >= 0.95, buf};
}

// --------------------------------------------------------------------------
// 4. kappa-search oracle equivalence on 200 random layers.

Outcome criterion4() {
  Rng rng(4004);
  GIConfig cfg;
  int mismatch = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t dim = static_cast<std::size_t>(rng.uniform_int(5, 50));
    Tensor th({dim}), g({dim});
    for (std::size_t i = 0; i < dim; ++i) th.at(i) = rng.uniform(-1.0, 1.0);
    const double gscale = std::pow(10.0, rng.uniform(-7.0, 0.0));
    for (std::size_t i = 0; i < dim; ++i) g.at(i) = gscale * rng.normal();
    if (trial % 11 == 0)
      for (std::size_t i = 0; i < dim; ++i) g.at(i) = 0.0;

    QuantizedLayerState st;
    st.bits = 4;
    double lo = th.min_value(), hi = th.max_value();
    widen_degenerate(lo, hi);
    st.affine = quant_params(lo, hi, 4);
    st.qweights = quantize(th, st.affine, 4);
    st.initialized = true;

    const OptKind kinds[3] = {OptKind::sgd_nesterov, OptKind::adam, OptKind::rmsprop};
    OptimizerState o;
    o.kind = kinds[rng.uniform_int(0, 2)];
    o.lr = std::pow(10.0, rng.uniform(-4.0, -1.0));
    o.momentum = rng.uniform() < 0.5 ? 0.0 : 0.9;
    o.buf_m.assign(1, Tensor({dim}));
    o.buf_v.assign(1, Tensor({dim}));
    o.step_count = rng.uniform_int(0, 10);
    for (std::size_t i = 0; i < dim; ++i) {
      // The rmsprop slot holds a square average, which is nonnegative.
      o.buf_m[0].at(i) =
          o.kind == OptKind::rmsprop ? rng.uniform(0.0, 0.01) : rng.uniform(-0.1, 0.1);
      o.buf_v[0].at(i) = rng.uniform(0.0, 0.01);
    }

    const double target = rng.uniform(0.02, 0.6) * static_cast<double>(dim);
    const bool warm = rng.uniform() < 0.5;

    const auto got = search_kappa(st, th, g, o, 0, target, cfg, warm);
    kappa_replay::Opt ro{o.kind,   o.lr,  o.momentum,       o.beta1,
                         o.beta2,  o.eps, o.alpha,          o.step_count + 1,
                         o.buf_m[0].vec(), o.buf_v[0].vec()};
    const auto want =
        kappa_replay::search(th.vec(), g.vec(), st.qweights, st.affine.scale, st.affine.zero, 4,
                             ro, target, warm, cfg.doubling_cap, cfg.search_budget);
    if (got.kappa != want.kappa || got.report.crossings != want.crossings ||
        got.report.capped != want.capped)
      ++mismatch;
  }
  return {mismatch == 0,
          "200 randomized layers, " + std::to_string(mismatch) + " mismatches (need 0)"};
}

// --------------------------------------------------------------------------
// 5. Hessian tooling.

Outcome criterion5() {
  Rng rng(5005);
  // Quadratic with a known spectrum, dim 100: H = Q' diag(eigs) Q for a
  // random orthogonal Q (Gram-Schmidt on a Gaussian matrix), so the probe
  // quadratic form has honest off-diagonal variance.
  const std::size_t dim = 100;
  std::vector<double> eigs(dim);
  for (std::size_t i = 0; i < dim; ++i) eigs[i] = 0.5 + rng.uniform(0.0, 49.5);
  double exact_trace = 0.0;
  for (double e : eigs) exact_trace += e;
  std::vector<std::vector<double>> q(dim, std::vector<double>(dim));
  for (auto& rowv : q)
    for (double& v : rowv) v = rng.normal();
  for (std::size_t i = 0; i < dim; ++i) {
    for (std::size_t j = 0; j < i; ++j) {
      double dot = 0.0;
      for (std::size_t k = 0; k < dim; ++k) dot += q[i][k] * q[j][k];
      for (std::size_t k = 0; k < dim; ++k) q[i][k] -= dot * q[j][k];
    }
    double norm = 0.0;
    for (double v : q[i]) norm += v * v;
    norm = std::sqrt(norm);
    for (double& v : q[i]) v /= norm;
  }
  GradFn grad = [&](const std::vector<double>& th) {
    // H th = Q' diag(eigs) Q th, rows of q are the eigenvectors.
    std::vector<double> proj(dim, 0.0), g(dim, 0.0);
    for (std::size_t i = 0; i < dim; ++i)
      for (std::size_t k = 0; k < dim; ++k) proj[i] += q[i][k] * th[k];
    for (std::size_t i = 0; i < dim; ++i)
      for (std::size_t k = 0; k < dim; ++k) g[k] += eigs[i] * proj[i] * q[i][k];
    return g;
  };
  std::vector<double> theta(dim, 0.05);
  HvpFn h = [&](const std::vector<double>& v) { return hvp(grad, theta, v, 1e-4); };

  const TraceEstimate est = hutchinson_trace(h, dim, 1000, 55);
  if (std::fabs(est.trace - exact_trace) > 3.0 * est.std_error)
    return {false, "hutchinson outside 3 stderr on the known quadratic"};

  const SpectrumEstimate sp = lanczos_spectrum(h, dim, static_cast<int>(dim), 56);
  std::vector<double> sorted = eigs;
  std::sort(sorted.rbegin(), sorted.rend());
  if (sp.ritz.size() != dim) return {false, "lanczos returned a short spectrum"};
  double worst = 0.0;
  for (std::size_t i = 0; i < dim; ++i)
    worst = std::max(worst, std::fabs(sp.ritz[i] - sorted[i]) / std::fabs(sorted[i]));
  if (worst > 1e-6)
    return {false, "lanczos eigenvalue error " + std::to_string(worst) + " > 1e-6"};

  // Tiny net (< 200 params): trace within 5% of the explicit Hessian.
  Rng nrng(58);
  ModelSpec spec{3, {6}, 3};
  ClassifierNet net = build_teacher(spec, nrng);
  Tensor x({16, 3});
  for (std::size_t i = 0; i < x.numel(); ++i) x.at(i) = nrng.uniform(-1.0, 1.0);
  std::vector<int> labels;
  for (int i = 0; i < 16; ++i) labels.push_back(i % 3);
  const std::map<std::string, Tensor> inputs = {{"x", x}, {"target", one_hot(labels, 3)}};
  const GradLayout layout = GradLayout::of(net.g);
  GradFn ngrad = [&](const std::vector<double>& th) {
    Graph g2 = net.g;
    set_params_flat(g2, th);
    ForwardCache c = forward(g2, inputs, Mode::probe);
    return flatten_grads(backward(g2, c, net.loss), layout);
  };
  const std::vector<double> th0 = flatten_params(net.g);
  double exact_net = 0.0;
  const double eps = 1e-4;
  for (std::size_t j = 0; j < th0.size(); ++j) {
    std::vector<double> p = th0, m = th0;
    p[j] += eps;
    m[j] -= eps;
    exact_net += (ngrad(p)[j] - ngrad(m)[j]) / (2.0 * eps);
  }
  HvpFn nh = [&](const std::vector<double>& v) { return hvp(ngrad, th0, v, eps); };
  const TraceEstimate net_est = hutchinson_trace(nh, th0.size(), 2000, 59);
  const double rel = std::fabs(net_est.trace - exact_net) / std::fabs(exact_net);
  char buf[200];
  std::snprintf(buf, sizeof(buf),
                "quadratic: |%.4g - %.4g| <= 3se, all 100 eigs within %.2g; net trace rel err "
                "%.3f (<= 0.05)",
                est.trace, exact_trace, worst, rel);
  return {rel <= 0.05, buf};
}

// --------------------------------------------------------------------------
// 6 + 7. Curvature and cosine trends over 5 seeds.

struct TrendRuns {
  std::vector<RunRecord> zq, kd;
};

TrendRuns trend_runs(const LabContext& ctx, const ExperimentConfig& base) {
  TrendRuns out;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    out.zq.push_back(run_arm(ctx, base, "baseline", seed, true));
    out.kd.push_back(run_arm(ctx, base, "kd", seed, true));
  }
  return out;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

Outcome criterion6(const TrendRuns& runs) {
  int hits = 0;
  std::string detail;
  for (const RunRecord& r : runs.zq) {
    if (r.diag.trace_ce.empty()) return {false, "no trace series recorded"};
    const double mce = median(r.diag.trace_ce);
    const double mkl = median(r.diag.trace_kl);
    if (mkl < mce) ++hits;
    detail += " [" + std::to_string(mkl) + " vs " + std::to_string(mce) + "]";
  }
  return {hits >= 4, "median Tr(H_KL) < Tr(H_CE) in " + std::to_string(hits) + "/5 seeds:" + detail};
}

Outcome criterion7(const TrendRuns& runs) {
  int hits = 0;
  std::string detail;
  for (std::size_t s = 0; s < 5; ++s) {
    const RunRecord& zq = runs.zq[s];
    const RunRecord& kd = runs.kd[s];
    if (zq.diag.cosine_ce_kl.empty() || kd.diag.cosine_ce_kl.empty())
      return {false, "no cosine series recorded"};
    const double mz = mean(zq.diag.cosine_ce_kl);
    const double mk = mean(kd.diag.cosine_ce_kl);
    if (mz < mk) ++hits;
    char buf[64];
    std::snprintf(buf, sizeof(buf), " [zq %.3f kd %.3f]", mz, mk);
    detail += buf;
  }
  return {hits >= 4,
          "mean cos(g_CE, g_KL) lower in ZQ in " + std::to_string(hits) + "/5 seeds:" + detail};
}

// --------------------------------------------------------------------------
// 8 + 9. Ablation ordering and final KL distance over 5 seeds.

struct AblationRuns {
  std::vector<RunRecord> baseline, kl_only, ait;
};

AblationRuns ablation_runs(const LabContext& ctx, const ExperimentConfig& base) {
  AblationRuns out;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    out.baseline.push_back(run_arm(ctx, base, "baseline", seed, false));
    out.kl_only.push_back(run_arm(ctx, base, "kl_only", seed, false));
    out.ait.push_back(run_arm(ctx, base, "ait", seed, false));
  }
  return out;
}

Outcome criterion8(const AblationRuns& runs) {
  int hits = 0;
  std::string detail;
  for (std::size_t s = 0; s < 5; ++s) {
    const double b = runs.baseline[s].final_val_acc;
    const double k = runs.kl_only[s].final_val_acc;
    const double a = runs.ait[s].final_val_acc;
    const bool ok = (a >= k + 0.005) && (a >= b + 0.005);
    if (ok) ++hits;
    char buf[96];
    std::snprintf(buf, sizeof(buf), " [base %.3f klonly %.3f ait %.3f]", b, k, a);
    detail += buf;
  }
  return {hits >= 4,
          "AIT beats KL-only and Baseline by >= 0.5%p in " + std::to_string(hits) +
              "/5 seeds:" + detail};
}

Outcome criterion9(const AblationRuns& runs) {
  int hits = 0;
  std::string detail;
  for (std::size_t s = 0; s < 5; ++s) {
    const double ka = runs.ait[s].final_kl;
    const double kk = runs.kl_only[s].final_kl;
    if (ka < kk) ++hits;
    char buf[80];
    std::snprintf(buf, sizeof(buf), " [ait %.4g klonly %.4g]", ka, kk);
    detail += buf;
  }
  return {hits >= 4, "final KL lower for AIT in " + std::to_string(hits) + "/5 seeds:" + detail};
}

// --------------------------------------------------------------------------
// 10. Byte-identical reports for identical seed.

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

Outcome criterion10(const LabContext& ctx, const ExperimentConfig& base) {
  ExperimentConfig cfg = base;
  cfg.arm = "ait";
  cfg.seed = 7;
  cfg.diag.cosine = true;
  cfg.diag.gi_csv = true;
  const fs::path root = fs::temp_directory_path() / "zsq_acceptance_det";
  fs::remove_all(root);
  RunRecord r1 = run_experiment(cfg, ctx.teacher, ctx.data, (root / "a").string());
  RunRecord r2 = run_experiment(cfg, ctx.teacher, ctx.data, (root / "b").string());
  if (r1.aborted || r2.aborted) return {false, "run aborted"};
  std::vector<fs::path> rel;
  for (const auto& e : fs::recursive_directory_iterator(root / "a"))
    if (e.is_regular_file() && e.path().extension() == ".csv")
      rel.push_back(fs::relative(e.path(), root / "a"));
  if (rel.empty()) return {false, "no csv reports produced"};
  std::size_t compared = 0;
  for (const auto& p : rel) {
    if (!fs::exists(root / "b" / p)) return {false, "missing " + p.string() + " in second run"};
    if (slurp(root / "a" / p) != slurp(root / "b" / p))
      return {false, "byte mismatch in " + p.string()};
    ++compared;
  }
  fs::remove_all(root);
  return {true, std::to_string(compared) + " report CSVs byte-identical across two seed-7 runs"};
}

// --------------------------------------------------------------------------
// 11. rho sensitivity.

Outcome criterion11(const LabContext& ctx, const ExperimentConfig& base) {
  std::vector<double> means;
  std::string detail;
  for (const double rho : {0.1, 0.01, 0.001}) {
    std::vector<double> accs;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      ExperimentConfig cfg = base;
      cfg.gi.rho0 = rho;
      cfg.arm = "ait";
      cfg.seed = seed;
      const RunRecord rec = run_experiment(cfg, ctx.teacher, ctx.data, "");
      if (rec.aborted) return {false, "run aborted at rho " + std::to_string(rho)};
      accs.push_back(rec.final_val_acc);
    }
    means.push_back(mean(accs));
    char buf[64];
    std::snprintf(buf, sizeof(buf), " [rho %.3g -> %.4f]", rho, means.back());
    detail += buf;
  }
  const double spread = *std::max_element(means.begin(), means.end()) -
                        *std::min_element(means.begin(), means.end());
  char buf[96];
  std::snprintf(buf, sizeof(buf), "seed-mean spread %.4f (<= 0.03):%s", spread, detail.c_str());
  return {spread <= 0.03, buf};
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));
  auto wanted = [&](int n) { return only.empty() || only.count(n) > 0; };

  const ExperimentConfig base = default_config();
  LabContext ctx;
  const bool needs_ctx = wanted(3) || wanted(6) || wanted(7) || wanted(8) || wanted(9) ||
                         wanted(10) || wanted(11);
  if (needs_ctx) {
    ctx = make_context(base);
    std::printf("teacher: train acc %.4f, val acc %.4f\n", ctx.teacher_train_acc,
                ctx.teacher_val_acc);
  }

  int failures = 0;
  auto report = [&](int n, const char* title, const std::function<Outcome()>& fn) {
    if (!wanted(n)) return;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("[%s] C%d %s (%.1fs): %s\n", o.pass ? "PASS" : "FAIL", n, title, secs,
                o.detail.c_str());
    std::fflush(stdout);
    if (!o.pass) ++failures;
  };

  report(1, "gradient correctness", criterion1);
  report(2, "quantizer suite", criterion2);
  report(3, "GI guarantee", [&] { return criterion3(ctx, base); });
  report(4, "kappa-search oracle equivalence", criterion4);
  report(5, "Hessian tooling", criterion5);

  if (wanted(6) || wanted(7)) {
    TrendRuns runs = trend_runs(ctx, base);
    report(6, "curvature-gap trend", [&] { return criterion6(runs); });
    report(7, "cosine-gap trend", [&] { return criterion7(runs); });
  }
  if (wanted(8) || wanted(9)) {
    AblationRuns runs = ablation_runs(ctx, base);
    report(8, "ablation ordering", [&] { return criterion8(runs); });
    report(9, "KL-distance claim", [&] { return criterion9(runs); });
  }
  report(10, "determinism", [&] { return criterion10(ctx, base); });
  report(11, "rho-sensitivity robustness", [&] { return criterion11(ctx, base); });

  std::printf("%s (%d failure%s)\n", failures == 0 ? "ACCEPTANCE PASS" : "ACCEPTANCE FAIL",
              failures, failures == 1 ? "" : "s");
  return failures;
}
