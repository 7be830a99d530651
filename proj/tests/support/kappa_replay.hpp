// Test-side replay oracle for the two-phase kappa search, coded from the
// documented procedure independently of the library implementation:
// double kappa from 1.0 until the previewed step crosses more than T
// rounding thresholds (warm-up cap 128, otherwise 2^doubling_cap), then up
// to `budget` binary-search iterations in [kappa/2, kappa]; select the
// candidate exceeding T that minimizes |crossings - T| (ties toward smaller
// kappa), falling back to the overall closest when nothing exceeds.

#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "zsq/optim.hpp"

namespace kappa_replay {

struct Opt {
  zsq::OptKind kind;
  double lr, momentum, beta1, beta2, eps, alpha;
  std::int64_t t_next;
  std::vector<double> m, v;
};

inline std::vector<double> preview(const Opt& o, const std::vector<double>& th,
                                   const std::vector<double>& g, double kappa) {
  std::vector<double> out(th.size());
  for (std::size_t i = 0; i < th.size(); ++i) {
    const double gp = kappa * g[i];
    switch (o.kind) {
      case zsq::OptKind::sgd_nesterov: {
        const double buf = o.momentum * o.m[i] + gp;
        out[i] = th[i] - o.lr * (gp + o.momentum * buf);
        break;
      }
      case zsq::OptKind::adam: {
        const double bc1 = 1.0 - std::pow(o.beta1, static_cast<double>(o.t_next));
        const double bc2 = 1.0 - std::pow(o.beta2, static_cast<double>(o.t_next));
        const double mn = o.beta1 * o.m[i] + (1.0 - o.beta1) * gp;
        const double vn = o.beta2 * o.v[i] + (1.0 - o.beta2) * gp * gp;
        out[i] = th[i] - o.lr * (mn / bc1) / (std::sqrt(vn / bc2) + o.eps);
        break;
      }
      case zsq::OptKind::rmsprop: {
        const double vn = o.alpha * o.m[i] + (1.0 - o.alpha) * gp * gp;
        out[i] = th[i] - o.lr * gp / (std::sqrt(vn) + o.eps);
        break;
      }
    }
  }
  return out;
}

inline std::int32_t quant(double v, double s, double z, int bits) {
  const double lo = -std::pow(2.0, bits - 1), hi = std::pow(2.0, bits - 1) - 1.0;
  double r = std::nearbyint(v * s - z);
  if (r < lo) r = lo;
  if (r > hi) r = hi;
  return static_cast<std::int32_t>(r);
}

struct Result {
  double kappa;
  std::size_t crossings;
  bool capped;
  bool zero_grad;
};

inline Result search(const std::vector<double>& th, const std::vector<double>& g,
                     const std::vector<std::int32_t>& q0, double s, double z, int bits,
                     const Opt& o, double target, bool warm, int doubling_cap, int budget) {
  bool zero = true;
  for (double x : g)
    if (x != 0.0) zero = false;
  if (zero) return {1.0, 0, false, true};

  auto delta = [&](double kappa) {
    const std::vector<double> cand = preview(o, th, g, kappa);
    std::size_t d = 0;
    for (std::size_t i = 0; i < cand.size(); ++i)
      if (quant(cand[i], s, z, bits) != q0[i]) ++d;
    return d;
  };

  struct Cand {
    double kappa;
    std::size_t d;
  };
  std::vector<Cand> cands;
  const std::size_t d1 = delta(1.0);
  if (static_cast<double>(d1) > target) return {1.0, d1, false, false};
  cands.push_back({1.0, d1});

  const double cap = warm ? 128.0 : std::ldexp(1.0, doubling_cap);
  double kappa = 1.0;
  bool bracket = false, capped = false;
  while (kappa < cap) {
    kappa = std::min(kappa * 2.0, cap);
    const std::size_t d = delta(kappa);
    cands.push_back({kappa, d});
    if (static_cast<double>(d) > target) {
      bracket = true;
      break;
    }
  }
  if (bracket) {
    double lo = kappa / 2.0, hi = kappa;
    for (int i = 0; i < budget; ++i) {
      const double mid = 0.5 * (lo + hi);
      const std::size_t d = delta(mid);
      cands.push_back({mid, d});
      if (static_cast<double>(d) > target)
        hi = mid;
      else
        lo = mid;
    }
  } else {
    capped = true;
  }

  const Cand* best = nullptr;
  bool best_exceeds = false;
  for (const Cand& c : cands) {
    const bool exceeds = static_cast<double>(c.d) > target;
    const double dist = std::fabs(static_cast<double>(c.d) - target);
    if (!best) {
      best = &c;
      best_exceeds = exceeds;
      continue;
    }
    const double bdist = std::fabs(static_cast<double>(best->d) - target);
    bool better;
    if (exceeds != best_exceeds)
      better = exceeds;
    else
      better = dist < bdist || (dist == bdist && c.kappa < best->kappa);
    if (better) {
      best = &c;
      best_exceeds = exceeds;
    }
  }
  return {best->kappa, best->d, capped, false};
}

}  // namespace kappa_replay
