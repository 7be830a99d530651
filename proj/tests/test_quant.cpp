#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <set>

#include "zsq/quant.hpp"
#include "zsq/rng.hpp"

using namespace zsq;

namespace {

// Independent one-line evaluator of the scale/offset formulas.
void oracle_params(double lo, double hi, int n, double& s, double& z) {
  s = (std::pow(2.0, n) - 1.0) / (hi - lo);
  z = s * lo + std::pow(2.0, n - 1);
}

// Independent per-scalar quantizer with hand-rolled half-to-even rounding.
std::int32_t oracle_quantize(double v, double s, double z, int n) {
  const double r = v * s - z;
  const double f = std::floor(r);
  const double frac = r - f;
  double rounded;
  if (frac > 0.5)
    rounded = f + 1.0;
  else if (frac < 0.5)
    rounded = f;
  else
    rounded = (std::fmod(f, 2.0) == 0.0) ? f : f + 1.0;
  const double lo = -std::pow(2.0, n - 1), hi = std::pow(2.0, n - 1) - 1.0;
  rounded = std::min(std::max(rounded, lo), hi);
  return static_cast<std::int32_t>(rounded);
}

}  // namespace

TEST_CASE("quant_params direct substitutions") {
  const AffineParams a = quant_params(-1.0, 1.0, 4);
  CHECK(a.scale == doctest::Approx(7.5).epsilon(1e-15));
  CHECK(a.zero == doctest::Approx(0.5).epsilon(1e-15));
  const AffineParams b = quant_params(0.0, 15.0, 4);
  CHECK(b.scale == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(b.zero == doctest::Approx(8.0).epsilon(1e-15));
  double s, z;
  oracle_params(-0.37, 0.82, 8, s, z);
  const AffineParams c = quant_params(-0.37, 0.82, 8);
  CHECK(c.scale == doctest::Approx(s).epsilon(1e-15));
  CHECK(c.zero == doctest::Approx(z).epsilon(1e-15));
  CHECK_THROWS_AS(quant_params(0.5, 0.5, 4), Error);
}

TEST_CASE("quantize endpoints and per-scalar oracle") {
  const AffineParams p = quant_params(-1.0, 1.0, 4);
  const auto q = quantize(Tensor({2}, {-1.0, 1.0}), p, 4);
  CHECK(q[0] == -8);
  CHECK(q[1] == 7);

  const Tensor vals({3}, {-0.2, 0.0, 0.31});
  const auto got = quantize(vals, p, 4);
  for (std::size_t i = 0; i < 3; ++i)
    CHECK(got[i] == oracle_quantize(vals.at(i), p.scale, p.zero, 4));

  // Exact ties exercise half-to-even: range [0,15], n=4 gives S=1, z=8.
  const AffineParams t = quant_params(0.0, 15.0, 4);
  const Tensor ties({4}, {2.5, 3.5, 10.5, 11.5});
  const auto tq = quantize(ties, t, 4);
  for (std::size_t i = 0; i < 4; ++i)
    CHECK(tq[i] == oracle_quantize(ties.at(i), t.scale, t.zero, 4));
  CHECK(tq[0] == -6);  // -5.5 rounds to the even -6
  CHECK(tq[1] == -4);  // -4.5 rounds to the even -4
}

TEST_CASE("dequantize endpoints and round-trip error bound") {
  const AffineParams p = quant_params(-1.0, 1.0, 4);
  CHECK(dequantize({-8}, {1}, p).at(0) == doctest::Approx(-1.0).epsilon(1e-15));
  CHECK(dequantize({7}, {1}, p).at(0) == doctest::Approx(1.0).epsilon(1e-15));

  Rng rng(17);
  for (int i = 0; i < 5000; ++i) {
    const double v = rng.uniform(-1.0, 1.0);
    const auto q = quantize(Tensor({1}, {v}), p, 4);
    const double back = dequantize(q, {1}, p).at(0);
    CHECK(std::fabs(back - v) <= 0.5 / p.scale + 1e-12);
  }
}

TEST_CASE("grid idempotence: quantize(dequantize(q)) == q for all levels") {
  for (int bits : {2, 3, 4, 8}) {
    const AffineParams p = quant_params(-0.83, 1.21, bits);
    for (std::int64_t q = quant_min(bits); q <= quant_max(bits); ++q) {
      const Tensor back = dequantize({static_cast<std::int32_t>(q)}, {1}, p);
      const auto again = quantize(back, p, bits);
      CHECK(again[0] == static_cast<std::int32_t>(q));
    }
  }
}

TEST_CASE("monotonicity of quantize") {
  Rng rng(23);
  const AffineParams p = quant_params(-2.0, 3.0, 4);
  double prev_v = -10.0;
  std::int32_t prev_q = quantize(Tensor({1}, {prev_v}), p, 4)[0];
  std::vector<double> vals;
  for (int i = 0; i < 3000; ++i) vals.push_back(rng.uniform(-10.0, 10.0));
  std::sort(vals.begin(), vals.end());
  for (double v : vals) {
    const std::int32_t q = quantize(Tensor({1}, {v}), p, 4)[0];
    CHECK(q >= prev_q);
    prev_q = q;
  }
}

TEST_CASE("fake_quant_forward: grid fixed point, degenerate range, level count") {
  // Values already on the quantization grid are reproduced exactly.
  {
    const AffineParams p = quant_params(-1.0, 1.0, 4);
    Tensor grid({16});
    for (int q = -8; q <= 7; ++q)
      grid.at(static_cast<std::size_t>(q + 8)) = (static_cast<double>(q) + p.zero) / p.scale;
    QuantizedLayerState st;
    const Tensor out = fake_quant_forward(grid, 4, st);
    for (std::size_t i = 0; i < 16; ++i) CHECK(out.at(i) == doctest::Approx(grid.at(i)).epsilon(1e-12));
  }
  // Constant tensor goes through the degenerate-range widening rule.
  {
    QuantizedLayerState st;
    const Tensor out = fake_quant_forward(Tensor({2}, {0.5, 0.5}), 4, st);
    CHECK(std::fabs(out.at(0) - 0.5) <= 1e-7);
    CHECK(std::fabs(out.at(1) - 0.5) <= 1e-7);
  }
  // At most 2^n distinct output values.
  {
    Rng rng(31);
    Tensor big({4096});
    for (std::size_t i = 0; i < big.numel(); ++i) big.at(i) = rng.uniform(-3.0, 2.0);
    QuantizedLayerState st;
    const Tensor out = fake_quant_forward(big, 4, st);
    std::set<double> levels(out.vec().begin(), out.vec().end());
    CHECK(levels.size() <= 16);
  }
}

TEST_CASE("ste_backward: pass, clip, and mixed mask oracle") {
  const AffineParams p = quant_params(-1.0, 1.0, 4);
  const Tensor up({4}, {1.0, -2.0, 3.0, -4.0});
  {
    const Tensor theta({4}, {-1.0, -0.5, 0.0, 1.0});
    CHECK(ste_backward(up, theta, p).vec() == up.vec());
  }
  {
    const Tensor theta({4}, {-5.0, -2.0, 2.0, 7.0});
    CHECK(ste_backward(up, theta, p).vec() == std::vector<double>{0, 0, 0, 0});
  }
  {
    Rng rng(37);
    Tensor theta({4});
    for (std::size_t i = 0; i < 4; ++i) theta.at(i) = rng.uniform(-2.0, 2.0);
    const Tensor got = ste_backward(up, theta, p);
    for (std::size_t i = 0; i < 4; ++i) {
      const double expect =
          (theta.at(i) >= p.theta_min && theta.at(i) <= p.theta_max) ? up.at(i) : 0.0;
      CHECK(got.at(i) == expect);
    }
  }
}

TEST_CASE("observe_activation: init, one EMA step, 10-batch replay") {
  ActivationObserver obs;
  obs.momentum = 0.1;
  observe_activation(obs, Tensor({2}, {0.0, 1.0}));
  CHECK(obs.running_min == 0.0);
  CHECK(obs.running_max == 1.0);
  observe_activation(obs, Tensor({2}, {-1.0, 2.0}));
  CHECK(obs.running_min == doctest::Approx(-0.1).epsilon(1e-15));
  CHECK(obs.running_max == doctest::Approx(1.1).epsilon(1e-15));

  // Step-by-step EMA replay over random batches.
  Rng rng(41);
  ActivationObserver o2;
  o2.momentum = 0.1;
  double mn = 0.0, mx = 0.0;
  for (int b = 0; b < 10; ++b) {
    Tensor batch({8});
    for (std::size_t i = 0; i < 8; ++i) batch.at(i) = rng.uniform(-5.0, 5.0);
    const double blo = batch.min_value(), bhi = batch.max_value();
    if (b == 0) {
      mn = blo;
      mx = bhi;
    } else {
      mn = 0.9 * mn + 0.1 * blo;
      mx = 0.9 * mx + 0.1 * bhi;
    }
    observe_activation(o2, batch);
  }
  CHECK(o2.running_min == doctest::Approx(mn).epsilon(1e-15));
  CHECK(o2.running_max == doctest::Approx(mx).epsilon(1e-15));
  CHECK(o2.observed_batches == 10);
}

TEST_CASE("count_threshold_crossings") {
  CHECK(count_threshold_crossings({1, 2, 3}, {1, 2, 3}) == 0);
  CHECK(count_threshold_crossings({1, 2, 3}, {2, 3, 4}) == 3);
  CHECK(count_threshold_crossings({1, 2, 3, 4}, {1, 3, 3, 5}) == 2);
  CHECK_THROWS_AS(count_threshold_crossings({1}, {1, 2}), Error);
  // Symmetry and the dimension bound on random vectors.
  Rng rng(43);
  std::vector<std::int32_t> a(64), b(64);
  for (std::size_t i = 0; i < 64; ++i) {
    a[i] = static_cast<std::int32_t>(rng.uniform_int(-8, 7));
    b[i] = static_cast<std::int32_t>(rng.uniform_int(-8, 7));
  }
  CHECK(count_threshold_crossings(a, b) == count_threshold_crossings(b, a));
  CHECK(count_threshold_crossings(a, b) <= 64);
}
