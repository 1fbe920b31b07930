#include "doctest.h"

#include <cmath>

#include "errors.hpp"
#include "optim.hpp"
#include "problems.hpp"
#include "rng.hpp"

using namespace resopt;

namespace {

BaseConfig make_base(BaseKind kind, double lr, double momentum = 0.9) {
  BaseConfig b;
  b.kind = kind;
  b.lr = LrSchedule::parse(lr, "");
  b.momentum = momentum;
  return b;
}

}  // namespace

TEST_CASE("lr schedule") {
  const LrSchedule s = LrSchedule::parse(0.1, "0.1@100,200");
  CHECK(s.at(0) == 0.1);
  CHECK(s.at(99) == 0.1);
  CHECK(s.at(100) == doctest::Approx(0.01).epsilon(1e-12));
  CHECK(s.at(250) == doctest::Approx(0.001).epsilon(1e-12));
  CHECK_THROWS_AS(LrSchedule::parse(0.1, "0.1@"), Error);
  CHECK_THROWS_AS(LrSchedule::parse(0.1, "0.1"), Error);
  CHECK_THROWS_AS(LrSchedule::parse(0.1, "0.1@200,100"), Error);
  CHECK_THROWS_AS(LrSchedule::parse(0.0, ""), Error);
}

TEST_CASE("sgd step hand value") {
  BaseOptimizer opt(make_base(BaseKind::sgd, 0.1), 1);
  CHECK(opt.step({1.0}, {1.0}) == Vec{0.9});
}

TEST_CASE("sgdm two-step hand trace") {
  BaseOptimizer opt(make_base(BaseKind::sgdm, 0.1, 0.9), 1);
  const Vec x1 = opt.step({1.0}, {1.0});
  CHECK(opt.momentum_buffer() == Vec{1.0});
  CHECK(x1 == Vec{0.9});
  const Vec x2 = opt.step(x1, {1.0});
  CHECK(opt.momentum_buffer() == Vec{1.9});
  CHECK(x2[0] == doctest::Approx(0.71).epsilon(1e-15));
}

TEST_CASE("zero momentum degenerates to sgd exactly") {
  BaseOptimizer m(make_base(BaseKind::sgdm, 0.05, 0.0), 3);
  BaseOptimizer s(make_base(BaseKind::sgd, 0.05), 3);
  RngStream rng(3);
  Vec xm{1, -2, 0.5}, xs = xm;
  for (int t = 0; t < 50; ++t) {
    Vec g{rng.normal(), rng.normal(), rng.normal()};
    xm = m.step(xm, g);
    xs = s.step(xs, g);
    REQUIRE(xm == xs);
  }
}

TEST_CASE("adam and adagrad move opposite the gradient with sane magnitude") {
  BaseOptimizer adam(make_base(BaseKind::adam, 0.001), 2);
  const Vec x1 = adam.step({0.0, 0.0}, {1.0, -2.0});
  // bias-corrected first step is lr * g / (|g| + eps)
  CHECK(x1[0] == doctest::Approx(-0.001).epsilon(1e-6));
  CHECK(x1[1] == doctest::Approx(0.001).epsilon(1e-6));

  BaseOptimizer ada(make_base(BaseKind::adagrad, 0.1), 1);
  const Vec y1 = ada.step({0.0}, {4.0});
  CHECK(y1[0] == doctest::Approx(-0.1).epsilon(1e-9));  // g / sqrt(g^2)
}

TEST_CASE("asgd averaging tracks then freezes into the mean") {
  BaseOptimizer opt(make_base(BaseKind::asgd, 0.5), 1);
  Vec x{8.0};
  x = opt.step(x, {2.0});  // 7
  CHECK(opt.average() == Vec{7.0});
  CHECK(!opt.averaging());
  opt.start_averaging();
  x = opt.step(x, {2.0});  // 6
  x = opt.step(x, {2.0});  // 5
  // average over {7 (seed), 6, 5}
  CHECK(opt.average()[0] == doctest::Approx(6.0).epsilon(1e-15));
  CHECK(x == Vec{5.0});
}

TEST_CASE("non-finite gradient is rejected") {
  BaseOptimizer opt(make_base(BaseKind::sgd, 0.1), 1);
  CHECK_THROWS_AS((void)opt.step({0.0}, {std::nan("")}), Error);
}

TEST_CASE("wrapped step hand trace: scale 0.5, deterministic quadratic") {
  // f = 0.5 x^2, gradient x; x0 = 1, lr = 0.1
  QuadraticProblem q(1);
  Dataset S;
  Sample origin;
  origin.features = {0.0};
  S.samples = {origin};
  ResidualWrapper w(make_base(BaseKind::sgd, 0.1), SchemeSpec::parse("scale:0.5"), {1.0});
  w.step(q, S, {0});
  CHECK(w.reference()[0] == doctest::Approx(0.9).epsilon(1e-15));
  CHECK(w.params()[0] == doctest::Approx(0.95).epsilon(1e-15));
  CHECK(w.residual()[0] == doctest::Approx(0.05).epsilon(1e-15));
  // invariant x - r = x_ref holds to the drift tolerance
  CHECK(std::fabs((w.params()[0] - w.residual()[0]) - w.reference()[0]) <=
        1e-12 * (1.0 + std::fabs(w.reference()[0])));
}

TEST_CASE("alpha=1 wrapper collapses onto the base trajectory bitwise") {
  const Dataset S = generate_blobs(2, 20, 6, 1.0, 5);
  LogisticProblem p(6, 2);
  RngStream init(77);
  const Vec x0 = p.init_params(init);
  ResidualWrapper w(make_base(BaseKind::sgdm, 0.2), SchemeSpec::parse("scale:1.0"), x0);
  BaseOptimizer plain(make_base(BaseKind::sgdm, 0.2), x0.size());
  Vec x = x0;
  RngStream pick(123);
  for (int t = 0; t < 200; ++t) {
    const std::size_t i = pick.index_below(S.size());
    const Vec g = p.grad(w.reference(), S[i]);
    w.apply_gradient(g);
    x = plain.step(x, p.grad(x, S[i]));
    REQUIRE(w.params() == x);
    REQUIRE(norm2(w.residual()) == 0.0);
  }
}

TEST_CASE("reference trajectory equals the unwrapped run bitwise") {
  const Dataset S = generate_blobs(2, 25, 8, 1.0, 31);
  LogisticProblem p(8, 2, 0.001);
  RngStream init(9);
  const Vec x0 = p.init_params(init);
  const std::vector<SchemeSpec> schemes = {SchemeSpec::parse("scale:0.25"),
                                           SchemeSpec::parse("sign"),
                                           SchemeSpec::parse("topk:0.1")};
  const std::vector<BaseKind> kinds = {BaseKind::sgd, BaseKind::sgdm, BaseKind::asgd,
                                       BaseKind::adam, BaseKind::adagrad};
  for (const auto kind : kinds) {
    for (const auto& scheme : schemes) {
      ResidualWrapper w(make_base(kind, 0.05), scheme, x0);
      BaseOptimizer plain(make_base(kind, 0.05), x0.size());
      Vec x = x0;
      RngStream pick(2024);
      for (int t = 0; t < 60; ++t) {
        const std::size_t i = pick.index_below(S.size());
        w.apply_gradient(p.grad(w.reference(), S[i]));
        x = plain.step(x, p.grad(x, S[i]));
        REQUIRE(w.reference() == x);
      }
    }
  }
}

TEST_CASE("scale recursion: r' = (1-a)(r + lr v) and residual stays bounded") {
  const Dataset S = generate_blobs(2, 25, 8, 1.0, 41);
  LogisticProblem p(8, 2);
  RngStream init(15);
  const Vec x0 = p.init_params(init);
  for (double alpha : {0.5, 0.25, 0.0625}) {
    SchemeSpec scheme{SchemeKind::scale, alpha, 1.0};
    ResidualWrapper w(make_base(BaseKind::sgdm, 0.1), scheme, x0);
    double sup_step = 0.0;  // sup over steps of ||lr * v||_2
    const long burn_in = static_cast<long>(1.0 / alpha);
    w.observer = [&](const WrapperObservation& o) {
      const double scale_tol = 1e-12 * (1.0 + norm_inf(o.x_ref_next));
      for (std::size_t i = 0; i < o.r_next.size(); ++i) {
        const double expect = (1.0 - alpha) * (o.r_prev[i] + o.lr * o.momentum[i]);
        const double tol =
            1e-12 * std::max({std::fabs(expect), std::fabs(o.r_next[i])}) + scale_tol;
        REQUIRE(std::fabs(o.r_next[i] - expect) <= tol);
      }
      sup_step = std::max(sup_step, o.lr * norm2(o.momentum));
      if (o.t >= burn_in) {
        const double cap = (1.0 - alpha) / alpha * sup_step;
        REQUIRE(norm2(o.r_next) <= 1.05 * cap + 1e-15);
      }
    };
    RngStream pick(7);
    for (int t = 0; t < 300; ++t) {
      w.step(p, S, {pick.index_below(S.size())});
    }
  }
}

TEST_CASE("signsgd hand values") {
  CompressedConfig cc;
  cc.lr = LrSchedule::parse(1.0, "");
  CompressedOptimizer opt(cc, 3);
  // x - (||g||_1/d) sign(g) with lr 1
  CHECK(opt.step({0, 0, 0}, {1, -2, 3}) == Vec{-2, 2, -2});
}

TEST_CASE("signsgd with equal-magnitude gradient components equals sgd") {
  // power-of-two magnitudes keep the L1 mean exact in fp
  CompressedConfig cc;
  cc.lr = LrSchedule::parse(0.25, "");
  CompressedOptimizer sign_opt(cc, 3);
  BaseOptimizer sgd(make_base(BaseKind::sgd, 0.25), 3);
  Vec xa{1, 2, 3}, xb = xa;
  for (int t = 0; t < 20; ++t) {
    const Vec g{2.0, -2.0, 2.0};
    xa = sign_opt.step(xa, g);
    xb = sgd.step(xb, g);
    REQUIRE(xa == xb);
  }
}

TEST_CASE("signsgd leaves x unchanged on zero gradient") {
  CompressedConfig cc;
  cc.lr = LrSchedule::parse(0.1, "");
  CompressedOptimizer opt(cc, 2);
  CHECK(opt.step({1, -1}, {0, 0}) == Vec{1, -1});
}

TEST_CASE("ef-signsgd conservation and telescoping") {
  CompressedConfig cc;
  cc.lr = LrSchedule::parse(0.05, "");
  cc.error_feedback = true;
  CompressedOptimizer opt(cc, 5);
  RngStream rng(17);
  Vec x(5, 0.0);
  Vec gamma_g_sum(5, 0.0);
  Vec c_sum(5, 0.0);
  for (int t = 0; t < 200; ++t) {
    Vec g(5);
    for (auto& v : g) v = rng.normal();
    const Vec e_before = opt.error();
    x = opt.step(x, g);
    // per-step: c + e' = lr*g + e; the proposed vector is that exact sum, and
    // the split conserves it to one rounding quantum (sign compressor)
    for (std::size_t i = 0; i < 5; ++i) {
      const double p_i = 0.05 * g[i] + e_before[i];
      REQUIRE(opt.last_proposed()[i] == p_i);
      const double defect =
          std::fabs(opt.last_compressed()[i] + opt.error()[i] - opt.last_proposed()[i]);
      const double quantum = std::max({std::fabs(opt.last_compressed()[i]),
                                       std::fabs(opt.error()[i]),
                                       std::fabs(opt.last_proposed()[i])}) *
                             0x1.0p-52;
      REQUIRE(defect <= quantum);
    }
    for (std::size_t i = 0; i < 5; ++i) {
      gamma_g_sum[i] += 0.05 * g[i];
      c_sum[i] += opt.last_compressed()[i];
    }
  }
  // cumulative: sum of applied updates = sum of proposed gradients - e_T
  for (std::size_t i = 0; i < 5; ++i) {
    CHECK(c_sum[i] == doctest::Approx(gamma_g_sum[i] - opt.error()[i]).epsilon(1e-9));
  }
}

TEST_CASE("ef-signsgd with zero error and equal magnitudes reduces to sgd") {
  CompressedConfig cc;
  cc.lr = LrSchedule::parse(0.1, "");
  cc.error_feedback = true;
  CompressedOptimizer opt(cc, 2);
  const Vec x1 = opt.step({1, 1}, {2, -2});
  CHECK(x1 == Vec{0.8, 1.2});
  CHECK(opt.error() == Vec{0, 0});
}

TEST_CASE("asgd trigger") {
  CHECK(!asgd_switch(1, {}));
  CHECK(!asgd_switch(1, {3.0}));
  CHECK(!asgd_switch(1, {3.0, 2.0}));          // strictly improving
  CHECK(!asgd_switch(2, {5, 4, 3, 2, 1}));     // strictly decreasing
  CHECK(asgd_switch(1, {3.0, 2.0, 2.5}));   // 2.5 not better than 2
  CHECK(asgd_switch(1, {3.0, 2.0, 2.0}));   // ties are "not better"
  CHECK(asgd_switch(3, {5, 1, 4, 3, 2}));   // 2 not better than min{1,4,3}
  CHECK(!asgd_switch(3, {5, 4, 3, 2, 1}));
  CHECK_THROWS_AS((void)asgd_switch(0, {1.0}), Error);
}

TEST_CASE("wrapper residual reset re-anchors the reference") {
  QuadraticProblem q(2);
  Dataset S;
  Sample z;
  z.features = {0.0, 0.0};
  S.samples = {z};
  ResidualWrapper w(make_base(BaseKind::sgd, 0.1), SchemeSpec::parse("scale:0.25"), {1.0, -2.0});
  for (int t = 0; t < 5; ++t) w.step(q, S, {0});
  CHECK(norm2(w.residual()) > 0.0);
  w.reset_residual();
  CHECK(norm2(w.residual()) == 0.0);
  CHECK(w.params() == w.reference());
}
