// SPDX-License-Identifier: Apache-2.0
// Kernel tests: tensor ops, autodiff tape vs finite differences, Adam,
// checkpoint round-trips. Numeric constants computed by hand or with an
// independent script and frozen here.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>

#include "lexkit/checkpoint.hpp"
#include "lexkit/io.hpp"
#include "lexkit/gradcheck.hpp"
#include "lexkit/nn.hpp"
#include "lexkit/optimizer.hpp"
#include "lexkit/rng.hpp"
#include "lexkit/tape.hpp"
#include "lexkit/tensor.hpp"

using namespace lexkit;
using nn::Parameter;
using nn::Tape;
using nn::Tensor;
using nn::Var;

namespace {

Tensor randn(std::vector<std::int64_t> shape, Rng& rng, double scale = 1.0) {
  Tensor t(std::move(shape));
  for (std::int64_t i = 0; i < t.size(); ++i) t[i] = rng.normal() * scale;
  return t;
}

/// w_left * y * w_right: a fixed rank-1 weighted reduction to a scalar so
/// gradient checks see a distinct weight per output element.
Var reduce(Tape& tape, Var y, std::int64_t rows, std::int64_t cols) {
  Tensor wl({1, rows}), wr({cols, 1});
  for (std::int64_t i = 0; i < rows; ++i) wl[i] = 0.3 + 0.17 * static_cast<double>(i);
  for (std::int64_t j = 0; j < cols; ++j) wr[j] = 0.7 - 0.11 * static_cast<double>(j);
  return tape.matmul(tape.matmul(tape.constant(wl), y), tape.constant(wr));
}

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_CASE("tensor basics") {
  Tensor t({2, 3});
  CHECK(t.size() == 6);
  CHECK(t.rows() == 2);
  CHECK(t.cols() == 3);
  t.at(1, 2) = 4.5;
  CHECK(t[5] == 4.5);
  CHECK(Tensor::scalar(2.0).item() == 2.0);
  CHECK_THROWS(Tensor({2, 2}, {1.0, 2.0, 3.0}));  // size mismatch

  Tensor bad({2});
  bad[0] = std::nan("");
  CHECK_FALSE(bad.all_finite());
  CHECK_THROWS_WITH_AS(bad.check_finite("weights"), doctest::Contains("weights"),
                       std::runtime_error);
}

TEST_CASE("softmax oracle values") {
  // [0,0] -> [0.5,0.5]; huge equal logits must not overflow.
  Tensor a({1, 2}, {0.0, 0.0});
  Tensor sa = nn::softmax(a, 1);
  CHECK(sa[0] == doctest::Approx(0.5).epsilon(1e-12));

  Tensor b({1, 2}, {1000.0, 1000.0});
  Tensor sb = nn::softmax(b, 1);
  CHECK(sb[0] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(sb.all_finite());

  // [0, ln 3] -> [0.25, 0.75]
  Tensor c({1, 2}, {0.0, std::log(3.0)});
  Tensor sc = nn::softmax(c, 1);
  CHECK(sc[0] == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(sc[1] == doctest::Approx(0.75).epsilon(1e-12));

  // rows sum to 1 within 1e-12 on random input
  Rng rng(7);
  Tensor r = randn({5, 9}, rng, 3.0);
  Tensor sr = nn::softmax(r, 1);
  for (std::int64_t i = 0; i < 5; ++i) {
    double sum = 0.0;
    for (std::int64_t j = 0; j < 9; ++j) {
      sum += sr.at(i, j);
      CHECK(sr.at(i, j) > 0.0);
      CHECK(sr.at(i, j) < 1.0);
    }
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("layer_norm oracle values") {
  Tensor gain({3}), bias({3});
  gain.fill(1.0);
  bias.fill(0.0);

  // constant vector -> zeros
  Tensor c({1, 3}, {4.0, 4.0, 4.0});
  Tensor lc = nn::layer_norm(c, gain, bias);
  for (std::int64_t i = 0; i < 3; ++i) CHECK(lc[i] == doctest::Approx(0.0).epsilon(1e-9));

  // [1,-1] is already zero-mean unit-variance: eps keeps it just below 1
  Tensor g2({2}), b2({2});
  g2.fill(1.0);
  b2.fill(0.0);
  Tensor x({1, 2}, {1.0, -1.0});
  Tensor lx = nn::layer_norm(x, g2, b2, 1e-5);
  CHECK(lx[0] == doctest::Approx(0.99999500003749972).epsilon(1e-12));
  CHECK(lx[1] == doctest::Approx(-0.99999500003749972).epsilon(1e-12));

  // output mean == bias within 1e-6 for random input
  Rng rng(3);
  Tensor r = randn({4, 8}, rng, 2.0);
  Tensor g8({8}), b8({8});
  g8.fill(1.3);
  b8.fill(0.25);
  Tensor lr = nn::layer_norm(r, g8, b8);
  for (std::int64_t i = 0; i < 4; ++i) {
    double mean = 0.0;
    for (std::int64_t j = 0; j < 8; ++j) mean += lr.at(i, j);
    CHECK(mean / 8.0 == doctest::Approx(0.25).epsilon(1e-6));
  }
}

TEST_CASE("cross_entropy oracle values") {
  Tensor conf({1, 2}, {10.0, -10.0});
  CHECK(nn::cross_entropy(conf, {0}) == doctest::Approx(0.0).epsilon(1e-6));

  Tensor even({1, 2}, {0.0, 0.0});
  CHECK(nn::cross_entropy(even, {1}) == doctest::Approx(0.6931471805599453).epsilon(1e-12));

  // ignored rows are excluded from the mean
  Tensor two({2, 2}, {5.0, -3.0, 0.0, 0.0});
  CHECK(nn::cross_entropy(two, {nn::kIgnoreLabel, 0}) ==
        doctest::Approx(0.6931471805599453).epsilon(1e-12));

  CHECK_THROWS_WITH_AS(nn::cross_entropy(even, {nn::kIgnoreLabel}),
                       doctest::Contains("no supervised positions"), std::runtime_error);
  CHECK_THROWS(nn::cross_entropy(even, {2}));  // label out of range
}

TEST_CASE("gelu frozen values") {
  CHECK(nn::gelu(0.0) == 0.0);
  CHECK(nn::gelu(1.0) == doctest::Approx(0.84134474606854293).epsilon(1e-14));
  CHECK(nn::gelu(-1.0) == doctest::Approx(-0.15865525393145707).epsilon(1e-14));
  CHECK(nn::gelu(2.0) == doctest::Approx(1.9544997361036416).epsilon(1e-14));
  CHECK(nn::gelu(-2.0) == doctest::Approx(-0.045500263896358417).epsilon(1e-14));
  CHECK(nn::gelu(0.5) == doctest::Approx(0.34573123063700656).epsilon(1e-14));
}

TEST_CASE("matmul oracle with transposes") {
  Tensor a({2, 3}, {1, 2, 3, 4, 5, 6});
  Tensor b({3, 2}, {7, 8, 9, 10, 11, 12});
  Tensor c = nn::matmul(a, b);
  CHECK(c.at(0, 0) == 58);
  CHECK(c.at(0, 1) == 64);
  CHECK(c.at(1, 0) == 139);
  CHECK(c.at(1, 1) == 154);

  // a * b == (a^T)^T * b via trans_a on the transposed copy
  Tensor at({3, 2}, {1, 4, 2, 5, 3, 6});
  Tensor c2 = nn::matmul(at, b, true, false);
  for (std::int64_t i = 0; i < 4; ++i) CHECK(c2[i] == c[i]);
  Tensor bt({2, 3}, {7, 9, 11, 8, 10, 12});
  Tensor c3 = nn::matmul(a, bt, false, true);
  for (std::int64_t i = 0; i < 4; ++i) CHECK(c3[i] == c[i]);
}

// Each differentiable tape op passes a finite-difference check in isolation
// (spec: rel error < 1e-5 at 64-bit precision).
TEST_CASE("per-op gradient checks") {
  Rng init(11);

  auto check_op = [&](const char* what, std::int64_t rows, std::int64_t cols,
                      auto&& make_loss, std::vector<Parameter*> params) {
    for (Parameter* p : params) p->zero_grad();
    {
      Tape tape;
      tape.backward(make_loss(tape));
    }
    Rng coords(1);
    const double err = nn::grad_check([&] {
      Tape tape;
      return tape.value(make_loss(tape)).item();
    }, params, coords, 1e-4, 400);
    INFO(what << " rel error " << err << " (" << rows << "x" << cols << ")");
    CHECK(err < 1e-5);
  };

  SUBCASE("add, scale, add_rowvec") {
    Parameter a("a", randn({3, 4}, init));
    Parameter b("b", randn({3, 4}, init));
    Parameter r("r", randn({4}, init));
    check_op("add/scale/rowvec", 3, 4, [&](Tape& t) {
      Var y = t.add_rowvec(t.add(t.param(a), t.scale(t.param(b), 1.7)), t.param(r));
      return reduce(t, y, 3, 4);
    }, {&a, &b, &r});
  }

  SUBCASE("matmul all transpose combinations") {
    Parameter a("a", randn({3, 5}, init));
    Parameter b("b", randn({5, 4}, init));
    Parameter at("at", randn({5, 3}, init));
    Parameter bt("bt", randn({4, 5}, init));
    check_op("matmul", 3, 4, [&](Tape& t) {
      Var y1 = t.matmul(t.param(a), t.param(b));
      Var y2 = t.matmul(t.param(at), t.param(b), true, false);
      Var y3 = t.matmul(t.param(a), t.param(bt), false, true);
      Var y4 = t.matmul(t.param(at), t.param(bt), true, true);
      return reduce(t, t.add(t.add(y1, y2), t.add(y3, y4)), 3, 4);
    }, {&a, &b, &at, &bt});
  }

  SUBCASE("gelu and tanh") {
    Parameter x("x", randn({2, 6}, init));
    check_op("gelu+tanh", 2, 6, [&](Tape& t) {
      return reduce(t, t.tanh(t.gelu(t.param(x))), 2, 6);
    }, {&x});
  }

  SUBCASE("layer_norm") {
    Parameter x("x", randn({3, 7}, init));
    Parameter g("g", randn({7}, init, 0.3));
    Parameter b("b", randn({7}, init, 0.3));
    for (std::int64_t i = 0; i < 7; ++i) g.value[i] += 1.0;
    check_op("layer_norm", 3, 7, [&](Tape& t) {
      return reduce(t, t.layer_norm(t.param(x), t.param(g), t.param(b)), 3, 7);
    }, {&x, &g, &b});
  }

  SUBCASE("gather with repeated rows accumulates") {
    Parameter x("x", randn({4, 3}, init));
    check_op("gather", 5, 3, [&](Tape& t) {
      return reduce(t, t.gather(t.param(x), {2, 0, 2, 3, 2}), 5, 3);
    }, {&x});
  }

  SUBCASE("attention with key mask") {
    Parameter q("q", randn({5, 8}, init, 0.5));
    Parameter k("k", randn({5, 8}, init, 0.5));
    Parameter v("v", randn({5, 8}, init, 0.5));
    const std::vector<int> mask{1, 1, 1, 1, 0};
    check_op("attention", 5, 8, [&](Tape& t) {
      return reduce(t, t.attention(t.param(q), t.param(k), t.param(v), mask, 2), 5, 8);
    }, {&q, &k, &v});
  }

  SUBCASE("cross_entropy with ignored rows") {
    Parameter x("x", randn({4, 5}, init));
    const std::vector<std::int64_t> labels{2, nn::kIgnoreLabel, 0, 4};
    check_op("cross_entropy", 1, 1, [&](Tape& t) {
      return t.cross_entropy(t.matmul(t.param(x), t.constant([&] {
        Tensor eye({5, 5});
        for (int i = 0; i < 5; ++i) eye.at(i, i) = 1.0;
        return eye;
      }())), labels);
    }, {&x});
  }

  SUBCASE("soft_cross_entropy with temperature") {
    Parameter s("s", randn({3, 4}, init));
    Rng trng(5);
    Tensor teacher = nn::softmax(randn({3, 4}, trng), 1);
    check_op("soft_ce", 1, 1, [&](Tape& t) {
      return t.soft_cross_entropy(teacher, t.param(s), 2.0);
    }, {&s});
  }

  SUBCASE("dropout with a fixed draw is differentiable and deterministic") {
    Parameter x("x", randn({4, 6}, init));
    check_op("dropout", 4, 6, [&](Tape& t) {
      Rng drop(99);  // same mask on every re-evaluation
      return reduce(t, t.dropout(t.param(x), 0.5, drop, true), 4, 6);
    }, {&x});
  }
}

TEST_CASE("dropout semantics") {
  Rng init(2);
  Parameter x("x", randn({10, 10}, init));
  Tape tape;
  Var v = tape.param(x);
  Rng r1(4);
  Var id = tape.dropout(v, 0.3, r1, false);  // identity when not training
  const Tensor& out = tape.value(id);
  for (std::int64_t i = 0; i < out.size(); ++i) CHECK(out[i] == x.value[i]);

  Rng r2(4);
  Var dropped = tape.dropout(v, 0.3, r2, true);
  const Tensor& od = tape.value(dropped);
  std::int64_t zeros = 0;
  for (std::int64_t i = 0; i < od.size(); ++i) {
    if (od[i] == 0.0) ++zeros;
    else CHECK(od[i] == doctest::Approx(x.value[i] / 0.7));  // inverted scaling
  }
  CHECK(zeros > 10);  // ~30 of 100
  CHECK(zeros < 55);
}

TEST_CASE("grad_check catches a deliberately scaled gradient") {
  Rng init(17);
  Parameter theta("theta", randn({1, 8}, init));

  auto loss_fn = [&] {
    Tape tape;
    Var p = tape.param(theta);
    return tape.value(tape.matmul(p, p, false, true)).item();  // sum of squares
  };

  theta.zero_grad();
  {
    Tape tape;
    Var p = tape.param(theta);
    tape.backward(tape.matmul(p, p, false, true));
  }
  Rng coords(1);
  CHECK(nn::grad_check(loss_fn, {&theta}, coords) < 1e-8);

  // Doubling the analytic gradient must be reported as rel error ~ 0.5.
  for (std::int64_t i = 0; i < theta.grad.size(); ++i) theta.grad[i] *= 2.0;
  Rng coords2(1);
  const double err = nn::grad_check(loss_fn, {&theta}, coords2);
  CHECK(err == doctest::Approx(0.5).epsilon(1e-3));
}

TEST_CASE("adam first step moves by ~lr in the sign direction") {
  Parameter p("p", Tensor({1}, {1.0}));
  p.grad = Tensor({1}, {1.0});
  nn::AdamState state;
  nn::adam_step(p, state, {0.1, 0.9, 0.999, 1e-8});
  CHECK(p.value[0] == doctest::Approx(0.900000001).epsilon(1e-12));
  CHECK(state.step == 1);
}

TEST_CASE("adam two steps on a quadratic, hand-simulated trajectory") {
  // Minimize 0.5 theta^2 from theta=1, lr=0.1; gradient is theta itself.
  Parameter p("p", Tensor({1}, {1.0}));
  nn::AdamState state;
  const nn::AdamConfig cfg{0.1, 0.9, 0.999, 1e-8};
  for (int step = 0; step < 2; ++step) {
    p.grad = Tensor({1}, {p.value[0]});
    nn::adam_step(p, state, cfg);
  }
  CHECK(p.value[0] == doctest::Approx(0.80041222971233816).epsilon(1e-9));
  CHECK(0.5 * p.value[0] * p.value[0] < 0.5);  // loss decreased from 0.5
}

TEST_CASE("adam leaves parameters alone on zero gradient and dedups shared weights") {
  Parameter p("p", Tensor({2}, {1.0, -2.0}));
  nn::AdamState state;
  nn::adam_step(p, state, {0.1, 0.9, 0.999, 1e-8});
  CHECK(p.value[0] == 1.0);
  CHECK(p.value[1] == -2.0);

  Parameter q("q", Tensor({1}, {1.0}));
  q.grad = Tensor({1}, {1.0});
  nn::Adam opt({0.1, 0.9, 0.999, 1e-8});
  opt.step({&q, &q, &q});  // listed three times, stepped once
  CHECK(q.value[0] == doctest::Approx(0.900000001).epsilon(1e-12));
  CHECK(q.grad[0] == 0.0);  // grads zeroed after the step
}

TEST_CASE("checkpoint round-trip is float32-exact and byte-stable") {
  const std::string path = temp_path("lexkit_test_ckpt.bin");
  Parameter a("layer.0.w", Tensor({2, 2}, {0.5, -1.25, 3.0, 0.0078125}));
  Parameter b("bias", Tensor({3}, {1.0, 2.0, -4.5}));
  nn::save_checkpoint(path, {&a, &b}, {{"config_hash", "deadbeef"}});

  nn::Checkpoint ckpt = nn::load_checkpoint(path);
  CHECK(ckpt.meta.at("config_hash") == "deadbeef");
  REQUIRE(ckpt.find("layer.0.w") != nullptr);
  const Tensor& wa = *ckpt.find("layer.0.w");
  for (std::int64_t i = 0; i < 4; ++i) CHECK(wa[i] == a.value[i]);  // exactly representable

  Parameter a2("layer.0.w", Tensor::zeros({2, 2}));
  Parameter b2("bias", Tensor::zeros({3}));
  nn::load_into_params(ckpt, {&a2, &b2});
  for (std::int64_t i = 0; i < 4; ++i) CHECK(a2.value[i] == a.value[i]);

  // Same tensors saved again -> byte-identical file.
  const std::string path2 = temp_path("lexkit_test_ckpt2.bin");
  nn::save_checkpoint(path2, {&a, &b}, {{"config_hash", "deadbeef"}});
  CHECK(io::read_file(path) == io::read_file(path2));

  Parameter wrong("layer.0.w", Tensor::zeros({3, 3}));
  CHECK_THROWS_WITH_AS(nn::load_into_params(ckpt, {&wrong}), doctest::Contains("layer.0.w"),
                       std::runtime_error);
  Parameter missing("nope", Tensor::zeros({1}));
  CHECK_THROWS_WITH_AS(nn::load_into_params(ckpt, {&missing}), doctest::Contains("nope"),
                       std::runtime_error);
  std::filesystem::remove(path);
  std::filesystem::remove(path2);
}

TEST_CASE("tape reruns are bit-identical") {
  Rng init(23);
  Parameter w("w", randn({6, 6}, init));
  auto run = [&] {
    Tape tape;
    Rng drop(12);
    Var h = tape.dropout(tape.gelu(tape.matmul(tape.param(w), tape.param(w))), 0.1, drop, true);
    return tape.value(tape.cross_entropy(h, {0, 3, nn::kIgnoreLabel, 2, 5, 1})).item();
  };
  const double l1 = run();
  const double l2 = run();
  CHECK(std::memcmp(&l1, &l2, sizeof(double)) == 0);
}
