#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "hierwalk/nn.hpp"
#include "support.hpp"

using namespace hierwalk;
using hierwalk::testing::finite_difference;
using hierwalk::testing::rel_error;

namespace {

Mat random_mat(int rows, int cols, Rng& rng) {
  Mat m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = 2.0 * rng.next_double() - 1.0;
  return m;
}

}  // namespace

TEST_CASE("identity linear layer passes input through") {
  ParamStore store;
  Rng rng(1);
  MlpParams mlp = make_mlp(store, "id", {{2, 2}}, rng);
  store.at(mlp.weights[0]).value = Mat::Identity(2, 2);
  store.at(mlp.biases[0]).value.setZero();
  Tape t;
  Var x = t.leaf((Mat(2, 1) << 1.0, 2.0).finished());
  Var y = mlp_forward(t, store, mlp, x);
  CHECK(t.value(y)(0, 0) == 1.0);
  CHECK(t.value(y)(1, 0) == 2.0);
}

TEST_CASE("zero weights map everything to zero") {
  ParamStore store;
  Rng rng(2);
  MlpParams mlp = make_mlp(store, "z", {{3, 4, 2}}, rng);
  for (int w : mlp.weights) store.at(w).value.setZero();
  for (int b : mlp.biases) store.at(b).value.setZero();
  Tape t;
  Var y = mlp_forward(t, store, mlp, t.leaf(random_mat(3, 5, rng)));
  CHECK(t.value(y).isZero(0.0));
}

TEST_CASE("mlp gradients match finite differences") {
  ParamStore store;
  Rng rng(3);
  MlpParams mlp = make_mlp(store, "fd", {{3, 5, 2}}, rng);
  Mat x = random_mat(3, 4, rng);
  Mat probe = random_mat(2, 4, rng);

  auto eval = [&]() {
    Tape t;
    Var y = mlp_forward(t, store, mlp, t.leaf(x));
    return (t.value(y).array() * probe.array()).sum();
  };

  Tape t;
  Var xv = t.leaf(x);
  Var y = mlp_forward(t, store, mlp, xv);
  Var loss = weighted_sum(t, y, probe);
  store.zero_grad();
  t.backward(loss);

  for (int w : mlp.weights) {
    Mat fd = finite_difference(store.at(w).value, eval);
    CHECK(rel_error(store.at(w).grad, fd) < 1e-4);
  }
  for (int b : mlp.biases) {
    Mat fd = finite_difference(store.at(b).value, eval);
    CHECK(rel_error(store.at(b).grad, fd) < 1e-4);
  }
  Mat fd = finite_difference(x, eval);
  CHECK(rel_error(t.grad(xv), fd) < 1e-4);
}

TEST_CASE("mlp rejects shape mismatches") {
  ParamStore store;
  Rng rng(30);
  MlpParams mlp = make_mlp(store, "s", {{3, 2}}, rng);
  Tape t;
  CHECK_THROWS_AS(mlp_forward(t, store, mlp, t.leaf(Mat::Zero(4, 1))), ShapeError);
  CHECK_THROWS_AS(make_mlp(store, "bad", {{3}}, rng), std::invalid_argument);
  CHECK_THROWS_AS(make_mlp(store, "bad2", {{3, 0}}, rng), std::invalid_argument);
}

TEST_CASE("deepset with identity maps concatenates self and child") {
  ParamStore store;
  Rng rng(4);
  MlpParams phi_in = make_mlp(store, "pin", {{2, 2}}, rng);
  MlpParams phi_out = make_mlp(store, "pout", {{4, 4}}, rng);
  store.at(phi_in.weights[0]).value = Mat::Identity(2, 2);
  store.at(phi_out.weights[0]).value = Mat::Identity(4, 4);
  for (int b : phi_in.biases) store.at(b).value.setZero();
  for (int b : phi_out.biases) store.at(b).value.setZero();
  Tape t;
  Var self = t.leaf((Mat(2, 1) << 1.0, 2.0).finished());
  Var child = t.leaf((Mat(2, 1) << 3.0, 4.0).finished());
  std::vector<Var> kids{child};
  Var out = deepset_pool(t, store, phi_in, phi_out, self, kids);
  Mat expect(4, 1);
  expect << 1.0, 2.0, 3.0, 4.0;
  CHECK(t.value(out) == expect);
}

TEST_CASE("deepset is bit-identical under child permutation") {
  ParamStore store;
  Rng rng(5);
  MlpParams phi_in = make_mlp(store, "pin", {{3, 4}}, rng);
  MlpParams phi_out = make_mlp(store, "pout", {{7, 3}}, rng);
  Tape t;
  Var self = t.leaf(random_mat(3, 1, rng));
  std::vector<Var> kids;
  for (int i = 0; i < 4; ++i) kids.push_back(t.leaf(random_mat(3, 1, rng)));
  Var a = deepset_pool(t, store, phi_in, phi_out, self, kids);
  std::vector<Var> shuffled{kids[2], kids[0], kids[3], kids[1]};
  Var b = deepset_pool(t, store, phi_in, phi_out, self, shuffled);
  CHECK(t.value(a) == t.value(b));
}

TEST_CASE("deepset linear aggregate equals direct matrix arithmetic") {
  ParamStore store;
  Rng rng(6);
  MlpParams phi_in = make_mlp(store, "pin", {{2, 3}}, rng);
  MlpParams phi_out = make_mlp(store, "pout", {{5, 5}}, rng);
  store.at(phi_out.weights[0]).value = Mat::Identity(5, 5);
  for (int b : phi_in.biases) store.at(b).value.setZero();
  for (int b : phi_out.biases) store.at(b).value.setZero();
  Mat W = store.at(phi_in.weights[0]).value;
  Mat h1 = random_mat(2, 1, rng), h2 = random_mat(2, 1, rng), self = random_mat(2, 1, rng);
  Tape t;
  std::vector<Var> kids{t.leaf(h1), t.leaf(h2)};
  Var out = deepset_pool(t, store, phi_in, phi_out, t.leaf(self), kids);
  Mat agg = W * h1 + W * h2;
  CHECK((t.value(out).bottomRows(3) - agg).lpNorm<Eigen::Infinity>() < 1e-14);
}

TEST_CASE("deepset with no children uses a zero aggregate") {
  ParamStore store;
  Rng rng(7);
  MlpParams phi_in = make_mlp(store, "pin", {{2, 3}}, rng);
  MlpParams phi_out = make_mlp(store, "pout", {{5, 5}}, rng);
  store.at(phi_out.weights[0]).value = Mat::Identity(5, 5);
  for (int b : phi_out.biases) store.at(b).value.setZero();
  Tape t;
  Mat self = random_mat(2, 1, rng);
  Var out = deepset_pool(t, store, phi_in, phi_out, t.leaf(self), {});
  CHECK(t.value(out).topRows(2) == self);
  CHECK(t.value(out).bottomRows(3).isZero(0.0));
}

TEST_CASE("sequence encoder causality") {
  ParamStore store;
  Rng rng(8);
  SeqEncoderParams enc = make_seq_encoder(store, "enc", 4, rng);

  SUBCASE("single step works") {
    Tape t;
    std::vector<Var> inputs{t.leaf(random_mat(4, 1, rng))};
    auto steps = seq_encode(t, store, enc, inputs);
    CHECK(steps.size() == 1);
    CHECK_THROWS_AS(seq_encode(t, store, enc, {}), std::invalid_argument);
  }

  SUBCASE("fully closed gate removes the recurrence") {
    store.at(enc.b_gate).value.setConstant(-1000.0);  // sigmoid underflows to exactly 0
    store.at(enc.w_gate).value.setZero();
    Mat x1 = random_mat(4, 1, rng);
    auto run = [&](const Mat& a, const Mat& b) {
      Tape t;
      std::vector<Var> inputs{t.leaf(a), t.leaf(b)};
      auto steps = seq_encode(t, store, enc, inputs);
      return Mat(t.value(steps[1]));
    };
    Mat base = run(random_mat(4, 1, rng), x1);
    Mat perturbed = run(random_mat(4, 1, rng), x1);
    CHECK(base == perturbed);
  }

  SUBCASE("later inputs do not affect earlier outputs") {
    Mat x0 = random_mat(4, 1, rng), x1 = random_mat(4, 1, rng);
    auto run = [&](const Mat& c) {
      Tape t;
      std::vector<Var> inputs{t.leaf(x0), t.leaf(x1), t.leaf(c)};
      auto steps = seq_encode(t, store, enc, inputs);
      return std::pair<Mat, Mat>(t.value(steps[0]), t.value(steps[1]));
    };
    auto [a0, a1] = run(random_mat(4, 1, rng));
    auto [b0, b1] = run(random_mat(4, 1, rng));
    CHECK(a0 == b0);
    CHECK(a1 == b1);
  }
}

TEST_CASE("sequence encoder gradient matches finite differences") {
  ParamStore store;
  Rng rng(9);
  const int d = 4, L = 5;
  SeqEncoderParams enc = make_seq_encoder(store, "enc", d, rng);
  std::vector<Mat> inputs;
  for (int i = 0; i < L; ++i) inputs.push_back(random_mat(d, 1, rng));
  Mat probe = random_mat(d, 1, rng);

  auto eval = [&]() {
    Tape t;
    std::vector<Var> vars;
    for (const Mat& m : inputs) vars.push_back(t.leaf(m));
    auto steps = seq_encode(t, store, enc, vars);
    return (t.value(steps[L - 1]).array() * probe.array()).sum();
  };

  Tape t;
  std::vector<Var> vars;
  for (const Mat& m : inputs) vars.push_back(t.leaf(m));
  auto steps = seq_encode(t, store, enc, vars);
  Var loss = weighted_sum(t, steps[L - 1], probe);
  store.zero_grad();
  t.backward(loss);

  // Loss on the last step w.r.t. the first input exercises the whole scan.
  Mat fd0 = finite_difference(inputs[0], eval);
  CHECK(rel_error(t.grad(vars[0]), fd0) < 1e-4);
  for (int idx : {enc.w_gate, enc.b_gate, enc.w_cand, enc.b_cand, enc.w_out, enc.b_out}) {
    Mat fd = finite_difference(store.at(idx).value, eval);
    CHECK(rel_error(store.at(idx).grad, fd) < 1e-4);
  }
}

TEST_CASE("softmax columns are normalized and ignore padding") {
  Tape t;
  Rng rng(10);
  Mat logits = random_mat(4, 6, rng);
  logits.row(3).setConstant(-1e300);  // padding slots
  Var soft = softmax_cols(t, t.leaf(logits), nullptr, 1.0);
  for (int w = 0; w < 6; ++w) {
    CHECK(std::abs(t.value(soft).col(w).sum() - 1.0) <= 1e-12);
    CHECK(t.value(soft)(3, w) == 0.0);
    CHECK(t.value(soft).col(w).minCoeff() >= 0.0);
  }
}

TEST_CASE("gumbel softmax sampling") {
  Rng rng(11);

  SUBCASE("soft output sums to one") {
    for (int trial = 0; trial < 20; ++trial) {
      Tape t;
      Var logits = t.leaf(random_mat(5, 1, rng) * 10.0);
      auto s = gumbel_softmax_sample(t, logits, 0.7, rng, false);
      CHECK(std::abs(t.value(s.var).sum() - 1.0) <= 1e-12);
      CHECK(s.chosen >= 0);
      CHECK(s.chosen < 5);
    }
  }

  SUBCASE("dominant logit wins almost always") {
    Mat logits(3, 1);
    logits << 10.0, -10.0, -10.0;
    int hits = 0;
    const int draws = 10000;
    for (int i = 0; i < draws; ++i) {
      Tape t;
      auto s = gumbel_softmax_sample(t, t.leaf(logits), 0.1, rng, true);
      if (s.chosen == 0) ++hits;
    }
    CHECK(static_cast<double>(hits) / draws > 0.999);
  }

  SUBCASE("uniform logits give uniform choices within 3 sigma") {
    const int m = 4;
    const int draws = 100000;
    std::vector<int> counts(m, 0);
    Mat logits = Mat::Zero(m, 1);
    for (int i = 0; i < draws; ++i) {
      Tape t;
      auto s = gumbel_softmax_sample(t, t.leaf(logits), 1.0, rng, true);
      counts[s.chosen]++;
    }
    const double p = 1.0 / m;
    const double sigma = std::sqrt(p * (1 - p) * draws);
    for (int c : counts) CHECK(std::abs(c - p * draws) <= 3.0 * sigma);
  }

  SUBCASE("hard forward is exactly one-hot and backward follows the soft path") {
    Mat logits = random_mat(4, 1, rng);
    Mat probe = random_mat(4, 1, rng);
    const std::uint64_t seed = 77;

    Rng r1(seed);
    Tape t1;
    Var l1 = t1.leaf(logits);
    auto hard = gumbel_softmax_sample(t1, l1, 0.8, r1, true);
    CHECK(t1.value(hard.var).sum() == 1.0);
    CHECK(t1.value(hard.var)(hard.chosen, 0) == 1.0);
    t1.backward(weighted_sum(t1, hard.var, probe));

    Rng r2(seed);
    Tape t2;
    Var l2 = t2.leaf(logits);
    auto soft = gumbel_softmax_sample(t2, l2, 0.8, r2, false);
    CHECK(soft.chosen == hard.chosen);
    t2.backward(weighted_sum(t2, soft.var, probe));

    CHECK(t1.grad(l1) == t2.grad(l2));
  }

  SUBCASE("argmax invariant to constant logit shifts on the same stream") {
    for (int trial = 0; trial < 50; ++trial) {
      Mat logits = random_mat(5, 1, rng);
      const std::uint64_t seed = 1000 + trial;
      Rng r1(seed), r2(seed);
      Tape t1, t2;
      auto a = gumbel_softmax_sample(t1, t1.leaf(logits), 1.0, r1, true);
      auto b = gumbel_softmax_sample(t2, t2.leaf(Mat(logits.array() + 3.25)), 1.0, r2, true);
      CHECK(a.chosen == b.chosen);
    }
  }

  SUBCASE("temperature must be positive") {
    Tape t;
    Var l = t.leaf(Mat::Zero(3, 1));
    CHECK_THROWS_AS(gumbel_softmax_sample(t, l, 0.0, rng, true), std::invalid_argument);
  }
}

TEST_CASE("select_cols soft mixture gradient matches finite differences") {
  Rng rng(12);
  const int d = 3, K = 5, M = 3, W = 4;
  Mat H = random_mat(d, K, rng);
  Mat logits = random_mat(M, W, rng);
  auto cand = std::make_shared<Eigen::ArrayXXi>(M, W);
  for (int w = 0; w < W; ++w)
    for (int i = 0; i < M; ++i) (*cand)(i, w) = (w + i) % K;
  (*cand)(M - 1, 0) = -1;  // one padded slot
  auto chosen = std::make_shared<std::vector<int>>(std::vector<int>{0, 1, 2, 0});
  Mat probe = random_mat(d, W, rng);

  auto build = [&](Tape& t, const Mat& raw_logits, const Mat& h, bool hard) {
    Mat l = raw_logits;
    l(M - 1, 0) = -1e300;
    Var lvar = t.leaf(l);
    Var hvar = t.leaf(h);
    Var soft = softmax_cols(t, lvar, nullptr, 1.0);
    Var sel = select_cols(t, soft, hvar, cand, chosen, hard);
    return std::tuple<Var, Var, Var>(lvar, hvar, sel);
  };

  auto eval = [&]() {
    Tape t;
    auto [l, h, sel] = build(t, logits, H, false);
    return (t.value(sel).array() * probe.array()).sum();
  };

  Tape t;
  auto [lvar, hvar, sel] = build(t, logits, H, false);
  t.backward(weighted_sum(t, sel, probe));

  Mat fd_l = finite_difference(logits, eval);
  fd_l(M - 1, 0) = 0.0;  // padding slot carries no true gradient
  Mat got_l = t.grad(lvar);
  got_l(M - 1, 0) = 0.0;
  CHECK(rel_error(got_l, fd_l) < 1e-4);
  Mat fd_h = finite_difference(H, eval);
  CHECK(rel_error(t.grad(hvar), fd_h) < 1e-4);

  // hard mode: forward picks the chosen candidate exactly, soft weights get
  // the same gradient as in soft mode
  Tape th;
  auto [lh, hh, selh] = build(th, logits, H, true);
  for (int w = 0; w < W; ++w)
    CHECK(th.value(selh).col(w) == H.col((*cand)((*chosen)[w], w)));
  th.backward(weighted_sum(th, selh, probe));
  CHECK(th.grad(lh) == t.grad(lvar));
}

TEST_CASE("gated scan gradient matches finite differences") {
  Rng rng(13);
  const int d = 3, W = 2, steps = 4;
  Mat gate_pre = random_mat(d, W * steps, rng);
  Mat cand = random_mat(d, W * steps, rng);
  Mat probe = random_mat(d, W * steps, rng);

  auto eval = [&]() {
    Tape t;
    Var g = sigmoid(t, t.leaf(gate_pre));
    Var s = gated_scan(t, g, t.leaf(cand), steps);
    return (t.value(s).array() * probe.array()).sum();
  };

  Tape t;
  Var gp = t.leaf(gate_pre);
  Var cv = t.leaf(cand);
  Var s = gated_scan(t, sigmoid(t, gp), cv, steps);
  t.backward(weighted_sum(t, s, probe));

  CHECK(rel_error(t.grad(gp), finite_difference(gate_pre, eval)) < 1e-4);
  CHECK(rel_error(t.grad(cv), finite_difference(cand, eval)) < 1e-4);
}

TEST_CASE("segment sum and row gather gradients match finite differences") {
  Rng rng(14);
  Mat x = random_mat(3, 6, rng);
  auto segs = std::make_shared<ColSegments>();
  segs->offsets = {0, 2, 2, 6};
  segs->indices = {0, 3, 1, 2, 4, 5};
  Mat probe = random_mat(3, 3, rng);
  auto eval = [&]() {
    Tape t;
    Var s = segment_sum_cols(t, t.leaf(x), segs);
    return (t.value(s).array() * probe.array()).sum();
  };
  Tape t;
  Var xv = t.leaf(x);
  Var s = segment_sum_cols(t, xv, segs);
  CHECK(t.value(s).col(1).isZero(0.0));  // empty segment
  t.backward(weighted_sum(t, s, probe));
  CHECK(rel_error(t.grad(xv), finite_difference(x, eval)) < 1e-4);

  Mat row = random_mat(1, 5, rng);
  auto idx = std::make_shared<Eigen::ArrayXXi>(2, 3);
  *idx << 0, 2, 4, 1, -1, 3;
  Mat probe2 = random_mat(2, 3, rng);
  probe2(1, 1) = 0.0;  // padded slot excluded from the probe
  auto eval2 = [&]() {
    Tape t2;
    Var m = gather_row_entries(t2, t2.leaf(row), idx, -1e300);
    return (t2.value(m).array() * probe2.array()).sum();
  };
  Tape t2;
  Var rv = t2.leaf(row);
  Var m = gather_row_entries(t2, rv, idx, -1e300);
  CHECK(t2.value(m)(1, 1) == -1e300);
  t2.backward(weighted_sum(t2, m, probe2));
  CHECK(rel_error(t2.grad(rv), finite_difference(row, eval2)) < 1e-4);
}

TEST_CASE("adamw") {
  SUBCASE("zero gradients and zero weight decay leave parameters unchanged") {
    ParamStore store;
    Rng rng(15);
    make_mlp(store, "m", {{3, 3}}, rng);
    Mat before = store.at(0).value;
    AdamWConfig cfg;
    cfg.weight_decay = 0.0;
    AdamWState state = make_adamw(store, cfg);
    store.zero_grad();
    adamw_step(state, store, 0.1);
    CHECK(store.at(0).value == before);
    CHECK(state.step == 1);
  }

  SUBCASE("one step on w^2 decreases w") {
    ParamStore store;
    int w = store.add("w", 1, 1);
    store.at(w).value(0, 0) = 1.0;
    AdamWConfig cfg;
    cfg.weight_decay = 0.0;
    AdamWState state = make_adamw(store, cfg);
    store.at(w).grad(0, 0) = 2.0;  // d(w^2)/dw at w=1
    adamw_step(state, store, 0.1);
    CHECK(store.at(w).value(0, 0) < 1.0);
    CHECK(store.at(w).value(0, 0) > 0.5);
  }

  SUBCASE("updates are deterministic") {
    auto run = [](std::uint64_t seed) {
      ParamStore store;
      Rng rng(seed);
      MlpParams mlp = make_mlp(store, "m", {{2, 2}}, rng);
      AdamWState state = make_adamw(store);
      for (int step = 0; step < 2; ++step) {
        store.zero_grad();
        Tape t;
        Var y = mlp_forward(t, store, mlp, t.leaf(Mat::Ones(2, 1)));
        t.backward(weighted_sum(t, y, Mat::Ones(2, 1)));
        adamw_step(state, store, 0.05);
      }
      return Mat(store.at(0).value);
    };
    CHECK(run(99) == run(99));
  }
}

TEST_CASE("learning rate schedule") {
  ScheduleSpec s{0.01, 5, 200};
  CHECK(lr_at(s, 0) == 0.0);
  CHECK(lr_at(s, 5) == 0.01);
  const double expect = 0.01 * 0.5 * (1.0 + std::cos(M_PI * (199.0 - 5.0) / (200.0 - 5.0)));
  CHECK(lr_at(s, 199) == doctest::Approx(expect).epsilon(1e-15));
  CHECK(lr_at(s, 2) == doctest::Approx(0.01 * 2.0 / 5.0));
  CHECK_THROWS_AS(lr_at(s, -1), std::invalid_argument);
  CHECK_THROWS_AS(lr_at(s, 200), std::invalid_argument);
  ScheduleSpec bad{0.01, 200, 200};
  CHECK_THROWS_AS(lr_at(bad, 0), std::invalid_argument);
}

TEST_CASE("checkpoint round trip is bit exact") {
  hierwalk::testing::TempDir tmp;
  ParamStore store;
  Rng rng(16);
  make_mlp(store, "a", {{3, 2}}, rng);
  make_mlp(store, "b", {{2, 2, 2}}, rng);
  store.by_name("a.w0").value(0, 0) = 1.0 / 3.0;
  store.by_name("b.w1").value(1, 1) = -0.1234567890123456789;

  auto path = (tmp.path / "model.ckpt").string();
  save_checkpoint(path, store, {{"d", "32"}, {"topology", "hierarchical"}});
  Checkpoint ckpt = load_checkpoint(path);
  CHECK(ckpt.meta.at("d") == "32");
  CHECK(ckpt.meta.at("topology") == "hierarchical");
  REQUIRE(ckpt.tensors.size() == static_cast<std::size_t>(store.count()));
  for (const auto& [name, value] : ckpt.tensors)
    CHECK(value == store.by_name(name).value);  // bitwise

  ParamStore other;
  Rng rng2(17);
  make_mlp(other, "a", {{3, 2}}, rng2);
  make_mlp(other, "b", {{2, 2, 2}}, rng2);
  load_into_store(ckpt, other);
  for (int i = 0; i < store.count(); ++i) CHECK(other.at(i).value == store.at(i).value);

  ParamStore wrong;
  Rng rng3(18);
  make_mlp(wrong, "a", {{3, 2}}, rng3);
  CHECK_THROWS_AS(load_into_store(ckpt, wrong), ConfigError);
}

TEST_CASE("checked mode rejects non-finite values") {
  Tape t;
  t.set_check_finite(true);
  Mat bad = Mat::Zero(2, 1);
  bad(0, 0) = std::nan("");
  CHECK_THROWS_AS(t.leaf(bad), NumericsError);
  Mat inf = Mat::Zero(2, 1);
  inf(1, 0) = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(t.leaf(inf), NumericsError);
  CHECK_NOTHROW(t.leaf(Mat::Zero(2, 1)));
}

TEST_CASE("cross entropy loss values and errors") {
  Tape t;
  Mat logits(2, 2);
  logits << 100.0, 0.0, -100.0, 0.0;
  auto labels = std::make_shared<const std::vector<int>>(std::vector<int>{0, 1});
  Var l = softmax_ce_loss(t, t.leaf(logits), labels);
  // column 0 is a confident correct prediction, column 1 is uniform
  CHECK(t.value(l)(0, 0) == doctest::Approx(0.5 * std::log(2.0)).epsilon(1e-12));

  auto bad = std::make_shared<const std::vector<int>>(std::vector<int>{0, 2});
  CHECK_THROWS_AS(softmax_ce_loss(t, t.leaf(logits), bad), std::invalid_argument);
}

TEST_CASE("fused dual linear and stacked scan match finite differences") {
  Rng rng(55);
  const int d = 3, W = 2, steps = 3;
  ParamStore store;
  int wa = store.add("wa", d, d), ba = store.add("ba", d, 1);
  int wb = store.add("wb", d, d), bb = store.add("bb", d, 1);
  store.at(wa).value = Mat::Random(d, d);
  store.at(wb).value = Mat::Random(d, d);
  store.at(ba).value = Mat::Random(d, 1);
  store.at(bb).value = Mat::Random(d, 1);
  Mat x = Mat::Random(d, W * steps);
  Mat probe = Mat::Random(d, W * steps);

  auto eval = [&]() {
    Tape t;
    Var stacked = dual_linear(t, store.at(wa), &store.at(ba), store.at(wb), &store.at(bb), t.leaf(x));
    Var s = gated_scan_stacked(t, stacked, steps);
    return (t.value(s).array() * probe.array()).sum();
  };

  Tape t;
  Var xv = t.leaf(x);
  Var stacked = dual_linear(t, store.at(wa), &store.at(ba), store.at(wb), &store.at(bb), xv);
  Var s = gated_scan_stacked(t, stacked, steps);
  store.zero_grad();
  t.backward(weighted_sum(t, s, probe));

  for (int idx : {wa, ba, wb, bb}) {
    Mat fd = testing::finite_difference(store.at(idx).value, eval);
    CHECK(testing::rel_error(store.at(idx).grad, fd) < 1e-4);
  }
  Mat fdx = testing::finite_difference(x, eval);
  CHECK(testing::rel_error(t.grad(xv), fdx) < 1e-4);
}
