#include <doctest.h>

#include <cmath>
#include <numeric>
#include <vector>

#include "bytelab/model.hpp"
#include "bytelab/objectives.hpp"
#include "bytelab/rng.hpp"
#include "bytelab/schedule.hpp"

using namespace bytelab;

namespace {

ModelConfig toy_config(AttentionMode mode) {
  ModelConfig c;
  c.vocab_size = 16;
  c.d_model = 8;
  c.n_layers = 1;
  c.n_heads = 2;
  c.d_head = 4;
  c.d_ff = 16;
  c.max_seq_len = 64;
  c.attention_mode = mode;
  c.seed = 3;
  return c;
}

}  // namespace

TEST_CASE("schedule identities") {
  MaskSchedule lin = linear_schedule();
  CHECK(lin.alpha(0.5) == 0.5);
  CHECK(lin.weight(0.5) == -2.0);
  CHECK(lin.alpha_unclamped(0.0) == 1.0);
  CHECK(lin.alpha_unclamped(1.0) == 0.0);

  MaskSchedule cos = cosine_schedule();
  CHECK(cos.alpha_unclamped(0.0) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(cos.alpha_unclamped(1.0) == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(cos.alpha(1.0 - 1e-3) < 2e-6);  // 1 - cos(pi/2 * eps) ~ (pi*eps)^2/8
  CHECK_THROWS(lin.alpha(0.0));
  CHECK_THROWS(lin.alpha(1.0));
  CHECK(lin.clamp(0.0) == 1e-3);
  CHECK(lin.clamp(1.0) == 1.0 - 1e-3);
}

TEST_CASE("weight(t) = alpha'(t) / (1 - alpha(t)) by finite differences") {
  const double h = 1e-7;
  for (MaskSchedule sched : {linear_schedule(), cosine_schedule()}) {
    for (int i = 1; i <= 9; ++i) {
      double t = i / 10.0;
      double da = (sched.alpha(t + h) - sched.alpha(t - h)) / (2 * h);
      double w = da / (1.0 - sched.alpha(t));
      CHECK(std::abs(w - sched.weight(t)) / std::max(1.0, std::abs(w)) < 1e-6);
    }
  }
  // the closed forms agree to 1e-9 where FD cannot reach: analytic identities
  MaskSchedule lin = linear_schedule();
  for (int i = 1; i <= 9; ++i) {
    double t = i / 10.0;
    CHECK(std::abs(lin.weight(t) + 1.0 / t) < 1e-9);
    MaskSchedule cosn = cosine_schedule();
    double expect = -M_PI_2 * std::tan(M_PI_2 * (1.0 - t));
    CHECK(std::abs(cosn.weight(t) - expect) < 1e-9 * std::max(1.0, std::abs(expect)));
  }
}

TEST_CASE("forward mask hits the scheduled keep rate") {
  MaskSchedule sched = linear_schedule();
  Rng rng(11);
  std::vector<int> x0(1000);
  std::iota(x0.begin(), x0.end(), 0);
  const double t = 0.3;
  int64_t masked = 0, total = 0;
  for (int rep = 0; rep < 1000; ++rep) {
    MaskedBatch b = forward_mask(x0, t, sched, 2000, rng);
    masked += static_cast<int64_t>(b.mask_indices.size());
    total += static_cast<int64_t>(x0.size());
    for (int i : b.mask_indices) CHECK(b.xt[static_cast<size_t>(i)] == 2000);
    for (size_t i = 0; i < x0.size(); ++i)
      if (b.xt[i] != 2000) CHECK(b.xt[i] == x0[i]);  // kept exactly, never substituted
  }
  double rate = static_cast<double>(masked) / static_cast<double>(total);
  CHECK(rate == doctest::Approx(t).epsilon(0.01));
  CHECK_THROWS(forward_mask(x0, 0.0, sched, 2000, rng));
  CHECK_THROWS(forward_mask(x0, 1.0, sched, 2000, rng));
}

TEST_CASE("span masking keeps blocks atomic") {
  MaskSchedule sched = linear_schedule();
  Rng rng(12);
  std::vector<int> x0(24);
  std::iota(x0.begin(), x0.end(), 0);
  SpanPartition part;
  part.blocks = {{0, 4}, {4, 5}, {5, 12}, {12, 24}};
  for (int rep = 0; rep < 2000; ++rep) {
    MaskedBatch b = forward_mask_span(x0, 0.5, sched, part, 99, rng);
    for (auto [begin, end] : part.blocks) {
      bool m0 = b.xt[static_cast<size_t>(begin)] == 99;
      for (int i = begin; i < end; ++i) CHECK((b.xt[static_cast<size_t>(i)] == 99) == m0);
    }
  }
  SpanPartition bad;
  bad.blocks = {{0, 4}, {5, 24}};
  CHECK_THROWS(forward_mask_span(x0, 0.5, sched, bad, 99, rng));
}

TEST_CASE("span partition construction") {
  SpanPartition u = SpanPartition::unit(5);
  CHECK(u.blocks.size() == 5);
  u.validate(5);
  SpanPartition fromspans = SpanPartition::from_token_spans({{0, 3}, {3, 4}}, 6);
  fromspans.validate(6);
  CHECK(fromspans.blocks.size() == 4);  // two spans + two trailing unit blocks
  CHECK_THROWS(SpanPartition::from_token_spans({{1, 3}}, 3));
}

TEST_CASE("ar loss on a uniform model is ln V and masks the last slot") {
  ModelConfig cfg = toy_config(AttentionMode::kCausal);
  ParamStore<double> params = init_params<double>(cfg);
  params.at("head") = Tensor<double>(cfg.d_model, cfg.vocab_size);  // zero head -> uniform
  Tape<double> tape;
  BoundParams<double> bound = bind_params(tape, params, false);
  std::vector<int> toks = {1, 2, 3, 4, 5, 6, 7, 8};
  LossResult<double> res = ar_loss(tape, cfg, bound, toks, 2);
  CHECK(res.mean_loss == doctest::Approx(std::log(16.0)).epsilon(1e-12));
  CHECK(res.per_token_nll.size() == 6);  // (T-1) per sequence
  CHECK_THROWS(ar_loss(tape, cfg, bound, std::vector<int>{1, 2}, 2));  // T=1
}

TEST_CASE("mdm loss on a uniform model has expectation ln V (linear schedule)") {
  ModelConfig cfg = toy_config(AttentionMode::kBidirectional);
  ParamStore<double> params = init_params<double>(cfg);
  params.at("head") = Tensor<double>(cfg.d_model, cfg.vocab_size);
  MaskSchedule sched = linear_schedule();
  Rng rng(13);
  std::vector<int> toks(32, 5);
  double acc = 0.0;
  const int reps = 400;
  for (int rep = 0; rep < reps; ++rep) {
    Tape<double> tape(/*recording=*/false);
    BoundParams<double> bound = bind_params(tape, params, false);
    LossResult<double> res = mdm_loss(tape, cfg, bound, toks, 2, sched, rng);
    CHECK(res.n_masked >= 1);
    acc += res.mean_loss;
  }
  // for the uniform model, -w(t)*E[n_masked]/(BT)*lnV = lnV at every t, so the
  // estimator's only noise is binomial in n_masked
  CHECK(acc / reps == doctest::Approx(std::log(16.0)).epsilon(0.05));
}

TEST_CASE("sampler: unmask once, never re-mask, final output mask-free") {
  ModelConfig cfg = toy_config(AttentionMode::kBidirectional);
  ParamStore<double> params = init_params<double>(cfg);
  MaskSchedule sched = linear_schedule();
  Rng rng(14);
  for (int rep = 0; rep < 50; ++rep) {
    std::vector<std::vector<int>> traj;
    std::vector<int> out = sample_reverse(cfg, params, 16, 8, sched, rng, {}, &traj);
    for (int v : out) CHECK(v != cfg.mask_id());
    for (size_t k = 1; k < traj.size(); ++k)
      for (size_t i = 0; i < traj[k].size(); ++i)
        if (traj[k - 1][i] != cfg.mask_id()) CHECK(traj[k][i] == traj[k - 1][i]);
  }
}

TEST_CASE("sampler keeps the prompt") {
  ModelConfig cfg = toy_config(AttentionMode::kBidirectional);
  ParamStore<double> params = init_params<double>(cfg);
  MaskSchedule sched = cosine_schedule();
  Rng rng(15);
  std::vector<int> prompt = {7, 7, 7};
  std::vector<int> out = sample_reverse(cfg, params, 12, 6, sched, rng, prompt);
  CHECK(out[0] == 7);
  CHECK(out[1] == 7);
  CHECK(out[2] == 7);
  CHECK_THROWS(sample_reverse(cfg, params, 2, 6, sched, rng, std::vector<int>{1, 2, 3}));
  CHECK_THROWS(sample_reverse(cfg, params, 4, 0, sched, rng));
}

TEST_CASE("sampler is seed-deterministic") {
  ModelConfig cfg = toy_config(AttentionMode::kBidirectional);
  ParamStore<double> params = init_params<double>(cfg);
  MaskSchedule sched = linear_schedule();
  Rng a(99), b(99);
  CHECK(sample_reverse(cfg, params, 20, 10, sched, a) ==
        sample_reverse(cfg, params, 20, 10, sched, b));
}
