#include <doctest.h>

#include <cmath>
#include <vector>

#include "bytelab/gradcheck.hpp"
#include "bytelab/rng.hpp"
#include "bytelab/tape.hpp"
#include "bytelab/tensor.hpp"

using namespace bytelab;

namespace {

Tensor<double> random_tensor(int64_t r, int64_t c, Rng& rng) {
  Tensor<double> t(r, c);
  for (auto& x : t.v) x = rng.normal();
  return t;
}

}  // namespace

TEST_CASE("matmul forward oracle") {
  Tape<double> tape;
  Tensor<double> a(2, 3), b(3, 2);
  a.v = {1, 2, 3, 4, 5, 6};
  b.v = {7, 8, 9, 10, 11, 12};
  int c = tape.matmul(tape.leaf(a), tape.leaf(b));
  const Tensor<double>& C = tape.val(c);
  CHECK(C.at(0, 0) == 58);
  CHECK(C.at(0, 1) == 64);
  CHECK(C.at(1, 0) == 139);
  CHECK(C.at(1, 1) == 154);
  CHECK(tape.flops(FlopCategory::kOther) == 2 * 2 * 3 * 2);
}

TEST_CASE("matmul_nt equals matmul with transposed operand") {
  Rng rng(1);
  Tensor<double> a = random_tensor(3, 4, rng);
  Tensor<double> b = random_tensor(5, 4, rng);
  Tensor<double> bt(4, 5);
  for (int64_t r = 0; r < 5; ++r)
    for (int64_t c = 0; c < 4; ++c) bt.at(c, r) = b.at(r, c);
  Tape<double> tape;
  int x = tape.matmul_nt(tape.leaf(a), tape.leaf(b));
  int y = tape.matmul(tape.leaf(a), tape.leaf(bt));
  for (int64_t i = 0; i < 15; ++i) CHECK(tape.val(x).v[i] == doctest::Approx(tape.val(y).v[i]).epsilon(1e-14));
}

TEST_CASE("softmax rows: uniform logits, causal masking, row sums") {
  Tape<double> tape;
  Tensor<double> a(2, 2);
  a.v = {0, 0, 1, 3};
  int s = tape.softmax_rows(tape.leaf(a), /*causal=*/false);
  CHECK(tape.val(s).at(0, 0) == 0.5);
  CHECK(tape.val(s).at(0, 1) == 0.5);
  CHECK(tape.val(s).at(1, 0) + tape.val(s).at(1, 1) == doctest::Approx(1.0));

  int cs = tape.softmax_rows(tape.leaf(a), /*causal=*/true);
  CHECK(tape.val(cs).at(0, 0) == 1.0);
  CHECK(tape.val(cs).at(0, 1) == 0.0);  // future slot masked out exactly
  CHECK(tape.val(cs).at(1, 0) + tape.val(cs).at(1, 1) == doctest::Approx(1.0));
}

TEST_CASE("log_softmax rows have logsumexp zero") {
  Rng rng(2);
  Tape<double> tape;
  Tensor<double> a = random_tensor(4, 7, rng);
  int s = tape.log_softmax_rows(tape.leaf(a));
  for (int64_t r = 0; r < 4; ++r) {
    double z = 0.0;
    for (int64_t c = 0; c < 7; ++c) z += std::exp(tape.val(s).at(r, c));
    CHECK(z == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("cross entropy of uniform logits over 256 classes is ln 256") {
  Tape<double> tape;
  int logits = tape.leaf(Tensor<double>::full(3, 256, 0.37));
  std::vector<int> targets = {0, 17, 255};
  std::vector<double> weights = {1.0 / 3, 1.0 / 3, 1.0 / 3};
  std::vector<double> nll;
  int loss = tape.cross_entropy(logits, targets, weights, &nll);
  CHECK(tape.val(loss).v[0] == doctest::Approx(std::log(256.0)).epsilon(1e-14));
  for (double x : nll) CHECK(x == doctest::Approx(std::log(256.0)).epsilon(1e-14));
}

TEST_CASE("rmsnorm forward oracle") {
  Tape<double> tape;
  Tensor<double> x(1, 4);
  x.v = {1, 2, 3, 4};
  Tensor<double> g(1, 4);
  g.v = {1, 1, 2, 1};
  int o = tape.rmsnorm(tape.leaf(x), tape.leaf(g));
  double rms = std::sqrt((1 + 4 + 9 + 16) / 4.0 + 1e-5);
  CHECK(tape.val(o).at(0, 0) == doctest::Approx(1.0 / rms).epsilon(1e-12));
  CHECK(tape.val(o).at(0, 2) == doctest::Approx(2.0 * 3.0 / rms).epsilon(1e-12));
}

TEST_CASE("rope: position zero is identity, rotations preserve norm") {
  Rng rng(3);
  Tensor<double> x = random_tensor(3, 8, rng);
  std::vector<int> pos = {0, 5, 11};
  Tape<double> tape;
  int o = tape.rope(tape.leaf(x), pos, 4);
  const Tensor<double>& O = tape.val(o);
  for (int64_t c = 0; c < 8; ++c) CHECK(O.at(0, c) == doctest::Approx(x.at(0, c)).epsilon(1e-14));
  for (int64_t r = 0; r < 3; ++r) {
    double n0 = 0, n1 = 0;
    for (int64_t c = 0; c < 8; ++c) {
      n0 += x.at(r, c) * x.at(r, c);
      n1 += O.at(r, c) * O.at(r, c);
    }
    CHECK(n1 == doctest::Approx(n0).epsilon(1e-12));
  }
}

TEST_CASE("slice and concat round-trip") {
  Rng rng(4);
  Tensor<double> x = random_tensor(6, 10, rng);
  Tape<double> tape;
  int a = tape.leaf(x);
  int top = tape.slice_rows(a, 0, 2);
  int bot = tape.slice_rows(a, 2, 6);
  int rt = tape.concat_rows({top, bot});
  int left = tape.slice_cols(a, 0, 3);
  int right = tape.slice_cols(a, 3, 10);
  int ct = tape.concat_cols({left, right});
  for (int64_t i = 0; i < x.size(); ++i) {
    CHECK(tape.val(rt).v[i] == x.v[i]);
    CHECK(tape.val(ct).v[i] == x.v[i]);
  }
}

// FD check over a composite graph touching every differentiable op.
TEST_CASE("gradients match finite differences across all ops") {
  ParamStore<double> params;
  Rng rng(5);
  params.params["a"] = random_tensor(3, 4, rng);
  params.params["b"] = random_tensor(4, 4, rng);
  params.params["g"] = random_tensor(1, 4, rng);
  std::vector<int> gather_idx = {2, 0, 1, 2};
  std::vector<int> targets = {1, 3, 0};
  std::vector<double> weights = {0.5, 0.25, 0.25};
  std::vector<int> pos = {0, 3, 7};

  auto build = [&](Tape<double>& tape, const ParamStore<double>& p, bool needs_grad,
                   BoundParams<double>* bound_out) {
    BoundParams<double> bound = bind_params(tape, p, needs_grad);
    int a = bound.at("a");
    int h = tape.rmsnorm(a, bound.at("g"));
    h = tape.rope(h, pos, 4);
    int gathered = tape.gather_rows(bound.at("b"), gather_idx);
    int top = tape.slice_rows(gathered, 0, 3);
    int s = tape.matmul_nt(h, top);
    s = tape.scale(s, 0.5);
    int pw = tape.softmax_rows(s, /*causal=*/true);
    int mixed = tape.matmul(pw, top);
    int gate = tape.silu(tape.add(mixed, h));
    int out = tape.mul(gate, h);
    int logits = tape.matmul(out, bound.at("b"));
    int ls = tape.log_softmax_rows(logits);
    int probe = tape.sum(tape.scale(ls, 1e-3));
    int ce = tape.cross_entropy(logits, targets, weights);
    int loss = tape.add(ce, probe);
    if (bound_out) *bound_out = bound;
    return loss;
  };

  Tape<double> tape;
  BoundParams<double> bound;
  int loss = build(tape, params, /*needs_grad=*/true, &bound);
  tape.backward(loss);
  std::map<std::string, Tensor<double>> grads;
  for (const auto& [k, t] : params.params) grads[k] = tape.grad(bound.at(k));

  auto f = [&](const ParamStore<double>& p) {
    Tape<double> t2(/*recording=*/false);
    return t2.val(build(t2, p, false, nullptr)).v[0];
  };
  GradCheckReport rep = grad_check(f, params, grads);
  CHECK(!rep.nonfinite_seen);
  CHECK(rep.coords_checked == 3 * 4 + 4 * 4 + 4);
  CHECK(rep.max_rel_error < 1e-8);
}

TEST_CASE("backward accumulates across fan-out") {
  Tape<double> tape;
  Tensor<double> x(1, 1);
  x.v = {3.0};
  int a = tape.leaf(x, /*needs_grad=*/true);
  int y = tape.add(tape.mul(a, a), a);  // x^2 + x
  tape.backward(y);
  CHECK(tape.grad(a).v[0] == doctest::Approx(7.0));  // 2x + 1
}

TEST_CASE("rng determinism and helper ranges") {
  Rng a(123), b(123);
  for (int i = 0; i < 100; ++i) CHECK(a.next() == b.next());
  Rng r(7);
  for (int i = 0; i < 1000; ++i) {
    double u = r.uniform01();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    CHECK(r.below(17) < 17);
  }
  std::vector<int> perm(50);
  for (int i = 0; i < 50; ++i) perm[static_cast<size_t>(i)] = i;
  r.shuffle(perm.begin(), perm.end());
  std::vector<int> sorted = perm;
  std::sort(sorted.begin(), sorted.end());
  for (int i = 0; i < 50; ++i) CHECK(sorted[static_cast<size_t>(i)] == i);
  CHECK(derive_seed(0, "x") != derive_seed(0, "y"));
  CHECK(derive_seed(0, "x") != derive_seed(1, "x"));
}
