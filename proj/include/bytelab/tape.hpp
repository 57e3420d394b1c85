#pragma once

#include <Eigen/Dense>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "bytelab/tensor.hpp"

namespace bytelab {

// Matmul-level FLOPs categories, matching the terms of the analytic
// per-forward breakdown so the instrumented counts can be compared term by
// term against the formula.
enum class FlopCategory : int {
  kEmbeddings = 0,
  kQkvProj,
  kAttnLogits,
  kAttnWeighting,
  kOutProj,
  kMlp,
  kLmHead,
  kOther,
  kCount,
};

// Reverse-mode autodiff tape over dense matrices. One tape per forward/backward
// pass; node creation order is the topological order, and backward walks it in
// reverse with a fixed reduction order, so results are bit-reproducible.
template <typename S>
class Tape {
 public:
  using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using Map = Eigen::Map<Mat>;
  using CMap = Eigen::Map<const Mat>;

  struct Node {
    Tensor<S> val;
    Tensor<S> grad;
    bool needs_grad = false;
    std::function<void(Tape&, Node&)> backward;
  };

  explicit Tape(bool recording = true) : recording_(recording) {}

  int leaf(Tensor<S> t, bool needs_grad = false) {
    Node n;
    n.val = std::move(t);
    n.needs_grad = needs_grad;
    nodes_.push_back(std::move(n));
    return static_cast<int>(nodes_.size()) - 1;
  }

  const Tensor<S>& val(int id) const { return nodes_[id].val; }
  const Tensor<S>& grad(int id) const { return nodes_[id].grad; }

  int64_t flops(FlopCategory c) const { return flops_[static_cast<int>(c)]; }
  int64_t flops_total() const {
    int64_t t = 0;
    for (int64_t f : flops_) t += f;
    return t;
  }

  // ---- elementwise and linear ops ----

  int add(int a, int b) {
    const Tensor<S>&A = v(a), &B = v(b);
    require(A.same_shape(B), "add: shape mismatch");
    Tensor<S> out(A.rows, A.cols);
    for (int64_t i = 0; i < A.size(); ++i) out.v[i] = A.v[i] + B.v[i];
    return emit(std::move(out), {a, b}, [a, b](Tape& t, Node& n) {
      t.accumulate(a, n.grad.v);
      t.accumulate(b, n.grad.v);
    });
  }

  int mul(int a, int b) {
    const Tensor<S>&A = v(a), &B = v(b);
    require(A.same_shape(B), "mul: shape mismatch");
    Tensor<S> out(A.rows, A.cols);
    for (int64_t i = 0; i < A.size(); ++i) out.v[i] = A.v[i] * B.v[i];
    return emit(std::move(out), {a, b}, [a, b](Tape& t, Node& n) {
      const auto& av = t.v(a).v;
      const auto& bv = t.v(b).v;
      std::vector<S> ga(av.size()), gb(av.size());
      for (size_t i = 0; i < av.size(); ++i) {
        ga[i] = n.grad.v[i] * bv[i];
        gb[i] = n.grad.v[i] * av[i];
      }
      t.accumulate(a, ga);
      t.accumulate(b, gb);
    });
  }

  int scale(int a, S c) {
    const Tensor<S>& A = v(a);
    Tensor<S> out(A.rows, A.cols);
    for (int64_t i = 0; i < A.size(); ++i) out.v[i] = A.v[i] * c;
    return emit(std::move(out), {a}, [a, c](Tape& t, Node& n) {
      std::vector<S> g(n.grad.v.size());
      for (size_t i = 0; i < g.size(); ++i) g[i] = n.grad.v[i] * c;
      t.accumulate(a, g);
    });
  }

  int sum(int a) {
    const Tensor<S>& A = v(a);
    S acc = 0;
    for (S x : A.v) acc += x;
    return emit(Tensor<S>::scalar(acc), {a}, [a](Tape& t, Node& n) {
      std::vector<S> g(t.v(a).v.size(), n.grad.v[0]);
      t.accumulate(a, g);
    });
  }

  int silu(int a) {
    const Tensor<S>& A = v(a);
    Tensor<S> out(A.rows, A.cols);
    for (int64_t i = 0; i < A.size(); ++i) {
      S s = S(1) / (S(1) + std::exp(-A.v[i]));
      out.v[i] = A.v[i] * s;
    }
    return emit(std::move(out), {a}, [a](Tape& t, Node& n) {
      const auto& av = t.v(a).v;
      std::vector<S> g(av.size());
      for (size_t i = 0; i < av.size(); ++i) {
        S s = S(1) / (S(1) + std::exp(-av[i]));
        g[i] = n.grad.v[i] * (s + av[i] * s * (S(1) - s));
      }
      t.accumulate(a, g);
    });
  }

  // C = A * B, counted as 2*m*n*k FLOPs in the given category.
  int matmul(int a, int b, FlopCategory cat = FlopCategory::kOther) {
    const Tensor<S>&A = v(a), &B = v(b);
    require(A.cols == B.rows, "matmul: inner dims differ");
    Tensor<S> out(A.rows, B.cols);
    CMap ma(A.v.data(), A.rows, A.cols);
    CMap mb(B.v.data(), B.rows, B.cols);
    Map mo(out.v.data(), out.rows, out.cols);
    mo.noalias() = ma * mb;
    count(cat, 2 * A.rows * A.cols * B.cols);
    return emit(std::move(out), {a, b}, [a, b](Tape& t, Node& n) {
      const Tensor<S>&A2 = t.v(a), &B2 = t.v(b);
      CMap ma2(A2.v.data(), A2.rows, A2.cols);
      CMap mb2(B2.v.data(), B2.rows, B2.cols);
      CMap go(n.grad.v.data(), n.grad.rows, n.grad.cols);
      if (t.wants_grad(a)) {
        Tensor<S> ga(A2.rows, A2.cols);
        Map(ga.v.data(), ga.rows, ga.cols).noalias() = go * mb2.transpose();
        t.accumulate(a, ga.v);
      }
      if (t.wants_grad(b)) {
        Tensor<S> gb(B2.rows, B2.cols);
        Map(gb.v.data(), gb.rows, gb.cols).noalias() = ma2.transpose() * go;
        t.accumulate(b, gb.v);
      }
    });
  }

  // C = A * B^T.
  int matmul_nt(int a, int b, FlopCategory cat = FlopCategory::kOther) {
    const Tensor<S>&A = v(a), &B = v(b);
    require(A.cols == B.cols, "matmul_nt: inner dims differ");
    Tensor<S> out(A.rows, B.rows);
    CMap ma(A.v.data(), A.rows, A.cols);
    CMap mb(B.v.data(), B.rows, B.cols);
    Map mo(out.v.data(), out.rows, out.cols);
    mo.noalias() = ma * mb.transpose();
    count(cat, 2 * A.rows * A.cols * B.rows);
    return emit(std::move(out), {a, b}, [a, b](Tape& t, Node& n) {
      const Tensor<S>&A2 = t.v(a), &B2 = t.v(b);
      CMap ma2(A2.v.data(), A2.rows, A2.cols);
      CMap mb2(B2.v.data(), B2.rows, B2.cols);
      CMap go(n.grad.v.data(), n.grad.rows, n.grad.cols);
      if (t.wants_grad(a)) {
        Tensor<S> ga(A2.rows, A2.cols);
        Map(ga.v.data(), ga.rows, ga.cols).noalias() = go * mb2;
        t.accumulate(a, ga.v);
      }
      if (t.wants_grad(b)) {
        Tensor<S> gb(B2.rows, B2.cols);
        Map(gb.v.data(), gb.rows, gb.cols).noalias() = go.transpose() * ma2;
        t.accumulate(b, gb.v);
      }
    });
  }

  // Row gather from a table, e.g. token embedding lookup. Counted as the
  // one-hot matmul it is mathematically equivalent to: 2 * T * rows * cols.
  int gather_rows(int table, std::span<const int> idx,
                  FlopCategory cat = FlopCategory::kEmbeddings) {
    const Tensor<S>& T_ = v(table);
    Tensor<S> out(static_cast<int64_t>(idx.size()), T_.cols);
    for (size_t i = 0; i < idx.size(); ++i) {
      require(idx[i] >= 0 && idx[i] < T_.rows, "gather_rows: index out of range");
      std::copy_n(&T_.v[static_cast<size_t>(idx[i]) * T_.cols], T_.cols,
                  &out.v[i * static_cast<size_t>(T_.cols)]);
    }
    count(cat, 2 * static_cast<int64_t>(idx.size()) * T_.rows * T_.cols);
    std::vector<int> idx_copy(idx.begin(), idx.end());
    return emit(std::move(out), {table}, [table, idx_copy](Tape& t, Node& n) {
      if (!t.wants_grad(table)) return;
      const Tensor<S>& tbl = t.v(table);
      Tensor<S> g(tbl.rows, tbl.cols);
      for (size_t i = 0; i < idx_copy.size(); ++i) {
        for (int64_t c = 0; c < tbl.cols; ++c) {
          g.v[static_cast<size_t>(idx_copy[i]) * tbl.cols + c] +=
              n.grad.v[i * static_cast<size_t>(tbl.cols) + c];
        }
      }
      t.accumulate(table, g.v);
    });
  }

  int slice_rows(int a, int64_t r0, int64_t r1) {
    const Tensor<S>& A = v(a);
    require(0 <= r0 && r0 < r1 && r1 <= A.rows, "slice_rows: bad range");
    Tensor<S> out(r1 - r0, A.cols);
    std::copy_n(&A.v[static_cast<size_t>(r0 * A.cols)], out.size(), out.v.data());
    return emit(std::move(out), {a}, [a, r0](Tape& t, Node& n) {
      const Tensor<S>& A2 = t.v(a);
      Tensor<S> g(A2.rows, A2.cols);
      std::copy_n(n.grad.v.data(), n.grad.v.size(), &g.v[static_cast<size_t>(r0 * A2.cols)]);
      t.accumulate(a, g.v);
    });
  }

  int slice_cols(int a, int64_t c0, int64_t c1) {
    const Tensor<S>& A = v(a);
    require(0 <= c0 && c0 < c1 && c1 <= A.cols, "slice_cols: bad range");
    Tensor<S> out(A.rows, c1 - c0);
    for (int64_t r = 0; r < A.rows; ++r)
      std::copy_n(&A.v[static_cast<size_t>(r * A.cols + c0)], c1 - c0,
                  &out.v[static_cast<size_t>(r * out.cols)]);
    return emit(std::move(out), {a}, [a, c0](Tape& t, Node& n) {
      const Tensor<S>& A2 = t.v(a);
      Tensor<S> g(A2.rows, A2.cols);
      for (int64_t r = 0; r < A2.rows; ++r)
        for (int64_t c = 0; c < n.grad.cols; ++c)
          g.v[static_cast<size_t>(r * A2.cols + c0 + c)] =
              n.grad.v[static_cast<size_t>(r * n.grad.cols + c)];
      t.accumulate(a, g.v);
    });
  }

  int concat_cols(const std::vector<int>& parts) {
    require(!parts.empty(), "concat_cols: empty");
    int64_t rows = v(parts[0]).rows, cols = 0;
    for (int p : parts) {
      require(v(p).rows == rows, "concat_cols: row mismatch");
      cols += v(p).cols;
    }
    Tensor<S> out(rows, cols);
    int64_t off = 0;
    for (int p : parts) {
      const Tensor<S>& P = v(p);
      for (int64_t r = 0; r < rows; ++r)
        std::copy_n(&P.v[static_cast<size_t>(r * P.cols)], P.cols,
                    &out.v[static_cast<size_t>(r * cols + off)]);
      off += P.cols;
    }
    auto parts_copy = parts;
    return emit(std::move(out), parts, [parts_copy](Tape& t, Node& n) {
      int64_t off2 = 0;
      for (int p : parts_copy) {
        const Tensor<S>& P = t.v(p);
        Tensor<S> g(P.rows, P.cols);
        for (int64_t r = 0; r < P.rows; ++r)
          std::copy_n(&n.grad.v[static_cast<size_t>(r * n.grad.cols + off2)], P.cols,
                      &g.v[static_cast<size_t>(r * P.cols)]);
        t.accumulate(p, g.v);
        off2 += P.cols;
      }
    });
  }

  int concat_rows(const std::vector<int>& parts) {
    require(!parts.empty(), "concat_rows: empty");
    int64_t cols = v(parts[0]).cols, rows = 0;
    for (int p : parts) {
      require(v(p).cols == cols, "concat_rows: col mismatch");
      rows += v(p).rows;
    }
    Tensor<S> out(rows, cols);
    int64_t off = 0;
    for (int p : parts) {
      const Tensor<S>& P = v(p);
      std::copy_n(P.v.data(), P.size(), &out.v[static_cast<size_t>(off * cols)]);
      off += P.rows;
    }
    auto parts_copy = parts;
    return emit(std::move(out), parts, [parts_copy](Tape& t, Node& n) {
      int64_t off2 = 0;
      for (int p : parts_copy) {
        const Tensor<S>& P = t.v(p);
        Tensor<S> g(P.rows, P.cols);
        std::copy_n(&n.grad.v[static_cast<size_t>(off2 * P.cols)], P.size(), g.v.data());
        t.accumulate(p, g.v);
        off2 += P.rows;
      }
    });
  }

  // RMS pre-normalization with learned per-channel gain (no bias).
  int rmsnorm(int x, int gain, S eps = S(1e-5)) {
    const Tensor<S>& X = v(x);
    const Tensor<S>& G = v(gain);
    require(G.rows == 1 && G.cols == X.cols, "rmsnorm: gain shape");
    Tensor<S> out(X.rows, X.cols);
    const int64_t d = X.cols;
    for (int64_t r = 0; r < X.rows; ++r) {
      S ms = 0;
      for (int64_t c = 0; c < d; ++c) ms += X.at(r, c) * X.at(r, c);
      S inv = S(1) / std::sqrt(ms / S(d) + eps);
      for (int64_t c = 0; c < d; ++c) out.at(r, c) = X.at(r, c) * inv * G.v[c];
    }
    return emit(std::move(out), {x, gain}, [x, gain, eps](Tape& t, Node& n) {
      const Tensor<S>& X2 = t.v(x);
      const Tensor<S>& G2 = t.v(gain);
      const int64_t d = X2.cols;
      Tensor<S> gx(X2.rows, X2.cols);
      Tensor<S> gg(1, d);
      for (int64_t r = 0; r < X2.rows; ++r) {
        S ms = 0;
        for (int64_t c = 0; c < d; ++c) ms += X2.at(r, c) * X2.at(r, c);
        S rm = std::sqrt(ms / S(d) + eps);
        S inv = S(1) / rm;
        S dot = 0;  // sum_k go_k * g_k * x_k
        for (int64_t c = 0; c < d; ++c) dot += n.grad.at(r, c) * G2.v[c] * X2.at(r, c);
        for (int64_t c = 0; c < d; ++c) {
          gx.at(r, c) = n.grad.at(r, c) * G2.v[c] * inv -
                        X2.at(r, c) * dot * inv * inv * inv / S(d);
          gg.v[c] += n.grad.at(r, c) * X2.at(r, c) * inv;
        }
      }
      t.accumulate(x, gx.v);
      t.accumulate(gain, gg.v);
    });
  }

  // Rotary position embedding over heads of width d_head; rotation angle for
  // pair j of a row is position_id * base^(-2j/d_head).
  int rope(int x, std::span<const int> positions, int d_head, S base = S(10000)) {
    const Tensor<S>& X = v(x);
    require(X.rows == static_cast<int64_t>(positions.size()), "rope: positions length");
    require(d_head % 2 == 0 && X.cols % d_head == 0, "rope: head width");
    std::vector<int> pos(positions.begin(), positions.end());
    Tensor<S> out = rope_apply(X, pos, d_head, base, false);
    return emit(std::move(out), {x}, [x, pos, d_head, base](Tape& t, Node& n) {
      Tensor<S> g = rope_apply(n.grad, pos, d_head, base, true);
      t.accumulate(x, g.v);
    });
  }

  // Row softmax. If causal, row i is restricted to columns 0..i (requires a
  // square matrix); masked entries are exactly zero.
  int softmax_rows(int a, bool causal) {
    const Tensor<S>& A = v(a);
    if (causal) require(A.rows == A.cols, "softmax_rows: causal needs square");
    require(A.cols > 0, "softmax_rows: empty axis");
    Tensor<S> out(A.rows, A.cols);
    for (int64_t r = 0; r < A.rows; ++r) {
      int64_t lim = causal ? r + 1 : A.cols;
      S mx = A.at(r, 0);
      for (int64_t c = 1; c < lim; ++c) mx = std::max(mx, A.at(r, c));
      S z = 0;
      for (int64_t c = 0; c < lim; ++c) {
        out.at(r, c) = std::exp(A.at(r, c) - mx);
        z += out.at(r, c);
      }
      for (int64_t c = 0; c < lim; ++c) out.at(r, c) /= z;
    }
    return emit(std::move(out), {a}, [a, causal](Tape& t, Node& n, const Tensor<S>& p) {},
                /*softmax=*/true, causal);
  }

  // Log-softmax per row; logsumexp of each output row is 0.
  int log_softmax_rows(int a) {
    const Tensor<S>& A = v(a);
    require(A.cols > 0, "log_softmax_rows: empty axis");
    Tensor<S> out(A.rows, A.cols);
    for (int64_t r = 0; r < A.rows; ++r) {
      S mx = A.at(r, 0);
      for (int64_t c = 1; c < A.cols; ++c) mx = std::max(mx, A.at(r, c));
      S z = 0;
      for (int64_t c = 0; c < A.cols; ++c) z += std::exp(A.at(r, c) - mx);
      S lse = mx + std::log(z);
      for (int64_t c = 0; c < A.cols; ++c) out.at(r, c) = A.at(r, c) - lse;
    }
    return emit(std::move(out), {a}, [a](Tape& t, Node& n) {
      const Tensor<S>& O = n.val;
      Tensor<S> g(O.rows, O.cols);
      for (int64_t r = 0; r < O.rows; ++r) {
        S gsum = 0;
        for (int64_t c = 0; c < O.cols; ++c) gsum += n.grad.at(r, c);
        for (int64_t c = 0; c < O.cols; ++c)
          g.at(r, c) = n.grad.at(r, c) - std::exp(O.at(r, c)) * gsum;
      }
      t.accumulate(a, g.v);
    });
  }

  // Weighted cross-entropy from logits: sum_i w_i * (-log softmax(logits_i)[target_i]).
  // Returns the scalar node; per-row NLL values (unweighted) land in nll_out.
  int cross_entropy(int logits, std::span<const int> targets, std::span<const S> weights,
                    std::vector<S>* nll_out = nullptr) {
    const Tensor<S>& L = v(logits);
    require(static_cast<int64_t>(targets.size()) == L.rows, "cross_entropy: targets length");
    require(static_cast<int64_t>(weights.size()) == L.rows, "cross_entropy: weights length");
    std::vector<S> nll(static_cast<size_t>(L.rows));
    S loss = 0;
    for (int64_t r = 0; r < L.rows; ++r) {
      require(targets[r] >= 0 && targets[r] < L.cols, "cross_entropy: target out of range");
      S mx = L.at(r, 0);
      for (int64_t c = 1; c < L.cols; ++c) mx = std::max(mx, L.at(r, c));
      S z = 0;
      for (int64_t c = 0; c < L.cols; ++c) z += std::exp(L.at(r, c) - mx);
      S lse = mx + std::log(z);
      nll[static_cast<size_t>(r)] = lse - L.at(r, targets[r]);
      loss += weights[r] * nll[static_cast<size_t>(r)];
    }
    if (nll_out) *nll_out = nll;
    std::vector<int> tg(targets.begin(), targets.end());
    std::vector<S> w(weights.begin(), weights.end());
    return emit(Tensor<S>::scalar(loss), {logits}, [logits, tg, w](Tape& t, Node& n) {
      const Tensor<S>& L2 = t.v(logits);
      S go = n.grad.v[0];
      Tensor<S> g(L2.rows, L2.cols);
      for (int64_t r = 0; r < L2.rows; ++r) {
        if (w[static_cast<size_t>(r)] == S(0)) continue;
        S mx = L2.at(r, 0);
        for (int64_t c = 1; c < L2.cols; ++c) mx = std::max(mx, L2.at(r, c));
        S z = 0;
        for (int64_t c = 0; c < L2.cols; ++c) z += std::exp(L2.at(r, c) - mx);
        for (int64_t c = 0; c < L2.cols; ++c) {
          S p = std::exp(L2.at(r, c) - mx) / z;
          S y = (c == tg[static_cast<size_t>(r)]) ? S(1) : S(0);
          g.at(r, c) = go * w[static_cast<size_t>(r)] * (p - y);
        }
      }
      t.accumulate(logits, g.v);
    });
  }

  // ---- backward ----

  void backward(int out) {
    require(recording_, "backward on a non-recording tape");
    require(v(out).size() == 1, "backward: output must be scalar");
    for (auto& n : nodes_) {
      if (n.needs_grad && n.grad.size() == 0) n.grad = Tensor<S>(n.val.rows, n.val.cols);
    }
    if (nodes_[out].grad.size() == 0)
      nodes_[out].grad = Tensor<S>(1, 1);
    nodes_[out].grad.v[0] = S(1);
    for (int i = out; i >= 0; --i) {
      Node& n = nodes_[i];
      if (n.backward && n.grad.size() != 0) n.backward(*this, n);
    }
  }

 private:
  int emit(Tensor<S> out, std::vector<int> parents, std::function<void(Tape&, Node&)> back) {
    Node n;
    n.val = std::move(out);
    bool ng = false;
    for (int p : parents) ng = ng || nodes_[p].needs_grad;
    n.needs_grad = ng;
    if (recording_ && ng) n.backward = std::move(back);
    nodes_.push_back(std::move(n));
    return static_cast<int>(nodes_.size()) - 1;
  }

  // Softmax needs its own emit because backward reads the node's own output.
  int emit(Tensor<S> out, std::vector<int> parents,
           std::function<void(Tape&, Node&, const Tensor<S>&)>, bool, bool causal) {
    int a = parents[0];
    return emit(std::move(out), std::move(parents), [a, causal](Tape& t, Node& n) {
      const Tensor<S>& P = n.val;
      Tensor<S> g(P.rows, P.cols);
      for (int64_t r = 0; r < P.rows; ++r) {
        int64_t lim = causal ? r + 1 : P.cols;
        S dot = 0;
        for (int64_t c = 0; c < lim; ++c) dot += n.grad.at(r, c) * P.at(r, c);
        for (int64_t c = 0; c < lim; ++c)
          g.at(r, c) = P.at(r, c) * (n.grad.at(r, c) - dot);
      }
      t.accumulate(a, g.v);
    });
  }

  static Tensor<S> rope_apply(const Tensor<S>& X, const std::vector<int>& pos, int d_head,
                              S base, bool inverse) {
    Tensor<S> out(X.rows, X.cols);
    const int half = d_head / 2;
    for (int64_t r = 0; r < X.rows; ++r) {
      for (int64_t h0 = 0; h0 < X.cols; h0 += d_head) {
        for (int j = 0; j < half; ++j) {
          S theta = S(pos[static_cast<size_t>(r)]) *
                    std::pow(base, -S(2 * j) / S(d_head));
          if (inverse) theta = -theta;
          S c = std::cos(theta), s = std::sin(theta);
          S a = X.at(r, h0 + 2 * j), b = X.at(r, h0 + 2 * j + 1);
          out.at(r, h0 + 2 * j) = a * c - b * s;
          out.at(r, h0 + 2 * j + 1) = a * s + b * c;
        }
      }
    }
    return out;
  }

  const Tensor<S>& v(int id) const { return nodes_[id].val; }
  bool wants_grad(int id) const { return nodes_[id].needs_grad; }

  void accumulate(int id, const std::vector<S>& g) {
    Node& n = nodes_[id];
    if (!n.needs_grad) return;
    if (n.grad.size() == 0) n.grad = Tensor<S>(n.val.rows, n.val.cols);
    require(g.size() == n.grad.v.size(), "accumulate: shape mismatch");
    for (size_t i = 0; i < g.size(); ++i) n.grad.v[i] += g[i];
  }

  void count(FlopCategory c, int64_t f) { flops_[static_cast<int>(c)] += f; }

  static void require(bool ok, const char* msg) {
    if (!ok) throw std::invalid_argument(msg);
  }

  bool recording_;
  std::vector<Node> nodes_;
  std::array<int64_t, static_cast<size_t>(FlopCategory::kCount)> flops_{};
};

}  // namespace bytelab
