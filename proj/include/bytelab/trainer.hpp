#pragma once

#include <cmath>
#include <cstdint>
#include <iomanip>
#include <limits>
#include <numeric>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "bytelab/budget.hpp"
#include "bytelab/corpus.hpp"
#include "bytelab/corruption.hpp"
#include "bytelab/metrics.hpp"
#include "bytelab/model.hpp"
#include "bytelab/objectives.hpp"
#include "bytelab/rng.hpp"
#include "bytelab/schedule.hpp"

namespace bytelab {

// Divergence (NaN/Inf loss or gradient) during optimization.
struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct TrainConfig {
  std::string objective = "ar";  // "ar" | "mdm"
  int batch_size = 16;
  int64_t total_steps = 1000;
  double peak_lr = 3e-3;
  double min_lr = 3e-4;
  double warmup_fraction = 0.05;
  double weight_decay = 0.01;
  double grad_clip_norm = 1.0;
  double beta1 = 0.9;
  double beta2 = 0.95;
  double adam_eps = 1e-8;
  uint64_t seed = 0;
  int64_t eval_interval = 0;   // 0: only at the last step
  int64_t eval_sequences = 64; // cap on validation sequences per eval
  int eval_strata = 64;        // quadrature bins for MDM eval
  int64_t log_interval = 1;
  ScheduleKind mdm_schedule = ScheduleKind::kLinear;
  std::string mdm_masking = "independent";  // "independent" | "span"
  std::string checkpoint_prefix;  // empty: no checkpoint

  void validate() const {
    if (objective != "ar" && objective != "mdm")
      throw std::invalid_argument("train config: objective must be ar or mdm");
    if (mdm_masking != "independent" && mdm_masking != "span")
      throw std::invalid_argument("train config: mdm_masking must be independent or span");
    if (batch_size < 1 || total_steps < 1) throw std::invalid_argument("train config: sizes");
    if (!(peak_lr > 0.0) || min_lr < 0.0 || min_lr > peak_lr)
      throw std::invalid_argument("train config: lr range");
    if (warmup_fraction < 0.0 || warmup_fraction >= 1.0)
      throw std::invalid_argument("train config: warmup fraction");
  }
};

// Linear warmup from 0 to peak over round(warmup_fraction * total) steps, then
// cosine decay to min_lr; the last step lands exactly on min_lr.
inline double lr_at(const TrainConfig& tc, int64_t step) {
  const int64_t warm = std::llround(tc.warmup_fraction * static_cast<double>(tc.total_steps));
  if (step < warm) return tc.peak_lr * static_cast<double>(step + 1) / static_cast<double>(warm);
  const int64_t span = tc.total_steps - 1 - warm;
  if (span <= 0) return tc.min_lr;
  double prog = static_cast<double>(step - warm) / static_cast<double>(span);
  return tc.min_lr + 0.5 * (tc.peak_lr - tc.min_lr) * (1.0 + std::cos(M_PI * prog));
}

template <typename S>
struct TrainResult {
  ParamStore<S> params;
  std::string log_csv;
  int64_t steps_done = 0;
  int64_t tokens_seen = 0;
  int64_t flops_spent = 0;
  double final_train_loss = 0.0;
  double final_val_bpb = 0.0;
};

inline std::string train_log_header() {
  return "step,tokens,flops,train_loss_nats,val_bpb,lr,grad_norm\n";
}

namespace detail {

template <typename S>
double eval_val_bpb(const ModelConfig& cfg, const ParamStore<S>& params, const PackedDataset& val,
                    const TrainConfig& tc, const Tokenizer* tok,
                    const std::optional<PermutationSpec>& perm) {
  if (!perm) {
    if (tc.objective == "ar")
      return bpb_ar(cfg, params, val, tok, tc.eval_sequences).bpb;
    MaskSchedule sched{tc.mdm_schedule};
    return bpb_mdm(cfg, params, val, sched, tc.eval_strata, derive_seed(tc.seed, "eval"), tok,
                   tc.eval_sequences).bpb;
  }
  // permuted-data eval: same static permutation applied to every validation
  // sequence, position ids carried alongside (AR only)
  const int L = val.seq_len;
  const int64_t n = std::min<int64_t>(tc.eval_sequences, val.n_sequences());
  double nll = 0.0;
  int64_t bytes_total = 0;
  for (int64_t s = 0; s < n; ++s) {
    std::vector<int> seq(val.sequence(s), val.sequence(s) + L);
    PermutedSequence ps = apply_permutation(seq, *perm);
    Tape<S> tape(/*recording=*/false);
    auto bound = bind_params(tape, params, false);
    LossResult<S> res = ar_loss(tape, cfg, bound, ps.tokens, 1, ps.position_ids);
    for (S x : res.per_token_nll) nll += static_cast<double>(x);
    for (int i = 1; i < L; ++i)
      bytes_total += tok ? static_cast<int64_t>(tok->token_bytes(ps.tokens[static_cast<size_t>(i)]).size()) : 1;
  }
  return nll / static_cast<double>(bytes_total) / std::log(2.0);
}

}  // namespace detail

// Deterministic AdamW training loop: per-epoch shuffled non-overlapping
// batches (remainder dropped), decoupled weight decay, global-norm gradient
// clipping, cosine lr schedule, CSV metrics log. A non-finite loss aborts.
// span_tok (BPE) supplies the coupled-block partitions when
// tc.mdm_masking == "span"; the dataset must then be byte-level so tokens are
// raw bytes the span tokenizer can re-segment.
template <typename S>
TrainResult<S> train(const ModelConfig& cfg, const PackedDataset& train_ds,
                     const PackedDataset& val_ds, const TrainConfig& tc,
                     const Tokenizer* tok = nullptr,
                     const std::optional<PermutationSpec>& perm = std::nullopt,
                     const Tokenizer* span_tok = nullptr) {
  cfg.validate();
  tc.validate();
  if (train_ds.seq_len > cfg.max_seq_len)
    throw std::invalid_argument("train: dataset seq_len exceeds max_seq_len");
  if (train_ds.n_sequences() < tc.batch_size)
    throw std::invalid_argument("train: fewer sequences than one batch");
  const bool mdm = tc.objective == "mdm";
  if (mdm && cfg.attention_mode != AttentionMode::kBidirectional)
    throw std::invalid_argument("train: mdm needs a bidirectional model");
  if (!mdm && cfg.attention_mode != AttentionMode::kCausal)
    throw std::invalid_argument("train: ar needs a causal model");
  if (perm && mdm) throw std::invalid_argument("train: permuted training is AR-only");
  if (perm && perm->length != train_ds.seq_len)
    throw std::invalid_argument("train: permutation length != seq_len");
  const bool span_mask = mdm && tc.mdm_masking == "span";
  if (span_mask && !span_tok)
    throw std::invalid_argument("train: span masking needs a span tokenizer");
  if (span_mask && train_ds.representation != Representation::kByte)
    throw std::invalid_argument("train: span masking needs a byte-level dataset");

  const int L = train_ds.seq_len;
  const int B = tc.batch_size;
  const int64_t flops_per_step =
      flops_forward(cfg, L).train_per_seq() * static_cast<int64_t>(B);
  MaskSchedule sched{tc.mdm_schedule};
  Rng mask_rng(derive_seed(tc.seed, "mask"));

  TrainResult<S> res;
  res.params = init_params<S>(cfg);

  // adam moments, canonical parameter order
  std::map<std::string, Tensor<S>> opt;
  for (const auto& [k, t] : res.params.params) {
    opt[k + ".m"] = Tensor<S>(t.rows, t.cols);
    opt[k + ".v"] = Tensor<S>(t.rows, t.cols);
  }

  std::ostringstream log;
  log << train_log_header();
  log << std::setprecision(std::numeric_limits<double>::max_digits10);

  std::vector<int64_t> order(static_cast<size_t>(train_ds.n_sequences()));
  std::iota(order.begin(), order.end(), 0);
  int64_t epoch = 0, cursor = 0;
  {
    Rng erng(derive_seed(tc.seed, "epoch-0"));
    erng.shuffle(order.begin(), order.end());
  }

  // per-sequence coupled-block partitions, computed once per dataset sequence
  std::map<int64_t, SpanPartition> span_cache;
  auto span_for = [&](int64_t seq_idx) -> const SpanPartition& {
    auto it = span_cache.find(seq_idx);
    if (it != span_cache.end()) return it->second;
    const int32_t* seq = train_ds.sequence(seq_idx);
    ByteString bytes(static_cast<size_t>(L), '\0');
    for (int i = 0; i < L; ++i) bytes[static_cast<size_t>(i)] = static_cast<char>(seq[i]);
    Encoding e = span_tok->encode(bytes);
    std::vector<std::pair<int, int>> spans;
    spans.reserve(e.spans.spans.size());
    for (const TokenSpan& s : e.spans.spans)
      spans.emplace_back(static_cast<int>(s.begin), static_cast<int>(s.end));
    return span_cache.emplace(seq_idx, SpanPartition::from_token_spans(spans, L)).first->second;
  };

  std::vector<int> toks(static_cast<size_t>(B) * L);
  std::vector<int> pos(static_cast<size_t>(B) * L);
  std::vector<SpanPartition> batch_parts;
  for (int64_t step = 0; step < tc.total_steps; ++step) {
    if (cursor + B > static_cast<int64_t>(order.size())) {
      ++epoch;
      cursor = 0;
      Rng erng(derive_seed(tc.seed, "epoch-" + std::to_string(epoch)));
      erng.shuffle(order.begin(), order.end());
    }
    for (int b = 0; b < B; ++b) {
      const int32_t* seq = train_ds.sequence(order[static_cast<size_t>(cursor + b)]);
      if (perm) {
        std::vector<int> raw(seq, seq + L);
        PermutedSequence ps = apply_permutation(raw, *perm);
        for (int i = 0; i < L; ++i) {
          toks[static_cast<size_t>(b * L + i)] = ps.tokens[static_cast<size_t>(i)];
          pos[static_cast<size_t>(b * L + i)] = ps.position_ids[static_cast<size_t>(i)];
        }
      } else {
        for (int i = 0; i < L; ++i) {
          toks[static_cast<size_t>(b * L + i)] = seq[i];
          pos[static_cast<size_t>(b * L + i)] = i;
        }
      }
    }
    if (span_mask) {
      batch_parts.clear();
      for (int b = 0; b < B; ++b)
        batch_parts.push_back(span_for(order[static_cast<size_t>(cursor + b)]));
    }
    cursor += B;

    Tape<S> tape(/*recording=*/true);
    BoundParams<S> bound = bind_params(tape, res.params, /*needs_grad=*/true);
    LossResult<S> loss = mdm ? mdm_loss(tape, cfg, bound, toks, B, sched, mask_rng,
                                        span_mask ? &batch_parts : nullptr)
                             : ar_loss(tape, cfg, bound, toks, B, pos);
    double loss_val = static_cast<double>(loss.mean_loss);
    if (!std::isfinite(loss_val))
      throw NumericalError("train: non-finite loss at step " + std::to_string(step));
    tape.backward(loss.loss_node);

    // global-norm clip
    double sq = 0.0;
    for (const auto& [k, t] : res.params.params) {
      const Tensor<S>& g = tape.grad(bound.at(k));
      for (S x : g.v) sq += static_cast<double>(x) * static_cast<double>(x);
    }
    double gnorm = std::sqrt(sq);
    if (!std::isfinite(gnorm))
      throw NumericalError("train: non-finite gradient at step " + std::to_string(step));
    const S clip_scale =
        S(tc.grad_clip_norm > 0.0 && gnorm > tc.grad_clip_norm ? tc.grad_clip_norm / gnorm : 1.0);

    const double lr = lr_at(tc, step);
    const double bc1 = 1.0 - std::pow(tc.beta1, static_cast<double>(step + 1));
    const double bc2 = 1.0 - std::pow(tc.beta2, static_cast<double>(step + 1));
    for (auto& [k, t] : res.params.params) {
      const Tensor<S>& g = tape.grad(bound.at(k));
      Tensor<S>& m = opt.at(k + ".m");
      Tensor<S>& v = opt.at(k + ".v");
      const S decay = S(1.0 - lr * tc.weight_decay);
      for (size_t i = 0; i < t.v.size(); ++i) {
        S gi = g.v[i] * clip_scale;
        m.v[i] = S(tc.beta1) * m.v[i] + S(1.0 - tc.beta1) * gi;
        v.v[i] = S(tc.beta2) * v.v[i] + S(1.0 - tc.beta2) * gi * gi;
        S mhat = m.v[i] / S(bc1);
        S vhat = v.v[i] / S(bc2);
        t.v[i] = t.v[i] * decay - S(lr) * mhat / (std::sqrt(vhat) + S(tc.adam_eps));
      }
    }

    res.steps_done = step + 1;
    res.tokens_seen += static_cast<int64_t>(B) * L;
    res.flops_spent += flops_per_step;
    res.final_train_loss = loss_val;

    const bool last = step + 1 == tc.total_steps;
    const bool do_eval = last || (tc.eval_interval > 0 && (step + 1) % tc.eval_interval == 0);
    if (do_eval)
      res.final_val_bpb = detail::eval_val_bpb(cfg, res.params, val_ds, tc, tok, perm);
    if (last || step % tc.log_interval == 0) {
      log << (step + 1) << "," << res.tokens_seen << "," << res.flops_spent << "," << loss_val
          << ",";
      if (do_eval) log << res.final_val_bpb;
      log << "," << lr << "," << gnorm << "\n";
    }
  }

  if (!tc.checkpoint_prefix.empty())
    save_checkpoint(tc.checkpoint_prefix, cfg, res.params, res.steps_done, &opt);
  res.log_csv = log.str();
  return res;
}

}  // namespace bytelab
