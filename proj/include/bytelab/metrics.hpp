#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "bytelab/corpus.hpp"
#include "bytelab/model.hpp"
#include "bytelab/objectives.hpp"
#include "bytelab/rng.hpp"
#include "bytelab/schedule.hpp"

namespace bytelab {

struct EvalReport {
  double nll_nats_total = 0.0;
  int64_t bytes_total = 0;
  int64_t tokens_scored = 0;
  double bpb = 0.0;
  std::string objective;
  std::string representation;
};

namespace detail {

inline int64_t token_bytes_len(const Tokenizer* tok, int id) {
  return tok ? static_cast<int64_t>(tok->token_bytes(id).size()) : 1;
}

}  // namespace detail

// Exact AR negative log-likelihood by teacher forcing. bytes_total is the
// decoded byte length of the scored tokens (all but the first of each
// sequence), keeping byte and BPE reports comparable.
template <typename S>
EvalReport bpb_ar(const ModelConfig& cfg, const ParamStore<S>& params, const PackedDataset& ds,
                  const Tokenizer* tok = nullptr, int64_t max_sequences = -1,
                  int batch_size = 8) {
  if (cfg.attention_mode != AttentionMode::kCausal)
    throw std::invalid_argument("bpb_ar: requires a causal model");
  if (cfg.vocab_size != ds.vocab_size)
    throw std::invalid_argument("bpb_ar: tokenizer/model vocab mismatch");
  const int64_t n = max_sequences < 0 ? ds.n_sequences()
                                      : std::min<int64_t>(max_sequences, ds.n_sequences());
  const int L = ds.seq_len;
  EvalReport rep;
  rep.objective = "ar";
  rep.representation = ds.representation == Representation::kByte ? "byte" : "bpe";
  for (int64_t base = 0; base < n; base += batch_size) {
    const int bs = static_cast<int>(std::min<int64_t>(batch_size, n - base));
    std::vector<int> toks(static_cast<size_t>(bs) * L);
    for (int b = 0; b < bs; ++b)
      for (int i = 0; i < L; ++i)
        toks[static_cast<size_t>(b * L + i)] = ds.sequence(base + b)[i];
    Tape<S> tape(/*recording=*/false);
    auto bound = bind_params(tape, params, false);
    LossResult<S> res = ar_loss(tape, cfg, bound, toks, bs);
    for (size_t i = 0; i < res.per_token_nll.size(); ++i)
      rep.nll_nats_total += static_cast<double>(res.per_token_nll[i]);
    for (int b = 0; b < bs; ++b)
      for (int i = 1; i < L; ++i)
        rep.bytes_total += detail::token_bytes_len(tok, ds.sequence(base + b)[i]);
    rep.tokens_scored += static_cast<int64_t>(bs) * (L - 1);
  }
  rep.bpb = rep.nll_nats_total / static_cast<double>(rep.bytes_total) / std::log(2.0);
  return rep;
}

// MDM NELBO via stratified time quadrature (midpoints of n_strata equal bins)
// under the given schedule, one mask draw per (sequence, bin).
template <typename S>
EvalReport bpb_mdm(const ModelConfig& cfg, const ParamStore<S>& params, const PackedDataset& ds,
                   const MaskSchedule& sched, int n_strata, uint64_t seed,
                   const Tokenizer* tok = nullptr, int64_t max_sequences = -1) {
  if (cfg.attention_mode != AttentionMode::kBidirectional)
    throw std::invalid_argument("bpb_mdm: requires a bidirectional model");
  if (cfg.vocab_size != ds.vocab_size)
    throw std::invalid_argument("bpb_mdm: tokenizer/model vocab mismatch");
  const int64_t n = max_sequences < 0 ? ds.n_sequences()
                                      : std::min<int64_t>(max_sequences, ds.n_sequences());
  const int L = ds.seq_len;
  EvalReport rep;
  rep.objective = "mdm";
  rep.representation = ds.representation == Representation::kByte ? "byte" : "bpe";
  std::vector<int> pos(static_cast<size_t>(L));
  std::iota(pos.begin(), pos.end(), 0);
  for (int64_t s = 0; s < n; ++s) {
    std::vector<int> x0(ds.sequence(s), ds.sequence(s) + L);
    double seq_nelbo = 0.0;
    for (int k = 0; k < n_strata; ++k) {
      double t = sched.clamp((k + 0.5) / n_strata);
      Rng rng(derive_seed(seed, "eval-mask-" + std::to_string(s) + "-" + std::to_string(k)));
      MaskedBatch mb = forward_mask(x0, t, sched, cfg.mask_id(), rng);
      if (mb.mask_indices.empty()) continue;
      Tensor<S> logits = forward_logits(cfg, params, mb.xt, pos, 1);
      double ce = 0.0;
      for (int i : mb.mask_indices) {
        S mx = logits.at(i, 0);
        for (int c = 1; c < cfg.vocab_size; ++c) mx = std::max(mx, logits.at(i, c));
        double z = 0.0;
        for (int c = 0; c < cfg.vocab_size; ++c)
          z += std::exp(static_cast<double>(logits.at(i, c) - mx));
        ce += std::log(z) + static_cast<double>(mx) -
              static_cast<double>(logits.at(i, x0[static_cast<size_t>(i)]));
      }
      seq_nelbo += -sched.weight(t) * ce / n_strata;
    }
    rep.nll_nats_total += seq_nelbo;
    for (int i = 0; i < L; ++i) rep.bytes_total += detail::token_bytes_len(tok, x0[static_cast<size_t>(i)]);
    rep.tokens_scored += L;
  }
  rep.bpb = rep.nll_nats_total / static_cast<double>(rep.bytes_total) / std::log(2.0);
  return rep;
}

// Conditional log-likelihood of a continuation given a prompt by the chain
// rule. AR: one causal teacher-forced pass (identical factorization to
// ar_loss). MDM: one bidirectional pass per continuation token, with every
// position >= the scored one masked.
template <typename S>
double chain_rule_loglik(const ModelConfig& cfg, const ParamStore<S>& params,
                         std::span<const int> prompt, std::span<const int> continuation) {
  if (continuation.empty()) throw std::invalid_argument("chain_rule_loglik: empty continuation");
  const int total = static_cast<int>(prompt.size() + continuation.size());
  if (total > cfg.max_seq_len)
    throw std::invalid_argument("chain_rule_loglik: sequence exceeds max_seq_len");
  std::vector<int> pos(static_cast<size_t>(total));
  std::iota(pos.begin(), pos.end(), 0);

  if (cfg.attention_mode == AttentionMode::kCausal) {
    if (prompt.empty())
      throw std::invalid_argument("chain_rule_loglik: AR needs a non-empty prompt");
    std::vector<int> toks(prompt.begin(), prompt.end());
    toks.insert(toks.end(), continuation.begin(), continuation.end());
    Tensor<S> logits = forward_logits(cfg, params, toks, pos, 1);
    double ll = 0.0;
    for (size_t i = 0; i < continuation.size(); ++i) {
      int slot = static_cast<int>(prompt.size() + i) - 1;  // slot predicts the next token
      S mx = logits.at(slot, 0);
      for (int c = 1; c < cfg.vocab_size; ++c) mx = std::max(mx, logits.at(slot, c));
      S z = 0;
      for (int c = 0; c < cfg.vocab_size; ++c) z += std::exp(logits.at(slot, c) - mx);
      // reduce exactly like the teacher-forced cross entropy so the chain rule
      // reproduces it bit-for-bit
      S lse = mx + std::log(z);
      ll += -static_cast<double>(lse - logits.at(slot, continuation[i]));
    }
    return ll;
  }

  double ll = 0.0;
  for (size_t i = 0; i < continuation.size(); ++i) {
    std::vector<int> toks(prompt.begin(), prompt.end());
    toks.insert(toks.end(), continuation.begin(), continuation.begin() + static_cast<long>(i));
    toks.resize(static_cast<size_t>(total), cfg.mask_id());
    Tensor<S> logits = forward_logits(cfg, params, toks, pos, 1);
    int slot = static_cast<int>(prompt.size() + i);
    S mx = logits.at(slot, 0);
    for (int c = 1; c < cfg.vocab_size; ++c) mx = std::max(mx, logits.at(slot, c));
    S z = 0;
    for (int c = 0; c < cfg.vocab_size; ++c) z += std::exp(logits.at(slot, c) - mx);
    ll += static_cast<double>(logits.at(slot, continuation[i]) - mx - std::log(z));
  }
  return ll;
}

// Per-byte predictive entropy of a causal byte model, in nats, from
// teacher-forced passes over consecutive windows of max_seq_len bytes. The
// first byte of each window has no context and is assigned ln V.
template <typename S>
std::vector<double> entropy_map(const ModelConfig& cfg, const ParamStore<S>& params,
                                const ByteString& text) {
  if (cfg.attention_mode != AttentionMode::kCausal)
    throw std::invalid_argument("entropy_map: requires a causal model");
  if (cfg.vocab_size != 256)
    throw std::invalid_argument("entropy_map: requires a byte-level model");
  std::vector<double> ent;
  ent.reserve(text.size());
  const int W = cfg.max_seq_len;
  for (size_t base = 0; base < text.size(); base += static_cast<size_t>(W)) {
    const int n = static_cast<int>(std::min<size_t>(W, text.size() - base));
    std::vector<int> toks(static_cast<size_t>(n));
    std::vector<int> pos(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
      toks[static_cast<size_t>(i)] = static_cast<unsigned char>(text[base + static_cast<size_t>(i)]);
      pos[static_cast<size_t>(i)] = i;
    }
    ent.push_back(std::log(256.0));
    if (n == 1) continue;
    Tensor<S> logits = forward_logits(cfg, params, toks, pos, 1);
    for (int i = 1; i < n; ++i) {
      int row = i - 1;
      S mx = logits.at(row, 0);
      for (int c = 1; c < 256; ++c) mx = std::max(mx, logits.at(row, c));
      double z = 0.0, ez = 0.0;
      for (int c = 0; c < 256; ++c) {
        double e = std::exp(static_cast<double>(logits.at(row, c) - mx));
        z += e;
        ez += e * static_cast<double>(logits.at(row, c) - mx);
      }
      // H = log z - E[logit - mx]
      ent.push_back(std::log(z) - ez / z);
    }
  }
  return ent;
}

struct BoundaryAlignmentReport {
  std::vector<double> entropies;
  std::vector<int> labels;
  double roc_auc = 0.0;
  int64_t n_positive = 0;
  int64_t n_negative = 0;
};

// ROC AUC by the Mann-Whitney rank statistic with midranks (ties count half).
inline BoundaryAlignmentReport boundary_auc(std::span<const double> entropies,
                                            std::span<const int> labels) {
  if (entropies.size() != labels.size())
    throw std::invalid_argument("boundary_auc: length mismatch");
  BoundaryAlignmentReport rep;
  rep.entropies.assign(entropies.begin(), entropies.end());
  rep.labels.assign(labels.begin(), labels.end());
  for (int l : labels) (l ? rep.n_positive : rep.n_negative)++;
  if (rep.n_positive == 0 || rep.n_negative == 0)
    throw std::invalid_argument("boundary_auc: both classes must be present");

  std::vector<size_t> order(entropies.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](size_t a, size_t b) { return entropies[a] < entropies[b]; });
  double pos_rank_sum = 0.0;
  size_t i = 0;
  while (i < order.size()) {
    size_t j = i;
    while (j < order.size() && entropies[order[j]] == entropies[order[i]]) ++j;
    double midrank = 0.5 * static_cast<double>(i + 1 + j);  // ranks are 1-based
    for (size_t k = i; k < j; ++k)
      if (labels[order[k]]) pos_rank_sum += midrank;
    i = j;
  }
  double u = pos_rank_sum -
             static_cast<double>(rep.n_positive) * (static_cast<double>(rep.n_positive) + 1) / 2.0;
  rep.roc_auc = u / (static_cast<double>(rep.n_positive) * static_cast<double>(rep.n_negative));
  return rep;
}

}  // namespace bytelab
