#pragma once

#include <cmath>
#include <numeric>
#include <span>
#include <stdexcept>
#include <vector>

#include "bytelab/model.hpp"
#include "bytelab/rng.hpp"
#include "bytelab/schedule.hpp"
#include "bytelab/tape.hpp"

namespace bytelab {

// Disjoint, contiguous, exhaustive index blocks over [0, L).
struct SpanPartition {
  std::vector<std::pair<int, int>> blocks;  // half-open [begin, end)

  static SpanPartition unit(int length) {
    SpanPartition p;
    for (int i = 0; i < length; ++i) p.blocks.emplace_back(i, i + 1);
    return p;
  }

  // Blocks from BPE token spans, clipped to [0, length); trailing indices not
  // covered by any span become unit blocks.
  static SpanPartition from_token_spans(const std::vector<std::pair<int, int>>& spans,
                                        int length) {
    SpanPartition p;
    int pos = 0;
    for (auto [b, e] : spans) {
      if (b >= length) break;
      e = std::min(e, length);
      if (b != pos || e <= b) throw std::invalid_argument("span partition: spans not contiguous");
      p.blocks.emplace_back(b, e);
      pos = e;
    }
    while (pos < length) {
      p.blocks.emplace_back(pos, pos + 1);
      ++pos;
    }
    return p;
  }

  void validate(int length) const {
    int pos = 0;
    for (auto [b, e] : blocks) {
      if (b != pos || e <= b) throw std::invalid_argument("span partition: invalid blocks");
      pos = e;
    }
    if (pos != length) throw std::invalid_argument("span partition: does not cover sequence");
  }
};

struct MaskedBatch {
  std::vector<int> x0;
  std::vector<int> xt;
  double t = 0.0;
  std::vector<int> mask_indices;
};

// Independent per-position masking at rate 1-alpha(t). Positions are either
// kept exactly or replaced by mask_id; no substitutions.
inline MaskedBatch forward_mask(std::span<const int> x0, double t, const MaskSchedule& sched,
                                int mask_id, Rng& rng) {
  if (!(t > 0.0 && t < 1.0)) throw std::invalid_argument("forward_mask: t outside (0,1)");
  double keep = sched.alpha(sched.clamp(t));
  MaskedBatch b;
  b.x0.assign(x0.begin(), x0.end());
  b.xt = b.x0;
  b.t = sched.clamp(t);
  for (size_t i = 0; i < b.xt.size(); ++i) {
    if (rng.uniform01() >= keep) {
      b.xt[i] = mask_id;
      b.mask_indices.push_back(static_cast<int>(i));
    }
  }
  return b;
}

// Coupled span masking: each block is wholly kept with probability alpha(t)
// or wholly masked; states are never mixed within a block.
inline MaskedBatch forward_mask_span(std::span<const int> x0, double t,
                                     const MaskSchedule& sched, const SpanPartition& part,
                                     int mask_id, Rng& rng) {
  if (!(t > 0.0 && t < 1.0)) throw std::invalid_argument("forward_mask_span: t outside (0,1)");
  part.validate(static_cast<int>(x0.size()));
  double keep = sched.alpha(sched.clamp(t));
  MaskedBatch b;
  b.x0.assign(x0.begin(), x0.end());
  b.xt = b.x0;
  b.t = sched.clamp(t);
  for (auto [begin, end] : part.blocks) {
    if (rng.uniform01() >= keep) {
      for (int i = begin; i < end; ++i) {
        b.xt[static_cast<size_t>(i)] = mask_id;
        b.mask_indices.push_back(i);
      }
    }
  }
  return b;
}

template <typename S>
struct LossResult {
  S mean_loss = 0;                 // nats per token
  std::vector<S> per_token_nll;    // unweighted, per scored position
  int loss_node = -1;              // scalar node on the tape
  double t = 0.0;                  // MDM only
  int n_masked = 0;                // MDM only
  int resamples = 0;               // MDM only
};

// Next-token NLL under teacher forcing. Tokens 1..L-1 are scored given their
// prefixes; the first token of each sequence is unscored. Mean is in nats per
// scored token.
template <typename S>
LossResult<S> ar_loss(Tape<S>& tape, const ModelConfig& cfg, const BoundParams<S>& params,
                      std::span<const int> tokens, int batch_size,
                      std::span<const int> position_ids = {}) {
  if (cfg.attention_mode != AttentionMode::kCausal)
    throw std::invalid_argument("ar_loss: requires a causal model");
  const int T = static_cast<int>(tokens.size()) / batch_size;
  if (T < 2) throw std::invalid_argument("ar_loss: seq_len must be >= 2");

  std::vector<int> pos;
  if (position_ids.empty()) {
    pos.resize(tokens.size());
    for (size_t i = 0; i < pos.size(); ++i) pos[i] = static_cast<int>(i % static_cast<size_t>(T));
  } else {
    if (position_ids.size() != tokens.size())
      throw std::invalid_argument("ar_loss: position_ids length mismatch");
    pos.assign(position_ids.begin(), position_ids.end());
  }
  int logits = transformer_forward(tape, cfg, params, tokens, pos, batch_size);

  // slot i predicts token i+1; the last slot of each sequence gets weight 0
  std::vector<int> targets(tokens.size());
  std::vector<S> weights(tokens.size());
  const int scored = batch_size * (T - 1);
  for (int b = 0; b < batch_size; ++b) {
    for (int i = 0; i < T; ++i) {
      size_t slot = static_cast<size_t>(b * T + i);
      if (i + 1 < T) {
        targets[slot] = tokens[slot + 1];
        weights[slot] = S(1) / S(scored);
      } else {
        targets[slot] = 0;
        weights[slot] = S(0);
      }
    }
  }
  LossResult<S> res;
  std::vector<S> nll;
  res.loss_node = tape.cross_entropy(logits, targets, weights, &nll);
  res.mean_loss = tape.val(res.loss_node).v[0];
  res.per_token_nll.reserve(static_cast<size_t>(scored));
  for (int b = 0; b < batch_size; ++b)
    for (int i = 0; i + 1 < T; ++i)
      res.per_token_nll.push_back(nll[static_cast<size_t>(b * T + i)]);
  return res;
}

// Single-sample Monte-Carlo estimate of the continuous-time NELBO: one
// t ~ U(0,1) (clamped) per batch, independent masking, weighted cross-entropy
// over masked positions, normalized per token. Batches with zero masked
// positions are resampled with a fresh t. When span_parts is given (one
// partition per sequence in the batch) whole blocks are kept or masked
// together instead of independent positions.
template <typename S>
LossResult<S> mdm_loss(Tape<S>& tape, const ModelConfig& cfg, const BoundParams<S>& params,
                       std::span<const int> x0, int batch_size, const MaskSchedule& sched,
                       Rng& rng, const std::vector<SpanPartition>* span_parts = nullptr) {
  if (cfg.attention_mode != AttentionMode::kBidirectional)
    throw std::invalid_argument("mdm_loss: requires a bidirectional model");
  const int T = static_cast<int>(x0.size()) / batch_size;
  if (span_parts && static_cast<int>(span_parts->size()) != batch_size)
    throw std::invalid_argument("mdm_loss: need one span partition per sequence");

  MaskedBatch mb;
  int resamples = 0;
  for (;;) {
    double t = sched.clamp(rng.uniform01());
    if (!span_parts) {
      mb = forward_mask(x0, t, sched, cfg.mask_id(), rng);
    } else {
      mb = MaskedBatch{};
      mb.x0.assign(x0.begin(), x0.end());
      mb.xt = mb.x0;
      mb.t = t;
      for (int b = 0; b < batch_size; ++b) {
        MaskedBatch one = forward_mask_span(x0.subspan(static_cast<size_t>(b) * T, T), t, sched,
                                            (*span_parts)[static_cast<size_t>(b)], cfg.mask_id(),
                                            rng);
        for (int i : one.mask_indices) {
          mb.xt[static_cast<size_t>(b * T + i)] = cfg.mask_id();
          mb.mask_indices.push_back(b * T + i);
        }
      }
    }
    if (!mb.mask_indices.empty()) break;
    ++resamples;
    if (resamples > 10000) throw std::runtime_error("mdm_loss: no masked positions after 10000 resamples");
  }

  std::vector<int> pos(x0.size());
  for (size_t i = 0; i < pos.size(); ++i) pos[i] = static_cast<int>(i % static_cast<size_t>(T));
  int logits = transformer_forward(tape, cfg, params, mb.xt, pos, batch_size);

  const S w = S(-sched.weight(mb.t));  // positive
  const S norm = S(1) / S(x0.size());
  std::vector<int> targets(x0.begin(), x0.end());
  std::vector<S> weights(x0.size(), S(0));
  for (int i : mb.mask_indices) weights[static_cast<size_t>(i)] = w * norm;

  LossResult<S> res;
  std::vector<S> nll;
  res.loss_node = tape.cross_entropy(logits, targets, weights, &nll);
  res.mean_loss = tape.val(res.loss_node).v[0];
  res.per_token_nll = std::move(nll);
  res.t = mb.t;
  res.n_masked = static_cast<int>(mb.mask_indices.size());
  res.resamples = resamples;
  return res;
}

// Reverse-process ancestral sampler on a uniform time grid t_k = 1 - k/T.
// Starts fully masked (prompt positions pre-filled, never re-masked); at each
// step t -> s a masked position unmasks with probability
// (alpha_s - alpha_t)/(1 - alpha_t) into a draw from softmax(f_theta), else
// stays masked with the complementary weight. The final step has alpha_s = 1,
// so the output contains no mask.
template <typename S>
std::vector<int> sample_reverse(const ModelConfig& cfg, const ParamStore<S>& params, int length,
                                int steps, const MaskSchedule& sched, Rng& rng,
                                std::span<const int> prompt = {},
                                std::vector<std::vector<int>>* trajectory = nullptr) {
  if (cfg.attention_mode != AttentionMode::kBidirectional)
    throw std::invalid_argument("sample_reverse: requires a bidirectional model");
  if (steps < 1) throw std::invalid_argument("sample_reverse: steps must be >= 1");
  if (static_cast<int>(prompt.size()) > length)
    throw std::invalid_argument("sample_reverse: prompt longer than length");

  std::vector<int> xt(static_cast<size_t>(length), cfg.mask_id());
  for (size_t i = 0; i < prompt.size(); ++i) xt[i] = prompt[i];
  std::vector<int> pos(static_cast<size_t>(length));
  std::iota(pos.begin(), pos.end(), 0);
  if (trajectory) trajectory->push_back(xt);

  for (int k = 0; k < steps; ++k) {
    double t = 1.0 - static_cast<double>(k) / steps;
    double s = 1.0 - static_cast<double>(k + 1) / steps;
    double at = sched.alpha_unclamped(t);
    double as = sched.alpha_unclamped(s);
    double p_unmask = (as - at) / (1.0 - at);

    bool any_masked = false;
    for (int v : xt) any_masked = any_masked || v == cfg.mask_id();
    if (!any_masked) break;

    Tensor<S> logits = forward_logits(cfg, params, xt, pos, 1);
    for (int i = 0; i < length; ++i) {
      if (xt[static_cast<size_t>(i)] != cfg.mask_id()) continue;  // unmasked stay fixed
      if (rng.uniform01() < p_unmask) {
        // categorical draw from softmax of the row
        S mx = logits.at(i, 0);
        for (int c = 1; c < cfg.vocab_size; ++c) mx = std::max(mx, logits.at(i, c));
        double z = 0.0;
        for (int c = 0; c < cfg.vocab_size; ++c)
          z += std::exp(static_cast<double>(logits.at(i, c) - mx));
        double u = rng.uniform01() * z;
        double accum = 0.0;
        int pick = cfg.vocab_size - 1;
        for (int c = 0; c < cfg.vocab_size; ++c) {
          accum += std::exp(static_cast<double>(logits.at(i, c) - mx));
          if (u < accum) {
            pick = c;
            break;
          }
        }
        xt[static_cast<size_t>(i)] = pick;
      }
    }
    if (trajectory) trajectory->push_back(xt);
  }
  return xt;
}

}  // namespace bytelab
