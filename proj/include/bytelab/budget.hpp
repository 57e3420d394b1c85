#pragma once

#include <cstdint>
#include <string>

#include "bytelab/model.hpp"

namespace bytelab {

// Analytic per-forward FLOPs, term by term. Attention is counted identically
// for causal and bidirectional modes (no causal discount); the bidirectional
// mask-symbol row enlarges only the embedding term. Normalization, RoPE and
// softmax exponentials are not counted, matching the matmul-level
// instrumentation of the engine.
struct FlopsBreakdown {
  int64_t embeddings = 0;
  int64_t qkv = 0;             // all layers
  int64_t attn_logits = 0;     // all layers
  int64_t attn_weighting = 0;  // all layers
  int64_t out_proj = 0;        // all layers
  int64_t mlp = 0;             // all layers, up + gate + down
  int64_t lm_head = 0;

  int64_t fwd_per_seq() const {
    return embeddings + qkv + attn_logits + attn_weighting + out_proj + mlp + lm_head;
  }
  int64_t train_per_seq() const { return 3 * fwd_per_seq(); }
};

FlopsBreakdown flops_forward(const ModelConfig& config, int64_t seq_len);

struct BudgetPlan {
  int64_t flops_budget = 0;
  int64_t seq_len = 0;
  int64_t batch_size = 0;
  int64_t steps = 0;
  int64_t data_budget_tokens = 0;  // steps * batch * seq_len
  int64_t flops_spent = 0;         // steps * batch * train_per_seq
};

// steps = floor(F / (B * train_per_seq)); errors if F does not cover one step.
BudgetPlan plan_budget(int64_t flops_budget, const ModelConfig& config, int64_t seq_len,
                       int64_t batch_size);

std::string breakdown_text(const FlopsBreakdown& b, const ModelConfig& config, int64_t seq_len);
std::string breakdown_csv(const FlopsBreakdown& b);

}  // namespace bytelab
