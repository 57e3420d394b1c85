#include "bytelab/budget.hpp"

#include <sstream>
#include <stdexcept>

namespace bytelab {

FlopsBreakdown flops_forward(const ModelConfig& config, int64_t seq_len) {
  config.validate();
  const int64_t L = seq_len;
  const int64_t V_in = config.vocab_in();
  const int64_t V_out = config.vocab_size;
  const int64_t d = config.d_model;
  const int64_t hd = static_cast<int64_t>(config.n_heads) * config.d_head;
  const int64_t ff = config.d_ff;
  const int64_t layers = config.n_layers;

  FlopsBreakdown b;
  b.embeddings = 2 * L * V_in * d;
  b.qkv = layers * 3 * 2 * L * d * hd;
  b.attn_logits = layers * 2 * L * L * hd;
  b.attn_weighting = layers * 2 * L * L * hd;
  b.out_proj = layers * 2 * L * hd * d;
  b.mlp = layers * (2 * (2 * L * d * ff) + 2 * L * ff * d);
  b.lm_head = 2 * L * d * V_out;
  return b;
}

BudgetPlan plan_budget(int64_t flops_budget, const ModelConfig& config, int64_t seq_len,
                       int64_t batch_size) {
  if (batch_size < 1) throw std::invalid_argument("plan_budget: batch_size must be >= 1");
  const int64_t per_step = batch_size * flops_forward(config, seq_len).train_per_seq();
  if (flops_budget < per_step)
    throw std::invalid_argument("plan_budget: budget below one training step");
  BudgetPlan p;
  p.flops_budget = flops_budget;
  p.seq_len = seq_len;
  p.batch_size = batch_size;
  p.steps = flops_budget / per_step;
  p.data_budget_tokens = p.steps * batch_size * seq_len;
  p.flops_spent = p.steps * per_step;
  return p;
}

std::string breakdown_text(const FlopsBreakdown& b, const ModelConfig& config, int64_t seq_len) {
  std::ostringstream out;
  auto line = [&out](const char* name, int64_t v) {
    out << "  " << name;
    for (size_t i = std::string(name).size(); i < 16; ++i) out << ' ';
    out << v << "\n";
  };
  out << "forward FLOPs (L=" << seq_len << ", layers=" << config.n_layers << ")\n";
  line("embeddings", b.embeddings);
  line("qkv", b.qkv);
  line("attn_logits", b.attn_logits);
  line("attn_weighting", b.attn_weighting);
  line("out_proj", b.out_proj);
  line("mlp", b.mlp);
  line("lm_head", b.lm_head);
  line("forward_total", b.fwd_per_seq());
  line("train_total", b.train_per_seq());
  return out.str();
}

std::string breakdown_csv(const FlopsBreakdown& b) {
  std::ostringstream out;
  out << "term,flops\n"
      << "embeddings," << b.embeddings << "\n"
      << "qkv," << b.qkv << "\n"
      << "attn_logits," << b.attn_logits << "\n"
      << "attn_weighting," << b.attn_weighting << "\n"
      << "out_proj," << b.out_proj << "\n"
      << "mlp," << b.mlp << "\n"
      << "lm_head," << b.lm_head << "\n"
      << "forward_total," << b.fwd_per_seq() << "\n"
      << "train_total," << b.train_per_seq() << "\n";
  return out.str();
}

}  // namespace bytelab
