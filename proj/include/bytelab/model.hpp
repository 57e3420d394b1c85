#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "bytelab/rng.hpp"
#include "bytelab/tape.hpp"
#include "bytelab/tensor.hpp"

#include <nlohmann/json.hpp>

namespace bytelab {

enum class AttentionMode { kCausal, kBidirectional };

struct ModelConfig {
  int vocab_size = 256;  // output classes; the MDM mask symbol is id vocab_size
  int d_model = 64;
  int n_layers = 2;
  int n_heads = 2;
  int d_head = 32;
  int d_ff = 192;
  int max_seq_len = 128;
  AttentionMode attention_mode = AttentionMode::kCausal;
  uint64_t seed = 0;

  int vocab_in() const {
    return vocab_size + (attention_mode == AttentionMode::kBidirectional ? 1 : 0);
  }
  int mask_id() const { return vocab_size; }

  void validate() const {
    if (vocab_size <= 0 || d_model <= 0 || n_layers < 0 || n_heads <= 0 || d_head <= 0 ||
        d_ff <= 0 || max_seq_len < 1)
      throw std::invalid_argument("model config: dimensions must be positive");
    if (n_heads * d_head != d_model)
      throw std::invalid_argument("model config: n_heads * d_head must equal d_model");
  }
};

struct ParamCount {
  int64_t non_embedding = 0;
  int64_t total = 0;
};

// Exact parameter tally. Non-embedding excludes the input embedding table and
// the output head matrix.
inline ParamCount param_count(const ModelConfig& c) {
  c.validate();
  const int64_t d = c.d_model, ff = c.d_ff;
  int64_t per_layer = 4 * d * d   // wq, wk, wv, wo
                      + 3 * d * ff  // gate, up, down
                      + 2 * d;      // two norm gains
  ParamCount pc;
  pc.non_embedding = c.n_layers * per_layer + d;  // + final norm gain
  pc.total = pc.non_embedding + static_cast<int64_t>(c.vocab_in()) * d +
             d * static_cast<int64_t>(c.vocab_size);
  return pc;
}

// Named parameter store. Iteration order (the map order) is the canonical
// order for checkpoints, gradient flattening and optimizer state.
template <typename S>
struct ParamStore {
  std::map<std::string, Tensor<S>> params;

  Tensor<S>& at(const std::string& k) { return params.at(k); }
  const Tensor<S>& at(const std::string& k) const { return params.at(k); }

  int64_t count() const {
    int64_t n = 0;
    for (const auto& [k, t] : params) n += t.size();
    return n;
  }
};

template <typename S>
ParamStore<S> init_params(const ModelConfig& c) {
  c.validate();
  ParamStore<S> p;
  Rng rng(derive_seed(c.seed, "init"));
  const S std_base = S(0.02);
  const S std_resid = S(0.02 / std::sqrt(2.0 * std::max(1, c.n_layers)));
  auto normal_init = [&](int64_t r, int64_t cdim, S sd) {
    Tensor<S> t(r, cdim);
    for (auto& x : t.v) x = S(rng.normal()) * sd;
    return t;
  };
  p.params["embed"] = normal_init(c.vocab_in(), c.d_model, std_base);
  for (int l = 0; l < c.n_layers; ++l) {
    std::string pre = "layer" + std::to_string(l) + ".";
    p.params[pre + "attn_norm"] = Tensor<S>::full(1, c.d_model, S(1));
    p.params[pre + "wq"] = normal_init(c.d_model, c.d_model, std_base);
    p.params[pre + "wk"] = normal_init(c.d_model, c.d_model, std_base);
    p.params[pre + "wv"] = normal_init(c.d_model, c.d_model, std_base);
    p.params[pre + "wo"] = normal_init(c.d_model, c.d_model, std_resid);
    p.params[pre + "mlp_norm"] = Tensor<S>::full(1, c.d_model, S(1));
    p.params[pre + "wg"] = normal_init(c.d_model, c.d_ff, std_base);
    p.params[pre + "wu"] = normal_init(c.d_model, c.d_ff, std_base);
    p.params[pre + "wd"] = normal_init(c.d_ff, c.d_model, std_resid);
  }
  p.params["final_norm"] = Tensor<S>::full(1, c.d_model, S(1));
  p.params["head"] = normal_init(c.d_model, c.vocab_size, std_base);
  return p;
}

// Leaf ids of every parameter on a tape, in canonical order.
template <typename S>
struct BoundParams {
  std::map<std::string, int> ids;
  int at(const std::string& k) const { return ids.at(k); }
};

template <typename S>
BoundParams<S> bind_params(Tape<S>& tape, const ParamStore<S>& p, bool needs_grad) {
  BoundParams<S> b;
  for (const auto& [k, t] : p.params) b.ids[k] = tape.leaf(t, needs_grad);
  return b;
}

// Transformer forward over a flattened batch. tokens and position_ids hold
// batch_size * seq_len entries, sequence-major. Returns the logits node id,
// shape [batch*seq, vocab_size].
//
// Causality is by input slot order: in causal mode, logits at slot i of a
// sequence depend only on slots 0..i regardless of the position_id values.
// RoPE rotation angles are driven by position_ids alone.
template <typename S>
int transformer_forward(Tape<S>& tape, const ModelConfig& c, const BoundParams<S>& p,
                        std::span<const int> tokens, std::span<const int> position_ids,
                        int batch_size) {
  c.validate();
  if (tokens.size() != position_ids.size())
    throw std::invalid_argument("forward: tokens/position_ids length mismatch");
  if (batch_size < 1 || tokens.size() % static_cast<size_t>(batch_size) != 0)
    throw std::invalid_argument("forward: batch size does not divide token count");
  const int T = static_cast<int>(tokens.size()) / batch_size;
  if (T > c.max_seq_len) throw std::invalid_argument("forward: sequence exceeds max_seq_len");
  for (int t : tokens)
    if (t < 0 || t >= c.vocab_in()) throw std::invalid_argument("forward: token id out of range");

  const bool causal = c.attention_mode == AttentionMode::kCausal;
  const S att_scale = S(1) / std::sqrt(S(c.d_head));

  int x = tape.gather_rows(p.at("embed"), tokens, FlopCategory::kEmbeddings);
  for (int l = 0; l < c.n_layers; ++l) {
    std::string pre = "layer" + std::to_string(l) + ".";
    int h = tape.rmsnorm(x, p.at(pre + "attn_norm"));
    int q = tape.matmul(h, p.at(pre + "wq"), FlopCategory::kQkvProj);
    int k = tape.matmul(h, p.at(pre + "wk"), FlopCategory::kQkvProj);
    int vv = tape.matmul(h, p.at(pre + "wv"), FlopCategory::kQkvProj);
    q = tape.rope(q, position_ids, c.d_head);
    k = tape.rope(k, position_ids, c.d_head);
    std::vector<int> seq_outs;
    for (int b = 0; b < batch_size; ++b) {
      int64_t r0 = static_cast<int64_t>(b) * T, r1 = r0 + T;
      int qb = tape.slice_rows(q, r0, r1);
      int kb = tape.slice_rows(k, r0, r1);
      int vb = tape.slice_rows(vv, r0, r1);
      std::vector<int> head_outs;
      for (int hh = 0; hh < c.n_heads; ++hh) {
        int64_t c0 = static_cast<int64_t>(hh) * c.d_head, c1 = c0 + c.d_head;
        int qh = tape.slice_cols(qb, c0, c1);
        int kh = tape.slice_cols(kb, c0, c1);
        int vh = tape.slice_cols(vb, c0, c1);
        int s = tape.matmul_nt(qh, kh, FlopCategory::kAttnLogits);
        s = tape.scale(s, att_scale);
        int pw = tape.softmax_rows(s, causal);
        head_outs.push_back(tape.matmul(pw, vh, FlopCategory::kAttnWeighting));
      }
      seq_outs.push_back(tape.concat_cols(head_outs));
    }
    int att = batch_size == 1 ? seq_outs[0] : tape.concat_rows(seq_outs);
    att = tape.matmul(att, p.at(pre + "wo"), FlopCategory::kOutProj);
    x = tape.add(x, att);

    int m = tape.rmsnorm(x, p.at(pre + "mlp_norm"));
    int g = tape.silu(tape.matmul(m, p.at(pre + "wg"), FlopCategory::kMlp));
    int u = tape.matmul(m, p.at(pre + "wu"), FlopCategory::kMlp);
    int dn = tape.matmul(tape.mul(g, u), p.at(pre + "wd"), FlopCategory::kMlp);
    x = tape.add(x, dn);
  }
  int fin = tape.rmsnorm(x, p.at("final_norm"));
  return tape.matmul(fin, p.at("head"), FlopCategory::kLmHead);
}

// Convenience single-pass forward that owns its tape; returns plain logits.
template <typename S>
Tensor<S> forward_logits(const ModelConfig& c, const ParamStore<S>& params,
                         std::span<const int> tokens, std::span<const int> position_ids,
                         int batch_size = 1) {
  Tape<S> tape(/*recording=*/false);
  auto bound = bind_params(tape, params, /*needs_grad=*/false);
  int id = transformer_forward(tape, c, bound, tokens, position_ids, batch_size);
  return tape.val(id);
}

// ---- checkpoint io: JSON manifest + flat little-endian payload ----

template <typename S>
void save_checkpoint(const std::string& path_prefix, const ModelConfig& c,
                     const ParamStore<S>& p, int64_t step,
                     const std::map<std::string, Tensor<S>>* opt_state = nullptr) {
  nlohmann::json manifest;
  manifest["format"] = "bytelab-checkpoint-v1";
  manifest["step"] = step;
  manifest["precision"] = sizeof(S) == 4 ? "f32" : "f64";
  manifest["config"] = {
      {"vocab_size", c.vocab_size}, {"d_model", c.d_model},     {"n_layers", c.n_layers},
      {"n_heads", c.n_heads},       {"d_head", c.d_head},       {"d_ff", c.d_ff},
      {"max_seq_len", c.max_seq_len},
      {"attention_mode", c.attention_mode == AttentionMode::kCausal ? "causal" : "bidirectional"},
      {"seed", c.seed}};
  nlohmann::json tensors = nlohmann::json::array();
  for (const auto& [k, t] : p.params)
    tensors.push_back({{"name", k}, {"rows", t.rows}, {"cols", t.cols}});
  manifest["tensors"] = tensors;
  nlohmann::json opt = nlohmann::json::array();
  if (opt_state) {
    for (const auto& [k, t] : *opt_state)
      opt.push_back({{"name", k}, {"rows", t.rows}, {"cols", t.cols}});
  }
  manifest["optimizer_tensors"] = opt;

  // write-temp-then-rename so a crash never leaves a torn checkpoint
  auto write_atomic = [](const std::string& path, const std::string& data) {
    std::string tmp = path + ".tmp";
    {
      std::ofstream f(tmp, std::ios::binary);
      if (!f) throw std::runtime_error("cannot write " + tmp);
      f.write(data.data(), static_cast<std::streamsize>(data.size()));
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0)
      throw std::runtime_error("cannot rename " + tmp);
  };

  std::string payload;
  auto append = [&payload](const Tensor<S>& t) {
    size_t off = payload.size();
    payload.resize(off + t.v.size() * sizeof(S));
    std::memcpy(payload.data() + off, t.v.data(), t.v.size() * sizeof(S));
  };
  for (const auto& [k, t] : p.params) append(t);
  if (opt_state)
    for (const auto& [k, t] : *opt_state) append(t);

  write_atomic(path_prefix + ".json", manifest.dump(2) + "\n");
  write_atomic(path_prefix + ".bin", payload);
}

template <typename S>
struct Checkpoint {
  ModelConfig config;
  ParamStore<S> params;
  int64_t step = 0;
  std::map<std::string, Tensor<S>> optimizer_state;
};

template <typename S>
Checkpoint<S> load_checkpoint(const std::string& path_prefix) {
  std::ifstream mf(path_prefix + ".json");
  if (!mf) throw std::runtime_error("cannot open " + path_prefix + ".json");
  nlohmann::json manifest = nlohmann::json::parse(mf);
  if (manifest.at("format") != "bytelab-checkpoint-v1")
    throw std::runtime_error("unknown checkpoint format");
  std::string prec = manifest.at("precision");
  if ((sizeof(S) == 4) != (prec == "f32"))
    throw std::runtime_error("checkpoint precision mismatch: " + prec);

  Checkpoint<S> ck;
  const auto& jc = manifest.at("config");
  ck.config.vocab_size = jc.at("vocab_size");
  ck.config.d_model = jc.at("d_model");
  ck.config.n_layers = jc.at("n_layers");
  ck.config.n_heads = jc.at("n_heads");
  ck.config.d_head = jc.at("d_head");
  ck.config.d_ff = jc.at("d_ff");
  ck.config.max_seq_len = jc.at("max_seq_len");
  ck.config.attention_mode =
      jc.at("attention_mode") == "causal" ? AttentionMode::kCausal : AttentionMode::kBidirectional;
  ck.config.seed = jc.at("seed");
  ck.step = manifest.at("step");

  std::ifstream pf(path_prefix + ".bin", std::ios::binary);
  if (!pf) throw std::runtime_error("cannot open " + path_prefix + ".bin");
  auto read_tensor = [&pf, &path_prefix](int64_t r, int64_t c) {
    Tensor<S> t(r, c);
    pf.read(reinterpret_cast<char*>(t.v.data()),
            static_cast<std::streamsize>(t.v.size() * sizeof(S)));
    if (!pf) throw std::runtime_error("truncated checkpoint payload " + path_prefix);
    return t;
  };
  for (const auto& jt : manifest.at("tensors"))
    ck.params.params[jt.at("name")] = read_tensor(jt.at("rows"), jt.at("cols"));
  for (const auto& jt : manifest.at("optimizer_tensors"))
    ck.optimizer_state[jt.at("name")] = read_tensor(jt.at("rows"), jt.at("cols"));
  return ck;
}

}  // namespace bytelab
