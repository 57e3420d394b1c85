#include <doctest.h>

#include <cmath>
#include <vector>

#include "bytelab/corpus.hpp"
#include "bytelab/metrics.hpp"
#include "bytelab/textgen.hpp"
#include "bytelab/trainer.hpp"

using namespace bytelab;

namespace {

ModelConfig byte_model(AttentionMode mode, int seq_len, int vocab = 256) {
  ModelConfig c;
  c.vocab_size = vocab;
  c.d_model = 16;
  c.n_layers = 1;
  c.n_heads = 2;
  c.d_head = 8;
  c.d_ff = 32;
  c.max_seq_len = seq_len;
  c.attention_mode = mode;
  c.seed = 2;
  return c;
}

template <typename S>
ParamStore<S> uniform_model(const ModelConfig& c) {
  ParamStore<S> p = init_params<S>(c);
  p.at("head") = Tensor<S>(c.d_model, c.vocab_size);  // zero head -> uniform output
  return p;
}

}  // namespace

TEST_CASE("roc auc exact cases") {
  std::vector<double> e1 = {0.1, 0.2, 0.8, 0.9};
  std::vector<int> l1 = {0, 0, 1, 1};
  CHECK(boundary_auc(e1, l1).roc_auc == 1.0);

  std::vector<double> e2 = {0.5, 0.5, 0.5, 0.5};
  CHECK(boundary_auc(e2, l1).roc_auc == 0.5);  // all tied -> midranks give 1/2

  std::vector<double> e3 = {1.0, 2.0, 3.0, 4.0};
  std::vector<int> l3 = {0, 1, 0, 1};
  CHECK(boundary_auc(e3, l3).roc_auc == 0.75);

  CHECK_THROWS(boundary_auc(e1, std::vector<int>{1, 1, 1, 1}));
  CHECK_THROWS(boundary_auc(std::vector<double>{1.0}, l1));
}

TEST_CASE("uniform byte model scores exactly 8 bits per byte") {
  ModelConfig c = byte_model(AttentionMode::kCausal, 16);
  ParamStore<double> p = uniform_model<double>(c);
  PackedDataset ds = pack(synthetic_english(2000, 1), Tokenizer::byte_tokenizer(), 16);
  EvalReport rep = bpb_ar(c, p, ds);
  CHECK(rep.bpb == doctest::Approx(8.0).epsilon(1e-12));
  CHECK(rep.bytes_total == rep.tokens_scored);
}

TEST_CASE("uniform BPE model scores log2(V)/r bits per byte") {
  ByteString text = synthetic_english(30000, 2);
  Tokenizer tok = train_bpe(text, 400);
  PackedDataset ds = pack(text, tok, 16);
  ModelConfig c = byte_model(AttentionMode::kCausal, 16, 400);
  ParamStore<double> p = uniform_model<double>(c);
  EvalReport rep = bpb_ar(c, p, ds, &tok);
  // r measured over exactly the scored tokens
  double r = static_cast<double>(rep.bytes_total) / static_cast<double>(rep.tokens_scored);
  CHECK(rep.bpb == doctest::Approx(std::log2(400.0) / r).epsilon(1e-12));
  CHECK(rep.bpb < 8.0);
}

TEST_CASE("mdm uniform model nelbo is ln V per token (linear schedule)") {
  ModelConfig c = byte_model(AttentionMode::kBidirectional, 16);
  ParamStore<double> p = uniform_model<double>(c);
  PackedDataset ds = pack(synthetic_english(600, 3), Tokenizer::byte_tokenizer(), 16);
  EvalReport rep = bpb_mdm(c, p, ds, linear_schedule(), 32, 9);
  // per masked token the integrand is exactly ln 256; quadrature noise comes
  // only from the binomial mask counts
  CHECK(rep.bpb == doctest::Approx(8.0).epsilon(0.05));
}

TEST_CASE("AR chain rule factorization matches teacher forcing bit-for-bit") {
  ModelConfig c = byte_model(AttentionMode::kCausal, 16);
  ParamStore<double> p = init_params<double>(c);
  PackedDataset ds = pack(synthetic_english(400, 4), Tokenizer::byte_tokenizer(), 16);
  std::vector<int> seq(ds.sequence(0), ds.sequence(0) + 16);

  Tape<double> tape(false);
  BoundParams<double> bound = bind_params(tape, p, false);
  LossResult<double> res = ar_loss(tape, c, bound, seq, 1);
  double sum_nll = 0.0;
  for (size_t i = 4; i < 15; ++i) sum_nll += res.per_token_nll[i];  // tokens 5..15

  std::span<const int> all(seq);
  double ll = chain_rule_loglik(c, p, all.subspan(0, 5), all.subspan(5));
  CHECK(ll == -sum_nll);  // same forward, same reductions

  // whole-sequence chaining equals the summed teacher-forced NLL
  double total = 0.0;
  for (double x : res.per_token_nll) total += x;
  CHECK(chain_rule_loglik(c, p, all.subspan(0, 1), all.subspan(1)) == -total);
}

TEST_CASE("mdm chain rule: uniform model gives ln V per continuation token") {
  ModelConfig c = byte_model(AttentionMode::kBidirectional, 16);
  ParamStore<double> p = uniform_model<double>(c);
  std::vector<int> prompt = {10, 20, 30};
  std::vector<int> cont = {40, 50};
  double ll = chain_rule_loglik(c, p, prompt, cont);
  CHECK(ll == doctest::Approx(-2.0 * std::log(256.0)).epsilon(1e-12));
  CHECK_NOTHROW(chain_rule_loglik(c, p, {}, cont));  // masked models condition on nothing fine
  CHECK_THROWS(chain_rule_loglik(c, p, prompt, {}));
}

TEST_CASE("entropy map: first byte ln V, uniform model everywhere ln V") {
  ModelConfig c = byte_model(AttentionMode::kCausal, 16);
  ParamStore<double> p = uniform_model<double>(c);
  ByteString text = synthetic_english(40, 5);
  std::vector<double> ent = entropy_map(c, p, text);
  REQUIRE(ent.size() == text.size());
  CHECK(ent[0] == std::log(256.0));
  CHECK(ent[16] == std::log(256.0));  // window restart
  for (double h : ent) CHECK(h == doctest::Approx(std::log(256.0)).epsilon(1e-12));

  ParamStore<double> trained = init_params<double>(c);
  std::vector<double> ent2 = entropy_map(c, trained, text);
  for (double h : ent2) {
    CHECK(h > 0.0);
    CHECK(h <= std::log(256.0) + 1e-9);
  }
}

TEST_CASE("trained model beats uniform on its training distribution") {
  ModelConfig c = byte_model(AttentionMode::kCausal, 32);
  PackedDataset tr = pack(synthetic_english(6000, 6), Tokenizer::byte_tokenizer(), 32);
  PackedDataset va = pack(synthetic_english(1500, 7), Tokenizer::byte_tokenizer(), 32);
  TrainConfig tc;
  tc.total_steps = 40;
  tc.batch_size = 8;
  TrainResult<float> res = train<float>(c, tr, va, tc);
  EvalReport rep = bpb_ar(c, res.params, va);
  CHECK(rep.bpb < 6.0);
}
