// bytelab: byte- and BPE-level language modeling experiments from one binary.

#include <fcntl.h>
#include <unistd.h>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "bytelab/budget.hpp"
#include "bytelab/config.hpp"
#include "bytelab/corpus.hpp"
#include "bytelab/corruption.hpp"
#include "bytelab/metrics.hpp"
#include "bytelab/model.hpp"
#include "bytelab/objectives.hpp"
#include "bytelab/scaling.hpp"
#include "bytelab/textgen.hpp"
#include "bytelab/tokenizer.hpp"
#include "bytelab/trainer.hpp"

namespace fs = std::filesystem;
using namespace bytelab;

namespace {

// Exclusive ownership of a run directory for the process lifetime.
class DirLock {
 public:
  explicit DirLock(const fs::path& dir) : path_(dir / "lock") {
    int fd = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
    if (fd < 0) throw std::runtime_error("run directory is locked: " + path_.string());
    std::string pid = std::to_string(::getpid()) + "\n";
    (void)!::write(fd, pid.data(), pid.size());
    ::close(fd);
  }
  ~DirLock() { std::error_code ec; fs::remove(path_, ec); }
  DirLock(const DirLock&) = delete;
  DirLock& operator=(const DirLock&) = delete;

 private:
  fs::path path_;
};

Tokenizer load_tokenizer_arg(const std::string& arg) {
  if (arg == "byte") return Tokenizer::byte_tokenizer();
  return Tokenizer::load(arg);
}

std::string hex_byte(unsigned char b) {
  static const char* d = "0123456789abcdef";
  return {d[b >> 4], d[b & 15]};
}

struct EvalInputs {
  Checkpoint<float> ck;
  Tokenizer tok;
  PackedDataset val;
};

EvalInputs load_eval_inputs(const std::string& checkpoint, const std::string& tokenizer_arg,
                            const std::string& corpus_path, double split, int seq_len) {
  EvalInputs in{load_checkpoint<float>(checkpoint), load_tokenizer_arg(tokenizer_arg), {}};
  if (in.tok.vocab_size() != in.ck.config.vocab_size)
    throw std::runtime_error("tokenizer vocab does not match checkpoint");
  RawCorpus corpus = ingest(corpus_path, split, 0);
  if (seq_len <= 0) seq_len = in.ck.config.max_seq_len;
  in.val = pack(corpus.validation_bytes(), in.tok, seq_len);
  return in;
}

int run(int argc, char** argv) {
  CLI::App app{"byte-level vs BPE language modeling workbench"};
  app.require_subcommand(1);

  // ---- synth-text ----
  auto* c_synth = app.add_subcommand("synth-text", "write a deterministic synthetic corpus");
  int64_t synth_bytes = 1 << 20;
  uint64_t synth_seed = 0;
  std::string synth_out;
  c_synth->add_option("--bytes", synth_bytes, "output size in bytes")->check(CLI::PositiveNumber);
  c_synth->add_option("--seed", synth_seed, "generator seed");
  c_synth->add_option("--out", synth_out, "output file")->required();

  // ---- tokenize-train ----
  auto* c_tok = app.add_subcommand("tokenize-train", "train a byte-level BPE tokenizer");
  std::string tok_corpus, tok_out;
  int tok_vocab = 512;
  double tok_split = 0.1;
  int64_t tok_max_bytes = 0;
  c_tok->add_option("--corpus", tok_corpus, "corpus file or shard directory")->required();
  c_tok->add_option("--vocab", tok_vocab, "target vocabulary size (> 256)")->required();
  c_tok->add_option("--split", tok_split, "validation fraction excluded from training");
  c_tok->add_option("--max-bytes", tok_max_bytes, "cap on training bytes (0: no cap)");
  c_tok->add_option("--out", tok_out, "tokenizer output file")->required();

  // ---- pack ----
  auto* c_pack = app.add_subcommand("pack", "tokenize and pack a corpus, write its manifest");
  std::string pack_corpus, pack_tok = "byte", pack_out;
  int pack_seq = 128;
  double pack_split = 0.1;
  c_pack->add_option("--corpus", pack_corpus)->required();
  c_pack->add_option("--tokenizer", pack_tok, "'byte' or a tokenizer file");
  c_pack->add_option("--seq-len", pack_seq)->check(CLI::Range(2, 1 << 20));
  c_pack->add_option("--split", pack_split);
  c_pack->add_option("--out", pack_out, "manifest output file (default: stdout)");

  // ---- train ----
  auto* c_train = app.add_subcommand("train", "run one training job from a config file");
  std::string train_cfg_path, train_out_dir = "run";
  std::vector<std::string> train_sets;
  bool print_config = false;
  std::string train_perm = "identity";
  int train_perm_k = 8;
  uint64_t train_perm_seed = 0;
  c_train->add_option("--config", train_cfg_path, "run config file");
  c_train->add_option("--set", train_sets, "override, section.key=value (repeatable)");
  c_train->add_option("--out-dir", train_out_dir, "run directory (created, locked)");
  c_train->add_flag("--print-config", print_config, "print the resolved config and exit");
  c_train->add_option("--permutation", train_perm,
                      "train on permuted sequences: identity|global|inter_block|intra_block");
  c_train->add_option("--permutation-k", train_perm_k, "block size for block permutations");
  c_train->add_option("--permutation-seed", train_perm_seed);

  // ---- eval-bpb ----
  auto* c_eval = app.add_subcommand("eval-bpb", "bits per byte of a checkpoint on held-out text");
  std::string eval_ck, eval_corpus, eval_tok = "byte";
  double eval_split = 0.1;
  int eval_seq = 0, eval_strata = 64;
  int64_t eval_max_seqs = -1;
  uint64_t eval_seed = 0;
  std::string eval_sched = "linear";
  c_eval->add_option("--checkpoint", eval_ck, "checkpoint path prefix")->required();
  c_eval->add_option("--corpus", eval_corpus)->required();
  c_eval->add_option("--tokenizer", eval_tok, "'byte' or a tokenizer file");
  c_eval->add_option("--split", eval_split);
  c_eval->add_option("--seq-len", eval_seq, "0: checkpoint max_seq_len");
  c_eval->add_option("--strata", eval_strata, "time-quadrature bins (masked model)");
  c_eval->add_option("--max-sequences", eval_max_seqs);
  c_eval->add_option("--seed", eval_seed);
  c_eval->add_option("--schedule", eval_sched)->check(CLI::IsMember({"linear", "cosine"}));

  // ---- sample ----
  auto* c_sample = app.add_subcommand("sample", "ancestral sampling from a masked model");
  std::string sample_ck, sample_tok = "byte", sample_out, sample_sched = "linear";
  int sample_len = 128, sample_steps = 64;
  uint64_t sample_seed = 0;
  c_sample->add_option("--checkpoint", sample_ck)->required();
  c_sample->add_option("--tokenizer", sample_tok);
  c_sample->add_option("--length", sample_len)->check(CLI::PositiveNumber);
  c_sample->add_option("--steps", sample_steps)->check(CLI::PositiveNumber);
  c_sample->add_option("--seed", sample_seed);
  c_sample->add_option("--schedule", sample_sched)->check(CLI::IsMember({"linear", "cosine"}));
  c_sample->add_option("--out", sample_out, "output file (default: stdout)");

  // ---- entropy-map ----
  auto* c_ent = app.add_subcommand("entropy-map",
                                   "per-byte predictive entropy with BPE boundary labels");
  std::string ent_ck, ent_text, ent_tok, ent_out;
  c_ent->add_option("--checkpoint", ent_ck, "byte-level causal checkpoint")->required();
  c_ent->add_option("--text", ent_text, "input text file")->required();
  c_ent->add_option("--tokenizer", ent_tok, "BPE tokenizer for boundary labels")->required();
  c_ent->add_option("--out", ent_out, "CSV output file (default: stdout)");

  // ---- boundary-auc ----
  auto* c_auc = app.add_subcommand("boundary-auc",
                                   "ROC AUC of entropy as a token-boundary detector");
  std::string auc_ck, auc_text, auc_tok;
  c_auc->add_option("--checkpoint", auc_ck)->required();
  c_auc->add_option("--text", auc_text)->required();
  c_auc->add_option("--tokenizer", auc_tok)->required();

  // ---- flops ----
  auto* c_flops = app.add_subcommand("flops", "analytic per-forward FLOPs breakdown");
  std::string flops_cfg;
  int flops_seq = 0;
  c_flops->add_option("--config", flops_cfg, "run config file")->required();
  c_flops->add_option("--seq-len", flops_seq, "0: config seq_len");

  // ---- plan-budget ----
  auto* c_plan = app.add_subcommand("plan-budget", "steps and tokens for a FLOPs budget");
  std::string plan_cfg;
  double plan_flops = 0.0;
  c_plan->add_option("--config", plan_cfg)->required();
  c_plan->add_option("--flops", plan_flops, "training FLOPs budget")->required();

  // ---- fit-scaling ----
  auto* c_fit = app.add_subcommand("fit-scaling",
                                   "isoFLOPs parabolas, power laws, ratio and parity");
  std::string fit_points;
  c_fit->add_option("--points", fit_points, "CSV objective,representation,F,N,bpb")->required();

  // ---- corrupt ----
  auto* c_corrupt = app.add_subcommand("corrupt", "permute a file and report regularity loss");
  std::string cor_in, cor_out, cor_strategy = "global", cor_tok;
  int cor_len = 2048, cor_k = 8;
  uint64_t cor_seed = 0;
  c_corrupt->add_option("--input", cor_in)->required();
  c_corrupt->add_option("--strategy", cor_strategy)
      ->check(CLI::IsMember({"identity", "global", "inter_block", "intra_block", "global_bpe"}));
  c_corrupt->add_option("--window", cor_len, "permutation window length")->check(CLI::PositiveNumber);
  c_corrupt->add_option("--k", cor_k, "block size")->check(CLI::PositiveNumber);
  c_corrupt->add_option("--seed", cor_seed);
  c_corrupt->add_option("--tokenizer", cor_tok, "BPE tokenizer (global_bpe only)");
  c_corrupt->add_option("--out", cor_out, "permuted output file");

  // ---- regularity ----
  auto* c_reg = app.add_subcommand("regularity", "compressibility-loss sweep CSV");
  std::string reg_in, reg_tok, reg_out;
  int reg_len = 2048;
  std::vector<std::string> reg_strategies = {"global", "intra_block", "inter_block", "global_bpe"};
  std::vector<int> reg_ks = {4, 8};
  std::vector<uint64_t> reg_seeds = {0, 1, 2, 3, 4};
  c_reg->add_option("--input", reg_in)->required();
  c_reg->add_option("--window", reg_len)->check(CLI::PositiveNumber);
  c_reg->add_option("--strategies", reg_strategies);
  c_reg->add_option("--k-values", reg_ks);
  c_reg->add_option("--seeds", reg_seeds);
  c_reg->add_option("--tokenizer", reg_tok, "BPE tokenizer (for global_bpe rows)");
  c_reg->add_option("--out", reg_out, "CSV output (default: stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;  // 0 covers --help
  }

  auto emit = [](const std::string& out_path, const std::string& text) {
    if (out_path.empty())
      std::cout << text;
    else
      write_text_file(out_path, text);
  };

  if (c_synth->parsed()) {
    write_text_file(synth_out, synthetic_english(static_cast<size_t>(synth_bytes), synth_seed));
    return 0;
  }

  if (c_tok->parsed()) {
    RawCorpus corpus = ingest(tok_corpus, tok_split, 0);
    ByteString text = corpus.train_bytes();
    if (tok_max_bytes > 0 && static_cast<int64_t>(text.size()) > tok_max_bytes)
      text.resize(static_cast<size_t>(tok_max_bytes));
    bool stopped = false;
    Tokenizer tok = train_bpe(text, tok_vocab, &stopped);
    if (stopped)
      std::cerr << "warning: no pair repeats; stopped at vocab " << tok.vocab_size() << "\n";
    tok.save(tok_out);
    std::cout << "vocab " << tok.vocab_size() << " fingerprint " << tok.fingerprint() << "\n";
    return 0;
  }

  if (c_pack->parsed()) {
    RawCorpus corpus = ingest(pack_corpus, pack_split, 0);
    Tokenizer tok = load_tokenizer_arg(pack_tok);
    PackedDataset tr = pack(corpus.train_bytes(), tok, pack_seq);
    PackedDataset va = pack(corpus.validation_bytes(), tok, pack_seq);
    emit(pack_out, dataset_manifest(corpus, tok, tr, va));
    return 0;
  }

  if (c_train->parsed()) {
    IniMap ini = train_cfg_path.empty() ? run_config_to_ini(default_run_config())
                                        : parse_ini(read_text_file(train_cfg_path));
    for (const std::string& s : train_sets) apply_override(ini, s);
    RunConfig rc = run_config_from_ini(ini);
    if (print_config) {
      std::cout << serialize_ini(run_config_to_ini(rc));
      return 0;
    }
    if (rc.corpus_path.empty()) throw std::runtime_error("config: data.corpus_path is required");

    fs::create_directories(train_out_dir);
    DirLock lock{fs::path(train_out_dir)};

    RawCorpus corpus = ingest(rc.corpus_path, rc.split_fraction, 0);
    Tokenizer tok = Tokenizer::byte_tokenizer();
    if (rc.representation == "bpe") {
      bool stopped = false;
      tok = train_bpe(corpus.train_bytes(), rc.bpe_vocab, &stopped);
      tok.save((fs::path(train_out_dir) / "tokenizer.txt").string());
    }
    PackedDataset tr = pack(corpus.train_bytes(), tok, rc.seq_len);
    PackedDataset va = pack(corpus.validation_bytes(), tok, rc.seq_len);

    std::optional<PermutationSpec> perm;
    if (train_perm != "identity")
      perm = make_permutation(parse_strategy(train_perm), rc.seq_len, train_perm_k,
                              train_perm_seed);

    TrainConfig tc = rc.train;
    if (tc.checkpoint_prefix.empty())
      tc.checkpoint_prefix = (fs::path(train_out_dir) / "checkpoint").string();
    ModelConfig mc = rc.model_config(tok.vocab_size());

    write_text_file((fs::path(train_out_dir) / "config.frozen.ini").string(),
                    serialize_ini(run_config_to_ini(rc)));
    write_text_file((fs::path(train_out_dir) / "dataset.json").string(),
                    dataset_manifest(corpus, tok, tr, va));

    std::optional<Tokenizer> span_tok;
    if (tc.objective == "mdm" && tc.mdm_masking == "span") {
      bool stopped = false;
      span_tok = train_bpe(corpus.train_bytes(), rc.bpe_vocab, &stopped);
      span_tok->save((fs::path(train_out_dir) / "span_tokenizer.txt").string());
    }

    TrainResult<float> res =
        train<float>(mc, tr, va, tc, tok.kind() == Tokenizer::Kind::kBpe ? &tok : nullptr, perm,
                     span_tok ? &*span_tok : nullptr);
    write_text_file((fs::path(train_out_dir) / "log.csv").string(), res.log_csv);
    std::cout << "steps " << res.steps_done << " tokens " << res.tokens_seen << " flops "
              << res.flops_spent << " train_loss " << res.final_train_loss << " val_bpb "
              << res.final_val_bpb << "\n";
    return 0;
  }

  if (c_eval->parsed()) {
    EvalInputs in = load_eval_inputs(eval_ck, eval_tok, eval_corpus, eval_split, eval_seq);
    const Tokenizer* tokp = in.tok.kind() == Tokenizer::Kind::kBpe ? &in.tok : nullptr;
    EvalReport rep;
    if (in.ck.config.attention_mode == AttentionMode::kCausal) {
      rep = bpb_ar(in.ck.config, in.ck.params, in.val, tokp, eval_max_seqs);
    } else {
      MaskSchedule sched{eval_sched == "linear" ? ScheduleKind::kLinear : ScheduleKind::kCosine};
      rep = bpb_mdm(in.ck.config, in.ck.params, in.val, sched, eval_strata, eval_seed, tokp,
                    eval_max_seqs);
    }
    std::ostringstream out;
    out.precision(17);
    out << "objective," << rep.objective << "\nrepresentation," << rep.representation
        << "\nsequences," << rep.tokens_scored / std::max(1, in.val.seq_len) << "\nnll_nats,"
        << rep.nll_nats_total << "\nbytes," << rep.bytes_total << "\nbpb," << rep.bpb << "\n";
    std::cout << out.str();
    return 0;
  }

  if (c_sample->parsed()) {
    Checkpoint<float> ck = load_checkpoint<float>(sample_ck);
    if (ck.config.attention_mode != AttentionMode::kBidirectional)
      throw std::runtime_error("sample: checkpoint is not a masked model");
    Tokenizer tok = load_tokenizer_arg(sample_tok);
    MaskSchedule sched{sample_sched == "linear" ? ScheduleKind::kLinear : ScheduleKind::kCosine};
    Rng rng(derive_seed(sample_seed, "sample"));
    std::vector<int> toks =
        sample_reverse(ck.config, ck.params, std::min(sample_len, ck.config.max_seq_len),
                       sample_steps, sched, rng);
    emit(sample_out, tok.decode(toks));
    return 0;
  }

  if (c_ent->parsed() || c_auc->parsed()) {
    const bool auc_only = c_auc->parsed();
    Checkpoint<float> ck = load_checkpoint<float>(auc_only ? auc_ck : ent_ck);
    ByteString text = read_text_file(auc_only ? auc_text : ent_text);
    if (static_cast<int>(text.size()) > 1 << 20) text.resize(1 << 20);
    Tokenizer tok = Tokenizer::load(auc_only ? auc_tok : ent_tok);
    std::vector<double> ent = entropy_map(ck.config, ck.params, text);
    Encoding enc = tok.encode(text);
    std::vector<int> labels = boundary_labels(enc.spans, text);
    if (auc_only) {
      BoundaryAlignmentReport rep = boundary_auc(ent, labels);
      std::cout.precision(17);
      std::cout << "auc," << rep.roc_auc << "\npositives," << rep.n_positive << "\nnegatives,"
                << rep.n_negative << "\n";
      return 0;
    }
    std::ostringstream out;
    out.precision(17);
    out << "byte_index,byte_hex,entropy_nats,boundary_label\n";
    for (size_t i = 0; i < text.size(); ++i)
      out << i << "," << hex_byte(static_cast<unsigned char>(text[i])) << "," << ent[i] << ","
          << labels[i] << "\n";
    emit(ent_out, out.str());
    return 0;
  }

  if (c_flops->parsed()) {
    RunConfig rc = run_config_from_ini(parse_ini(read_text_file(flops_cfg)));
    ModelConfig mc = rc.model_config(rc.representation == "byte" ? 256 : rc.bpe_vocab);
    int64_t L = flops_seq > 0 ? flops_seq : rc.seq_len;
    std::cout << breakdown_text(flops_forward(mc, L), mc, L);
    return 0;
  }

  if (c_plan->parsed()) {
    RunConfig rc = run_config_from_ini(parse_ini(read_text_file(plan_cfg)));
    ModelConfig mc = rc.model_config(rc.representation == "byte" ? 256 : rc.bpe_vocab);
    BudgetPlan plan = plan_budget(static_cast<int64_t>(plan_flops), mc, rc.seq_len,
                                  rc.train.batch_size);
    std::cout << "flops_budget " << plan.flops_budget << "\nsteps " << plan.steps << "\ntokens "
              << plan.data_budget_tokens << "\nflops_spent " << plan.flops_spent << "\n";
    return 0;
  }

  if (c_fit->parsed()) {
    std::cout << fit_report_text(parse_run_points_csv(read_text_file(fit_points)));
    return 0;
  }

  if (c_corrupt->parsed()) {
    ByteString raw = read_text_file(cor_in);
    PermutationSpec spec = make_permutation(parse_strategy(cor_strategy), cor_len, cor_k, cor_seed);
    std::optional<Tokenizer> tok;
    if (!cor_tok.empty()) tok = Tokenizer::load(cor_tok);
    RegularityReport rep =
        regularity_loss(raw, spec, deflate_compressor(), tok ? &*tok : nullptr);
    if (!cor_out.empty()) {
      // write the permuted stream itself alongside the report
      ByteString permuted;
      if (spec.strategy == PermutationStrategy::kGlobalBpe) {
        Encoding enc = tok->encode(raw);
        size_t full = enc.tokens.size() / static_cast<size_t>(cor_len) * static_cast<size_t>(cor_len);
        for (size_t base = 0; base < full; base += static_cast<size_t>(cor_len))
          for (int j = 0; j < cor_len; ++j)
            permuted += tok->token_bytes(enc.tokens[base + static_cast<size_t>(spec.pi[j])]);
        for (size_t i = full; i < enc.tokens.size(); ++i) permuted += tok->token_bytes(enc.tokens[i]);
      } else {
        size_t full = raw.size() / static_cast<size_t>(cor_len) * static_cast<size_t>(cor_len);
        for (size_t base = 0; base < full; base += static_cast<size_t>(cor_len))
          for (int j = 0; j < cor_len; ++j)
            permuted += raw[base + static_cast<size_t>(spec.pi[j])];
        permuted.append(raw, full, std::string::npos);
      }
      write_text_file(cor_out, permuted);
    }
    std::cout << regularity_csv_header() << regularity_csv_row(rep);
    return 0;
  }

  if (c_reg->parsed()) {
    ByteString raw = read_text_file(reg_in);
    std::optional<Tokenizer> tok;
    if (!reg_tok.empty()) tok = Tokenizer::load(reg_tok);
    std::ostringstream out;
    out << regularity_csv_header();
    for (const std::string& sname : reg_strategies) {
      PermutationStrategy strat = parse_strategy(sname);
      const bool blocky = strat == PermutationStrategy::kInterBlock ||
                          strat == PermutationStrategy::kIntraBlock;
      for (int k : (blocky ? reg_ks : std::vector<int>{1})) {
        for (uint64_t seed : reg_seeds) {
          PermutationSpec spec = make_permutation(strat, reg_len, k, seed);
          out << regularity_csv_row(
              regularity_loss(raw, spec, deflate_compressor(), tok ? &*tok : nullptr));
        }
      }
    }
    emit(reg_out, out.str());
    return 0;
  }

  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
