#include "bytelab/config.hpp"

#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <type_traits>

#include "bytelab/schedule.hpp"

namespace bytelab {

namespace {

std::string trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

}  // namespace

IniMap parse_ini(const std::string& text) {
  IniMap ini;
  std::istringstream in(text);
  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    size_t cut = line.find_first_of("#;");
    if (cut != std::string::npos) line = line.substr(0, cut);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw std::runtime_error("config line " + std::to_string(lineno) + ": unclosed section");
      section = trim(line.substr(1, line.size() - 2));
      ini[section];
      continue;
    }
    size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error("config line " + std::to_string(lineno) + ": expected key = value");
    std::string k = trim(line.substr(0, eq));
    std::string v = trim(line.substr(eq + 1));
    if (k.empty())
      throw std::runtime_error("config line " + std::to_string(lineno) + ": empty key");
    ini[section][k] = v;
  }
  return ini;
}

std::string serialize_ini(const IniMap& ini) {
  std::ostringstream out;
  bool first = true;
  for (const auto& [sec, kv] : ini) {
    if (!first) out << "\n";
    first = false;
    out << "[" << sec << "]\n";
    for (const auto& [k, v] : kv) out << k << " = " << v << "\n";
  }
  return out.str();
}

ModelConfig RunConfig::model_config(int vocab_size) const {
  ModelConfig mc;
  mc.vocab_size = vocab_size;
  mc.d_model = d_model;
  mc.n_layers = n_layers;
  mc.n_heads = n_heads;
  mc.d_head = d_head;
  mc.d_ff = d_ff;
  mc.max_seq_len = seq_len;
  mc.attention_mode =
      train.objective == "mdm" ? AttentionMode::kBidirectional : AttentionMode::kCausal;
  mc.seed = model_seed;
  mc.validate();
  return mc;
}

void RunConfig::validate() const {
  if (representation != "byte" && representation != "bpe")
    throw std::invalid_argument("run config: representation must be byte or bpe");
  if (representation == "bpe" && bpe_vocab <= 256)
    throw std::invalid_argument("run config: bpe_vocab must exceed 256");
  if (seq_len < 2) throw std::invalid_argument("run config: seq_len must be >= 2");
  if (!(split_fraction > 0.0 && split_fraction < 1.0))
    throw std::invalid_argument("run config: split_fraction outside (0,1)");
  train.validate();
  model_config(representation == "byte" ? 256 : bpe_vocab);
}

RunConfig default_run_config() { return RunConfig{}; }

namespace {

template <typename T>
T get_or(const IniMap& ini, const std::string& sec, const std::string& key, T fallback) {
  auto si = ini.find(sec);
  if (si == ini.end()) return fallback;
  auto ki = si->second.find(key);
  if (ki == si->second.end()) return fallback;
  const std::string& v = ki->second;
  try {
    if constexpr (std::is_same_v<T, std::string>) {
      return v;
    } else if constexpr (std::is_same_v<T, double>) {
      return std::stod(v);
    } else if constexpr (std::is_same_v<T, uint64_t>) {
      return std::stoull(v);
    } else {
      return static_cast<T>(std::stoll(v));
    }
  } catch (const std::exception&) {
    throw std::runtime_error("config: bad value for " + sec + "." + key + ": " + v);
  }
}

const std::map<std::string, std::set<std::string>>& known_keys() {
  static const std::map<std::string, std::set<std::string>> k = {
      {"data", {"corpus_path", "representation", "bpe_vocab", "seq_len", "split_fraction"}},
      {"model", {"d_model", "n_layers", "n_heads", "d_head", "d_ff", "seed"}},
      {"train",
       {"objective", "batch_size", "total_steps", "peak_lr", "min_lr", "warmup_fraction",
        "weight_decay", "grad_clip_norm", "beta1", "beta2", "adam_eps", "seed", "eval_interval",
        "eval_sequences", "eval_strata", "log_interval", "mdm_schedule", "mdm_masking",
        "checkpoint_prefix"}}};
  return k;
}

}  // namespace

RunConfig run_config_from_ini(const IniMap& ini) {
  for (const auto& [sec, kv] : ini) {
    auto si = known_keys().find(sec);
    if (si == known_keys().end()) throw std::runtime_error("config: unknown section [" + sec + "]");
    for (const auto& [k, v] : kv)
      if (!si->second.count(k))
        throw std::runtime_error("config: unknown key " + sec + "." + k);
  }
  RunConfig rc;
  rc.corpus_path = get_or<std::string>(ini, "data", "corpus_path", rc.corpus_path);
  rc.representation = get_or<std::string>(ini, "data", "representation", rc.representation);
  rc.bpe_vocab = get_or<int>(ini, "data", "bpe_vocab", rc.bpe_vocab);
  rc.seq_len = get_or<int>(ini, "data", "seq_len", rc.seq_len);
  rc.split_fraction = get_or<double>(ini, "data", "split_fraction", rc.split_fraction);
  rc.d_model = get_or<int>(ini, "model", "d_model", rc.d_model);
  rc.n_layers = get_or<int>(ini, "model", "n_layers", rc.n_layers);
  rc.n_heads = get_or<int>(ini, "model", "n_heads", rc.n_heads);
  rc.d_head = get_or<int>(ini, "model", "d_head", rc.d_head);
  rc.d_ff = get_or<int>(ini, "model", "d_ff", rc.d_ff);
  rc.model_seed = get_or<uint64_t>(ini, "model", "seed", rc.model_seed);
  TrainConfig& t = rc.train;
  t.objective = get_or<std::string>(ini, "train", "objective", t.objective);
  t.batch_size = get_or<int>(ini, "train", "batch_size", t.batch_size);
  t.total_steps = get_or<int64_t>(ini, "train", "total_steps", t.total_steps);
  t.peak_lr = get_or<double>(ini, "train", "peak_lr", t.peak_lr);
  t.min_lr = get_or<double>(ini, "train", "min_lr", t.min_lr);
  t.warmup_fraction = get_or<double>(ini, "train", "warmup_fraction", t.warmup_fraction);
  t.weight_decay = get_or<double>(ini, "train", "weight_decay", t.weight_decay);
  t.grad_clip_norm = get_or<double>(ini, "train", "grad_clip_norm", t.grad_clip_norm);
  t.beta1 = get_or<double>(ini, "train", "beta1", t.beta1);
  t.beta2 = get_or<double>(ini, "train", "beta2", t.beta2);
  t.adam_eps = get_or<double>(ini, "train", "adam_eps", t.adam_eps);
  t.seed = get_or<uint64_t>(ini, "train", "seed", t.seed);
  t.eval_interval = get_or<int64_t>(ini, "train", "eval_interval", t.eval_interval);
  t.eval_sequences = get_or<int64_t>(ini, "train", "eval_sequences", t.eval_sequences);
  t.eval_strata = get_or<int>(ini, "train", "eval_strata", t.eval_strata);
  t.log_interval = get_or<int64_t>(ini, "train", "log_interval", t.log_interval);
  std::string sched = get_or<std::string>(ini, "train", "mdm_schedule", "linear");
  if (sched == "linear")
    t.mdm_schedule = ScheduleKind::kLinear;
  else if (sched == "cosine")
    t.mdm_schedule = ScheduleKind::kCosine;
  else
    throw std::runtime_error("config: mdm_schedule must be linear or cosine");
  t.mdm_masking = get_or<std::string>(ini, "train", "mdm_masking", t.mdm_masking);
  t.checkpoint_prefix = get_or<std::string>(ini, "train", "checkpoint_prefix", t.checkpoint_prefix);
  rc.validate();
  return rc;
}

IniMap run_config_to_ini(const RunConfig& rc) {
  auto num = [](double v) {
    std::ostringstream o;
    o.precision(17);
    o << v;
    return o.str();
  };
  IniMap ini;
  auto& d = ini["data"];
  d["corpus_path"] = rc.corpus_path;
  d["representation"] = rc.representation;
  d["bpe_vocab"] = std::to_string(rc.bpe_vocab);
  d["seq_len"] = std::to_string(rc.seq_len);
  d["split_fraction"] = num(rc.split_fraction);
  auto& m = ini["model"];
  m["d_model"] = std::to_string(rc.d_model);
  m["n_layers"] = std::to_string(rc.n_layers);
  m["n_heads"] = std::to_string(rc.n_heads);
  m["d_head"] = std::to_string(rc.d_head);
  m["d_ff"] = std::to_string(rc.d_ff);
  m["seed"] = std::to_string(rc.model_seed);
  auto& t = ini["train"];
  const TrainConfig& c = rc.train;
  t["objective"] = c.objective;
  t["batch_size"] = std::to_string(c.batch_size);
  t["total_steps"] = std::to_string(c.total_steps);
  t["peak_lr"] = num(c.peak_lr);
  t["min_lr"] = num(c.min_lr);
  t["warmup_fraction"] = num(c.warmup_fraction);
  t["weight_decay"] = num(c.weight_decay);
  t["grad_clip_norm"] = num(c.grad_clip_norm);
  t["beta1"] = num(c.beta1);
  t["beta2"] = num(c.beta2);
  t["adam_eps"] = num(c.adam_eps);
  t["seed"] = std::to_string(c.seed);
  t["eval_interval"] = std::to_string(c.eval_interval);
  t["eval_sequences"] = std::to_string(c.eval_sequences);
  t["eval_strata"] = std::to_string(c.eval_strata);
  t["log_interval"] = std::to_string(c.log_interval);
  t["mdm_schedule"] = c.mdm_schedule == ScheduleKind::kLinear ? "linear" : "cosine";
  t["mdm_masking"] = c.mdm_masking;
  t["checkpoint_prefix"] = c.checkpoint_prefix;
  return ini;
}

void apply_override(IniMap& ini, const std::string& assignment) {
  size_t eq = assignment.find('=');
  size_t dot = assignment.find('.');
  if (eq == std::string::npos || dot == std::string::npos || dot > eq)
    throw std::runtime_error("override must be section.key=value: " + assignment);
  ini[assignment.substr(0, dot)][assignment.substr(dot + 1, eq - dot - 1)] =
      assignment.substr(eq + 1);
}

std::string read_text_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path);
  f.write(text.data(), static_cast<std::streamsize>(text.size()));
}

}  // namespace bytelab
