#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "bytelab/model.hpp"
#include "bytelab/trainer.hpp"

namespace bytelab {

// section -> key -> value; '#' and ';' start comments, keys are `k = v`.
using IniMap = std::map<std::string, std::map<std::string, std::string>>;

IniMap parse_ini(const std::string& text);
std::string serialize_ini(const IniMap& ini);

// A full run description: data, model and optimization settings in one file
// so a run can be reproduced from its frozen copy alone.
struct RunConfig {
  // [data]
  std::string corpus_path;
  std::string representation = "byte";  // "byte" | "bpe"
  int bpe_vocab = 512;
  int seq_len = 128;
  double split_fraction = 0.1;
  // [model]
  int d_model = 64;
  int n_layers = 2;
  int n_heads = 2;
  int d_head = 32;
  int d_ff = 192;
  uint64_t model_seed = 0;
  // [train]
  TrainConfig train;

  ModelConfig model_config(int vocab_size) const;
  void validate() const;
};

RunConfig default_run_config();
RunConfig run_config_from_ini(const IniMap& ini);
IniMap run_config_to_ini(const RunConfig& rc);

// Apply `section.key=value` overrides on top of a parsed file.
void apply_override(IniMap& ini, const std::string& assignment);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& text);

}  // namespace bytelab
