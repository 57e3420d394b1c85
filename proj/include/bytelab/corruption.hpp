#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "bytelab/tokenizer.hpp"

namespace bytelab {

enum class PermutationStrategy {
  kIdentity,
  kGlobal,      // shuffle every slot
  kInterBlock,  // shuffle block order, keep within-block order
  kIntraBlock,  // shuffle within each block, keep block order
  kGlobalBpe,   // global shuffle applied to BPE token order
};

PermutationStrategy parse_strategy(const std::string& name);
std::string strategy_name(PermutationStrategy s);

// A realized static permutation pi of 0..L-1. The permuted sequence places
// seq[pi[j]] at slot j. When k does not divide L, the trailing short block
// participates as its own block.
struct PermutationSpec {
  PermutationStrategy strategy = PermutationStrategy::kIdentity;
  int length = 0;
  int block_size = 1;
  uint64_t seed = 0;
  std::vector<int> pi;
};

PermutationSpec make_permutation(PermutationStrategy strategy, int length, int block_size,
                                 uint64_t seed);

struct PermutedSequence {
  std::vector<int> tokens;
  std::vector<int> position_ids;  // position_ids[j] == pi[j]
};

PermutedSequence apply_permutation(std::span<const int> seq, const PermutationSpec& spec);
std::vector<int> unapply_permutation(std::span<const int> permuted, const PermutationSpec& spec);

// ---- compression-based regularity proxies ----

struct Compressor {
  std::string name;
  std::function<size_t(const ByteString&)> compressed_size;
};

// DEFLATE level 9 via zlib; always available.
Compressor deflate_compressor();

struct RegularityReport {
  std::string compressor;
  std::string strategy;
  int block_size = 1;
  uint64_t seed = 0;
  int64_t raw_bytes = 0;
  int64_t original_compressed = 0;
  int64_t permuted_compressed = 0;
  double c_orig = 0.0;  // 1 - compressed/raw
  double c_perm = 0.0;
  // primary definition: 100 * (c_orig - c_perm) / c_orig
  double loss_pct = 0.0;
  // alternative normalization for comparison: relative compressed-size growth
  double size_growth_pct = 0.0;
};

// Applies spec.pi to consecutive windows of the stream (byte windows, or BPE
// token windows decoded back to bytes for kGlobalBpe), compresses both
// streams, and reports the compressibility loss. The trailing partial window
// is passed through unpermuted.
RegularityReport regularity_loss(const ByteString& raw, const PermutationSpec& spec,
                                 const Compressor& compressor,
                                 const Tokenizer* bpe_tokenizer = nullptr);

std::string regularity_csv_header();
std::string regularity_csv_row(const RegularityReport& r);

}  // namespace bytelab
