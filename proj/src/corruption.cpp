#include "bytelab/corruption.hpp"

#include <numeric>
#include <sstream>
#include <stdexcept>

#include <zlib.h>

#include "bytelab/rng.hpp"

namespace bytelab {

PermutationStrategy parse_strategy(const std::string& name) {
  if (name == "identity") return PermutationStrategy::kIdentity;
  if (name == "global") return PermutationStrategy::kGlobal;
  if (name == "inter_block") return PermutationStrategy::kInterBlock;
  if (name == "intra_block") return PermutationStrategy::kIntraBlock;
  if (name == "global_bpe") return PermutationStrategy::kGlobalBpe;
  throw std::invalid_argument("unknown permutation strategy: " + name);
}

std::string strategy_name(PermutationStrategy s) {
  switch (s) {
    case PermutationStrategy::kIdentity: return "identity";
    case PermutationStrategy::kGlobal: return "global";
    case PermutationStrategy::kInterBlock: return "inter_block";
    case PermutationStrategy::kIntraBlock: return "intra_block";
    case PermutationStrategy::kGlobalBpe: return "global_bpe";
  }
  return "?";
}

PermutationSpec make_permutation(PermutationStrategy strategy, int length, int block_size,
                                 uint64_t seed) {
  if (length < 1) throw std::invalid_argument("make_permutation: length must be >= 1");
  if (block_size < 1) throw std::invalid_argument("make_permutation: block size must be >= 1");

  PermutationSpec spec;
  spec.strategy = strategy;
  spec.length = length;
  spec.block_size = block_size;
  spec.seed = seed;
  spec.pi.resize(static_cast<size_t>(length));
  std::iota(spec.pi.begin(), spec.pi.end(), 0);

  Rng rng(derive_seed(seed, "permutation"));
  switch (strategy) {
    case PermutationStrategy::kIdentity:
      break;
    case PermutationStrategy::kGlobal:
    case PermutationStrategy::kGlobalBpe:
      rng.shuffle(spec.pi.begin(), spec.pi.end());
      break;
    case PermutationStrategy::kInterBlock: {
      std::vector<std::pair<int, int>> blocks;
      for (int b = 0; b < length; b += block_size)
        blocks.emplace_back(b, std::min(b + block_size, length));
      rng.shuffle(blocks.begin(), blocks.end());
      size_t w = 0;
      for (auto [b, e] : blocks)
        for (int i = b; i < e; ++i) spec.pi[w++] = i;
      break;
    }
    case PermutationStrategy::kIntraBlock: {
      for (int b = 0; b < length; b += block_size) {
        int e = std::min(b + block_size, length);
        rng.shuffle(spec.pi.begin() + b, spec.pi.begin() + e);
      }
      break;
    }
  }
  return spec;
}

PermutedSequence apply_permutation(std::span<const int> seq, const PermutationSpec& spec) {
  if (static_cast<int>(seq.size()) != spec.length)
    throw std::invalid_argument("apply_permutation: length mismatch");
  PermutedSequence out;
  out.tokens.resize(seq.size());
  out.position_ids.resize(seq.size());
  for (size_t j = 0; j < seq.size(); ++j) {
    out.tokens[j] = seq[static_cast<size_t>(spec.pi[j])];
    out.position_ids[j] = spec.pi[j];
  }
  return out;
}

std::vector<int> unapply_permutation(std::span<const int> permuted, const PermutationSpec& spec) {
  if (static_cast<int>(permuted.size()) != spec.length)
    throw std::invalid_argument("unapply_permutation: length mismatch");
  std::vector<int> out(permuted.size());
  for (size_t j = 0; j < permuted.size(); ++j)
    out[static_cast<size_t>(spec.pi[j])] = permuted[j];
  return out;
}

Compressor deflate_compressor() {
  Compressor c;
  c.name = "deflate9";
  c.compressed_size = [](const ByteString& data) -> size_t {
    uLongf bound = compressBound(static_cast<uLong>(data.size()));
    std::vector<Bytef> buf(bound);
    uLongf out_len = bound;
    int rc = compress2(buf.data(), &out_len, reinterpret_cast<const Bytef*>(data.data()),
                       static_cast<uLong>(data.size()), 9);
    if (rc != Z_OK) throw std::runtime_error("deflate failed");
    return static_cast<size_t>(out_len);
  };
  return c;
}

namespace {

ByteString permute_byte_windows(const ByteString& raw, const PermutationSpec& spec) {
  const size_t L = static_cast<size_t>(spec.length);
  ByteString out;
  out.reserve(raw.size());
  size_t full = raw.size() / L * L;
  for (size_t base = 0; base < full; base += L)
    for (size_t j = 0; j < L; ++j)
      out.push_back(raw[base + static_cast<size_t>(spec.pi[j])]);
  out.append(raw, full, std::string::npos);
  return out;
}

ByteString permute_token_windows(const ByteString& raw, const PermutationSpec& spec,
                                 const Tokenizer& tok) {
  Encoding enc = tok.encode(raw);
  const size_t L = static_cast<size_t>(spec.length);
  ByteString out;
  out.reserve(raw.size());
  size_t full = enc.tokens.size() / L * L;
  for (size_t base = 0; base < full; base += L)
    for (size_t j = 0; j < L; ++j)
      out += tok.token_bytes(enc.tokens[base + static_cast<size_t>(spec.pi[j])]);
  for (size_t i = full; i < enc.tokens.size(); ++i) out += tok.token_bytes(enc.tokens[i]);
  return out;
}

}  // namespace

RegularityReport regularity_loss(const ByteString& raw, const PermutationSpec& spec,
                                 const Compressor& compressor, const Tokenizer* bpe_tokenizer) {
  if (static_cast<int>(raw.size()) < spec.block_size)
    throw std::invalid_argument("regularity_loss: input shorter than one block");
  ByteString permuted;
  if (spec.strategy == PermutationStrategy::kGlobalBpe) {
    if (!bpe_tokenizer)
      throw std::invalid_argument("regularity_loss: global_bpe needs a tokenizer");
    permuted = permute_token_windows(raw, spec, *bpe_tokenizer);
  } else {
    permuted = permute_byte_windows(raw, spec);
  }

  RegularityReport r;
  r.compressor = compressor.name;
  r.strategy = strategy_name(spec.strategy);
  r.block_size = spec.block_size;
  r.seed = spec.seed;
  r.raw_bytes = static_cast<int64_t>(raw.size());
  r.original_compressed = static_cast<int64_t>(compressor.compressed_size(raw));
  r.permuted_compressed = static_cast<int64_t>(compressor.compressed_size(permuted));
  r.c_orig = 1.0 - static_cast<double>(r.original_compressed) / static_cast<double>(raw.size());
  r.c_perm =
      1.0 - static_cast<double>(r.permuted_compressed) / static_cast<double>(permuted.size());
  r.loss_pct = r.c_orig == 0.0 ? 0.0 : 100.0 * (r.c_orig - r.c_perm) / r.c_orig;
  r.size_growth_pct = 100.0 *
                      (static_cast<double>(r.permuted_compressed) - r.original_compressed) /
                      static_cast<double>(r.original_compressed);
  return r;
}

std::string regularity_csv_header() {
  return "strategy,k,seed,compressor,c_orig,c_perm,loss_pct\n";
}

std::string regularity_csv_row(const RegularityReport& r) {
  std::ostringstream out;
  out.precision(17);
  out << r.strategy << "," << r.block_size << "," << r.seed << "," << r.compressor << ","
      << r.c_orig << "," << r.c_perm << "," << r.loss_pct << "\n";
  return out.str();
}

}  // namespace bytelab
