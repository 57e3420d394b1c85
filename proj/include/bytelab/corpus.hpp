#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "bytelab/tokenizer.hpp"

namespace bytelab {

// A corpus is an opaque byte stream; no UTF-8 validation. The validation
// split is a contiguous suffix so BPE merges learned on train text do not
// leak into validation n-grams.
struct RawCorpus {
  std::string source_path;
  ByteString bytes;
  double split_fraction = 0.1;
  uint64_t seed = 0;

  int64_t bytes_total() const { return static_cast<int64_t>(bytes.size()); }
  int64_t split_point() const;  // [0, split_point) train, [split_point, end) validation

  ByteString train_bytes() const { return bytes.substr(0, static_cast<size_t>(split_point())); }
  ByteString validation_bytes() const { return bytes.substr(static_cast<size_t>(split_point())); }
};

// Loads a file, or every regular file in a directory (shards merged in
// lexicographic name order so the result is deterministic).
RawCorpus ingest(const std::string& path, double split_fraction, uint64_t seed);

RawCorpus corpus_from_bytes(ByteString bytes, double split_fraction, uint64_t seed);

enum class Representation { kByte, kBpe };

// Fixed-length non-overlapping sequences packed from a contiguous token
// stream; the trailing remainder is dropped.
struct PackedDataset {
  std::vector<int32_t> tokens;  // n_sequences * seq_len, sequence-major
  int seq_len = 0;
  int vocab_size = 0;
  Representation representation = Representation::kByte;
  double bytes_per_token = 1.0;
  int64_t bytes_consumed = 0;  // raw bytes behind the packed tokens

  int64_t n_sequences() const {
    return seq_len == 0 ? 0 : static_cast<int64_t>(tokens.size()) / seq_len;
  }
  const int32_t* sequence(int64_t i) const { return tokens.data() + i * seq_len; }
};

PackedDataset pack(const ByteString& bytes, const Tokenizer& tokenizer, int seq_len);

// round(l_byte / bytes_per_token) with round-half-to-even, floored at 1. Keeps
// the raw-byte volume per step of byte and BPE runs matched.
int64_t normalize_seq_len(int64_t l_byte, double bytes_per_token);

// Structured-text dataset manifest.
std::string dataset_manifest(const RawCorpus& corpus, const Tokenizer& tok,
                             const PackedDataset& train, const PackedDataset& val);

}  // namespace bytelab
