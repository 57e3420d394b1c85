#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace bytelab {

using ByteString = std::string;

struct TokenSpan {
  size_t begin = 0;  // half-open byte range
  size_t end = 0;
};

// Per-token byte offsets of an encoding, in document order. Spans are
// contiguous, non-overlapping, and cover the encoded range exactly.
struct TokenSpanMap {
  std::vector<TokenSpan> spans;
};

struct Encoding {
  std::vector<int> tokens;
  TokenSpanMap spans;
};

// Byte tokenizer (V=256, identity) or trainable byte-level BPE. No
// pre-tokenization, no special tokens; merges apply to raw bytes so byte
// offsets stay exact.
class Tokenizer {
 public:
  enum class Kind { kByte, kBpe };

  static Tokenizer byte_tokenizer();

  Kind kind() const { return kind_; }
  int vocab_size() const { return static_cast<int>(token_bytes_.size()); }
  const std::vector<std::pair<int, int>>& merges() const { return merges_; }
  const ByteString& token_bytes(int id) const;

  Encoding encode(const ByteString& bytes) const;
  ByteString decode(const std::vector<int>& tokens) const;

  // Mean bytes per token over the given text.
  double measure_bytes_per_token(const ByteString& text) const;

  // Versioned text format; loading reproduces encode/decode bit-exactly.
  void save(const std::string& path) const;
  static Tokenizer load(const std::string& path);
  std::string serialize() const;
  static Tokenizer deserialize(const std::string& text);

  // FNV-1a over the serialized form; used in dataset manifests.
  uint64_t fingerprint() const;

 private:
  Tokenizer() = default;
  friend Tokenizer train_bpe(const ByteString&, int, bool*);

  Kind kind_ = Kind::kByte;
  std::vector<std::pair<int, int>> merges_;     // ordered by creation
  std::vector<ByteString> token_bytes_;          // id -> constituent bytes
};

// Greedy byte-pair merge training: repeatedly merge the most frequent
// adjacent pair (count >= 2). Ties break on smaller left id, then right id.
// Stops early with *stopped_early=true if no pair repeats.
Tokenizer train_bpe(const ByteString& text, int target_vocab, bool* stopped_early = nullptr);

// Label 1 at the first non-space (0x20) byte of each token span, 0 elsewhere;
// spans consisting entirely of spaces contribute no positive label.
std::vector<int> boundary_labels(const TokenSpanMap& spans, const ByteString& bytes);

}  // namespace bytelab
