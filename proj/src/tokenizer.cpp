#include "bytelab/tokenizer.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

namespace bytelab {

namespace {

std::string to_hex(const ByteString& b) {
  static const char* digits = "0123456789abcdef";
  std::string out;
  out.reserve(b.size() * 2);
  for (unsigned char c : b) {
    out.push_back(digits[c >> 4]);
    out.push_back(digits[c & 0xf]);
  }
  return out;
}

ByteString from_hex(const std::string& h) {
  if (h.size() % 2 != 0) throw std::runtime_error("tokenizer file: odd hex string");
  auto nib = [](char c) -> int {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    throw std::runtime_error("tokenizer file: bad hex digit");
  };
  ByteString out;
  out.reserve(h.size() / 2);
  for (size_t i = 0; i < h.size(); i += 2)
    out.push_back(static_cast<char>(nib(h[i]) * 16 + nib(h[i + 1])));
  return out;
}

// One left-to-right replacement pass for the pair (a,b) -> id over tokens and
// spans in lockstep.
void apply_merge(std::vector<int>& toks, std::vector<TokenSpan>& spans, int a, int b, int id) {
  size_t w = 0;
  for (size_t r = 0; r < toks.size();) {
    if (r + 1 < toks.size() && toks[r] == a && toks[r + 1] == b) {
      toks[w] = id;
      spans[w] = TokenSpan{spans[r].begin, spans[r + 1].end};
      r += 2;
    } else {
      toks[w] = toks[r];
      spans[w] = spans[r];
      r += 1;
    }
    ++w;
  }
  toks.resize(w);
  spans.resize(w);
}

}  // namespace

Tokenizer Tokenizer::byte_tokenizer() {
  Tokenizer t;
  t.kind_ = Kind::kByte;
  t.token_bytes_.resize(256);
  for (int i = 0; i < 256; ++i) t.token_bytes_[i] = ByteString(1, static_cast<char>(i));
  return t;
}

const ByteString& Tokenizer::token_bytes(int id) const {
  if (id < 0 || id >= vocab_size())
    throw std::out_of_range("token id out of range: " + std::to_string(id));
  return token_bytes_[static_cast<size_t>(id)];
}

Encoding Tokenizer::encode(const ByteString& bytes) const {
  Encoding e;
  e.tokens.reserve(bytes.size());
  e.spans.spans.reserve(bytes.size());
  for (size_t i = 0; i < bytes.size(); ++i) {
    e.tokens.push_back(static_cast<unsigned char>(bytes[i]));
    e.spans.spans.push_back(TokenSpan{i, i + 1});
  }
  if (kind_ == Kind::kBpe) {
    for (size_t m = 0; m < merges_.size(); ++m)
      apply_merge(e.tokens, e.spans.spans, merges_[m].first, merges_[m].second,
                  256 + static_cast<int>(m));
  }
  return e;
}

ByteString Tokenizer::decode(const std::vector<int>& tokens) const {
  ByteString out;
  for (int t : tokens) out += token_bytes(t);
  return out;
}

double Tokenizer::measure_bytes_per_token(const ByteString& text) const {
  if (text.empty()) return 1.0;
  Encoding e = encode(text);
  return static_cast<double>(text.size()) / static_cast<double>(e.tokens.size());
}

Tokenizer train_bpe(const ByteString& text, int target_vocab, bool* stopped_early) {
  if (target_vocab <= 256)
    throw std::invalid_argument("train_bpe: target_vocab must exceed 256");
  if (text.empty()) throw std::invalid_argument("train_bpe: empty training text");
  if (stopped_early) *stopped_early = false;

  Tokenizer tok = Tokenizer::byte_tokenizer();
  tok.kind_ = Tokenizer::Kind::kBpe;

  std::vector<int> toks(text.size());
  std::vector<TokenSpan> spans(text.size());
  for (size_t i = 0; i < text.size(); ++i) {
    toks[i] = static_cast<unsigned char>(text[i]);
    spans[i] = TokenSpan{i, i + 1};
  }

  const int n_merges = target_vocab - 256;
  for (int m = 0; m < n_merges; ++m) {
    std::unordered_map<uint64_t, int64_t> counts;
    counts.reserve(toks.size() / 4 + 16);
    for (size_t i = 0; i + 1 < toks.size(); ++i)
      counts[(static_cast<uint64_t>(toks[i]) << 32) | static_cast<uint32_t>(toks[i + 1])]++;
    std::pair<int, int> best{-1, -1};
    int64_t best_count = 1;
    for (const auto& [key, c] : counts) {
      std::pair<int, int> pair{static_cast<int>(key >> 32), static_cast<int>(key & 0xffffffff)};
      // ties prefer the smaller left id, then the smaller right id
      if (c > best_count || (c == best_count && best.first >= 0 && pair < best)) {
        best_count = c;
        best = pair;
      }
    }
    if (best.first < 0) {
      if (stopped_early) *stopped_early = true;
      break;
    }
    int id = 256 + static_cast<int>(tok.merges_.size());
    tok.merges_.push_back(best);
    tok.token_bytes_.push_back(tok.token_bytes_[static_cast<size_t>(best.first)] +
                               tok.token_bytes_[static_cast<size_t>(best.second)]);
    apply_merge(toks, spans, best.first, best.second, id);
  }
  return tok;
}

std::vector<int> boundary_labels(const TokenSpanMap& spans, const ByteString& bytes) {
  size_t covered = 0;
  for (size_t i = 0; i < spans.spans.size(); ++i) {
    const TokenSpan& s = spans.spans[i];
    if (s.begin != covered || s.end < s.begin)
      throw std::invalid_argument("boundary_labels: spans not contiguous");
    covered = s.end;
  }
  if (covered != bytes.size())
    throw std::invalid_argument("boundary_labels: spans do not cover bytes");
  std::vector<int> labels(bytes.size(), 0);
  for (const TokenSpan& s : spans.spans) {
    for (size_t i = s.begin; i < s.end; ++i) {
      if (bytes[i] != ' ') {  // ASCII 0x20 only
        labels[i] = 1;
        break;
      }
    }
  }
  return labels;
}

std::string Tokenizer::serialize() const {
  std::ostringstream out;
  out << "bytelab-tokenizer v1\n";
  out << "kind " << (kind_ == Kind::kByte ? "byte" : "bpe") << "\n";
  out << "vocab " << vocab_size() << "\n";
  for (size_t m = 0; m < merges_.size(); ++m) {
    out << "merge " << to_hex(token_bytes_[static_cast<size_t>(merges_[m].first)]) << " "
        << to_hex(token_bytes_[static_cast<size_t>(merges_[m].second)]) << "\n";
  }
  return out.str();
}

Tokenizer Tokenizer::deserialize(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != "bytelab-tokenizer v1")
    throw std::runtime_error("tokenizer file: bad header");
  std::string kind_word, kind_val;
  in >> kind_word >> kind_val;
  if (kind_word != "kind") throw std::runtime_error("tokenizer file: missing kind");
  std::string vocab_word;
  int vocab = 0;
  in >> vocab_word >> vocab;
  if (vocab_word != "vocab") throw std::runtime_error("tokenizer file: missing vocab");

  if (kind_val == "byte") {
    if (vocab != 256) throw std::runtime_error("tokenizer file: byte kind must have vocab 256");
    return byte_tokenizer();
  }
  if (kind_val != "bpe") throw std::runtime_error("tokenizer file: unknown kind " + kind_val);

  Tokenizer tok = byte_tokenizer();
  tok.kind_ = Kind::kBpe;
  std::unordered_map<std::string, int> by_bytes;
  for (int i = 0; i < 256; ++i) by_bytes[tok.token_bytes_[static_cast<size_t>(i)]] = i;
  std::string word, lhex, rhex;
  while (in >> word >> lhex >> rhex) {
    if (word != "merge") throw std::runtime_error("tokenizer file: expected merge line");
    ByteString lb = from_hex(lhex), rb = from_hex(rhex);
    auto li = by_bytes.find(lb), ri = by_bytes.find(rb);
    if (li == by_bytes.end() || ri == by_bytes.end())
      throw std::runtime_error("tokenizer file: merge references unknown token");
    int id = tok.vocab_size();
    tok.merges_.emplace_back(li->second, ri->second);
    tok.token_bytes_.push_back(lb + rb);
    by_bytes[lb + rb] = id;
  }
  if (tok.vocab_size() != vocab)
    throw std::runtime_error("tokenizer file: vocab count does not match merges");
  return tok;
}

void Tokenizer::save(const std::string& path) const {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write tokenizer file " + path);
  f << serialize();
}

Tokenizer Tokenizer::load(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open tokenizer file " + path);
  std::ostringstream buf;
  buf << f.rdbuf();
  return deserialize(buf.str());
}

uint64_t Tokenizer::fingerprint() const {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : serialize()) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace bytelab
