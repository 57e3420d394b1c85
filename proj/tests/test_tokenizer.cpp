#include <doctest.h>

#include <cstdio>
#include <string>

#include "bytelab/textgen.hpp"
#include "bytelab/tokenizer.hpp"

using namespace bytelab;

TEST_CASE("byte tokenizer is the identity on bytes") {
  Tokenizer tok = Tokenizer::byte_tokenizer();
  CHECK(tok.vocab_size() == 256);
  ByteString s = "hi\x00\xff there";
  s[2] = '\x00';
  Encoding e = tok.encode(s);
  REQUIRE(e.tokens.size() == s.size());
  for (size_t i = 0; i < s.size(); ++i) {
    CHECK(e.tokens[i] == static_cast<int>(static_cast<unsigned char>(s[i])));
    CHECK(e.spans.spans[i].begin == i);
    CHECK(e.spans.spans[i].end == i + 1);
  }
  CHECK(tok.decode(e.tokens) == s);
}

TEST_CASE("single merge on 'aaaa'") {
  Tokenizer tok = train_bpe("aaaa", 257);
  CHECK(tok.vocab_size() == 257);
  REQUIRE(tok.merges().size() == 1);
  CHECK(tok.merges()[0].first == 'a');
  CHECK(tok.merges()[0].second == 'a');
  Encoding e = tok.encode("aaaa");
  REQUIRE(e.tokens.size() == 2);
  CHECK(e.tokens[0] == 256);
  CHECK(e.tokens[1] == 256);
  CHECK(tok.token_bytes(256) == "aa");
  CHECK(e.spans.spans[0].begin == 0);
  CHECK(e.spans.spans[0].end == 2);
  CHECK(e.spans.spans[1].begin == 2);
  CHECK(e.spans.spans[1].end == 4);
  CHECK(tok.decode(e.tokens) == "aaaa");
}

TEST_CASE("training stops early when no pair repeats") {
  bool stopped = false;
  Tokenizer tok = train_bpe("ab", 300, &stopped);
  CHECK(stopped);
  CHECK(tok.vocab_size() == 256);
}

TEST_CASE("training rejects degenerate inputs") {
  CHECK_THROWS(train_bpe("", 300));
  CHECK_THROWS(train_bpe("abc", 256));
  CHECK_THROWS(train_bpe("abc", 100));
}

TEST_CASE("round trip and span coverage on synthetic text") {
  ByteString text = synthetic_english(20000, 9);
  Tokenizer tok = train_bpe(text, 300);
  CHECK(tok.vocab_size() == 300);
  ByteString held = synthetic_english(5000, 10);
  Encoding e = tok.encode(held);
  CHECK(tok.decode(e.tokens) == held);
  size_t pos = 0;
  for (size_t i = 0; i < e.tokens.size(); ++i) {
    CHECK(e.spans.spans[i].begin == pos);
    CHECK(tok.token_bytes(e.tokens[i]) ==
          held.substr(e.spans.spans[i].begin, e.spans.spans[i].end - e.spans.spans[i].begin));
    pos = e.spans.spans[i].end;
  }
  CHECK(pos == held.size());
}

TEST_CASE("larger vocabularies never lengthen the encoding") {
  ByteString text = synthetic_english(20000, 11);
  ByteString held = synthetic_english(4000, 12);
  size_t prev = held.size();
  for (int vocab : {280, 350, 500}) {
    Tokenizer tok = train_bpe(text, vocab);
    size_t n = tok.encode(held).tokens.size();
    CHECK(n <= prev);
    prev = n;
  }
}

TEST_CASE("serialization reproduces encode bit-exactly") {
  ByteString text = synthetic_english(10000, 13);
  Tokenizer tok = train_bpe(text, 320);
  Tokenizer back = Tokenizer::deserialize(tok.serialize());
  CHECK(back.fingerprint() == tok.fingerprint());
  ByteString held = synthetic_english(3000, 14);
  CHECK(back.encode(held).tokens == tok.encode(held).tokens);

  std::string path = "tok_roundtrip.txt";
  tok.save(path);
  Tokenizer loaded = Tokenizer::load(path);
  CHECK(loaded.encode(held).tokens == tok.encode(held).tokens);
  std::remove(path.c_str());
}

TEST_CASE("boundary labels mark the first non-space byte of each token") {
  Tokenizer tok = train_bpe(" cat cat", 258);  // learns " c" then "at" or similar
  ByteString s = " cat";
  Encoding e = tok.encode(s);
  std::vector<int> labels = boundary_labels(e.spans, s);
  REQUIRE(labels.size() == 4);
  // whatever the merges, exactly one label per token at its first non-space byte
  int total = 0;
  for (int l : labels) total += l;
  CHECK(total == static_cast<int>(e.tokens.size()) -
                     [&] {  // tokens made only of spaces contribute nothing
                       int blank = 0;
                       for (int t : e.tokens) {
                         bool all_space = true;
                         for (char c : tok.token_bytes(t)) all_space = all_space && c == ' ';
                         blank += all_space;
                       }
                       return blank;
                     }());
  CHECK(labels[0] == 0);  // leading space is never a boundary hit
  CHECK(labels[1] == 1);  // 'c' starts the first token's visible text
}

TEST_CASE("byte-tokenizer boundary labels: every non-space byte") {
  Tokenizer tok = Tokenizer::byte_tokenizer();
  ByteString s = " ab c";
  std::vector<int> labels = boundary_labels(tok.encode(s).spans, s);
  CHECK(labels == std::vector<int>{0, 1, 1, 0, 1});
}
