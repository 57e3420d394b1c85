#include "bytelab/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace bytelab {

namespace fs = std::filesystem;

int64_t RawCorpus::split_point() const {
  auto n = static_cast<int64_t>(bytes.size());
  auto val = static_cast<int64_t>(std::llround(split_fraction * static_cast<double>(n)));
  val = std::clamp<int64_t>(val, 0, n);
  return n - val;
}

namespace {

ByteString read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot read file: " + path);
  std::ostringstream buf;
  buf << f.rdbuf();
  if (f.bad()) throw std::runtime_error("unreadable bytes in " + path);
  return buf.str();
}

}  // namespace

RawCorpus corpus_from_bytes(ByteString bytes, double split_fraction, uint64_t seed) {
  if (bytes.empty()) throw std::runtime_error("empty corpus");
  if (!(split_fraction > 0.0 && split_fraction < 1.0))
    throw std::invalid_argument("split_fraction must be in (0,1)");
  RawCorpus c;
  c.source_path = "<memory>";
  c.bytes = std::move(bytes);
  c.split_fraction = split_fraction;
  c.seed = seed;
  return c;
}

RawCorpus ingest(const std::string& path, double split_fraction, uint64_t seed) {
  if (!fs::exists(path)) throw std::runtime_error("missing file: " + path);
  ByteString bytes;
  if (fs::is_directory(path)) {
    std::vector<std::string> shards;
    for (const auto& e : fs::directory_iterator(path))
      if (e.is_regular_file()) shards.push_back(e.path().string());
    std::sort(shards.begin(), shards.end());
    for (const auto& s : shards) bytes += read_file(s);
  } else {
    bytes = read_file(path);
  }
  RawCorpus c = corpus_from_bytes(std::move(bytes), split_fraction, seed);
  c.source_path = path;
  return c;
}

PackedDataset pack(const ByteString& bytes, const Tokenizer& tokenizer, int seq_len) {
  if (seq_len < 2) throw std::invalid_argument("pack: seq_len must be >= 2");
  Encoding enc = tokenizer.encode(bytes);
  const int64_t total_tokens = static_cast<int64_t>(enc.tokens.size());
  if (total_tokens < seq_len) throw std::runtime_error("corpus shorter than one sequence");

  PackedDataset ds;
  ds.seq_len = seq_len;
  ds.vocab_size = tokenizer.vocab_size();
  ds.representation =
      tokenizer.kind() == Tokenizer::Kind::kByte ? Representation::kByte : Representation::kBpe;
  ds.bytes_per_token =
      static_cast<double>(bytes.size()) / static_cast<double>(total_tokens);
  const int64_t n_seq = total_tokens / seq_len;
  ds.tokens.assign(enc.tokens.begin(), enc.tokens.begin() + n_seq * seq_len);
  ds.bytes_consumed = static_cast<int64_t>(enc.spans.spans[static_cast<size_t>(n_seq * seq_len - 1)].end);
  return ds;
}

int64_t normalize_seq_len(int64_t l_byte, double bytes_per_token) {
  if (l_byte <= 0) throw std::invalid_argument("normalize_seq_len: l_byte must be positive");
  if (!(bytes_per_token >= 1.0))
    throw std::invalid_argument("normalize_seq_len: bytes_per_token must be >= 1");
  double q = static_cast<double>(l_byte) / bytes_per_token;
  // round-half-to-even
  double r = std::nearbyint(q);
  return std::max<int64_t>(1, static_cast<int64_t>(r));
}

std::string dataset_manifest(const RawCorpus& corpus, const Tokenizer& tok,
                             const PackedDataset& train, const PackedDataset& val) {
  nlohmann::json m;
  m["format"] = "bytelab-dataset-v1";
  m["source_path"] = corpus.source_path;
  m["bytes_total"] = corpus.bytes_total();
  m["split_fraction"] = corpus.split_fraction;
  m["split_point"] = corpus.split_point();
  m["seed"] = corpus.seed;
  m["tokenizer_fingerprint"] = tok.fingerprint();
  m["representation"] = train.representation == Representation::kByte ? "byte" : "bpe";
  m["seq_len"] = train.seq_len;
  m["bytes_per_token"] = train.bytes_per_token;
  m["train_sequences"] = train.n_sequences();
  m["validation_sequences"] = val.n_sequences();
  return m.dump(2) + "\n";
}

}  // namespace bytelab
