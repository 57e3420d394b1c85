#include "bytelab/textgen.hpp"

#include <algorithm>
#include <vector>

#include "bytelab/rng.hpp"

namespace bytelab {

std::string synthetic_english(size_t n_bytes, uint64_t seed) {
  static const char* kSyllables[] = {
      "th", "er", "on",  "an",  "re",  "he",   "in",   "ed",  "nd", "ha",
      "at", "en", "es",  "of",  "or",  "nt",   "ea",   "ti",  "to", "it",
      "st", "io", "le",  "is",  "ou",  "ar",   "as",   "de",  "rt", "ve",
      "con", "pro", "ter", "com", "ment", "tion", "able", "ing", "ly", "al"};
  constexpr int kNumSyllables = 40;
  constexpr int kVocab = 2000;

  Rng rng(derive_seed(seed, "synthetic-english"));
  std::vector<std::string> vocab;
  vocab.reserve(kVocab);
  for (int i = 0; i < kVocab; ++i) {
    int k = 1 + static_cast<int>(rng.below(3));
    std::string w;
    for (int j = 0; j < k; ++j) w += kSyllables[rng.below(kNumSyllables)];
    vocab.push_back(w);
  }
  // Zipf weights 1/(rank+1), sampled by inverse cdf.
  std::vector<double> cdf(kVocab);
  double acc = 0.0;
  for (int i = 0; i < kVocab; ++i) {
    acc += 1.0 / static_cast<double>(i + 1);
    cdf[static_cast<size_t>(i)] = acc;
  }
  auto draw_word = [&]() -> const std::string& {
    double u = rng.uniform01() * acc;
    auto it = std::lower_bound(cdf.begin(), cdf.end(), u);
    size_t idx = static_cast<size_t>(it - cdf.begin());
    if (idx >= vocab.size()) idx = vocab.size() - 1;
    return vocab[idx];
  };

  std::string out;
  out.reserve(n_bytes + 32);
  int words_in_sentence = 0;
  int sentence_target = 6 + static_cast<int>(rng.below(13));
  while (out.size() < n_bytes) {
    if (!out.empty()) out += ' ';
    out += draw_word();
    if (++words_in_sentence >= sentence_target) {
      out += '.';
      words_in_sentence = 0;
      sentence_target = 6 + static_cast<int>(rng.below(13));
    }
  }
  out.resize(n_bytes);
  return out;
}

}  // namespace bytelab
