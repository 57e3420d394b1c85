#pragma once

#include <cstdint>
#include <string>

namespace bytelab {

// Deterministic English-like text: a Zipf-weighted vocabulary of words built
// from common English syllables, grouped into sentences. Used for desk-scale
// training runs and compressibility experiments where a real multi-megabyte
// corpus is not available.
std::string synthetic_english(size_t n_bytes, uint64_t seed);

}  // namespace bytelab
