#include <doctest.h>

#include <algorithm>
#include <numeric>
#include <vector>

#include "bytelab/corruption.hpp"
#include "bytelab/rng.hpp"
#include "bytelab/textgen.hpp"
#include "bytelab/tokenizer.hpp"

using namespace bytelab;

namespace {

bool is_permutation_of_identity(const std::vector<int>& pi) {
  std::vector<int> s = pi;
  std::sort(s.begin(), s.end());
  for (size_t i = 0; i < s.size(); ++i)
    if (s[i] != static_cast<int>(i)) return false;
  return true;
}

}  // namespace

TEST_CASE("every strategy yields a bijection") {
  for (auto strat : {PermutationStrategy::kIdentity, PermutationStrategy::kGlobal,
                     PermutationStrategy::kInterBlock, PermutationStrategy::kIntraBlock,
                     PermutationStrategy::kGlobalBpe}) {
    for (int len : {1, 7, 8, 64}) {
      for (uint64_t seed : {0ULL, 1ULL, 2ULL}) {
        PermutationSpec spec = make_permutation(strat, len, 3, seed);
        CHECK(is_permutation_of_identity(spec.pi));
      }
    }
  }
  CHECK_THROWS(make_permutation(PermutationStrategy::kGlobal, 0, 1, 0));
  CHECK_THROWS(make_permutation(PermutationStrategy::kGlobal, 8, 0, 0));
}

TEST_CASE("identity strategy leaves everything in place") {
  PermutationSpec spec = make_permutation(PermutationStrategy::kIdentity, 10, 4, 99);
  for (int i = 0; i < 10; ++i) CHECK(spec.pi[static_cast<size_t>(i)] == i);
}

TEST_CASE("intra-block keeps block membership, inter-block keeps within-block order") {
  const int L = 21, k = 8;  // ragged final block of 5
  for (uint64_t seed = 0; seed < 20; ++seed) {
    PermutationSpec intra = make_permutation(PermutationStrategy::kIntraBlock, L, k, seed);
    for (int j = 0; j < L; ++j) CHECK(intra.pi[static_cast<size_t>(j)] / k == j / k);

    PermutationSpec inter = make_permutation(PermutationStrategy::kInterBlock, L, k, seed);
    // consecutive outputs inside one destination block come from one source
    // block in original order
    for (int j = 0; j + 1 < L; ++j) {
      int a = inter.pi[static_cast<size_t>(j)], b = inter.pi[static_cast<size_t>(j + 1)];
      if (a / k == b / k) CHECK(b == a + 1);
    }
  }
}

TEST_CASE("inter-block with k >= L is the identity") {
  PermutationSpec spec = make_permutation(PermutationStrategy::kInterBlock, 6, 8, 5);
  for (int i = 0; i < 6; ++i) CHECK(spec.pi[static_cast<size_t>(i)] == i);
}

TEST_CASE("apply carries position ids; unapply inverts exactly") {
  std::vector<int> seq = {10, 11, 12, 13, 14, 15, 16};
  for (uint64_t seed = 0; seed < 10; ++seed) {
    PermutationSpec spec = make_permutation(PermutationStrategy::kGlobal, 7, 1, seed);
    PermutedSequence ps = apply_permutation(seq, spec);
    for (size_t j = 0; j < 7; ++j) {
      CHECK(ps.tokens[j] == seq[static_cast<size_t>(spec.pi[j])]);
      CHECK(ps.position_ids[j] == spec.pi[j]);
    }
    CHECK(unapply_permutation(ps.tokens, spec) == seq);
  }
  PermutationSpec spec = make_permutation(PermutationStrategy::kGlobal, 5, 1, 0);
  CHECK_THROWS(apply_permutation(seq, spec));
}

TEST_CASE("permutations are seed-deterministic") {
  PermutationSpec a = make_permutation(PermutationStrategy::kGlobal, 100, 1, 7);
  PermutationSpec b = make_permutation(PermutationStrategy::kGlobal, 100, 1, 7);
  CHECK(a.pi == b.pi);
  PermutationSpec c = make_permutation(PermutationStrategy::kGlobal, 100, 1, 8);
  CHECK(a.pi != c.pi);
}

TEST_CASE("identity permutation loses no compressibility") {
  ByteString text = synthetic_english(200000, 17);
  PermutationSpec spec = make_permutation(PermutationStrategy::kIdentity, 2048, 8, 0);
  RegularityReport r = regularity_loss(text, spec, deflate_compressor());
  CHECK(r.loss_pct == 0.0);
  CHECK(r.size_growth_pct == 0.0);
  CHECK(r.c_orig == r.c_perm);
  CHECK(r.c_orig > 0.3);  // synthetic English is quite compressible
}

TEST_CASE("incompressible noise is immune to permutation") {
  Rng rng(5);
  ByteString noise(1 << 16, '\0');
  for (auto& ch : noise) ch = static_cast<char>(rng.below(256));
  PermutationSpec spec = make_permutation(PermutationStrategy::kGlobal, 2048, 8, 1);
  RegularityReport r = regularity_loss(noise, spec, deflate_compressor());
  CHECK(std::abs(r.c_orig) < 0.01);
  CHECK(std::abs(r.c_perm) < 0.01);
}

TEST_CASE("global byte shuffle destroys more structure than BPE-token shuffle") {
  ByteString text = synthetic_english(400000, 18);
  Tokenizer tok = train_bpe(text.substr(0, 100000), 400);
  PermutationSpec byte_spec = make_permutation(PermutationStrategy::kGlobal, 2048, 8, 2);
  PermutationSpec bpe_spec = make_permutation(PermutationStrategy::kGlobalBpe, 512, 8, 2);
  Compressor comp = deflate_compressor();
  RegularityReport rb = regularity_loss(text, byte_spec, comp);
  RegularityReport rt = regularity_loss(text, bpe_spec, comp, &tok);
  CHECK(rb.loss_pct > rt.loss_pct);
  CHECK(rt.loss_pct > 0.0);
  CHECK_THROWS(regularity_loss(text, bpe_spec, comp, nullptr));
}

TEST_CASE("csv row format") {
  RegularityReport r;
  r.strategy = "global";
  r.block_size = 8;
  r.seed = 3;
  r.compressor = "deflate9";
  r.c_orig = 0.5;
  r.c_perm = 0.25;
  r.loss_pct = 50.0;
  CHECK(regularity_csv_header() == "strategy,k,seed,compressor,c_orig,c_perm,loss_pct\n");
  CHECK(regularity_csv_row(r) == "global,8,3,deflate9,0.5,0.25,50\n");
}

TEST_CASE("strategy names round-trip") {
  for (auto s : {PermutationStrategy::kIdentity, PermutationStrategy::kGlobal,
                 PermutationStrategy::kInterBlock, PermutationStrategy::kIntraBlock,
                 PermutationStrategy::kGlobalBpe})
    CHECK(parse_strategy(strategy_name(s)) == s);
  CHECK_THROWS(parse_strategy("bogus"));
}
