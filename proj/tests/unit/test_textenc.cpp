#include <doctest.h>

#include <algorithm>
#include <array>
#include <random>

#include "core/error.hpp"
#include "core/hashing.hpp"
#include "core/textenc.hpp"
#include "support/test_support.hpp"

using namespace md;

namespace {

std::vector<std::string> toks(std::initializer_list<const char*> list) { return {list.begin(), list.end()}; }

}  // namespace

TEST_SUITE("textenc") {

TEST_CASE("fnv1a64 and splitmix64 reference values") {
  CHECK(fnv1a64("") == 0xCBF29CE484222325ULL);
  CHECK(fnv1a64("jump") == 0xeb1776ddf832a4cdULL);
  CHECK(splitmix64(0) == 0);
}

TEST_CASE("token embedding matches the reference script") {
  const TextEncoderSpec spec{4, 4, 0x5EED};
  const Vector jump = token_embed("jump", spec);
  const std::array<double, 4> want{0.8349406851545274, -0.49812832387920114, 0.39287321471594483,
                                   -0.20394670193505426};
  for (std::size_t i = 0; i < 4; ++i) CHECK(jump[i] == want[i]);

  const Vector kick = token_embed("kick", spec);
  const std::array<double, 4> want_kick{0.4942915529578149, 0.24391803265748524, -0.26108203288362075,
                                        -0.6162063231905861};
  for (std::size_t i = 0; i < 4; ++i) CHECK(kick[i] == want_kick[i]);
  CHECK(jump != kick);
}

TEST_CASE("token embedding is deterministic and in [-1, 1)") {
  const TextEncoderSpec spec;
  const Vector a = token_embed("swing", spec);
  const Vector b = token_embed("swing", spec);
  CHECK(a == b);
  for (double x : a) {
    CHECK(x >= -1.0);
    CHECK(x < 1.0);
  }
}

TEST_CASE("description encoding matches the reference script") {
  const TextEncoderSpec spec{8, 4, 42};
  const Vector e = encode_description(toks({"swing", "arm", "up"}), spec);
  const std::array<double, 4> want{-0.5529732275262462, 0.3464369651788756, 0.7568514903262761,
                                   -0.03711954185805269};
  for (std::size_t i = 0; i < 4; ++i) CHECK(std::abs(e[i] - want[i]) <= 1e-12);

  const Vector m = encode_description(toks({"swing", "object", "up"}), spec);
  const std::array<double, 4> want_masked{-0.6912379988352197, -0.6662720121327121, 0.012101346742814248,
                                          -0.2795088410442826};
  for (std::size_t i = 0; i < 4; ++i) CHECK(std::abs(m[i] - want_masked[i]) <= 1e-12);
}

TEST_CASE("single-token description is the normalized projection of the token") {
  const TextEncoderSpec spec;
  const Vector e = encode_description(toks({"jump"}), spec);
  const Vector want = l2_normalize(matvec_transposed(projection_matrix(spec), token_embed("jump", spec)));
  REQUIRE(e.size() == spec.embed_dim);
  for (std::size_t i = 0; i < e.size(); ++i) CHECK(std::abs(e[i] - want[i]) <= 1e-15);
}

TEST_CASE("encoding ignores token order") {
  const TextEncoderSpec spec;
  const TextEncoder enc(spec);
  const Vector a = enc.encode(toks({"raise", "the", "arm", "slowly"}));
  const Vector b = enc.encode(toks({"slowly", "arm", "raise", "the"}));
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == doctest::Approx(b[i]).epsilon(1e-14));
}

TEST_CASE("encoding rejects an empty token list and a bad spec") {
  CHECK_THROWS_AS(encode_description(std::vector<std::string>{}, TextEncoderSpec{}), Error);
  CHECK_THROWS_AS(encode_description(toks({"a"}), TextEncoderSpec{0, 4, 1}), Error);
}

TEST_CASE("mask_objects") {
  const Lexicon guitar{"guitar"};
  CHECK(mask_objects(toks({"strumming", "the", "guitar", "strings"}), guitar) ==
        toks({"strumming", "the", "object", "strings"}));
  const auto in = toks({"a", "b"});
  CHECK(mask_objects(in, Lexicon{}) == in);
  CHECK(mask_objects(in, Lexicon{"a", "b"}) == toks({"object", "object"}));
}

TEST_CASE("tokenize lowercases and strips punctuation") {
  CHECK(tokenize("Strumming the Guitar, quickly!") == toks({"strumming", "the", "guitar", "quickly"}));
  CHECK(tokenize("   ").empty());
}

TEST_CASE("corpus statistics") {
  std::vector<Description> ds(2);
  ds[0].class_id = 0;
  ds[0].tokens = toks({"a", "b", "c"});
  ds[1].class_id = 1;
  ds[1].tokens = toks({"a", "b"});
  const auto s = corpus_stats(ds);
  CHECK(s.count == 2);
  CHECK(s.avg_words == doctest::Approx(2.5));

  ds.push_back(ds[0]);
  ds.back().class_id = 2;
  CHECK(corpus_stats(ds).count == 2);
  CHECK(corpus_stats(ds).descriptions == 3);
}

TEST_CASE("description JSONL round trip") {
  test::TempDir dir("textenc");
  std::vector<Description> ds(2);
  ds[0] = {3, "swing", toks({"swing", "bat"}), toks({"swing", "object"})};
  ds[1] = {7, "kick", toks({"kick", "leg"}), toks({"kick", "leg"})};
  write_descriptions(dir / "d.jsonl", ds);
  CHECK(read_descriptions(dir / "d.jsonl") == ds);
}

TEST_CASE("description reader rejects unknown keys and missing files") {
  test::TempDir dir("textenc_bad");
  test::write_text(dir / "bad.jsonl",
                   R"({"class_id":1,"name":"a","tokens":["x"],"masked_tokens":["x"],"extra":1})"
                   "\n");
  CHECK_THROWS_AS(read_descriptions(dir / "bad.jsonl"), Error);
  CHECK_THROWS_AS(read_descriptions(dir / "missing.jsonl"), Error);
}

TEST_CASE("plain-text corpus reads one sentence per line") {
  test::TempDir dir("textenc_plain");
  test::write_text(dir / "c.txt", "Swinging a bat.\n\nKicking a ball with the leg\n");
  const auto ds = read_description_corpus(dir / "c.txt");
  REQUIRE(ds.size() == 2);
  CHECK(ds[0].tokens == toks({"swinging", "a", "bat"}));
  CHECK(corpus_stats(ds).avg_words == doctest::Approx(4.5));
}

TEST_CASE("lexicon round trip") {
  test::TempDir dir("lexicon");
  const Lexicon lex{"ball", "bat", "guitar"};
  write_lexicon(dir / "lex.txt", lex);
  CHECK(read_lexicon(dir / "lex.txt") == lex);
}

TEST_CASE("property: masking is idempotent and preserves length") {
  std::mt19937_64 rng(31);
  const std::vector<std::string> vocab = toks({"a", "b", "c", "d", "e", "f", "object"});
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<std::string> words(1 + rng() % 10);
    for (auto& w : words) w = vocab[rng() % vocab.size()];
    Lexicon lex;
    for (const auto& v : vocab)
      if (rng() % 2) lex.insert(v);
    const auto once = mask_objects(words, lex);
    CHECK(once.size() == words.size());
    CHECK(mask_objects(once, lex) == once);
    for (const auto& w : once) CHECK_FALSE((lex.contains(w) && w != kObjectToken));
  }
}

TEST_CASE("property: encodings have unit norm") {
  const TextEncoder enc(TextEncoderSpec{});
  std::mt19937_64 rng(32);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<std::string> words(1 + rng() % 8);
    for (auto& w : words) w = "w" + std::to_string(rng() % 50);
    CHECK(norm2(enc.encode(words)) == doctest::Approx(1.0).epsilon(1e-13));
  }
}

}  // TEST_SUITE
