#include <doctest.h>

#include <cmath>
#include <set>

#include "core/error.hpp"
#include "core/synthgen.hpp"
#include "support/test_support.hpp"

using namespace md;

namespace {

SynthConfig small_cfg(std::uint64_t seed) {
  SynthConfig c;
  c.seed = seed;
  c.num_classes = 5;
  c.videos_per_class = 3;
  c.frames_per_video = 4;
  return c;
}

}  // namespace

TEST_SUITE("synthgen") {

TEST_CASE("class sets are deterministic") {
  SynthConfig c = small_cfg(9);
  c.object_prob = 0.5;
  const ClassSet a = gen_class_set(c, ClassRole::Source);
  const ClassSet b = gen_class_set(c, ClassRole::Source);
  CHECK(a.descriptions == b.descriptions);
  CHECK(a.object_tokens == b.object_tokens);
  CHECK(a.lexicon == b.lexicon);
}

TEST_CASE("source and target class sets are disjoint in ids and tokens") {
  SynthConfig c = test::default_source();
  c.object_prob = 1.0;
  const ClassSet src = gen_class_set(c, ClassRole::Source);
  const ClassSet tgt = gen_class_set(test::default_target(), ClassRole::Target);
  CHECK(verify_disjoint(src.descriptions, tgt.descriptions));
  std::set<std::string> src_tokens;
  for (const auto& d : src.descriptions) src_tokens.insert(d.tokens.begin(), d.tokens.end());
  for (const auto& d : tgt.descriptions)
    for (const auto& t : d.tokens) CHECK_FALSE(src_tokens.contains(t));
}

TEST_CASE("descriptions within a set are distinct and ids ascend") {
  const ClassSet s = gen_class_set(test::default_source(), ClassRole::Source);
  REQUIRE(s.descriptions.size() == 40);
  std::set<std::vector<std::string>> seen;
  for (std::size_t i = 0; i < s.descriptions.size(); ++i) {
    const auto& d = s.descriptions[i];
    CHECK(d.tokens.size() >= 3);
    CHECK(d.tokens.size() <= 6);
    seen.insert(d.tokens);
    if (i > 0) CHECK(d.class_id > s.descriptions[i - 1].class_id);
  }
  CHECK(seen.size() == s.descriptions.size());
}

TEST_CASE("without objects masked tokens equal tokens") {
  const ClassSet s = gen_class_set(small_cfg(4), ClassRole::Target);
  CHECK(s.lexicon.empty());
  for (const auto& d : s.descriptions) CHECK(d.masked_tokens == d.tokens);
}

TEST_CASE("with objects every class carries one masked object token") {
  SynthConfig c = small_cfg(4);
  c.object_prob = 1.0;
  const ClassSet s = gen_class_set(c, ClassRole::Target);
  CHECK(s.lexicon.size() == c.num_classes);
  for (std::size_t i = 0; i < s.descriptions.size(); ++i) {
    const auto& d = s.descriptions[i];
    CHECK(d.tokens.back() == s.object_tokens[i]);
    CHECK(d.masked_tokens.back() == kObjectToken);
    CHECK(std::vector(d.tokens.begin(), d.tokens.end() - 1) ==
          std::vector(d.masked_tokens.begin(), d.masked_tokens.end() - 1));
  }
}

TEST_CASE("too many classes exhaust the vocabulary") {
  SynthConfig c = small_cfg(1);
  c.num_classes = kTokenPoolSize + 1;
  CHECK_THROWS_AS(gen_class_set(c, ClassRole::Source), Error);
}

TEST_CASE("config validation") {
  SynthConfig c = small_cfg(1);
  c.object_prob = 1.5;
  CHECK_THROWS_AS(c.validate(), Error);
  c = small_cfg(1);
  c.noise_sigma = -0.1;
  CHECK_THROWS_AS(c.validate(), Error);
  c = small_cfg(1);
  c.num_classes = 1;
  CHECK_THROWS_AS(c.validate(), Error);
}

TEST_CASE("noiseless frames equal the projected class embedding") {
  SynthConfig c = small_cfg(2);
  c.noise_sigma = 0.0;
  const SynthWorld world(1, c.frame_dim, TextEncoderSpec{});
  const ClassSet s = gen_class_set(c, ClassRole::Source);
  const test::BayesOracle oracle(world, s, 0.0);
  for (const auto& v : gen_dataset(world, s, c)) {
    const Vector& want = oracle.signals()[v.label];
    for (std::size_t t = 0; t < v.frames; ++t)
      for (std::size_t i = 0; i < v.dim; ++i) CHECK(v.frame(t)[i] == static_cast<float>(want[i]));
  }
}

TEST_CASE("frame-mean noise has standard deviation sigma over root T") {
  SynthConfig c = small_cfg(21);
  c.noise_sigma = 0.1;
  c.frames_per_video = 8;
  const SynthWorld world(1, c.frame_dim, TextEncoderSpec{});
  const ClassSet s = gen_class_set(c, ClassRole::Source);
  const Vector signal = world.class_signal(s, 0, 0.0);
  constexpr std::size_t kVideos = 1000;
  Vector sum_sq(c.frame_dim, 0.0);
  for (std::size_t n = 0; n < kVideos; ++n) {
    const VideoSample v = gen_video(world, s, 0, n, c);
    for (std::size_t i = 0; i < v.dim; ++i) {
      double mean = 0.0;
      for (std::size_t t = 0; t < v.frames; ++t) mean += v.frame(t)[i];
      mean /= static_cast<double>(v.frames);
      sum_sq[i] += (mean - signal[i]) * (mean - signal[i]);
    }
  }
  const double expected = 0.1 / std::sqrt(8.0);
  for (double s2 : sum_sq) {
    const double sd = std::sqrt(s2 / kVideos);
    CHECK(sd > 0.8 * expected);
    CHECK(sd < 1.2 * expected);
  }
}

TEST_CASE("videos are reproducible from (seed, class, sample)") {
  const SynthConfig c = small_cfg(5);
  const SynthWorld world(3, c.frame_dim, TextEncoderSpec{});
  const ClassSet s = gen_class_set(c, ClassRole::Source);
  CHECK(gen_video(world, s, 2, 1, c) == gen_video(world, s, 2, 1, c));
  CHECK(gen_video(world, s, 2, 1, c).data != gen_video(world, s, 2, 2, c).data);
}

TEST_CASE("object leak shifts the class signal") {
  SynthConfig c = small_cfg(6);
  c.object_prob = 1.0;
  const SynthWorld world(1, c.frame_dim, TextEncoderSpec{});
  const ClassSet s = gen_class_set(c, ClassRole::Source);
  CHECK(world.class_signal(s, 0, 0.0) != world.class_signal(s, 0, 2.0));
}

TEST_CASE("verify_disjoint") {
  auto ids = [](std::int64_t lo, std::int64_t hi) {
    std::vector<Description> out;
    for (std::int64_t i = lo; i <= hi; ++i) out.push_back(Description{i, "c", {"t"}, {"t"}});
    return out;
  };
  CHECK(verify_disjoint(ids(0, 39), ids(100, 109)));
  CHECK_FALSE(verify_disjoint(ids(0, 39), ids(39, 48)));
  CHECK(verify_disjoint(ids(0, 39), {}));
}

TEST_CASE("video file round trip is bit-exact") {
  test::TempDir dir("videos");
  SynthConfig c = small_cfg(8);
  c.num_classes = 3;
  c.videos_per_class = 1;
  c.frames_per_video = 2;
  c.frame_dim = 4;
  const SynthWorld world(1, c.frame_dim, TextEncoderSpec{});
  const auto videos = gen_dataset(world, gen_class_set(c, ClassRole::Source), c);
  REQUIRE(videos.size() == 3);
  write_videos(dir / "v.mdvb", videos);
  CHECK(read_videos(dir / "v.mdvb") == videos);
  const auto bytes = test::read_bytes(dir / "v.mdvb");
  CHECK(bytes.size() == 20 + 3 * 4 + 3 * 2 * 4 * 4);
  CHECK(encode_videos(decode_videos(bytes)) == bytes);
}

TEST_CASE("video decoder rejects corrupt input") {
  SynthConfig c = small_cfg(8);
  const SynthWorld world(1, c.frame_dim, TextEncoderSpec{});
  const auto bytes = encode_videos(gen_dataset(world, gen_class_set(c, ClassRole::Source), c));

  auto message = [](std::vector<std::uint8_t> b) -> std::string {
    try {
      decode_videos(b);
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::Format);
      return e.what();
    }
    return "";
  };

  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  CHECK(message(bad_magic) == "bad magic");

  auto short_file = bytes;
  short_file.pop_back();
  CHECK(message(short_file) == "truncated");

  auto long_file = bytes;
  long_file.push_back(0);
  CHECK(message(long_file) == "truncated");

  CHECK(message({bytes.begin(), bytes.begin() + 10}) == "truncated");

  auto version = bytes;
  version[4] = 9;
  CHECK(message(version) == "version mismatch");

  auto huge = bytes;
  for (int i = 12; i < 20; ++i) huge[i] = 0xFF;
  CHECK_FALSE(message(huge).empty());
}

TEST_CASE("reading a missing video file reports not found") {
  try {
    read_videos("/nonexistent/dir/v.mdvb");
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::NotFound);
  }
}

TEST_CASE("property: random byte corruption never crashes the decoder") {
  SynthConfig c = small_cfg(8);
  const SynthWorld world(1, c.frame_dim, TextEncoderSpec{});
  const auto bytes = encode_videos(gen_dataset(world, gen_class_set(c, ClassRole::Source), c));
  std::mt19937_64 rng(404);
  for (int trial = 0; trial < 300; ++trial) {
    auto b = bytes;
    b.resize(rng() % (bytes.size() + 8));
    for (int k = 0; k < 3 && !b.empty(); ++k) b[rng() % std::min<std::size_t>(b.size(), 24)] ^= 0xFF;
    try {
      const auto v = decode_videos(b);
      for (const auto& s : v) CHECK(s.data.size() == s.frames * s.dim);
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::Format);
    }
  }
}

}  // TEST_SUITE
