#include "core/synthgen.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <limits>
#include <set>

#include "core/error.hpp"
#include "core/hashing.hpp"

namespace md {

namespace {

constexpr std::uint64_t kMotionMixingTag = 0xA11CE;
constexpr std::uint64_t kObjectMixingTag = 0xB0B;
constexpr std::uint64_t kPermutationTag = 1;
constexpr std::uint64_t kObjectPermutationTag = 2;
constexpr std::uint64_t kClassTag = 3;

std::uint64_t role_tag(ClassRole role) { return role == ClassRole::Source ? 0x50 : 0x7A; }
std::string role_prefix(ClassRole role) { return role == ClassRole::Source ? "src" : "tgt"; }

std::string pool_token(ClassRole role, const char* kind, std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s%s%03zu", role_prefix(role).c_str(), kind, i);
  return buf;
}

}  // namespace

void SynthConfig::validate() const {
  require(num_classes >= 2, ErrorKind::Config, "synth: num_classes must be >= 2");
  require(videos_per_class >= 1, ErrorKind::Config, "synth: videos_per_class must be >= 1");
  require(frames_per_video >= 1, ErrorKind::Config, "synth: frames_per_video must be >= 1");
  require(frame_dim >= 1, ErrorKind::Config, "synth: frame_dim must be >= 1");
  require(embed_dim >= 1, ErrorKind::Config, "synth: embed_dim must be >= 1");
  require(std::isfinite(noise_sigma) && noise_sigma >= 0.0, ErrorKind::Config, "synth: noise_sigma must be >= 0");
  require(std::isfinite(object_strength) && object_strength >= 0.0, ErrorKind::Config,
          "synth: object_strength must be >= 0");
  require(object_prob >= 0.0 && object_prob <= 1.0, ErrorKind::Config, "synth: object_prob must lie in [0, 1]");
}

SynthWorld::SynthWorld(std::uint64_t world_seed, std::size_t frame_dim, const TextEncoderSpec& text)
    : encoder_(text), motion_mixing_(text.embed_dim, frame_dim), object_mixing_(text.token_dim, frame_dim) {
  require(frame_dim >= 1, ErrorKind::Config, "synth: frame_dim must be >= 1");
  const std::uint64_t a_key = stream_key(world_seed, kMotionMixingTag);
  for (std::size_t i = 0; i < motion_mixing_.size(); ++i) motion_mixing_.data()[i] = signed_unit(stream_bits(a_key, i));
  // Scaled so that B^T o has roughly the per-component spread of A^T e for unit e.
  const double b_scale = 1.0 / std::sqrt(static_cast<double>(text.token_dim));
  const std::uint64_t b_key = stream_key(world_seed, kObjectMixingTag);
  for (std::size_t i = 0; i < object_mixing_.size(); ++i)
    object_mixing_.data()[i] = b_scale * signed_unit(stream_bits(b_key, i));
}

Vector SynthWorld::class_signal(const ClassSet& classes, std::size_t class_index, double object_strength) const {
  require(class_index < classes.descriptions.size(), ErrorKind::NotFound,
          "unknown class index " + std::to_string(class_index));
  const Vector e = encoder_.encode(classes.descriptions[class_index].tokens);
  Vector signal = matvec_transposed(motion_mixing_, e);
  const std::string& object = classes.object_tokens[class_index];
  if (!object.empty() && object_strength != 0.0) {
    const Vector o = token_embed(object, encoder_.spec());
    const Vector leak = matvec_transposed(object_mixing_, o);
    for (std::size_t i = 0; i < signal.size(); ++i) signal[i] += object_strength * leak[i];
  }
  return signal;
}

ClassSet gen_class_set(const SynthConfig& cfg, ClassRole role) {
  cfg.validate();
  if (cfg.num_classes > kTokenPoolSize)
    fail(ErrorKind::Config, "synth: vocabulary exhausted (" + std::to_string(cfg.num_classes) +
                                " classes requested, token pool holds " + std::to_string(kTokenPoolSize) + ")");

  const std::uint64_t tag = role_tag(role);
  const auto anchors = seeded_permutation(kTokenPoolSize, stream_key(cfg.seed, tag, kPermutationTag));
  const auto objects = seeded_permutation(kTokenPoolSize, stream_key(cfg.seed, tag, kObjectPermutationTag));
  const std::int64_t id_base = role == ClassRole::Source ? 0 : kTargetClassIdBase;

  ClassSet set;
  set.role = role;
  for (std::size_t c = 0; c < cfg.num_classes; ++c) {
    SplitMixStream rng(stream_key(cfg.seed, tag, kClassTag, c));
    const std::size_t k = 3 + rng.below(4);

    std::vector<std::size_t> picked{anchors[c]};
    while (picked.size() < k) {
      const std::size_t t = rng.below(kTokenPoolSize);
      if (std::find(picked.begin(), picked.end(), t) == picked.end()) picked.push_back(t);
    }

    Description d;
    d.class_id = id_base + static_cast<std::int64_t>(c);
    d.name = role_prefix(role) + "_class_" + std::to_string(c);
    for (std::size_t t : picked) d.tokens.push_back(pool_token(role, "move", t));

    std::string object;
    if (rng.uniform() < cfg.object_prob) {
      object = pool_token(role, "obj", objects[c]);
      d.tokens.push_back(object);
      set.lexicon.insert(object);
    }
    set.object_tokens.push_back(object);
    set.descriptions.push_back(std::move(d));
  }
  for (auto& d : set.descriptions) d.masked_tokens = mask_objects(d.tokens, set.lexicon);
  return set;
}

VideoSample gen_video(const SynthWorld& world, const ClassSet& classes, std::size_t class_index,
                      std::size_t sample_index, const SynthConfig& cfg) {
  require(class_index < classes.descriptions.size(), ErrorKind::NotFound,
          "gen_video: unknown class index " + std::to_string(class_index));
  require(cfg.frame_dim == world.frame_dim(), ErrorKind::Config, "gen_video: frame_dim disagrees with world");
  const Vector signal = world.class_signal(classes, class_index, cfg.object_strength);
  const auto class_id = static_cast<std::uint64_t>(classes.descriptions[class_index].class_id);

  VideoSample v;
  v.frames = cfg.frames_per_video;
  v.dim = cfg.frame_dim;
  v.label = static_cast<std::uint32_t>(class_index);
  v.data.resize(v.frames * v.dim);
  for (std::size_t t = 0; t < v.frames; ++t) {
    for (std::size_t i = 0; i < v.dim; ++i) {
      double x = signal[i];
      if (cfg.noise_sigma > 0.0) x += cfg.noise_sigma * stream_gaussian(stream_key(cfg.seed, class_id, sample_index, t, i));
      v.data[t * v.dim + i] = static_cast<float>(x);
    }
  }
  return v;
}

std::vector<VideoSample> gen_dataset(const SynthWorld& world, const ClassSet& classes, const SynthConfig& cfg) {
  std::vector<VideoSample> out;
  out.reserve(classes.descriptions.size() * cfg.videos_per_class);
  for (std::size_t c = 0; c < classes.descriptions.size(); ++c)
    for (std::size_t s = 0; s < cfg.videos_per_class; ++s) out.push_back(gen_video(world, classes, c, s, cfg));
  return out;
}

bool verify_disjoint(std::span<const Description> source, std::span<const Description> target) {
  std::set<std::int64_t> ids;
  for (const auto& d : source) ids.insert(d.class_id);
  return std::none_of(target.begin(), target.end(), [&](const Description& d) { return ids.contains(d.class_id); });
}

namespace {

constexpr std::uint8_t kVideoMagic[4] = {'M', 'D', 'V', 'B'};
constexpr std::uint32_t kVideoVersion = 1;
constexpr std::size_t kVideoHeaderBytes = 20;

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(std::span<const std::uint8_t> b, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[at + i]) << (8 * i);
  return v;
}

std::uint32_t checked_u32(std::size_t v, const char* what) {
  require(v <= std::numeric_limits<std::uint32_t>::max(), ErrorKind::InvalidArgument,
          std::string("write_videos: ") + what + " exceeds u32");
  return static_cast<std::uint32_t>(v);
}

}  // namespace

std::vector<std::uint8_t> encode_videos(std::span<const VideoSample> samples) {
  const std::size_t frames = samples.empty() ? 0 : samples.front().frames;
  const std::size_t dim = samples.empty() ? 0 : samples.front().dim;
  for (const auto& s : samples)
    require(s.frames == frames && s.dim == dim && s.data.size() == frames * dim, ErrorKind::InvalidArgument,
            "write_videos: inconsistent sample shapes");

  std::vector<std::uint8_t> out(std::begin(kVideoMagic), std::end(kVideoMagic));
  out.reserve(kVideoHeaderBytes + samples.size() * (4 + 4 * frames * dim));
  put_u32(out, kVideoVersion);
  put_u32(out, checked_u32(samples.size(), "sample count"));
  put_u32(out, checked_u32(frames, "frame count"));
  put_u32(out, checked_u32(dim, "frame dim"));
  for (const auto& s : samples) put_u32(out, s.label);
  for (const auto& s : samples)
    for (float x : s.data) put_u32(out, std::bit_cast<std::uint32_t>(x));
  return out;
}

std::vector<VideoSample> decode_videos(std::span<const std::uint8_t> bytes) {
  require(bytes.size() >= 4 && std::equal(std::begin(kVideoMagic), std::end(kVideoMagic), bytes.begin()),
          ErrorKind::Format, "bad magic");
  require(bytes.size() >= kVideoHeaderBytes, ErrorKind::Format, "truncated");
  require(get_u32(bytes, 4) == kVideoVersion, ErrorKind::Format, "version mismatch");
  const std::uint64_t n = get_u32(bytes, 8);
  const std::uint64_t t = get_u32(bytes, 12);
  const std::uint64_t d = get_u32(bytes, 16);

  // Element count must fit comfortably in memory-addressable bytes.
  constexpr std::uint64_t kLimit = std::numeric_limits<std::uint64_t>::max() / 8;
  const bool overflow = (t != 0 && d > kLimit / t) || (t * d != 0 && n > kLimit / (t * d));
  require(!overflow, ErrorKind::Format, "shape overflow");
  const std::uint64_t payload = kVideoHeaderBytes + n * 4 + n * t * d * 4;
  require(payload == bytes.size(), ErrorKind::Format, "truncated");

  std::vector<VideoSample> out(n);
  std::size_t at = kVideoHeaderBytes;
  for (auto& s : out) {
    s.frames = t;
    s.dim = d;
    s.label = get_u32(bytes, at);
    at += 4;
  }
  for (auto& s : out) {
    s.data.resize(t * d);
    for (float& x : s.data) {
      x = std::bit_cast<float>(get_u32(bytes, at));
      at += 4;
    }
  }
  return out;
}

void write_videos(const std::filesystem::path& path, std::span<const VideoSample> samples) {
  const auto bytes = encode_videos(samples);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(out.good(), ErrorKind::Io, "cannot write '" + path.string() + "'");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  require(out.good(), ErrorKind::Io, "write failed for '" + path.string() + "'");
}

std::vector<VideoSample> read_videos(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorKind::NotFound, "cannot open '" + path.string() + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return decode_videos(bytes);
  } catch (const Error& e) {
    fail(e.kind(), path.string() + ": " + e.what());
  }
}

}  // namespace md
