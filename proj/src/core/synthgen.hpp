#pragma once

// Synthetic source/target benchmark with a known link between description
// embeddings and frame features:
//
//   frame_t = A^T e_c + beta * B^T o_c + noise_t
//
// where e_c is the frozen embedding of class c's unmasked description and o_c
// the token embedding of its object word (zero when the class has none). A
// shared world (A, B) makes zero-shot transfer to disjoint target classes
// possible by construction; beta controls how much the object word leaks
// into the frames.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "core/numkit.hpp"
#include "core/textenc.hpp"

namespace md {

enum class ClassRole { Source, Target };

inline constexpr std::size_t kTokenPoolSize = 128;
inline constexpr std::int64_t kTargetClassIdBase = 1000;

struct SynthConfig {
  std::uint64_t seed = 1;
  std::size_t num_classes = 10;
  std::size_t videos_per_class = 20;
  std::size_t frames_per_video = 8;
  std::size_t frame_dim = 32;
  std::size_t embed_dim = 16;
  double noise_sigma = 0.1;
  double object_strength = 0.0;
  double object_prob = 0.0;

  void validate() const;
  friend bool operator==(const SynthConfig&, const SynthConfig&) = default;
};

struct VideoSample {
  std::size_t frames = 0;  // T
  std::size_t dim = 0;     // d_in
  std::vector<float> data; // frame-major, T x d_in
  std::uint32_t label = 0; // index into the class set

  std::span<const float> frame(std::size_t t) const { return {data.data() + t * dim, dim}; }
  friend bool operator==(const VideoSample&, const VideoSample&) = default;
};

struct ClassSet {
  ClassRole role = ClassRole::Source;
  std::vector<Description> descriptions;  // ascending class_id; label i refers to descriptions[i]
  std::vector<std::string> object_tokens; // parallel; empty string when the class has no object
  Lexicon lexicon;                        // every object token used by this set
};

class SynthWorld {
 public:
  SynthWorld(std::uint64_t world_seed, std::size_t frame_dim, const TextEncoderSpec& text);

  const Matrix& motion_mixing() const noexcept { return motion_mixing_; }  // A: d x d_in
  const Matrix& object_mixing() const noexcept { return object_mixing_; }  // B: d_txt x d_in
  const TextEncoder& encoder() const noexcept { return encoder_; }
  std::size_t frame_dim() const noexcept { return motion_mixing_.cols(); }

  // Noise-free per-class frame mean A^T e_c + beta B^T o_c.
  Vector class_signal(const ClassSet& classes, std::size_t class_index, double object_strength) const;

 private:
  TextEncoder encoder_;
  Matrix motion_mixing_;
  Matrix object_mixing_;
};

ClassSet gen_class_set(const SynthConfig& cfg, ClassRole role);

VideoSample gen_video(const SynthWorld& world, const ClassSet& classes, std::size_t class_index,
                      std::size_t sample_index, const SynthConfig& cfg);

// All videos, class-major then sample index.
std::vector<VideoSample> gen_dataset(const SynthWorld& world, const ClassSet& classes, const SynthConfig& cfg);

bool verify_disjoint(std::span<const Description> source, std::span<const Description> target);

// Little-endian "MDVB" v1: N, T, D as u32, N labels as u32, N*T*D float32.
void write_videos(const std::filesystem::path& path, std::span<const VideoSample> samples);
std::vector<VideoSample> read_videos(const std::filesystem::path& path);

std::vector<std::uint8_t> encode_videos(std::span<const VideoSample> samples);
std::vector<VideoSample> decode_videos(std::span<const std::uint8_t> bytes);

}  // namespace md
