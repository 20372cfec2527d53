#pragma once

// Frozen text encoder used to turn motion descriptions into class prototypes.
// It is a deterministic bag-of-tokens model: every token hashes to a fixed
// vector, a description is the mean of its token vectors pushed through a
// fixed projection and normalized to unit length. Nothing here is trainable.

#include <cstdint>
#include <filesystem>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "core/numkit.hpp"

namespace md {

inline constexpr std::string_view kObjectToken = "object";

struct TextEncoderSpec {
  std::size_t token_dim = 32;
  std::size_t embed_dim = 16;
  std::uint64_t projection_seed = 0x5EED;

  void validate() const;
  friend bool operator==(const TextEncoderSpec&, const TextEncoderSpec&) = default;
};

struct Description {
  std::int64_t class_id = 0;
  std::string name;
  std::vector<std::string> tokens;
  std::vector<std::string> masked_tokens;

  // tokens nonempty; masked_tokens parallel to tokens, differing only where
  // the masked side reads "object".
  void validate() const;
  friend bool operator==(const Description&, const Description&) = default;
};

using Lexicon = std::set<std::string, std::less<>>;

Vector token_embed(std::string_view token, const TextEncoderSpec& spec);

// token_dim x embed_dim projection, entries uniform in [-1, 1).
Matrix projection_matrix(const TextEncoderSpec& spec);

class TextEncoder {
 public:
  explicit TextEncoder(TextEncoderSpec spec);

  const TextEncoderSpec& spec() const noexcept { return spec_; }
  Vector encode(std::span<const std::string> tokens) const;

 private:
  TextEncoderSpec spec_;
  Matrix projection_;
};

// One-shot convenience over TextEncoder.
Vector encode_description(std::span<const std::string> tokens, const TextEncoderSpec& spec);

std::vector<std::string> mask_objects(std::span<const std::string> tokens, const Lexicon& lexicon);

// Lowercases ASCII, drops ASCII punctuation, splits on whitespace.
std::vector<std::string> tokenize(std::string_view text);

struct CorpusStats {
  std::size_t count = 0;        // unique token sequences
  std::size_t descriptions = 0; // entries read
  double avg_words = 0.0;       // mean token count over all entries
};

CorpusStats corpus_stats(std::span<const Description> descriptions);

// JSON Lines: {"class_id", "name", "tokens", "masked_tokens"?}.
std::vector<Description> read_descriptions(const std::filesystem::path& path);
void write_descriptions(const std::filesystem::path& path, std::span<const Description> descriptions);

// Statistics input: a .jsonl description file, or plain text with one
// description sentence per nonempty line.
std::vector<Description> read_description_corpus(const std::filesystem::path& path);

Lexicon read_lexicon(const std::filesystem::path& path);
void write_lexicon(const std::filesystem::path& path, const Lexicon& lexicon);

}  // namespace md
