#include "core/textenc.hpp"

#include <cctype>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "core/error.hpp"
#include "core/hashing.hpp"

namespace md {

using nlohmann::json;

void TextEncoderSpec::validate() const {
  require(token_dim >= 1, ErrorKind::Config, "text encoder: token_dim must be >= 1");
  require(embed_dim >= 1, ErrorKind::Config, "text encoder: embed_dim must be >= 1");
}

void Description::validate() const {
  const std::string where = "description " + std::to_string(class_id);
  require(!tokens.empty(), ErrorKind::InvalidArgument, where + ": empty token list");
  require(masked_tokens.size() == tokens.size(), ErrorKind::InvalidArgument,
          where + ": masked_tokens length differs from tokens");
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    require(!tokens[i].empty(), ErrorKind::InvalidArgument, where + ": empty token");
    require(masked_tokens[i] == tokens[i] || masked_tokens[i] == kObjectToken, ErrorKind::InvalidArgument,
            where + ": masked token '" + masked_tokens[i] + "' is neither the original nor 'object'");
  }
}

Vector token_embed(std::string_view token, const TextEncoderSpec& spec) {
  require(!token.empty(), ErrorKind::InvalidArgument, "token_embed: empty token");
  const std::uint64_t h0 = fnv1a64(token);
  Vector e(spec.token_dim);
  for (std::size_t j = 0; j < spec.token_dim; ++j) e[j] = signed_unit(splitmix64(h0 + (j + 1) * kGoldenGamma));
  return e;
}

Matrix projection_matrix(const TextEncoderSpec& spec) {
  Matrix p(spec.token_dim, spec.embed_dim);
  for (std::size_t i = 0; i < spec.token_dim; ++i)
    for (std::size_t j = 0; j < spec.embed_dim; ++j)
      p(i, j) = signed_unit(splitmix64(spec.projection_seed + (i * spec.embed_dim + j + 1) * kGoldenGamma));
  return p;
}

TextEncoder::TextEncoder(TextEncoderSpec spec) : spec_(spec) {
  spec_.validate();
  projection_ = projection_matrix(spec_);
}

Vector TextEncoder::encode(std::span<const std::string> tokens) const {
  require(!tokens.empty(), ErrorKind::InvalidArgument, "encode_description: empty token list");
  Vector mean(spec_.token_dim, 0.0);
  for (const auto& t : tokens) {
    const Vector e = token_embed(t, spec_);
    for (std::size_t j = 0; j < mean.size(); ++j) mean[j] += e[j];
  }
  for (double& x : mean) x /= static_cast<double>(tokens.size());
  return l2_normalize(matvec_transposed(projection_, mean));
}

Vector encode_description(std::span<const std::string> tokens, const TextEncoderSpec& spec) {
  return TextEncoder(spec).encode(tokens);
}

std::vector<std::string> mask_objects(std::span<const std::string> tokens, const Lexicon& lexicon) {
  std::vector<std::string> out(tokens.begin(), tokens.end());
  for (auto& t : out)
    if (lexicon.contains(t)) t = kObjectToken;
  return out;
}

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string cur;
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isspace(c)) {
      if (!cur.empty()) tokens.push_back(std::move(cur));
      cur.clear();
    } else if (c < 0x80 && std::ispunct(c)) {
      continue;
    } else {
      cur.push_back(c < 0x80 ? static_cast<char>(std::tolower(c)) : ch);
    }
  }
  if (!cur.empty()) tokens.push_back(std::move(cur));
  return tokens;
}

CorpusStats corpus_stats(std::span<const Description> descriptions) {
  require(!descriptions.empty(), ErrorKind::InvalidArgument, "corpus_stats: empty corpus");
  std::set<std::vector<std::string>> unique;
  std::size_t words = 0;
  for (const auto& d : descriptions) {
    unique.insert(d.tokens);
    words += d.tokens.size();
  }
  return {unique.size(), descriptions.size(),
          static_cast<double>(words) / static_cast<double>(descriptions.size())};
}

namespace {

std::ifstream open_for_read(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(in.good(), ErrorKind::NotFound, "cannot open '" + path.string() + "'");
  return in;
}

Description parse_description(const json& j, const std::string& where) {
  require(j.is_object(), ErrorKind::Format, where + ": expected a JSON object");
  for (const auto& [key, _] : j.items())
    require(key == "class_id" || key == "name" || key == "tokens" || key == "masked_tokens", ErrorKind::Format,
            where + ": unknown key '" + key + "'");
  try {
    Description d;
    d.class_id = j.at("class_id").get<std::int64_t>();
    d.name = j.at("name").get<std::string>();
    d.tokens = j.at("tokens").get<std::vector<std::string>>();
    d.masked_tokens = j.contains("masked_tokens") ? j.at("masked_tokens").get<std::vector<std::string>>() : d.tokens;
    return d;
  } catch (const json::exception& e) {
    fail(ErrorKind::Format, where + ": " + e.what());
  }
}

}  // namespace

std::vector<Description> read_descriptions(const std::filesystem::path& path) {
  auto in = open_for_read(path);
  std::vector<Description> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = path.string() + ":" + std::to_string(lineno);
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      fail(ErrorKind::Format, where + ": " + e.what());
    }
    Description d = parse_description(j, where);
    try {
      d.validate();
    } catch (const Error& e) {
      fail(ErrorKind::Format, where + ": " + e.what());
    }
    out.push_back(std::move(d));
  }
  return out;
}

void write_descriptions(const std::filesystem::path& path, std::span<const Description> descriptions) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(out.good(), ErrorKind::Io, "cannot write '" + path.string() + "'");
  for (const auto& d : descriptions) {
    json j = {{"class_id", d.class_id}, {"name", d.name}, {"tokens", d.tokens}, {"masked_tokens", d.masked_tokens}};
    out << j.dump() << '\n';
  }
  require(out.good(), ErrorKind::Io, "write failed for '" + path.string() + "'");
}

std::vector<Description> read_description_corpus(const std::filesystem::path& path) {
  if (path.extension() == ".jsonl") return read_descriptions(path);
  auto in = open_for_read(path);
  std::vector<Description> out;
  std::string line;
  while (std::getline(in, line)) {
    auto tokens = tokenize(line);
    if (tokens.empty()) continue;
    Description d;
    d.class_id = static_cast<std::int64_t>(out.size());
    d.name = "line" + std::to_string(out.size());
    d.masked_tokens = tokens;
    d.tokens = std::move(tokens);
    out.push_back(std::move(d));
  }
  return out;
}

Lexicon read_lexicon(const std::filesystem::path& path) {
  auto in = open_for_read(path);
  Lexicon lex;
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream ss(line);
    std::string tok;
    if (ss >> tok) lex.insert(tok);
  }
  return lex;
}

void write_lexicon(const std::filesystem::path& path, const Lexicon& lexicon) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(out.good(), ErrorKind::Io, "cannot write '" + path.string() + "'");
  for (const auto& t : lexicon) out << t << '\n';
}

}  // namespace md
