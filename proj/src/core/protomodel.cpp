#include "core/protomodel.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <iterator>
#include <map>
#include <numeric>

#include "core/error.hpp"
#include "core/hashing.hpp"
#include "core/json_fields.hpp"

namespace md {

using nlohmann::json;

void ModelConfig::validate() const {
  require(frame_dim >= 1, ErrorKind::Config, "model: frame_dim must be >= 1");
  require(hidden >= 1, ErrorKind::Config, "model: hidden must be >= 1");
  require(embed_dim >= 1, ErrorKind::Config, "model: embed_dim must be >= 1");
  require(frames >= 1, ErrorKind::Config, "model: frames must be >= 1");
  require(temporal != TemporalMode::Attention || attention_layers >= 1, ErrorKind::Config,
          "model: attention_layers must be >= 1 in attention mode");
  require(std::isfinite(temperature) && temperature > 0.0, ErrorKind::Config, "model: temperature must be positive");
}

json to_json(const ModelConfig& cfg) {
  return {{"frame_dim", cfg.frame_dim},
          {"hidden", cfg.hidden},
          {"embed_dim", cfg.embed_dim},
          {"frames", cfg.frames},
          {"temporal", cfg.temporal == TemporalMode::Mean ? "mean" : "attention"},
          {"attention_layers", cfg.attention_layers},
          {"normalize_features", cfg.normalize_features},
          {"temperature", cfg.temperature},
          {"init_seed", cfg.init_seed}};
}

ModelConfig model_config_from_json(const json& j, const std::string& path) {
  ModelConfig cfg;
  JsonFields f(j, path);
  f.read("frame_dim", cfg.frame_dim);
  f.read("hidden", cfg.hidden);
  f.read("embed_dim", cfg.embed_dim);
  f.read("frames", cfg.frames);
  std::string temporal = "mean";
  f.read("temporal", temporal);
  if (temporal == "mean")
    cfg.temporal = TemporalMode::Mean;
  else if (temporal == "attention")
    cfg.temporal = TemporalMode::Attention;
  else
    fail(ErrorKind::Config, f.where("temporal") + ": expected \"mean\" or \"attention\"");
  f.read("attention_layers", cfg.attention_layers);
  f.read("normalize_features", cfg.normalize_features);
  f.read("temperature", cfg.temperature);
  f.read("init_seed", cfg.init_seed);
  f.finish();
  cfg.validate();
  return cfg;
}

// ---------------------------------------------------------------------------
// Parameters

VisualEncoderParams VisualEncoderParams::zeros(const ModelConfig& cfg) {
  VisualEncoderParams p;
  p.layer1 = Matrix(cfg.frame_dim, cfg.hidden);
  p.layer2 = Matrix(cfg.hidden, cfg.embed_dim);
  const std::size_t d = cfg.embed_dim;
  p.blocks.assign(cfg.blocks(), AttentionBlock{Matrix(d, d), Matrix(d, d), Matrix(d, d)});
  return p;
}

VisualEncoderParams VisualEncoderParams::initialize(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  VisualEncoderParams p = zeros(cfg);
  std::uint64_t tensor_index = 0;
  for (auto& [name, m] : p.tensors()) {
    double limit = std::sqrt(6.0 / static_cast<double>(m->rows() + m->cols()));
    if (name.ends_with(".value")) limit *= 0.1;
    const std::uint64_t key = stream_key(seed, tensor_index++);
    auto data = m->data();
    for (std::size_t i = 0; i < data.size(); ++i) data[i] = limit * signed_unit(stream_bits(key, i));
  }
  return p;
}

std::vector<std::pair<std::string, Matrix*>> VisualEncoderParams::tensors() {
  std::vector<std::pair<std::string, Matrix*>> out{{"layer1", &layer1}, {"layer2", &layer2}};
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    const std::string prefix = "attn." + std::to_string(b);
    out.emplace_back(prefix + ".query", &blocks[b].query);
    out.emplace_back(prefix + ".key", &blocks[b].key);
    out.emplace_back(prefix + ".value", &blocks[b].value);
  }
  return out;
}

std::vector<std::pair<std::string, const Matrix*>> VisualEncoderParams::tensors() const {
  auto mutable_view = const_cast<VisualEncoderParams*>(this)->tensors();
  std::vector<std::pair<std::string, const Matrix*>> out;
  out.reserve(mutable_view.size());
  for (auto& [name, m] : mutable_view) out.emplace_back(std::move(name), m);
  return out;
}

std::size_t VisualEncoderParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [_, m] : tensors()) n += m->size();
  return n;
}

Vector VisualEncoderParams::flatten() const {
  Vector flat;
  flat.reserve(parameter_count());
  for (const auto& [_, m] : tensors()) flat.insert(flat.end(), m->data().begin(), m->data().end());
  return flat;
}

void VisualEncoderParams::assign(std::span<const double> flat) {
  require(flat.size() == parameter_count(), ErrorKind::InvalidArgument, "assign: parameter count mismatch");
  std::size_t at = 0;
  for (auto& [_, m] : tensors()) {
    std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(at), m->size(), m->data().begin());
    at += m->size();
  }
}

void VisualEncoderParams::fill(double value) {
  for (auto& [_, m] : tensors()) std::fill(m->data().begin(), m->data().end(), value);
}

bool VisualEncoderParams::matches(const ModelConfig& cfg) const {
  const std::size_t d = cfg.embed_dim;
  if (layer1.rows() != cfg.frame_dim || layer1.cols() != cfg.hidden) return false;
  if (layer2.rows() != cfg.hidden || layer2.cols() != d) return false;
  if (blocks.size() != cfg.blocks()) return false;
  return std::all_of(blocks.begin(), blocks.end(), [d](const AttentionBlock& b) {
    return b.query.rows() == d && b.query.cols() == d && b.key.rows() == d && b.key.cols() == d &&
           b.value.rows() == d && b.value.cols() == d;
  });
}

// ---------------------------------------------------------------------------
// Prototypes and frame sampling

PrototypeMatrix build_prototypes(std::span<const Description> descriptions, bool masked, const TextEncoder& encoder) {
  require(!descriptions.empty(), ErrorKind::InvalidArgument, "build_prototypes: no descriptions");
  std::vector<const Description*> order;
  for (const auto& d : descriptions) order.push_back(&d);
  std::sort(order.begin(), order.end(), [](auto* a, auto* b) { return a->class_id < b->class_id; });
  for (std::size_t i = 1; i < order.size(); ++i)
    require(order[i - 1]->class_id != order[i]->class_id, ErrorKind::InvalidArgument,
            "build_prototypes: duplicate class_id " + std::to_string(order[i]->class_id));

  PrototypeMatrix p;
  p.masked = masked;
  p.weights = Matrix(order.size(), encoder.spec().embed_dim);
  for (std::size_t i = 0; i < order.size(); ++i) {
    const auto& tokens = masked ? order[i]->masked_tokens : order[i]->tokens;
    require(!tokens.empty(), ErrorKind::InvalidArgument,
            "build_prototypes: class " + std::to_string(order[i]->class_id) + " has no tokens");
    const Vector row = encoder.encode(tokens);
    std::copy(row.begin(), row.end(), p.weights.row(i).begin());
    p.class_ids.push_back(order[i]->class_id);
  }
  return p;
}

PrototypeMatrix build_prototypes(std::span<const Description> descriptions, bool masked,
                                 const TextEncoderSpec& spec) {
  return build_prototypes(descriptions, masked, TextEncoder(spec));
}

std::vector<std::size_t> sample_frames(std::size_t num_frames, std::size_t target) {
  require(num_frames >= 1, ErrorKind::InvalidArgument, "sample_frames: video has no frames");
  require(target >= 1, ErrorKind::InvalidArgument, "sample_frames: target must be >= 1");
  std::vector<std::size_t> idx(target);
  for (std::size_t i = 0; i < target; ++i)
    idx[i] = static_cast<std::size_t>(std::floor((static_cast<double>(i) + 0.5) * static_cast<double>(num_frames) /
                                                 static_cast<double>(target)));
  return idx;
}

Matrix to_matrix(const VideoSample& sample) {
  Matrix m(sample.frames, sample.dim);
  std::copy(sample.data.begin(), sample.data.end(), m.data().begin());
  return m;
}

// ---------------------------------------------------------------------------
// Attention block

namespace {

void check_block(const Matrix& z, const AttentionBlock& block) {
  const std::size_t d = z.cols();
  for (const Matrix* m : {&block.query, &block.key, &block.value})
    require(m->rows() == d && m->cols() == d, ErrorKind::InvalidArgument,
            "attn_block: weights must be " + std::to_string(d) + "x" + std::to_string(d));
}

Matrix project_rows(const Matrix& z, const Matrix& w) {
  Matrix out(z.rows(), w.rows());
  for (std::size_t s = 0; s < z.rows(); ++s) {
    const Vector y = matvec(w, z.row(s));
    std::copy(y.begin(), y.end(), out.row(s).begin());
  }
  return out;
}

}  // namespace

Matrix attn_block(const Matrix& z, const AttentionBlock& block, AttentionCache* cache) {
  check_block(z, block);
  const std::size_t steps = z.rows();
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(z.cols()));

  Matrix q = project_rows(z, block.query);
  Matrix k = project_rows(z, block.key);
  Matrix v = project_rows(z, block.value);
  Matrix w(steps, steps);
  Matrix out = z;
  for (std::size_t s = 0; s < steps; ++s) {
    Vector scores(steps);
    for (std::size_t t = 0; t < steps; ++t) scores[t] = dot(q.row(s), k.row(t)) * inv_sqrt_d;
    const Vector p = softmax(scores);
    std::copy(p.begin(), p.end(), w.row(s).begin());
    auto o = out.row(s);
    for (std::size_t t = 0; t < steps; ++t)
      for (std::size_t c = 0; c < z.cols(); ++c) o[c] += p[t] * v(t, c);
  }
  if (cache) *cache = AttentionCache{z, std::move(q), std::move(k), std::move(v), std::move(w)};
  return out;
}

Matrix attn_block_backward(const AttentionCache& cache, const AttentionBlock& block, const Matrix& upstream,
                           AttentionBlock& grads) {
  const std::size_t steps = cache.input.rows();
  const std::size_t d = cache.input.cols();
  require(upstream.rows() == steps && upstream.cols() == d, ErrorKind::InvalidArgument,
          "attn_block_backward: upstream shape mismatch");
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));

  Matrix dz = upstream;  // residual path
  Matrix dq(steps, d), dk(steps, d), dv(steps, d);
  for (std::size_t s = 0; s < steps; ++s) {
    const auto ws = cache.weights.row(s);
    const auto gs = upstream.row(s);
    Vector dweights(steps);
    double expected = 0.0;
    for (std::size_t t = 0; t < steps; ++t) {
      dweights[t] = dot(gs, cache.values.row(t));
      expected += ws[t] * dweights[t];
      for (std::size_t c = 0; c < d; ++c) dv(t, c) += ws[t] * gs[c];
    }
    for (std::size_t t = 0; t < steps; ++t) {
      const double dscore = ws[t] * (dweights[t] - expected) * inv_sqrt_d;
      if (dscore == 0.0) continue;
      for (std::size_t c = 0; c < d; ++c) {
        dq(s, c) += dscore * cache.keys(t, c);
        dk(t, c) += dscore * cache.queries(s, c);
      }
    }
  }
  for (std::size_t s = 0; s < steps; ++s) {
    const auto zs = cache.input.row(s);
    add_outer(grads.query, dq.row(s), zs);
    add_outer(grads.key, dk.row(s), zs);
    add_outer(grads.value, dv.row(s), zs);
    const Vector a = matvec_transposed(block.query, dq.row(s));
    const Vector b = matvec_transposed(block.key, dk.row(s));
    const Vector c = matvec_transposed(block.value, dv.row(s));
    auto out = dz.row(s);
    for (std::size_t i = 0; i < d; ++i) out[i] += a[i] + b[i] + c[i];
  }
  return dz;
}

// ---------------------------------------------------------------------------
// Encoder forward / backward

namespace {

struct ForwardTrace {
  std::vector<std::size_t> picks;
  Matrix pre;     // T x h
  Matrix hidden;  // T x h
  std::vector<AttentionCache> attention;
  Vector pooled;
  double pooled_norm = 0.0;
  Vector embedding;
};

ForwardTrace run_forward(const Matrix& frames, const VisualEncoderParams& params, const ModelConfig& cfg) {
  require(frames.cols() == cfg.frame_dim, ErrorKind::InvalidArgument,
          "encode_video: frame dim " + std::to_string(frames.cols()) + " does not match model frame_dim " +
              std::to_string(cfg.frame_dim));
  require(params.matches(cfg), ErrorKind::InvalidArgument, "encode_video: parameter shapes do not match config");

  ForwardTrace tr;
  tr.picks = sample_frames(frames.rows(), cfg.frames);
  const std::size_t steps = cfg.frames;
  tr.pre = Matrix(steps, cfg.hidden);
  tr.hidden = Matrix(steps, cfg.hidden);
  Matrix z(steps, cfg.embed_dim);
  for (std::size_t t = 0; t < steps; ++t) {
    const Vector a = matvec_transposed(params.layer1, frames.row(tr.picks[t]));
    const Vector r = relu_forward(a);
    const Vector e = matvec_transposed(params.layer2, r);
    std::copy(a.begin(), a.end(), tr.pre.row(t).begin());
    std::copy(r.begin(), r.end(), tr.hidden.row(t).begin());
    std::copy(e.begin(), e.end(), z.row(t).begin());
  }
  tr.attention.resize(params.blocks.size());
  for (std::size_t b = 0; b < params.blocks.size(); ++b) z = attn_block(z, params.blocks[b], &tr.attention[b]);

  tr.pooled.assign(cfg.embed_dim, 0.0);
  for (std::size_t t = 0; t < steps; ++t)
    for (std::size_t c = 0; c < cfg.embed_dim; ++c) tr.pooled[c] += z(t, c);
  for (double& x : tr.pooled) x /= static_cast<double>(steps);

  if (cfg.normalize_features) {
    tr.pooled_norm = norm2(tr.pooled);
    require(tr.pooled_norm > 0.0, ErrorKind::Numeric, "encode_video: zero-norm feature with normalization enabled");
    tr.embedding = tr.pooled;
    for (double& x : tr.embedding) x *= cfg.temperature / tr.pooled_norm;
  } else {
    tr.embedding = tr.pooled;
  }
  return tr;
}

}  // namespace

Vector encode_video(const Matrix& frames, const VisualEncoderParams& params, const ModelConfig& cfg) {
  return run_forward(frames, params, cfg).embedding;
}

Vector model_logits(std::span<const double> video_embedding, const PrototypeMatrix& prototypes) {
  require(video_embedding.size() == prototypes.weights.cols(), ErrorKind::InvalidArgument,
          "model_logits: embedding dim " + std::to_string(video_embedding.size()) + " does not match prototypes " +
              std::to_string(prototypes.weights.cols()));
  return matvec(prototypes.weights, video_embedding);
}

std::size_t argmax(std::span<const double> v) {
  require(!v.empty(), ErrorKind::InvalidArgument, "argmax: empty input");
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = i;
  return best;
}

LossAndLogits model_loss(const Matrix& frames, std::size_t label, const VisualEncoderParams& params,
                         const PrototypeMatrix& prototypes, const ModelConfig& cfg) {
  const Vector emb = encode_video(frames, params, cfg);
  LossAndLogits out{0.0, model_logits(emb, prototypes)};
  out.loss = cross_entropy(out.logits, label).loss;
  return out;
}

LossAndLogits model_backward(const Matrix& frames, std::size_t label, const VisualEncoderParams& params,
                             const PrototypeMatrix& prototypes, const ModelConfig& cfg, VisualEncoderParams& grads,
                             double scale) {
  require(grads.matches(cfg), ErrorKind::InvalidArgument, "model_backward: gradient shapes do not match config");
  const ForwardTrace tr = run_forward(frames, params, cfg);
  LossAndLogits out{0.0, model_logits(tr.embedding, prototypes)};
  const CrossEntropy ce = cross_entropy(out.logits, label);
  out.loss = ce.loss;

  Vector du = matvec_transposed(prototypes.weights, ce.grad_logits);
  if (cfg.normalize_features) {
    const double n = tr.pooled_norm;
    double proj = 0.0;
    for (std::size_t c = 0; c < du.size(); ++c) proj += tr.pooled[c] * du[c];
    proj /= n * n;
    for (std::size_t c = 0; c < du.size(); ++c) du[c] = cfg.temperature / n * (du[c] - tr.pooled[c] * proj);
  }

  const std::size_t steps = cfg.frames;
  Matrix dz(steps, cfg.embed_dim);
  const double per_step = scale / static_cast<double>(steps);
  for (std::size_t t = 0; t < steps; ++t)
    for (std::size_t c = 0; c < cfg.embed_dim; ++c) dz(t, c) = du[c] * per_step;

  for (std::size_t b = params.blocks.size(); b-- > 0;)
    dz = attn_block_backward(tr.attention[b], params.blocks[b], dz, grads.blocks[b]);

  for (std::size_t t = 0; t < steps; ++t) {
    const auto dzt = dz.row(t);
    add_outer(grads.layer2, tr.hidden.row(t), dzt);
    const Vector dr = matvec(params.layer2, dzt);
    const Vector da = relu_backward(tr.pre.row(t), dr);
    add_outer(grads.layer1, frames.row(tr.picks[t]), da);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

constexpr std::uint8_t kCheckpointMagic[4] = {'M', 'D', 'C', 'K'};
constexpr std::uint32_t kCheckpointVersion = 1;

template <typename T>
void put_le(std::vector<std::uint8_t>& out, T v) {
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> b) : bytes_(b) {}

  bool at_end() const { return at_ == bytes_.size(); }

  template <typename T>
  T le() {
    need(sizeof(T));
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(bytes_[at_ + i]) << (8 * i);
    at_ += sizeof(T);
    return v;
  }

  std::string text(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + at_), n);
    at_ += n;
    return s;
  }

 private:
  void need(std::size_t n) const { require(bytes_.size() - at_ >= n, ErrorKind::Format, "truncated"); }

  std::span<const std::uint8_t> bytes_;
  std::size_t at_ = 0;
};

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const VisualEncoderParams& params, const ModelConfig& cfg) {
  require(params.matches(cfg), ErrorKind::InvalidArgument, "save_checkpoint: parameter shapes do not match config");
  std::vector<std::uint8_t> out(std::begin(kCheckpointMagic), std::end(kCheckpointMagic));
  put_le<std::uint32_t>(out, kCheckpointVersion);
  const std::string blob = to_json(cfg).dump();
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(blob.size()));
  out.insert(out.end(), blob.begin(), blob.end());
  for (const auto& [name, m] : params.tensors()) {
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out.insert(out.end(), name.begin(), name.end());
    put_le<std::uint64_t>(out, m->size());
    for (double x : m->data()) put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(x));
  }
  return out;
}

std::pair<VisualEncoderParams, ModelConfig> decode_checkpoint(std::span<const std::uint8_t> bytes) {
  require(bytes.size() >= 4 && std::equal(std::begin(kCheckpointMagic), std::end(kCheckpointMagic), bytes.begin()),
          ErrorKind::Format, "bad magic");
  ByteReader in(bytes.subspan(4));
  require(in.le<std::uint32_t>() == kCheckpointVersion, ErrorKind::Format, "version mismatch");
  const std::string blob = in.text(in.le<std::uint32_t>());

  ModelConfig cfg;
  try {
    cfg = model_config_from_json(json::parse(blob), "checkpoint config");
  } catch (const json::exception& e) {
    fail(ErrorKind::Format, std::string("checkpoint config: ") + e.what());
  } catch (const Error& e) {
    fail(ErrorKind::Format, e.what());
  }

  VisualEncoderParams params = VisualEncoderParams::zeros(cfg);
  std::map<std::string, Matrix*> expected;
  for (auto& [name, m] : params.tensors()) expected.emplace(name, m);

  while (!in.at_end()) {
    const std::string name = in.text(in.le<std::uint32_t>());
    const std::uint64_t count = in.le<std::uint64_t>();
    auto it = expected.find(name);
    require(it != expected.end(), ErrorKind::Format, "shape disagreement: unexpected or repeated array '" + name + "'");
    require(count == it->second->size(), ErrorKind::Format,
            "shape disagreement: array '" + name + "' holds " + std::to_string(count) + " values, config implies " +
                std::to_string(it->second->size()));
    for (double& x : it->second->data()) x = std::bit_cast<double>(in.le<std::uint64_t>());
    expected.erase(it);
  }
  require(expected.empty(), ErrorKind::Format,
          "shape disagreement: missing array '" + (expected.empty() ? std::string() : expected.begin()->first) + "'");
  return {std::move(params), cfg};
}

void save_checkpoint(const VisualEncoderParams& params, const ModelConfig& cfg, const std::filesystem::path& path) {
  const auto bytes = encode_checkpoint(params, cfg);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(out.good(), ErrorKind::Io, "cannot write '" + path.string() + "'");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  require(out.good(), ErrorKind::Io, "write failed for '" + path.string() + "'");
}

std::pair<VisualEncoderParams, ModelConfig> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorKind::NotFound, "checkpoint not found: '" + path.string() + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return decode_checkpoint(bytes);
  } catch (const Error& e) {
    fail(e.kind(), path.string() + ": " + e.what());
  }
}

}  // namespace md
