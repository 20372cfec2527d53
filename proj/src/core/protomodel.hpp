#pragma once

// Prototype classifier over a trainable visual encoder.
//
// Classifier weights are the frozen text embeddings of the class
// descriptions (one unit row per class). Each sampled frame goes through a
// two-layer ReLU MLP, the per-frame embeddings are optionally mixed by a stack
// of single-head residual self-attention blocks, then mean-pooled into one
// video embedding. Logits are plain dot products with the prototype rows and
// only the encoder receives gradients.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "core/numkit.hpp"
#include "core/synthgen.hpp"
#include "core/textenc.hpp"

namespace md {

enum class TemporalMode { Mean, Attention };

struct ModelConfig {
  std::size_t frame_dim = 32;  // d_in
  std::size_t hidden = 64;     // h
  std::size_t embed_dim = 16;  // d
  std::size_t frames = 8;      // T
  TemporalMode temporal = TemporalMode::Mean;
  std::size_t attention_layers = 1;
  bool normalize_features = false;
  double temperature = 1.0;
  std::uint64_t init_seed = 7;

  std::size_t blocks() const noexcept { return temporal == TemporalMode::Attention ? attention_layers : 0; }
  void validate() const;
  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

nlohmann::json to_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(const nlohmann::json& j, const std::string& path = "model");

struct AttentionBlock {
  Matrix query;  // d x d
  Matrix key;    // d x d
  Matrix value;  // d x d
  friend bool operator==(const AttentionBlock&, const AttentionBlock&) = default;
};

struct VisualEncoderParams {
  Matrix layer1;  // d_in x h; hidden pre-activation = layer1^T frame
  Matrix layer2;  // h x d;    frame embedding = layer2^T relu(.)
  std::vector<AttentionBlock> blocks;

  static VisualEncoderParams zeros(const ModelConfig& cfg);
  // Glorot-uniform MLP and query/key weights; value weights scaled down so
  // the residual path dominates at initialization.
  static VisualEncoderParams initialize(const ModelConfig& cfg, std::uint64_t seed);

  // Stable naming used by the checkpoint format and the gradient checker.
  std::vector<std::pair<std::string, Matrix*>> tensors();
  std::vector<std::pair<std::string, const Matrix*>> tensors() const;

  std::size_t parameter_count() const;
  Vector flatten() const;
  void assign(std::span<const double> flat);
  void fill(double value);
  bool matches(const ModelConfig& cfg) const;

  friend bool operator==(const VisualEncoderParams&, const VisualEncoderParams&) = default;
};

struct PrototypeMatrix {
  Matrix weights;  // C x d, unit rows
  std::vector<std::int64_t> class_ids;
  bool masked = false;

  std::size_t classes() const noexcept { return weights.rows(); }
};

// Rows follow ascending class_id; labels elsewhere index into that order.
PrototypeMatrix build_prototypes(std::span<const Description> descriptions, bool masked, const TextEncoder& encoder);
PrototypeMatrix build_prototypes(std::span<const Description> descriptions, bool masked,
                                 const TextEncoderSpec& spec);

// index_i = floor((i + 0.5) * N / T), i in [0, T).
std::vector<std::size_t> sample_frames(std::size_t num_frames, std::size_t target);

Matrix to_matrix(const VideoSample& sample);

// Single block forward on rows z_s:
//   out_s = z_s + sum_t softmax_t((Q z_s).(K z_t) / sqrt(d)) V z_t
struct AttentionCache {
  Matrix input, queries, keys, values, weights;
};
Matrix attn_block(const Matrix& z, const AttentionBlock& block, AttentionCache* cache = nullptr);
// Accumulates parameter gradients into `grads` and returns d(loss)/d(input).
Matrix attn_block_backward(const AttentionCache& cache, const AttentionBlock& block, const Matrix& upstream,
                           AttentionBlock& grads);

Vector encode_video(const Matrix& frames, const VisualEncoderParams& params, const ModelConfig& cfg);

Vector model_logits(std::span<const double> video_embedding, const PrototypeMatrix& prototypes);

// Lowest index wins ties.
std::size_t argmax(std::span<const double> v);

struct LossAndLogits {
  double loss = 0.0;
  Vector logits;
};

// Adds scale * d(loss)/d(params) into `grads`. Prototypes are read only.
LossAndLogits model_backward(const Matrix& frames, std::size_t label, const VisualEncoderParams& params,
                             const PrototypeMatrix& prototypes, const ModelConfig& cfg, VisualEncoderParams& grads,
                             double scale = 1.0);

// Loss only, for finite differences and evaluation.
LossAndLogits model_loss(const Matrix& frames, std::size_t label, const VisualEncoderParams& params,
                         const PrototypeMatrix& prototypes, const ModelConfig& cfg);

// Little-endian "MDCK" v1: u32 JSON length + model config JSON, then named
// float64 arrays (u32 name length, name, u64 count, values) until EOF.
void save_checkpoint(const VisualEncoderParams& params, const ModelConfig& cfg, const std::filesystem::path& path);
std::pair<VisualEncoderParams, ModelConfig> load_checkpoint(const std::filesystem::path& path);

std::vector<std::uint8_t> encode_checkpoint(const VisualEncoderParams& params, const ModelConfig& cfg);
std::pair<VisualEncoderParams, ModelConfig> decode_checkpoint(std::span<const std::uint8_t> bytes);

}  // namespace md
