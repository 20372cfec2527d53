#pragma once

// Supervised fine-tuning of the visual encoder against frozen source
// prototypes, zero-shot evaluation on disjoint target classes, and the
// masked-object / epoch / temporal-head comparisons built on top of them.

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "core/numkit.hpp"
#include "core/protomodel.hpp"
#include "core/synthgen.hpp"
#include "core/textenc.hpp"

namespace md {

struct TrainConfig {
  std::size_t epochs = 10;
  std::size_t batch_size = 20;
  double base_lr = 5e-5;
  std::size_t warmup_epochs = 5;
  double weight_decay = 0.2;
  std::optional<double> grad_clip_norm;
  std::uint64_t shuffle_seed = 3;
  std::size_t runs = 1;

  Schedule schedule() const { return {base_lr, warmup_epochs, epochs}; }
  void validate() const;
  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

nlohmann::json to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const nlohmann::json& j, const std::string& path = "train");

// 64-bit copies of the sampled videos; labels index prototype rows.
struct Dataset {
  std::vector<Matrix> frames;
  std::vector<std::size_t> labels;

  static Dataset from_samples(std::span<const VideoSample> samples);
  std::size_t size() const noexcept { return labels.size(); }
};

struct EpochLog {
  std::size_t epoch = 0;  // 1-based
  double lr = 0.0;
  double mean_loss = 0.0;
  double train_acc = 0.0;  // percent, measured on the forward passes of this epoch
  double wall_ms = 0.0;
  std::vector<double> batch_losses;
};

nlohmann::json to_json(const EpochLog& log);

struct TrainOptions {
  std::size_t run = 0;                     // reseeds init and shuffling when > 0
  std::vector<std::size_t> snapshot_epochs; // 1-based epochs whose parameters are kept
  std::function<void(const EpochLog&, const VisualEncoderParams&)> on_epoch;
};

struct TrainResult {
  VisualEncoderParams params;
  std::vector<EpochLog> log;
  std::vector<std::pair<std::size_t, VisualEncoderParams>> snapshots;
};

std::uint64_t run_init_seed(const ModelConfig& model, std::size_t run);

TrainResult train(const ModelConfig& model, const TrainConfig& cfg, const Dataset& source,
                  const PrototypeMatrix& prototypes, const TrainOptions& options = {});

// Continues from given parameters (used by tests to check frozen contracts).
TrainResult train_from(VisualEncoderParams params, const ModelConfig& model, const TrainConfig& cfg,
                       const Dataset& source, const PrototypeMatrix& prototypes, const TrainOptions& options = {});

struct ClassCount {
  std::int64_t class_id = 0;
  std::uint64_t correct = 0;
  std::uint64_t total = 0;
  friend bool operator==(const ClassCount&, const ClassCount&) = default;
};

struct EvalReport {
  double accuracy_percent = 0.0;
  std::vector<ClassCount> per_class;
  bool masked = false;
  std::size_t epoch = 0;
  friend bool operator==(const EvalReport&, const EvalReport&) = default;
};

nlohmann::json to_json(const EvalReport& r);

// Top-1 accuracy of argmax(prototypes . encode(video)). `threads` > 1 splits
// videos across workers; counts are reduced as integers.
EvalReport evaluate(const VisualEncoderParams& params, const ModelConfig& model, const Dataset& data,
                    const PrototypeMatrix& prototypes, std::size_t threads = 1);

EvalReport evaluate_zero_shot(const VisualEncoderParams& params, const ModelConfig& model, const Dataset& target,
                              std::span<const Description> target_descriptions,
                              std::span<const Description> source_descriptions, bool masked,
                              const TextEncoder& encoder, std::size_t threads = 1);

struct MaskedDelta {
  EvalReport unmasked;
  EvalReport masked;
  double delta = 0.0;  // unmasked - masked, accuracy points
};

MaskedDelta masked_delta_report(const VisualEncoderParams& params, const ModelConfig& model, const Dataset& target,
                                std::span<const Description> target_descriptions,
                                std::span<const Description> source_descriptions, const TextEncoder& encoder);

struct ZeroShotTask {
  const Dataset* source = nullptr;
  std::span<const Description> source_descriptions;
  const Dataset* target = nullptr;
  std::span<const Description> target_descriptions;
  const TextEncoder* encoder = nullptr;
};

struct SweepRow {
  std::size_t epoch = 0;
  MaskedDelta result;
};

// Trains once for cfg.epochs, keeping the requested epochs (1-based,
// deduplicated, ascending) and evaluating each snapshot.
// `on_epoch` sees the parameters after every epoch, e.g. to persist them.
std::vector<SweepRow> epoch_sweep(const ModelConfig& model, const TrainConfig& cfg, const ZeroShotTask& task,
                                  std::vector<std::size_t> epochs,
                                  std::function<void(const EpochLog&, const VisualEncoderParams&)> on_epoch = {});

struct AblationRow {
  std::string method;
  ModelConfig model;
  MaskedDelta result;
};

// Trains the mean-pooling and attention-head variants of `model` with
// identical seeds and evaluates both on the same target split.
std::vector<AblationRow> temporal_ablation(const ModelConfig& model, const TrainConfig& cfg, const ZeroShotTask& task);

}  // namespace md
