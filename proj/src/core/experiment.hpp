#pragma once

// Reproducible experiment pipeline: one JSON config drives dataset
// generation, fine-tuning, zero-shot evaluation, the epoch sweep, the
// temporal-head ablation and the gradient check. Every command that writes
// artifacts also writes the fully resolved config next to them.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "core/protomodel.hpp"
#include "core/synthgen.hpp"
#include "core/textenc.hpp"
#include "core/trainer.hpp"

namespace md {

struct ExperimentPaths {
  std::filesystem::path data = "out/data";
  std::filesystem::path checkpoints = "out/checkpoints";
  std::filesystem::path reports = "out/reports";
  friend bool operator==(const ExperimentPaths&, const ExperimentPaths&) = default;
};

struct ExperimentConfig {
  TextEncoderSpec text;
  std::uint64_t world_seed = 1;
  SynthConfig source;
  SynthConfig target;
  ModelConfig model;
  TrainConfig train;
  ExperimentPaths paths;

  ExperimentConfig();
  void validate() const;
  friend bool operator==(const ExperimentConfig&, const ExperimentConfig&) = default;
};

nlohmann::json to_json(const ExperimentConfig& cfg);
ExperimentConfig experiment_config_from_json(const nlohmann::json& j);

// Applies "a.b.c=value" overrides; value is parsed as JSON when possible and
// taken as a string otherwise. Unknown paths are Config errors.
void apply_overrides(nlohmann::json& doc, std::span<const std::string> overrides);

ExperimentConfig parse_config(const std::filesystem::path& path, std::span<const std::string> overrides = {});
ExperimentConfig parse_config_text(const std::string& text, std::span<const std::string> overrides = {});

struct GradCheckSummary {
  double max_rel_error = 0.0;
  std::string worst_parameter;
  std::size_t parameters = 0;
  double tolerance = 1e-5;
  bool passed() const noexcept { return max_rel_error <= tolerance; }
};

// Finite-difference check of every encoder parameter of `model` on a small
// seeded mini-batch (two videos, three classes).
GradCheckSummary gradcheck_model(const ModelConfig& model, const TextEncoderSpec& text, double h = 1e-5);

class Experiment {
 public:
  explicit Experiment(ExperimentConfig cfg);

  const ExperimentConfig& config() const noexcept { return cfg_; }

  std::filesystem::path source_descriptions_path() const;
  std::filesystem::path target_descriptions_path() const;
  std::filesystem::path source_videos_path() const;
  std::filesystem::path target_videos_path() const;
  std::filesystem::path lexicon_path() const;
  std::filesystem::path final_checkpoint_path() const;
  std::filesystem::path epoch_checkpoint_path(std::size_t epoch) const;
  std::filesystem::path train_log_path() const;
  std::filesystem::path eval_report_path(bool masked) const;

  nlohmann::json generate() const;
  nlohmann::json train() const;
  EvalReport evaluate(bool masked) const;
  nlohmann::json sweep(std::vector<std::size_t> epochs) const;
  nlohmann::json ablate() const;
  GradCheckSummary gradcheck() const;

 private:
  void write_resolved_config(const std::filesystem::path& dir) const;

  ExperimentConfig cfg_;
};

}  // namespace md
