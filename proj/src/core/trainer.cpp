#include "core/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <thread>

#include "core/error.hpp"
#include "core/hashing.hpp"
#include "core/json_fields.hpp"

namespace md {

using nlohmann::json;

void TrainConfig::validate() const {
  require(epochs >= 1, ErrorKind::Config, "train: epochs must be >= 1");
  require(batch_size >= 1, ErrorKind::Config, "train: batch_size must be >= 1");
  require(std::isfinite(base_lr) && base_lr >= 0.0, ErrorKind::Config, "train: base_lr must be >= 0");
  require(warmup_epochs <= epochs, ErrorKind::Config, "train: warmup_epochs must not exceed epochs");
  require(std::isfinite(weight_decay) && weight_decay >= 0.0, ErrorKind::Config, "train: weight_decay must be >= 0");
  require(!grad_clip_norm || *grad_clip_norm > 0.0, ErrorKind::Config, "train: grad_clip_norm must be positive");
  require(runs >= 1, ErrorKind::Config, "train: runs must be >= 1");
}

json to_json(const TrainConfig& cfg) {
  return {{"epochs", cfg.epochs},
          {"batch_size", cfg.batch_size},
          {"base_lr", cfg.base_lr},
          {"warmup_epochs", cfg.warmup_epochs},
          {"weight_decay", cfg.weight_decay},
          {"grad_clip_norm", cfg.grad_clip_norm ? json(*cfg.grad_clip_norm) : json(nullptr)},
          {"shuffle_seed", cfg.shuffle_seed},
          {"runs", cfg.runs}};
}

TrainConfig train_config_from_json(const json& j, const std::string& path) {
  TrainConfig cfg;
  JsonFields f(j, path);
  f.read("epochs", cfg.epochs);
  f.read("batch_size", cfg.batch_size);
  f.read("base_lr", cfg.base_lr);
  f.read("warmup_epochs", cfg.warmup_epochs);
  f.read("weight_decay", cfg.weight_decay);
  f.read_optional("grad_clip_norm", cfg.grad_clip_norm);
  f.read("shuffle_seed", cfg.shuffle_seed);
  f.read("runs", cfg.runs);
  f.finish();
  cfg.validate();
  return cfg;
}

Dataset Dataset::from_samples(std::span<const VideoSample> samples) {
  Dataset d;
  d.frames.reserve(samples.size());
  d.labels.reserve(samples.size());
  for (const auto& s : samples) {
    d.frames.push_back(to_matrix(s));
    d.labels.push_back(s.label);
  }
  return d;
}

json to_json(const EpochLog& log) {
  return {{"epoch", log.epoch},
          {"lr", log.lr},
          {"mean_loss", log.mean_loss},
          {"train_acc", log.train_acc},
          {"wall_ms", log.wall_ms}};
}

std::uint64_t run_init_seed(const ModelConfig& model, std::size_t run) {
  return run == 0 ? model.init_seed : stream_key(model.init_seed, run);
}

namespace {

void check_training_inputs(const ModelConfig& model, const Dataset& source, const PrototypeMatrix& prototypes) {
  require(source.size() > 0, ErrorKind::InvalidArgument, "train: empty dataset");
  require(prototypes.weights.cols() == model.embed_dim, ErrorKind::InvalidArgument,
          "train: prototype dimension does not match model embed_dim");
  for (std::size_t label : source.labels)
    require(label < prototypes.classes(), ErrorKind::InvalidArgument,
            "train: label " + std::to_string(label) + " has no prototype row (" +
                std::to_string(prototypes.classes()) + " classes)");
}

}  // namespace

TrainResult train(const ModelConfig& model, const TrainConfig& cfg, const Dataset& source,
                  const PrototypeMatrix& prototypes, const TrainOptions& options) {
  return train_from(VisualEncoderParams::initialize(model, run_init_seed(model, options.run)), model, cfg, source,
                    prototypes, options);
}

TrainResult train_from(VisualEncoderParams params, const ModelConfig& model, const TrainConfig& cfg,
                       const Dataset& source, const PrototypeMatrix& prototypes, const TrainOptions& options) {
  model.validate();
  cfg.validate();
  check_training_inputs(model, source, prototypes);
  require(params.matches(model), ErrorKind::InvalidArgument, "train: parameter shapes do not match config");

  TrainResult result;
  const Schedule schedule = cfg.schedule();
  const std::uint64_t shuffle_key =
      options.run == 0 ? cfg.shuffle_seed : stream_key(cfg.shuffle_seed, options.run);

  std::vector<AdamState> optimizer;
  for (const auto& [_, m] : params.tensors()) optimizer.push_back(AdamState::for_size(m->size()));
  VisualEncoderParams grads = VisualEncoderParams::zeros(model);

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto started = std::chrono::steady_clock::now();
    const double lr = lr_at(epoch, schedule);
    const auto order = seeded_permutation(source.size(), stream_key(shuffle_key, epoch));

    EpochLog log;
    log.epoch = epoch + 1;
    log.lr = lr;
    std::size_t correct = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), begin + cfg.batch_size);
      const double inv_batch = 1.0 / static_cast<double>(end - begin);
      grads.fill(0.0);
      double batch_loss = 0.0;
      for (std::size_t i = begin; i < end; ++i) {
        const std::size_t idx = order[i];
        const auto out = model_backward(source.frames[idx], source.labels[idx], params, prototypes, model, grads,
                                        inv_batch);
        batch_loss += out.loss;
        if (argmax(out.logits) == source.labels[idx]) ++correct;
      }
      log.batch_losses.push_back(batch_loss * inv_batch);

      auto grad_tensors = grads.tensors();
      if (cfg.grad_clip_norm) {
        std::vector<std::span<double>> blocks;
        for (auto& [_, m] : grad_tensors) blocks.push_back(m->data());
        clip_by_global_norm(blocks, *cfg.grad_clip_norm);
      }
      auto param_tensors = params.tensors();
      for (std::size_t k = 0; k < param_tensors.size(); ++k)
        adam_step(param_tensors[k].second->data(), grad_tensors[k].second->data(), optimizer[k], lr, cfg.weight_decay);
    }

    double loss_sum = 0.0;
    for (double l : log.batch_losses) loss_sum += l;
    log.mean_loss = loss_sum / static_cast<double>(log.batch_losses.size());
    log.train_acc = 100.0 * static_cast<double>(correct) / static_cast<double>(source.size());
    log.wall_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started).count();
    if (options.on_epoch) options.on_epoch(log, params);
    result.log.push_back(std::move(log));

    const auto& snaps = options.snapshot_epochs;
    if (std::find(snaps.begin(), snaps.end(), epoch + 1) != snaps.end()) result.snapshots.emplace_back(epoch + 1, params);
  }
  result.params = std::move(params);
  return result;
}

json to_json(const EvalReport& r) {
  json per_class = json::array();
  for (const auto& c : r.per_class)
    per_class.push_back({{"class_id", c.class_id}, {"correct", c.correct}, {"total", c.total}});
  return {{"accuracy_percent", r.accuracy_percent}, {"masked", r.masked}, {"per_class", per_class}};
}

EvalReport evaluate(const VisualEncoderParams& params, const ModelConfig& model, const Dataset& data,
                    const PrototypeMatrix& prototypes, std::size_t threads) {
  require(data.size() > 0, ErrorKind::InvalidArgument, "evaluate: empty dataset");
  for (std::size_t label : data.labels)
    require(label < prototypes.classes(), ErrorKind::InvalidArgument,
            "evaluate: label " + std::to_string(label) + " has no prototype row");

  const std::size_t classes = prototypes.classes();
  const std::size_t workers = std::clamp<std::size_t>(threads, 1, data.size());
  std::vector<std::vector<std::uint64_t>> correct(workers, std::vector<std::uint64_t>(classes, 0));
  std::vector<std::vector<std::uint64_t>> total(workers, std::vector<std::uint64_t>(classes, 0));

  auto run_chunk = [&](std::size_t w) {
    const std::size_t begin = data.size() * w / workers;
    const std::size_t end = data.size() * (w + 1) / workers;
    for (std::size_t i = begin; i < end; ++i) {
      const Vector logits = model_logits(encode_video(data.frames[i], params, model), prototypes);
      const std::size_t label = data.labels[i];
      ++total[w][label];
      if (argmax(logits) == label) ++correct[w][label];
    }
  };

  if (workers == 1) {
    run_chunk(0);
  } else {
    std::vector<std::exception_ptr> errors(workers);
    {
      std::vector<std::jthread> pool;
      for (std::size_t w = 0; w < workers; ++w)
        pool.emplace_back([&, w] {
          try {
            run_chunk(w);
          } catch (...) {
            errors[w] = std::current_exception();
          }
        });
    }
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  }

  EvalReport report;
  report.masked = prototypes.masked;
  std::uint64_t sum_correct = 0;
  std::uint64_t sum_total = 0;
  for (std::size_t c = 0; c < classes; ++c) {
    ClassCount cc{prototypes.class_ids[c], 0, 0};
    for (std::size_t w = 0; w < workers; ++w) {
      cc.correct += correct[w][c];
      cc.total += total[w][c];
    }
    sum_correct += cc.correct;
    sum_total += cc.total;
    report.per_class.push_back(cc);
  }
  report.accuracy_percent = 100.0 * static_cast<double>(sum_correct) / static_cast<double>(sum_total);
  return report;
}

EvalReport evaluate_zero_shot(const VisualEncoderParams& params, const ModelConfig& model, const Dataset& target,
                              std::span<const Description> target_descriptions,
                              std::span<const Description> source_descriptions, bool masked,
                              const TextEncoder& encoder, std::size_t threads) {
  require(!target_descriptions.empty() && target.size() > 0, ErrorKind::InvalidArgument,
          "evaluate_zero_shot: empty target");
  require(verify_disjoint(source_descriptions, target_descriptions), ErrorKind::InvalidArgument,
          "evaluate_zero_shot: target classes overlap source classes");
  const PrototypeMatrix prototypes = build_prototypes(target_descriptions, masked, encoder);
  return evaluate(params, model, target, prototypes, threads);
}

MaskedDelta masked_delta_report(const VisualEncoderParams& params, const ModelConfig& model, const Dataset& target,
                                std::span<const Description> target_descriptions,
                                std::span<const Description> source_descriptions, const TextEncoder& encoder) {
  MaskedDelta out;
  out.unmasked = evaluate_zero_shot(params, model, target, target_descriptions, source_descriptions, false, encoder);
  out.masked = evaluate_zero_shot(params, model, target, target_descriptions, source_descriptions, true, encoder);
  out.delta = out.unmasked.accuracy_percent - out.masked.accuracy_percent;
  return out;
}

namespace {

void check_task(const ZeroShotTask& task) {
  require(task.source && task.target && task.encoder, ErrorKind::InvalidArgument, "zero-shot task is incomplete");
}

}  // namespace

std::vector<SweepRow> epoch_sweep(const ModelConfig& model, const TrainConfig& cfg, const ZeroShotTask& task,
                                  std::vector<std::size_t> epochs,
                                  std::function<void(const EpochLog&, const VisualEncoderParams&)> on_epoch) {
  check_task(task);
  require(!epochs.empty(), ErrorKind::InvalidArgument, "epoch_sweep: empty epoch list");
  std::sort(epochs.begin(), epochs.end());
  epochs.erase(std::unique(epochs.begin(), epochs.end()), epochs.end());
  for (std::size_t e : epochs)
    require(e >= 1 && e <= cfg.epochs, ErrorKind::NotFound,
            "epoch_sweep: missing checkpoint for epoch " + std::to_string(e) + " (schedule has " +
                std::to_string(cfg.epochs) + " epochs)");

  const PrototypeMatrix prototypes = build_prototypes(task.source_descriptions, false, *task.encoder);
  const TrainResult trained = train(model, cfg, *task.source, prototypes, TrainOptions{0, epochs, std::move(on_epoch)});

  std::vector<SweepRow> rows;
  for (const auto& [epoch, params] : trained.snapshots) {
    SweepRow row{epoch, masked_delta_report(params, model, *task.target, task.target_descriptions,
                                            task.source_descriptions, *task.encoder)};
    row.result.unmasked.epoch = row.result.masked.epoch = epoch;
    rows.push_back(std::move(row));
  }
  return rows;
}

std::vector<AblationRow> temporal_ablation(const ModelConfig& model, const TrainConfig& cfg, const ZeroShotTask& task) {
  check_task(task);
  const PrototypeMatrix prototypes = build_prototypes(task.source_descriptions, false, *task.encoder);

  ModelConfig mean = model;
  mean.temporal = TemporalMode::Mean;
  ModelConfig attention = model;
  attention.temporal = TemporalMode::Attention;
  attention.attention_layers = std::max<std::size_t>(1, model.attention_layers);

  std::vector<AblationRow> rows;
  for (auto& [name, variant] : {std::pair{"mean", mean}, std::pair{"attention", attention}}) {
    const TrainResult trained = train(variant, cfg, *task.source, prototypes);
    rows.push_back({name, variant,
                    masked_delta_report(trained.params, variant, *task.target, task.target_descriptions,
                                        task.source_descriptions, *task.encoder)});
    rows.back().result.unmasked.epoch = rows.back().result.masked.epoch = cfg.epochs;
  }
  return rows;
}

}  // namespace md
