#include "core/experiment.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <optional>
#include <sstream>
#include <thread>

#include "core/error.hpp"
#include "core/hashing.hpp"
#include "core/json_fields.hpp"

namespace md {

using nlohmann::json;
namespace fs = std::filesystem;

ExperimentConfig::ExperimentConfig() {
  source.seed = 11;
  source.num_classes = 40;
  source.videos_per_class = 50;
  target.seed = 12;
  target.num_classes = 10;
  target.videos_per_class = 20;
}

void ExperimentConfig::validate() const {
  text.validate();
  source.validate();
  target.validate();
  model.validate();
  train.validate();
  require(model.embed_dim == text.embed_dim, ErrorKind::Config, "model.embed_dim must equal text.embed_dim");
  for (const auto* s : {&source, &target}) {
    const std::string role = s == &source ? "synth.source" : "synth.target";
    require(s->embed_dim == text.embed_dim, ErrorKind::Config, role + ".embed_dim must equal text.embed_dim");
    require(s->frame_dim == model.frame_dim, ErrorKind::Config, role + ".frame_dim must equal model.frame_dim");
  }
}

namespace {

json to_json(const SynthConfig& s) {
  return {{"seed", s.seed},
          {"num_classes", s.num_classes},
          {"videos_per_class", s.videos_per_class},
          {"frames_per_video", s.frames_per_video},
          {"frame_dim", s.frame_dim},
          {"embed_dim", s.embed_dim},
          {"noise_sigma", s.noise_sigma},
          {"object_strength", s.object_strength},
          {"object_prob", s.object_prob}};
}

void read_synth(const json& j, const std::string& path, SynthConfig& s) {
  JsonFields f(j, path);
  f.read("seed", s.seed);
  f.read("num_classes", s.num_classes);
  f.read("videos_per_class", s.videos_per_class);
  f.read("frames_per_video", s.frames_per_video);
  f.read("frame_dim", s.frame_dim);
  f.read("embed_dim", s.embed_dim);
  f.read("noise_sigma", s.noise_sigma);
  f.read("object_strength", s.object_strength);
  f.read("object_prob", s.object_prob);
  f.finish();
}

}  // namespace

json to_json(const ExperimentConfig& cfg) {
  return {{"text",
           {{"token_dim", cfg.text.token_dim},
            {"embed_dim", cfg.text.embed_dim},
            {"projection_seed", cfg.text.projection_seed}}},
          {"synth", {{"world_seed", cfg.world_seed}, {"source", to_json(cfg.source)}, {"target", to_json(cfg.target)}}},
          {"model", to_json(cfg.model)},
          {"train", to_json(cfg.train)},
          {"paths",
           {{"data", cfg.paths.data.string()},
            {"checkpoints", cfg.paths.checkpoints.string()},
            {"reports", cfg.paths.reports.string()}}}};
}

ExperimentConfig experiment_config_from_json(const json& j) {
  ExperimentConfig cfg;
  JsonFields top(j, "");
  if (const json* t = top.child("text")) {
    JsonFields f(*t, "text");
    f.read("token_dim", cfg.text.token_dim);
    f.read("embed_dim", cfg.text.embed_dim);
    f.read("projection_seed", cfg.text.projection_seed);
    f.finish();
  }
  if (const json* s = top.child("synth")) {
    JsonFields f(*s, "synth");
    f.read("world_seed", cfg.world_seed);
    if (const json* src = f.child("source")) read_synth(*src, "synth.source", cfg.source);
    if (const json* tgt = f.child("target")) read_synth(*tgt, "synth.target", cfg.target);
    f.finish();
  }
  if (const json* m = top.child("model")) cfg.model = model_config_from_json(*m, "model");
  if (const json* t = top.child("train")) cfg.train = train_config_from_json(*t, "train");
  if (const json* p = top.child("paths")) {
    JsonFields f(*p, "paths");
    std::string data = cfg.paths.data.string(), ckpt = cfg.paths.checkpoints.string(),
                reports = cfg.paths.reports.string();
    f.read("data", data);
    f.read("checkpoints", ckpt);
    f.read("reports", reports);
    f.finish();
    cfg.paths = {data, ckpt, reports};
  }
  top.finish();
  cfg.validate();
  return cfg;
}

void apply_overrides(json& doc, std::span<const std::string> overrides) {
  for (const auto& ov : overrides) {
    const auto eq = ov.find('=');
    require(eq != std::string::npos && eq > 0, ErrorKind::Config, "override '" + ov + "': expected key.path=value");
    const std::string key = ov.substr(0, eq);
    const std::string raw = ov.substr(eq + 1);

    json* node = &doc;
    std::stringstream parts(key);
    std::string part;
    while (std::getline(parts, part, '.')) {
      require(node->is_object() && node->contains(part), ErrorKind::Config, "override '" + key + "': unknown key");
      node = &(*node)[part];
    }
    require(!node->is_object(), ErrorKind::Config, "override '" + key + "': cannot replace a whole section");
    try {
      *node = json::parse(raw);
    } catch (const json::parse_error&) {
      *node = raw;
    }
  }
}

ExperimentConfig parse_config_text(const std::string& text, std::span<const std::string> overrides) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    fail(ErrorKind::Config, std::string("malformed JSON: ") + e.what());
  }
  if (overrides.empty()) return experiment_config_from_json(doc);
  // Resolve defaults first so every documented key can be overridden.
  json full = to_json(experiment_config_from_json(doc));
  apply_overrides(full, overrides);
  return experiment_config_from_json(full);
}

ExperimentConfig parse_config(const fs::path& path, std::span<const std::string> overrides) {
  std::ifstream in(path);
  require(in.good(), ErrorKind::Config, "config file not found: '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str(), overrides);
}

// ---------------------------------------------------------------------------

GradCheckSummary gradcheck_model(const ModelConfig& model, const TextEncoderSpec& text, double h) {
  model.validate();
  require(model.embed_dim == text.embed_dim, ErrorKind::Config, "gradcheck: model.embed_dim must equal text.embed_dim");

  const std::vector<Description> classes = {
      {0, "a", {"lift", "arm", "up"}, {"lift", "arm", "up"}},
      {1, "b", {"swing", "leg", "forward"}, {"swing", "leg", "forward"}},
      {2, "c", {"rotate", "torso", "twist", "ball"}, {"rotate", "torso", "twist", "object"}},
  };
  const PrototypeMatrix prototypes = build_prototypes(classes, false, text);

  std::vector<Matrix> frames;
  const std::vector<std::size_t> labels = {0, 1};
  for (std::size_t v = 0; v < labels.size(); ++v) {
    Matrix f(model.frames + 1, model.frame_dim);
    const std::uint64_t key = stream_key(model.init_seed, 0xF00D, v);
    for (std::size_t i = 0; i < f.size(); ++i) f.data()[i] = signed_unit(stream_bits(key, i));
    frames.push_back(std::move(f));
  }

  VisualEncoderParams params = VisualEncoderParams::initialize(model, model.init_seed);
  // Stronger value weights than at init so attention paths carry visible gradient.
  for (auto& b : params.blocks)
    for (double& x : b.value.data()) x *= 5.0;

  const double inv = 1.0 / static_cast<double>(labels.size());
  VisualEncoderParams grads = VisualEncoderParams::zeros(model);
  for (std::size_t v = 0; v < labels.size(); ++v) model_backward(frames[v], labels[v], params, prototypes, model, grads, inv);

  VisualEncoderParams probe = params;
  auto loss = [&](std::span<const double> flat) {
    probe.assign(flat);
    double total = 0.0;
    for (std::size_t v = 0; v < labels.size(); ++v) total += model_loss(frames[v], labels[v], probe, prototypes, model).loss;
    return total * inv;
  };
  const Vector analytic = grads.flatten();
  const GradCheckResult r = grad_check(loss, params.flatten(), analytic, h);

  GradCheckSummary out;
  out.max_rel_error = r.max_rel_error;
  out.parameters = analytic.size();
  std::size_t offset = 0;
  for (const auto& [name, m] : params.tensors()) {
    if (r.worst_index < offset + m->size()) {
      out.worst_parameter = name + "[" + std::to_string(r.worst_index - offset) + "]";
      break;
    }
    offset += m->size();
  }
  return out;
}

// ---------------------------------------------------------------------------

Experiment::Experiment(ExperimentConfig cfg) : cfg_(std::move(cfg)) { cfg_.validate(); }

fs::path Experiment::source_descriptions_path() const { return cfg_.paths.data / "source_descriptions.jsonl"; }
fs::path Experiment::target_descriptions_path() const { return cfg_.paths.data / "target_descriptions.jsonl"; }
fs::path Experiment::source_videos_path() const { return cfg_.paths.data / "source_videos.mdvb"; }
fs::path Experiment::target_videos_path() const { return cfg_.paths.data / "target_videos.mdvb"; }
fs::path Experiment::lexicon_path() const { return cfg_.paths.data / "object_lexicon.txt"; }
fs::path Experiment::final_checkpoint_path() const { return cfg_.paths.checkpoints / "final.mdck"; }
fs::path Experiment::train_log_path() const { return cfg_.paths.checkpoints / "train_log.jsonl"; }

fs::path Experiment::epoch_checkpoint_path(std::size_t epoch) const {
  char name[32];
  std::snprintf(name, sizeof name, "epoch_%03zu.mdck", epoch);
  return cfg_.paths.checkpoints / name;
}

fs::path Experiment::eval_report_path(bool masked) const {
  return cfg_.paths.reports / (masked ? "eval_masked.json" : "eval_unmasked.json");
}

namespace {

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  require(!ec, ErrorKind::Io, "cannot create directory '" + dir.string() + "': " + ec.message());
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(out.good(), ErrorKind::Io, "cannot write '" + path.string() + "'");
  out << text;
  require(out.good(), ErrorKind::Io, "write failed for '" + path.string() + "'");
}

void require_file(const fs::path& path, const std::string& what, const std::string& hint) {
  require(fs::exists(path), ErrorKind::NotFound, what + " not found: '" + path.string() + "' (" + hint + ")");
}

struct LoadedSplit {
  std::vector<Description> descriptions;
  Dataset data;
};

LoadedSplit load_split(const fs::path& descriptions, const fs::path& videos, const std::string& role) {
  require_file(descriptions, role + " descriptions", "run gen first");
  require_file(videos, role + " videos", "run gen first");
  LoadedSplit s;
  s.descriptions = read_descriptions(descriptions);
  std::sort(s.descriptions.begin(), s.descriptions.end(),
            [](const Description& a, const Description& b) { return a.class_id < b.class_id; });
  s.data = Dataset::from_samples(read_videos(videos));
  return s;
}

json masked_delta_json(const MaskedDelta& r) {
  return {{"object", r.unmasked.accuracy_percent},
          {"masked_object", r.masked.accuracy_percent},
          {"delta", r.delta},
          {"unmasked_report", to_json(r.unmasked)},
          {"masked_report", to_json(r.masked)}};
}

}  // namespace

void Experiment::write_resolved_config(const fs::path& dir) const {
  ensure_dir(dir);
  write_text(dir / "resolved_config.json", to_json(cfg_).dump(2) + "\n");
}

json Experiment::generate() const {
  const SynthWorld world(cfg_.world_seed, cfg_.model.frame_dim, cfg_.text);
  const ClassSet source = gen_class_set(cfg_.source, ClassRole::Source);
  const ClassSet target = gen_class_set(cfg_.target, ClassRole::Target);
  require(verify_disjoint(source.descriptions, target.descriptions), ErrorKind::Config,
          "source and target class sets overlap");

  ensure_dir(cfg_.paths.data);
  write_descriptions(source_descriptions_path(), source.descriptions);
  write_descriptions(target_descriptions_path(), target.descriptions);
  Lexicon lexicon = source.lexicon;
  lexicon.insert(target.lexicon.begin(), target.lexicon.end());
  write_lexicon(lexicon_path(), lexicon);
  const auto source_videos = gen_dataset(world, source, cfg_.source);
  const auto target_videos = gen_dataset(world, target, cfg_.target);
  write_videos(source_videos_path(), source_videos);
  write_videos(target_videos_path(), target_videos);
  write_resolved_config(cfg_.paths.data);

  return {{"data_dir", cfg_.paths.data.string()},
          {"source_classes", source.descriptions.size()},
          {"source_videos", source_videos.size()},
          {"target_classes", target.descriptions.size()},
          {"target_videos", target_videos.size()},
          {"object_tokens", lexicon.size()}};
}

json Experiment::train() const {
  const LoadedSplit source = load_split(source_descriptions_path(), source_videos_path(), "source");
  const TextEncoder encoder(cfg_.text);
  const PrototypeMatrix prototypes = build_prototypes(source.descriptions, false, encoder);

  // Best-of-runs selection needs the target split; a single run does not.
  std::optional<LoadedSplit> target;
  if (cfg_.train.runs > 1) target = load_split(target_descriptions_path(), target_videos_path(), "target");

  ensure_dir(cfg_.paths.checkpoints);
  json runs = json::array();
  std::optional<TrainResult> best;
  std::size_t best_run = 0;
  double best_acc = -1.0;
  for (std::size_t run = 0; run < cfg_.train.runs; ++run) {
    TrainResult result = md::train(cfg_.model, cfg_.train, source.data, prototypes, TrainOptions{run, {}, {}});
    json entry = {{"run", run}, {"final_mean_loss", result.log.back().mean_loss}};
    double acc = 0.0;
    if (target) {
      acc = evaluate_zero_shot(result.params, cfg_.model, target->data, target->descriptions, source.descriptions,
                               false, encoder)
                .accuracy_percent;
      entry["target_accuracy"] = acc;
    }
    runs.push_back(entry);
    if (!best || acc > best_acc) {
      best_acc = acc;
      best_run = run;
      best = std::move(result);
    }
  }

  save_checkpoint(best->params, cfg_.model, final_checkpoint_path());
  std::string log_lines;
  for (const auto& e : best->log) log_lines += to_json(e).dump() + "\n";
  write_text(train_log_path(), log_lines);
  write_resolved_config(cfg_.paths.checkpoints);

  json epochs = json::array();
  for (const auto& e : best->log) epochs.push_back(to_json(e));
  return {{"checkpoint", final_checkpoint_path().string()},
          {"epochs", epochs},
          {"runs", runs},
          {"selected_run", best_run},
          {"grad_clip_norm", cfg_.train.grad_clip_norm ? json(*cfg_.train.grad_clip_norm) : json(nullptr)}};
}

EvalReport Experiment::evaluate(bool masked) const {
  require_file(final_checkpoint_path(), "checkpoint", "run train first");
  const auto [params, model] = load_checkpoint(final_checkpoint_path());
  const LoadedSplit target = load_split(target_descriptions_path(), target_videos_path(), "target");
  require_file(source_descriptions_path(), "source descriptions", "run gen first");
  const auto source_descriptions = read_descriptions(source_descriptions_path());

  const TextEncoder encoder(cfg_.text);
  EvalReport report = evaluate_zero_shot(params, model, target.data, target.descriptions, source_descriptions, masked,
                                         encoder, std::max(1u, std::thread::hardware_concurrency()));
  report.epoch = cfg_.train.epochs;
  ensure_dir(cfg_.paths.reports);
  write_text(eval_report_path(masked), to_json(report).dump(2) + "\n");
  write_resolved_config(cfg_.paths.reports);
  return report;
}

json Experiment::sweep(std::vector<std::size_t> epochs) const {
  const LoadedSplit source = load_split(source_descriptions_path(), source_videos_path(), "source");
  const LoadedSplit target = load_split(target_descriptions_path(), target_videos_path(), "target");
  const TextEncoder encoder(cfg_.text);
  ensure_dir(cfg_.paths.checkpoints);

  const ZeroShotTask task{&source.data, source.descriptions, &target.data, target.descriptions, &encoder};
  const auto rows = epoch_sweep(cfg_.model, cfg_.train, task, std::move(epochs),
                                [&](const EpochLog& log, const VisualEncoderParams& params) {
                                  save_checkpoint(params, cfg_.model, epoch_checkpoint_path(log.epoch));
                                });

  json out = {{"grad_clip_norm", cfg_.train.grad_clip_norm ? json(*cfg_.train.grad_clip_norm) : json(nullptr)},
              {"rows", json::array()}};
  for (const auto& r : rows) {
    json row = masked_delta_json(r.result);
    row["epoch"] = r.epoch;
    out["rows"].push_back(row);
  }
  ensure_dir(cfg_.paths.reports);
  write_text(cfg_.paths.reports / "sweep.json", out.dump(2) + "\n");
  write_resolved_config(cfg_.paths.reports);
  return out;
}

json Experiment::ablate() const {
  const LoadedSplit source = load_split(source_descriptions_path(), source_videos_path(), "source");
  const LoadedSplit target = load_split(target_descriptions_path(), target_videos_path(), "target");
  const TextEncoder encoder(cfg_.text);
  const ZeroShotTask task{&source.data, source.descriptions, &target.data, target.descriptions, &encoder};
  const auto rows = temporal_ablation(cfg_.model, cfg_.train, task);

  json out = {{"grad_clip_norm", cfg_.train.grad_clip_norm ? json(*cfg_.train.grad_clip_norm) : json(nullptr)},
              {"rows", json::array()}};
  for (const auto& r : rows) {
    json row = masked_delta_json(r.result);
    row["method"] = r.method;
    row["attention_layers"] = r.model.blocks();
    out["rows"].push_back(row);
  }
  ensure_dir(cfg_.paths.reports);
  write_text(cfg_.paths.reports / "ablation.json", out.dump(2) + "\n");
  write_resolved_config(cfg_.paths.reports);
  return out;
}

GradCheckSummary Experiment::gradcheck() const { return gradcheck_model(cfg_.model, cfg_.text); }

}  // namespace md
