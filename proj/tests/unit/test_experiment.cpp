#include <doctest.h>

#include <string>

#include "core/error.hpp"
#include "core/experiment.hpp"
#include "support/test_support.hpp"

using namespace md;
using nlohmann::json;

namespace {

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected an error");
  return ErrorKind::Io;
}

std::string small_config(const std::filesystem::path& root) {
  json j = to_json(ExperimentConfig{});
  j["synth"]["source"]["num_classes"] = 6;
  j["synth"]["source"]["videos_per_class"] = 4;
  j["synth"]["target"]["num_classes"] = 3;
  j["synth"]["target"]["videos_per_class"] = 2;
  j["train"]["epochs"] = 2;
  j["train"]["warmup_epochs"] = 1;
  j["paths"] = {{"data", (root / "data").string()},
                {"checkpoints", (root / "ckpt").string()},
                {"reports", (root / "reports").string()}};
  return j.dump();
}

}  // namespace

TEST_SUITE("experiment") {

TEST_CASE("config file without overrides equals its contents") {
  test::TempDir dir("cfg");
  const std::string text = small_config(dir.path());
  test::write_text(dir / "c.json", text);
  const ExperimentConfig cfg = parse_config(dir / "c.json");
  CHECK(to_json(cfg) == json::parse(text));
  CHECK(experiment_config_from_json(to_json(cfg)) == cfg);
}

TEST_CASE("dotted overrides") {
  const std::vector<std::string> epochs{"train.epochs=20"};
  CHECK(parse_config_text("{}", epochs).train.epochs == 20);

  const std::vector<std::string> several{"train.grad_clip_norm=1.0", "model.temporal=attention",
                                         "paths.data=/tmp/x", "synth.source.noise_sigma=0.5"};
  const auto cfg = parse_config_text("{}", several);
  CHECK(cfg.train.grad_clip_norm == 1.0);
  CHECK(cfg.model.temporal == TemporalMode::Attention);
  CHECK(cfg.paths.data == "/tmp/x");
  CHECK(cfg.source.noise_sigma == 0.5);
}

TEST_CASE("config errors are reported as configuration errors") {
  const std::vector<std::string> unknown{"unknown.key=1"};
  CHECK(kind_of([&] { parse_config_text("{}", unknown); }) == ErrorKind::Config);
  const std::vector<std::string> mistyped{"train.epochs=many"};
  CHECK(kind_of([&] { parse_config_text("{}", mistyped); }) == ErrorKind::Config);
  const std::vector<std::string> section{"train={}"};
  CHECK(kind_of([&] { parse_config_text("{}", section); }) == ErrorKind::Config);
  const std::vector<std::string> no_equals{"train.epochs"};
  CHECK(kind_of([&] { parse_config_text("{}", no_equals); }) == ErrorKind::Config);
  CHECK(kind_of([] { parse_config_text("{not json"); }) == ErrorKind::Config);
  CHECK(kind_of([] { parse_config_text(R"({"train":{"epoch":3}})"); }) == ErrorKind::Config);
  CHECK(kind_of([] { parse_config_text(R"({"model":{"embed_dim":8}})"); }) == ErrorKind::Config);
  CHECK(kind_of([] { parse_config("/nonexistent/config.json"); }) == ErrorKind::Config);
}

TEST_CASE("unknown key error names the offending path") {
  try {
    parse_config_text(R"({"synth":{"source":{"colour":1}}})");
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("synth.source.colour") != std::string::npos);
  }
}

TEST_CASE("evaluate without a checkpoint reports not found") {
  test::TempDir dir("nockpt");
  const Experiment exp(parse_config_text(small_config(dir.path())));
  try {
    exp.evaluate(false);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::NotFound);
    CHECK(std::string(e.what()).find("checkpoint not found") != std::string::npos);
  }
  CHECK(kind_of([&] { exp.train(); }) == ErrorKind::NotFound);
}

TEST_CASE("pipeline writes artifacts and resolved configs") {
  test::TempDir dir("pipeline");
  const Experiment exp(parse_config_text(small_config(dir.path())));
  const json gen = exp.generate();
  CHECK(gen["source_videos"] == 24);
  CHECK(gen["target_videos"] == 6);
  const json tr = exp.train();
  CHECK(tr["epochs"].size() == 2);
  const EvalReport unmasked = exp.evaluate(false);
  const EvalReport masked = exp.evaluate(true);
  CHECK(masked.masked);
  CHECK(unmasked.per_class.size() == 3);
  for (const char* sub : {"data", "ckpt", "reports"}) {
    const auto resolved = dir.path() / sub / "resolved_config.json";
    REQUIRE(std::filesystem::exists(resolved));
    CHECK(parse_config(resolved) == exp.config());
  }
  CHECK(std::filesystem::exists(exp.eval_report_path(true)));
  CHECK(std::filesystem::exists(exp.train_log_path()));

  const json sweep = exp.sweep({1, 2});
  CHECK(sweep["rows"].size() == 2);
  CHECK(std::filesystem::exists(exp.epoch_checkpoint_path(1)));
  CHECK(exp.ablate()["rows"].size() == 2);
}

TEST_CASE("best-of-runs training records every run") {
  test::TempDir dir("runs");
  const std::vector<std::string> ov{"train.runs=3"};
  const Experiment exp(parse_config_text(small_config(dir.path()), ov));
  exp.generate();
  const json tr = exp.train();
  REQUIRE(tr["runs"].size() == 3);
  double best = -1.0;
  for (const auto& r : tr["runs"]) best = std::max(best, r["target_accuracy"].get<double>());
  CHECK(tr["runs"][tr["selected_run"].get<std::size_t>()]["target_accuracy"] == best);
}

TEST_CASE("gradient check of the default model passes") {
  const auto r = gradcheck_model(ModelConfig{}, TextEncoderSpec{});
  CHECK(r.parameters == 32 * 64 + 64 * 16);
  CHECK(r.passed());
  MESSAGE("max rel. err " << r.max_rel_error << " at " << r.worst_parameter);
}

}  // TEST_SUITE
