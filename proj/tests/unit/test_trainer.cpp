#include <doctest.h>

#include <cmath>
#include <numeric>

#include "core/error.hpp"
#include "core/trainer.hpp"
#include "support/test_support.hpp"

using namespace md;

namespace {

test::ZeroShotWorld& default_world() {
  static test::ZeroShotWorld w(test::default_source(), test::default_target());
  return w;
}

const TrainResult& default_training() {
  static const TrainResult r = [] {
    auto& w = default_world();
    const auto protos = build_prototypes(w.source.descriptions, false, w.encoder);
    return train(ModelConfig{}, test::synthetic_train(), w.source_data, protos);
  }();
  return r;
}

test::ZeroShotWorld small_world(std::uint64_t seed) {
  SynthConfig src = test::default_source();
  src.seed = seed;
  src.num_classes = 6;
  src.videos_per_class = 5;
  SynthConfig tgt = test::default_target();
  tgt.seed = seed + 1;
  tgt.num_classes = 4;
  tgt.videos_per_class = 3;
  return test::ZeroShotWorld(src, tgt);
}

TrainConfig short_train() {
  TrainConfig t = test::synthetic_train();
  t.epochs = 3;
  t.warmup_epochs = 1;
  t.batch_size = 7;
  return t;
}

}  // namespace

TEST_SUITE("trainer") {

TEST_CASE("config validation and JSON round trip") {
  TrainConfig t;
  CHECK(train_config_from_json(to_json(t)) == t);
  t.grad_clip_norm = 1.5;
  CHECK(train_config_from_json(to_json(t)) == t);
  t.warmup_epochs = 11;
  CHECK_THROWS_AS(t.validate(), Error);
  t = TrainConfig{};
  t.batch_size = 0;
  CHECK_THROWS_AS(t.validate(), Error);
  auto j = to_json(TrainConfig{});
  j["momentum"] = 0.9;
  CHECK_THROWS_AS(train_config_from_json(j), Error);
}

TEST_CASE("two runs with the same seeds are bit-identical") {
  auto w = small_world(40);
  const auto protos = build_prototypes(w.source.descriptions, false, w.encoder);
  ModelConfig m;
  m.temporal = TemporalMode::Attention;
  const auto a = train(m, short_train(), w.source_data, protos);
  const auto b = train(m, short_train(), w.source_data, protos);
  CHECK(encode_checkpoint(a.params, m) == encode_checkpoint(b.params, m));
  REQUIRE(a.log.size() == 3);
  for (std::size_t e = 0; e < a.log.size(); ++e) CHECK(a.log[e].batch_losses == b.log[e].batch_losses);
}

TEST_CASE("zero learning rate leaves parameters unchanged") {
  auto w = small_world(41);
  const auto protos = build_prototypes(w.source.descriptions, false, w.encoder);
  const ModelConfig m;
  TrainConfig t = short_train();
  t.base_lr = 0.0;
  const auto r = train(m, t, w.source_data, protos);
  const auto init = VisualEncoderParams::initialize(m, run_init_seed(m, 0));
  CHECK(r.params == init);
  const double untrained = evaluate(init, m, w.source_data, protos).accuracy_percent;
  for (const auto& e : r.log) CHECK(e.train_acc == doctest::Approx(untrained).epsilon(1e-12));
}

TEST_CASE("epoch log covers every sample including the last partial batch") {
  auto w = small_world(42);
  const auto protos = build_prototypes(w.source.descriptions, false, w.encoder);
  const auto r = train(ModelConfig{}, short_train(), w.source_data, protos);
  // 30 samples in batches of 7 -> 5 batches.
  for (const auto& e : r.log) CHECK(e.batch_losses.size() == 5);
  CHECK(r.log.front().epoch == 1);
  CHECK(r.log.back().epoch == 3);
  CHECK(r.log[0].lr == doctest::Approx(lr_at(0, short_train().schedule())));
}

TEST_CASE("gradient clipping changes the trajectory") {
  auto w = small_world(43);
  const auto protos = build_prototypes(w.source.descriptions, false, w.encoder);
  TrainConfig t = short_train();
  t.grad_clip_norm = 1e-6;
  const auto clipped = train(ModelConfig{}, t, w.source_data, protos);
  const auto free = train(ModelConfig{}, short_train(), w.source_data, protos);
  CHECK_FALSE(clipped.params == free.params);
}

TEST_CASE("snapshots are taken at the requested epochs") {
  auto w = small_world(44);
  const auto protos = build_prototypes(w.source.descriptions, false, w.encoder);
  TrainOptions opts;
  opts.snapshot_epochs = {1, 3};
  std::size_t calls = 0;
  opts.on_epoch = [&](const EpochLog&, const VisualEncoderParams&) { ++calls; };
  const auto r = train(ModelConfig{}, short_train(), w.source_data, protos, opts);
  CHECK(calls == 3);
  REQUIRE(r.snapshots.size() == 2);
  CHECK(r.snapshots[0].first == 1);
  CHECK(r.snapshots[1].second == r.params);
}

TEST_CASE("training on the default source reduces loss tenfold") {
  const auto& log = default_training().log;
  REQUIRE(log.size() == 10);
  CHECK(log.back().mean_loss < 0.1 * log.front().mean_loss);
}

TEST_CASE("evaluation of an encoder that reproduces the prototypes is perfect") {
  const std::size_t d = 4;
  ModelConfig m;
  m.frame_dim = d;
  m.hidden = 2 * d;
  m.embed_dim = d;
  m.frames = 2;
  // ReLU(x) - ReLU(-x) = x, so the encoder is the identity on each frame.
  VisualEncoderParams p = VisualEncoderParams::zeros(m);
  for (std::size_t i = 0; i < d; ++i) {
    p.layer1(i, i) = 1.0;
    p.layer1(i, d + i) = -1.0;
    p.layer2(i, i) = 1.0;
    p.layer2(d + i, i) = -1.0;
  }
  TextEncoderSpec spec;
  spec.embed_dim = d;
  std::vector<Description> ds;
  for (std::int64_t c = 0; c < 5; ++c) ds.push_back({c, "c", {"w" + std::to_string(c), "x"}, {"w" + std::to_string(c), "x"}});
  const auto protos = build_prototypes(ds, false, spec);
  Dataset data;
  for (std::size_t c = 0; c < 5; ++c) {
    Matrix f(2, d);
    for (std::size_t t = 0; t < 2; ++t) std::copy(protos.weights.row(c).begin(), protos.weights.row(c).end(), f.row(t).begin());
    data.frames.push_back(f);
    data.labels.push_back(c);
  }
  const auto r = evaluate(p, m, data, protos);
  CHECK(r.accuracy_percent == 100.0);
  REQUIRE(r.per_class.size() == 5);
  for (const auto& c : r.per_class) CHECK(c.correct == c.total);
}

TEST_CASE("random prototypes give chance-level accuracy") {
  auto& w = default_world();
  const ModelConfig m;
  const auto& params = default_training().params;
  const std::size_t classes = w.target.descriptions.size();
  std::vector<double> acc;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    std::mt19937_64 rng(1000 + seed);
    std::normal_distribution<double> n(0.0, 1.0);
    PrototypeMatrix protos{Matrix(classes, m.embed_dim), {}, false};
    for (std::size_t c = 0; c < classes; ++c) {
      Vector row(m.embed_dim);
      for (double& x : row) x = n(rng);
      const Vector u = l2_normalize(row);
      std::copy(u.begin(), u.end(), protos.weights.row(c).begin());
      protos.class_ids.push_back(static_cast<std::int64_t>(c));
    }
    acc.push_back(evaluate(params, m, w.target_data, protos).accuracy_percent);
  }
  const double mean = std::accumulate(acc.begin(), acc.end(), 0.0) / acc.size();
  double var = 0.0;
  for (double a : acc) var += (a - mean) * (a - mean);
  const double se = std::sqrt(var / (acc.size() - 1) / acc.size());
  CHECK(std::abs(mean - 100.0 / classes) <= 3.0 * se);
}

TEST_CASE("trained model matches the Bayes oracle on a noiseless target") {
  auto& w = default_world();
  SynthConfig tgt = w.target_cfg;
  tgt.noise_sigma = 0.0;
  const auto videos = gen_dataset(w.world, w.target, tgt);
  const test::BayesOracle oracle(w.world, w.target, 0.0);
  CHECK(oracle.accuracy_percent(videos) == 100.0);
  const auto r = evaluate_zero_shot(default_training().params, ModelConfig{}, Dataset::from_samples(videos),
                                    w.target.descriptions, w.source.descriptions, false, w.encoder);
  CHECK(r.accuracy_percent == oracle.accuracy_percent(videos));
}

TEST_CASE("evaluation is independent of the thread count") {
  auto& w = default_world();
  const auto protos = build_prototypes(w.target.descriptions, false, w.encoder);
  const auto one = evaluate(default_training().params, ModelConfig{}, w.target_data, protos, 1);
  const auto four = evaluate(default_training().params, ModelConfig{}, w.target_data, protos, 4);
  CHECK(one == four);
}

TEST_CASE("zero-shot evaluation rejects overlapping classes and empty input") {
  auto& w = default_world();
  CHECK_THROWS_AS(evaluate_zero_shot(default_training().params, ModelConfig{}, w.source_data, w.source.descriptions,
                                     w.source.descriptions, false, w.encoder),
                  Error);
  CHECK_THROWS_AS(evaluate_zero_shot(default_training().params, ModelConfig{}, w.target_data, {}, w.source.descriptions,
                                     false, w.encoder),
                  Error);
}

TEST_CASE("masked delta is exactly zero without objects") {
  auto& w = default_world();
  const auto d = masked_delta_report(default_training().params, ModelConfig{}, w.target_data, w.target.descriptions,
                                     w.source.descriptions, w.encoder);
  CHECK(d.delta == 0.0);
  CHECK(d.masked.masked);
  CHECK_FALSE(d.unmasked.masked);
}

TEST_CASE("masked delta is positive when objects leak into the video") {
  SynthConfig src = test::default_source();
  SynthConfig tgt = test::default_target();
  for (SynthConfig* c : {&src, &tgt}) {
    c->object_strength = 2.0;
    c->object_prob = 1.0;
  }
  test::ZeroShotWorld w(src, tgt);
  const auto protos = build_prototypes(w.source.descriptions, false, w.encoder);
  const auto r = train(ModelConfig{}, test::synthetic_train(), w.source_data, protos);
  const auto d = masked_delta_report(r.params, ModelConfig{}, w.target_data, w.target.descriptions,
                                     w.source.descriptions, w.encoder);
  CHECK(d.delta > 0.0);
}

TEST_CASE("epoch sweep") {
  auto& w = default_world();
  const auto rows = epoch_sweep(ModelConfig{}, test::synthetic_train(), w.task(), {10, 5});
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].epoch == 5);
  CHECK(rows[1].epoch == 10);
  CHECK(rows[1].result.unmasked.accuracy_percent >= rows[0].result.unmasked.accuracy_percent - 2.0);

  auto sw = small_world(45);
  CHECK(epoch_sweep(ModelConfig{}, short_train(), sw.task(), {3, 3}).size() == 1);
  CHECK_THROWS_AS(epoch_sweep(ModelConfig{}, short_train(), sw.task(), {}), Error);
  CHECK_THROWS_AS(epoch_sweep(ModelConfig{}, short_train(), sw.task(), {4}), Error);
}

TEST_CASE("temporal ablation evaluates both variants on the same split") {
  auto w = small_world(46);
  const auto rows = temporal_ablation(ModelConfig{}, short_train(), w.task());
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].model.temporal != rows[1].model.temporal);
  for (const auto& r : rows) {
    std::uint64_t total = 0;
    for (const auto& c : r.result.unmasked.per_class) total += c.total;
    CHECK(total == w.target_data.size());
  }
}

TEST_CASE("report JSON carries accuracy, masked flag and per-class counts") {
  EvalReport r;
  r.accuracy_percent = 50.0;
  r.masked = true;
  r.per_class = {{1000, 1, 2}};
  const auto j = to_json(r);
  CHECK(j["accuracy_percent"] == 50.0);
  CHECK(j["masked"] == true);
  CHECK(j["per_class"].size() == 1);
}

TEST_CASE("property: per-class counts sum to the dataset and accuracy agrees") {
  auto& w = default_world();
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto params = VisualEncoderParams::initialize(ModelConfig{}, seed);
    const auto r = evaluate_zero_shot(params, ModelConfig{}, w.target_data, w.target.descriptions,
                                      w.source.descriptions, seed % 2 == 1, w.encoder);
    std::uint64_t correct = 0, total = 0;
    for (const auto& c : r.per_class) {
      CHECK(c.correct <= c.total);
      correct += c.correct;
      total += c.total;
    }
    CHECK(total == w.target_data.size());
    CHECK(r.accuracy_percent == doctest::Approx(100.0 * correct / total));
  }
}

}  // TEST_SUITE
