#include "motiondesc/motiondesc.h"

#include <cstring>
#include <exception>
#include <new>
#include <string>
#include <vector>

#include <json.hpp>

#include "core/error.hpp"
#include "core/experiment.hpp"
#include "core/protomodel.hpp"
#include "core/qualstats.hpp"
#include "core/textenc.hpp"

struct md_experiment {
  md::Experiment impl;
};

struct md_model {
  md::VisualEncoderParams params;
  md::ModelConfig config;
};

namespace {

thread_local std::string g_last_error;

md_status to_status(md::ErrorKind kind) {
  switch (kind) {
    case md::ErrorKind::InvalidArgument: return MD_ERR_INVALID_ARGUMENT;
    case md::ErrorKind::Config: return MD_ERR_CONFIG;
    case md::ErrorKind::NotFound: return MD_ERR_NOT_FOUND;
    case md::ErrorKind::Format: return MD_ERR_FORMAT;
    case md::ErrorKind::Io: return MD_ERR_IO;
    case md::ErrorKind::Numeric: return MD_ERR_NUMERIC;
  }
  return MD_ERR_INTERNAL;
}

template <typename F>
md_status guarded(F&& body) {
  g_last_error.clear();
  try {
    body();
    return MD_OK;
  } catch (const md::Error& e) {
    g_last_error = e.what();
    return to_status(e.kind());
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
  } catch (const std::exception& e) {
    g_last_error = e.what();
  } catch (...) {
    g_last_error = "unknown error";
  }
  return MD_ERR_INTERNAL;
}

char* dup_string(const std::string& s) {
  char* out = new char[s.size() + 1];
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

void emit(char** out, const nlohmann::json& j) {
  if (out) *out = dup_string(j.dump());
}

void require_arg(bool cond, const char* what) { md::require(cond, md::ErrorKind::InvalidArgument, what); }

std::vector<std::string> collect(const char* const* items, size_t n) {
  std::vector<std::string> out;
  for (size_t i = 0; i < n; ++i) {
    require_arg(items && items[i], "null string in list");
    out.emplace_back(items[i]);
  }
  return out;
}

}  // namespace

extern "C" {

const char* md_status_name(md_status status) {
  switch (status) {
    case MD_OK: return "ok";
    case MD_ERR_INVALID_ARGUMENT: return "invalid argument";
    case MD_ERR_CONFIG: return "config error";
    case MD_ERR_NOT_FOUND: return "not found";
    case MD_ERR_FORMAT: return "format error";
    case MD_ERR_IO: return "io error";
    case MD_ERR_NUMERIC: return "numeric error";
    case MD_ERR_INTERNAL: return "internal error";
  }
  return "unknown status";
}

const char* md_last_error(void) { return g_last_error.c_str(); }

void md_string_free(char* s) { delete[] s; }

const char* md_version(void) { return "0.1.0"; }

md_status md_experiment_open(const char* config_path, const char* const* overrides, size_t n_overrides,
                             md_experiment** out) {
  return guarded([&] {
    require_arg(config_path && out, "md_experiment_open: null argument");
    *out = nullptr;
    const auto ov = collect(overrides, n_overrides);
    *out = new md_experiment{md::Experiment(md::parse_config(config_path, ov))};
  });
}

md_status md_experiment_from_json(const char* json, const char* const* overrides, size_t n_overrides,
                                  md_experiment** out) {
  return guarded([&] {
    require_arg(out != nullptr, "md_experiment_from_json: null output");
    *out = nullptr;
    const auto ov = collect(overrides, n_overrides);
    const std::string text = (json && *json) ? json : "{}";
    *out = new md_experiment{md::Experiment(md::parse_config_text(text, ov))};
  });
}

void md_experiment_close(md_experiment* exp) { delete exp; }

md_status md_experiment_config_json(const md_experiment* exp, char** out_json) {
  return guarded([&] {
    require_arg(exp && out_json, "md_experiment_config_json: null argument");
    emit(out_json, md::to_json(exp->impl.config()));
  });
}

md_status md_experiment_generate(md_experiment* exp, char** out_summary_json) {
  return guarded([&] {
    require_arg(exp, "md_experiment_generate: null experiment");
    emit(out_summary_json, exp->impl.generate());
  });
}

md_status md_experiment_train(md_experiment* exp, char** out_summary_json) {
  return guarded([&] {
    require_arg(exp, "md_experiment_train: null experiment");
    emit(out_summary_json, exp->impl.train());
  });
}

md_status md_experiment_evaluate(md_experiment* exp, int masked, char** out_report_json) {
  return guarded([&] {
    require_arg(exp, "md_experiment_evaluate: null experiment");
    emit(out_report_json, md::to_json(exp->impl.evaluate(masked != 0)));
  });
}

md_status md_experiment_sweep(md_experiment* exp, const uint32_t* epochs, size_t n_epochs, char** out_table_json) {
  return guarded([&] {
    require_arg(exp && (epochs || n_epochs == 0), "md_experiment_sweep: null argument");
    std::vector<std::size_t> list(epochs, epochs + n_epochs);
    emit(out_table_json, exp->impl.sweep(std::move(list)));
  });
}

md_status md_experiment_ablate(md_experiment* exp, char** out_table_json) {
  return guarded([&] {
    require_arg(exp, "md_experiment_ablate: null experiment");
    emit(out_table_json, exp->impl.ablate());
  });
}

md_status md_experiment_gradcheck(md_experiment* exp, double* out_max_rel_error, int* out_passed,
                                  char** out_summary_json) {
  return guarded([&] {
    require_arg(exp, "md_experiment_gradcheck: null experiment");
    const md::GradCheckSummary s = exp->impl.gradcheck();
    if (out_max_rel_error) *out_max_rel_error = s.max_rel_error;
    if (out_passed) *out_passed = s.passed() ? 1 : 0;
    emit(out_summary_json, {{"max_rel_error", s.max_rel_error},
                            {"worst_parameter", s.worst_parameter},
                            {"parameters", s.parameters},
                            {"tolerance", s.tolerance},
                            {"passed", s.passed()}});
  });
}

md_status md_model_load(const char* checkpoint_path, md_model** out) {
  return guarded([&] {
    require_arg(checkpoint_path && out, "md_model_load: null argument");
    *out = nullptr;
    auto [params, cfg] = md::load_checkpoint(checkpoint_path);
    *out = new md_model{std::move(params), cfg};
  });
}

void md_model_free(md_model* model) { delete model; }

size_t md_model_frame_dim(const md_model* model) { return model ? model->config.frame_dim : 0; }

size_t md_model_embed_dim(const md_model* model) { return model ? model->config.embed_dim : 0; }

md_status md_model_encode(const md_model* model, const double* frames, size_t n_frames, double* out_embedding) {
  return guarded([&] {
    require_arg(model && frames && out_embedding, "md_model_encode: null argument");
    const std::size_t d_in = model->config.frame_dim;
    md::Matrix m(n_frames, d_in, std::vector<double>(frames, frames + n_frames * d_in));
    const md::Vector e = md::encode_video(m, model->params, model->config);
    std::copy(e.begin(), e.end(), out_embedding);
  });
}

md_status md_encode_description(const char* const* tokens, size_t n_tokens, size_t token_dim, size_t embed_dim,
                                uint64_t projection_seed, double* out) {
  return guarded([&] {
    require_arg(out != nullptr, "md_encode_description: null output");
    const auto list = collect(tokens, n_tokens);
    md::TextEncoderSpec spec{token_dim, embed_dim, projection_seed};
    spec.validate();
    const md::Vector e = md::encode_description(list, spec);
    std::copy(e.begin(), e.end(), out);
  });
}

md_status md_corpus_stats(const char* path, char** out_json) {
  return guarded([&] {
    require_arg(path && out_json, "md_corpus_stats: null argument");
    const auto descriptions = md::read_description_corpus(path);
    const md::CorpusStats s = md::corpus_stats(descriptions);
    emit(out_json, {{"path", path}, {"count", s.count}, {"descriptions", s.descriptions}, {"avg_words", s.avg_words}});
  });
}

md_status md_mask_descriptions(const char* in_path, const char* lexicon_path, const char* out_path,
                               char** out_summary_json) {
  return guarded([&] {
    require_arg(in_path && lexicon_path && out_path, "md_mask_descriptions: null argument");
    auto descriptions = md::read_descriptions(in_path);
    const md::Lexicon lexicon = md::read_lexicon(lexicon_path);
    std::size_t masked_classes = 0;
    std::size_t masked_tokens = 0;
    for (auto& d : descriptions) {
      d.masked_tokens = md::mask_objects(d.tokens, lexicon);
      std::size_t changed = 0;
      for (std::size_t i = 0; i < d.tokens.size(); ++i) changed += d.tokens[i] != d.masked_tokens[i];
      masked_tokens += changed;
      masked_classes += changed > 0;
    }
    md::write_descriptions(out_path, descriptions);
    emit(out_summary_json, {{"descriptions", descriptions.size()},
                            {"masked_descriptions", masked_classes},
                            {"masked_tokens", masked_tokens},
                            {"lexicon_size", lexicon.size()}});
  });
}

md_status md_quality_ratings(const char* csv_path, char** out_json) {
  return guarded([&] {
    require_arg(csv_path && out_json, "md_quality_ratings: null argument");
    const md::RatingTable t = md::read_ratings_csv(csv_path);
    nlohmann::json j = {{"path", csv_path},
                        {"items", t.items.size()},
                        {"annotators", t.annotators.size()},
                        {"mean", md::likert_mean(t)}};
    j["iaa_percent"] = t.annotators.size() >= 2 ? nlohmann::json(md::iaa_percent(t)) : nlohmann::json(nullptr);
    emit(out_json, j);
  });
}

md_status md_quality_votes(const char* csv_path, char** out_json) {
  return guarded([&] {
    require_arg(csv_path && out_json, "md_quality_votes: null argument");
    nlohmann::json pairs = nlohmann::json::array();
    for (const auto& [id, votes] : md::read_votes_csv(csv_path)) {
      const md::VoteOutcome o = md::majority_vote(votes);
      pairs.push_back({{"pair_id", id},
                       {"candidate_a", votes.candidate_a},
                       {"candidate_b", votes.candidate_b},
                       {"votes_a", o.votes_a},
                       {"votes_b", o.votes_b},
                       {"outcome", o.kind == md::VoteOutcome::Kind::Tie ? "tie" : "winner"},
                       {"winner", o.kind == md::VoteOutcome::Kind::Tie ? nlohmann::json(nullptr)
                                                                        : nlohmann::json(o.winner)}});
    }
    emit(out_json, {{"path", csv_path}, {"pairs", pairs}});
  });
}

}  // extern "C"
