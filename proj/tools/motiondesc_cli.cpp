// motiondesc command-line tool. Links only the C API.
//
// Exit codes: 0 success, 1 runtime failure, 2 configuration/validation error.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "motiondesc/motiondesc.h"

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

struct Failure {
  md_status status;
};

int exit_code(md_status s) {
  switch (s) {
    case MD_OK: return kExitOk;
    case MD_ERR_INVALID_ARGUMENT:
    case MD_ERR_CONFIG:
    case MD_ERR_NOT_FOUND: return kExitUsage;
    default: return kExitRuntime;
  }
}

void check(md_status s) {
  if (s != MD_OK) throw Failure{s};
}

// Takes ownership of a library-allocated string and parses it.
json take_json(char* raw) {
  std::unique_ptr<char, decltype(&md_string_free)> holder(raw, md_string_free);
  return raw ? json::parse(raw) : json();
}

struct ExperimentHandle {
  md_experiment* ptr = nullptr;
  ~ExperimentHandle() { md_experiment_close(ptr); }
};

std::string fmt_pct(const json& v) {
  if (v.is_null()) return "-";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v.get<double>());
  return buf;
}

void print_table(const std::string& first_header, const std::vector<std::vector<std::string>>& rows) {
  std::vector<std::vector<std::string>> all = {{first_header, "Object", "Masked Object"}};
  all.insert(all.end(), rows.begin(), rows.end());
  std::vector<std::size_t> width(3, 0);
  for (const auto& r : all)
    for (std::size_t i = 0; i < r.size(); ++i) width[i] = std::max(width[i], r[i].size());
  for (std::size_t k = 0; k < all.size(); ++k) {
    for (std::size_t i = 0; i < all[k].size(); ++i)
      std::cout << (i ? " | " : "") << all[k][i] << std::string(width[i] - all[k][i].size(), ' ');
    std::cout << "\n";
    if (k == 0) std::cout << std::string(width[0] + width[1] + width[2] + 6, '-') << "\n";
  }
}

std::optional<json> read_json_file(const fs::path& p) {
  std::ifstream in(p);
  if (!in) return std::nullopt;
  try {
    return json::parse(in);
  } catch (const json::exception&) {
    return std::nullopt;
  }
}

struct Options {
  std::string config;
  std::vector<std::string> overrides;
};

void open_experiment(const Options& opt, ExperimentHandle& h) {
  std::vector<const char*> ov;
  for (const auto& o : opt.overrides) ov.push_back(o.c_str());
  if (opt.config.empty())
    check(md_experiment_from_json(nullptr, ov.data(), ov.size(), &h.ptr));
  else
    check(md_experiment_open(opt.config.c_str(), ov.data(), ov.size(), &h.ptr));
}

json resolved_config(const ExperimentHandle& h) {
  char* raw = nullptr;
  check(md_experiment_config_json(h.ptr, &raw));
  return take_json(raw);
}

std::string clip_note(const json& v) {
  return v.is_null() ? "gradient clipping: off" : "gradient clipping: global norm " + v.dump();
}

int cmd_gen(const Options& opt) {
  ExperimentHandle h;
  open_experiment(opt, h);
  char* raw = nullptr;
  check(md_experiment_generate(h.ptr, &raw));
  const json s = take_json(raw);
  std::cout << "wrote " << s["source_classes"] << " source classes / " << s["source_videos"] << " videos, "
            << s["target_classes"] << " target classes / " << s["target_videos"] << " videos to "
            << s["data_dir"].get<std::string>() << "\n";
  return kExitOk;
}

int cmd_train(const Options& opt) {
  ExperimentHandle h;
  open_experiment(opt, h);
  char* raw = nullptr;
  check(md_experiment_train(h.ptr, &raw));
  const json s = take_json(raw);
  for (const auto& e : s["epochs"]) {
    std::printf("epoch %3d  lr %.3e  loss %.6f  train_acc %6.2f  %.0f ms\n", e["epoch"].get<int>(),
                e["lr"].get<double>(), e["mean_loss"].get<double>(), e["train_acc"].get<double>(),
                e["wall_ms"].get<double>());
  }
  if (s["runs"].size() > 1) std::cout << "best of " << s["runs"].size() << " runs: run " << s["selected_run"] << "\n";
  std::cout << clip_note(s["grad_clip_norm"]) << "\n";
  std::cout << "checkpoint: " << s["checkpoint"].get<std::string>() << "\n";
  return kExitOk;
}

int cmd_eval(const Options& opt, bool masked, bool both) {
  ExperimentHandle h;
  open_experiment(opt, h);
  const json cfg = resolved_config(h);
  const fs::path reports = cfg["paths"]["reports"].get<std::string>();
  const fs::path checkpoint = fs::path(cfg["paths"]["checkpoints"].get<std::string>()) / "final.mdck";

  std::optional<json> object, masked_object;
  auto run = [&](bool m) {
    char* raw = nullptr;
    check(md_experiment_evaluate(h.ptr, m ? 1 : 0, &raw));
    (m ? masked_object : object) = take_json(raw);
  };
  if (both) {
    run(false);
    run(true);
  } else {
    run(masked);
    // Pair with the other variant when it was evaluated against this checkpoint.
    const fs::path other = reports / (masked ? "eval_unmasked.json" : "eval_masked.json");
    std::error_code ec;
    if (fs::exists(other, ec) && fs::last_write_time(other, ec) >= fs::last_write_time(checkpoint, ec))
      (masked ? object : masked_object) = read_json_file(other);
  }

  const json acc_obj = object ? (*object)["accuracy_percent"] : json();
  const json acc_masked = masked_object ? (*masked_object)["accuracy_percent"] : json();
  print_table("Method", {{"Prototype classifier (fine-tuned)", fmt_pct(acc_obj), fmt_pct(acc_masked)}});
  if (object && masked_object)
    std::printf("masked delta: %.2f points\n", acc_obj.get<double>() - acc_masked.get<double>());
  std::cout << "report: " << (reports / (masked && !both ? "eval_masked.json" : "eval_unmasked.json")).string()
            << "\n";
  return kExitOk;
}

int cmd_sweep(const Options& opt, const std::vector<std::uint32_t>& epochs) {
  ExperimentHandle h;
  open_experiment(opt, h);
  char* raw = nullptr;
  check(md_experiment_sweep(h.ptr, epochs.data(), epochs.size(), &raw));
  const json s = take_json(raw);
  std::vector<std::vector<std::string>> rows;
  for (const auto& r : s["rows"])
    rows.push_back({"Epoch " + r["epoch"].dump(), fmt_pct(r["object"]), fmt_pct(r["masked_object"])});
  print_table("Number of Epochs", rows);
  std::cout << clip_note(s["grad_clip_norm"]) << "\n";
  return kExitOk;
}

int cmd_ablate(const Options& opt) {
  ExperimentHandle h;
  open_experiment(opt, h);
  char* raw = nullptr;
  check(md_experiment_ablate(h.ptr, &raw));
  const json s = take_json(raw);
  std::vector<std::vector<std::string>> rows;
  for (const auto& r : s["rows"]) {
    const std::string name = r["method"] == "mean" ? "Mean average pooling"
                                                   : r["attention_layers"].dump() + "-layer temporal attention";
    rows.push_back({name, fmt_pct(r["object"]), fmt_pct(r["masked_object"])});
  }
  print_table("Method", rows);
  std::cout << clip_note(s["grad_clip_norm"]) << "\n";
  return kExitOk;
}

int cmd_gradcheck(const Options& opt) {
  ExperimentHandle h;
  open_experiment(opt, h);
  double err = 0.0;
  int passed = 0;
  char* raw = nullptr;
  check(md_experiment_gradcheck(h.ptr, &err, &passed, &raw));
  const json s = take_json(raw);
  std::printf("checked %zu parameters: max rel. err %.3e (worst %s, tolerance %.0e) %s\n",
              s["parameters"].get<std::size_t>(), err, s["worst_parameter"].get<std::string>().c_str(),
              s["tolerance"].get<double>(), passed ? "PASS" : "FAIL");
  return passed ? kExitOk : kExitRuntime;
}

int cmd_stats(const std::vector<std::string>& files) {
  std::printf("%-40s %12s %12s\n", "File", "Unique", "Avg words");
  for (const auto& f : files) {
    char* raw = nullptr;
    check(md_corpus_stats(f.c_str(), &raw));
    const json s = take_json(raw);
    std::printf("%-40s %12zu %12.2f\n", f.c_str(), s["count"].get<std::size_t>(), s["avg_words"].get<double>());
  }
  return kExitOk;
}

int cmd_quality(const std::vector<std::string>& ratings, const std::vector<std::string>& votes) {
  if (!ratings.empty()) {
    std::printf("%-20s %8s %8s\n", "Attribute", "Mean", "IAA%");
    for (const auto& f : ratings) {
      char* raw = nullptr;
      check(md_quality_ratings(f.c_str(), &raw));
      const json s = take_json(raw);
      std::printf("%-20s %8.2f %8s\n", fs::path(f).stem().string().c_str(), s["mean"].get<double>(),
                  fmt_pct(s["iaa_percent"]).c_str());
    }
  }
  for (const auto& f : votes) {
    char* raw = nullptr;
    check(md_quality_votes(f.c_str(), &raw));
    const json s = take_json(raw);
    for (const auto& p : s["pairs"]) {
      const std::string outcome = p["outcome"] == "tie" ? "tie" : "winner " + p["winner"].get<std::string>();
      std::printf("pair %s: %s (%zu-%zu)\n", p["pair_id"].get<std::string>().c_str(), outcome.c_str(),
                  p["votes_a"].get<std::size_t>(), p["votes_b"].get<std::size_t>());
    }
  }
  return kExitOk;
}

int cmd_mask(const std::string& in, const std::string& lexicon, const std::string& out) {
  char* raw = nullptr;
  check(md_mask_descriptions(in.c_str(), lexicon.c_str(), out.c_str(), &raw));
  const json s = take_json(raw);
  std::cout << "masked " << s["masked_tokens"] << " tokens in " << s["masked_descriptions"] << " of "
            << s["descriptions"] << " descriptions -> " << out << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Zero-shot motion-description retrieval experiments"};
  app.require_subcommand(1);
  app.set_version_flag("--version", md_version());

  Options opt;
  auto add_config = [&opt](CLI::App* sub) {
    sub->add_option("-c,--config", opt.config, "Experiment config (JSON); built-in defaults when omitted");
    sub->add_option("-s,--set", opt.overrides, "Dotted override, e.g. train.epochs=20 (repeatable)");
  };

  auto* gen = app.add_subcommand("gen", "Generate the synthetic source/target datasets");
  add_config(gen);
  auto* train = app.add_subcommand("train", "Fine-tune the visual encoder on the source split");
  add_config(train);

  auto* eval = app.add_subcommand("eval", "Zero-shot evaluation on the target split");
  add_config(eval);
  bool masked = false, both = false;
  eval->add_flag("--masked", masked, "Use masked-object descriptions");
  eval->add_flag("--both", both, "Evaluate unmasked and masked descriptions");

  auto* sweep = app.add_subcommand("sweep", "Accuracy at several fine-tuning epochs");
  add_config(sweep);
  std::vector<std::uint32_t> epochs;
  sweep->add_option("--epochs", epochs, "Epochs to evaluate, e.g. 5,10,20")->delimiter(',')->required();

  auto* ablate = app.add_subcommand("ablate", "Mean pooling vs temporal attention head");
  add_config(ablate);
  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference check of every encoder parameter");
  add_config(gradcheck);

  auto* stats = app.add_subcommand("stats", "Description corpus statistics");
  std::vector<std::string> stat_files;
  stats->add_option("files", stat_files, "Description files (.jsonl or one sentence per line)")->required();

  auto* quality = app.add_subcommand("quality", "Likert mean, IAA% and majority votes");
  std::vector<std::string> rating_files, vote_files;
  quality->add_option("--ratings", rating_files, "item_id,annotator_id,rating CSV (repeatable)");
  quality->add_option("--votes", vote_files, "pair_id,candidate,voter_id CSV (repeatable)");

  auto* mask = app.add_subcommand("mask", "Fill masked_tokens of a description file from a lexicon");
  std::string mask_in, mask_lexicon, mask_out;
  mask->add_option("--in", mask_in, "Input description file")->required();
  mask->add_option("--lexicon", mask_lexicon, "Object lexicon, one token per line")->required();
  mask->add_option("--out", mask_out, "Output description file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*gen) return cmd_gen(opt);
    if (*train) return cmd_train(opt);
    if (*eval) return cmd_eval(opt, masked, both);
    if (*sweep) return cmd_sweep(opt, epochs);
    if (*ablate) return cmd_ablate(opt);
    if (*gradcheck) return cmd_gradcheck(opt);
    if (*stats) return cmd_stats(stat_files);
    if (*quality) {
      if (rating_files.empty() && vote_files.empty()) {
        std::cerr << "quality: give --ratings and/or --votes\n";
        return kExitUsage;
      }
      return cmd_quality(rating_files, vote_files);
    }
    if (*mask) return cmd_mask(mask_in, mask_lexicon, mask_out);
  } catch (const Failure& f) {
    std::cerr << "error: " << md_last_error() << "\n";
    return exit_code(f.status);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}
