// SPDX-License-Identifier: Apache-2.0
//
// Command-line front end. All real work happens behind the C API of the
// shared library; this file parses arguments, forwards them, and renders
// results. Failures print one machine-readable JSON line on stderr and the
// process exits with the status code.
#include <cinttypes>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include <tcd/tcd.h>

namespace {

int report_failure(tcd_status status) {
  nlohmann::json line = {{"error", tcd_status_name(status)},
                         {"code", static_cast<int>(status)},
                         {"message", tcd_last_error()}};
  std::cerr << line.dump() << "\n";
  return static_cast<int>(status);
}

struct ConfigGuard {
  tcd_config* handle = nullptr;
  ~ConfigGuard() { tcd_config_free(handle); }
};
struct PipelineGuard {
  tcd_pipeline* handle = nullptr;
  ~PipelineGuard() { tcd_pipeline_free(handle); }
};
struct StringGuard {
  char* text = nullptr;
  ~StringGuard() { tcd_string_free(text); }
};

// Resolved config value at a dotted key, parsed from its JSON literal.
template <typename T>
tcd_status config_value(const tcd_config* config, const char* key, T& out) {
  StringGuard raw;
  tcd_status s = tcd_config_get(config, key, &raw.text);
  if (s != TCD_OK) return s;
  out = nlohmann::json::parse(raw.text).get<T>();
  return TCD_OK;
}

void render_report(const std::string& report_json) {
  nlohmann::json j = nlohmann::json::parse(report_json);
  std::printf("pipeline   %s\n", j["pipeline"].get<std::string>().c_str());
  std::printf("regime     %s\n", j["regime"].get<std::string>().c_str());
  std::printf("sequences  %d    samples %d    seed %" PRIu64 "\n\n",
              j["n_sequences"].get<int>(), j["n_samples"].get<int>(),
              j["seed"].get<uint64_t>());
  std::printf("%-12s %12s %14s\n", "metric", "horizon_ms", "value");
  for (const auto& [metric, horizons] : j["metrics"].items())
    for (const auto& [ms, value] : horizons.items())
      std::printf("%-12s %12s %14.4f\n", metric.c_str(), ms.c_str(),
                  value.get<double>());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Masked-diffusion forecasting and repair of 3D skeleton sequences"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> overrides;
  app.add_option("--config", config_path, "experiment config (JSON)")
      ->required()
      ->check(CLI::ExistingFile);
  app.add_option("--set", overrides,
                 "override a config key, e.g. --set train.epochs=4");

  auto* synth = app.add_subcommand("synth", "generate a synthetic gait corpus");
  std::string synth_out;
  synth->add_option("--out", synth_out, "output directory")->required();

  auto* mask = app.add_subcommand("mask", "apply the occlusion regime to a file");
  std::string mask_in, mask_out;
  mask->add_option("--in", mask_in, "input sequence")->required();
  mask->add_option("--out", mask_out, "masked output")->required();

  auto* train = app.add_subcommand("train", "train one block");
  std::string train_role, train_corpus, train_out;
  bool train_resume = false;
  int train_max_epochs = -1;
  train->add_option("--role", train_role, "short | long | direct | pre | refine")
      ->required();
  train->add_option("--corpus", train_corpus, "training corpus directory")->required();
  train->add_option("--out", train_out, "checkpoint path")->required();
  train->add_flag("--resume", train_resume, "continue from the checkpoint");
  train->add_option("--max-epochs", train_max_epochs,
                    "cap on additional epochs (-1 = to configured count)");

  auto* sample = app.add_subcommand("sample", "draw futures for one observation");
  std::string sample_pipeline, sample_in, sample_out;
  int sample_n = 0;
  uint64_t sample_seed = 0;
  sample->add_option("--pipeline", sample_pipeline, "predictor spec")->required();
  sample->add_option("--in", sample_in, "observation sequence")->required();
  sample->add_option("--out", sample_out, "output directory")->required();
  sample->add_option("--n", sample_n, "sample count (default: eval.n_samples)");
  auto* sample_seed_opt =
      sample->add_option("--seed", sample_seed, "sampling seed (default: eval.seed)");

  auto* repair = app.add_subcommand("repair", "fill occluded entries of a file");
  std::string repair_ckpt, repair_in, repair_out;
  repair->add_option("--checkpoint", repair_ckpt, "repair block checkpoint")
      ->required();
  repair->add_option("--in", repair_in, "masked sequence")->required();
  repair->add_option("--out", repair_out, "repaired output")->required();

  auto* evaluate = app.add_subcommand("evaluate", "run the evaluation protocol");
  std::string eval_pipeline, eval_dir, eval_report;
  evaluate->add_option("--pipeline", eval_pipeline, "predictor spec")->required();
  evaluate->add_option("--test", eval_dir, "held-out corpus directory")->required();
  evaluate->add_option("--report", eval_report, "also write the JSON report here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    nlohmann::json line = {{"error", "invalid_argument"},
                           {"code", static_cast<int>(TCD_ERR_INVALID_ARGUMENT)},
                           {"message", e.what()}};
    std::cerr << line.dump() << "\n";
    return static_cast<int>(TCD_ERR_INVALID_ARGUMENT);
  }

  std::vector<const char*> override_ptrs;
  for (const std::string& o : overrides) override_ptrs.push_back(o.c_str());
  ConfigGuard config;
  tcd_status status = tcd_config_load(config_path.c_str(), override_ptrs.data(),
                                      override_ptrs.size(), &config.handle);
  if (status != TCD_OK) return report_failure(status);

  if (*synth) {
    int count = 0;
    status = tcd_synth(config.handle, synth_out.c_str(), &count);
    if (status != TCD_OK) return report_failure(status);
    std::printf("wrote %d sequences to %s\n", count, synth_out.c_str());
    return 0;
  }

  if (*mask) {
    status = tcd_mask_file(config.handle, mask_in.c_str(), mask_out.c_str());
    if (status != TCD_OK) return report_failure(status);
    std::printf("wrote %s\n", mask_out.c_str());
    return 0;
  }

  if (*train) {
    double final_loss = 0;
    status = tcd_train(config.handle, train_role.c_str(), train_corpus.c_str(),
                       train_out.c_str(), train_resume ? 1 : 0, train_max_epochs,
                       &final_loss);
    if (status != TCD_OK) return report_failure(status);
    std::printf("wrote %s (final epoch loss %.6f)\n", train_out.c_str(), final_loss);
    return 0;
  }

  if (*sample) {
    if (sample_n == 0) {
      status = config_value(config.handle, "eval.n_samples", sample_n);
      if (status != TCD_OK) return report_failure(status);
    }
    if (sample_seed_opt->count() == 0) {
      status = config_value(config.handle, "eval.seed", sample_seed);
      if (status != TCD_OK) return report_failure(status);
    }
    PipelineGuard pipeline;
    status = tcd_pipeline_load(config.handle, sample_pipeline.c_str(), &pipeline.handle);
    if (status != TCD_OK) return report_failure(status);
    status = tcd_sample(config.handle, pipeline.handle, sample_in.c_str(), sample_n,
                        sample_seed, sample_out.c_str());
    if (status != TCD_OK) return report_failure(status);
    std::printf("wrote observation + %d samples to %s\n", sample_n, sample_out.c_str());
    return 0;
  }

  if (*repair) {
    status = tcd_repair(config.handle, repair_ckpt.c_str(), repair_in.c_str(),
                        repair_out.c_str());
    if (status != TCD_OK) return report_failure(status);
    std::printf("wrote %s\n", repair_out.c_str());
    return 0;
  }

  if (*evaluate) {
    PipelineGuard pipeline;
    status = tcd_pipeline_load(config.handle, eval_pipeline.c_str(), &pipeline.handle);
    if (status != TCD_OK) return report_failure(status);
    StringGuard report;
    status = tcd_evaluate(config.handle, pipeline.handle, eval_dir.c_str(), &report.text);
    if (status != TCD_OK) return report_failure(status);
    if (!eval_report.empty()) {
      std::ofstream out(eval_report, std::ios::binary);
      if (!out || !(out << report.text)) {
        nlohmann::json line = {{"error", "io"},
                               {"code", static_cast<int>(TCD_ERR_IO)},
                               {"message", "cannot write " + eval_report}};
        std::cerr << line.dump() << "\n";
        return static_cast<int>(TCD_ERR_IO);
      }
    }
    render_report(report.text);
    return 0;
  }

  return 0;
}
