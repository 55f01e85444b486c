#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "wonderm/checkpoint.hpp"
#include "wonderm/dataset.hpp"
#include "wonderm/nets.hpp"
#include "wonderm/trainer.hpp"

namespace wonderm {

struct PipelineConfig {
  std::uint64_t seed = 0;

  // Input data. With no image directory a synthetic corpus is generated.
  std::filesystem::path images;        // classification images
  std::filesystem::path ground_truth;  // one-hot label table for `images`
  std::filesystem::path segmentation;  // image + mask pairs; default: training split masks
  std::filesystem::path target;        // unlabeled images to predict; default: the dev split
  SynthSpec synth{78, 64, 0.0, 0};

  // Hair removal during preprocessing. Images go to encoder.input_side.
  std::optional<std::filesystem::path> hair_model;
  bool force_hair_removal = false;
  double hair_threshold = 0.5;

  EncoderSpec encoder = EncoderSpec::desk();
  TrainConfig train_seg = TrainConfig::seg();
  TrainConfig train_cls = TrainConfig::cls();

  ClassLabel anchor = ClassLabel::BCC;
  int n_sets = 4;
  int max_seg_images = 0;  // 0: all

  int inference_batch = 16;

  void validate() const;
  bool operator==(const PipelineConfig&) const = default;
};

Json to_json(const PipelineConfig& c);
PipelineConfig pipeline_config_from_json(const Json& j);
PipelineConfig read_pipeline_config(const std::filesystem::path& file);
void write_pipeline_config(const std::filesystem::path& file, const PipelineConfig& c);

// 64-bit FNV-1a over the canonical JSON form, as 16 hex digits.
std::string config_hash(const PipelineConfig& c);

// Fixed stage order; one train-cls-k stage per balanced set. Each stage
// reads only artifacts of earlier stages.
std::vector<std::string> stage_names(int n_sets);

struct StageState {
  bool done = false;
  std::vector<std::filesystem::path> artifacts;  // relative to the run directory
  double seconds = 0.0;
};

struct RunManifest {
  std::string config_hash;
  std::vector<std::string> stage_order;
  std::map<std::string, StageState> stages;
  std::optional<std::string> failed_stage;
  std::optional<std::string> error;
  Json metrics = Json::object();

  bool complete() const;
  // Done and every artifact present under run_dir.
  bool satisfied(const std::string& stage, const std::filesystem::path& run_dir) const;
};

Json to_json(const RunManifest& m);
RunManifest run_manifest_from_json(const Json& j);
RunManifest read_run_manifest(const std::filesystem::path& run_dir);
void write_run_manifest(const std::filesystem::path& run_dir, const RunManifest& m);

struct RunOptions {
  bool verbose = false;
  // Stages executed by this call, in order (filled in by run_all).
  std::vector<std::string>* executed = nullptr;
};

// Runs every stage whose flag is unset or whose artifacts are missing; a
// manifest written under a different config hash is discarded. On failure
// the manifest names the stage and the error is rethrown.
RunManifest run_all(const PipelineConfig& config, const std::filesystem::path& run_dir, const RunOptions& opts = {});

// Mean and population standard deviation.
std::pair<double, double> mean_sd(const std::vector<double>& v);

// report.txt plus normalized confusion heatmaps under run_dir/report.
void report(const std::filesystem::path& run_dir);

}  // namespace wonderm
