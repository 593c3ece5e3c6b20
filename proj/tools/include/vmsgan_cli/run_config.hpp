#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include <nlohmann/json.hpp>

#include "vmsgan/evaluation.hpp"
#include "vmsgan/memgan.hpp"
#include "vmsgan/vms_predictor.hpp"

namespace vmsgan::cli {

struct DataPaths {
  std::string manifest;
  std::string predictor_checkpoint;
  std::string gan_checkpoint;
};

/// Directory layout read by `ingest`: images/<id>.png, optional
/// vms/<id>.true.png and vms/<id>.false.png, optional annotations/<id>/*.png.
struct IngestSettings {
  std::string images;
  std::string vms;
  std::string annotations;
  std::string false_annotations;
  std::string responses;   ///< CSV image_id,hits,misses,false_alarms,correct_rejections
  std::string categories;  ///< CSV image_id,category
  std::string default_category;
  std::string name = "dataset";
  int image_resolution = 64;
  int vms_resolution = 32;
};

struct SynthSettings {
  int n = 2048;
  int resolution = 64;
  int observers = 8;
  double annotation_noise = 0.05;
  int trials = 100;
};

struct PredictorTraining {
  double holdout = 0.1;  ///< fraction of records kept out for the Pearson report
};

struct GenerateSettings {
  int n = 16;
  double m = 0.5;
  int steps = 8;
  double m_min = 0.0;
  double m_max = 1.0;
  std::string target_map;  ///< CSV or PNG; empty = central-window indicator
  int columns = 8;
};

struct AnalysisSettings {
  int splits = 25;
};

struct FidSettings {
  FidProtocol protocol;
  int pool = 8;  ///< raw-pixel features pooled to pool x pool per channel; 0 = full resolution
};

struct PairSettings {
  int n = 200;
  double m_low = 0.1;
  double m_high = 0.9;
  double threshold = 0.65;
  double bin_width = 0.05;
  std::string scorer = "internal";  ///< internal | oracle | external | none
  std::string scores;               ///< external score CSV
  bool save_images = true;
  int window_top = -1;  ///< spatial window; -1 = central window
  int window_left = -1;
  int window_size = -1;
};

/// Every setting a command can consume. Config-file values are loaded first,
/// then command-line flags override them; the resolved copy is written to
/// the output directory as run_config.json.
struct RunConfig {
  std::uint64_t seed = 1;
  DataPaths data;
  IngestSettings ingest;
  SynthSettings synth;
  PredictorConfig predictor;
  PredictorTraining predictor_training;
  GanConfig gan;
  GenerateSettings generate;
  AnalysisSettings analysis;
  FidSettings fid;
  PairSettings pairs;
};

void to_json(nlohmann::json& j, const RunConfig& c);
void from_json(const nlohmann::json& j, RunConfig& c);

/// Throws UsageError for unreadable or malformed files.
[[nodiscard]] RunConfig load_run_config(const std::filesystem::path& path);

/// Writes {"command": ..., "config": ...}; load_run_config accepts this file too.
void write_run_config(const std::filesystem::path& path, const std::string& command, const RunConfig& config);

}  // namespace vmsgan::cli
