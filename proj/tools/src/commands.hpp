#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>

#include "vmsgan/memgan.hpp"
#include "vmsgan_cli/run_config.hpp"

namespace vmsgan::cli {

struct Console {
  std::ostream& out;
  std::ostream& err;
};

void run_synth(const RunConfig& config, const std::filesystem::path& out_dir, Console io);
void run_ingest(const RunConfig& config, const std::filesystem::path& out_dir, bool synthetic, Console io);
void run_train_predictor(const RunConfig& config, const std::filesystem::path& out_dir, Console io);
void run_train_gan(const RunConfig& config, const std::filesystem::path& out_dir, bool resume, Console io);
void run_generate(const RunConfig& config, const std::filesystem::path& out_dir, Console io);
void run_sweep(const RunConfig& config, const std::filesystem::path& out_dir, bool spatial, Console io);

/// mode: consistency | dprime | correlations
void run_analyze(const RunConfig& config, const std::filesystem::path& out_dir, const std::string& mode, Console io);

/// mode: fid | pairs
void run_evaluate(const RunConfig& config, const std::filesystem::path& out_dir, const std::string& mode, Console io);

// Shared helpers.

/// A checkpoint file, or a directory holding gan_epoch_*.ckpt (latest wins).
[[nodiscard]] GanState load_gan_state(const std::string& path);

/// Target map from a CSV (rows of numbers) or a gray PNG, resampled to
/// size x size. An empty path gives the central-window indicator.
[[nodiscard]] Grid load_target_map(const std::string& path, int size);

[[nodiscard]] std::string require_path(const std::string& value, const char* flag);

}  // namespace vmsgan::cli
