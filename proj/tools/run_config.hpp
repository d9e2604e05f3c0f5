#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "hcal/trainer.hpp"

namespace hcal::cli {

// Everything a training run needs, as a flat `key = value` document:
// the TrainConfig keys plus the input and output paths.
struct RunConfig {
  TrainConfig train;
  std::string taxonomy;
  std::string train_data;
  std::string test_data;
  std::string out;
};

// Applies one entry; unknown keys raise ConfigError.
void set_value(RunConfig& config, const std::string& key, const std::string& value);

// Parses `key = value` lines; '#' starts a comment, blank lines are ignored.
RunConfig parse_run_config(const std::string& text, RunConfig base = {});
RunConfig load_run_config(const std::filesystem::path& path, RunConfig base = {});

std::vector<std::pair<std::string, std::string>> entries(const RunConfig& config);
std::string to_text(const RunConfig& config);

}  // namespace hcal::cli
