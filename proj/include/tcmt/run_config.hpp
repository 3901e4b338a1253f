#pragma once

#include <filesystem>
#include <string>

#include "tcmt/feature_net.hpp"
#include "tcmt/kv_text.hpp"
#include "tcmt/trainer.hpp"

namespace tcmt {

/// Training, network and path settings for one CLI run, as one key=value file.
struct RunConfig {
  TrainConfig train;
  KeyValues net_entries;  // network keys, seeded from NetConfig::default_config()
  std::filesystem::path manifest;
  std::filesystem::path validation_manifest;  // optional; otherwise split from `manifest`
  std::filesystem::path checkpoint;           // input checkpoint
  std::filesystem::path out;                  // output checkpoint
  std::filesystem::path log_dir;

  RunConfig();

  /// Sets any known key; throws ConfigError for unknown keys or bad values.
  void set(const std::string& key, const std::string& value);
  NetConfig net() const;
  std::string to_text() const;
};

RunConfig parse_run_config(const std::string& text, const std::string& source = "<config>");
RunConfig load_run_config(const std::filesystem::path& path);

}  // namespace tcmt
