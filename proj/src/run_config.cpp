#include "tcmt/run_config.hpp"

#include <array>
#include <fstream>
#include <sstream>

#include "tcmt/dataset.hpp"

namespace tcmt {

namespace {

constexpr std::array<const char*, 7> kNetKeys = {"input_side", "input_channels", "layers",   "feature_dim",
                                                 "fc_relu",    "init_scale",     "init_gain"};

bool is_net_key(const std::string& key) {
  for (const char* k : kNetKeys)
    if (key == k) return true;
  return false;
}

}  // namespace

RunConfig::RunConfig() : net_entries(KeyValues::parse(NetConfig::default_config().to_text())) {}

void RunConfig::set(const std::string& key, const std::string& value) {
  if (is_net_key(key)) {
    net_entries.set(key, value);
  } else if (key == "manifest") {
    manifest = value;
  } else if (key == "validation_manifest") {
    validation_manifest = value;
  } else if (key == "checkpoint") {
    checkpoint = value;
  } else if (key == "out") {
    out = value;
  } else if (key == "log_dir") {
    log_dir = value;
  } else if (!train.apply(key, value)) {
    throw ConfigError("unknown config key '" + key + "'");
  }
}

NetConfig RunConfig::net() const {
  try {
    return parse_net_config(net_entries.to_text());
  } catch (const DimensionError& e) {
    throw ConfigError(std::string("network: ") + e.what());
  }
}

std::string RunConfig::to_text() const {
  std::string s = train.to_text() + net_entries.to_text();
  KeyValues paths;
  paths.set("manifest", manifest.string());
  paths.set("validation_manifest", validation_manifest.string());
  paths.set("checkpoint", checkpoint.string());
  paths.set("out", out.string());
  paths.set("log_dir", log_dir.string());
  return s + paths.to_text();
}

RunConfig parse_run_config(const std::string& text, const std::string& source) {
  RunConfig c;
  for (const auto& [key, value] : KeyValues::parse(text, source).entries) {
    try {
      c.set(key, value);
    } catch (const ConfigError& e) {
      throw ConfigError(source + ": " + e.what());
    }
  }
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str(), path.string());
}

}  // namespace tcmt
