#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

#include "leafwood/network.hpp"
#include "leafwood/prior_features.hpp"
#include "leafwood/splitter.hpp"

namespace leafwood::cli {

/// Everything a command may need. Defaults are the documented constants;
/// a config file overrides them and explicit flags override the file.
struct RunConfig {
  double radius_m = kDefaultRadius;
  std::size_t max_point_num = kDefaultMaxPointNum;
  std::uint64_t seed = 1;
  ModelConfig model = ModelConfig::toy();
  TrainConfig train;
};

/// `key = value` lines; `#` starts a comment. Unknown keys are errors.
std::map<std::string, std::string> read_key_values(const std::filesystem::path& path);

/// Applies one setting. `preset` replaces the whole model config, so it is
/// applied before any other key by apply_all.
void apply(RunConfig& rc, const std::string& key, const std::string& value);
void apply_all(RunConfig& rc, const std::map<std::string, std::string>& kv);

SamplingStrategy parse_sampling(const std::string& s);

}  // namespace leafwood::cli
