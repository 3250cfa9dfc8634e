#include "run_config.hpp"

#include <charconv>
#include <fstream>

#include "leafwood/errors.hpp"

namespace leafwood::cli {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

template <class T>
T number(const std::string& key, const std::string& v) {
  T out{};
  const auto [end, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || end != v.data() + v.size()) {
    throw ContractError("config key '" + key + "' expects a number, got '" + v + "'");
  }
  return out;
}

bool boolean(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ContractError("config key '" + key + "' expects true/false, got '" + v + "'");
}

}  // namespace

SamplingStrategy parse_sampling(const std::string& s) {
  if (s == "random") return SamplingStrategy::random;
  if (s == "fps") return SamplingStrategy::fps;
  throw ContractError("sampling must be 'random' or 'fps', got '" + s + "'");
}

std::map<std::string, std::string> read_key_values(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file " + path.string());
  std::map<std::string, std::string> kv;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError(path.string() + ": expected key=value", lineno);
    kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return kv;
}

void apply(RunConfig& rc, const std::string& key, const std::string& v) {
  if (key == "preset") {
    if (v == "toy") {
      rc.model = ModelConfig::toy();
    } else if (v == "full") {
      rc.model = ModelConfig{};
    } else {
      throw ContractError("preset must be 'toy' or 'full', got '" + v + "'");
    }
  } else if (key == "radius") {
    rc.radius_m = number<double>(key, v);
  } else if (key == "max_points") {
    rc.max_point_num = number<std::size_t>(key, v);
  } else if (key == "sampling") {
    rc.model.sampling = parse_sampling(v);
  } else if (key == "seed") {
    rc.seed = number<std::uint64_t>(key, v);
  } else if (key == "lr") {
    rc.train.learning_rate = number<double>(key, v);
  } else if (key == "epochs") {
    rc.train.epochs = number<std::size_t>(key, v);
  } else if (key == "decay") {
    rc.train.decay_rate = number<double>(key, v);
  } else if (key == "decay_step") {
    rc.train.decay_step = number<std::size_t>(key, v);
  } else if (key == "batch") {
    rc.train.batch = number<std::size_t>(key, v);
  } else if (key == "optimizer") {
    if (v != "adam" && v != "sgd") throw ContractError("optimizer must be 'adam' or 'sgd'");
    rc.train.optimizer = v == "adam" ? Optimizer::adam : Optimizer::sgd;
  } else if (key == "wood_weight") {
    rc.train.class_weights = {1.0, number<double>(key, v)};
  } else if (key == "use_linearity") {
    rc.model.use_linearity = boolean(key, v);
  } else if (key == "block_points") {
    rc.model.block_points = number<std::size_t>(key, v);
  } else if (key == "level1_centroids") {
    rc.model.level1.num_centroids = number<std::size_t>(key, v);
  } else if (key == "level2_centroids") {
    rc.model.level2.num_centroids = number<std::size_t>(key, v);
  } else {
    throw ContractError("unknown config key '" + key + "'");
  }
}

void apply_all(RunConfig& rc, const std::map<std::string, std::string>& kv) {
  if (auto it = kv.find("preset"); it != kv.end()) apply(rc, it->first, it->second);
  for (const auto& [k, v] : kv) {
    if (k != "preset") apply(rc, k, v);
  }
}

}  // namespace leafwood::cli
