// leafwood command-line tool. Data goes to files; diagnostics go to stderr.

#include <chrono>
#include <exception>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "leafwood/atomic_file.hpp"
#include "leafwood/cloud.hpp"
#include "leafwood/errors.hpp"
#include "leafwood/evaluation.hpp"
#include "leafwood/network.hpp"
#include "leafwood/prior_features.hpp"
#include "leafwood/sampling.hpp"
#include "leafwood/splitter.hpp"
#include "leafwood/synthgen.hpp"
#include "run_config.hpp"

namespace fs = std::filesystem;
using namespace leafwood;
using leafwood::cli::RunConfig;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

/// Flags that mirror config-file keys. Values stay strings until applied so
/// that "flag given" can be told apart from "flag left at default".
class Overrides {
 public:
  void add(CLI::App* app, const std::string& flag, const std::string& key,
           const std::string& help) {
    auto& slot = values_[key];
    options_[key] = app->add_option(flag, slot, help);
  }

  CLI::Option* option(const std::string& key) { return options_.at(key); }

  void apply(RunConfig& rc) const {
    for (const auto& [key, opt] : options_) {
      if (opt->count() > 0) cli::apply(rc, key, values_.at(key));
    }
  }

 private:
  std::map<std::string, std::string> values_;
  std::map<std::string, CLI::Option*> options_;
};

struct ConfigArgs {
  std::string config_file;
  std::string preset;
  Overrides overrides;

  /// Defaults, then the config file, then --preset, then every other flag.
  RunConfig resolve() const {
    RunConfig rc;
    if (!config_file.empty()) cli::apply_all(rc, cli::read_key_values(config_file));
    if (!preset.empty()) cli::apply(rc, "preset", preset);
    overrides.apply(rc);
    return rc;
  }
};

void add_config_flags(CLI::App* app, ConfigArgs& args) {
  app->add_option("--config", args.config_file, "key=value config file (flags win)")
      ->check(CLI::ExistingFile);
  app->add_option("--preset", args.preset, "model size preset")
      ->check(CLI::IsMember({"toy", "full"}));
}

void write_text_file(const fs::path& path, const std::string& text) {
  write_atomically(path, [&](std::ofstream& out) { out << text; });
}

LabeledCloud featurized(LabeledCloud cloud, double radius) {
  auto field = compute_linearity_field(cloud, build_index(cloud), radius);
  return std::move(cloud).with_linearity(std::move(field.values));
}

std::vector<std::string> read_list(const fs::path& list) {
  std::ifstream in(list);
  if (!in) throw IoError("cannot open file list " + list.string());
  std::vector<std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    // Relative entries resolve against the list's own directory.
    fs::path p(line);
    out.push_back((p.is_relative() ? list.parent_path() / p : p).string());
  }
  return out;
}

// ---------------------------------------------------------------------------

struct FeaturizeArgs {
  std::string in, out;
  ConfigArgs cfg;
};

void run_featurize(const FeaturizeArgs& a) {
  const RunConfig rc = a.cfg.resolve();
  const auto t0 = Clock::now();
  const LabeledCloud cloud = featurized(load_xyz(a.in), rc.radius_m);
  save_xyz(cloud, a.out);
  std::cerr << "featurize: " << cloud.size() << " points, radius " << rc.radius_m << " m, "
            << seconds_since(t0) << " s\n";
}

struct SplitArgs {
  std::string in, out_dir, stem;
  ConfigArgs cfg;
};

void run_split(const SplitArgs& a) {
  const RunConfig rc = a.cfg.resolve();
  const LabeledCloud cloud = load_xyz(a.in);
  const auto chunks = split(cloud, plan_split(cloud.size(), rc.max_point_num));
  fs::create_directories(a.out_dir);
  const std::string stem = a.stem.empty() ? fs::path(a.in).stem().string() : a.stem;
  const auto paths = save_chunks(chunks, a.out_dir, stem);
  std::cerr << "split: " << cloud.size() << " points into " << paths.size() << " chunks of at most "
            << rc.max_point_num << "\n";
}

struct SampleArgs {
  std::string in, out;
  std::size_t k = 2048;
  std::size_t start = 0;
  ConfigArgs cfg;
};

void run_sample(const SampleArgs& a) {
  const RunConfig rc = a.cfg.resolve();
  const LabeledCloud cloud = load_xyz(a.in);
  const auto t0 = Clock::now();
  const SampleSet s = rc.model.sampling == SamplingStrategy::fps
                          ? farthest_point_sampling(cloud.points(), a.k, a.start)
                          : random_centroids(cloud.size(), a.k, rc.seed);
  const double dt = seconds_since(t0);
  write_atomically(a.out, [&](std::ofstream& out) {
    for (std::size_t i : s.indices) out << i << '\n';
  });
  std::cerr << "sample: " << s.indices.size() << " of " << cloud.size() << " points ("
            << (s.strategy == SamplingStrategy::fps ? "fps" : "random") << ") in " << dt << " s\n";
}

struct TrainArgs {
  std::vector<std::string> inputs;
  std::string list, checkpoint, report;
  ConfigArgs cfg;
};

void run_train(const TrainArgs& a) {
  RunConfig rc = a.cfg.resolve();
  std::vector<std::string> files = a.inputs;
  if (!a.list.empty()) {
    const auto listed = read_list(a.list);
    files.insert(files.end(), listed.begin(), listed.end());
  }
  if (files.empty()) throw ContractError("train needs at least one input file");

  std::vector<LabeledCloud> chunks;
  for (const auto& f : files) {
    LabeledCloud cloud = load_xyz(f);
    if (!cloud.has_linearity()) {
      std::cerr << "train: " << f << " has no linearity column; computing it\n";
      cloud = featurized(std::move(cloud), rc.radius_m);
    }
    for (auto& c : prepare_training_chunks(cloud, rc.max_point_num)) chunks.push_back(std::move(c));
  }
  rc.model.seed = rc.seed;
  rc.train.seed = rc.seed;
  rc.model.validate();

  const auto t0 = Clock::now();
  const auto result = train(init_params(rc.model, rc.seed), rc.model, chunks, rc.train);
  const double dt = seconds_since(t0);
  save_checkpoint({rc.model, result.params}, a.checkpoint);

  std::cerr << "train: " << files.size() << " file(s), " << chunks.size() << " chunk(s), "
            << rc.train.epochs << " epochs in " << dt << " s\n";
  if (!result.epoch_losses.empty()) {
    std::cerr << "train: loss " << result.epoch_losses.front() << " -> "
              << result.epoch_losses.back() << "\n";
  }
  if (!a.report.empty()) {
    std::ostringstream os;
    os.precision(17);
    os << "epochs=" << result.epoch_losses.size() << '\n' << "train_seconds=" << dt << '\n';
    for (std::size_t e = 0; e < result.epoch_losses.size(); ++e) {
      os << "loss_epoch_" << e << '=' << result.epoch_losses[e] << '\n';
    }
    write_text_file(a.report, os.str());
  }
}

struct PredictArgs {
  std::string checkpoint, in, out, report;
  ConfigArgs cfg;
};

void run_predict(const PredictArgs& a) {
  const RunConfig rc = a.cfg.resolve();
  const Checkpoint ck = load_checkpoint(a.checkpoint);
  LabeledCloud cloud = load_xyz(a.in).without_labels();
  // Timing covers the whole pipeline, including the linearity prior when the
  // input does not carry it yet.
  const auto t0 = Clock::now();
  if (!cloud.has_linearity()) cloud = featurized(std::move(cloud), rc.radius_m);
  auto labels = predict(ck.params, ck.config, cloud, rc.max_point_num);
  const TimingRecord timing = make_timing(cloud.size(), seconds_since(t0));
  save_xyz(std::move(cloud).with_labels(std::move(labels)), a.out);

  std::cerr << "predict: " << timing.total_points << " points in " << timing.wall_seconds
            << " s, TPMP " << timing.tpmp << " s\n";
  if (!a.report.empty()) {
    std::ostringstream os;
    write_key_values(os, timing);
    write_text_file(a.report, os.str());
  }
}

struct EvaluateArgs {
  std::string pred, truth, report, json, name;
};

void run_evaluate(const EvaluateArgs& a) {
  const MetricsReport r = evaluate(load_xyz(a.pred), load_xyz(a.truth));
  std::ostringstream os;
  write_key_values(os, r);
  std::cerr << os.str();
  if (!a.report.empty()) write_text_file(a.report, os.str());
  if (!a.json.empty()) {
    const std::string name = a.name.empty() ? fs::path(a.truth).stem().string() : a.name;
    write_text_file(a.json, to_json(r, name) + "\n");
  }
}

struct BenchArgs {
  std::size_t n = 100000, k = 2048, repeats = 5;
  std::string report;
  ConfigArgs cfg;
};

void run_bench(const BenchArgs& a) {
  const RunConfig rc = a.cfg.resolve();
  std::ostringstream os;
  write_report(os, benchmark_sampling(a.n, a.k, a.repeats, rc.seed));
  std::cerr << os.str();
  if (!a.report.empty()) write_text_file(a.report, os.str());
}

struct ColorizeArgs {
  std::string in, out;
  bool binary = false;
};

void run_colorize(const ColorizeArgs& a) {
  const LabeledCloud cloud = load_xyz(a.in);
  export_colored_ply(cloud, cloud.labels(), a.out,
                     a.binary ? PlyEncoding::binary_little_endian : PlyEncoding::ascii);
  std::cerr << "colorize: " << cloud.size() << " points\n";
}

struct SynthArgs {
  std::string out;
  SynthTreeSpec spec;
};

void run_synth(const SynthArgs& a) {
  SynthTreeCounts n;
  const LabeledCloud tree = generate_tree(a.spec, &n);
  save_xyz(tree, a.out);
  std::cerr << "synth: " << tree.size() << " points (trunk " << n.trunk << ", branch " << n.branch
            << ", leaf " << n.leaf << ")\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Wood-leaf classification for tree point clouds"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Show help for every subcommand");

  // Flag sets shared by several subcommands.
  auto add_radius = [](CLI::App* s, ConfigArgs& c) {
    c.overrides.add(s, "--radius", "radius", "linearity neighborhood radius in metres (default 0.15)");
  };
  auto add_max_points = [](CLI::App* s, ConfigArgs& c) {
    c.overrides.add(s, "--max-points", "max_points", "maximum points per chunk (default 100000)");
  };
  auto add_seed = [](CLI::App* s, ConfigArgs& c) {
    c.overrides.add(s, "--seed", "seed", "random seed (default 1)");
  };
  auto add_sampling = [](CLI::App* s, ConfigArgs& c) {
    c.overrides.add(s, "--sampling", "sampling", "centroid sampling: random or fps");
    c.overrides.option("sampling")->check(CLI::IsMember({"random", "fps"}));
  };

  FeaturizeArgs feat;
  auto* s_feat = app.add_subcommand("featurize", "Compute per-point linearity");
  s_feat->add_option("--in", feat.in, "input XYZ")->required()->check(CLI::ExistingFile);
  s_feat->add_option("--out", feat.out, "output XYZ with a linearity column")->required();
  add_config_flags(s_feat, feat.cfg);
  add_radius(s_feat, feat.cfg);
  s_feat->callback([&] { run_featurize(feat); });

  SplitArgs spl;
  auto* s_split = app.add_subcommand("split", "Split a cloud into balanced chunks");
  s_split->add_option("--in", spl.in, "input XYZ")->required()->check(CLI::ExistingFile);
  s_split->add_option("--out-dir", spl.out_dir, "directory for chunk files")->required();
  s_split->add_option("--stem", spl.stem, "chunk file stem (default: input stem)");
  add_config_flags(s_split, spl.cfg);
  add_max_points(s_split, spl.cfg);
  s_split->callback([&] { run_split(spl); });

  SampleArgs smp;
  auto* s_sample = app.add_subcommand("sample", "Select centroid indices");
  s_sample->add_option("--in", smp.in, "input XYZ")->required()->check(CLI::ExistingFile);
  s_sample->add_option("--out", smp.out, "output index file, one per line")->required();
  s_sample->add_option("--k", smp.k, "number of centroids")->capture_default_str();
  s_sample->add_option("--start", smp.start, "FPS start index")->capture_default_str();
  add_config_flags(s_sample, smp.cfg);
  add_sampling(s_sample, smp.cfg);
  add_seed(s_sample, smp.cfg);
  s_sample->callback([&] { run_sample(smp); });

  TrainArgs tr;
  auto* s_train = app.add_subcommand("train", "Train a model on labeled clouds");
  s_train->add_option("inputs", tr.inputs, "labeled XYZ files")->check(CLI::ExistingFile);
  s_train->add_option("--list", tr.list, "file listing training XYZ paths")->check(CLI::ExistingFile);
  s_train->add_option("--checkpoint", tr.checkpoint, "output checkpoint")->required();
  s_train->add_option("--report", tr.report, "per-epoch loss report (key=value)");
  add_config_flags(s_train, tr.cfg);
  add_radius(s_train, tr.cfg);
  add_max_points(s_train, tr.cfg);
  add_sampling(s_train, tr.cfg);
  add_seed(s_train, tr.cfg);
  tr.cfg.overrides.add(s_train, "--lr", "lr", "learning rate (default 0.001)");
  tr.cfg.overrides.add(s_train, "--epochs", "epochs", "epochs (default 60)");
  tr.cfg.overrides.add(s_train, "--decay", "decay", "learning-rate decay factor (default 0.5)");
  tr.cfg.overrides.add(s_train, "--decay-step", "decay_step", "epochs between decays (default 20)");
  tr.cfg.overrides.add(s_train, "--batch", "batch", "blocks per step (default 1)");
  tr.cfg.overrides.add(s_train, "--use-linearity", "use_linearity", "feed the linearity channel (true/false)");
  s_train->callback([&] { run_train(tr); });

  PredictArgs pr;
  auto* s_pred = app.add_subcommand("predict", "Label every point of a cloud");
  s_pred->add_option("--checkpoint", pr.checkpoint, "trained checkpoint")->required()->check(CLI::ExistingFile);
  s_pred->add_option("--in", pr.in, "input XYZ")->required()->check(CLI::ExistingFile);
  s_pred->add_option("--out", pr.out, "output labeled XYZ")->required();
  s_pred->add_option("--report", pr.report, "timing report (key=value)");
  add_config_flags(s_pred, pr.cfg);
  add_radius(s_pred, pr.cfg);
  add_max_points(s_pred, pr.cfg);
  s_pred->callback([&] { run_predict(pr); });

  EvaluateArgs ev;
  auto* s_eval = app.add_subcommand("evaluate", "Compare predicted and true labels");
  s_eval->add_option("--pred", ev.pred, "predicted labeled XYZ")->required()->check(CLI::ExistingFile);
  s_eval->add_option("--truth", ev.truth, "ground-truth labeled XYZ")->required()->check(CLI::ExistingFile);
  s_eval->add_option("--report", ev.report, "metrics report (key=value)");
  s_eval->add_option("--json", ev.json, "metrics report (JSON)");
  s_eval->add_option("--name", ev.name, "tree name in the JSON report (default: truth file stem)");
  s_eval->callback([&] { run_evaluate(ev); });

  BenchArgs be;
  auto* s_bench = app.add_subcommand("bench", "Time random vs farthest-point sampling");
  s_bench->add_option("--n", be.n, "points")->capture_default_str();
  s_bench->add_option("--k", be.k, "centroids")->capture_default_str();
  s_bench->add_option("--repeats", be.repeats, "repeats (at least 3)")->capture_default_str();
  s_bench->add_option("--report", be.report, "benchmark report (key=value)");
  add_config_flags(s_bench, be.cfg);
  add_seed(s_bench, be.cfg);
  s_bench->callback([&] { run_bench(be); });

  ColorizeArgs co;
  auto* s_col = app.add_subcommand("colorize", "Export a labeled cloud as colored PLY");
  s_col->add_option("--in", co.in, "labeled XYZ")->required()->check(CLI::ExistingFile);
  s_col->add_option("--out", co.out, "output PLY")->required();
  s_col->add_flag("--binary", co.binary, "binary little-endian PLY instead of ASCII");
  s_col->callback([&] { run_colorize(co); });

  SynthArgs sy;
  auto* s_syn = app.add_subcommand("synth", "Generate a labeled synthetic tree");
  s_syn->add_option("--out", sy.out, "output labeled XYZ")->required();
  s_syn->add_option("--seed", sy.spec.seed, "random seed")->capture_default_str();
  s_syn->add_option("--pitch", sy.spec.surface_sample_pitch_m, "surface sample pitch (m)")->capture_default_str();
  s_syn->add_option("--branches", sy.spec.branch_count, "branch count")->capture_default_str();
  s_syn->add_option("--leaf-clusters", sy.spec.leaf_cluster_count, "leaf cluster count")->capture_default_str();
  s_syn->add_option("--leaf-points", sy.spec.leaf_points_per_cluster, "points per leaf cluster")->capture_default_str();
  s_syn->callback([&] { run_synth(sy); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::cerr << "leafwood: error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
