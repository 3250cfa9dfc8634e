#include "leafwood/network.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>

#include <nlohmann/json.hpp>

#include "leafwood/atomic_file.hpp"
#include "leafwood/errors.hpp"
#include "leafwood/parallel.hpp"
#include "leafwood/spatial_index.hpp"
#include "leafwood/splitter.hpp"

namespace leafwood {

namespace {

std::uint64_t mix(std::uint64_t x) {
  // splitmix64 finalizer
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t mix(std::uint64_t a, std::uint64_t b) { return mix(mix(a) ^ b); }
std::uint64_t mix(std::uint64_t a, std::uint64_t b, std::uint64_t c) { return mix(mix(a, b), c); }

std::size_t level_width(const LevelConfig& level) {
  std::size_t w = 0;
  for (const auto& s : level.scales) w += s.widths.back();
  return w;
}

struct LayerShape {
  std::string name;
  std::size_t in = 0;
  std::size_t out = 0;
};

std::vector<LayerShape> layer_shapes(const ModelConfig& c) {
  std::vector<LayerShape> shapes;
  auto add_mlp = [&](const std::string& prefix, std::size_t in,
                     const std::vector<std::size_t>& widths) {
    for (std::size_t l = 0; l < widths.size(); ++l) {
      shapes.push_back({prefix + ".l" + std::to_string(l), in, widths[l]});
      in = widths[l];
    }
  };
  for (std::size_t s = 0; s < c.level1.scales.size(); ++s) {
    add_mlp("sa1.s" + std::to_string(s), 3 + 1, c.level1.scales[s].widths);
  }
  const std::size_t c1 = level_width(c.level1);
  for (std::size_t s = 0; s < c.level2.scales.size(); ++s) {
    add_mlp("sa2.s" + std::to_string(s), 3 + c1, c.level2.scales[s].widths);
  }
  const std::size_t c2 = level_width(c.level2);
  add_mlp("fp2", c2 + c1, c.fp2_widths);
  add_mlp("fp1", c.fp2_widths.back() + ModelConfig::kInputChannels, c.fp1_widths);
  shapes.push_back({"head", c.fp1_widths.back(), c.num_classes});
  return shapes;
}

using ConstMap = Eigen::Map<const Matrix>;
using MutMap = Eigen::Map<Matrix>;

struct Dense {
  const Tensor* w;
  const Tensor* b;
  ConstMap weight() const { return {w->data.data(), static_cast<Eigen::Index>(w->rows), static_cast<Eigen::Index>(w->cols)}; }
  Eigen::Map<const Eigen::RowVectorXd> bias() const { return {b->data.data(), static_cast<Eigen::Index>(b->cols)}; }
};

struct DenseGrad {
  Tensor* w;
  Tensor* b;
  MutMap weight() const { return {w->data.data(), static_cast<Eigen::Index>(w->rows), static_cast<Eigen::Index>(w->cols)}; }
  Eigen::Map<Eigen::RowVectorXd> bias() const { return {b->data.data(), static_cast<Eigen::Index>(b->cols)}; }
};

/// Walks the tensors of a ModelParams in layout order.
template <class P, class D>
class Cursor {
 public:
  explicit Cursor(P& params) : params_(params) {}
  D next() {
    auto* w = &params_.tensors.at(pos_++);
    auto* b = &params_.tensors.at(pos_++);
    return D{w, b};
  }
  std::vector<D> take(std::size_t n) {
    std::vector<D> out;
    for (std::size_t i = 0; i < n; ++i) out.push_back(next());
    return out;
  }

 private:
  P& params_;
  std::size_t pos_ = 0;
};

// Cached state of one shared point-wise MLP (ReLU after every layer).
struct MlpCache {
  std::vector<Matrix> inputs;
  std::vector<Matrix> pre;
};

Matrix mlp_forward(const Matrix& x, const std::vector<Dense>& layers, MlpCache* cache) {
  Matrix a = x;
  for (const Dense& d : layers) {
    Matrix z = a * d.weight();
    z.rowwise() += d.bias();
    if (cache) {
      cache->inputs.push_back(std::move(a));
      cache->pre.push_back(z);
    }
    a = z.cwiseMax(0.0);
  }
  return a;
}

Matrix mlp_backward(Matrix grad, const std::vector<Dense>& layers,
                    const std::vector<DenseGrad>& grads, const MlpCache& cache) {
  for (std::size_t l = layers.size(); l-- > 0;) {
    grad = grad.cwiseProduct((cache.pre[l].array() > 0.0).cast<double>().matrix());
    grads[l].weight().noalias() += cache.inputs[l].transpose() * grad;
    grads[l].bias() += grad.colwise().sum();
    grad = (grad * layers[l].weight().transpose()).eval();
  }
  return grad;
}

struct ScaleCache {
  Groups groups;
  MlpCache mlp;
  std::vector<std::size_t> argmax;  // K x width, row index into the grouped matrix
  std::size_t width = 0;
};

struct LevelCache {
  std::vector<ScaleCache> scales;
};

// Set abstraction: group, transform every member, max-pool per group,
// concatenate scales.
Matrix level_forward(const LevelConfig& level, std::span<const Point3> points,
                     const Matrix& features, std::span<const std::size_t> centroids,
                     const std::vector<std::vector<Dense>>& mlps, LevelCache* cache) {
  const std::size_t k = centroids.size();
  Matrix out(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(level_width(level)));
  Eigen::Index offset = 0;
  const auto cf = features.cols();
  for (std::size_t s = 0; s < level.scales.size(); ++s) {
    const ScaleConfig& sc = level.scales[s];
    Groups groups = ball_group(centroids, points, sc.radius, sc.max_group);
    const std::size_t g = sc.max_group;
    Matrix x(static_cast<Eigen::Index>(k * g), 3 + cf);
    for (std::size_t c = 0; c < k; ++c) {
      const Point3& q = points[centroids[c]];
      for (std::size_t j = 0; j < g; ++j) {
        const std::size_t m = groups.member(c, j);
        const auto row = static_cast<Eigen::Index>(c * g + j);
        const Point3 rel = (points[m] - q) / sc.radius;
        x(row, 0) = rel.x;
        x(row, 1) = rel.y;
        x(row, 2) = rel.z;
        x.row(row).tail(cf) = features.row(static_cast<Eigen::Index>(m));
      }
    }
    MlpCache mc;
    const Matrix a = mlp_forward(x, mlps[s], cache ? &mc : nullptr);
    const auto w = a.cols();
    std::vector<std::size_t> arg(k * static_cast<std::size_t>(w));
    for (std::size_t c = 0; c < k; ++c) {
      for (Eigen::Index ch = 0; ch < w; ++ch) {
        std::size_t best = c * g;
        double best_v = a(static_cast<Eigen::Index>(best), ch);
        for (std::size_t j = 1; j < g; ++j) {
          const double v = a(static_cast<Eigen::Index>(c * g + j), ch);
          if (v > best_v) {
            best_v = v;
            best = c * g + j;
          }
        }
        out(static_cast<Eigen::Index>(c), offset + ch) = best_v;
        arg[c * static_cast<std::size_t>(w) + static_cast<std::size_t>(ch)] = best;
      }
    }
    if (cache) {
      cache->scales.push_back({std::move(groups), std::move(mc), std::move(arg),
                               static_cast<std::size_t>(w)});
    }
    offset += w;
  }
  return out;
}

// Returns the gradient w.r.t. `features` when `want_features` is set.
Matrix level_backward(const LevelConfig& level, const Matrix& grad_out, Eigen::Index feature_rows,
                      Eigen::Index feature_cols, const std::vector<std::vector<Dense>>& mlps,
                      const std::vector<std::vector<DenseGrad>>& grads, const LevelCache& cache,
                      bool want_features) {
  Matrix grad_features;
  if (want_features) grad_features = Matrix::Zero(feature_rows, feature_cols);
  Eigen::Index offset = 0;
  const auto k = grad_out.rows();
  for (std::size_t s = 0; s < level.scales.size(); ++s) {
    const ScaleCache& sc = cache.scales[s];
    const auto w = static_cast<Eigen::Index>(sc.width);
    const std::size_t g = sc.groups.max_group;
    Matrix grad_a = Matrix::Zero(k * static_cast<Eigen::Index>(g), w);
    for (Eigen::Index c = 0; c < k; ++c) {
      for (Eigen::Index ch = 0; ch < w; ++ch) {
        const std::size_t row = sc.argmax[static_cast<std::size_t>(c * w + ch)];
        grad_a(static_cast<Eigen::Index>(row), ch) += grad_out(c, offset + ch);
      }
    }
    const Matrix grad_x = mlp_backward(std::move(grad_a), mlps[s], grads[s], sc.mlp);
    if (want_features) {
      for (Eigen::Index r = 0; r < grad_x.rows(); ++r) {
        const std::size_t m = sc.groups.members[static_cast<std::size_t>(r)];
        grad_features.row(static_cast<Eigen::Index>(m)) += grad_x.row(r).tail(feature_cols);
      }
    }
    offset += w;
  }
  return grad_features;
}

Matrix interpolate(const Interpolation& interp, const Matrix& coarse, std::size_t fine_count) {
  Matrix out = Matrix::Zero(static_cast<Eigen::Index>(fine_count), coarse.cols());
  for (std::size_t i = 0; i < fine_count; ++i) {
    for (std::size_t j = 0; j < interp.used; ++j) {
      const std::size_t e = i * interp.used + j;
      out.row(static_cast<Eigen::Index>(i)) +=
          interp.weight[e] * coarse.row(static_cast<Eigen::Index>(interp.index[e]));
    }
  }
  return out;
}

void interpolate_backward(const Interpolation& interp, const Matrix& grad_fine,
                          Matrix& grad_coarse) {
  for (Eigen::Index i = 0; i < grad_fine.rows(); ++i) {
    for (std::size_t j = 0; j < interp.used; ++j) {
      const std::size_t e = static_cast<std::size_t>(i) * interp.used + j;
      grad_coarse.row(static_cast<Eigen::Index>(interp.index[e])) +=
          interp.weight[e] * grad_fine.row(i);
    }
  }
}

Matrix hcat(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows(), a.cols() + b.cols());
  out << a, b;
  return out;
}

template <class P, class D>
struct NetworkLayers {
  std::vector<std::vector<D>> sa1, sa2;
  std::vector<D> fp2, fp1;
  D head;
};

template <class D, class P>
NetworkLayers<P, D> bind_layers(P& params, const ModelConfig& c) {
  Cursor<P, D> cur(params);
  NetworkLayers<P, D> n;
  for (const auto& s : c.level1.scales) n.sa1.push_back(cur.take(s.widths.size()));
  for (const auto& s : c.level2.scales) n.sa2.push_back(cur.take(s.widths.size()));
  n.fp2 = cur.take(c.fp2_widths.size());
  n.fp1 = cur.take(c.fp1_widths.size());
  n.head = cur.next();
  return n;
}

struct ForwardCache {
  LevelCache sa1, sa2;
  Interpolation up2, up1;
  MlpCache fp2, fp1;
  Matrix fp1_out;
  std::size_t k1 = 0, k2 = 0;
};

void check_params(const ModelParams& params, const ModelConfig& config) {
  const auto shapes = layer_shapes(config);
  if (params.tensors.size() != 2 * shapes.size()) {
    throw ContractError("parameter tensor count does not match the model config");
  }
  for (std::size_t i = 0; i < shapes.size(); ++i) {
    const Tensor& w = params.tensors[2 * i];
    const Tensor& b = params.tensors[2 * i + 1];
    if (w.rows != shapes[i].in || w.cols != shapes[i].out || b.rows != 1 ||
        b.cols != shapes[i].out || w.data.size() != w.rows * w.cols ||
        b.data.size() != b.cols) {
      throw ContractError("parameter shapes do not match the model config at " + shapes[i].name);
    }
  }
}

Matrix input_features(const ModelConfig& config, const NetworkInput& input) {
  const auto n = static_cast<Eigen::Index>(input.points.size());
  Matrix f(n, 4);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Point3& p = input.points[static_cast<std::size_t>(i)];
    f(i, 0) = p.x;
    f(i, 1) = p.y;
    f(i, 2) = p.z;
    f(i, 3) = config.use_linearity ? input.linearity[static_cast<std::size_t>(i)] : 0.0;
  }
  return f;
}

void check_input(const ModelConfig& config, const NetworkInput& input,
                 const CentroidChoice& centroids) {
  const std::size_t n = input.points.size();
  if (n == 0) throw ContractError("network input is empty");
  if (input.linearity.size() != n) throw ContractError("linearity length differs from point count");
  if (n < config.level1.num_centroids) {
    throw ContractError("block of " + std::to_string(n) + " points is smaller than the " +
                        std::to_string(config.level1.num_centroids) +
                        " level-1 centroids; reduce num_centroids");
  }
  if (centroids.level1.empty() || centroids.level2.empty()) {
    throw ContractError("centroid choice is empty");
  }
  for (std::size_t i : centroids.level1) {
    if (i >= n) throw ContractError("level-1 centroid index out of range");
  }
  for (std::size_t i : centroids.level2) {
    if (i >= centroids.level1.size()) throw ContractError("level-2 centroid index out of range");
  }
}

Matrix run_forward(const NetworkLayers<const ModelParams, Dense>& net, const ModelConfig& config,
                   const NetworkInput& input, const CentroidChoice& cc, ForwardCache* cache) {
  const Matrix in = input_features(config, input);
  const std::size_t n = input.points.size();

  std::vector<Point3> p1;
  p1.reserve(cc.level1.size());
  for (std::size_t i : cc.level1) p1.push_back(input.points[i]);
  std::vector<Point3> p2;
  p2.reserve(cc.level2.size());
  for (std::size_t i : cc.level2) p2.push_back(p1[i]);

  const Matrix f1 = level_forward(config.level1, input.points, in.rightCols(1), cc.level1,
                                  net.sa1, cache ? &cache->sa1 : nullptr);
  const Matrix f2 = level_forward(config.level2, p1, f1, cc.level2, net.sa2,
                                  cache ? &cache->sa2 : nullptr);

  Interpolation up2 = three_nn_interpolation(p1, p2);
  const Matrix g1 = mlp_forward(hcat(interpolate(up2, f2, p1.size()), f1), net.fp2,
                                cache ? &cache->fp2 : nullptr);
  Interpolation up1 = three_nn_interpolation(input.points, p1);
  Matrix g0 = mlp_forward(hcat(interpolate(up1, g1, n), in), net.fp1,
                          cache ? &cache->fp1 : nullptr);

  Matrix scores = g0 * net.head.weight();
  scores.rowwise() += net.head.bias();
  if (cache) {
    cache->up2 = std::move(up2);
    cache->up1 = std::move(up1);
    cache->fp1_out = std::move(g0);
    cache->k1 = p1.size();
    cache->k2 = p2.size();
  }
  return scores;
}

double weight_of(std::span<const double> class_weights, ClassLabel y) {
  if (class_weights.empty()) return 1.0;
  return class_weights[static_cast<std::size_t>(y)];
}

void check_weights(std::span<const double> class_weights, std::size_t classes) {
  if (class_weights.empty()) return;
  if (class_weights.size() != classes) throw ContractError("need one class weight per class");
  for (double w : class_weights) {
    if (!(w > 0.0) || !std::isfinite(w)) throw ContractError("class weights must be positive");
  }
}

}  // namespace

// ---------------------------------------------------------------------------

ModelConfig ModelConfig::toy() {
  ModelConfig c;
  c.level1 = {256, {{0.1, 16, {16, 32}}, {0.2, 32, {16, 32}}}};
  c.level2 = {64, {{0.2, 16, {48}}, {0.4, 32, {48}}}};
  c.fp2_widths = {48};
  c.fp1_widths = {32};
  c.block_points = 2048;
  return c;
}

ModelConfig ModelConfig::micro() {
  ModelConfig c;
  c.level1 = {4, {{0.3, 4, {6, 8}}, {0.6, 5, {5}}}};
  c.level2 = {2, {{0.6, 3, {7}}, {1.2, 4, {6}}}};
  c.fp2_widths = {8};
  c.fp1_widths = {6, 5};
  c.block_points = 16;
  return c;
}

ModelConfig ModelConfig::fitted_to(std::size_t points) const {
  ModelConfig c = *this;
  c.level1.num_centroids = std::max<std::size_t>(1, std::min(c.level1.num_centroids, points));
  c.level2.num_centroids = std::min(c.level2.num_centroids, c.level1.num_centroids);
  return c;
}

void ModelConfig::validate() const {
  auto check_level = [](const LevelConfig& level, const char* name) {
    if (level.num_centroids == 0) throw ContractError(std::string(name) + ": zero centroids");
    if (level.scales.empty()) throw ContractError(std::string(name) + ": no grouping scales");
    double prev = 0.0;
    for (const auto& s : level.scales) {
      if (!(s.radius > prev)) {
        throw ContractError(std::string(name) + ": radii must be positive and ascending");
      }
      prev = s.radius;
      if (s.max_group == 0) throw ContractError(std::string(name) + ": zero group size");
      if (s.widths.empty()) throw ContractError(std::string(name) + ": scale has no layers");
      for (auto w : s.widths) {
        if (w == 0) throw ContractError(std::string(name) + ": zero layer width");
      }
    }
  };
  check_level(level1, "level1");
  check_level(level2, "level2");
  if (level2.num_centroids > level1.num_centroids) {
    throw ContractError("level2 cannot have more centroids than level1");
  }
  for (const auto* widths : {&fp2_widths, &fp1_widths}) {
    if (widths->empty()) throw ContractError("feature propagation needs at least one layer");
    for (auto w : *widths) {
      if (w == 0) throw ContractError("zero layer width");
    }
  }
  if (num_classes != 2) throw ContractError("exactly two classes (leaf, wood) are supported");
  if (block_points < level1.num_centroids) {
    throw ContractError("block_points must be at least the level-1 centroid count");
  }
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ContractError("learning rate must be positive");
  if (!(decay_rate > 0.0 && decay_rate <= 1.0)) throw ContractError("decay rate must be in (0, 1]");
  if (decay_step == 0) throw ContractError("decay step must be at least 1");
  if (batch == 0) throw ContractError("batch must be at least 1");
  check_weights(class_weights, 2);
}

namespace {

nlohmann::json level_json(const LevelConfig& l) {
  nlohmann::json scales = nlohmann::json::array();
  for (const auto& s : l.scales) {
    scales.push_back({{"radius", s.radius}, {"max_group", s.max_group}, {"widths", s.widths}});
  }
  return {{"num_centroids", l.num_centroids}, {"scales", scales}};
}

LevelConfig level_from(const nlohmann::json& j) {
  LevelConfig l;
  l.num_centroids = j.at("num_centroids").get<std::size_t>();
  for (const auto& s : j.at("scales")) {
    l.scales.push_back({s.at("radius").get<double>(), s.at("max_group").get<std::size_t>(),
                        s.at("widths").get<std::vector<std::size_t>>()});
  }
  return l;
}

}  // namespace

std::string to_json(const ModelConfig& c) {
  nlohmann::json j = {
      {"level1", level_json(c.level1)},
      {"level2", level_json(c.level2)},
      {"fp2_widths", c.fp2_widths},
      {"fp1_widths", c.fp1_widths},
      {"num_classes", c.num_classes},
      {"block_points", c.block_points},
      {"use_linearity", c.use_linearity},
      {"sampling", c.sampling == SamplingStrategy::fps ? "fps" : "random"},
      {"seed", c.seed},
  };
  return j.dump();
}

ModelConfig model_config_from_json(const std::string& text) {
  try {
    const auto j = nlohmann::json::parse(text);
    ModelConfig c;
    c.level1 = level_from(j.at("level1"));
    c.level2 = level_from(j.at("level2"));
    c.fp2_widths = j.at("fp2_widths").get<std::vector<std::size_t>>();
    c.fp1_widths = j.at("fp1_widths").get<std::vector<std::size_t>>();
    c.num_classes = j.at("num_classes").get<std::size_t>();
    c.block_points = j.at("block_points").get<std::size_t>();
    c.use_linearity = j.at("use_linearity").get<bool>();
    c.sampling = j.at("sampling").get<std::string>() == "fps" ? SamplingStrategy::fps
                                                              : SamplingStrategy::random;
    c.seed = j.at("seed").get<std::uint64_t>();
    c.validate();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bad model config: ") + e.what());
  }
}

std::size_t ModelParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& t : tensors) n += t.data.size();
  return n;
}

ModelParams zero_params(const ModelConfig& config) {
  config.validate();
  ModelParams p;
  for (const auto& s : layer_shapes(config)) {
    p.tensors.push_back({s.name + ".w", s.in, s.out, std::vector<double>(s.in * s.out, 0.0)});
    p.tensors.push_back({s.name + ".b", 1, s.out, std::vector<double>(s.out, 0.0)});
  }
  return p;
}

ModelParams init_params(const ModelConfig& config, std::uint64_t seed) {
  ModelParams p = zero_params(config);
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < p.tensors.size(); i += 2) {
    Tensor& w = p.tensors[i];
    const bool head = i + 2 == p.tensors.size();
    const double sd = std::sqrt((head ? 1.0 : 2.0) / static_cast<double>(w.rows));
    std::normal_distribution<double> dist(0.0, sd);
    for (double& v : w.data) v = dist(rng);
  }
  return p;
}

// ---------------------------------------------------------------------------

namespace {

constexpr char kMagic[8] = {'L', 'W', 'C', 'K', 'P', 'T', '\0', '\n'};

template <class T>
void put(std::ostream& out, const T& v) {
  static_assert(std::endian::native == std::endian::little);
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::istream& in, const std::string& what) {
  T v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof(T))) {
    throw FormatError("checkpoint truncated while reading " + what);
  }
  return v;
}

std::string get_string(std::istream& in, std::uint64_t len, const std::string& what) {
  if (len > (1u << 30)) throw FormatError("checkpoint " + what + " length is implausible");
  std::string s(len, '\0');
  if (!in.read(s.data(), static_cast<std::streamsize>(len))) {
    throw FormatError("checkpoint truncated while reading " + what);
  }
  return s;
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  check_params(ckpt.params, ckpt.config);
  const std::string config = to_json(ckpt.config);
  write_atomically(
      path,
      [&](std::ofstream& out) {
        out.write(kMagic, sizeof(kMagic));
        put<std::uint32_t>(out, kCheckpointVersion);
        put<std::uint64_t>(out, config.size());
        out.write(config.data(), static_cast<std::streamsize>(config.size()));
        put<std::uint64_t>(out, ckpt.params.tensors.size());
        for (const Tensor& t : ckpt.params.tensors) {
          put<std::uint32_t>(out, static_cast<std::uint32_t>(t.name.size()));
          out.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
          put<std::uint64_t>(out, t.rows);
          put<std::uint64_t>(out, t.cols);
          out.write(reinterpret_cast<const char*>(t.data.data()),
                    static_cast<std::streamsize>(t.data.size() * sizeof(double)));
        }
      },
      std::ios::binary);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  char magic[8];
  if (!in.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(magic)) != 0) {
    throw FormatError(path.string() + " is not a leafwood checkpoint");
  }
  const auto version = get<std::uint32_t>(in, "version");
  if (version != kCheckpointVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version));
  }
  Checkpoint ckpt;
  ckpt.config = model_config_from_json(get_string(in, get<std::uint64_t>(in, "config length"), "config"));
  const auto count = get<std::uint64_t>(in, "tensor count");
  if (count > (1u << 20)) throw FormatError("checkpoint tensor count is implausible");
  for (std::uint64_t i = 0; i < count; ++i) {
    Tensor t;
    t.name = get_string(in, get<std::uint32_t>(in, "tensor name length"), "tensor name");
    t.rows = get<std::uint64_t>(in, "tensor rows");
    t.cols = get<std::uint64_t>(in, "tensor cols");
    if (t.rows * t.cols > (1u << 28)) throw FormatError("tensor " + t.name + " is implausibly large");
    t.data.resize(t.rows * t.cols);
    if (!in.read(reinterpret_cast<char*>(t.data.data()),
                 static_cast<std::streamsize>(t.data.size() * sizeof(double)))) {
      throw FormatError("checkpoint truncated in tensor " + t.name);
    }
    ckpt.params.tensors.push_back(std::move(t));
  }
  check_params(ckpt.params, ckpt.config);
  return ckpt;
}

// ---------------------------------------------------------------------------

Groups ball_group(std::span<const std::size_t> centroid_indices, std::span<const Point3> points,
                  double radius, std::size_t max_group) {
  if (points.empty()) throw ContractError("cannot group an empty cloud");
  if (!(radius > 0.0)) throw ContractError("group radius must be positive");
  if (max_group == 0) throw ContractError("group size must be at least 1");
  Groups groups;
  groups.max_group = max_group;
  groups.members.resize(centroid_indices.size() * max_group);
  groups.in_radius.resize(centroid_indices.size());
  const SpatialIndex index(points);
  std::vector<std::size_t> found;
  std::vector<std::pair<double, std::size_t>> ranked;
  for (std::size_t c = 0; c < centroid_indices.size(); ++c) {
    if (centroid_indices[c] >= points.size()) throw ContractError("centroid index out of range");
    const Point3& q = points[centroid_indices[c]];
    index.radius_search(q, radius, found);
    ranked.clear();
    for (std::size_t i : found) ranked.emplace_back(squared_distance(points[i], q), i);
    std::sort(ranked.begin(), ranked.end());
    const std::size_t m = ranked.size();  // >= 1: the centroid itself
    groups.in_radius[c] = m;
    std::size_t* slot = &groups.members[c * max_group];
    if (m <= max_group) {
      for (std::size_t j = 0; j < max_group; ++j) slot[j] = ranked[j < m ? j : 0].second;
    } else {
      for (std::size_t j = 0; j < max_group; ++j) slot[j] = ranked[j * m / max_group].second;
    }
  }
  return groups;
}

std::vector<GroupedPoint> grouped_points(const Groups& groups,
                                         std::span<const std::size_t> centroid_indices,
                                         std::span<const Point3> points,
                                         std::span<const double> linearity) {
  if (linearity.size() != points.size()) throw ContractError("linearity length differs from point count");
  std::vector<GroupedPoint> out;
  out.reserve(groups.members.size());
  for (std::size_t c = 0; c < centroid_indices.size(); ++c) {
    for (std::size_t j = 0; j < groups.max_group; ++j) {
      const std::size_t m = groups.member(c, j);
      out.push_back({points[m] - points[centroid_indices[c]], linearity[m]});
    }
  }
  return out;
}

Interpolation three_nn_interpolation(std::span<const Point3> fine, std::span<const Point3> coarse) {
  if (coarse.empty()) throw ContractError("interpolation needs at least one coarse point");
  Interpolation it;
  it.used = std::min(Interpolation::kNeighbors, coarse.size());
  it.index.resize(fine.size() * it.used);
  it.weight.resize(fine.size() * it.used);
  std::array<std::pair<double, std::size_t>, Interpolation::kNeighbors> best;
  for (std::size_t i = 0; i < fine.size(); ++i) {
    best.fill({std::numeric_limits<double>::infinity(), 0});
    for (std::size_t j = 0; j < coarse.size(); ++j) {
      const std::pair<double, std::size_t> cand{squared_distance(fine[i], coarse[j]), j};
      if (cand < best[it.used - 1]) {
        std::size_t pos = it.used - 1;
        while (pos > 0 && cand < best[pos - 1]) {
          best[pos] = best[pos - 1];
          --pos;
        }
        best[pos] = cand;
      }
    }
    double total = 0.0;
    for (std::size_t j = 0; j < it.used; ++j) {
      const double w = 1.0 / (std::sqrt(best[j].first) + 1e-8);
      it.index[i * it.used + j] = best[j].second;
      it.weight[i * it.used + j] = w;
      total += w;
    }
    for (std::size_t j = 0; j < it.used; ++j) it.weight[i * it.used + j] /= total;
  }
  return it;
}

CentroidChoice choose_centroids(const ModelConfig& config, std::span<const Point3> points,
                                std::uint64_t seed) {
  const std::size_t k1 = config.level1.num_centroids;
  const std::size_t k2 = config.level2.num_centroids;
  CentroidChoice cc;
  if (config.sampling == SamplingStrategy::fps) {
    cc.level1 = farthest_point_sampling(points, k1, 0).indices;
    std::vector<Point3> p1;
    for (std::size_t i : cc.level1) p1.push_back(points[i]);
    cc.level2 = farthest_point_sampling(p1, k2, 0).indices;
  } else {
    cc.level1 = random_centroids(points.size(), k1, mix(seed, 1)).indices;
    cc.level2 = random_centroids(k1, k2, mix(seed, 2)).indices;
  }
  return cc;
}

Matrix forward(const ModelParams& params, const ModelConfig& config, const NetworkInput& input,
               const CentroidChoice& centroids) {
  check_params(params, config);
  check_input(config, input, centroids);
  const auto net = bind_layers<Dense>(params, config);
  return run_forward(net, config, input, centroids, nullptr);
}

Matrix forward(const ModelParams& params, const ModelConfig& config, const NetworkInput& input) {
  if (input.points.size() < config.level1.num_centroids) {
    throw ContractError("block of " + std::to_string(input.points.size()) +
                        " points is smaller than the " +
                        std::to_string(config.level1.num_centroids) +
                        " level-1 centroids; reduce num_centroids");
  }
  return forward(params, config, input, choose_centroids(config, input.points, config.seed));
}

double loss(const Matrix& scores, std::span<const ClassLabel> labels,
            std::span<const double> class_weights) {
  if (static_cast<std::size_t>(scores.rows()) != labels.size()) {
    throw ContractError("score rows and label count differ");
  }
  if (labels.empty()) throw ContractError("loss over zero points");
  check_weights(class_weights, static_cast<std::size_t>(scores.cols()));
  double num = 0.0;
  double den = 0.0;
  for (Eigen::Index i = 0; i < scores.rows(); ++i) {
    const double mx = scores.row(i).maxCoeff();
    const double lse = mx + std::log((scores.row(i).array() - mx).exp().sum());
    const ClassLabel y = labels[static_cast<std::size_t>(i)];
    const double w = weight_of(class_weights, y);
    num += w * (lse - scores(i, static_cast<Eigen::Index>(y)));
    den += w;
  }
  return num / den;
}

LossAndGradient backward(const ModelParams& params, const ModelConfig& config,
                         const NetworkInput& input, const CentroidChoice& centroids,
                         std::span<const ClassLabel> labels,
                         std::span<const double> class_weights) {
  check_params(params, config);
  check_input(config, input, centroids);
  if (labels.size() != input.points.size()) throw ContractError("label count differs from point count");
  check_weights(class_weights, config.num_classes);

  const auto net = bind_layers<Dense>(params, config);
  ForwardCache cache;
  const Matrix scores = run_forward(net, config, input, centroids, &cache);

  LossAndGradient out;
  out.loss = loss(scores, labels, class_weights);
  out.gradient = zero_params(config);
  auto grads = bind_layers<DenseGrad>(out.gradient, config);

  // d loss / d scores = w_y (softmax - onehot) / sum w
  double den = 0.0;
  for (ClassLabel y : labels) den += weight_of(class_weights, y);
  Matrix g_scores(scores.rows(), scores.cols());
  for (Eigen::Index i = 0; i < scores.rows(); ++i) {
    const double mx = scores.row(i).maxCoeff();
    Eigen::RowVectorXd p = (scores.row(i).array() - mx).exp();
    p /= p.sum();
    const ClassLabel y = labels[static_cast<std::size_t>(i)];
    p(static_cast<Eigen::Index>(y)) -= 1.0;
    g_scores.row(i) = p * (weight_of(class_weights, y) / den);
  }

  grads.head.weight().noalias() += cache.fp1_out.transpose() * g_scores;
  grads.head.bias() += g_scores.colwise().sum();
  const Matrix g_fp1_out = g_scores * net.head.weight().transpose();

  // fp1: [interp(g1), input] -> MLP
  const Matrix g_fp1_in = mlp_backward(g_fp1_out, net.fp1, grads.fp1, cache.fp1);
  const auto d2 = static_cast<Eigen::Index>(config.fp2_widths.back());
  Matrix g_g1 = Matrix::Zero(static_cast<Eigen::Index>(cache.k1), d2);
  interpolate_backward(cache.up1, g_fp1_in.leftCols(d2), g_g1);

  // fp2: [interp(f2), f1] -> MLP
  const Matrix g_fp2_in = mlp_backward(g_g1, net.fp2, grads.fp2, cache.fp2);
  const auto c2 = static_cast<Eigen::Index>(level_width(config.level2));
  const auto c1 = static_cast<Eigen::Index>(level_width(config.level1));
  Matrix g_f2 = Matrix::Zero(static_cast<Eigen::Index>(cache.k2), c2);
  interpolate_backward(cache.up2, g_fp2_in.leftCols(c2), g_f2);
  Matrix g_f1 = g_fp2_in.rightCols(c1);

  g_f1 += level_backward(config.level2, g_f2, static_cast<Eigen::Index>(cache.k1), c1, net.sa2,
                         grads.sa2, cache.sa2, true);
  level_backward(config.level1, g_f1, static_cast<Eigen::Index>(input.points.size()), 1, net.sa1,
                 grads.sa1, cache.sa1, false);
  return out;
}

std::vector<ClassLabel> argmax_labels(const Matrix& scores) {
  std::vector<ClassLabel> out(static_cast<std::size_t>(scores.rows()));
  for (Eigen::Index i = 0; i < scores.rows(); ++i) {
    out[static_cast<std::size_t>(i)] =
        scores(i, 1) > scores(i, 0) ? ClassLabel::wood : ClassLabel::leaf;
  }
  return out;
}

// ---------------------------------------------------------------------------

std::vector<std::vector<std::size_t>> random_blocks(std::size_t n, std::size_t block_points,
                                                    std::uint64_t seed) {
  if (n == 0) return {};
  if (block_points == 0) throw ContractError("block size must be at least 1");
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(perm.begin(), perm.end(), rng);
  const std::size_t count = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::llround(static_cast<double>(n) / static_cast<double>(block_points))));
  std::vector<std::vector<std::size_t>> blocks(count);
  const std::size_t base = n / count;
  const std::size_t extra = n % count;
  std::size_t pos = 0;
  for (std::size_t b = 0; b < count; ++b) {
    const std::size_t len = base + (b < extra ? 1 : 0);
    blocks[b].assign(perm.begin() + static_cast<std::ptrdiff_t>(pos),
                     perm.begin() + static_cast<std::ptrdiff_t>(pos + len));
    pos += len;
  }
  return blocks;
}

std::vector<LabeledCloud> prepare_training_chunks(const LabeledCloud& cloud,
                                                  std::size_t max_point_num) {
  if (!cloud.has_labels()) throw ContractError("training cloud has no labels");
  if (!cloud.has_linearity()) {
    throw ContractError("training cloud has no linearity; run the featurize step first");
  }
  std::vector<LabeledCloud> out;
  for (const Chunk& ch : split(cloud, plan_split(cloud.size(), max_point_num))) {
    out.push_back(normalize_chunk(ch.cloud).first);
  }
  return out;
}

namespace {

struct Block {
  std::vector<Point3> points;
  std::vector<double> linearity;
  std::vector<ClassLabel> labels;
};

Block gather(const LabeledCloud& chunk, std::span<const std::size_t> idx) {
  Block b;
  b.points.reserve(idx.size());
  b.linearity.reserve(idx.size());
  const auto pts = chunk.points();
  const auto lin = chunk.linearity();
  for (std::size_t i : idx) {
    b.points.push_back(pts[i]);
    b.linearity.push_back(lin[i]);
    if (chunk.has_labels()) b.labels.push_back(chunk.labels()[i]);
  }
  return b;
}

class AdamState {
 public:
  explicit AdamState(const ModelParams& p) {
    for (const auto& t : p.tensors) {
      m_.emplace_back(t.data.size(), 0.0);
      v_.emplace_back(t.data.size(), 0.0);
    }
  }

  void step(ModelParams& p, const ModelParams& g, double lr) {
    constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    ++t_;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
    for (std::size_t k = 0; k < p.tensors.size(); ++k) {
      auto& w = p.tensors[k].data;
      const auto& gk = g.tensors[k].data;
      for (std::size_t i = 0; i < w.size(); ++i) {
        m_[k][i] = b1 * m_[k][i] + (1.0 - b1) * gk[i];
        v_[k][i] = b2 * v_[k][i] + (1.0 - b2) * gk[i] * gk[i];
        w[i] -= lr * (m_[k][i] / c1) / (std::sqrt(v_[k][i] / c2) + eps);
      }
    }
  }

 private:
  std::vector<std::vector<double>> m_, v_;
  std::uint64_t t_ = 0;
};

}  // namespace

TrainResult train(ModelParams params, const ModelConfig& config,
                  std::span<const LabeledCloud> chunks, const TrainConfig& tc) {
  config.validate();
  tc.validate();
  check_params(params, config);
  if (chunks.empty()) throw ContractError("training needs at least one labeled chunk");
  for (const auto& ch : chunks) {
    if (!ch.has_labels() || !ch.has_linearity() || ch.empty()) {
      throw ContractError("every training chunk needs points, labels and linearity");
    }
  }

  TrainResult result;
  AdamState adam(params);
  double lr = tc.learning_rate;
  for (std::size_t epoch = 0; epoch < tc.epochs; ++epoch) {
    if (epoch > 0 && epoch % tc.decay_step == 0) lr *= tc.decay_rate;

    struct Sample {
      std::size_t chunk;
      std::vector<std::size_t> indices;
    };
    std::vector<Sample> samples;
    for (std::size_t c = 0; c < chunks.size(); ++c) {
      for (auto& b : random_blocks(chunks[c].size(), config.block_points, mix(tc.seed, epoch, c))) {
        samples.push_back({c, std::move(b)});
      }
    }
    std::mt19937_64 order_rng(mix(tc.seed, epoch));
    std::shuffle(samples.begin(), samples.end(), order_rng);

    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < samples.size(); start += tc.batch) {
      const std::size_t stop = std::min(samples.size(), start + tc.batch);
      ModelParams grad;
      for (std::size_t s = start; s < stop; ++s) {
        const Block b = gather(chunks[samples[s].chunk], samples[s].indices);
        const ModelConfig fitted = config.fitted_to(b.points.size());
        const auto cc = choose_centroids(fitted, b.points, mix(tc.seed, epoch, s + 0x1000));
        auto lg = backward(params, fitted, {b.points, b.linearity}, cc, b.labels, tc.class_weights);
        if (!std::isfinite(lg.loss)) {
          throw NumericError("non-finite loss at epoch " + std::to_string(epoch) + ", block " +
                             std::to_string(s));
        }
        epoch_loss += lg.loss;
        if (grad.tensors.empty()) {
          grad = std::move(lg.gradient);
        } else {
          for (std::size_t k = 0; k < grad.tensors.size(); ++k) {
            auto& dst = grad.tensors[k].data;
            const auto& src = lg.gradient.tensors[k].data;
            for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
          }
        }
      }
      const double inv = 1.0 / static_cast<double>(stop - start);
      for (auto& t : grad.tensors) {
        for (double& v : t.data) v *= inv;
      }
      if (tc.optimizer == Optimizer::adam) {
        adam.step(params, grad, lr);
      } else {
        for (std::size_t k = 0; k < params.tensors.size(); ++k) {
          auto& w = params.tensors[k].data;
          const auto& g = grad.tensors[k].data;
          for (std::size_t i = 0; i < w.size(); ++i) w[i] -= lr * g[i];
        }
      }
    }
    result.epoch_losses.push_back(epoch_loss / static_cast<double>(samples.size()));
  }
  result.params = std::move(params);
  return result;
}

std::vector<ClassLabel> predict(const ModelParams& params, const ModelConfig& config,
                                const LabeledCloud& cloud, std::size_t max_point_num) {
  if (!cloud.has_linearity()) {
    throw ContractError("prediction needs per-point linearity; run the featurize step first");
  }
  if (cloud.empty()) throw ContractError("cannot predict on an empty cloud");
  config.validate();
  check_params(params, config);
  const auto unlabeled = LabeledCloud(std::vector<Point3>(cloud.points().begin(), cloud.points().end()),
                                      std::nullopt,
                                      std::vector<double>(cloud.linearity().begin(), cloud.linearity().end()));
  std::vector<Chunk> chunks = split(unlabeled, plan_split(cloud.size(), max_point_num));

  parallel_for(chunks.size(), [&](std::size_t begin, std::size_t end) {
    for (std::size_t c = begin; c < end; ++c) {
      auto [normalized, transform] = normalize_chunk(chunks[c].cloud);
      std::vector<ClassLabel> labels(normalized.size(), ClassLabel::leaf);
      const auto blocks = random_blocks(normalized.size(), config.block_points, mix(config.seed, c));
      for (std::size_t b = 0; b < blocks.size(); ++b) {
        const Block blk = gather(normalized, blocks[b]);
        const ModelConfig fitted = config.fitted_to(blk.points.size());
        const auto cc = choose_centroids(fitted, blk.points, mix(config.seed, c, b));
        const auto pred = argmax_labels(forward(params, fitted, {blk.points, blk.linearity}, cc));
        for (std::size_t j = 0; j < blocks[b].size(); ++j) labels[blocks[b][j]] = pred[j];
      }
      chunks[c].cloud = denormalize(std::move(normalized).with_labels(std::move(labels)), transform);
    }
  });
  const LabeledCloud merged = integrate(chunks, cloud.size());
  return {merged.labels().begin(), merged.labels().end()};
}

}  // namespace leafwood
