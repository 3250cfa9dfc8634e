#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

namespace leafwood {

struct Point3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  bool is_finite() const noexcept {
    return std::isfinite(x) && std::isfinite(y) && std::isfinite(z);
  }

  Point3& operator+=(const Point3& o) noexcept {
    x += o.x;
    y += o.y;
    z += o.z;
    return *this;
  }
  Point3& operator-=(const Point3& o) noexcept {
    x -= o.x;
    y -= o.y;
    z -= o.z;
    return *this;
  }

  friend Point3 operator+(Point3 a, const Point3& b) noexcept { return a += b; }
  friend Point3 operator-(Point3 a, const Point3& b) noexcept { return a -= b; }
  friend Point3 operator*(const Point3& a, double s) noexcept {
    return {a.x * s, a.y * s, a.z * s};
  }
  friend Point3 operator/(const Point3& a, double s) noexcept {
    return {a.x / s, a.y / s, a.z / s};
  }
  friend bool operator==(const Point3&, const Point3&) = default;
};

inline double squared_distance(const Point3& a, const Point3& b) noexcept {
  const double dx = a.x - b.x;
  const double dy = a.y - b.y;
  const double dz = a.z - b.z;
  return dx * dx + dy * dy + dz * dz;
}

inline double distance(const Point3& a, const Point3& b) noexcept {
  return std::sqrt(squared_distance(a, b));
}

inline double norm(const Point3& p) noexcept {
  return std::sqrt(p.x * p.x + p.y * p.y + p.z * p.z);
}

/// Binary class. Wood is the positive class for all wood-centric metrics.
enum class ClassLabel : std::uint8_t { leaf = 0, wood = 1 };

/// Ordered points with optional per-point labels and linearity.
///
/// Point order is the file order and is preserved by every pipeline stage.
/// When present, `labels()` and `linearity()` have exactly `size()` entries
/// and every linearity value lies in [0, 1].
class LabeledCloud {
 public:
  LabeledCloud() = default;
  explicit LabeledCloud(std::vector<Point3> points,
                        std::optional<std::vector<ClassLabel>> labels = {},
                        std::optional<std::vector<double>> linearity = {});

  std::size_t size() const noexcept { return points_.size(); }
  bool empty() const noexcept { return points_.empty(); }

  std::span<const Point3> points() const noexcept { return points_; }
  const Point3& operator[](std::size_t i) const { return points_[i]; }

  bool has_labels() const noexcept { return labels_.has_value(); }
  bool has_linearity() const noexcept { return linearity_.has_value(); }

  /// Throws ContractError when absent.
  std::span<const ClassLabel> labels() const;
  std::span<const double> linearity() const;

  LabeledCloud with_labels(std::vector<ClassLabel> labels) const&;
  LabeledCloud with_labels(std::vector<ClassLabel> labels) &&;
  LabeledCloud with_linearity(std::vector<double> linearity) const&;
  LabeledCloud with_linearity(std::vector<double> linearity) &&;
  LabeledCloud without_labels() const;

  /// Sub-cloud made of `indices`, in that order, carrying labels/linearity.
  LabeledCloud subset(std::span<const std::size_t> indices) const;

  friend bool operator==(const LabeledCloud&, const LabeledCloud&) = default;

 private:
  void validate() const;

  std::vector<Point3> points_;
  std::optional<std::vector<ClassLabel>> labels_;
  std::optional<std::vector<double>> linearity_;
};

/// Reads whitespace-separated `x y z [linearity] [label]` text.
///
/// Lines starting with `#` are comments. A `#fields x y z linearity` header
/// declares a 4-column file as carrying linearity; without it the 4th column
/// is the label. 5-column lines are always `x y z linearity label`.
LabeledCloud load_xyz(const std::filesystem::path& path);

/// Writes the layout load_xyz reads back, always with a `#fields` header.
/// Coordinates use shortest round-trip formatting.
void save_xyz(const LabeledCloud& cloud, const std::filesystem::path& path);

enum class PlyEncoding { ascii, binary_little_endian };

struct Rgb {
  std::uint8_t r, g, b;
  friend bool operator==(const Rgb&, const Rgb&) = default;
};

inline constexpr Rgb kWoodColor{139, 69, 19};   // brown
inline constexpr Rgb kLeafColor{34, 139, 34};   // green

constexpr Rgb label_color(ClassLabel label) noexcept {
  return label == ClassLabel::wood ? kWoodColor : kLeafColor;
}

/// PLY 1.0 with float64 x/y/z and uint8 red/green/blue per vertex.
void export_colored_ply(const LabeledCloud& cloud,
                        std::span<const ClassLabel> labels,
                        const std::filesystem::path& path,
                        PlyEncoding encoding = PlyEncoding::ascii);

/// Reads back a vertex-only PLY written by export_colored_ply (either
/// encoding). Labels are recovered from the two fixed colors.
LabeledCloud load_colored_ply(const std::filesystem::path& path);

}  // namespace leafwood
