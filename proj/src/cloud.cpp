#include "leafwood/cloud.hpp"

#include <array>
#include <bit>
#include <cctype>
#include <charconv>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>

#include "leafwood/atomic_file.hpp"
#include "leafwood/errors.hpp"

namespace leafwood {

LabeledCloud::LabeledCloud(std::vector<Point3> points,
                           std::optional<std::vector<ClassLabel>> labels,
                           std::optional<std::vector<double>> linearity)
    : points_(std::move(points)),
      labels_(std::move(labels)),
      linearity_(std::move(linearity)) {
  validate();
}

void LabeledCloud::validate() const {
  for (std::size_t i = 0; i < points_.size(); ++i) {
    if (!points_[i].is_finite()) {
      throw ContractError("non-finite coordinate at point " + std::to_string(i));
    }
  }
  if (labels_ && labels_->size() != points_.size()) {
    throw ContractError("label count " + std::to_string(labels_->size()) +
                        " != point count " + std::to_string(points_.size()));
  }
  if (linearity_) {
    if (linearity_->size() != points_.size()) {
      throw ContractError("linearity count " + std::to_string(linearity_->size()) +
                          " != point count " + std::to_string(points_.size()));
    }
    for (std::size_t i = 0; i < linearity_->size(); ++i) {
      const double v = (*linearity_)[i];
      if (!(v >= 0.0 && v <= 1.0)) {
        throw ContractError("linearity outside [0,1] at point " + std::to_string(i));
      }
    }
  }
}

std::span<const ClassLabel> LabeledCloud::labels() const {
  if (!labels_) throw ContractError("cloud has no labels");
  return *labels_;
}

std::span<const double> LabeledCloud::linearity() const {
  if (!linearity_) {
    throw ContractError("cloud has no linearity; run the featurize step first");
  }
  return *linearity_;
}

LabeledCloud LabeledCloud::with_labels(std::vector<ClassLabel> labels) const& {
  return LabeledCloud(points_, std::move(labels), linearity_);
}

LabeledCloud LabeledCloud::with_labels(std::vector<ClassLabel> labels) && {
  return LabeledCloud(std::move(points_), std::move(labels), std::move(linearity_));
}

LabeledCloud LabeledCloud::with_linearity(std::vector<double> linearity) const& {
  return LabeledCloud(points_, labels_, std::move(linearity));
}

LabeledCloud LabeledCloud::with_linearity(std::vector<double> linearity) && {
  return LabeledCloud(std::move(points_), std::move(labels_), std::move(linearity));
}

LabeledCloud LabeledCloud::without_labels() const {
  return LabeledCloud(points_, std::nullopt, linearity_);
}

LabeledCloud LabeledCloud::subset(std::span<const std::size_t> indices) const {
  std::vector<Point3> pts;
  pts.reserve(indices.size());
  std::optional<std::vector<ClassLabel>> labels;
  std::optional<std::vector<double>> lin;
  if (labels_) labels.emplace().reserve(indices.size());
  if (linearity_) lin.emplace().reserve(indices.size());
  for (std::size_t i : indices) {
    if (i >= points_.size()) {
      throw ContractError("subset index " + std::to_string(i) + " out of range");
    }
    pts.push_back(points_[i]);
    if (labels) labels->push_back((*labels_)[i]);
    if (lin) lin->push_back((*linearity_)[i]);
  }
  LabeledCloud out;
  out.points_ = std::move(pts);
  out.labels_ = std::move(labels);
  out.linearity_ = std::move(lin);
  return out;
}

namespace {

enum class Column { x, y, z, linearity, label };

std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    std::size_t j = i;
    while (j < line.size() && !std::isspace(static_cast<unsigned char>(line[j]))) ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

double parse_real(std::string_view tok, std::size_t line_no) {
  double v = 0.0;
  const auto* first = tok.data();
  if (!tok.empty() && tok.front() == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, tok.data() + tok.size(), v);
  if (ec != std::errc{} || ptr != tok.data() + tok.size()) {
    throw ParseError("not a number: '" + std::string(tok) + "'", line_no);
  }
  if (!std::isfinite(v)) {
    throw ParseError("non-finite value: '" + std::string(tok) + "'", line_no);
  }
  return v;
}

ClassLabel parse_label(std::string_view tok, std::size_t line_no) {
  long v = 0;
  auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc{} || ptr != tok.data() + tok.size()) {
    throw ParseError("label is not an integer: '" + std::string(tok) + "'", line_no);
  }
  if (v != 0 && v != 1) {
    throw DomainError("line " + std::to_string(line_no) + ": label " +
                      std::to_string(v) + " is not 0 (leaf) or 1 (wood)");
  }
  return static_cast<ClassLabel>(v);
}

std::vector<Column> parse_fields_header(std::string_view rest, std::size_t line_no) {
  std::vector<Column> cols;
  for (auto tok : split_ws(rest)) {
    if (tok == "x") cols.push_back(Column::x);
    else if (tok == "y") cols.push_back(Column::y);
    else if (tok == "z") cols.push_back(Column::z);
    else if (tok == "linearity") cols.push_back(Column::linearity);
    else if (tok == "label") cols.push_back(Column::label);
    else throw ParseError("unknown field '" + std::string(tok) + "' in #fields header", line_no);
  }
  using C = Column;
  const bool ok = cols == std::vector<C>{C::x, C::y, C::z} ||
                  cols == std::vector<C>{C::x, C::y, C::z, C::linearity} ||
                  cols == std::vector<C>{C::x, C::y, C::z, C::label} ||
                  cols == std::vector<C>{C::x, C::y, C::z, C::linearity, C::label};
  if (!ok) throw ParseError("#fields must be 'x y z [linearity] [label]'", line_no);
  return cols;
}

std::vector<Column> default_layout(std::size_t n) {
  switch (n) {
    case 3: return {Column::x, Column::y, Column::z};
    case 4: return {Column::x, Column::y, Column::z, Column::label};
    default: return {Column::x, Column::y, Column::z, Column::linearity, Column::label};
  }
}

}  // namespace

LabeledCloud load_xyz(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());

  std::optional<std::vector<Column>> header;
  std::optional<std::vector<Column>> layout;
  std::vector<Point3> points;
  std::vector<ClassLabel> labels;
  std::vector<double> lin;

  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view sv(line);
    if (!sv.empty() && sv.back() == '\r') sv.remove_suffix(1);
    const auto first = sv.find_first_not_of(" \t");
    if (first == std::string_view::npos) continue;
    sv.remove_prefix(first);
    if (sv.front() == '#') {
      constexpr std::string_view kFields = "#fields";
      if (sv.starts_with(kFields)) {
        if (layout) throw FormatError("line " + std::to_string(line_no) + ": #fields after data");
        header = parse_fields_header(sv.substr(kFields.size()), line_no);
      }
      continue;
    }
    const auto toks = split_ws(sv);
    if (toks.size() < 3 || toks.size() > 5) {
      throw ParseError("expected 3 to 5 fields, found " + std::to_string(toks.size()), line_no);
    }
    if (!layout) {
      if (header && header->size() != toks.size()) {
        throw FormatError("line " + std::to_string(line_no) + ": " +
                          std::to_string(toks.size()) + " fields but #fields declares " +
                          std::to_string(header->size()));
      }
      layout = header ? *header : default_layout(toks.size());
    } else if (layout->size() != toks.size()) {
      throw FormatError("line " + std::to_string(line_no) + ": mixed field counts (" +
                        std::to_string(toks.size()) + " vs " +
                        std::to_string(layout->size()) + ")");
    }
    Point3 p{parse_real(toks[0], line_no), parse_real(toks[1], line_no),
             parse_real(toks[2], line_no)};
    points.push_back(p);
    for (std::size_t c = 3; c < toks.size(); ++c) {
      if ((*layout)[c] == Column::label) {
        labels.push_back(parse_label(toks[c], line_no));
      } else {
        const double v = parse_real(toks[c], line_no);
        if (v < 0.0 || v > 1.0) {
          throw DomainError("line " + std::to_string(line_no) + ": linearity " +
                            std::string(toks[c]) + " outside [0,1]");
        }
        lin.push_back(v);
      }
    }
  }
  if (in.bad()) throw IoError("read failed: " + path.string());

  std::optional<std::vector<ClassLabel>> out_labels;
  std::optional<std::vector<double>> out_lin;
  if (layout) {
    for (auto c : *layout) {
      if (c == Column::label) out_labels = std::move(labels);
      if (c == Column::linearity) out_lin = std::move(lin);
    }
  }
  return LabeledCloud(std::move(points), std::move(out_labels), std::move(out_lin));
}

namespace {

void append_real(std::string& buf, double v) {
  std::array<char, 32> tmp{};
  auto [ptr, ec] = std::to_chars(tmp.data(), tmp.data() + tmp.size(), v);
  buf.append(tmp.data(), ptr);
}

}  // namespace

void save_xyz(const LabeledCloud& cloud, const std::filesystem::path& path) {
  if (cloud.empty()) throw ContractError("refusing to save an empty cloud");
  write_atomically(path, [&](std::ofstream& out) {
    out << "#fields x y z";
    if (cloud.has_linearity()) out << " linearity";
    if (cloud.has_labels()) out << " label";
    out << '\n';
    std::string buf;
    const auto pts = cloud.points();
    for (std::size_t i = 0; i < pts.size(); ++i) {
      buf.clear();
      append_real(buf, pts[i].x);
      buf += ' ';
      append_real(buf, pts[i].y);
      buf += ' ';
      append_real(buf, pts[i].z);
      if (cloud.has_linearity()) {
        buf += ' ';
        append_real(buf, cloud.linearity()[i]);
      }
      if (cloud.has_labels()) {
        buf += ' ';
        buf += cloud.labels()[i] == ClassLabel::wood ? '1' : '0';
      }
      buf += '\n';
      out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    }
  });
}

void export_colored_ply(const LabeledCloud& cloud, std::span<const ClassLabel> labels,
                        const std::filesystem::path& path, PlyEncoding encoding) {
  if (labels.size() != cloud.size()) {
    throw ContractError("label count " + std::to_string(labels.size()) +
                        " != point count " + std::to_string(cloud.size()));
  }
  const bool binary = encoding == PlyEncoding::binary_little_endian;
  write_atomically(
      path,
      [&](std::ofstream& out) {
        out << "ply\n"
            << (binary ? "format binary_little_endian 1.0\n" : "format ascii 1.0\n")
            << "comment brown = wood, green = leaf\n"
            << "element vertex " << cloud.size() << '\n'
            << "property double x\nproperty double y\nproperty double z\n"
            << "property uchar red\nproperty uchar green\nproperty uchar blue\n"
            << "end_header\n";
        const auto pts = cloud.points();
        std::string buf;
        for (std::size_t i = 0; i < pts.size(); ++i) {
          const Rgb c = label_color(labels[i]);
          buf.clear();
          if (binary) {
            static_assert(std::endian::native == std::endian::little);
            char raw[3 * sizeof(double) + 3];
            std::memcpy(raw, &pts[i].x, sizeof(double));
            std::memcpy(raw + 8, &pts[i].y, sizeof(double));
            std::memcpy(raw + 16, &pts[i].z, sizeof(double));
            raw[24] = static_cast<char>(c.r);
            raw[25] = static_cast<char>(c.g);
            raw[26] = static_cast<char>(c.b);
            buf.append(raw, sizeof(raw));
          } else {
            append_real(buf, pts[i].x);
            buf += ' ';
            append_real(buf, pts[i].y);
            buf += ' ';
            append_real(buf, pts[i].z);
            buf += ' ' + std::to_string(c.r) + ' ' + std::to_string(c.g) + ' ' +
                   std::to_string(c.b) + '\n';
          }
          out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
        }
      },
      binary ? std::ios::binary : std::ios::openmode{});
}

LabeledCloud load_colored_ply(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  std::getline(in, line);
  if (line != "ply") throw FormatError(path.string() + ": missing 'ply' magic");
  bool binary = false;
  std::size_t count = 0;
  while (std::getline(in, line)) {
    if (line.starts_with("format ")) {
      binary = line.find("binary_little_endian") != std::string::npos;
      if (!binary && line.find("ascii") == std::string::npos) {
        throw FormatError(path.string() + ": unsupported PLY encoding");
      }
    } else if (line.starts_with("element vertex ")) {
      count = std::stoull(line.substr(15));
    } else if (line == "end_header") {
      break;
    }
  }
  std::vector<Point3> pts(count);
  std::vector<ClassLabel> labels(count);
  for (std::size_t i = 0; i < count; ++i) {
    Rgb c{};
    if (binary) {
      char raw[27];
      if (!in.read(raw, sizeof(raw))) throw FormatError(path.string() + ": truncated vertex data");
      std::memcpy(&pts[i].x, raw, 8);
      std::memcpy(&pts[i].y, raw + 8, 8);
      std::memcpy(&pts[i].z, raw + 16, 8);
      c = {static_cast<std::uint8_t>(raw[24]), static_cast<std::uint8_t>(raw[25]),
           static_cast<std::uint8_t>(raw[26])};
    } else {
      int r = 0, g = 0, b = 0;
      if (!(in >> pts[i].x >> pts[i].y >> pts[i].z >> r >> g >> b)) {
        throw FormatError(path.string() + ": bad vertex " + std::to_string(i));
      }
      c = {static_cast<std::uint8_t>(r), static_cast<std::uint8_t>(g),
           static_cast<std::uint8_t>(b)};
    }
    if (c == kWoodColor) labels[i] = ClassLabel::wood;
    else if (c == kLeafColor) labels[i] = ClassLabel::leaf;
    else throw DomainError(path.string() + ": vertex " + std::to_string(i) + " has an unknown color");
  }
  return LabeledCloud(std::move(pts), std::move(labels));
}

}  // namespace leafwood
