#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "sld/error.hpp"
#include "sld/trimesh.hpp"

namespace sld {

enum class MeshFormat { Auto, StlAscii, StlBinary, Obj, PlyAscii, PlyBinary };

inline constexpr double kStlWeldTolerance = 1e-6;

namespace io_detail {

static_assert(std::endian::native == std::endian::little, "binary mesh I/O assumes a little-endian host");

inline std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return data;
}

inline void write_file(const std::filesystem::path& path, const std::string& data) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(data.data(), static_cast<std::streamsize>(data.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

/// Line/token cursor over a text buffer that remembers byte offsets.
class TextCursor {
public:
  explicit TextCursor(std::string_view data) : data_(data) {}

  bool next_line(std::string_view& line, std::size_t& offset) {
    if (pos_ >= data_.size()) return false;
    offset = pos_;
    std::size_t end = data_.find('\n', pos_);
    if (end == std::string_view::npos) end = data_.size();
    line = data_.substr(pos_, end - pos_);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    pos_ = end + 1;
    return true;
  }

  std::size_t position() const { return pos_; }

private:
  std::string_view data_;
  std::size_t pos_ = 0;
};

inline std::vector<std::string_view> split_ws(std::string_view line) {
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

/// Byte offset of a token that views into `line`, which starts at `line_offset`.
inline std::size_t token_offset(std::string_view line, std::size_t line_offset, std::string_view tok) {
  return line_offset + static_cast<std::size_t>(tok.data() - line.data());
}

inline double parse_double(std::string_view tok, std::size_t offset) {
  double v = 0.0;
  const auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (res.ec != std::errc() || res.ptr != tok.data() + tok.size() || !std::isfinite(v)) {
    throw FormatError("invalid number '" + std::string(tok) + "'", offset);
  }
  return v;
}

inline long long parse_int(std::string_view tok, std::size_t offset) {
  long long v = 0;
  const auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (res.ec != std::errc() || res.ptr != tok.data() + tok.size()) {
    throw FormatError("invalid integer '" + std::string(tok) + "'", offset);
  }
  return v;
}

inline std::string format_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

/// Merges points closer than `tol`; returns the index map and welded points.
class Welder {
public:
  explicit Welder(double tol) : tol_(tol) {}

  Index insert(const Vec3& p) {
    const auto key = cell(p);
    for (int dx = -1; dx <= 1; ++dx) {
      for (int dy = -1; dy <= 1; ++dy) {
        for (int dz = -1; dz <= 1; ++dz) {
          const auto it = grid_.find(hash({key[0] + dx, key[1] + dy, key[2] + dz}));
          if (it == grid_.end()) continue;
          for (Index idx : it->second) {
            if ((points_[static_cast<std::size_t>(idx)] - p).norm() <= tol_) return idx;
          }
        }
      }
    }
    const auto idx = static_cast<Index>(points_.size());
    points_.push_back(p);
    grid_[hash(key)].push_back(idx);
    return idx;
  }

  std::vector<Vec3> take_points() { return std::move(points_); }

private:
  std::array<long long, 3> cell(const Vec3& p) const {
    return {static_cast<long long>(std::floor(p.x() / tol_)), static_cast<long long>(std::floor(p.y() / tol_)),
            static_cast<long long>(std::floor(p.z() / tol_))};
  }
  static std::uint64_t hash(const std::array<long long, 3>& k) {
    std::uint64_t h = 1469598103934665603ULL;
    for (long long c : k) {
      h ^= static_cast<std::uint64_t>(c);
      h *= 1099511628211ULL;
      h ^= h >> 29;
    }
    return h;
  }

  double tol_;
  std::vector<Vec3> points_;
  std::unordered_map<std::uint64_t, std::vector<Index>> grid_;
};

inline TriMesh finish_soup(const std::vector<std::array<Vec3, 3>>& soup) {
  Welder welder(kStlWeldTolerance);
  std::vector<Face> faces;
  faces.reserve(soup.size());
  for (const auto& tri : soup) {
    const Face f{welder.insert(tri[0]), welder.insert(tri[1]), welder.insert(tri[2])};
    if (f[0] == f[1] || f[1] == f[2] || f[0] == f[2]) continue;
    faces.push_back(f);
  }
  return TriMesh(welder.take_points(), std::move(faces));
}

inline TriMesh read_stl_binary(const std::string& data) {
  if (data.size() < 84) throw FormatError("binary STL shorter than its header", data.size());
  std::uint32_t count = 0;
  std::memcpy(&count, data.data() + 80, 4);
  const std::size_t expected = 84 + static_cast<std::size_t>(count) * 50;
  if (data.size() < expected) {
    throw FormatError("binary STL truncated: expected " + std::to_string(count) + " triangles", data.size());
  }
  std::vector<std::array<Vec3, 3>> soup(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    const char* rec = data.data() + 84 + static_cast<std::size_t>(i) * 50 + 12;
    for (int k = 0; k < 3; ++k) {
      float xyz[3];
      std::memcpy(xyz, rec + 12 * k, 12);
      soup[i][static_cast<std::size_t>(k)] = Vec3(xyz[0], xyz[1], xyz[2]);
      if (!std::isfinite(xyz[0]) || !std::isfinite(xyz[1]) || !std::isfinite(xyz[2])) {
        throw FormatError("non-finite STL coordinate", 84 + static_cast<std::size_t>(i) * 50 + 12);
      }
    }
  }
  return finish_soup(soup);
}

inline TriMesh read_stl_ascii(const std::string& data) {
  TextCursor cur(data);
  std::string_view line;
  std::size_t offset = 0;
  std::vector<std::array<Vec3, 3>> soup;
  std::array<Vec3, 3> tri;
  int corner = -1;
  while (cur.next_line(line, offset)) {
    const auto tok = split_ws(line);
    if (tok.empty()) continue;
    auto coord = [&](const auto& t, std::size_t i) { return parse_double(t[i], token_offset(line, offset, t[i])); };
    const std::string head = lower(std::string(tok[0]));
    if (head == "outer") {
      corner = 0;
    } else if (head == "vertex") {
      if (tok.size() != 4 || corner < 0 || corner > 2) throw FormatError("malformed STL vertex record", offset);
      tri[static_cast<std::size_t>(corner++)] = Vec3(coord(tok, 1), coord(tok, 2), coord(tok, 3));
    } else if (head == "endloop") {
      if (corner != 3) throw FormatError("STL facet does not have exactly three vertices", offset);
      soup.push_back(tri);
      corner = -1;
    } else if (head != "solid" && head != "facet" && head != "endfacet" && head != "endsolid") {
      throw FormatError("unexpected STL token '" + std::string(tok[0]) + "'", offset);
    }
  }
  if (corner != -1) throw FormatError("STL ends inside a facet", data.size());
  return finish_soup(soup);
}

inline bool looks_like_binary_stl(const std::string& data) {
  if (data.size() < 84) return false;
  std::uint32_t count = 0;
  std::memcpy(&count, data.data() + 80, 4);
  if (data.size() == 84 + static_cast<std::size_t>(count) * 50) return true;
  return data.compare(0, 5, "solid") != 0;
}

inline TriMesh read_obj(const std::string& data) {
  TextCursor cur(data);
  std::string_view line;
  std::size_t offset = 0;
  std::vector<Vec3> verts;
  std::vector<Face> faces;
  while (cur.next_line(line, offset)) {
    const auto tok = split_ws(line);
    if (tok.empty()) continue;
    auto coord = [&](const auto& t, std::size_t i) { return parse_double(t[i], token_offset(line, offset, t[i])); };
    if (tok[0] == "v") {
      if (tok.size() < 4) throw FormatError("OBJ vertex needs three coordinates", offset);
      verts.emplace_back(coord(tok, 1), coord(tok, 2), coord(tok, 3));
    } else if (tok[0] == "f") {
      if (tok.size() < 4) throw FormatError("OBJ face needs at least three vertices", offset);
      std::vector<Index> poly;
      for (std::size_t i = 1; i < tok.size(); ++i) {
        const std::string_view ref = tok[i].substr(0, tok[i].find('/'));
        long long idx = parse_int(ref, token_offset(line, offset, ref));
        if (idx < 0) idx = static_cast<long long>(verts.size()) + idx + 1;
        if (idx < 1 || idx > static_cast<long long>(verts.size())) {
          throw FormatError("OBJ face index " + std::string(ref) + " out of range", offset);
        }
        poly.push_back(static_cast<Index>(idx - 1));
      }
      for (std::size_t i = 1; i + 1 < poly.size(); ++i) faces.push_back({poly[0], poly[i], poly[i + 1]});
    }
  }
  return TriMesh(std::move(verts), std::move(faces));
}

enum class PlyType { Int8, UInt8, Int16, UInt16, Int32, UInt32, Float32, Float64 };

inline std::optional<PlyType> ply_type(std::string_view name) {
  static const std::pair<std::string_view, PlyType> table[] = {
      {"char", PlyType::Int8},     {"int8", PlyType::Int8},       {"uchar", PlyType::UInt8},
      {"uint8", PlyType::UInt8},   {"short", PlyType::Int16},     {"int16", PlyType::Int16},
      {"ushort", PlyType::UInt16}, {"uint16", PlyType::UInt16},   {"int", PlyType::Int32},
      {"int32", PlyType::Int32},   {"uint", PlyType::UInt32},     {"uint32", PlyType::UInt32},
      {"float", PlyType::Float32}, {"float32", PlyType::Float32}, {"double", PlyType::Float64},
      {"float64", PlyType::Float64}};
  for (const auto& [n, t] : table) {
    if (n == name) return t;
  }
  return std::nullopt;
}

inline std::size_t ply_size(PlyType t) {
  switch (t) {
  case PlyType::Int8:
  case PlyType::UInt8: return 1;
  case PlyType::Int16:
  case PlyType::UInt16: return 2;
  case PlyType::Int32:
  case PlyType::UInt32:
  case PlyType::Float32: return 4;
  case PlyType::Float64: return 8;
  }
  return 0;
}

struct PlyProperty {
  std::string name;
  PlyType type = PlyType::Float32;
  bool is_list = false;
  PlyType count_type = PlyType::UInt8;
};

struct PlyElement {
  std::string name;
  std::size_t count = 0;
  std::vector<PlyProperty> props;
};

class BinaryReader {
public:
  BinaryReader(const std::string& data, std::size_t pos) : data_(data), pos_(pos) {}

  double read(PlyType t) {
    const std::size_t n = ply_size(t);
    if (pos_ + n > data_.size()) throw FormatError("PLY body truncated", pos_);
    const char* p = data_.data() + pos_;
    pos_ += n;
    switch (t) {
    case PlyType::Int8: return static_cast<double>(load<std::int8_t>(p));
    case PlyType::UInt8: return static_cast<double>(load<std::uint8_t>(p));
    case PlyType::Int16: return static_cast<double>(load<std::int16_t>(p));
    case PlyType::UInt16: return static_cast<double>(load<std::uint16_t>(p));
    case PlyType::Int32: return static_cast<double>(load<std::int32_t>(p));
    case PlyType::UInt32: return static_cast<double>(load<std::uint32_t>(p));
    case PlyType::Float32: return static_cast<double>(load<float>(p));
    case PlyType::Float64: return load<double>(p);
    }
    return 0.0;
  }
  std::size_t position() const { return pos_; }

private:
  template <class T> static T load(const char* p) {
    T v;
    std::memcpy(&v, p, sizeof(T));
    return v;
  }
  const std::string& data_;
  std::size_t pos_;
};

inline TriMesh read_ply(const std::string& data) {
  TextCursor cur(data);
  std::string_view line;
  std::size_t offset = 0;
  if (!cur.next_line(line, offset) || line != "ply") throw FormatError("missing 'ply' magic", 0);
  bool binary = false;
  std::vector<PlyElement> elements;
  bool header_done = false;
  while (cur.next_line(line, offset)) {
    const auto tok = split_ws(line);
    if (tok.empty()) continue;
    if (tok[0] == "format") {
      if (tok.size() < 2) throw FormatError("malformed PLY format line", offset);
      if (tok[1] == "ascii") {
        binary = false;
      } else if (tok[1] == "binary_little_endian") {
        binary = true;
      } else {
        throw FormatError("unsupported PLY format '" + std::string(tok[1]) + "'", offset);
      }
    } else if (tok[0] == "element") {
      if (tok.size() != 3) throw FormatError("malformed PLY element line", offset);
      elements.push_back({std::string(tok[1]), static_cast<std::size_t>(parse_int(tok[2], offset)), {}});
    } else if (tok[0] == "property") {
      if (elements.empty()) throw FormatError("PLY property outside an element", offset);
      PlyProperty prop;
      if (tok.size() == 5 && tok[1] == "list") {
        const auto ct = ply_type(tok[2]);
        const auto vt = ply_type(tok[3]);
        if (!ct || !vt) throw FormatError("unknown PLY list type", offset);
        prop = {std::string(tok[4]), *vt, true, *ct};
      } else if (tok.size() == 3) {
        const auto t = ply_type(tok[1]);
        if (!t) throw FormatError("unknown PLY property type '" + std::string(tok[1]) + "'", offset);
        prop = {std::string(tok[2]), *t, false, PlyType::UInt8};
      } else {
        throw FormatError("malformed PLY property line", offset);
      }
      elements.back().props.push_back(prop);
    } else if (tok[0] == "end_header") {
      header_done = true;
      break;
    } else if (tok[0] != "comment" && tok[0] != "obj_info") {
      throw FormatError("unexpected PLY header keyword '" + std::string(tok[0]) + "'", offset);
    }
  }
  if (!header_done) throw FormatError("PLY header has no end_header", data.size());

  std::vector<Vec3> verts;
  std::vector<int> labels;
  bool has_label = false;
  std::vector<Face> faces;

  auto consume = [&](const PlyElement& el, auto&& next_scalar) {
    const bool is_vertex = el.name == "vertex";
    const bool is_face = el.name == "face";
    int ix = -1, iy = -1, iz = -1, il = -1;
    for (std::size_t p = 0; p < el.props.size(); ++p) {
      const auto& name = el.props[p].name;
      if (name == "x") ix = static_cast<int>(p);
      if (name == "y") iy = static_cast<int>(p);
      if (name == "z") iz = static_cast<int>(p);
      if (name == "label") il = static_cast<int>(p);
    }
    if (is_vertex && (ix < 0 || iy < 0 || iz < 0)) throw FormatError("PLY vertex element lacks x/y/z", 0);
    if (is_vertex && il >= 0) has_label = true;
    for (std::size_t r = 0; r < el.count; ++r) {
      Vec3 p = Vec3::Zero();
      int label = 0;
      for (std::size_t k = 0; k < el.props.size(); ++k) {
        const auto& prop = el.props[k];
        if (prop.is_list) {
          const auto [n, at] = next_scalar(prop.count_type);
          std::vector<Index> poly;
          for (long long i = 0; i < static_cast<long long>(n); ++i) {
            const auto [v, at2] = next_scalar(prop.type);
            if (v < 0.0) throw FormatError("negative PLY face index", at2);
            poly.push_back(static_cast<Index>(v));
          }
          if (is_face && (prop.name == "vertex_indices" || prop.name == "vertex_index")) {
            if (poly.size() < 3) throw FormatError("PLY face with fewer than three vertices", at);
            for (std::size_t i = 1; i + 1 < poly.size(); ++i) faces.push_back({poly[0], poly[i], poly[i + 1]});
          }
        } else {
          const auto [v, at] = next_scalar(prop.type);
          (void)at;
          const int ki = static_cast<int>(k);
          if (ki == ix) p.x() = v;
          if (ki == iy) p.y() = v;
          if (ki == iz) p.z() = v;
          if (ki == il) label = static_cast<int>(v);
        }
      }
      if (is_vertex) {
        verts.push_back(p);
        labels.push_back(label);
      }
    }
  };

  if (binary) {
    BinaryReader reader(data, cur.position());
    for (const auto& el : elements) {
      consume(el, [&](PlyType t) {
        const std::size_t at = reader.position();
        return std::pair<double, std::size_t>(reader.read(t), at);
      });
    }
  } else {
    std::vector<std::string_view> tokens;
    std::size_t tok_i = 0;
    std::size_t line_offset = cur.position();
    auto next = [&](PlyType) {
      while (tok_i >= tokens.size()) {
        if (!cur.next_line(line, line_offset)) throw FormatError("PLY body truncated", data.size());
        tokens = split_ws(line);
        tok_i = 0;
      }
      return std::pair<double, std::size_t>(parse_double(tokens[tok_i++], line_offset), line_offset);
    };
    for (const auto& el : elements) consume(el, next);
  }
  for (const Face& f : faces) {
    for (Index v : f) {
      if (v >= static_cast<Index>(verts.size())) throw FormatError("PLY face index out of range", 0);
    }
  }
  if (has_label) return TriMesh(std::move(verts), std::move(faces), std::move(labels));
  return TriMesh(std::move(verts), std::move(faces));
}

inline MeshFormat format_from_extension(const std::filesystem::path& path) {
  const std::string ext = lower(path.extension().string());
  if (ext == ".stl") return MeshFormat::StlAscii;
  if (ext == ".obj") return MeshFormat::Obj;
  if (ext == ".ply") return MeshFormat::PlyBinary;
  throw ParameterError("cannot infer mesh format from extension '" + ext + "'");
}

} // namespace io_detail

/// Reads STL (ASCII or binary), OBJ (v/f records) or PLY (ASCII or binary
/// little-endian). STL corners closer than 1e-6 mm are welded.
inline TriMesh load_mesh(const std::filesystem::path& path, MeshFormat format = MeshFormat::Auto) {
  using namespace io_detail;
  const std::string data = read_file(path);
  if (format == MeshFormat::Auto) format = format_from_extension(path);
  TriMesh mesh;
  switch (format) {
  case MeshFormat::StlAscii:
  case MeshFormat::StlBinary: mesh = looks_like_binary_stl(data) ? read_stl_binary(data) : read_stl_ascii(data); break;
  case MeshFormat::Obj: mesh = read_obj(data); break;
  case MeshFormat::PlyAscii:
  case MeshFormat::PlyBinary: mesh = read_ply(data); break;
  case MeshFormat::Auto: break;
  }
  if (mesh.empty()) throw ValidationError("mesh " + path.string() + " is empty");
  return mesh;
}

/// Writes `mesh`. ASCII STL, OBJ and PLY store shortest round-trip decimal or
/// IEEE double coordinates; binary STL is limited to float precision.
inline void save_mesh(const TriMesh& mesh, const std::filesystem::path& path, MeshFormat format = MeshFormat::Auto) {
  using namespace io_detail;
  mesh.require_non_empty();
  if (format == MeshFormat::Auto) format = format_from_extension(path);
  std::string out;
  const auto& V = mesh.vertices();
  const auto& F = mesh.faces();
  switch (format) {
  case MeshFormat::StlAscii: {
    out += "solid sld\n";
    for (std::size_t f = 0; f < F.size(); ++f) {
      const Vec3 n = face_normal(mesh, static_cast<Index>(f));
      out += "facet normal " + format_double(n.x()) + " " + format_double(n.y()) + " " + format_double(n.z()) + "\n";
      out += "outer loop\n";
      for (Index v : F[f]) {
        const Vec3& p = V[static_cast<std::size_t>(v)];
        out += "vertex " + format_double(p.x()) + " " + format_double(p.y()) + " " + format_double(p.z()) + "\n";
      }
      out += "endloop\nendfacet\n";
    }
    out += "endsolid sld\n";
    break;
  }
  case MeshFormat::StlBinary: {
    out.assign(84, '\0');
    const std::string tag = "sld binary stl";
    std::memcpy(out.data(), tag.data(), tag.size());
    const auto count = static_cast<std::uint32_t>(F.size());
    std::memcpy(out.data() + 80, &count, 4);
    for (std::size_t f = 0; f < F.size(); ++f) {
      char rec[50] = {};
      const Vec3 n = face_normal(mesh, static_cast<Index>(f));
      float vals[12] = {static_cast<float>(n.x()), static_cast<float>(n.y()), static_cast<float>(n.z())};
      for (int k = 0; k < 3; ++k) {
        const Vec3& p = V[static_cast<std::size_t>(F[f][static_cast<std::size_t>(k)])];
        for (int c = 0; c < 3; ++c) vals[3 + 3 * k + c] = static_cast<float>(p[c]);
      }
      std::memcpy(rec, vals, 48);
      out.append(rec, 50);
    }
    break;
  }
  case MeshFormat::Obj: {
    for (const Vec3& p : V) {
      out += "v " + format_double(p.x()) + " " + format_double(p.y()) + " " + format_double(p.z()) + "\n";
    }
    for (const Face& f : F) {
      out += "f " + std::to_string(f[0] + 1) + " " + std::to_string(f[1] + 1) + " " + std::to_string(f[2] + 1) + "\n";
    }
    break;
  }
  case MeshFormat::PlyAscii:
  case MeshFormat::PlyBinary: {
    const bool binary = format == MeshFormat::PlyBinary;
    const bool labels = mesh.labels().has_value();
    out += "ply\nformat ";
    out += binary ? "binary_little_endian 1.0\n" : "ascii 1.0\n";
    out += "element vertex " + std::to_string(V.size()) + "\n";
    out += "property double x\nproperty double y\nproperty double z\n";
    if (labels) out += "property int label\n";
    out += "element face " + std::to_string(F.size()) + "\n";
    out += "property list uchar int vertex_indices\nend_header\n";
    for (std::size_t i = 0; i < V.size(); ++i) {
      const Vec3& p = V[i];
      if (binary) {
        const double xyz[3] = {p.x(), p.y(), p.z()};
        out.append(reinterpret_cast<const char*>(xyz), sizeof(xyz));
        if (labels) {
          const std::int32_t l = (*mesh.labels())[i];
          out.append(reinterpret_cast<const char*>(&l), 4);
        }
      } else {
        out += format_double(p.x()) + " " + format_double(p.y()) + " " + format_double(p.z());
        if (labels) out += " " + std::to_string((*mesh.labels())[i]);
        out += "\n";
      }
    }
    for (const Face& f : F) {
      if (binary) {
        const char three = 3;
        out.push_back(three);
        const std::int32_t idx[3] = {f[0], f[1], f[2]};
        out.append(reinterpret_cast<const char*>(idx), sizeof(idx));
      } else {
        out += "3 " + std::to_string(f[0]) + " " + std::to_string(f[1]) + " " + std::to_string(f[2]) + "\n";
      }
    }
    break;
  }
  case MeshFormat::Auto: break;
  }
  write_file(path, out);
}

} // namespace sld
