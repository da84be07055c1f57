#include "c2pc/csidata/ply.hpp"

#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <vector>

#include "c2pc/errors.hpp"

namespace c2pc::csi {
namespace {

void append_float(std::string& line, double value) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), static_cast<float>(value));
  line.append(buf, res.ptr);
}

bool next_content_line(std::istream& in, std::string& line) {
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") != std::string::npos) return true;
  }
  return false;
}

double parse_number(const std::string& token, std::size_t line_no) {
  double v = 0.0;
  const char* end = token.data() + token.size();
  const auto res = std::from_chars(token.data(), end, v);
  if (res.ec != std::errc() || res.ptr != end) {
    throw DataError("PLY/XYZ parse error: bad number '" + token + "' on line " + std::to_string(line_no));
  }
  return v;
}

PointCloud read_xyz(std::istream& in, std::string first_line) {
  PointCloud cloud;
  std::size_t line_no = 1;
  std::string line = std::move(first_line);
  do {
    std::istringstream ls(line);
    std::vector<std::string> tok;
    for (std::string t; ls >> t;) tok.push_back(t);
    if (tok.empty()) continue;
    if (tok.size() != 3) {
      throw DataError("XYZ parse error: expected 3 values on line " + std::to_string(line_no) + ", got " +
                      std::to_string(tok.size()));
    }
    cloud.points.push_back({parse_number(tok[0], line_no), parse_number(tok[1], line_no), parse_number(tok[2], line_no)});
    ++line_no;
  } while (next_content_line(in, line));
  validate(cloud);
  return cloud;
}

}  // namespace

void write_ply(const PointCloud& cloud, std::ostream& out) {
  validate(cloud);
  out << "ply\nformat ascii 1.0\nelement vertex " << cloud.size()
      << "\nproperty float x\nproperty float y\nproperty float z\nend_header\n";
  std::string line;
  for (const auto& p : cloud.points) {
    line.clear();
    append_float(line, p[0]);
    line += ' ';
    append_float(line, p[1]);
    line += ' ';
    append_float(line, p[2]);
    line += '\n';
    out << line;
  }
}

void write_ply(const PointCloud& cloud, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  write_ply(cloud, out);
  if (!out) throw DataError("write failed for " + path.string());
}

PointCloud read_ply(std::istream& in) {
  std::string line;
  if (!next_content_line(in, line)) throw DataError("PLY parse error: empty file");
  if (line != "ply") return read_xyz(in, line);

  std::size_t vertices = 0;
  bool have_vertex = false;
  std::vector<std::string> props;
  int axis_col[3] = {-1, -1, -1};
  std::size_t line_no = 1;
  while (true) {
    if (!next_content_line(in, line)) throw DataError("PLY parse error: header has no end_header");
    ++line_no;
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key == "end_header") break;
    if (key == "comment" || key == "obj_info") continue;
    if (key == "format") {
      std::string fmt;
      ls >> fmt;
      if (fmt != "ascii") throw DataError("PLY parse error: unsupported format '" + fmt + "' (only ascii)");
    } else if (key == "element") {
      std::string name;
      std::size_t count = 0;
      ls >> name >> count;
      if (name != "vertex") throw DataError("PLY parse error: unsupported element '" + name + "'");
      vertices = count;
      have_vertex = true;
    } else if (key == "property") {
      std::string type, name;
      ls >> type >> name;
      if (type == "list") throw DataError("PLY parse error: list properties are not supported");
      const int col = static_cast<int>(props.size());
      props.push_back(name);
      if (name == "x") axis_col[0] = col;
      if (name == "y") axis_col[1] = col;
      if (name == "z") axis_col[2] = col;
    } else {
      throw DataError("PLY parse error: unexpected header line '" + line + "'");
    }
  }
  if (!have_vertex) throw DataError("PLY parse error: no vertex element");
  if (axis_col[0] < 0 || axis_col[1] < 0 || axis_col[2] < 0) {
    throw DataError("PLY parse error: vertex element lacks x/y/z properties");
  }
  PointCloud cloud;
  cloud.points.reserve(vertices);
  for (std::size_t v = 0; v < vertices; ++v) {
    if (!next_content_line(in, line)) {
      throw DataError("PLY parse error: expected " + std::to_string(vertices) + " vertices, found " + std::to_string(v));
    }
    ++line_no;
    std::istringstream ls(line);
    std::vector<std::string> tok;
    for (std::string t; ls >> t;) tok.push_back(t);
    if (tok.size() != props.size()) {
      throw DataError("PLY parse error: vertex line " + std::to_string(line_no) + " has " + std::to_string(tok.size()) +
                      " values, expected " + std::to_string(props.size()));
    }
    cloud.points.push_back({parse_number(tok[axis_col[0]], line_no), parse_number(tok[axis_col[1]], line_no),
                            parse_number(tok[axis_col[2]], line_no)});
  }
  if (next_content_line(in, line)) throw DataError("PLY parse error: trailing data after vertex list");
  validate(cloud);
  return cloud;
}

PointCloud read_ply(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  try {
    return read_ply(in);
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

}  // namespace c2pc::csi
