#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>

#include "c2pc/csidata/point_cloud.hpp"

namespace c2pc::csi {

/// ASCII PLY with one `vertex` element and float x, y, z properties. Coordinates are
/// written as the shortest decimal that round-trips the float32 value.
void write_ply(const PointCloud& cloud, std::ostream& out);
void write_ply(const PointCloud& cloud, const std::filesystem::path& path);

/// Reads ASCII PLY (vertex element with x/y/z among its float or double properties)
/// or plain XYZ text (whitespace-separated triples). Any element other than `vertex`
/// is rejected by name.
PointCloud read_ply(std::istream& in);
PointCloud read_ply(const std::filesystem::path& path);

}  // namespace c2pc::csi
