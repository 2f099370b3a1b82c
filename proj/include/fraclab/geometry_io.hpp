#pragma once

#include "fraclab/lattice.hpp"

#include <map>
#include <string>

namespace fraclab {

/** @brief Lattice plus labelled regions read from a geometry JSON document. */
struct GeometryDescription {
  LatticeSpec lattice;
  std::map<std::string, RegionMask> regions;
  std::string canonical_json;
  std::string hash;

  const RegionMask& region(const std::string& label) const;
};

GeometryDescription parse_geometry(const std::string& json_text);
GeometryDescription load_geometry(const std::string& path);

/// Reference two-dimensional configuration used by tests and default runs.
std::string reference_geometry_json(int pts_per_side = 48, double box_len = 3.0);

}  // namespace fraclab
