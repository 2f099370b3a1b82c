#include "fraclab/geometry_io.hpp"

#include <json.hpp>

#include <fstream>
#include <sstream>

namespace fraclab {

using nlohmann::json;

const RegionMask& GeometryDescription::region(const std::string& label) const {
  auto it = regions.find(label);
  if (it == regions.end()) throw std::invalid_argument("geometry: missing region '" + label + "'");
  return it->second;
}

namespace {

RegionLabel label_of(const std::string& s) {
  if (s == "Omega") return RegionLabel::Omega;
  if (s == "OmegaPrime") return RegionLabel::OmegaPrime;
  if (s == "W") return RegionLabel::W;
  return RegionLabel::Custom;
}

std::vector<double> vec_of(const json& j, int n, const char* what) {
  if (!j.is_array() || static_cast<int>(j.size()) != n)
    throw std::invalid_argument(std::string("geometry: '") + what + "' must be an array of length n");
  return j.get<std::vector<double>>();
}

RegionMask rasterize(const LatticeSpec& lat, const json& r) {
  const std::string label = r.at("label").get<std::string>();
  const std::string shape = r.at("shape").get<std::string>();
  const json& prm = r.at("params");
  const RegionLabel lab = label_of(label);
  if (shape == "rect")
    return RegionMask::rect(lat, vec_of(prm.at("lo"), lat.n(), "lo"), vec_of(prm.at("hi"), lat.n(), "hi"), lab);
  if (shape == "ball")
    return RegionMask::ball(lat, vec_of(prm.at("center"), lat.n(), "center"), prm.at("radius").get<double>(), lab);
  if (shape == "mask") {
    std::vector<Index> nodes;
    for (const auto& idx : prm.at("nodes")) {
      std::vector<int> mi = idx.get<std::vector<int>>();
      if (static_cast<int>(mi.size()) != lat.n()) throw std::invalid_argument("geometry: mask index has wrong length");
      for (int a = 0; a < lat.n(); ++a)
        if (mi[a] < 0 || mi[a] >= lat.M()) throw std::invalid_argument("geometry: mask index out of range");
      nodes.push_back(lat.linear(mi));
    }
    return RegionMask(lat, std::move(nodes), lab);
  }
  throw std::invalid_argument("geometry: unknown shape '" + shape + "'");
}

}  // namespace

GeometryDescription parse_geometry(const std::string& json_text) {
  json doc = json::parse(json_text);
  for (auto it = doc.begin(); it != doc.end(); ++it)
    if (it.key() != "n" && it.key() != "box_len" && it.key() != "pts_per_side" && it.key() != "regions")
      throw std::invalid_argument("geometry: unknown key '" + it.key() + "'");
  GeometryDescription g;
  g.lattice = LatticeSpec(doc.at("n").get<int>(), doc.at("box_len").get<double>(), doc.at("pts_per_side").get<int>());
  for (const auto& r : doc.at("regions")) {
    RegionMask m = rasterize(g.lattice, r);
    g.regions.emplace(r.at("label").get<std::string>(), std::move(m));
  }
  g.canonical_json = doc.dump();
  g.hash = hex64(fnv1a(g.canonical_json.data(), g.canonical_json.size()));
  return g;
}

GeometryDescription load_geometry(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("geometry: cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_geometry(ss.str());
}

std::string reference_geometry_json(int pts_per_side, double box_len) {
  json doc = {
      {"n", 2},
      {"box_len", box_len},
      {"pts_per_side", pts_per_side},
      {"regions",
       json::array({
           {{"label", "Omega"}, {"shape", "rect"}, {"params", {{"lo", {-0.5, -0.5}}, {"hi", {0.5, 0.5}}}}},
           {{"label", "OmegaPrime"}, {"shape", "rect"}, {"params", {{"lo", {-0.25, -0.25}}, {"hi", {0.25, 0.25}}}}},
           {{"label", "W"}, {"shape", "rect"}, {"params", {{"lo", {0.75, -0.25}}, {"hi", {1.25, 0.25}}}}},
       })},
  };
  return doc.dump(2);
}

}  // namespace fraclab
