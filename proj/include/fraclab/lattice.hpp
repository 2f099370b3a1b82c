#pragma once

#include <Eigen/Dense>
#include <unsupported/Eigen/FFT>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace fraclab {

using Index = Eigen::Index;

/** @brief Periodic lattice of M^n nodes on the box [-L/2, L/2)^n. */
class LatticeSpec {
 public:
  LatticeSpec() = default;
  LatticeSpec(int n, double box_len, int pts_per_side) : n_(n), M_(pts_per_side) {
    if (n < 1) throw std::invalid_argument("lattice: n must be >= 1");
    if (pts_per_side < 2 || pts_per_side % 2 != 0)
      throw std::invalid_argument("lattice: pts_per_side must be an even integer >= 2");
    if (!(box_len > 0)) throw std::invalid_argument("lattice: box_len must be positive");
    h_ = box_len / M_;
    L_ = h_ * M_;
    size_ = 1;
    for (int i = 0; i < n_; ++i) size_ *= M_;
  }

  int n() const { return n_; }
  int M() const { return M_; }
  double box_len() const { return L_; }
  double h() const { return h_; }
  Index size() const { return size_; }
  double cell_volume() const { return std::pow(h_, n_); }

  /// Node coordinate along one axis; nodes sit at cell centres.
  double coord(int i) const { return -0.5 * L_ + (i + 0.5) * h_; }

  void multi_index(Index lin, int* idx) const {
    for (int a = 0; a < n_; ++a) {
      idx[a] = static_cast<int>(lin % M_);
      lin /= M_;
    }
  }
  std::vector<int> multi_index(Index lin) const {
    std::vector<int> idx(n_);
    multi_index(lin, idx.data());
    return idx;
  }
  Index linear(const int* idx) const {
    Index lin = 0;
    for (int a = n_ - 1; a >= 0; --a) lin = lin * M_ + wrap(idx[a]);
    return lin;
  }
  Index linear(const std::vector<int>& idx) const { return linear(idx.data()); }

  int wrap(int i) const {
    int r = i % M_;
    return r < 0 ? r + M_ : r;
  }
  /// Signed nearest-image offset in [-M/2, M/2).
  int signed_offset(int d) const {
    int r = wrap(d);
    return r >= M_ / 2 ? r - M_ : r;
  }

  Eigen::VectorXd position(Index lin) const {
    Eigen::VectorXd p(n_);
    Index r = lin;
    for (int a = 0; a < n_; ++a) {
      p(a) = coord(static_cast<int>(r % M_));
      r /= M_;
    }
    return p;
  }

  /// Linear index of the offset x - y (componentwise mod M).
  Index offset_index(Index x, Index y) const {
    Index lin = 0, stride = 1;
    for (int a = 0; a < n_; ++a) {
      int dx = static_cast<int>(x % M_) - static_cast<int>(y % M_);
      lin += wrap(dx) * stride;
      stride *= M_;
      x /= M_;
      y /= M_;
    }
    return lin;
  }

  /// Torus (nearest image) distance of an offset given by its linear index.
  double offset_length(Index off) const {
    double r2 = 0;
    for (int a = 0; a < n_; ++a) {
      int d = signed_offset(static_cast<int>(off % M_));
      double dd = std::abs(d) * h_;
      r2 += dd * dd;
      off /= M_;
    }
    return std::sqrt(r2);
  }
  double torus_distance(Index x, Index y) const { return offset_length(offset_index(x, y)); }

  /// Angular frequency 2πk/L for DFT index i.
  double frequency(int i) const { return 2.0 * M_PI * signed_offset(i) / L_; }

  /// |ξ|^2 for every DFT index, in linear (axis 0 fastest) order.
  Eigen::VectorXd xi_squared() const {
    Eigen::VectorXd out(size_);
    std::vector<int> idx(n_);
    for (Index lin = 0; lin < size_; ++lin) {
      multi_index(lin, idx.data());
      double s = 0;
      for (int a = 0; a < n_; ++a) {
        double f = frequency(idx[a]);
        s += f * f;
      }
      out(lin) = s;
    }
    return out;
  }

  bool operator==(const LatticeSpec& o) const { return n_ == o.n_ && M_ == o.M_ && L_ == o.L_; }
  bool operator!=(const LatticeSpec& o) const { return !(*this == o); }

 private:
  int n_ = 0;
  int M_ = 0;
  double L_ = 0;
  double h_ = 0;
  Index size_ = 0;
};

enum class RegionLabel { Omega, OmegaPrime, W, Custom };

inline std::string to_string(RegionLabel l) {
  switch (l) {
    case RegionLabel::Omega: return "Omega";
    case RegionLabel::OmegaPrime: return "OmegaPrime";
    case RegionLabel::W: return "W";
    default: return "custom";
  }
}

/** @brief Sorted set of lattice nodes standing in for an open set. */
class RegionMask {
 public:
  RegionMask() = default;
  RegionMask(const LatticeSpec& lattice, std::vector<Index> nodes, RegionLabel label = RegionLabel::Custom)
      : lattice_(lattice), nodes_(std::move(nodes)), label_(label) {
    std::sort(nodes_.begin(), nodes_.end());
    nodes_.erase(std::unique(nodes_.begin(), nodes_.end()), nodes_.end());
    if (nodes_.empty()) throw std::invalid_argument("region mask must be nonempty");
    for (Index v : nodes_)
      if (v < 0 || v >= lattice_.size()) throw std::invalid_argument("region node out of range");
  }

  const LatticeSpec& lattice() const { return lattice_; }
  const std::vector<Index>& nodes() const { return nodes_; }
  RegionLabel label() const { return label_; }
  Index size() const { return static_cast<Index>(nodes_.size()); }
  bool contains(Index v) const { return std::binary_search(nodes_.begin(), nodes_.end(), v); }
  /// Position of node v within nodes(), or -1.
  Index position_of(Index v) const {
    auto it = std::lower_bound(nodes_.begin(), nodes_.end(), v);
    return (it != nodes_.end() && *it == v) ? Index(it - nodes_.begin()) : -1;
  }
  bool subset_of(const RegionMask& o) const {
    return std::includes(o.nodes_.begin(), o.nodes_.end(), nodes_.begin(), nodes_.end());
  }
  bool disjoint_from(const RegionMask& o) const {
    auto a = nodes_.begin(), b = o.nodes_.begin();
    while (a != nodes_.end() && b != o.nodes_.end()) {
      if (*a == *b) return false;
      if (*a < *b) ++a; else ++b;
    }
    return true;
  }

  static RegionMask full(const LatticeSpec& lat) {
    std::vector<Index> all(lat.size());
    for (Index i = 0; i < lat.size(); ++i) all[i] = i;
    return RegionMask(lat, std::move(all));
  }
  /// Nodes whose centre lies in the axis-aligned box [lo, hi].
  static RegionMask rect(const LatticeSpec& lat, const std::vector<double>& lo, const std::vector<double>& hi,
                         RegionLabel label = RegionLabel::Custom) {
    std::vector<Index> nodes;
    for (Index v = 0; v < lat.size(); ++v) {
      Eigen::VectorXd p = lat.position(v);
      bool in = true;
      for (int a = 0; a < lat.n() && in; ++a) in = p(a) >= lo.at(a) && p(a) <= hi.at(a);
      if (in) nodes.push_back(v);
    }
    return RegionMask(lat, std::move(nodes), label);
  }
  static RegionMask ball(const LatticeSpec& lat, const std::vector<double>& centre, double radius,
                         RegionLabel label = RegionLabel::Custom) {
    std::vector<Index> nodes;
    for (Index v = 0; v < lat.size(); ++v) {
      Eigen::VectorXd p = lat.position(v);
      double r2 = 0;
      for (int a = 0; a < lat.n(); ++a) r2 += (p(a) - centre.at(a)) * (p(a) - centre.at(a));
      if (r2 <= radius * radius) nodes.push_back(v);
    }
    return RegionMask(lat, std::move(nodes), label);
  }

 private:
  LatticeSpec lattice_;
  std::vector<Index> nodes_;
  RegionLabel label_ = RegionLabel::Custom;
};

inline RegionMask region_union(const RegionMask& a, const RegionMask& b) {
  std::vector<Index> all(a.nodes());
  all.insert(all.end(), b.nodes().begin(), b.nodes().end());
  return RegionMask(a.lattice(), std::move(all));
}

/** @brief Real field sampled on every lattice node. */
template <typename Scalar>
struct GridField {
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  LatticeSpec lattice;
  Vector values;
  std::optional<RegionMask> support_hint;

  GridField() = default;
  explicit GridField(const LatticeSpec& lat) : lattice(lat), values(Vector::Zero(lat.size())) {}
  GridField(const LatticeSpec& lat, Vector v, std::optional<RegionMask> hint = std::nullopt)
      : lattice(lat), values(std::move(v)), support_hint(std::move(hint)) {
    if (values.size() != lat.size()) throw std::invalid_argument("field size does not match lattice");
    if (!values.allFinite()) throw std::invalid_argument("field values must be finite");
    if (support_hint)
      for (Index i = 0; i < values.size(); ++i)
        if (values(i) != Scalar(0) && !support_hint->contains(i))
          throw std::invalid_argument("field does not vanish outside its support hint");
  }

  Scalar operator()(Index i) const { return values(i); }

  template <typename Fn>
  static GridField sample(const LatticeSpec& lat, Fn&& fn) {
    Vector v(lat.size());
    for (Index i = 0; i < lat.size(); ++i) v(i) = static_cast<Scalar>(fn(lat.position(i)));
    return GridField(lat, std::move(v));
  }

  /// Copy of this field with values outside the region set to zero.
  GridField restricted(const RegionMask& region) const {
    Vector v = Vector::Zero(values.size());
    for (Index x : region.nodes()) v(x) = values(x);
    return GridField(lattice, std::move(v), region);
  }
  Vector on(const RegionMask& region) const {
    Vector v(region.size());
    for (Index k = 0; k < region.size(); ++k) v(k) = values(region.nodes()[k]);
    return v;
  }
};

using Field = GridField<double>;

/// Field supported on a region with the given nodal values.
inline Field field_from_region(const RegionMask& region, const Eigen::VectorXd& vals) {
  Eigen::VectorXd v = Eigen::VectorXd::Zero(region.lattice().size());
  for (Index k = 0; k < region.size(); ++k) v(region.nodes()[k]) = vals(k);
  return Field(region.lattice(), std::move(v), region);
}

/** @brief In-place n-dimensional DFT along every axis (inverse is scaled by 1/M^n). */
template <typename Scalar>
void fft_nd(const LatticeSpec& lat, std::vector<std::complex<Scalar>>& data, bool inverse) {
  const int M = lat.M();
  Eigen::FFT<Scalar> fft;
  std::vector<std::complex<Scalar>> line(M), out(M);
  Index stride = 1;
  for (int a = 0; a < lat.n(); ++a) {
    const Index block = stride * M;
    for (Index base = 0; base < lat.size(); base += block) {
      for (Index off = 0; off < stride; ++off) {
        for (int i = 0; i < M; ++i) line[i] = data[base + off + i * stride];
        if (inverse) fft.inv(out, line); else fft.fwd(out, line);
        for (int i = 0; i < M; ++i) data[base + off + i * stride] = out[i];
      }
    }
    stride = block;
  }
}

/** @brief Apply a real Fourier symbol (indexed like xi_squared) to a real field. */
template <typename Scalar, typename Derived>
GridField<Scalar> apply_symbol(const GridField<Scalar>& u, const Eigen::DenseBase<Derived>& symbol) {
  const LatticeSpec& lat = u.lattice;
  std::vector<std::complex<Scalar>> data(lat.size());
  for (Index i = 0; i < lat.size(); ++i) data[i] = u.values(i);
  fft_nd(lat, data, false);
  for (Index i = 0; i < lat.size(); ++i) data[i] *= static_cast<Scalar>(symbol(i));
  fft_nd(lat, data, true);
  typename GridField<Scalar>::Vector v(lat.size());
  for (Index i = 0; i < lat.size(); ++i) v(i) = data[i].real();
  return GridField<Scalar>(lat, std::move(v));
}

/// Spatial kernel g with (P u)(x) = Σ_y g(x - y) u(y) for the symbol P.
template <typename Derived>
Eigen::VectorXd symbol_kernel(const LatticeSpec& lat, const Eigen::DenseBase<Derived>& symbol) {
  Field delta(lat);
  delta.values(0) = 1.0;
  return apply_symbol(delta, symbol).values;
}

/// FNV-1a hash used to tag serialized artefacts.
inline std::uint64_t fnv1a(const void* data, std::size_t len, std::uint64_t h = 1469598103934665603ULL) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 1099511628211ULL;
  }
  return h;
}
inline std::uint64_t hash_field(const Field& f) {
  return fnv1a(f.values.data(), sizeof(double) * static_cast<std::size_t>(f.values.size()));
}
inline std::string hex64(std::uint64_t h) {
  static const char* digits = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i, h >>= 4) s[i] = digits[h & 0xF];
  return s;
}

}  // namespace fraclab
