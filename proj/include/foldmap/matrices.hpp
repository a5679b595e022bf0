#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "foldmap/structure.hpp"

namespace foldmap {

/// Symmetric n x n matrix; writes go to both triangles.
class SymMatrix {
 public:
  SymMatrix() = default;
  explicit SymMatrix(std::size_t n) : n_(n), values_(n * n, 0.0) {}

  std::size_t size() const { return n_; }
  double operator()(std::size_t i, std::size_t j) const { return values_[i * n_ + j]; }
  void set(std::size_t i, std::size_t j, double v) {
    values_[i * n_ + j] = v;
    values_[j * n_ + i] = v;
  }
  std::span<const double> values() const { return values_; }

 private:
  std::size_t n_ = 0;
  std::vector<double> values_;
};

/// Dense row-major real matrix used for resampling.
struct Grid {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;

  Grid() = default;
  Grid(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), values(r * c, fill) {}
  static Grid from(const SymMatrix& m);

  double& operator()(std::size_t i, std::size_t j) { return values[i * cols + j]; }
  double operator()(std::size_t i, std::size_t j) const { return values[i * cols + j]; }
};

struct AnmParams {
  double cutoff = 15.0;
  double gamma = 1.0;
  double zero_mode_tolerance = 1e-8;
};

struct NbParams {
  double coulomb_constant = 1.0;
  double lj_epsilon = 1.0;
  double min_separation = 0.1;
  double energy_clip = 10.0;
};

inline constexpr std::size_t kMapSide = 255;
inline constexpr std::size_t kChannelCount = 3;
inline constexpr std::size_t kChannelSize = kMapSide * kMapSide;

enum class Channel { Dist = 0, Anm = 1, Nb = 2 };

/// Value range of a quantized channel.
struct ChannelRange {
  double source_lo;
  double source_hi;
  std::int16_t out_lo;
  std::int16_t out_hi;
};

inline constexpr ChannelRange kDistRange{0.0, 50.0, 0, 100};
inline constexpr ChannelRange kAnmRange{-1.0, 1.0, -100, 100};
ChannelRange nb_range(const NbParams& p);
inline constexpr std::int16_t kNbOutLimit = 1000;

struct MapStack {
  std::string domain_id;
  std::vector<std::int16_t> channels;  // DIST, ANM, NB; each 255 x 255 row-major
  bool nb_valid = false;
  bool distance_only = false;
  std::uint32_t source_atom_count = 0;
  Selection selection = Selection::CA;

  MapStack() : channels(kChannelCount * kChannelSize, 0) {}

  std::span<std::int16_t> channel(Channel c) {
    return std::span(channels).subspan(static_cast<std::size_t>(c) * kChannelSize, kChannelSize);
  }
  std::span<const std::int16_t> channel(Channel c) const {
    return std::span(channels).subspan(static_cast<std::size_t>(c) * kChannelSize, kChannelSize);
  }
  std::int16_t at(Channel c, std::size_t i, std::size_t j) const { return channel(c)[i * kMapSide + j]; }

  bool operator==(const MapStack&) const = default;
};

SymMatrix distance_matrix(std::span<const Atom> atoms);

/// Normalised cross-correlation of residue fluctuations from the
/// anisotropic network model pseudo-inverse.
SymMatrix anm_cross_correlation(std::span<const Atom> atoms, const AnmParams& p = {});

/// The 3n x 3n ANM Hessian (row-major super-elements).
Eigen::MatrixXd anm_hessian(std::span<const Atom> atoms, const AnmParams& p = {});

/// Pairwise Coulomb + 12-6 Lennard-Jones energy, clipped to +-energy_clip.
SymMatrix nb_energy_matrix(std::span<const Atom> atoms, const NbParams& p = {});

/// Clip to [lo, hi] and map linearly onto [out_lo, out_hi] without rounding.
double scale_value(double v, double lo, double hi, double out_lo, double out_hi);

/// Round and clamp a scaled value to the 16-bit channel range.
std::int16_t quantize(double v, std::int16_t out_lo, std::int16_t out_hi);

/// Row-major quantized matrix: round(scale_value(v)).
std::vector<std::int16_t> clip_and_scale(const SymMatrix& m, double lo, double hi, std::int16_t out_lo,
                                         std::int16_t out_hi);

/// Cubic-convolution resize (a = -0.5), clamped edges, pixel-centre alignment.
Grid bicubic_resize(const Grid& m, std::size_t target_rows, std::size_t target_cols);
inline Grid bicubic_resize(const Grid& m, std::size_t target = kMapSide) {
  return bicubic_resize(m, target, target);
}

/// Cubic-convolution kernel with a = -0.5.
double cubic_kernel(double x);

MapStack build_map_stack(const DomainStructure& s, Selection sel, const AnmParams& anm = {},
                         const NbParams& nb = {});

/// Stack whose three channels all hold the scaled distance map.
MapStack distance_only_stack(const DomainStructure& s, Selection sel);

/// Replace the ANM and NB channels of an existing stack with its DIST channel.
MapStack as_distance_only(const MapStack& stack);

}  // namespace foldmap
