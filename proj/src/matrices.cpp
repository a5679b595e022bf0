#include "foldmap/matrices.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Eigenvalues>

#include "foldmap/error.hpp"

namespace foldmap {
namespace {

void require_atoms(std::span<const Atom> atoms, std::size_t minimum) {
  if (atoms.size() < minimum) {
    throw Error(ErrorKind::TooFewAtoms, "need at least " + std::to_string(minimum) + " atoms, got " +
                                            std::to_string(atoms.size()));
  }
}

struct Taps {
  std::array<std::size_t, 4> index;
  std::array<double, 4> weight;
};

std::vector<Taps> resample_taps(std::size_t in, std::size_t out) {
  std::vector<Taps> taps(out);
  const double scale = static_cast<double>(in) / static_cast<double>(out);
  const auto last = static_cast<long>(in) - 1;
  for (std::size_t t = 0; t < out; ++t) {
    const double src = (static_cast<double>(t) + 0.5) * scale - 0.5;
    const double base = std::floor(src);
    const double frac = src - base;
    const auto i0 = static_cast<long>(base);
    for (int k = 0; k < 4; ++k) {
      const long idx = std::clamp(i0 - 1 + k, 0L, last);
      taps[t].index[k] = static_cast<std::size_t>(idx);
      taps[t].weight[k] = cubic_kernel(frac - static_cast<double>(k - 1));
    }
  }
  return taps;
}

Grid scaled_grid(const SymMatrix& m, const ChannelRange& r) {
  Grid g = Grid::from(m);
  for (double& v : g.values) v = scale_value(v, r.source_lo, r.source_hi, r.out_lo, r.out_hi);
  return g;
}

void store_channel(MapStack& stack, Channel c, const Grid& resized, const ChannelRange& r) {
  auto dst = stack.channel(c);
  for (std::size_t i = 0; i < kChannelSize; ++i) dst[i] = quantize(resized.values[i], r.out_lo, r.out_hi);
}

template <typename Fn>
auto tagged(const std::string& domain_id, Fn&& fn) {
  try {
    return fn();
  } catch (const Error& e) {
    throw Error(e.kind(), "domain '" + domain_id + "': " + e.detail());
  }
}

}  // namespace

Grid Grid::from(const SymMatrix& m) {
  Grid g(m.size(), m.size());
  std::copy(m.values().begin(), m.values().end(), g.values.begin());
  return g;
}

ChannelRange nb_range(const NbParams& p) {
  return ChannelRange{-p.energy_clip, p.energy_clip, static_cast<std::int16_t>(-kNbOutLimit), kNbOutLimit};
}

SymMatrix distance_matrix(std::span<const Atom> atoms) {
  require_atoms(atoms, 2);
  SymMatrix d(atoms.size());
  for (std::size_t i = 0; i < atoms.size(); ++i) {
    for (std::size_t j = i + 1; j < atoms.size(); ++j) {
      d.set(i, j, (atoms[i].position - atoms[j].position).norm());
    }
  }
  return d;
}

Eigen::MatrixXd anm_hessian(std::span<const Atom> atoms, const AnmParams& p) {
  if (!(p.cutoff > 0.0) || !(p.gamma > 0.0)) throw Error(ErrorKind::BadConfig, "ANM cutoff and gamma must be positive");
  const std::size_t n = atoms.size();
  const double cutoff2 = p.cutoff * p.cutoff;
  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(3 * n, 3 * n);
  std::vector<int> degree(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const Eigen::Vector3d d = atoms[j].position - atoms[i].position;
      const double r2 = d.squaredNorm();
      if (r2 > cutoff2) continue;
      if (r2 == 0.0) {
        throw Error(ErrorKind::DegenerateGeometry,
                    "atoms " + std::to_string(atoms[i].serial) + " and " + std::to_string(atoms[j].serial) + " coincide");
      }
      const Eigen::Matrix3d block = -p.gamma * (d * d.transpose()) / r2;
      h.block<3, 3>(3 * i, 3 * j) = block;
      h.block<3, 3>(3 * j, 3 * i) = block;
      h.block<3, 3>(3 * i, 3 * i) -= block;
      h.block<3, 3>(3 * j, 3 * j) -= block;
      ++degree[i];
      ++degree[j];
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (degree[i] == 0) {
      throw Error(ErrorKind::DisconnectedNetwork, "atom " + std::to_string(atoms[i].serial) +
                                                       " has no neighbour within " + std::to_string(p.cutoff) + " A");
    }
  }
  return h;
}

SymMatrix anm_cross_correlation(std::span<const Atom> atoms, const AnmParams& p) {
  require_atoms(atoms, 2);
  const std::size_t n = atoms.size();
  const Eigen::MatrixXd hessian = anm_hessian(atoms, p);

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(hessian);
  if (solver.info() != Eigen::Success) throw Error(ErrorKind::NumericFailure, "Hessian eigendecomposition failed");
  const Eigen::VectorXd& lambda = solver.eigenvalues();
  const double largest = lambda(lambda.size() - 1);
  if (!(largest > 0.0)) throw Error(ErrorKind::DegenerateGeometry, "Hessian has no positive modes");

  // Eigenvalues ascend, so retained modes form a trailing block.
  const double threshold = p.zero_mode_tolerance * largest;
  Eigen::Index first = 0;
  while (first < lambda.size() && lambda(first) <= threshold) ++first;
  const Eigen::Index zero_modes = first;
  if (zero_modes > 6) {
    throw Error(ErrorKind::DegenerateGeometry, std::to_string(zero_modes) + " zero modes (at most 6 expected)");
  }
  const Eigen::Index kept = lambda.size() - first;
  Eigen::MatrixXd weighted = solver.eigenvectors().rightCols(kept);
  for (Eigen::Index k = 0; k < kept; ++k) weighted.col(k) /= std::sqrt(lambda(first + k));

  // trace(Sigma_ij) = sum over xyz of <row(3i+d), row(3j+d)>.
  Eigen::MatrixXd traces = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (int d = 0; d < 3; ++d) {
    Eigen::MatrixXd rows(static_cast<Eigen::Index>(n), kept);
    for (std::size_t i = 0; i < n; ++i) rows.row(static_cast<Eigen::Index>(i)) = weighted.row(static_cast<Eigen::Index>(3 * i + d));
    traces.noalias() += rows * rows.transpose();
  }

  SymMatrix c(n);
  for (std::size_t i = 0; i < n; ++i) {
    c.set(i, i, 1.0);
    for (std::size_t j = i + 1; j < n; ++j) {
      const auto ii = static_cast<Eigen::Index>(i);
      const auto jj = static_cast<Eigen::Index>(j);
      const double v = traces(ii, jj) / std::sqrt(traces(ii, ii) * traces(jj, jj));
      c.set(i, j, std::clamp(v, -1.0, 1.0));
    }
  }
  return c;
}

SymMatrix nb_energy_matrix(std::span<const Atom> atoms, const NbParams& p) {
  require_atoms(atoms, 2);
  if (!(p.min_separation > 0.0)) throw Error(ErrorKind::BadConfig, "min_separation must be positive");
  for (const Atom& a : atoms) {
    if (!a.charge || !a.radius) {
      throw Error(ErrorKind::MissingCharges, "atom " + std::to_string(a.serial) + " has no charge/radius");
    }
  }
  SymMatrix e(atoms.size());
  for (std::size_t i = 0; i < atoms.size(); ++i) {
    for (std::size_t j = i + 1; j < atoms.size(); ++j) {
      const double r = std::max((atoms[i].position - atoms[j].position).norm(), p.min_separation);
      const double sigma = 0.5 * (*atoms[i].radius + *atoms[j].radius);
      const double s6 = std::pow(sigma / r, 6);
      const double coulomb = p.coulomb_constant * *atoms[i].charge * *atoms[j].charge / r;
      const double lj = 4.0 * p.lj_epsilon * (s6 * s6 - s6);
      e.set(i, j, std::clamp(coulomb + lj, -p.energy_clip, p.energy_clip));
    }
  }
  return e;
}

double scale_value(double v, double lo, double hi, double out_lo, double out_hi) {
  const double t = (std::clamp(v, lo, hi) - lo) / (hi - lo);
  return out_lo + t * (out_hi - out_lo);
}

std::int16_t quantize(double v, std::int16_t out_lo, std::int16_t out_hi) {
  const double r = std::clamp(std::round(v), static_cast<double>(out_lo), static_cast<double>(out_hi));
  return static_cast<std::int16_t>(r);
}

std::vector<std::int16_t> clip_and_scale(const SymMatrix& m, double lo, double hi, std::int16_t out_lo,
                                         std::int16_t out_hi) {
  if (!(lo < hi)) throw Error(ErrorKind::BadConfig, "clip range requires lo < hi");
  std::vector<std::int16_t> out;
  out.reserve(m.values().size());
  for (double v : m.values()) out.push_back(quantize(scale_value(v, lo, hi, out_lo, out_hi), out_lo, out_hi));
  return out;
}

double cubic_kernel(double x) {
  constexpr double a = -0.5;
  x = std::abs(x);
  if (x <= 1.0) return ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0;
  if (x < 2.0) return ((a * x - 5.0 * a) * x + 8.0 * a) * x - 4.0 * a;
  return 0.0;
}

Grid bicubic_resize(const Grid& m, std::size_t target_rows, std::size_t target_cols) {
  if (m.rows < 2 || m.cols < 2) {
    throw Error(ErrorKind::TooSmall, "bicubic resize needs at least 2x2 input, got " + std::to_string(m.rows) + "x" +
                                         std::to_string(m.cols));
  }
  const auto col_taps = resample_taps(m.cols, target_cols);
  const auto row_taps = resample_taps(m.rows, target_rows);

  Grid horizontal(m.rows, target_cols);
  for (std::size_t i = 0; i < m.rows; ++i) {
    for (std::size_t t = 0; t < target_cols; ++t) {
      const Taps& tp = col_taps[t];
      double acc = 0.0;
      for (int k = 0; k < 4; ++k) acc += tp.weight[k] * m(i, tp.index[k]);
      horizontal(i, t) = acc;
    }
  }
  Grid out(target_rows, target_cols);
  for (std::size_t t = 0; t < target_rows; ++t) {
    const Taps& tp = row_taps[t];
    for (std::size_t j = 0; j < target_cols; ++j) {
      double acc = 0.0;
      for (int k = 0; k < 4; ++k) acc += tp.weight[k] * horizontal(tp.index[k], j);
      out(t, j) = acc;
    }
  }
  return out;
}

MapStack build_map_stack(const DomainStructure& s, Selection sel, const AnmParams& anm, const NbParams& nb) {
  return tagged(s.domain_id, [&] {
    const std::vector<Atom> atoms = select_atoms(s, sel);
    MapStack stack;
    stack.domain_id = s.domain_id;
    stack.selection = sel;
    stack.source_atom_count = static_cast<std::uint32_t>(atoms.size());

    const SymMatrix dist = distance_matrix(atoms);
    const SymMatrix corr = anm_cross_correlation(atoms, anm);
    store_channel(stack, Channel::Dist, bicubic_resize(scaled_grid(dist, kDistRange)), kDistRange);
    store_channel(stack, Channel::Anm, bicubic_resize(scaled_grid(corr, kAnmRange)), kAnmRange);
    if (s.has_charges) {
      const ChannelRange range = nb_range(nb);
      store_channel(stack, Channel::Nb, bicubic_resize(scaled_grid(nb_energy_matrix(atoms, nb), range)), range);
      stack.nb_valid = true;
    }
    return stack;
  });
}

MapStack distance_only_stack(const DomainStructure& s, Selection sel) {
  return tagged(s.domain_id, [&] {
    const std::vector<Atom> atoms = select_atoms(s, sel);
    MapStack stack;
    stack.domain_id = s.domain_id;
    stack.selection = sel;
    stack.source_atom_count = static_cast<std::uint32_t>(atoms.size());
    store_channel(stack, Channel::Dist, bicubic_resize(scaled_grid(distance_matrix(atoms), kDistRange)), kDistRange);
    return as_distance_only(stack);
  });
}

MapStack as_distance_only(const MapStack& stack) {
  MapStack out = stack;
  const auto dist = stack.channel(Channel::Dist);
  std::copy(dist.begin(), dist.end(), out.channel(Channel::Anm).begin());
  std::copy(dist.begin(), dist.end(), out.channel(Channel::Nb).begin());
  out.nb_valid = false;
  out.distance_only = true;
  return out;
}

}  // namespace foldmap
