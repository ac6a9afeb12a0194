#pragma once

// Local convergence of the linearized FEM and BEM maps around a power-flow
// solution. Both pencils are scalar multiples of the identity, so each has a
// single eigenvalue of multiplicity n, available in closed form:
//
//   FEM              z = 1 - h
//   FEM, distorted   z = (1 - h + eps_res)(1 + eta)
//   BEM              z = 1 / (1 + h)
//
// Continuous-time equivalents use the principal branch s = log(z) / h.

#include <complex>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace qsspf {

enum class Scheme { FEM, BEM };

/// Factorization imprecision `eta` and accumulated residual error `eps_res`.
struct Distortion {
  double eta = 0.0;
  double eps_res = 0.0;
};

struct PencilSpec {
  Scheme scheme = Scheme::FEM;
  std::optional<Distortion> distortion;  // FEM only
};

/// Throws std::invalid_argument when h <= 0 or a BEM spec carries a
/// distortion.
std::complex<double> pencil_eigen(const PencilSpec& spec, double h);

/// s = (ln|z| + j arg z) / h with arg in (-pi, pi]. For z = 0 the real part
/// is -infinity (dead-beat convergence).
std::complex<double> z_to_s(std::complex<double> z, double h);

/// Open interval (lo, hi) of step sizes with |z| < 1. `hi` is empty when
/// the interval is unbounded; `empty` is set when no positive step is
/// stable.
struct StabilityInterval {
  double lo = 0.0;
  std::optional<double> hi;
  bool empty = false;
};

StabilityInterval stability_bound(const PencilSpec& spec);

struct SpectrumPoint {
  double h = 0.0;
  std::complex<double> z;
  std::complex<double> s;
  bool stable = false;
  bool dead_beat() const noexcept { return z == std::complex<double>(0.0, 0.0); }
};

struct PencilSpectrum {
  PencilSpec spec;
  std::vector<SpectrumPoint> points;
};

PencilSpectrum region_scan(const PencilSpec& spec, const std::vector<double>& h_grid);

/// Parses `lo:step:hi` (inclusive, MATLAB-style) or a comma-separated list.
/// Throws std::invalid_argument on malformed input or nonpositive values.
std::vector<double> parse_grid(const std::string& spec);

/// CSV `h,z_re,z_im,s_re,s_im,stable`; a dead-beat s_re is written `-inf`.
void write_region_csv(const PencilSpectrum& spectrum, std::ostream& sink);

}  // namespace qsspf
