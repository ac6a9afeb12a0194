#include "qsspf/analysis.hpp"

#include <algorithm>

#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace qsspf {

std::complex<double> pencil_eigen(const PencilSpec& spec, double h) {
  if (!(h > 0.0)) throw std::invalid_argument("step size must be positive");
  if (spec.scheme == Scheme::BEM) {
    if (spec.distortion) throw std::invalid_argument("distortion applies to FEM only");
    return {1.0 / (1.0 + h), 0.0};
  }
  double z = 1.0 - h;
  if (spec.distortion) z = (1.0 - h + spec.distortion->eps_res) * (1.0 + spec.distortion->eta);
  return {z, 0.0};
}

std::complex<double> z_to_s(std::complex<double> z, double h) {
  if (!(h > 0.0)) throw std::invalid_argument("step size must be positive");
  if (z == std::complex<double>(0.0, 0.0)) {
    return {-std::numeric_limits<double>::infinity(), 0.0};
  }
  return {std::log(std::abs(z)) / h, std::arg(z) / h};
}

StabilityInterval stability_bound(const PencilSpec& spec) {
  StabilityInterval out;
  if (spec.scheme == Scheme::BEM) return out;  // (0, inf)

  // |(1 - h + eps)(1 + eta)| < 1  <=>  |h - (1 + eps)| < 1 / |1 + eta|
  const double eps = spec.distortion ? spec.distortion->eps_res : 0.0;
  const double gain = spec.distortion ? std::abs(1.0 + spec.distortion->eta) : 1.0;
  if (gain == 0.0) return out;  // z = 0 for every h
  const double centre = 1.0 + eps;
  const double radius = 1.0 / gain;
  const double lo = std::max(0.0, centre - radius);
  const double hi = centre + radius;
  if (hi <= lo) {
    out.empty = true;
    out.hi = 0.0;
    return out;
  }
  out.lo = lo;
  out.hi = hi;
  return out;
}

PencilSpectrum region_scan(const PencilSpec& spec, const std::vector<double>& h_grid) {
  PencilSpectrum out;
  out.spec = spec;
  if (!std::is_sorted(h_grid.begin(), h_grid.end())) {
    throw std::invalid_argument("step grid must be sorted ascending");
  }
  out.points.reserve(h_grid.size());
  for (const double h : h_grid) {
    SpectrumPoint p;
    p.h = h;
    p.z = pencil_eigen(spec, h);
    p.s = z_to_s(p.z, h);
    p.stable = std::abs(p.z) < 1.0;
    out.points.push_back(p);
  }
  return out;
}

namespace {

double parse_positive(const std::string& token) {
  std::istringstream in(token);
  in.imbue(std::locale::classic());
  double v = 0.0;
  in >> v;
  if (token.empty() || in.fail() || !(in >> std::ws).eof()) {
    throw std::invalid_argument("malformed grid value '" + token + "'");
  }
  if (!(v > 0.0) || !std::isfinite(v)) {
    throw std::invalid_argument("grid values must be positive and finite");
  }
  return v;
}

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

std::vector<double> parse_grid(const std::string& spec) {
  std::vector<double> out;
  if (spec.find(':') != std::string::npos) {
    std::vector<std::string> parts;
    std::stringstream ss(spec);
    for (std::string part; std::getline(ss, part, ':');) parts.push_back(part);
    if (parts.size() != 3) throw std::invalid_argument("grid must be lo:step:hi");
    const double lo = parse_positive(parts[0]);
    const double step = parse_positive(parts[1]);
    const double hi = parse_positive(parts[2]);
    if (hi < lo) throw std::invalid_argument("grid upper bound below lower bound");
    // Tolerate round-off in (hi - lo) / step so that 0.05:0.05:3 has 60 points.
    const auto count = static_cast<std::size_t>(std::floor((hi - lo) / step + 1e-9)) + 1;
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i) out.push_back(lo + static_cast<double>(i) * step);
    return out;
  }
  std::stringstream ss(spec);
  for (std::string part; std::getline(ss, part, ',');) out.push_back(parse_positive(part));
  if (out.empty()) throw std::invalid_argument("empty grid");
  return out;
}

void write_region_csv(const PencilSpectrum& spectrum, std::ostream& sink) {
  sink << "h,z_re,z_im,s_re,s_im,stable\n";
  for (const auto& p : spectrum.points) {
    sink << num(p.h) << ',' << num(p.z.real()) << ',' << num(p.z.imag()) << ',';
    if (std::isinf(p.s.real()) && p.s.real() < 0) {
      sink << "-inf";
    } else {
      sink << num(p.s.real());
    }
    sink << ',' << num(p.s.imag()) << ',' << (p.stable ? 1 : 0) << '\n';
  }
  if (!sink) throw std::runtime_error("failed to write region table");
}

}  // namespace qsspf
