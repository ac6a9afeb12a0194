#include "qsspf/network.hpp"

#include <algorithm>
#include <map>
#include <numeric>

namespace qsspf {

namespace {

constexpr Complex kJ{0.0, 1.0};

int slot_of(const SparseMatrix& m, int row, int col) {
  const int* inner = m.innerIndexPtr();
  const int begin = m.outerIndexPtr()[col];
  const int end = m.outerIndexPtr()[col + 1];
  const int* hit = std::lower_bound(inner + begin, inner + end, row);
  if (hit == inner + end || *hit != row) return -1;
  return static_cast<int>(hit - inner);
}

// -Im(Y) restricted to the buses in `positions`, in that order.
SparseMatrix negative_susceptance(const ComplexSparseMatrix& y,
                                  const std::vector<std::size_t>& positions,
                                  std::size_t bus_count) {
  std::vector<int> map(bus_count, -1);
  for (std::size_t r = 0; r < positions.size(); ++r) map[positions[r]] = static_cast<int>(r);
  std::vector<Eigen::Triplet<double>> entries;
  for (int k = 0; k < y.outerSize(); ++k) {
    for (ComplexSparseMatrix::InnerIterator it(y, k); it; ++it) {
      const int r = map[static_cast<std::size_t>(it.row())];
      const int c = map[static_cast<std::size_t>(it.col())];
      if (r >= 0 && c >= 0) entries.emplace_back(r, c, -it.value().imag());
    }
  }
  const auto n = static_cast<int>(positions.size());
  SparseMatrix b(n, n);
  b.setFromTriplets(entries.begin(), entries.end());
  b.makeCompressed();
  return b;
}

}  // namespace

AdmittanceMatrix build_admittance(const NetworkCase& network) {
  const auto n = static_cast<int>(network.buses.size());
  std::map<int, int> pos;
  for (int i = 0; i < n; ++i) pos[network.buses[static_cast<std::size_t>(i)].id] = i;

  std::vector<Eigen::Triplet<Complex>> entries;
  entries.reserve(network.branches.size() * 4 + network.buses.size());
  for (const auto& br : network.branches) {
    if (!br.in_service) continue;
    if (br.r == 0.0 && br.x == 0.0) {
      throw CaseValidationError("branch " + std::to_string(br.from_bus) + "-" +
                                std::to_string(br.to_bus) +
                                " has zero series impedance");
    }
    const Complex ys = 1.0 / Complex(br.r, br.x);
    const Complex tap = std::polar(br.tap_ratio, br.phase_shift);
    const Complex ytt = ys + kJ * (br.b_charging / 2.0);
    const Complex yff = ytt / (br.tap_ratio * br.tap_ratio);
    const Complex yft = -ys / std::conj(tap);
    const Complex ytf = -ys / tap;
    const int f = pos.at(br.from_bus);
    const int t = pos.at(br.to_bus);
    entries.emplace_back(f, f, yff);
    entries.emplace_back(f, t, yft);
    entries.emplace_back(t, f, ytf);
    entries.emplace_back(t, t, ytt);
  }
  for (int i = 0; i < n; ++i) {
    const auto& b = network.buses[static_cast<std::size_t>(i)];
    if (b.g_shunt != 0.0 || b.b_shunt != 0.0) {
      entries.emplace_back(i, i, Complex(b.g_shunt, b.b_shunt));
    }
  }
  AdmittanceMatrix out;
  out.y_bus.resize(n, n);
  out.y_bus.setFromTriplets(entries.begin(), entries.end());
  out.y_bus.makeCompressed();
  return out;
}

StateIndex make_state_index(const NetworkCase& network) {
  StateIndex idx;
  for (const auto& b : network.buses) {
    if (b.kind != BusKind::Slack) idx.angle_vars.push_back(b.id);
    if (b.kind == BusKind::PQ) idx.mag_vars.push_back(b.id);
  }
  std::sort(idx.angle_vars.begin(), idx.angle_vars.end());
  std::sort(idx.mag_vars.begin(), idx.mag_vars.end());
  return idx;
}

ComplexVector BusVoltages::phasors() const {
  ComplexVector v(v_mag.size());
  for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = std::polar(v_mag[i], v_ang[i]);
  return v;
}

PowerNetwork::PowerNetwork(NetworkCase network) : case_(std::move(network)) {
  validate_case(case_);
  ybus_ = build_admittance(case_);
  index_ = std::make_shared<const StateIndex>(make_state_index(case_));

  const std::size_t nb = case_.buses.size();
  angle_row_.assign(nb, -1);
  mag_row_.assign(nb, -1);
  for (const int id : index_->angle_vars) {
    const std::size_t p = case_.bus_position(id);
    angle_row_[p] = static_cast<int>(angle_pos_.size());
    angle_pos_.push_back(p);
  }
  for (const int id : index_->mag_vars) {
    const std::size_t p = case_.bus_position(id);
    mag_row_[p] = static_cast<int>(angle_pos_.size() + mag_pos_.size());
    mag_pos_.push_back(p);
  }

  // Generators on a bus aggregate; setpoint agreement is checked by
  // validate_case.
  scheduled_ = ComplexVector::Zero(static_cast<Eigen::Index>(nb));
  fixed_mag_.assign(nb, 0.0);
  std::vector<bool> has_setpoint(nb, false);
  for (const auto& g : case_.generators) {
    if (!g.in_service) continue;
    const std::size_t p = case_.bus_position(g.bus);
    scheduled_[static_cast<Eigen::Index>(p)] += Complex(g.p_gen, g.q_gen);
    fixed_mag_[p] = g.v_set;
    has_setpoint[p] = true;
  }
  for (std::size_t p = 0; p < nb; ++p) {
    const auto& b = case_.buses[p];
    scheduled_[static_cast<Eigen::Index>(p)] -= Complex(b.p_load, b.q_load);
    if (!has_setpoint[p]) fixed_mag_[p] = b.v_mag_init;
    if (b.kind == BusKind::Slack) slack_pos_ = p;
  }

  build_jacobian_pattern();
}

void PowerNetwork::build_jacobian_pattern() {
  const auto n = static_cast<int>(dimension());
  std::vector<Eigen::Triplet<double>> entries;
  auto add_block = [&](std::size_t i, std::size_t k) {
    const int rows[2] = {angle_row_[i], mag_row_[i]};
    const int cols[2] = {angle_row_[k], mag_row_[k]};
    for (const int r : rows) {
      for (const int c : cols) {
        if (r >= 0 && c >= 0) entries.emplace_back(r, c, 0.0);
      }
    }
  };
  const auto& y = ybus_.y_bus;
  for (int k = 0; k < y.outerSize(); ++k) {
    for (ComplexSparseMatrix::InnerIterator it(y, k); it; ++it) {
      add_block(static_cast<std::size_t>(it.row()), static_cast<std::size_t>(it.col()));
    }
  }
  for (std::size_t i = 0; i < bus_count(); ++i) add_block(i, i);

  jac_pattern_.resize(n, n);
  jac_pattern_.setFromTriplets(entries.begin(), entries.end());
  jac_pattern_.makeCompressed();

  auto slots_for = [&](std::size_t i, std::size_t k) {
    EntrySlots s;
    const int pr = angle_row_[i], qr = mag_row_[i];
    const int ac = angle_row_[k], mc = mag_row_[k];
    if (pr >= 0 && ac >= 0) s.p_ang = slot_of(jac_pattern_, pr, ac);
    if (pr >= 0 && mc >= 0) s.p_mag = slot_of(jac_pattern_, pr, mc);
    if (qr >= 0 && ac >= 0) s.q_ang = slot_of(jac_pattern_, qr, ac);
    if (qr >= 0 && mc >= 0) s.q_mag = slot_of(jac_pattern_, qr, mc);
    return s;
  };
  ybus_slots_.clear();
  ybus_slots_.reserve(static_cast<std::size_t>(y.nonZeros()));
  for (int k = 0; k < y.outerSize(); ++k) {
    for (ComplexSparseMatrix::InnerIterator it(y, k); it; ++it) {
      ybus_slots_.push_back(
          slots_for(static_cast<std::size_t>(it.row()), static_cast<std::size_t>(it.col())));
    }
  }
  diag_slots_.resize(bus_count());
  for (std::size_t i = 0; i < bus_count(); ++i) diag_slots_[i] = slots_for(i, i);
}

StateVector PowerNetwork::assemble_state(double angle_scale) const {
  if (!(angle_scale > 0.0)) throw std::invalid_argument("angle_scale must be positive");
  StateVector s;
  s.index = index_;
  s.values.resize(static_cast<Eigen::Index>(dimension()));
  Eigen::Index r = 0;
  for (const std::size_t p : angle_pos_) s.values[r++] = angle_scale * case_.buses[p].v_ang_init;
  for (const std::size_t p : mag_pos_) s.values[r++] = case_.buses[p].v_mag_init;
  return s;
}

StateVector PowerNetwork::flat_start() const {
  StateVector s;
  s.index = index_;
  s.values.resize(static_cast<Eigen::Index>(dimension()));
  const auto na = static_cast<Eigen::Index>(angle_pos_.size());
  s.values.head(na).setConstant(case_.buses[slack_pos_].v_ang_init);
  s.values.tail(s.values.size() - na).setOnes();
  return s;
}

BusVoltages PowerNetwork::voltages(const Vector& y) const {
  if (static_cast<std::size_t>(y.size()) != dimension()) {
    throw std::invalid_argument("state dimension mismatch");
  }
  const auto nb = static_cast<Eigen::Index>(bus_count());
  BusVoltages v;
  v.v_mag.resize(nb);
  v.v_ang.resize(nb);
  for (std::size_t p = 0; p < bus_count(); ++p) {
    v.v_mag[static_cast<Eigen::Index>(p)] = fixed_mag_[p];
    v.v_ang[static_cast<Eigen::Index>(p)] = case_.buses[p].v_ang_init;
  }
  Eigen::Index r = 0;
  for (const std::size_t p : angle_pos_) v.v_ang[static_cast<Eigen::Index>(p)] = y[r++];
  for (const std::size_t p : mag_pos_) v.v_mag[static_cast<Eigen::Index>(p)] = y[r++];
  return v;
}

Vector PowerNetwork::state_from_voltages(const BusVoltages& v) const {
  Vector y(static_cast<Eigen::Index>(dimension()));
  Eigen::Index r = 0;
  for (const std::size_t p : angle_pos_) y[r++] = v.v_ang[static_cast<Eigen::Index>(p)];
  for (const std::size_t p : mag_pos_) y[r++] = v.v_mag[static_cast<Eigen::Index>(p)];
  return y;
}

ComplexVector PowerNetwork::injections(const BusVoltages& v) const {
  const ComplexVector phasor = v.phasors();
  const ComplexVector current = ybus_.y_bus * phasor;
  return phasor.cwiseProduct(current.conjugate());
}

Vector PowerNetwork::residual(const Vector& y) const {
  const ComplexVector mismatch = injections(voltages(y)) - scheduled_;
  Vector g(static_cast<Eigen::Index>(dimension()));
  Eigen::Index r = 0;
  for (const std::size_t p : angle_pos_) g[r++] = mismatch[static_cast<Eigen::Index>(p)].real();
  for (const std::size_t p : mag_pos_) g[r++] = mismatch[static_cast<Eigen::Index>(p)].imag();
  return g;
}

SparseMatrix PowerNetwork::jacobian(const Vector& y) const {
  SparseMatrix out;
  jacobian(y, out);
  return out;
}

void PowerNetwork::jacobian(const Vector& y, SparseMatrix& out) const {
  const BusVoltages bv = voltages(y);
  const ComplexVector v = bv.phasors();
  const ComplexVector current = ybus_.y_bus * v;

  if (out.rows() != jac_pattern_.rows() || out.nonZeros() != jac_pattern_.nonZeros() ||
      !out.isCompressed()) {
    out = jac_pattern_;
  }
  double* values = out.valuePtr();
  std::fill(values, values + out.nonZeros(), 0.0);

  auto scatter = [values](const EntrySlots& s, Complex d_ang, Complex d_mag) {
    if (s.p_ang >= 0) values[s.p_ang] += d_ang.real();
    if (s.q_ang >= 0) values[s.q_ang] += d_ang.imag();
    if (s.p_mag >= 0) values[s.p_mag] += d_mag.real();
    if (s.q_mag >= 0) values[s.q_mag] += d_mag.imag();
  };

  // dS_i/dtheta_k = -j V_i conj(Y_ik V_k),  dS_i/d|V_k| = V_i conj(Y_ik V_k) / |V_k|
  // plus the diagonal terms j V_i conj(I_i) and V_i conj(I_i) / |V_i|.
  const auto& ybus = ybus_.y_bus;
  std::size_t slot = 0;
  for (int k = 0; k < ybus.outerSize(); ++k) {
    for (ComplexSparseMatrix::InnerIterator it(ybus, k); it; ++it, ++slot) {
      const auto i = it.row();
      const Complex t = v[i] * std::conj(it.value() * v[k]);
      scatter(ybus_slots_[slot], -kJ * t, t / bv.v_mag[k]);
    }
  }
  for (std::size_t p = 0; p < bus_count(); ++p) {
    const auto i = static_cast<Eigen::Index>(p);
    const Complex t = v[i] * std::conj(current[i]);
    scatter(diag_slots_[p], kJ * t, t / bv.v_mag[i]);
  }
}

std::vector<BusSolution> PowerNetwork::back_substitute(const Vector& y) const {
  const BusVoltages v = voltages(y);
  const ComplexVector s = injections(v);
  std::vector<BusSolution> out;
  out.reserve(bus_count());
  for (std::size_t p = 0; p < bus_count(); ++p) {
    const auto i = static_cast<Eigen::Index>(p);
    out.push_back({case_.buses[p].id, v.v_mag[i], v.v_ang[i], s[i].real(), s[i].imag()});
  }
  return out;
}

DecoupledMatrices PowerNetwork::decoupled_matrices() const {
  NetworkCase angle_model = case_;
  for (auto& b : angle_model.buses) {
    b.g_shunt = 0.0;
    b.b_shunt = 0.0;
  }
  for (auto& br : angle_model.branches) {
    br.r = 0.0;
    br.b_charging = 0.0;
    br.tap_ratio = 1.0;
    br.phase_shift = 0.0;
  }
  NetworkCase magnitude_model = case_;
  for (auto& br : magnitude_model.branches) br.phase_shift = 0.0;

  DecoupledMatrices out;
  out.b_prime = negative_susceptance(build_admittance(angle_model).y_bus, angle_pos_, bus_count());
  out.b_double_prime =
      negative_susceptance(build_admittance(magnitude_model).y_bus, mag_pos_, bus_count());
  return out;
}

}  // namespace qsspf
