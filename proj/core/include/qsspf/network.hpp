#pragma once

// Network assembly: bus admittance matrix, power mismatch residual g(y),
// its analytic Jacobian g_y, and the mapping between the reduced
// Newton-flow state and full bus quantities.
//
// Matrices indexed by bus use the position of the bus in
// NetworkCase::buses. The state vector holds the angles of all PV and PQ
// buses followed by the magnitudes of all PQ buses, each group in
// ascending bus id. Residual rows follow the same order: P mismatches,
// then Q mismatches, computed minus scheduled.

#include <complex>
#include <memory>
#include <vector>

#include "qsspf/casefile.hpp"
#include "qsspf/flow_problem.hpp"
#include "qsspf/linalg.hpp"

namespace qsspf {

using Complex = std::complex<double>;
using ComplexSparseMatrix = Eigen::SparseMatrix<Complex, Eigen::ColMajor, int>;
using ComplexVector = Eigen::VectorXcd;

struct AdmittanceMatrix {
  ComplexSparseMatrix y_bus;
};

/// Pi-model assembly of in-service branches with off-nominal taps and
/// phase shifters, plus bus shunts. Throws CaseValidationError for an
/// in-service branch with zero series impedance.
AdmittanceMatrix build_admittance(const NetworkCase& network);

struct StateIndex {
  std::vector<int> angle_vars;  // bus ids, PV and PQ
  std::vector<int> mag_vars;    // bus ids, PQ
  std::size_t n() const { return angle_vars.size() + mag_vars.size(); }
};

StateIndex make_state_index(const NetworkCase& network);

struct StateVector {
  Vector values;
  std::shared_ptr<const StateIndex> index;
};

struct BusVoltages {
  Vector v_mag;
  Vector v_ang;
  ComplexVector phasors() const;
};

/// Constant fast-decoupled matrices (XB scheme): B' over the angle
/// variables ignores resistance, shunts, charging and taps; B'' over the
/// magnitude variables keeps everything except phase shift.
struct DecoupledMatrices {
  SparseMatrix b_prime;
  SparseMatrix b_double_prime;
};

/// Assembled power-flow model of one case. Immutable after construction,
/// so concurrent evaluations on distinct states are safe.
class PowerNetwork final : public FlowProblem {
 public:
  explicit PowerNetwork(NetworkCase network);

  const NetworkCase& case_data() const noexcept { return case_; }
  const AdmittanceMatrix& admittance() const noexcept { return ybus_; }
  std::shared_ptr<const StateIndex> state_index() const override { return index_; }

  std::size_t dimension() const override { return index_->n(); }
  std::size_t bus_count() const noexcept { return case_.buses.size(); }

  /// Initial state from the stored voltage profile with every non-slack
  /// angle multiplied by `angle_scale` (> 0).
  StateVector assemble_state(double angle_scale = 1.0) const;

  /// All state angles equal to the slack angle, PQ magnitudes 1 pu.
  StateVector flat_start() const;

  /// Full bus voltages for state `y`. PV and slack magnitudes come from
  /// generator setpoints, the slack angle from the case.
  BusVoltages voltages(const Vector& y) const;

  /// Reduced state from full bus voltages (inverse of voltages()).
  Vector state_from_voltages(const BusVoltages& v) const;

  /// Complex bus injections S = V .* conj(Y V), per-unit.
  ComplexVector injections(const BusVoltages& v) const;

  /// Scheduled injections: in-service generation minus load, per-unit.
  const ComplexVector& scheduled() const noexcept { return scheduled_; }

  Vector residual(const Vector& y) const override;
  void jacobian(const Vector& y, SparseMatrix& out) const override;
  SparseMatrix jacobian(const Vector& y) const;

  /// Per-bus voltages and injections at state `y`; slack P/Q and PV Q are
  /// the computed injections.
  std::vector<BusSolution> back_substitute(const Vector& y) const;

  DecoupledMatrices decoupled_matrices() const;

  /// Positions (in NetworkCase::buses) of the state variables.
  const std::vector<std::size_t>& angle_positions() const noexcept { return angle_pos_; }
  const std::vector<std::size_t>& mag_positions() const noexcept { return mag_pos_; }

 private:
  struct EntrySlots {
    int p_ang = -1;
    int p_mag = -1;
    int q_ang = -1;
    int q_mag = -1;
  };

  void build_jacobian_pattern();

  NetworkCase case_;
  AdmittanceMatrix ybus_;
  std::shared_ptr<const StateIndex> index_;
  std::vector<std::size_t> angle_pos_;
  std::vector<std::size_t> mag_pos_;
  std::vector<int> angle_row_;  // per bus: state row of its angle, -1 if none
  std::vector<int> mag_row_;    // per bus: state row of its magnitude, -1 if none
  std::vector<double> fixed_mag_;
  std::size_t slack_pos_ = 0;
  ComplexVector scheduled_;

  SparseMatrix jac_pattern_;
  std::vector<EntrySlots> ybus_slots_;  // parallel to y_bus storage
  std::vector<EntrySlots> diag_slots_;  // per bus
};

}  // namespace qsspf
