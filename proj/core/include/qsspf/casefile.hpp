#pragma once

// MATPOWER-style case ingestion and solution-table output.
//
// Only the power-flow subset of the format is understood: mpc.baseMVA,
// mpc.bus, mpc.gen and mpc.branch. Any other mpc.* assignment is skipped
// and reported as a warning. All quantities are stored per-unit on the
// system base, angles in radians.

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace qsspf {

enum class BusKind { Slack, PV, PQ };

std::string_view to_string(BusKind kind);

struct Bus {
  int id = 0;
  BusKind kind = BusKind::PQ;
  double p_load = 0.0;
  double q_load = 0.0;
  double g_shunt = 0.0;
  double b_shunt = 0.0;
  double v_mag_init = 1.0;
  double v_ang_init = 0.0;  // radians
  double v_base = 0.0;      // kV, informational
};

struct Branch {
  int from_bus = 0;
  int to_bus = 0;
  double r = 0.0;
  double x = 0.0;
  double b_charging = 0.0;
  double tap_ratio = 1.0;
  double phase_shift = 0.0;  // radians
  bool in_service = true;
};

struct Generator {
  int bus = 0;
  double p_gen = 0.0;
  double q_gen = 0.0;
  double v_set = 1.0;
  bool in_service = true;
};

struct NetworkCase {
  std::string name;
  double base_mva = 100.0;
  std::vector<Bus> buses;
  std::vector<Branch> branches;
  std::vector<Generator> generators;

  /// Position of bus `id` in `buses`; throws std::out_of_range if absent.
  std::size_t bus_position(int id) const;
};

/// Converged per-bus quantities, per-unit and radians.
struct BusSolution {
  int bus_id = 0;
  double v_mag = 0.0;
  double v_ang = 0.0;
  double p_inj = 0.0;
  double q_inj = 0.0;
};

class CaseParseError : public std::runtime_error {
 public:
  CaseParseError(const std::string& what, std::size_t line, std::size_t column);

  std::size_t line() const noexcept { return line_; }
  std::size_t column() const noexcept { return column_; }

 private:
  std::size_t line_;
  std::size_t column_;
};

class CaseValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Parses MATPOWER case text. Bus type 3 maps to Slack, 2 to PV, 1 to PQ.
/// MW/MVAr columns are divided by baseMVA, degree columns converted to
/// radians and a zero tap ratio is read as nominal. The result is
/// validated with validate_case(). Warnings for skipped fields are
/// appended to `warnings` when it is non-null.
NetworkCase parse_case(std::string_view text,
                       std::vector<std::string>* warnings = nullptr);

/// Reads and parses a case file. The case name defaults to the file stem
/// when the text carries no `function mpc = <name>` header.
NetworkCase read_case_file(const std::filesystem::path& path,
                           std::vector<std::string>* warnings = nullptr);

/// Throws CaseValidationError on duplicate bus ids, a slack count other
/// than one, dangling branch or generator references, a nonpositive base,
/// nonpositive initial magnitudes or taps, self-loop branches, PV buses
/// without an in-service generator, or disagreeing setpoints among
/// generators sharing a bus.
void validate_case(const NetworkCase& network);

/// Serializes a case back to MATPOWER text that parse_case() reads
/// field-for-field.
void write_case(const NetworkCase& network, std::ostream& sink);

/// Writes the CSV solution table `bus,vm_pu,va_deg,p_mw,q_mvar`, one row per
/// bus in case order, 6 significant digits. Throws std::invalid_argument
/// ("solution incomplete") unless every bus is covered, and
/// std::runtime_error if the stream fails.
void write_solution(const NetworkCase& network,
                    std::span<const BusSolution> solution, std::ostream& sink);

}  // namespace qsspf
