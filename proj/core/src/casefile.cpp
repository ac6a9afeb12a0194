#include "qsspf/casefile.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <numbers>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>

namespace qsspf {

namespace {

constexpr double kDegToRad = std::numbers::pi / 180.0;
constexpr double kSetpointAgreement = 1e-6;

// Minimum column counts for the MATPOWER tables we consume.
constexpr std::size_t kBusColumns = 13;
constexpr std::size_t kGenColumns = 8;
constexpr std::size_t kBranchColumns = 11;

struct MatrixRow {
  std::vector<double> values;
  std::size_t line = 0;
};

struct Matrix {
  std::vector<MatrixRow> rows;
  std::size_t line = 0;
};

// Character cursor over the case text. Tracks line/column (1-based) for
// diagnostics and treats `%` through end-of-line as whitespace.
class Cursor {
 public:
  explicit Cursor(std::string_view text) : text_(text) {}

  bool done() const { return pos_ >= text_.size(); }
  char peek() const { return done() ? '\0' : text_[pos_]; }
  std::size_t line() const { return line_; }
  std::size_t column() const { return column_; }

  char get() {
    const char c = text_[pos_++];
    if (c == '\n') {
      ++line_;
      column_ = 1;
    } else {
      ++column_;
    }
    return c;
  }

  // Skips blanks and comments. Newlines are skipped only when requested so
  // that matrix rows can use them as terminators.
  void skip_blanks(bool skip_newlines) {
    while (!done()) {
      const char c = peek();
      if (c == '%') {
        while (!done() && peek() != '\n') get();
      } else if (c == '.' && text_.substr(pos_, 3) == "...") {
        // line continuation
        while (!done() && peek() != '\n') get();
        if (!done()) get();
      } else if (c == '\n') {
        if (!skip_newlines) return;
        get();
      } else if (std::isspace(static_cast<unsigned char>(c))) {
        get();
      } else {
        return;
      }
    }
  }

  void skip_line() {
    while (!done() && peek() != '\n') get();
  }

  std::string identifier() {
    std::string out;
    while (!done()) {
      const char c = peek();
      if (std::isalnum(static_cast<unsigned char>(c)) || c == '_' ||
          (c == '.' && !out.empty())) {
        out.push_back(get());
      } else {
        break;
      }
    }
    return out;
  }

  [[noreturn]] void fail(const std::string& message) const {
    throw CaseParseError(message, line_, column_);
  }

  void expect(char c) {
    if (peek() != c) {
      fail(std::string("expected '") + c + "'");
    }
    get();
  }

  double number() {
    const std::size_t start_line = line_;
    const std::size_t start_col = column_;
    std::string token;
    if (peek() == '+' || peek() == '-') token.push_back(get());
    if (std::isalpha(static_cast<unsigned char>(peek()))) {
      const std::string word = identifier();
      const bool negative = !token.empty() && token[0] == '-';
      if (word == "Inf" || word == "inf") {
        return negative ? -std::numeric_limits<double>::infinity()
                        : std::numeric_limits<double>::infinity();
      }
      if (word == "NaN" || word == "nan") {
        return std::numeric_limits<double>::quiet_NaN();
      }
      throw CaseParseError("unexpected identifier '" + word + "' in matrix",
                           start_line, start_col);
    }
    while (!done()) {
      const char c = peek();
      const bool exponent_sign =
          (c == '+' || c == '-') && !token.empty() &&
          (token.back() == 'e' || token.back() == 'E');
      if (std::isdigit(static_cast<unsigned char>(c)) || c == '.' || c == 'e' ||
          c == 'E' || exponent_sign) {
        token.push_back(get());
      } else {
        break;
      }
    }
    std::istringstream in(token);
    in.imbue(std::locale::classic());
    double value = 0.0;
    in >> value;
    if (token.empty() || in.fail() || !in.eof()) {
      throw CaseParseError("malformed number '" + token + "'", start_line,
                           start_col);
    }
    return value;
  }

 private:
  std::string_view text_;
  std::size_t pos_ = 0;
  std::size_t line_ = 1;
  std::size_t column_ = 1;
};

Matrix parse_matrix(Cursor& cur) {
  Matrix m;
  m.line = cur.line();
  cur.expect('[');
  MatrixRow row;
  auto flush = [&] {
    if (!row.values.empty()) m.rows.push_back(std::move(row));
    row = MatrixRow{};
  };
  while (true) {
    cur.skip_blanks(false);
    if (cur.done()) cur.fail("unterminated matrix (missing ']')");
    const char c = cur.peek();
    if (c == ']') {
      cur.get();
      flush();
      return m;
    }
    if (c == ';' || c == '\n') {
      cur.get();
      flush();
      continue;
    }
    if (c == ',') {
      cur.get();
      continue;
    }
    if (row.values.empty()) row.line = cur.line();
    row.values.push_back(cur.number());
  }
}

// Skips a value we do not interpret: a bracketed/braced block, a quoted
// string or a scalar, up to the terminating ';' or newline.
void skip_value(Cursor& cur) {
  int depth = 0;
  bool in_string = false;
  while (!cur.done()) {
    const char c = cur.peek();
    if (in_string) {
      cur.get();
      if (c == '\'') in_string = false;
      continue;
    }
    if (c == '%') {
      cur.skip_line();
      continue;
    }
    if (c == '\'') {
      in_string = true;
    } else if (c == '[' || c == '{') {
      ++depth;
    } else if (c == ']' || c == '}') {
      --depth;
    } else if ((c == ';' || c == '\n') && depth == 0) {
      return;
    }
    cur.get();
  }
  if (depth != 0) cur.fail("unterminated block");
}

void require_columns(const Matrix& m, std::size_t count, const char* table) {
  for (const auto& row : m.rows) {
    if (row.values.size() < count) {
      throw CaseParseError(std::string("mpc.") + table + " row has " +
                               std::to_string(row.values.size()) +
                               " columns, expected at least " +
                               std::to_string(count),
                           row.line, 1);
    }
  }
}

int to_id(double v, std::size_t line, const char* what) {
  if (!std::isfinite(v) || v != std::floor(v) || v < 1 ||
      v > std::numeric_limits<int>::max()) {
    throw CaseParseError(std::string("invalid ") + what + " " + std::to_string(v),
                         line, 1);
  }
  return static_cast<int>(v);
}

BusKind to_kind(double v, std::size_t line) {
  if (v == 3) return BusKind::Slack;
  if (v == 2) return BusKind::PV;
  if (v == 1) return BusKind::PQ;
  throw CaseParseError("unsupported bus type " + std::to_string(v), line, 1);
}

double kind_code(BusKind kind) {
  switch (kind) {
    case BusKind::Slack: return 3;
    case BusKind::PV: return 2;
    case BusKind::PQ: return 1;
  }
  return 1;
}

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string num6(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  // Keep the table free of "-0".
  if (std::string_view(buf) == "-0") return "0";
  return buf;
}

}  // namespace

std::string_view to_string(BusKind kind) {
  switch (kind) {
    case BusKind::Slack: return "slack";
    case BusKind::PV: return "pv";
    case BusKind::PQ: return "pq";
  }
  return "?";
}

std::size_t NetworkCase::bus_position(int id) const {
  for (std::size_t i = 0; i < buses.size(); ++i) {
    if (buses[i].id == id) return i;
  }
  throw std::out_of_range("no bus with id " + std::to_string(id));
}

CaseParseError::CaseParseError(const std::string& what, std::size_t line,
                               std::size_t column)
    : std::runtime_error("line " + std::to_string(line) + ", column " +
                         std::to_string(column) + ": " + what),
      line_(line),
      column_(column) {}

NetworkCase parse_case(std::string_view text, std::vector<std::string>* warnings) {
  Cursor cur(text);
  NetworkCase out;
  std::optional<double> base_mva;
  std::optional<Matrix> bus_m, gen_m, branch_m;

  auto warn = [&](std::string msg) {
    if (warnings) warnings->push_back(std::move(msg));
  };

  while (true) {
    cur.skip_blanks(true);
    if (cur.done()) break;
    const char c = cur.peek();
    if (c == ';' || c == ',') {
      cur.get();
      continue;
    }
    if (!std::isalpha(static_cast<unsigned char>(c))) {
      cur.fail(std::string("unexpected character '") + c + "'");
    }
    const std::size_t stmt_line = cur.line();
    const std::size_t stmt_col = cur.column();
    const std::string ident = cur.identifier();

    if (ident == "function") {
      // function mpc = <name>
      cur.skip_blanks(false);
      std::string lhs = cur.identifier();
      cur.skip_blanks(false);
      if (cur.peek() == '=') {
        cur.get();
        cur.skip_blanks(false);
        out.name = cur.identifier();
      } else {
        out.name = lhs;
      }
      cur.skip_line();
      continue;
    }
    if (ident == "end" || ident == "return") continue;

    cur.skip_blanks(false);
    if (cur.peek() != '=') {
      throw CaseParseError("expected assignment after '" + ident + "'",
                           stmt_line, stmt_col);
    }
    cur.get();
    cur.skip_blanks(false);

    if (ident == "mpc.baseMVA") {
      base_mva = cur.number();
    } else if (ident == "mpc.bus" || ident == "mpc.gen" || ident == "mpc.branch") {
      if (cur.peek() != '[') cur.fail("expected '[' to open " + ident);
      Matrix m = parse_matrix(cur);
      if (ident == "mpc.bus") {
        bus_m = std::move(m);
      } else if (ident == "mpc.gen") {
        gen_m = std::move(m);
      } else {
        branch_m = std::move(m);
      }
    } else {
      // Standard fields that carry nothing needed for power flow pass silently.
      if (ident != "mpc.version" && ident != "mpc.gencost" && ident != "mpc.bus_name") {
        warn("line " + std::to_string(stmt_line) + ": ignoring '" + ident + "'");
      }
      skip_value(cur);
    }
    cur.skip_blanks(false);
    if (cur.peek() == ';') cur.get();
  }

  if (!base_mva) throw CaseParseError("missing mpc.baseMVA", cur.line(), cur.column());
  if (!bus_m) throw CaseParseError("missing mpc.bus", cur.line(), cur.column());
  if (!gen_m) throw CaseParseError("missing mpc.gen", cur.line(), cur.column());
  if (!branch_m) throw CaseParseError("missing mpc.branch", cur.line(), cur.column());
  if (!(*base_mva > 0.0) || !std::isfinite(*base_mva)) {
    throw CaseValidationError("baseMVA must be positive, got " + num(*base_mva));
  }
  require_columns(*bus_m, kBusColumns, "bus");
  require_columns(*gen_m, kGenColumns, "gen");
  require_columns(*branch_m, kBranchColumns, "branch");

  const double base = *base_mva;
  out.base_mva = base;
  for (const auto& row : bus_m->rows) {
    const auto& v = row.values;
    Bus b;
    b.id = to_id(v[0], row.line, "bus id");
    b.kind = to_kind(v[1], row.line);
    b.p_load = v[2] / base;
    b.q_load = v[3] / base;
    b.g_shunt = v[4] / base;
    b.b_shunt = v[5] / base;
    b.v_mag_init = v[7];
    b.v_ang_init = v[8] * kDegToRad;
    b.v_base = v[9];
    out.buses.push_back(b);
  }
  for (const auto& row : gen_m->rows) {
    const auto& v = row.values;
    Generator g;
    g.bus = to_id(v[0], row.line, "generator bus");
    g.p_gen = v[1] / base;
    g.q_gen = v[2] / base;
    g.v_set = v[5];
    g.in_service = v[7] > 0;
    out.generators.push_back(g);
  }
  for (const auto& row : branch_m->rows) {
    const auto& v = row.values;
    Branch br;
    br.from_bus = to_id(v[0], row.line, "branch from-bus");
    br.to_bus = to_id(v[1], row.line, "branch to-bus");
    br.r = v[2];
    br.x = v[3];
    br.b_charging = v[4];
    br.tap_ratio = v[8] == 0.0 ? 1.0 : v[8];
    br.phase_shift = v[9] * kDegToRad;
    br.in_service = v[10] > 0;
    out.branches.push_back(br);
  }

  validate_case(out);
  return out;
}

NetworkCase read_case_file(const std::filesystem::path& path,
                           std::vector<std::string>* warnings) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open case file " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  NetworkCase c = parse_case(buf.str(), warnings);
  if (c.name.empty()) c.name = path.stem().string();
  return c;
}

void validate_case(const NetworkCase& network) {
  if (!(network.base_mva > 0.0)) {
    throw CaseValidationError("baseMVA must be positive");
  }
  std::set<int> ids;
  int slack_count = 0;
  for (const auto& b : network.buses) {
    if (!ids.insert(b.id).second) {
      throw CaseValidationError("duplicate bus id " + std::to_string(b.id));
    }
    if (!(b.v_mag_init > 0.0)) {
      throw CaseValidationError("bus " + std::to_string(b.id) +
                                ": initial voltage magnitude must be positive");
    }
    if (b.kind == BusKind::Slack) ++slack_count;
  }
  if (slack_count == 0) throw CaseValidationError("missing slack bus");
  if (slack_count > 1) {
    throw CaseValidationError("expected exactly one slack bus, found " +
                              std::to_string(slack_count));
  }

  for (std::size_t i = 0; i < network.branches.size(); ++i) {
    const auto& br = network.branches[i];
    const std::string tag = "branch " + std::to_string(i + 1) + " (" +
                            std::to_string(br.from_bus) + "-" +
                            std::to_string(br.to_bus) + ")";
    if (!ids.contains(br.from_bus) || !ids.contains(br.to_bus)) {
      throw CaseValidationError(tag + " references a missing bus");
    }
    if (br.from_bus == br.to_bus) {
      throw CaseValidationError(tag + " connects a bus to itself");
    }
    if (!(br.tap_ratio > 0.0)) {
      throw CaseValidationError(tag + " has a nonpositive tap ratio");
    }
  }

  std::map<int, double> setpoints;
  for (const auto& g : network.generators) {
    if (!ids.contains(g.bus)) {
      throw CaseValidationError("generator references missing bus " +
                                std::to_string(g.bus));
    }
    if (!g.in_service) continue;
    auto [it, inserted] = setpoints.emplace(g.bus, g.v_set);
    if (!inserted && std::abs(it->second - g.v_set) > kSetpointAgreement) {
      throw CaseValidationError("generators at bus " + std::to_string(g.bus) +
                                " disagree on voltage setpoint");
    }
  }
  for (const auto& b : network.buses) {
    if (b.kind == BusKind::PV && !setpoints.contains(b.id)) {
      throw CaseValidationError("PV bus " + std::to_string(b.id) +
                                " has no in-service generator");
    }
  }
}

void write_case(const NetworkCase& network, std::ostream& sink) {
  const double base = network.base_mva;
  const std::string name = network.name.empty() ? "mpc_case" : network.name;
  sink << "function mpc = " << name << "\n";
  sink << "mpc.version = '2';\n";
  sink << "mpc.baseMVA = " << num(base) << ";\n\n";
  sink << "%% bus data\n";
  sink << "%\tbus_i\ttype\tPd\tQd\tGs\tBs\tarea\tVm\tVa\tbaseKV\tzone\tVmax\tVmin\n";
  sink << "mpc.bus = [\n";
  for (const auto& b : network.buses) {
    sink << '\t' << b.id << '\t' << kind_code(b.kind) << '\t' << num(b.p_load * base)
         << '\t' << num(b.q_load * base) << '\t' << num(b.g_shunt * base) << '\t'
         << num(b.b_shunt * base) << "\t1\t" << num(b.v_mag_init) << '\t'
         << num(b.v_ang_init / kDegToRad) << '\t' << num(b.v_base)
         << "\t1\t1.1\t0.9;\n";
  }
  sink << "];\n\n%% generator data\n";
  sink << "%\tbus\tPg\tQg\tQmax\tQmin\tVg\tmBase\tstatus\n";
  sink << "mpc.gen = [\n";
  for (const auto& g : network.generators) {
    sink << '\t' << g.bus << '\t' << num(g.p_gen * base) << '\t'
         << num(g.q_gen * base) << "\t9999\t-9999\t" << num(g.v_set) << '\t'
         << num(base) << '\t' << (g.in_service ? 1 : 0) << ";\n";
  }
  sink << "];\n\n%% branch data\n";
  sink << "%\tfbus\ttbus\tr\tx\tb\trateA\trateB\trateC\tratio\tangle\tstatus\n";
  sink << "mpc.branch = [\n";
  for (const auto& br : network.branches) {
    sink << '\t' << br.from_bus << '\t' << br.to_bus << '\t' << num(br.r) << '\t'
         << num(br.x) << '\t' << num(br.b_charging) << "\t0\t0\t0\t"
         << num(br.tap_ratio) << '\t' << num(br.phase_shift / kDegToRad) << '\t'
         << (br.in_service ? 1 : 0) << ";\n";
  }
  sink << "];\n";
  if (!sink) throw std::runtime_error("failed to write case");
}

void write_solution(const NetworkCase& network, std::span<const BusSolution> solution,
                    std::ostream& sink) {
  std::map<int, const BusSolution*> by_id;
  for (const auto& s : solution) by_id[s.bus_id] = &s;
  for (const auto& b : network.buses) {
    if (!by_id.contains(b.id)) throw std::invalid_argument("solution incomplete");
  }
  sink << "bus,vm_pu,va_deg,p_mw,q_mvar\n";
  for (const auto& b : network.buses) {
    const BusSolution& s = *by_id.at(b.id);
    sink << b.id << ',' << num6(s.v_mag) << ',' << num6(s.v_ang / kDegToRad) << ','
         << num6(s.p_inj * network.base_mva) << ','
         << num6(s.q_inj * network.base_mva) << '\n';
  }
  if (!sink) throw std::runtime_error("failed to write solution table");
}

}  // namespace qsspf
