#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "spotmarket/equilibrium.hpp"
#include "spotmarket/errors.hpp"
#include "spotmarket/market.hpp"
#include "spotmarket/multiperiod.hpp"

namespace spotmarket {

// Everything a scenario file carries.  Solver settings are optional overrides.
struct ScenarioFile {
  MarketScenario scenario;
  std::optional<MultiIntervalScenario> multi;
  SolverConfig solver;
  MultiConfig multi_config;
};

inline constexpr int kSchemaVersion = 1;

// Thrown for malformed documents; problems carry "line N: path: message".
class ParseError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

// Parses and canonicalizes; does not run market validation (curvature
// mistakes survive parsing so that verify can report them).
ScenarioFile parse_scenario(std::string_view text);
ScenarioFile load_scenario(const std::string& path);
std::string serialize_scenario(const ScenarioFile& file);

enum class ModeKind { Optimal, Competitive, Oligopolistic, Cap, Mechanism, Multi };

struct Mode {
  ModeKind kind = ModeKind::Optimal;
  std::vector<double> caps;  // one value (all nodes) or one per node
  std::string label() const;
};

// "optimal,competitive,cap=8,cap=8/6,mechanism,multi"; cap:<v> is accepted
// too.  "all" means optimal, competitive, oligopolistic and mechanism.
std::vector<Mode> parse_modes(std::string_view list);

enum class ColumnStatus { Ok, NonConverged, Infeasible, Invalid };

struct TableColumn {
  std::string label;
  ColumnStatus status = ColumnStatus::Ok;
  std::string message;
  // one per table row; nullopt where not applicable, +inf for unbounded
  std::vector<std::optional<double>> values;
};

struct ComparisonTable {
  std::vector<std::string> rows;
  std::vector<TableColumn> columns;
  // 0 when every column solved, else the code of the first failed column
  int exit_code() const;
};

ComparisonTable run(const ScenarioFile& file, std::span<const Mode> modes);

enum class OutputFormat { Text, Csv };
std::string format_table(const ComparisonTable& table, OutputFormat format);

struct CurveTable {
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;
};

// node and producer are zero-based here
CurveTable emit_curves(const ScenarioFile& file, std::size_t node,
                       std::optional<std::size_t> producer, double step);
std::string format_curves(const CurveTable& table);

struct VerifyReport {
  std::vector<std::string> passed;
  std::vector<std::string> failures;
  bool ok() const { return failures.empty(); }
};

VerifyReport verify(std::string_view text);
std::string format_verify(const VerifyReport& report);

int exit_code_for(const std::exception& e);

}  // namespace spotmarket
