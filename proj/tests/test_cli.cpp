#include <doctest.h>

#include <fstream>
#include <sstream>

#include "fixtures.hpp"
#include "spotmarket/cli.hpp"

using namespace spotmarket;

namespace {

std::string scenario_path(const std::string& name) {
  return std::string(SPOTMARKET_SCENARIO_DIR) + "/" + name;
}

std::string read(const std::string& path) {
  std::ifstream in(path);
  std::ostringstream b;
  b << in.rdbuf();
  return b.str();
}

std::optional<double> cell(const ComparisonTable& t, const std::string& row, std::size_t col) {
  for (std::size_t r = 0; r < t.rows.size(); ++r)
    if (t.rows[r] == row) return t.columns[col].values[r];
  FAIL("no row " << row);
  return std::nullopt;
}

std::string parse_error(std::string_view text) {
  try {
    parse_scenario(text);
  } catch (const ParseError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_CASE("bundled example parses to the fixture") {
  auto f = load_scenario(scenario_path("two_node_example.json"));
  auto want = fixture::example_scenario();
  want.incentive_offsets = {0.0, 0.0};
  f.scenario.name = want.name;
  CHECK(f.scenario == want);
  CHECK_FALSE(f.multi.has_value());
}

TEST_CASE("serialize then parse is the identity") {
  for (const char* name : {"two_node_example.json", "single_node.json", "two_interval_toy.json"}) {
    INFO(name);
    const auto f = load_scenario(scenario_path(name));
    const std::string text = serialize_scenario(f);
    const auto g = parse_scenario(text);
    CHECK(g.scenario == f.scenario);
    CHECK(g.multi == f.multi);
    CHECK(serialize_scenario(g) == text);
  }
}

TEST_CASE("schema errors carry line numbers") {
  const std::string unknown = "{\n  \"schema\": 1,\n  \"nodes\": [{\"utility\": [[0, 6]]}],\n  \"units\": [],\n  \"colour\": 3\n}\n";
  const auto e1 = parse_error(unknown);
  CHECK(e1.find("line 5") != std::string::npos);
  CHECK(e1.find("unknown key 'colour'") != std::string::npos);

  const std::string syntax = "{\n  \"schema\": 1,\n  \"nodes\": [\n    {\"utility\": [[0, 6]],}\n  ]\n}\n";
  CHECK(parse_error(syntax).find("line 4") != std::string::npos);

  const std::string version = "{\"schema\": 2, \"nodes\": [], \"units\": []}";
  CHECK(parse_error(version).find("schema") != std::string::npos);

  const std::string nested =
      "{\n\"schema\": 1,\n\"nodes\": [{\"utility\": [[0, 6]]}],\n\"units\": [\n"
      "  {\"node\": 1, \"producer\": 1, \"unit\": 1, \"capacity\": 5,\n"
      "   \"cost\": [[0, 2]], \"colour\": 1}\n]}\n";
  const auto e2 = parse_error(nested);
  CHECK(e2.find("line 6") != std::string::npos);
  CHECK(e2.find("units.0.colour") != std::string::npos);
}

TEST_CASE("modes") {
  const auto m = parse_modes("optimal,competitive,oligopolistic,cap=8,cap:1/2,mechanism");
  REQUIRE(m.size() == 6);
  CHECK(m[3].kind == ModeKind::Cap);
  CHECK(m[3].caps == std::vector<double>{8.0});
  CHECK(m[4].caps == std::vector<double>{1.0, 2.0});
  CHECK(m[4].label() == "cap=1/2");
  CHECK(parse_modes("all").size() == 4);
  CHECK_THROWS_AS(parse_modes("bogus"), DomainError);
  CHECK_THROWS_AS(parse_modes("cap=x"), DomainError);
  CHECK_THROWS_AS(parse_modes(""), DomainError);
}

TEST_CASE("run on the bundled example") {
  const auto f = load_scenario(scenario_path("two_node_example.json"));
  const auto modes = parse_modes("optimal,competitive,cap=1,mechanism");
  const auto t = run(f, modes);
  REQUIRE(t.columns.size() == 4);
  CHECK(t.exit_code() == 0);
  CHECK(*cell(t, "SW", 0) == doctest::Approx(425.0).epsilon(1e-9));
  CHECK(*cell(t, "SW", 1) == doctest::Approx(390.0).epsilon(1e-9));
  CHECK(*cell(t, "SW", 2) == doctest::Approx(375.0).epsilon(1e-9));
  CHECK(*cell(t, "SW", 3) == doctest::Approx(425.0).epsilon(1e-9));
  CHECK(*cell(t, "phi1", 3) == doctest::Approx(-11.0).epsilon(1e-6));
  CHECK(std::abs(*cell(t, "phi2", 3)) <= 1e-6);
  CHECK(*cell(t, "ISO budget", 3) == doctest::Approx(-11.0).epsilon(1e-6));
  CHECK_FALSE(cell(t, "phi1", 0).has_value());
  CHECK(std::isinf(*cell(t, "load shed2", 2)));
  CHECK(*cell(t, "P1", 0) == doctest::Approx(4.0));

  // byte-identical output on repeat runs
  const auto again = run(f, modes);
  CHECK(format_table(t, OutputFormat::Text) == format_table(again, OutputFormat::Text));
  CHECK(format_table(t, OutputFormat::Csv) == format_table(again, OutputFormat::Csv));
  const auto csv = format_table(t, OutputFormat::Csv);
  CHECK(csv.rfind("row,optimal,competitive,cap=1,mechanism\n", 0) == 0);
  CHECK(csv.find("load shed2,,,inf,") != std::string::npos);
}

TEST_CASE("empty market gives an all-zero table") {
  const std::string text = R"({"schema": 1, "nodes": [{"utility": [[0, 6]]}], "units": []})";
  const auto f = parse_scenario(text);
  const auto t = run(f, parse_modes("optimal,competitive,oligopolistic,mechanism"));
  CHECK(t.exit_code() == 0);
  for (std::size_t c = 0; c < t.columns.size(); ++c) {
    CHECK(*cell(t, "SW", c) == 0.0);
    CHECK(*cell(t, "x1", c) == 0.0);
  }
}

TEST_CASE("failed columns are marked without aborting the rest") {
  auto f = load_scenario(scenario_path("two_node_example.json"));
  f.solver.max_sweeps = 1;
  const auto t = run(f, parse_modes("competitive,oligopolistic"));
  // competitive converges in one sweep here only if it is already stationary
  bool any_failed = false;
  for (const auto& c : t.columns)
    if (c.status == ColumnStatus::NonConverged) {
      any_failed = true;
      CHECK_FALSE(c.message.empty());
      for (const auto& v : c.values) CHECK_FALSE(v.has_value());
    }
  CHECK(any_failed);
  CHECK(t.exit_code() == 2);
  CHECK(format_table(t, OutputFormat::Text).find("non-converged") != std::string::npos);
}

TEST_CASE("multi-interval mode") {
  const auto f = load_scenario(scenario_path("two_interval_toy.json"));
  const auto t = run(f, parse_modes("multi"));
  REQUIRE(t.columns.size() == 2);
  CHECK(*cell(t, "lambda(1,1,1)", 0) == doctest::Approx(5.2).epsilon(1e-6));
  CHECK(*cell(t, "q(1,1,1)", 0) + *cell(t, "q(1,1,1)", 1) <= 12.0 + 1e-9);
  const auto single = load_scenario(scenario_path("single_node.json"));
  CHECK_THROWS_AS(run(single, parse_modes("multi")), DomainError);
}

TEST_CASE("curves on the example follow the merit merges") {
  const auto f = load_scenario(scenario_path("two_node_example.json"));
  const auto c = emit_curves(f, 0, std::nullopt, 1.0);
  REQUIRE(c.columns == std::vector<std::string>{"q", "marginal_true_cost", "marginal_declared_mechanism", "marginal_utility"});
  REQUIRE(c.rows.size() == 31);
  for (const auto& row : c.rows) {
    const double q = row[0];
    // true: the 1-cost units (5 + 10) first, then the 2-cost units
    CHECK(row[1] == (q < 15.0 ? 1.0 : 2.0));
    // mechanism: cost plus damage 1 per unit of pollution: 2+1 = 3 first, then 1+3 = 4
    CHECK(row[2] == (q < 15.0 ? 3.0 : 4.0));
    CHECK(row[3] == doctest::Approx(std::max(0.0, 44.0 - 2.0 * q)));
  }
  const auto one = emit_curves(f, 0, 0, 100.0);
  CHECK(one.rows.size() == 1);
  CHECK(one.rows[0][0] == 0.0);
  CHECK_THROWS_AS(emit_curves(f, 0, std::nullopt, 0.0), DomainError);
  CHECK_THROWS_AS(emit_curves(f, 4, std::nullopt, 1.0), DomainError);
}

TEST_CASE("curve areas integrate to social welfare on one node") {
  const auto f = load_scenario(scenario_path("single_node.json"));
  const auto c = emit_curves(f, 0, std::nullopt, 0.01);
  const auto col = [&](const std::string& name) {
    return static_cast<std::size_t>(std::find(c.columns.begin(), c.columns.end(), name) - c.columns.begin());
  };
  const std::size_t mu = col("marginal_utility"), mech = col("marginal_declared_mechanism"),
                    truth = col("marginal_true_cost");
  REQUIRE(mu < c.columns.size());
  REQUIRE(col("price_cap") < c.columns.size());
  auto area = [&](std::size_t cost) {
    double a = 0.0;
    for (std::size_t k = 1; k < c.rows.size(); ++k) {
      const double h = c.rows[k][0] - c.rows[k - 1][0];
      const double g0 = std::max(0.0, c.rows[k - 1][mu] - c.rows[k - 1][cost]);
      const double g1 = std::max(0.0, c.rows[k][mu] - c.rows[k][cost]);
      a += 0.5 * h * (g0 + g1);
    }
    return a;
  };
  const auto t = run(f, parse_modes("optimal,competitive"));
  // optimum: surplus between utility and damage-inclusive marginal cost
  CHECK(area(mech) == doctest::Approx(*cell(t, "SW", 0)).epsilon(0.01));
  // competitive: surplus against true cost, less the damage at that output
  const double damage = *cell(t, "x1", 1) * 1.0;
  CHECK(area(truth) - damage == doctest::Approx(*cell(t, "SW", 1)).epsilon(0.01));
}

TEST_CASE("verify") {
  CHECK(verify(read(scenario_path("two_node_example.json"))).ok());

  std::string text = read(scenario_path("two_node_example.json"));
  // concave cost on unit (1,2,1): marginal falls from 2 to 1
  const std::string from = "\"unit\": 1, \"capacity\": 10, \"cost\": [[0, 2]]";
  const auto at = text.find(from);
  REQUIRE(at != std::string::npos);
  text.replace(at, from.size(), "\"unit\": 1, \"capacity\": 10, \"cost\": [[0, 2], [4, 1]]");
  const auto bad = verify(text);
  CHECK_FALSE(bad.ok());
  bool named = false;
  for (const auto& m : bad.failures) named |= m.find("(1,2,1)") != std::string::npos && m.find("convex") != std::string::npos;
  CHECK(named);

  std::string ptdf = read(scenario_path("two_node_example.json"));
  ptdf.replace(ptdf.find("\"ptdf\": [1, 0]"), 14, "\"ptdf\": [1]");
  const auto schema = verify(ptdf);
  CHECK_FALSE(schema.ok());
  REQUIRE_FALSE(schema.failures.empty());
  CHECK(schema.failures[0].rfind("schema:", 0) == 0);
  CHECK(format_verify(schema).find("FAIL") != std::string::npos);
}

TEST_CASE("exit codes") {
  CHECK(exit_code_for(NonConvergenceError("x", {})) == 2);
  CHECK(exit_code_for(InfeasibleError("x", {})) == 3);
  CHECK(exit_code_for(ValidationError("x", {})) == 1);
  CHECK(exit_code_for(ParseError("x", {})) == 1);
}
