// spotmarket: batch runs over scenario files.
//   spotmarket run <file> --modes optimal,competitive,cap=8 --format text|csv
//   spotmarket curves <file> --node N [--producer I] --step S
//   spotmarket verify <file>
// Exit codes: 0 ok, 1 validation, 2 non-convergence, 3 infeasibility.

#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "spotmarket/cli.hpp"

namespace sm = spotmarket;

namespace {

int report(const std::exception& e) {
  std::cerr << "error: " << e.what() << "\n";
  if (const auto* v = dynamic_cast<const sm::ValidationError*>(&e))
    for (const auto& p : v->problems())
      if (p != e.what()) std::cerr << "  " << p << "\n";
  return sm::exit_code_for(e);
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw sm::ParseError("cannot open " + path, {});
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Nodal spot-market equilibria, incentive payments and curve samples"};
  app.require_subcommand(1);

  std::string file, modes = "all", format = "text";
  auto* run = app.add_subcommand("run", "solve the requested modes and print a comparison table");
  run->add_option("file", file, "scenario file")->required();
  run->add_option("--modes", modes, "comma list: optimal, competitive, oligopolistic, cap=V[/V..], mechanism, multi, all");
  run->add_option("--format", format, "text or csv")->check(CLI::IsMember({"text", "csv"}));

  std::size_t node = 0, producer = 0;
  double step = 1.0;
  auto* curves = app.add_subcommand("curves", "emit marginal curves as CSV");
  curves->add_option("file", file, "scenario file")->required();
  curves->add_option("--node", node, "node id (1-based)")->required()->check(CLI::PositiveNumber);
  auto* prod = curves->add_option("--producer", producer, "producer id (1-based)")->check(CLI::PositiveNumber);
  curves->add_option("--step", step, "sample step")->check(CLI::PositiveNumber);

  auto* verify = app.add_subcommand("verify", "validate a scenario and probe invariants");
  verify->add_option("file", file, "scenario file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*run) {
      const auto parsed = sm::load_scenario(file);
      const auto table = sm::run(parsed, sm::parse_modes(modes));
      std::cout << sm::format_table(table, format == "csv" ? sm::OutputFormat::Csv : sm::OutputFormat::Text);
      return table.exit_code();
    }
    if (*curves) {
      const auto parsed = sm::load_scenario(file);
      std::optional<std::size_t> who;
      if (*prod) who = producer - 1;
      std::cout << sm::format_curves(sm::emit_curves(parsed, node - 1, who, step));
      return 0;
    }
    const auto r = sm::verify(slurp(file));
    std::cout << sm::format_verify(r);
    return r.ok() ? 0 : 1;
  } catch (const std::exception& e) {
    return report(e);
  }
}
