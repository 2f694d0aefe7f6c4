#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "fluctua/cli.hpp"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitNumerical = 3;

std::string read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw fluctua::ConfigError("--config", "cannot read '" + path + "'");
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

}  // namespace

int main(int argc, char** argv) {
  using namespace fluctua;
  CLI::App app{"Casimir-Lifshitz forces and radiative heat transfer between planar bodies "
               "out of thermal equilibrium"};
  std::string scenario, config_path, out_path, format;
  double tol = 0.0;
  app.add_option("scenario", scenario, "slab-force | slab-heat | atom-force | eq-force")
      ->required()
      ->check(CLI::IsMember({"slab-force", "slab-heat", "atom-force", "eq-force"}));
  app.add_option("--config", config_path, "JSON run configuration")->required();
  app.add_option("--out", out_path, "output file (default: config output.path, else stdout)");
  app.add_option("--format", format, "csv | json")->check(CLI::IsMember({"csv", "json"}));
  app.add_option("--tol", tol, "relative tolerance in (0, 0.1]");
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitConfig;
  }

  cli::RunConfig cfg;
  try {
    std::string text = read_file(config_path);
    auto j = nlohmann::json::parse(text, nullptr, false);
    if (!j.is_discarded() && j.is_object()) {
      if (j.contains("scenario") && j["scenario"].is_string() &&
          j["scenario"].get<std::string>() != scenario) {
        throw ConfigError("scenario", "config says '" + j["scenario"].get<std::string>() +
                                          "' but the command line says '" + scenario + "'");
      }
      j["scenario"] = scenario;
      if (tol != 0.0) j["tol"] = tol;
      text = j.dump();
    }
    cfg = cli::parse_config(text);
    if (!out_path.empty()) cfg.output_path = out_path;
    if (!format.empty()) cfg.format = cli::parse_format(format);
  } catch (const Error& e) {
    std::fprintf(stderr, "fluctua: config error: %s\n", e.what());
    return kExitConfig;
  }

  const cli::Table table = cli::run_sweep(cfg);
  try {
    cli::emit(table, cfg.format, cfg.output_path);
  } catch (const Error& e) {
    std::fprintf(stderr, "fluctua: %s\n", e.what());
    return 1;
  }
  int failed = 0;
  for (std::size_t i = 0; i < table.errors.size(); ++i) {
    if (table.errors[i].empty()) continue;
    ++failed;
    std::fprintf(stderr, "fluctua: point %zu (%s = %.6g): %s\n", i, table.columns[0].c_str(),
                 table.rows[i][0], table.errors[i].c_str());
  }
  return failed > 0 ? kExitNumerical : 0;
}
