// livecast: scenario runner.
//
//   livecast run <config> --out <dir> [--seed N]
//   livecast sweep <config> --axis key=v1,v2 [--axis ...] --out <dir>
//   livecast validate <config>
//   livecast plotdata <dir...> --metric <name> [--out <file>]
//
// Exit codes: 0 success, 2 validation failure, 3 runtime invariant violation.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "livecast/config.hpp"
#include "livecast/rng.hpp"
#include "livecast/scenario.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 2;
constexpr int kExitInvariant = 3;

/// Short axis names accepted by sweep.
const std::map<std::string, std::string>& axis_aliases() {
  static const std::map<std::string, std::string> aliases{
      {"ncp_count", "topology.ncps"},
      {"consumer_count", "topology.consumers"},
      {"ncp_order", "schedule.ncp_order"},
  };
  return aliases;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw livecast::ConfigError("", "cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

livecast::RunReport run_to_dir(const livecast::ScenarioConfig& cfg, const fs::path& dir) {
  fs::create_directories(dir);
  std::ofstream trace;
  livecast::RunOptions options;
  if (cfg.output.trace) {
    trace.open(dir / "trace.log", std::ios::binary);
    options.trace_out = &trace;
  }
  livecast::RunReport report = livecast::run_scenario(cfg, options);
  write_file(dir / "metrics.csv", report.metrics_csv);
  write_file(dir / "ledger.csv", "owner,counterparty,balance,updated_at\n" + report.ledger_csv);
  write_file(dir / "config.json", livecast::config_to_json(cfg).dump(2) + "\n");
  write_file(dir / "report.json", livecast::report_to_json(report).dump(2) + "\n");
  return report;
}

void print_summary(const livecast::RunReport& r, std::ostream& os) {
  char line[256];
  std::snprintf(line, sizeof line,
                "consumers=%zu started=%zu censored=%zu mean_lag_ms=%.3f continuity=%.4f startup_median_ms=%.3f\n",
                r.flow.consumers, r.flow.started_playback, r.metrics.censored_startups, r.metrics.mean_lag_ms.mean,
                r.metrics.continuity.mean, r.metrics.startup_ms.median);
  os << line;
}

int cmd_validate(const std::string& path) {
  try {
    livecast::load_config(path);
  } catch (const livecast::ConfigError& e) {
    std::cerr << "invalid config: " << e.what() << "\n";
    return kExitValidation;
  }
  std::cout << "ok\n";
  return kExitOk;
}

int cmd_run(const std::string& path, const std::string& out, std::optional<std::uint64_t> seed) {
  livecast::ScenarioConfig cfg;
  try {
    cfg = livecast::load_config(path);
    if (seed) cfg.seed = *seed;
  } catch (const livecast::ConfigError& e) {
    std::cerr << "invalid config: " << e.what() << "\n";
    return kExitValidation;
  }
  try {
    const auto report = run_to_dir(cfg, out);
    print_summary(report, std::cout);
  } catch (const livecast::InvariantViolation& e) {
    std::cerr << "invariant violated: " << e.what() << "\n";
    return kExitInvariant;
  }
  return kExitOk;
}

struct Axis {
  std::string key;
  std::vector<std::string> values;
};

Axis parse_axis(const std::string& spec) {
  const auto eq = spec.find('=');
  if (eq == std::string::npos || eq == 0 || eq + 1 == spec.size())
    throw livecast::ConfigError(spec, "axis must look like key=v1,v2");
  Axis axis;
  axis.key = spec.substr(0, eq);
  if (auto it = axis_aliases().find(axis.key); it != axis_aliases().end()) axis.key = it->second;
  std::stringstream ss(spec.substr(eq + 1));
  for (std::string v; std::getline(ss, v, ',');)
    if (!v.empty()) axis.values.push_back(v);
  if (axis.values.empty()) throw livecast::ConfigError(axis.key, "axis has no values");
  return axis;
}

std::string sanitize(const std::string& s) {
  std::string out;
  for (char c : s) out += (std::isalnum(static_cast<unsigned char>(c)) || c == '.' || c == '-' || c == '=') ? c : '_';
  return out;
}

int cmd_sweep(const std::string& path, const std::vector<std::string>& axis_specs, const std::string& out) {
  json base;
  std::vector<Axis> axes;
  try {
    base = livecast::config_to_json(livecast::parse_config(read_file(path)));
    for (const auto& spec : axis_specs) axes.push_back(parse_axis(spec));
    // Reject unknown keys and untypable values before any point runs.
    for (const auto& axis : axes)
      for (const auto& v : axis.values) {
        json probe = base;
        livecast::apply_override(probe, axis.key, v);
        livecast::config_from_json(probe);
      }
  } catch (const livecast::ConfigError& e) {
    std::cerr << "invalid sweep: " << e.what() << "\n";
    return kExitValidation;
  }

  std::size_t points = 1;
  for (const auto& axis : axes) points *= axis.values.size();
  const std::uint64_t base_seed = base["seed"].get<std::uint64_t>();
  fs::create_directories(out);

  std::string table = "point,overrides,seed,status,consumers,started,mean_lag_ms,continuity,startup_median_ms\n";
  int worst = kExitOk;
  for (std::size_t index = 0; index < points; ++index) {
    json point = base;
    std::string overrides;
    std::size_t rest = index;
    bool seed_fixed = false;
    for (auto it = axes.rbegin(); it != axes.rend(); ++it) {
      const std::string& v = it->values[rest % it->values.size()];
      rest /= it->values.size();
      livecast::apply_override(point, it->key, v);
      overrides = it->key + "=" + v + (overrides.empty() ? "" : ";") + overrides;
      seed_fixed = seed_fixed || it->key == "seed";
    }
    // Without axes the single point is the plain run.
    if (!axes.empty() && !seed_fixed) point["seed"] = livecast::derive_seed(base_seed, index);
    const auto seed = point["seed"].get<std::uint64_t>();
    const fs::path dir = fs::path(out) / ("point_" + std::to_string(index) + (overrides.empty() ? "" : "_" + sanitize(overrides)));

    std::string status = "ok";
    std::optional<livecast::RunReport> report;
    try {
      report = run_to_dir(livecast::config_from_json(point), dir);
    } catch (const livecast::ConfigError& e) {
      status = std::string("invalid: ") + e.what();
      worst = std::max(worst, kExitValidation);
    } catch (const livecast::InvariantViolation& e) {
      status = std::string("invariant: ") + e.what();
      worst = std::max(worst, kExitInvariant);
    }
    std::replace(status.begin(), status.end(), ',', ';');
    char row[512];
    if (report) {
      std::snprintf(row, sizeof row, "%zu,%s,%llu,%s,%zu,%zu,%.3f,%.4f,%.3f\n", index, overrides.c_str(),
                    static_cast<unsigned long long>(seed), status.c_str(), report->flow.consumers,
                    report->flow.started_playback, report->metrics.mean_lag_ms.mean, report->metrics.continuity.mean,
                    report->metrics.startup_ms.median);
    } else {
      std::snprintf(row, sizeof row, "%zu,%s,%llu,%s,,,,,\n", index, overrides.c_str(),
                    static_cast<unsigned long long>(seed), status.c_str());
    }
    table += row;
    std::cout << row;
  }
  write_file(fs::path(out) / "summary.csv", table);
  return worst;
}

/// Values of `metric` for consumers in one metrics.csv; censored startups are
/// counted but carry no value.
struct Column {
  std::vector<double> values;
  std::size_t total = 0;
};

Column read_metric(const fs::path& file, const std::string& metric) {
  std::ifstream in(file);
  if (!in) throw std::runtime_error("cannot read " + file.string());
  std::string header;
  std::getline(in, header);
  std::vector<std::string> names;
  std::stringstream hs(header);
  for (std::string h; std::getline(hs, h, ',');) names.push_back(h);
  const auto col = std::find(names.begin(), names.end(), metric) - names.begin();
  const auto role_col = std::find(names.begin(), names.end(), "role") - names.begin();
  if (col == static_cast<std::ptrdiff_t>(names.size())) throw std::runtime_error(file.string() + " lacks " + metric);
  Column out;
  for (std::string line; std::getline(in, line);) {
    std::vector<std::string> cells;
    std::stringstream ls(line);
    for (std::string c; std::getline(ls, c, ',');) cells.push_back(c);
    if (cells.size() != names.size() || cells[static_cast<std::size_t>(role_col)] != "consumer") continue;
    const std::string& cell = cells[static_cast<std::size_t>(col)];
    if (cell == "NA") continue;
    ++out.total;
    if (cell.rfind("censored", 0) == 0) continue;
    out.values.push_back(std::stod(cell));
  }
  std::sort(out.values.begin(), out.values.end());
  return out;
}

int cmd_plotdata(const std::vector<std::string>& dirs, const std::string& metric, const std::string& out_path) {
  const auto& known = livecast::plot_metrics();
  if (std::find(known.begin(), known.end(), metric) == known.end()) {
    std::cerr << "unknown metric '" << metric << "'; available:";
    for (const auto& m : known) std::cerr << " " << m;
    std::cerr << "\n";
    return kExitValidation;
  }
  std::vector<Column> columns;
  std::vector<std::string> labels;
  try {
    for (const auto& d : dirs) {
      columns.push_back(read_metric(fs::path(d) / "metrics.csv", metric));
      labels.push_back(fs::path(d).filename().empty() ? fs::path(d).parent_path().filename().string()
                                                      : fs::path(d).filename().string());
    }
  } catch (const std::exception& e) {
    std::cerr << e.what() << "\n";
    return kExitValidation;
  }
  std::ostringstream os;
  for (std::size_t i = 0; i < labels.size(); ++i)
    os << (i ? "," : "") << labels[i] << ":" << metric << "," << labels[i] << ":cdf";
  os << "\n";
  std::size_t rows = 0;
  for (const auto& c : columns) rows = std::max(rows, c.values.size());
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t i = 0; i < columns.size(); ++i) {
      if (i) os << ",";
      const Column& c = columns[i];
      if (r < c.values.size()) {
        char cell[96];
        std::snprintf(cell, sizeof cell, "%.3f,%.6f", c.values[r],
                      static_cast<double>(r + 1) / static_cast<double>(c.total));
        os << cell;
      } else {
        os << ",";
      }
    }
    os << "\n";
  }
  if (out_path.empty()) {
    std::cout << os.str();
  } else {
    write_file(out_path, os.str());
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Live streaming overlay simulator"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir;
  std::optional<std::uint64_t> seed;
  auto* run = app.add_subcommand("run", "Run one scenario");
  run->add_option("config", config_path, "Scenario config (JSON)")->required();
  run->add_option("--out", out_dir, "Output directory")->required();
  run->add_option("--seed", seed, "Override the scenario seed");

  std::vector<std::string> axes;
  auto* sweep = app.add_subcommand("sweep", "Run the Cartesian product of parameter axes");
  sweep->add_option("config", config_path, "Base scenario config (JSON)")->required();
  sweep->add_option("--axis", axes, "key=v1,v2 (repeatable)");
  sweep->add_option("--out", out_dir, "Output directory")->required();

  auto* validate = app.add_subcommand("validate", "Check a config without running it");
  validate->add_option("config", config_path, "Scenario config (JSON)")->required();

  std::vector<std::string> dirs;
  std::string metric;
  std::string plot_out;
  auto* plot = app.add_subcommand("plotdata", "Sorted per-peer metric values with cumulative fraction");
  plot->add_option("dirs", dirs, "Run output directories")->required();
  plot->add_option("--metric", metric, "Column of metrics.csv")->required();
  plot->add_option("--out", plot_out, "Write to a file instead of stdout");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitValidation;
  }

  try {
    if (*run) return cmd_run(config_path, out_dir, seed);
    if (*sweep) return cmd_sweep(config_path, axes, out_dir);
    if (*validate) return cmd_validate(config_path);
    if (*plot) return cmd_plotdata(dirs, metric, plot_out);
  } catch (const livecast::InvariantViolation& e) {
    std::cerr << "invariant violated: " << e.what() << "\n";
    return kExitInvariant;
  } catch (const livecast::ConfigError& e) {
    std::cerr << "invalid config: " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return kExitOk;
}
