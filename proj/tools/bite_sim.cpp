#include "bite/comfort_study.hpp"
#include "bite/harness.hpp"
#include "bite/io.hpp"
#include "bite/perception.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <thread>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

enum ExitCode { kOk = 0, kConfigError = 2, kTrialAborted = 3, kStudyInvalid = 4 };

struct GlobalOptions {
  std::optional<std::uint64_t> seed;
  fs::path out_dir = ".";
  std::optional<std::string> preset;
};

unsigned worker_count() { return std::max(1u, std::thread::hardware_concurrency()); }

void apply_preset(bite::harness::Scenario& s, const std::string& preset) {
  s.gains = bite::controller::PhasedGains::preset(preset);
  s.preset = preset;
}

void reject_preset(const GlobalOptions& g, const std::string& command) {
  if (g.preset) throw bite::io::ConfigError("--preset does not apply to " + command);
}

void write_output(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  bite::io::write_text_file(path, text);
}

int run_trial(const GlobalOptions& g, const fs::path& scenario_file) {
  bite::harness::Scenario s = bite::harness::load_scenario(scenario_file);
  if (g.seed) s.seed = *g.seed;
  if (g.preset) apply_preset(s, *g.preset);
  const bite::harness::TrialReport r = bite::harness::run_trial(s);

  const fs::path log_path = g.out_dir / (s.name + ".btlg");
  const fs::path report_path = g.out_dir / (s.name + "_report.json");
  fs::create_directories(g.out_dir);
  bite::harness::write_log(r, log_path);
  json report = json::parse(bite::harness::report_to_json(r));
  report["log_file"] = log_path.string();
  write_output(report_path, report.dump(2) + "\n");

  std::cout << s.name << ": " << bite::harness::to_string(r.outcome) << " (seed " << r.seed << ", "
            << r.log.size() << " ticks)\n"
            << "report: " << report_path.string() << "\nlog: " << log_path.string() << "\n";
  return r.safety_stop ? kTrialAborted : kOk;
}

int run_suite(const GlobalOptions& g, const fs::path& suite_file) {
  bite::harness::SuiteConfig suite = bite::harness::load_suite(suite_file);
  if (g.seed) suite.seed = *g.seed;
  if (g.preset) {
    for (auto& entry : suite.entries) {
      if (entry.method == entry.scenario.preset) entry.method = *g.preset;
      apply_preset(entry.scenario, *g.preset);
    }
  }
  const bite::harness::SuiteReport r = bite::harness::run_suite(suite, worker_count());
  const std::string table = bite::harness::suite_table_csv(r);
  write_output(g.out_dir / (suite.name + "_report.json"), bite::harness::suite_to_json(r));
  write_output(g.out_dir / (suite.name + "_table.csv"), table);
  std::cout << table << "total " << r.total << ", success " << r.successes << ", failure "
            << r.failures << "\n";
  return kOk;
}

int run_study(const GlobalOptions& g, const fs::path& study_file) {
  reject_preset(g, "wrist-study");
  bite::study::StudyConfig cfg = bite::study::load_study_config(study_file);
  if (g.seed) cfg.distribution.seed = *g.seed;
  if (cfg.options.threads == 0) cfg.options.threads = worker_count();
  const bite::study::StudyReport r =
      bite::study::run_wrist_study(cfg.chain_with, cfg.chain_without, cfg.distribution, cfg.ik,
                                   cfg.comfort, cfg.home, cfg.options);
  const std::string report = bite::study::report_to_json(r);
  write_output(g.out_dir / "study_report.json", report);
  write_output(g.out_dir / "study_samples.csv", bite::study::samples_to_csv(r));
  std::cout << report;
  return kOk;
}

int run_offsets(const GlobalOptions& g, const fs::path& cloud_file, const std::string& dy_rule) {
  reject_preset(g, "offsets");
  bite::perception::DyRule rule = bite::perception::DyRule::TopExtent;
  if (dy_rule == "minimum_y") {
    rule = bite::perception::DyRule::MinimumY;
  } else if (dy_rule != "top_extent") {
    throw bite::io::ConfigError("unknown dy rule: " + dy_rule);
  }
  const bite::perception::PointCloud cloud = bite::perception::read_cloud(cloud_file);
  const bite::perception::Aabb box = bite::perception::food_bounding_box(cloud);
  const bite::perception::FoodOffsets off = bite::perception::compute_offsets(box, rule);
  const json j = {{"points", cloud.points.size()},
                  {"dx_mm", off.dx},
                  {"dy_mm", off.dy},
                  {"within_bounds", off.within_bounds()}};
  std::cout << j.dump(2) << "\n";
  return kOk;
}

int run_export(const GlobalOptions& g, const fs::path& log_file, const fs::path& out_file) {
  reject_preset(g, "export");
  const auto log = bite::harness::read_log(log_file);
  bite::harness::export_trajectory(log, out_file);
  std::cout << out_file.string() << ": " << log.size() << " rows\n";
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bite transfer simulator"};
  app.require_subcommand(1);
  GlobalOptions g;
  std::uint64_t seed = 0;
  std::string out_dir, preset;
  auto* seed_opt = app.add_option("--seed", seed, "Override the configured seed");
  app.add_option("--out-dir", out_dir, "Directory for reports and logs");
  auto* preset_opt = app.add_option("--preset", preset, "Gain preset: ours, less_reactive, more_reactive");

  std::string input, output, dy_rule = "top_extent";
  auto* trial = app.add_subcommand("trial", "Run one scenario");
  trial->add_option("scenario", input)->required();
  auto* suite = app.add_subcommand("suite", "Run a batch suite");
  suite->add_option("suite", input)->required();
  auto* study = app.add_subcommand("wrist-study", "Run the wrist comfort study");
  study->add_option("study", input)->required();
  auto* offsets = app.add_subcommand("offsets", "Food offsets from a point cloud");
  offsets->add_option("cloud", input)->required();
  offsets->add_option("--dy-rule", dy_rule, "top_extent or minimum_y");
  auto* exporter = app.add_subcommand("export", "Convert a binary tick log to CSV");
  exporter->add_option("log", input)->required();
  exporter->add_option("out", output)->required();
  for (auto* sub : {trial, suite, study, offsets, exporter}) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigError;
  }
  if (*seed_opt) g.seed = seed;
  if (!out_dir.empty()) g.out_dir = out_dir;
  if (*preset_opt) g.preset = preset;

  try {
    if (*trial) return run_trial(g, input);
    if (*suite) return run_suite(g, input);
    if (*study) return run_study(g, input);
    if (*offsets) return run_offsets(g, input, dy_rule);
    return run_export(g, input, output);
  } catch (const bite::study::StudyInvalid& e) {
    std::cerr << "study invalid: " << e.what() << "\n";
    return kStudyInvalid;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kConfigError;
  }
}
