// latcast CLI: simulate | train | gradcheck | run | plot.
//
// Exit codes: 0 success, 2 usage/config error, 3 numerical failure
// (gradcheck uses 1 for a failed check, as its report is the product).

#include <atomic>
#include <chrono>
#include <csignal>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "latcast/bus.hpp"
#include "latcast/checkpoint.hpp"
#include "latcast/gradcheck.hpp"
#include "latcast/kpm.hpp"
#include "latcast/plot.hpp"
#include "latcast/predict.hpp"
#include "latcast/sim.hpp"
#include "latcast/textio.hpp"
#include "latcast/train.hpp"
#include "latcast/version.hpp"
#include "latcast/xapp.hpp"

namespace {

using namespace latcast;
namespace fs = std::filesystem;

std::atomic<bool> g_stop{false};

void handle_signal(int) { g_stop.store(true); }

void install_signal_handlers() {
  std::signal(SIGINT, handle_signal);
  std::signal(SIGTERM, handle_signal);
}

// Every subcommand that produces files records how it was invoked before any
// work starts, so a rerun of the manifest reproduces the outputs.
void write_manifest(const fs::path& path, const std::string& subcommand,
                    const nlohmann::json& config_paths,
                    std::optional<std::uint64_t> seed,
                    const fs::path& out) {
  nlohmann::json j;
  j["subcommand"] = subcommand;
  j["tool_version"] = kVersion;
  j["config_paths"] = config_paths;
  if (seed) {
    j["seed"] = *seed;
  } else {
    j["seed"] = nullptr;
  }
  j["out"] = fs::absolute(out).string();
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write manifest: " + path.string());
  os << j.dump(2) << '\n';
}

std::uint16_t resolve_bus_port(std::optional<int> flag_port) {
  if (flag_port) return static_cast<std::uint16_t>(*flag_port);
  if (const char* env = std::getenv("BUS_PORT")) {
    return static_cast<std::uint16_t>(parse_int(env));
  }
  return kDefaultBusPort;
}

// --- simulate ----------------------------------------------------------------

int cmd_simulate(const fs::path& scenario_path, const fs::path& out_csv,
                 std::optional<std::uint64_t> seed) {
  ScenarioConfig cfg = load_scenario_file(scenario_path);
  if (seed) cfg.seed = *seed;

  if (out_csv.has_parent_path()) fs::create_directories(out_csv.parent_path());
  write_manifest(out_csv.string() + ".manifest.json", "simulate",
                 {{"scenario", fs::absolute(scenario_path).string()}}, seed,
                 out_csv);

  std::vector<KpmRecord> records = run_scenario(cfg);
  write_csv_file(out_csv, records);
  std::cout << records.size() << " rows -> " << out_csv.string() << "\n";
  return 0;
}

// --- train -------------------------------------------------------------------

constexpr double kSplitRatio = 0.8;
constexpr double kValLossGoal = 0.04;

int cmd_train(const fs::path& data_csv, const fs::path& config_path,
              const fs::path& out_dir, std::optional<std::uint64_t> seed,
              bool quiet) {
  ModelConfig cfg = config_path.empty() ? ModelConfig{}
                                        : load_model_config_file(config_path);
  if (seed) cfg.seed = *seed;

  fs::create_directories(out_dir);
  nlohmann::json config_paths{{"data", fs::absolute(data_csv).string()}};
  if (!config_path.empty()) {
    config_paths["config"] = fs::absolute(config_path).string();
  }
  write_manifest(out_dir / "manifest.json", "train", config_paths, seed,
                 out_dir);

  std::vector<KpmRecord> records = read_csv_file(data_csv);
  const Mat rows = feature_matrix(records);
  auto [train_rows, val_rows] = chronological_split(rows, kSplitRatio);
  if (train_rows.rows() <= cfg.lookback || val_rows.rows() <= cfg.lookback) {
    throw std::invalid_argument(
        "dataset too small for lookback " + std::to_string(cfg.lookback) +
        ": split gives " + std::to_string(train_rows.rows()) + " train / " +
        std::to_string(val_rows.rows()) + " val rows, both must exceed it");
  }

  const Scaler scaler = fit_scaler(train_rows);
  WindowBatch train_batch =
      make_windows(apply_scaler_rows(scaler, train_rows), cfg.lookback);
  WindowBatch val_batch =
      make_windows(apply_scaler_rows(scaler, val_rows), cfg.lookback);

  EpochObserver observer = nullptr;
  if (!quiet) {
    observer = [](const EpochStats& s) {
      std::cout << "epoch " << s.epoch << "  train_loss "
                << format_double(s.train_loss) << "  val_loss "
                << format_double(s.val_loss) << "\n";
    };
  }

  TrainResult result = train(cfg, train_batch, val_batch, scaler, observer);
  save_checkpoint(result.checkpoint, out_dir / "checkpoint.bin");
  write_history_csv(out_dir / "history.csv", result.history);

  const double best = result.checkpoint.best_val_loss;
  std::cout << "best val loss " << format_double(best) << " at epoch "
            << result.checkpoint.epoch << " ("
            << (best < kValLossGoal ? "below" : "NOT below") << " "
            << format_double(kValLossGoal) << ")\n";
  std::cout << "checkpoint -> " << (out_dir / "checkpoint.bin").string()
            << "\nhistory    -> " << (out_dir / "history.csv").string() << "\n";
  return 0;
}

// --- gradcheck ---------------------------------------------------------------

int cmd_gradcheck(std::uint64_t seed, bool corrupt) {
  const ModelConfig cfg = gradcheck_model_config(seed);
  GradCheckReport report = run_gradient_check(cfg, 1e-4, corrupt);

  std::printf("%-12s %8s %14s\n", "tensor", "params", "max_rel_err");
  for (const GradCheckRow& row : report.rows) {
    std::printf("%-12s %8lld %14.3e\n", row.name.c_str(),
                static_cast<long long>(row.size), row.max_rel_err);
  }
  std::printf("max relative error %.3e (threshold 1e-03), worst in %s\n",
              report.max_rel_err, report.worst_param.c_str());
  if (!report.pass()) {
    std::printf("FAIL: analytic gradient of %s disagrees with central "
                "differences\n", report.worst_param.c_str());
    return 1;
  }
  std::printf("PASS\n");
  return 0;
}

// --- run ---------------------------------------------------------------------

int cmd_run(const fs::path& scenario_path, const fs::path& ckpt_path,
            const fs::path& out_dir, std::optional<std::uint64_t> seed,
            double threshold_ms, double hysteresis, bool no_pacing,
            std::optional<int> bus_port, bool json_summary) {
  ScenarioConfig scenario = load_scenario_file(scenario_path);
  if (seed) scenario.seed = *seed;
  Checkpoint ckpt = load_checkpoint(ckpt_path);
  if (ckpt.config.input_dim != kFeatureCount) {
    throw CheckpointError("checkpoint input_dim " +
                          std::to_string(ckpt.config.input_dim) +
                          " does not match the KPM feature count");
  }
  PolicyConfig policy{threshold_ms, hysteresis};
  validate_policy(policy);

  fs::create_directories(out_dir);
  write_manifest(out_dir / "manifest.json", "run",
                 {{"scenario", fs::absolute(scenario_path).string()},
                  {"checkpoint", fs::absolute(ckpt_path).string()}},
                 seed, out_dir);

  // Fresh topic storage per run: the bus directory is owned by this command.
  const fs::path bus_dir = out_dir / "bus";
  fs::remove_all(bus_dir);
  Broker broker(bus_dir);
  BusServer server(broker, resolve_bus_port(bus_port));
  server.start();

  const std::uint64_t expected =
      static_cast<std::uint64_t>(scenario.duration_s) *
      (1000 / kReportPeriodMs);

  // Producer: the simulator publishing into the kpm topic, paced at the
  // reporting period unless --no-pacing.
  std::exception_ptr producer_error;
  std::thread producer([&] {
    try {
      BusClient pub = BusClient::connect_with_backoff("127.0.0.1",
                                                      server.port(), 6);
      SimState st = init_state(scenario);
      const auto start = std::chrono::steady_clock::now();
      for (std::uint64_t i = 0; i < expected && !g_stop.load(); ++i) {
        KpmRecord record = step(scenario, st);
        pub.publish("kpm", record_to_json(record));
        if (!no_pacing) {
          std::this_thread::sleep_until(
              start + std::chrono::milliseconds((i + 1) * kReportPeriodMs));
        }
      }
    } catch (...) {
      producer_error = std::current_exception();
      g_stop.store(true);
    }
  });

  RunOnlineOptions opts;
  opts.port = server.port();
  opts.log_path = out_dir / "forecast_log.csv";
  opts.expected_records = expected;
  opts.stop = &g_stop;
  RunOnlineStats stats;
  try {
    stats = run_online(ckpt, policy, opts);
  } catch (...) {
    g_stop.store(true);
    producer.join();
    server.stop();
    throw;
  }
  producer.join();
  server.stop();
  if (producer_error) std::rethrow_exception(producer_error);

  // Summary over the paired rows, in milliseconds and in the checkpoint's
  // normalized target scale.
  double mae_ms = 0.0, mse_ms = 0.0, mae_norm = 0.0, mse_norm = 0.0;
  for (const ForecastRow& r : stats.rows) {
    const double err_ms = r.predicted_latency_ms - r.actual_latency_ms;
    mae_ms += std::abs(err_ms);
    mse_ms += err_ms * err_ms;
    const double err_norm = ckpt.scaler.normalize_target(r.predicted_latency_ms) -
                            ckpt.scaler.normalize_target(r.actual_latency_ms);
    mae_norm += std::abs(err_norm);
    mse_norm += err_norm * err_norm;
  }
  const double n = stats.rows.empty() ? 1.0
                                      : static_cast<double>(stats.rows.size());
  nlohmann::json summary;
  summary["records_consumed"] = stats.records_consumed;
  summary["paired_rows"] = stats.rows.size();
  summary["mae_ms"] = mae_ms / n;
  summary["mse_ms"] = mse_ms / n;
  summary["mae_normalized"] = mae_norm / n;
  summary["mse_normalized"] = mse_norm / n;
  summary["threshold_ms"] = policy.threshold_ms;
  summary["hysteresis"] = policy.hysteresis;
  {
    std::ofstream os(out_dir / "summary.json", std::ios::binary);
    os << summary.dump(2) << '\n';
  }
  if (json_summary) {
    std::cout << summary.dump() << "\n";
  } else {
    std::cout << stats.records_consumed << " records consumed, "
              << stats.rows.size() << " paired rows\n";
  }
  return 0;
}

// --- plot --------------------------------------------------------------------

int cmd_plot(const fs::path& log_path, const fs::path& out_dir) {
  std::vector<ForecastRow> rows = read_forecast_log(log_path);
  if (rows.empty()) {
    throw std::invalid_argument("forecast log has no paired rows: " +
                                log_path.string());
  }
  fs::create_directories(out_dir);
  write_manifest(out_dir / "manifest.json", "plot",
                 {{"log", fs::absolute(log_path).string()}}, std::nullopt,
                 out_dir);
  write_plot_svg(out_dir / "plot.svg", rows);
  write_tidy_csv(out_dir / "plot_points.csv", rows);
  std::cout << rows.size() << " points -> " << (out_dir / "plot.svg").string()
            << ", " << (out_dir / "plot_points.csv").string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  install_signal_handlers();

  CLI::App app{"synthetic O-RAN KPM pipeline with a native bidirectional LSTM "
               "latency forecaster"};
  app.set_version_flag("--version", latcast::kVersion);
  app.require_subcommand(1);

  // simulate
  auto* sim_cmd = app.add_subcommand("simulate", "generate a KPM CSV dataset");
  fs::path sim_scenario, sim_out;
  std::optional<std::uint64_t> sim_seed;
  sim_cmd->add_option("--scenario", sim_scenario, "scenario JSON file")
      ->required();
  sim_cmd->add_option("--out", sim_out, "output CSV path")->required();
  sim_cmd->add_option("--seed", sim_seed, "override the scenario seed");

  // train
  auto* train_cmd = app.add_subcommand("train", "train the forecaster offline");
  fs::path train_data, train_config, train_out;
  std::optional<std::uint64_t> train_seed;
  bool train_quiet = false;
  train_cmd->add_option("--data", train_data, "KPM CSV dataset")->required();
  train_cmd->add_option("--config", train_config, "model config JSON");
  train_cmd->add_option("--out", train_out, "output directory")->required();
  train_cmd->add_option("--seed", train_seed, "override the config seed");
  train_cmd->add_flag("--quiet", train_quiet, "suppress per-epoch lines");

  // gradcheck
  auto* grad_cmd = app.add_subcommand(
      "gradcheck", "finite-difference check of the BPTT gradients");
  std::uint64_t grad_seed = 7;
  bool grad_corrupt = false;
  grad_cmd->add_option("--seed", grad_seed, "model/data seed");
  grad_cmd->add_flag("--corrupt", grad_corrupt,
                     "perturb one analytic gradient (harness self-test)");

  // run
  auto* run_cmd = app.add_subcommand(
      "run", "end to end: broker + simulator producer + online xApp");
  fs::path run_scenario_path, run_ckpt, run_out;
  std::optional<std::uint64_t> run_seed;
  double run_threshold = 20.0, run_hysteresis = 0.1;
  bool run_no_pacing = false, run_json_summary = false;
  std::optional<int> run_bus_port;
  run_cmd->add_option("--scenario", run_scenario_path, "scenario JSON file")
      ->required();
  run_cmd->add_option("--checkpoint", run_ckpt, "trained checkpoint")
      ->required();
  run_cmd->add_option("--out", run_out, "output directory")->required();
  run_cmd->add_option("--seed", run_seed, "override the scenario seed");
  run_cmd->add_option("--threshold-ms", run_threshold,
                      "defer when the forecast exceeds this");
  run_cmd->add_option("--hysteresis", run_hysteresis,
                      "re-transmit below threshold*(1-h)");
  run_cmd->add_flag("--no-pacing", run_no_pacing,
                    "run faster than the 100 ms reporting period");
  run_cmd->add_option("--bus-port", run_bus_port,
                      "bus TCP port (default $BUS_PORT or 9701; 0 = ephemeral)");
  run_cmd->add_flag("--json-summary", run_json_summary,
                    "print the machine-readable summary to stdout");

  // plot
  auto* plot_cmd = app.add_subcommand(
      "plot", "SVG + tidy CSV of actual vs predicted latency");
  fs::path plot_log, plot_out;
  plot_cmd->add_option("--log", plot_log, "forecast_log.csv from run")
      ->required();
  plot_cmd->add_option("--out", plot_out, "output directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (sim_cmd->parsed()) return cmd_simulate(sim_scenario, sim_out, sim_seed);
    if (train_cmd->parsed()) {
      return cmd_train(train_data, train_config, train_out, train_seed,
                       train_quiet);
    }
    if (grad_cmd->parsed()) return cmd_gradcheck(grad_seed, grad_corrupt);
    if (run_cmd->parsed()) {
      return cmd_run(run_scenario_path, run_ckpt, run_out, run_seed,
                     run_threshold, run_hysteresis, run_no_pacing,
                     run_bus_port, run_json_summary);
    }
    if (plot_cmd->parsed()) return cmd_plot(plot_log, plot_out);
  } catch (const latcast::TrainingDiverged& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 2;
}
