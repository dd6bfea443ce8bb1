#include <doctest.h>

#include <unistd.h>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "latcast/kpm.hpp"
#include "latcast/model.hpp"
#include "latcast/sim.hpp"
#include "latcast/xapp.hpp"
#include "subprocess.hpp"

using namespace latcast;
using latcast::testing::run_command;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const char* tag) {
    path = fs::temp_directory_path() /
           (std::string("latcast_cli_") + tag + "_" + std::to_string(::getpid()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

std::string q(const fs::path& p) { return "'" + p.string() + "'"; }

std::string read_file(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  REQUIRE(is);
  std::ostringstream buf;
  buf << is.rdbuf();
  return buf.str();
}

fs::path write_scenario(const fs::path& dir) {
  ScenarioConfig cfg;
  cfg.duration_s = 40;
  cfg.seed = 7;
  cfg.prb_total_ul = 106;
  cfg.traffic_profile.kind = TrafficProfile::Kind::kSinusoid;
  cfg.traffic_profile.mean_mbps = 28;
  cfg.traffic_profile.amplitude_mbps = 16;
  cfg.traffic_profile.period_s = 5;
  cfg.channel.mean_snr_db = 17;
  cfg.channel.snr_jitter_db = 1.2;
  cfg.latency_params = {5.0, 22.0, 0.25};
  const fs::path path = dir / "scenario.json";
  std::ofstream os(path);
  os << scenario_to_json(cfg);
  return path;
}

fs::path write_tiny_config(const fs::path& dir) {
  ModelConfig cfg;
  cfg.units = 6;
  cfg.lookback = 10;
  cfg.dropout_p = 0.1;
  cfg.learning_rate = 5e-3;
  cfg.patience = 4;
  cfg.max_epochs = 8;
  cfg.batch_size = 32;
  cfg.seed = 5;
  const fs::path path = dir / "model.json";
  std::ofstream os(path);
  os << model_config_to_json(cfg);
  return path;
}

}  // namespace

TEST_CASE("simulate writes the expected rows and honors the seed") {
  TempDir tmp("simulate");
  const fs::path scenario = write_scenario(tmp.path);

  auto res = run_command(latcast::testing::latcast_bin() + " simulate --scenario " +
                         q(scenario) + " --out " + q(tmp.path / "a.csv"));
  CAPTURE(res.output);
  REQUIRE(res.exit_code == 0);
  CHECK(res.output.find("400 rows") != std::string::npos);

  auto rows = read_csv_file(tmp.path / "a.csv");
  CHECK(rows.size() == 400);  // 40 s at 100 ms

  // Same seed -> identical bytes; different seed -> different bytes.
  run_command(latcast::testing::latcast_bin() + " simulate --scenario " +
              q(scenario) + " --out " + q(tmp.path / "b.csv"));
  CHECK(read_file(tmp.path / "a.csv") == read_file(tmp.path / "b.csv"));
  run_command(latcast::testing::latcast_bin() + " simulate --scenario " +
              q(scenario) + " --out " + q(tmp.path / "c.csv") + " --seed 8");
  CHECK(read_file(tmp.path / "a.csv") != read_file(tmp.path / "c.csv"));

  // Manifest written next to the dataset.
  CHECK(fs::exists(tmp.path / "a.csv.manifest.json"));
}

TEST_CASE("simulate rejects a bad scenario file with exit 2") {
  TempDir tmp("simbad");
  std::ofstream(tmp.path / "broken.json") << "{\"duration_s\": 0}";
  auto res = run_command(latcast::testing::latcast_bin() + " simulate --scenario " +
                         q(tmp.path / "broken.json") + " --out " +
                         q(tmp.path / "x.csv"));
  CHECK(res.exit_code == 2);
}

TEST_CASE("train + run + plot end to end, bitwise reproducible") {
  TempDir tmp("e2e");
  const fs::path scenario = write_scenario(tmp.path);
  const fs::path config = write_tiny_config(tmp.path);
  const std::string bin = latcast::testing::latcast_bin();

  auto sim = run_command(bin + " simulate --scenario " + q(scenario) +
                         " --out " + q(tmp.path / "data.csv"));
  REQUIRE(sim.exit_code == 0);

  auto train_res = run_command(bin + " train --data " + q(tmp.path / "data.csv") +
                               " --config " + q(config) + " --out " +
                               q(tmp.path / "model") + " --quiet");
  CAPTURE(train_res.output);
  REQUIRE(train_res.exit_code == 0);
  CHECK(train_res.output.find("best val loss") != std::string::npos);
  REQUIRE(fs::exists(tmp.path / "model/checkpoint.bin"));

  // One history row per completed epoch.
  {
    std::ifstream is(tmp.path / "model/history.csv");
    std::string line;
    std::getline(is, line);
    CHECK(line == "epoch,train_loss,val_loss");
    int rows = 0;
    while (std::getline(is, line)) {
      if (!line.empty()) ++rows;
    }
    CHECK(rows >= 1);
    CHECK(rows <= 8);  // max_epochs
  }

  auto run1 = run_command(bin + " run --scenario " + q(scenario) +
                          " --checkpoint " + q(tmp.path / "model/checkpoint.bin") +
                          " --out " + q(tmp.path / "run1") +
                          " --no-pacing --bus-port 0 --json-summary");
  CAPTURE(run1.output);
  REQUIRE(run1.exit_code == 0);
  auto run2 = run_command(bin + " run --scenario " + q(scenario) +
                          " --checkpoint " + q(tmp.path / "model/checkpoint.bin") +
                          " --out " + q(tmp.path / "run2") +
                          " --no-pacing --bus-port 0 --json-summary");
  REQUIRE(run2.exit_code == 0);

  const std::string log1 = read_file(tmp.path / "run1/forecast_log.csv");
  CHECK(log1 == read_file(tmp.path / "run2/forecast_log.csv"));

  // Summary MSE equals the loss recomputed offline from the log.
  nlohmann::json summary;
  {
    std::ifstream is(tmp.path / "run1/summary.json");
    is >> summary;
  }
  auto rows = read_forecast_log(tmp.path / "run1/forecast_log.csv");
  REQUIRE(!rows.empty());
  CHECK(rows.size() == 400 - 10);  // records minus lookback
  double mse = 0.0;
  for (const auto& r : rows) {
    const double e = r.predicted_latency_ms - r.actual_latency_ms;
    mse += e * e;
  }
  mse /= static_cast<double>(rows.size());
  CHECK(std::abs(summary.at("mse_ms").get<double>() - mse) <= 1e-9);

  auto plot = run_command(bin + " plot --log " + q(tmp.path / "run1/forecast_log.csv") +
                          " --out " + q(tmp.path / "plots"));
  CAPTURE(plot.output);
  REQUIRE(plot.exit_code == 0);
  CHECK(fs::exists(tmp.path / "plots/plot.svg"));
  const std::string svg = read_file(tmp.path / "plots/plot.svg");
  CHECK(svg.find("<svg") != std::string::npos);
  CHECK(svg.find("class=\"actual\"") != std::string::npos);
  CHECK(svg.find("class=\"predicted\"") != std::string::npos);

  // Tidy CSV mirrors the plotted points exactly.
  std::ifstream tidy(tmp.path / "plots/plot_points.csv");
  std::string line;
  std::getline(tidy, line);
  CHECK(line == "ts_ms,actual_latency_ms,predicted_latency_ms");
  std::size_t tidy_rows = 0;
  while (std::getline(tidy, line)) {
    if (!line.empty()) ++tidy_rows;
  }
  CHECK(tidy_rows == rows.size());
}

TEST_CASE("train exits 2 when the dataset cannot cover the lookback") {
  TempDir tmp("short");
  // 50 rows vs default lookback 60.
  ScenarioConfig cfg;
  cfg.duration_s = 5;
  cfg.seed = 1;
  cfg.traffic_profile.kind = TrafficProfile::Kind::kConstant;
  cfg.traffic_profile.rate_mbps = 10;
  cfg.latency_params = {5, 10, 0};
  std::ofstream(tmp.path / "s.json") << scenario_to_json(cfg);
  run_command(latcast::testing::latcast_bin() + " simulate --scenario " +
              q(tmp.path / "s.json") + " --out " + q(tmp.path / "tiny.csv"));

  auto res = run_command(latcast::testing::latcast_bin() + " train --data " +
                         q(tmp.path / "tiny.csv") + " --out " +
                         q(tmp.path / "model") + " --quiet");
  CHECK(res.exit_code == 2);
  CHECK(res.output.find("lookback") != std::string::npos);
}

TEST_CASE("run paces at the reporting period by default") {
  TempDir tmp("paced");
  ScenarioConfig cfg;
  cfg.duration_s = 2;  // 20 records, ~2 s paced
  cfg.seed = 3;
  cfg.traffic_profile.kind = TrafficProfile::Kind::kConstant;
  cfg.traffic_profile.rate_mbps = 20;
  cfg.channel.mean_snr_db = 15;
  cfg.latency_params = {5, 10, 0};
  std::ofstream(tmp.path / "s.json") << scenario_to_json(cfg);
  cfg.duration_s = 10;  // longer stream for training
  std::ofstream(tmp.path / "train_s.json") << scenario_to_json(cfg);
  const std::string bin = latcast::testing::latcast_bin();
  run_command(bin + " simulate --scenario " + q(tmp.path / "train_s.json") +
              " --out " + q(tmp.path / "d.csv"));

  ModelConfig mc;
  mc.units = 4;
  mc.lookback = 5;
  mc.learning_rate = 1e-2;
  mc.patience = 2;
  mc.max_epochs = 2;
  mc.seed = 1;
  std::ofstream(tmp.path / "cfg.json") << model_config_to_json(mc);
  auto tr = run_command(bin + " train --data " + q(tmp.path / "d.csv") +
                        " --config " + q(tmp.path / "cfg.json") + " --out " +
                        q(tmp.path / "m") + " --quiet");
  REQUIRE(tr.exit_code == 0);

  const auto t0 = std::chrono::steady_clock::now();
  auto res = run_command(bin + " run --scenario " + q(tmp.path / "s.json") +
                         " --checkpoint " + q(tmp.path / "m/checkpoint.bin") +
                         " --out " + q(tmp.path / "r") + " --bus-port 0");
  const auto wall = std::chrono::steady_clock::now() - t0;
  CHECK(res.exit_code == 0);
  // 20 records at 100 ms each: the paced run cannot finish much faster.
  CHECK(wall >= std::chrono::milliseconds(1800));
  CHECK(read_forecast_log(tmp.path / "r/forecast_log.csv").size() == 15);
}

TEST_CASE("train divergence exits 3") {
  TempDir tmp("diverge");
  const fs::path scenario = write_scenario(tmp.path);
  const std::string bin = latcast::testing::latcast_bin();
  run_command(bin + " simulate --scenario " + q(scenario) + " --out " +
              q(tmp.path / "d.csv"));
  ModelConfig cfg;
  cfg.units = 4;
  cfg.lookback = 10;
  cfg.learning_rate = 1e150;  // guaranteed overflow
  cfg.patience = 4;
  cfg.max_epochs = 5;
  cfg.seed = 1;
  std::ofstream(tmp.path / "cfg.json") << model_config_to_json(cfg);
  auto res = run_command(bin + " train --data " + q(tmp.path / "d.csv") +
                         " --config " + q(tmp.path / "cfg.json") + " --out " +
                         q(tmp.path / "m") + " --quiet");
  CHECK(res.exit_code == 3);
  CHECK(res.output.find("error") != std::string::npos);
}

TEST_CASE("gradcheck exits 0 and reports every tensor once") {
  auto res = run_command(latcast::testing::latcast_bin() + " gradcheck");
  CAPTURE(res.output);
  CHECK(res.exit_code == 0);
  CHECK(res.output.find("PASS") != std::string::npos);
  // Every tensor appears as exactly one table row (first token of a line).
  std::istringstream lines(res.output);
  std::map<std::string, int> row_count;
  std::string line;
  while (std::getline(lines, line)) {
    std::istringstream cells(line);
    std::string token;
    if (cells >> token) ++row_count[token];
  }
  for (const char* name : {"w_in_fwd", "w_rec_fwd", "bias_fwd", "w_in_bwd",
                           "w_rec_bwd", "bias_bwd", "head_w", "head_bias"}) {
    CHECK(row_count[name] == 1);
  }
}

TEST_CASE("gradcheck with a corrupted gradient path exits 1") {
  auto res = run_command(latcast::testing::latcast_bin() + " gradcheck --corrupt");
  CAPTURE(res.output);
  CHECK(res.exit_code == 1);
  CHECK(res.output.find("FAIL") != std::string::npos);
  CHECK(res.output.find("w_in_fwd") != std::string::npos);  // worst named
}

TEST_CASE("plot exits 2 on an empty log") {
  TempDir tmp("emptylog");
  std::ofstream(tmp.path / "log.csv")
      << "ts_ms,actual_latency_ms,predicted_latency_ms,verdict\n";
  auto res = run_command(latcast::testing::latcast_bin() + " plot --log " +
                         q(tmp.path / "log.csv") + " --out " +
                         q(tmp.path / "plots"));
  CHECK(res.exit_code == 2);
}

TEST_CASE("plot: coincident series produce identical point sets") {
  TempDir tmp("coincide");
  std::vector<ForecastRow> rows;
  for (int i = 0; i < 20; ++i) {
    rows.push_back({i * 100, 12.0 + i, 12.0 + i, Verdict::kTransmit});
  }
  write_forecast_log(tmp.path / "log.csv", rows);
  auto res = run_command(latcast::testing::latcast_bin() + " plot --log " +
                         q(tmp.path / "log.csv") + " --out " +
                         q(tmp.path / "plots"));
  REQUIRE(res.exit_code == 0);
  const std::string svg = read_file(tmp.path / "plots/plot.svg");
  auto points_of = [&svg](const std::string& cls) {
    const auto at = svg.find("class=\"" + cls + "\"");
    REQUIRE(at != std::string::npos);
    const auto start = svg.find("points=\"", at) + 8;
    return svg.substr(start, svg.find('"', start) - start);
  };
  CHECK(points_of("actual") == points_of("predicted"));
}

TEST_CASE("run exits 2 when the bus port is taken") {
  TempDir tmp("port");
  const fs::path scenario = write_scenario(tmp.path);
  const fs::path config = write_tiny_config(tmp.path);
  const std::string bin = latcast::testing::latcast_bin();
  run_command(bin + " simulate --scenario " + q(scenario) + " --out " +
              q(tmp.path / "d.csv"));
  auto tr = run_command(bin + " train --data " + q(tmp.path / "d.csv") +
                        " --config " + q(config) + " --out " +
                        q(tmp.path / "m") + " --quiet");
  REQUIRE(tr.exit_code == 0);

  Broker broker(tmp.path / "occupied_bus");
  BusServer server(broker, 0);  // occupy an ephemeral port
  auto res = run_command(bin + " run --scenario " + q(scenario) +
                         " --checkpoint " + q(tmp.path / "m/checkpoint.bin") +
                         " --out " + q(tmp.path / "r") + " --no-pacing" +
                         " --bus-port " + std::to_string(server.port()));
  CHECK(res.exit_code == 2);
  CHECK(res.output.find("bind") != std::string::npos);
}

TEST_CASE("run respects BUS_PORT from the environment") {
  TempDir tmp("busenv");
  const fs::path scenario = write_scenario(tmp.path);
  const fs::path config = write_tiny_config(tmp.path);
  const std::string bin = latcast::testing::latcast_bin();
  run_command(bin + " simulate --scenario " + q(scenario) + " --out " +
              q(tmp.path / "d.csv"));
  auto tr = run_command(bin + " train --data " + q(tmp.path / "d.csv") +
                        " --config " + q(config) + " --out " +
                        q(tmp.path / "m") + " --quiet");
  REQUIRE(tr.exit_code == 0);
  // Point BUS_PORT at an occupied port: the run must fail with exit 2,
  // proving the variable is honored.
  Broker broker(tmp.path / "bus2");
  BusServer server(broker, 0);
  auto res = run_command("BUS_PORT=" + std::to_string(server.port()) + " " +
                         bin + " run --scenario " + q(scenario) +
                         " --checkpoint " + q(tmp.path / "m/checkpoint.bin") +
                         " --out " + q(tmp.path / "r"));
  CHECK(res.exit_code == 2);
}

TEST_CASE("checkpoint/config mismatch at run time exits 2") {
  TempDir tmp("mismatch");
  const fs::path scenario = write_scenario(tmp.path);
  auto res = run_command(latcast::testing::latcast_bin() + " run --scenario " +
                         q(scenario) + " --checkpoint " +
                         q(tmp.path / "missing.bin") + " --out " +
                         q(tmp.path / "r") + " --no-pacing --bus-port 0");
  CHECK(res.exit_code == 2);
}

TEST_CASE("manifests record the invocation before outputs are produced") {
  TempDir tmp("manifest");
  const fs::path scenario = write_scenario(tmp.path);
  run_command(latcast::testing::latcast_bin() + " simulate --scenario " +
              q(scenario) + " --out " + q(tmp.path / "d.csv") + " --seed 99");
  nlohmann::json manifest;
  {
    std::ifstream is(tmp.path / "d.csv.manifest.json");
    REQUIRE(is);
    is >> manifest;
  }
  CHECK(manifest.at("subcommand") == "simulate");
  CHECK(manifest.at("seed") == 99);
  CHECK(manifest.at("config_paths").contains("scenario"));
  CHECK(manifest.contains("tool_version"));
}
