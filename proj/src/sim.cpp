#include "latcast/sim.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace latcast {

namespace {

[[noreturn]] void bad_field(const std::string& field, const std::string& why) {
  throw std::invalid_argument("scenario field " + field + ": " + why);
}

}  // namespace

void validate_scenario(const ScenarioConfig& cfg) {
  if (cfg.duration_s < 1) bad_field("duration_s", "must be >= 1");
  if (cfg.ue_count < 1) bad_field("ue_count", "must be >= 1");
  if (cfg.prb_total_ul < 1) bad_field("prb_total_ul", "must be >= 1");

  const TrafficProfile& p = cfg.traffic_profile;
  using Kind = TrafficProfile::Kind;
  if (p.kind == Kind::kConstant) {
    if (p.rate_mbps < 0) bad_field("traffic_profile.rate_mbps", "must be >= 0");
  }
  if (p.kind == Kind::kSinusoid || p.kind == Kind::kSinusoidBursty) {
    if (p.mean_mbps < 0) bad_field("traffic_profile.mean_mbps", "must be >= 0");
    if (p.amplitude_mbps < 0 || p.amplitude_mbps > p.mean_mbps) {
      bad_field("traffic_profile.amplitude_mbps", "must be in [0, mean_mbps]");
    }
    if (p.period_s <= 0) bad_field("traffic_profile.period_s", "must be > 0");
  }
  if (p.kind == Kind::kBursty || p.kind == Kind::kSinusoidBursty) {
    if (p.kind == Kind::kBursty && p.base_mbps < 0) {
      bad_field("traffic_profile.base_mbps", "must be >= 0");
    }
    if (p.burst_mbps < 0) bad_field("traffic_profile.burst_mbps", "must be >= 0");
    if (p.burst_prob < 0 || p.burst_prob > 1) {
      bad_field("traffic_profile.burst_prob", "must be in [0,1]");
    }
  }
  if (cfg.channel.snr_jitter_db < 0) {
    bad_field("channel.snr_jitter_db", "must be >= 0");
  }
  if (!(cfg.latency_params.base_ms > 0)) {
    bad_field("latency_params.base_ms", "must be > 0");
  }
  if (cfg.latency_params.load_gain_ms < 0) {
    bad_field("latency_params.load_gain_ms", "must be >= 0");
  }
  if (cfg.latency_params.noise_sd_ms < 0) {
    bad_field("latency_params.noise_sd_ms", "must be >= 0");
  }
}

namespace {

TrafficProfile::Kind kind_from_string(const std::string& s) {
  using Kind = TrafficProfile::Kind;
  if (s == "constant") return Kind::kConstant;
  if (s == "sinusoid") return Kind::kSinusoid;
  if (s == "bursty") return Kind::kBursty;
  if (s == "sinusoid_bursty") return Kind::kSinusoidBursty;
  bad_field("traffic_profile.kind", "unknown kind '" + s + "'");
}

std::string kind_to_string(TrafficProfile::Kind k) {
  using Kind = TrafficProfile::Kind;
  switch (k) {
    case Kind::kConstant: return "constant";
    case Kind::kSinusoid: return "sinusoid";
    case Kind::kBursty: return "bursty";
    case Kind::kSinusoidBursty: return "sinusoid_bursty";
  }
  throw std::logic_error("unreachable traffic kind");
}

}  // namespace

ScenarioConfig scenario_from_json(std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw std::invalid_argument(std::string("scenario is not valid JSON: ") +
                                e.what());
  }
  ScenarioConfig cfg;
  try {
    cfg.duration_s = j.at("duration_s").get<int>();
    cfg.seed = j.at("seed").get<std::uint64_t>();
    cfg.ue_count = j.at("ue_count").get<int>();
    cfg.prb_total_ul = j.value("prb_total_ul", 106);

    const auto& tp = j.at("traffic_profile");
    TrafficProfile& p = cfg.traffic_profile;
    p.kind = kind_from_string(tp.at("kind").get<std::string>());
    p.rate_mbps = tp.value("rate_mbps", 0.0);
    p.mean_mbps = tp.value("mean_mbps", 0.0);
    p.amplitude_mbps = tp.value("amplitude_mbps", 0.0);
    p.period_s = tp.value("period_s", 60.0);
    p.base_mbps = tp.value("base_mbps", 0.0);
    p.burst_mbps = tp.value("burst_mbps", 0.0);
    p.burst_prob = tp.value("burst_prob", 0.0);

    const auto& ch = j.at("channel");
    cfg.channel.mean_snr_db = ch.at("mean_snr_db").get<double>();
    cfg.channel.snr_jitter_db = ch.value("snr_jitter_db", 0.0);

    const auto& lp = j.at("latency_params");
    cfg.latency_params.base_ms = lp.at("base_ms").get<double>();
    cfg.latency_params.load_gain_ms = lp.value("load_gain_ms", 0.0);
    cfg.latency_params.noise_sd_ms = lp.value("noise_sd_ms", 0.0);
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("bad scenario file: ") + e.what());
  }
  validate_scenario(cfg);
  return cfg;
}

std::string scenario_to_json(const ScenarioConfig& cfg) {
  nlohmann::json tp;
  tp["kind"] = kind_to_string(cfg.traffic_profile.kind);
  using Kind = TrafficProfile::Kind;
  switch (cfg.traffic_profile.kind) {
    case Kind::kConstant:
      tp["rate_mbps"] = cfg.traffic_profile.rate_mbps;
      break;
    case Kind::kSinusoid:
      tp["mean_mbps"] = cfg.traffic_profile.mean_mbps;
      tp["amplitude_mbps"] = cfg.traffic_profile.amplitude_mbps;
      tp["period_s"] = cfg.traffic_profile.period_s;
      break;
    case Kind::kBursty:
      tp["base_mbps"] = cfg.traffic_profile.base_mbps;
      tp["burst_mbps"] = cfg.traffic_profile.burst_mbps;
      tp["burst_prob"] = cfg.traffic_profile.burst_prob;
      break;
    case Kind::kSinusoidBursty:
      tp["mean_mbps"] = cfg.traffic_profile.mean_mbps;
      tp["amplitude_mbps"] = cfg.traffic_profile.amplitude_mbps;
      tp["period_s"] = cfg.traffic_profile.period_s;
      tp["burst_mbps"] = cfg.traffic_profile.burst_mbps;
      tp["burst_prob"] = cfg.traffic_profile.burst_prob;
      break;
  }
  nlohmann::json j;
  j["duration_s"] = cfg.duration_s;
  j["seed"] = cfg.seed;
  j["ue_count"] = cfg.ue_count;
  j["prb_total_ul"] = cfg.prb_total_ul;
  j["traffic_profile"] = tp;
  j["channel"] = {{"mean_snr_db", cfg.channel.mean_snr_db},
                  {"snr_jitter_db", cfg.channel.snr_jitter_db}};
  j["latency_params"] = {{"base_ms", cfg.latency_params.base_ms},
                         {"load_gain_ms", cfg.latency_params.load_gain_ms},
                         {"noise_sd_ms", cfg.latency_params.noise_sd_ms}};
  return j.dump(2);
}

ScenarioConfig load_scenario_file(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::invalid_argument("cannot open scenario: " + path.string());
  std::ostringstream buf;
  buf << is.rdbuf();
  return scenario_from_json(buf.str());
}

SimState init_state(const ScenarioConfig& cfg) {
  validate_scenario(cfg);
  SimState st;
  st.t_ms = 0;
  st.rng = Rng(cfg.seed);
  st.current_snr_db = cfg.channel.mean_snr_db;
  return st;
}

double offered_mbps(const TrafficProfile& p, double time_s, Rng& rng) {
  using Kind = TrafficProfile::Kind;
  double rate = 0.0;
  switch (p.kind) {
    case Kind::kConstant:
      rate = p.rate_mbps;
      break;
    case Kind::kSinusoid:
      rate = p.mean_mbps + p.amplitude_mbps *
                               std::sin(2.0 * std::numbers::pi * time_s /
                                        p.period_s);
      break;
    case Kind::kBursty:
      rate = p.base_mbps + (rng.uniform01() < p.burst_prob ? p.burst_mbps : 0.0);
      break;
    case Kind::kSinusoidBursty:
      rate = p.mean_mbps +
             p.amplitude_mbps *
                 std::sin(2.0 * std::numbers::pi * time_s / p.period_s) +
             (rng.uniform01() < p.burst_prob ? p.burst_mbps : 0.0);
      break;
  }
  return std::max(rate, 0.0);
}

int cqi_from_snr(double snr_db) {
  long q = std::lround((snr_db + 6.0) / 2.2);
  return static_cast<int>(std::clamp(q, 0L, 15L));
}

KpmRecord step(const ScenarioConfig& cfg, SimState& st) {
  if (st.t_ms >= static_cast<std::int64_t>(cfg.duration_s) * 1000) {
    throw std::out_of_range("scenario exhausted at t_ms=" +
                            std::to_string(st.t_ms));
  }
  const double time_s = static_cast<double>(st.t_ms) / 1000.0;

  // Fixed draw order: traffic burst, SNR innovation, latency noise.
  const double offered = offered_mbps(cfg.traffic_profile, time_s, st.rng);
  const double offered_prb = offered / kMbpsPerPrb;
  const double u =
      std::min(offered_prb / static_cast<double>(cfg.prb_total_ul),
               kUtilizationCap);

  st.current_snr_db = cfg.channel.mean_snr_db +
                      kSnrAr1Coeff * (st.current_snr_db - cfg.channel.mean_snr_db) +
                      (cfg.channel.snr_jitter_db > 0.0
                           ? cfg.channel.snr_jitter_db * st.rng.normal()
                           : 0.0);
  const int cqi = cqi_from_snr(st.current_snr_db);

  const LatencyParams& lp = cfg.latency_params;
  double latency = lp.base_ms + lp.load_gain_ms * u / (1.0 - u);
  if (lp.noise_sd_ms > 0.0) latency += lp.noise_sd_ms * st.rng.normal();
  latency = std::max(latency, lp.base_ms / 2.0);

  const double success =
      std::clamp(1.0 - 0.05 * u - 0.005 * (15.0 - cqi), 0.0, 1.0);
  const int prb_used =
      static_cast<int>(std::lround(u * static_cast<double>(cfg.prb_total_ul)));

  KpmRecord r;
  r.ts_ms = st.t_ms;
  r.ue_count = cfg.ue_count;
  r.latency_ms = latency;
  r.prb_avail_ul = cfg.prb_total_ul - prb_used;
  r.prb_total_ul = cfg.prb_total_ul;
  r.ul_pkt_success_rate = success;
  r.ul_sdu_volume = offered * 12.5;  // Mbit/s over 100 ms, in KB
  r.ul_throughput = offered * success;
  r.air_if_delay_ms = 0.3 * latency;
  r.snr_db = st.current_snr_db;
  r.cqi = cqi;

  st.t_ms += kReportPeriodMs;
  return r;
}

std::vector<KpmRecord> run_scenario(const ScenarioConfig& cfg) {
  SimState st = init_state(cfg);
  const std::size_t n =
      static_cast<std::size_t>(cfg.duration_s) * (1000 / kReportPeriodMs);
  std::vector<KpmRecord> records;
  records.reserve(n);
  for (std::size_t i = 0; i < n; ++i) records.push_back(step(cfg, st));
  return records;
}

}  // namespace latcast
