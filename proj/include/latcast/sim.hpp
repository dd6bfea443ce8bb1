#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "latcast/kpm.hpp"
#include "latcast/rng.hpp"

// Deterministic synthetic RAN: stands in for the gNB + UE + traffic-generator
// leg of the pipeline and emits KpmRecord streams at the 100 ms cadence whose
// latency responds to load and channel quality.
//
// Latency model: latency_ms = base_ms + load_gain_ms * u/(1-u) + noise with
// utilization u = min(offered_prb / prb_total_ul, 0.95) and gaussian noise
// clamped so latency >= base_ms/2. SNR follows an AR(1) walk (coefficient
// 0.95) around mean_snr_db; cqi = clamp(round((snr_db + 6) / 2.2), 0, 15).

namespace latcast {

struct TrafficProfile {
  enum class Kind { kConstant, kSinusoid, kBursty, kSinusoidBursty };
  Kind kind = Kind::kConstant;
  // constant
  double rate_mbps = 0.0;
  // sinusoid (also the periodic part of sinusoid_bursty)
  double mean_mbps = 0.0;
  double amplitude_mbps = 0.0;
  double period_s = 60.0;
  // bursty (also the burst part of sinusoid_bursty)
  double base_mbps = 0.0;
  double burst_mbps = 0.0;
  double burst_prob = 0.0;
};

struct ChannelConfig {
  double mean_snr_db = 15.0;
  double snr_jitter_db = 0.0;  // sd of the AR(1) innovation
};

struct LatencyParams {
  double base_ms = 5.0;       // > 0
  double load_gain_ms = 10.0; // >= 0
  double noise_sd_ms = 0.0;   // >= 0
};

struct ScenarioConfig {
  int duration_s = 1;
  std::uint64_t seed = 0;
  int ue_count = 1;
  int prb_total_ul = 106;
  TrafficProfile traffic_profile;
  ChannelConfig channel;
  LatencyParams latency_params;
};

// Throws std::invalid_argument naming the first offending field.
void validate_scenario(const ScenarioConfig& cfg);

// JSON scenario file, field names mirror ScenarioConfig exactly.
ScenarioConfig scenario_from_json(std::string_view text);
std::string scenario_to_json(const ScenarioConfig& cfg);
ScenarioConfig load_scenario_file(const std::filesystem::path& path);

struct SimState {
  std::int64_t t_ms = 0;
  Rng rng{0};
  double current_snr_db = 0.0;
};

SimState init_state(const ScenarioConfig& cfg);

// Offered uplink traffic of the profile at `time_s`; random draws (bursts)
// come from `rng`. Never negative.
double offered_mbps(const TrafficProfile& p, double time_s, Rng& rng);

// Nominal uplink capacity of one PRB under this model.
inline constexpr double kMbpsPerPrb = 0.75;
inline constexpr double kUtilizationCap = 0.95;
inline constexpr double kSnrAr1Coeff = 0.95;

int cqi_from_snr(double snr_db);

// Advances the state by one 100 ms reporting period and emits the record for
// it. Throws std::out_of_range once the scenario is exhausted
// (t_ms >= duration_s * 1000).
KpmRecord step(const ScenarioConfig& cfg, SimState& st);

// All duration_s*10 records of the scenario. Identical (cfg, seed) yield
// byte-identical streams.
std::vector<KpmRecord> run_scenario(const ScenarioConfig& cfg);

}  // namespace latcast
