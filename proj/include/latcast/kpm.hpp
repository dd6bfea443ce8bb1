#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

// Canonical KPM data model: the record every other module consumes, its
// validation rules, and the fixed feature-vector encoding shared by training
// and inference.

namespace latcast {

inline constexpr int kFeatureCount = 10;
inline constexpr std::int64_t kReportPeriodMs = 100;

using FeatureVector = Eigen::Matrix<double, kFeatureCount, 1>;

// Canonical feature order. This is a frozen contract: the CSV column order,
// the scaler, the model input layout and the checkpoint format all assume it.
enum FeatureIndex : int {
  kFeatUeCount = 0,
  kFeatLatencyMs = 1,
  kFeatPrbAvailUl = 2,
  kFeatPrbTotalUl = 3,
  kFeatUlPktSuccessRate = 4,
  kFeatUlSduVolume = 5,
  kFeatUlThroughput = 6,
  kFeatAirIfDelayMs = 7,
  kFeatSnrDb = 8,
  kFeatCqi = 9,
};

// One KPM report covering a single 100 ms reporting period.
struct KpmRecord {
  std::int64_t ts_ms = 0;             // milliseconds since stream epoch
  int ue_count = 0;                   // connected UEs
  double latency_ms = 0.0;            // measured uplink latency
  int prb_avail_ul = 0;               // available uplink PRBs
  int prb_total_ul = 1;               // total uplink PRBs
  double ul_pkt_success_rate = 0.0;   // in [0,1]
  double ul_sdu_volume = 0.0;         // KB transmitted in the period
  double ul_throughput = 0.0;         // Mbit/s
  double air_if_delay_ms = 0.0;
  double snr_db = 0.0;
  int cqi = 0;                        // 4-bit 3GPP range [0,15]

  friend bool operator==(const KpmRecord&, const KpmRecord&) = default;
};

struct Violation {
  std::string field;
  std::string detail;
};

struct ValidationResult {
  std::vector<Violation> violations;
  bool ok() const { return violations.empty(); }
  // True iff `field` appears among the violations.
  bool names(std::string_view field) const;
};

// Checks every per-record invariant; violations are returned, never thrown.
// (The cross-record invariant, strictly increasing ts_ms, is enforced by the
// stream readers.)
ValidationResult validate_record(const KpmRecord& r);

// Encodes a valid record in the canonical order, integers widened to doubles.
// Throws std::invalid_argument naming the violated fields on invalid input.
FeatureVector to_feature_vector(const KpmRecord& r);

// Inverse of to_feature_vector for valid records (ts_ms is not a feature and
// is supplied separately).
KpmRecord record_from_features(std::int64_t ts_ms, const FeatureVector& v);

// --- CSV dataset format -----------------------------------------------------

inline constexpr std::string_view kCsvHeader =
    "ts_ms,ue_count,latency_ms,prb_avail_ul,prb_total_ul,ul_pkt_success_rate,"
    "ul_sdu_volume,ul_throughput,air_if_delay_ms,snr_db,cqi";

void write_csv(std::ostream& os, std::span<const KpmRecord> records);
void write_csv_file(const std::filesystem::path& path,
                    std::span<const KpmRecord> records);

// Parses, validates each row and enforces strictly increasing ts_ms.
// Throws std::runtime_error with the line number on any defect.
std::vector<KpmRecord> read_csv(std::istream& is);
std::vector<KpmRecord> read_csv_file(const std::filesystem::path& path);

// --- JSON message body (stream_bus payload schema) ---------------------------

std::string record_to_json(const KpmRecord& r);
KpmRecord record_from_json(std::string_view json);

}  // namespace latcast
