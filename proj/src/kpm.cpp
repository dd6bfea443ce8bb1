#include "latcast/kpm.hpp"

#include <cmath>
#include <fstream>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "latcast/textio.hpp"

namespace latcast {

bool ValidationResult::names(std::string_view field) const {
  for (const auto& v : violations) {
    if (v.field == field) return true;
  }
  return false;
}

ValidationResult validate_record(const KpmRecord& r) {
  ValidationResult res;
  auto bad = [&res](std::string field, std::string detail) {
    res.violations.push_back({std::move(field), std::move(detail)});
  };

  if (r.ue_count < 0) bad("ue_count", "must be >= 0");
  if (!(r.latency_ms >= 0.0)) bad("latency_ms", "must be >= 0");
  if (r.prb_total_ul < 1) bad("prb_total_ul", "must be >= 1");
  if (r.prb_avail_ul < 0) {
    bad("prb_avail_ul", "must be >= 0");
  } else if (r.prb_avail_ul > r.prb_total_ul) {
    bad("prb_avail_ul", "exceeds prb_total_ul");
  }
  if (!(r.ul_pkt_success_rate >= 0.0 && r.ul_pkt_success_rate <= 1.0)) {
    bad("ul_pkt_success_rate", "must be in [0,1]");
  }
  if (!(r.ul_sdu_volume >= 0.0)) bad("ul_sdu_volume", "must be >= 0");
  if (!(r.ul_throughput >= 0.0)) bad("ul_throughput", "must be >= 0");
  if (!(r.air_if_delay_ms >= 0.0)) bad("air_if_delay_ms", "must be >= 0");
  if (!std::isfinite(r.snr_db)) bad("snr_db", "must be finite");
  if (r.cqi < 0 || r.cqi > 15) bad("cqi", "must be in [0,15]");
  return res;
}

namespace {

void require_valid(const KpmRecord& r) {
  ValidationResult res = validate_record(r);
  if (res.ok()) return;
  std::string msg = "invalid KpmRecord:";
  for (const auto& v : res.violations) {
    msg += " " + v.field + " (" + v.detail + ");";
  }
  throw std::invalid_argument(msg);
}

}  // namespace

FeatureVector to_feature_vector(const KpmRecord& r) {
  require_valid(r);
  FeatureVector v;
  v[kFeatUeCount] = static_cast<double>(r.ue_count);
  v[kFeatLatencyMs] = r.latency_ms;
  v[kFeatPrbAvailUl] = static_cast<double>(r.prb_avail_ul);
  v[kFeatPrbTotalUl] = static_cast<double>(r.prb_total_ul);
  v[kFeatUlPktSuccessRate] = r.ul_pkt_success_rate;
  v[kFeatUlSduVolume] = r.ul_sdu_volume;
  v[kFeatUlThroughput] = r.ul_throughput;
  v[kFeatAirIfDelayMs] = r.air_if_delay_ms;
  v[kFeatSnrDb] = r.snr_db;
  v[kFeatCqi] = static_cast<double>(r.cqi);
  return v;
}

KpmRecord record_from_features(std::int64_t ts_ms, const FeatureVector& v) {
  KpmRecord r;
  r.ts_ms = ts_ms;
  r.ue_count = static_cast<int>(v[kFeatUeCount]);
  r.latency_ms = v[kFeatLatencyMs];
  r.prb_avail_ul = static_cast<int>(v[kFeatPrbAvailUl]);
  r.prb_total_ul = static_cast<int>(v[kFeatPrbTotalUl]);
  r.ul_pkt_success_rate = v[kFeatUlPktSuccessRate];
  r.ul_sdu_volume = v[kFeatUlSduVolume];
  r.ul_throughput = v[kFeatUlThroughput];
  r.air_if_delay_ms = v[kFeatAirIfDelayMs];
  r.snr_db = v[kFeatSnrDb];
  r.cqi = static_cast<int>(v[kFeatCqi]);
  return r;
}

void write_csv(std::ostream& os, std::span<const KpmRecord> records) {
  os << kCsvHeader << '\n';
  for (const KpmRecord& r : records) {
    os << r.ts_ms << ',' << r.ue_count << ',' << format_double(r.latency_ms)
       << ',' << r.prb_avail_ul << ',' << r.prb_total_ul << ','
       << format_double(r.ul_pkt_success_rate) << ','
       << format_double(r.ul_sdu_volume) << ','
       << format_double(r.ul_throughput) << ','
       << format_double(r.air_if_delay_ms) << ',' << format_double(r.snr_db)
       << ',' << r.cqi << '\n';
  }
}

void write_csv_file(const std::filesystem::path& path,
                    std::span<const KpmRecord> records) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open for write: " + path.string());
  write_csv(os, records);
  os.flush();
  if (!os) throw std::runtime_error("write failed: " + path.string());
}

std::vector<KpmRecord> read_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw std::runtime_error("empty CSV stream");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kCsvHeader) {
    throw std::runtime_error("unexpected CSV header: '" + line + "'");
  }

  std::vector<KpmRecord> records;
  std::int64_t line_no = 1;
  std::int64_t prev_ts = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto fields = split(line, ',');
    if (fields.size() != 11) {
      throw std::runtime_error("line " + std::to_string(line_no) +
                               ": expected 11 fields, got " +
                               std::to_string(fields.size()));
    }
    KpmRecord r;
    try {
      r.ts_ms = parse_int(fields[0]);
      r.ue_count = static_cast<int>(parse_int(fields[1]));
      r.latency_ms = parse_double(fields[2]);
      r.prb_avail_ul = static_cast<int>(parse_int(fields[3]));
      r.prb_total_ul = static_cast<int>(parse_int(fields[4]));
      r.ul_pkt_success_rate = parse_double(fields[5]);
      r.ul_sdu_volume = parse_double(fields[6]);
      r.ul_throughput = parse_double(fields[7]);
      r.air_if_delay_ms = parse_double(fields[8]);
      r.snr_db = parse_double(fields[9]);
      r.cqi = static_cast<int>(parse_int(fields[10]));
    } catch (const std::invalid_argument& e) {
      throw std::runtime_error("line " + std::to_string(line_no) + ": " +
                               e.what());
    }
    ValidationResult res = validate_record(r);
    if (!res.ok()) {
      throw std::runtime_error("line " + std::to_string(line_no) +
                               ": invalid record, first bad field: " +
                               res.violations.front().field);
    }
    if (!records.empty() && r.ts_ms <= prev_ts) {
      throw std::runtime_error("line " + std::to_string(line_no) +
                               ": ts_ms not strictly increasing");
    }
    prev_ts = r.ts_ms;
    records.push_back(r);
  }
  return records;
}

std::vector<KpmRecord> read_csv_file(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open: " + path.string());
  return read_csv(is);
}

std::string record_to_json(const KpmRecord& r) {
  nlohmann::json j;
  j["ts_ms"] = r.ts_ms;
  j["ue_count"] = r.ue_count;
  j["latency_ms"] = r.latency_ms;
  j["prb_avail_ul"] = r.prb_avail_ul;
  j["prb_total_ul"] = r.prb_total_ul;
  j["ul_pkt_success_rate"] = r.ul_pkt_success_rate;
  j["ul_sdu_volume"] = r.ul_sdu_volume;
  j["ul_throughput"] = r.ul_throughput;
  j["air_if_delay_ms"] = r.air_if_delay_ms;
  j["snr_db"] = r.snr_db;
  j["cqi"] = r.cqi;
  return j.dump();
}

KpmRecord record_from_json(std::string_view json) {
  nlohmann::json j = nlohmann::json::parse(json);
  KpmRecord r;
  r.ts_ms = j.at("ts_ms").get<std::int64_t>();
  r.ue_count = j.at("ue_count").get<int>();
  r.latency_ms = j.at("latency_ms").get<double>();
  r.prb_avail_ul = j.at("prb_avail_ul").get<int>();
  r.prb_total_ul = j.at("prb_total_ul").get<int>();
  r.ul_pkt_success_rate = j.at("ul_pkt_success_rate").get<double>();
  r.ul_sdu_volume = j.at("ul_sdu_volume").get<double>();
  r.ul_throughput = j.at("ul_throughput").get<double>();
  r.air_if_delay_ms = j.at("air_if_delay_ms").get<double>();
  r.snr_db = j.at("snr_db").get<double>();
  r.cqi = j.at("cqi").get<int>();
  return r;
}

}  // namespace latcast
