#include "latcast/xapp.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <thread>

#include "latcast/textio.hpp"

namespace latcast {

const char* verdict_name(Verdict v) {
  return v == Verdict::kTransmit ? "TRANSMIT" : "DEFER";
}

void validate_policy(const PolicyConfig& p) {
  if (!(p.threshold_ms > 0.0)) {
    throw std::invalid_argument("policy threshold_ms must be > 0");
  }
  if (!(p.hysteresis >= 0.0 && p.hysteresis < 1.0)) {
    throw std::invalid_argument("policy hysteresis must be in [0,1)");
  }
}

TxDecision decide(double pred_ms, const std::optional<TxDecision>& prev,
                  const PolicyConfig& policy, std::int64_t ts_ms) {
  if (!std::isfinite(pred_ms)) {
    throw std::invalid_argument("decide: prediction must be finite");
  }
  const double tau = policy.threshold_ms;
  Verdict verdict;
  if (!prev || prev->verdict == Verdict::kTransmit) {
    verdict = pred_ms > tau ? Verdict::kDefer : Verdict::kTransmit;
  } else {
    verdict = pred_ms < tau * (1.0 - policy.hysteresis) ? Verdict::kTransmit
                                                        : Verdict::kDefer;
  }
  return {ts_ms, verdict, pred_ms, tau};
}

XappEngine::XappEngine(Checkpoint ckpt, PolicyConfig policy)
    : ckpt_(std::move(ckpt)), policy_(policy) {
  validate_policy(policy_);
  validate_config(ckpt_.config);
}

IngestResult XappEngine::ingest(const KpmRecord& record) {
  if (last_ts_ && record.ts_ms <= *last_ts_) {
    throw std::runtime_error("out-of-order record: ts_ms " +
                             std::to_string(record.ts_ms) + " after " +
                             std::to_string(*last_ts_));
  }
  ValidationResult vr = validate_record(record);
  if (!vr.ok()) {
    throw std::runtime_error("invalid record at ts_ms " +
                             std::to_string(record.ts_ms) +
                             ", first bad field: " +
                             vr.violations.front().field);
  }
  last_ts_ = record.ts_ms;
  ++consumed_;

  IngestResult result;

  // Back-fill the previous prediction when its target timestamp arrives.
  if (pending_) {
    if (record.ts_ms == pending_->target_ts_ms) {
      result.paired = ForecastRow{record.ts_ms, record.latency_ms,
                                  pending_->predicted_latency_ms,
                                  pending_->verdict};
    }
    pending_.reset();
  }

  const auto lookback = static_cast<std::size_t>(ckpt_.config.lookback);
  ring_.push_back(record);
  if (ring_.size() > lookback) ring_.pop_front();

  if (ring_.size() < lookback) {
    result.event = {record.ts_ms, record.latency_ms, std::nullopt, false};
    return result;
  }

  const std::vector<KpmRecord> window(ring_.begin(), ring_.end());
  const double pred = predict(ckpt_, window);
  const std::int64_t target_ts = record.ts_ms + kReportPeriodMs;

  TxDecision decision = decide(pred, last_decision_, policy_, target_ts);
  last_decision_ = decision;
  pending_ = Pending{target_ts, pred, decision.verdict};

  result.event = {target_ts, std::nullopt, pred, true};
  result.decision = decision;
  return result;
}

void write_forecast_log(const std::filesystem::path& path,
                        const std::vector<ForecastRow>& rows) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open for write: " + path.string());
  os << "ts_ms,actual_latency_ms,predicted_latency_ms,verdict\n";
  for (const ForecastRow& r : rows) {
    os << r.ts_ms << ',' << format_double(r.actual_latency_ms) << ','
       << format_double(r.predicted_latency_ms) << ',' << verdict_name(r.verdict)
       << '\n';
  }
  os.flush();
  if (!os) throw std::runtime_error("write failed: " + path.string());
}

std::vector<ForecastRow> read_forecast_log(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open: " + path.string());
  std::string line;
  if (!std::getline(is, line)) {
    throw std::runtime_error("empty forecast log: " + path.string());
  }
  std::vector<ForecastRow> rows;
  while (std::getline(is, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto fields = split(line, ',');
    if (fields.size() != 4) {
      throw std::runtime_error("bad forecast log row: '" + line + "'");
    }
    // Warm-up style rows without a prediction are skipped.
    if (fields[2].empty()) continue;
    ForecastRow r;
    r.ts_ms = parse_int(fields[0]);
    r.actual_latency_ms = parse_double(fields[1]);
    r.predicted_latency_ms = parse_double(fields[2]);
    if (fields[3] == "TRANSMIT") {
      r.verdict = Verdict::kTransmit;
    } else if (fields[3] == "DEFER") {
      r.verdict = Verdict::kDefer;
    } else {
      throw std::runtime_error("bad verdict in forecast log: '" +
                               std::string(fields[3]) + "'");
    }
    rows.push_back(r);
  }
  return rows;
}

RunOnlineStats run_online(const Checkpoint& ckpt, const PolicyConfig& policy,
                          const RunOnlineOptions& opts) {
  BusClient client =
      BusClient::connect_with_backoff(opts.host, opts.port,
                                      opts.connect_attempts);
  XappEngine engine(ckpt, policy);

  std::ofstream log;
  if (!opts.log_path.empty()) {
    log.open(opts.log_path, std::ios::binary);
    if (!log) {
      throw std::runtime_error("cannot open for write: " +
                               opts.log_path.string());
    }
    log << "ts_ms,actual_latency_ms,predicted_latency_ms,verdict\n";
  }

  RunOnlineStats stats;
  std::uint64_t cursor = client.committed(opts.topic, opts.group);
  auto stopped = [&opts] { return opts.stop && opts.stop->load(); };

  while (!stopped()) {
    std::vector<Entry> entries;
    try {
      entries = client.poll(opts.topic, cursor, opts.poll_max);
    } catch (const BusError& e) {
      // Topic may not exist until the producer's first publish.
      if (std::string(e.what()).find("unknown topic") != std::string::npos) {
        std::this_thread::sleep_for(std::chrono::milliseconds(10));
        continue;
      }
      throw;
    }
    if (entries.empty()) {
      if (opts.expected_records && cursor >= *opts.expected_records) break;
      std::this_thread::sleep_for(std::chrono::milliseconds(5));
      continue;
    }
    for (const Entry& e : entries) {
      const KpmRecord record = record_from_json(e.payload);
      IngestResult res = engine.ingest(record);
      ++stats.records_consumed;
      if (res.paired) {
        stats.rows.push_back(*res.paired);
        if (log.is_open()) {
          const ForecastRow& r = *res.paired;
          log << r.ts_ms << ',' << format_double(r.actual_latency_ms) << ','
              << format_double(r.predicted_latency_ms) << ','
              << verdict_name(r.verdict) << '\n';
        }
      }
      cursor = e.offset + 1;
    }
    client.commit(opts.topic, opts.group, cursor);
    if (opts.expected_records && cursor >= *opts.expected_records) break;
  }

  if (log.is_open()) {
    log.flush();
    if (!log) {
      throw std::runtime_error("write failed: " + opts.log_path.string());
    }
  }
  return stats;
}

}  // namespace latcast
