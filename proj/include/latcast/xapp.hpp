#pragma once

#include <atomic>
#include <deque>
#include <optional>
#include <string>
#include <vector>

#include "latcast/bus.hpp"
#include "latcast/checkpoint.hpp"
#include "latcast/predict.hpp"

// The online xApp: consumes the KPM topic, keeps the lookback ring, forecasts
// the next-step latency and gates transmissions through a hysteresis policy.

namespace latcast {

enum class Verdict { kTransmit, kDefer };

const char* verdict_name(Verdict v);

struct PolicyConfig {
  double threshold_ms = 20.0;  // tau > 0
  double hysteresis = 0.1;     // h in [0,1)
};

void validate_policy(const PolicyConfig& p);

struct TxDecision {
  std::int64_t ts_ms = 0;
  Verdict verdict = Verdict::kTransmit;
  double predicted_latency_ms = 0.0;
  double threshold_ms = 0.0;
};

// Two-state gate: from TRANSMIT (or no prior decision) defer iff pred > tau;
// from DEFER transmit iff pred < tau*(1-h). Predictions inside the band keep
// the previous verdict, so the gate cannot oscillate there.
TxDecision decide(double pred_ms, const std::optional<TxDecision>& prev,
                  const PolicyConfig& policy, std::int64_t ts_ms = 0);

struct ForecastEvent {
  std::int64_t ts_ms = 0;
  std::optional<double> actual_latency_ms;
  std::optional<double> predicted_latency_ms;  // only when window_complete
  bool window_complete = false;
};

// One paired actual/predicted sample, finalized when the predicted
// timestamp's record arrives.
struct ForecastRow {
  std::int64_t ts_ms = 0;
  double actual_latency_ms = 0.0;
  double predicted_latency_ms = 0.0;
  Verdict verdict = Verdict::kTransmit;
};

struct IngestResult {
  ForecastEvent event;
  std::optional<ForecastRow> paired;     // completed actual/predicted pair
  std::optional<TxDecision> decision;    // issued alongside each prediction
};

class XappEngine {
 public:
  XappEngine(Checkpoint ckpt, PolicyConfig policy);

  // Records must arrive in strictly increasing ts order; invalid or
  // out-of-order records throw. Warm-up records yield events with
  // window_complete=false; from the lookback-th record on, each ingest emits
  // a prediction for the next reporting period and a transmit decision, and
  // back-fills the pair once the predicted timestamp's record arrives.
  IngestResult ingest(const KpmRecord& record);

  std::int64_t records_consumed() const { return consumed_; }
  const std::optional<TxDecision>& last_decision() const { return last_decision_; }

 private:
  Checkpoint ckpt_;
  PolicyConfig policy_;
  std::deque<KpmRecord> ring_;
  std::optional<std::int64_t> last_ts_;
  std::int64_t consumed_ = 0;

  struct Pending {
    std::int64_t target_ts_ms;
    double predicted_latency_ms;
    Verdict verdict;
  };
  std::optional<Pending> pending_;
  std::optional<TxDecision> last_decision_;
};

struct RunOnlineOptions {
  std::string host = "127.0.0.1";
  std::uint16_t port = kDefaultBusPort;
  std::string topic = "kpm";
  std::string group = "xapp";
  std::filesystem::path log_path;                // forecast_log.csv
  std::optional<std::uint64_t> expected_records; // stop once consumed
  int connect_attempts = 6;
  std::size_t poll_max = 500;
  const std::atomic<bool>* stop = nullptr;       // graceful-shutdown flag
};

struct RunOnlineStats {
  std::uint64_t records_consumed = 0;
  std::vector<ForecastRow> rows;
};

// poll -> ingest -> decide -> commit loop; resumes from the committed cursor
// and commits after each processed batch (at-least-once). Writes the paired
// log as it goes and flushes on shutdown.
RunOnlineStats run_online(const Checkpoint& ckpt, const PolicyConfig& policy,
                          const RunOnlineOptions& opts);

// forecast_log.csv: header ts_ms,actual_latency_ms,predicted_latency_ms,verdict
void write_forecast_log(const std::filesystem::path& path,
                        const std::vector<ForecastRow>& rows);
std::vector<ForecastRow> read_forecast_log(const std::filesystem::path& path);

}  // namespace latcast
