#pragma once

// End-to-end scenario: DOAT bootstrap, peer joins (DOAT lookup, tracker
// lookup and registration), swarming with playout, trust receipts and
// advertisements, optional churn. Produces per-peer QoE metrics and run
// statistics.

#include <cstdint>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "livecast/config.hpp"
#include "livecast/swarm.hpp"

namespace livecast {

/// A runtime invariant failed; `invariant()` names it.
class InvariantViolation : public std::runtime_error {
 public:
  InvariantViolation(std::string invariant, const std::string& detail)
      : std::runtime_error(invariant + ": " + detail), invariant_(std::move(invariant)) {}
  const std::string& invariant() const { return invariant_; }

 private:
  std::string invariant_;
};

struct DoatRunStats {
  std::uint64_t lookups = 0;      // tracker lookups issued
  std::uint64_t answered = 0;     // lookups that returned an LT
  std::uint64_t within_1_5 = 0;   // answered with distance <= 1.5x the nearest LT
  double mean_hops = 0.0;
  int max_hops = 0;
  std::uint64_t routing_updates = 0;
};

struct TrustRunStats {
  std::uint64_t receipts = 0;
  std::uint64_t rejected_receipts = 0;
  std::uint64_t denials = 0;
  std::uint64_t advertisements = 0;
  std::uint64_t shift_attempts = 0;
  std::uint64_t shift_aborts = 0;
  std::int64_t total_shifted = 0;
  std::int64_t min_balance = 0;
};

struct FlowRunStats {
  std::size_t consumers = 0;
  std::size_t completed_doat_lookup = 0;     // reached their closest DOAT node
  std::size_t completed_registration = 0;   // received a peer list from their LT
  std::size_t started_playback = 0;
  std::uint64_t chunks_sent = 0;
  std::uint64_t chunks_delivered = 0;
  std::size_t trackers = 0;
  std::uint64_t splits = 0;
  std::uint64_t merges = 0;
  double mean_one_hop_latency_ms = 0.0;
};

struct RunReport {
  ScenarioConfig config;
  swarm::SwarmMetrics metrics;
  DoatRunStats doat;
  TrustRunStats trust;
  FlowRunStats flow;
  std::uint64_t events = 0;
  std::uint64_t trace_lines = 0;
  std::string trace_digest;
  std::string metrics_csv;
  /// owner,counterparty,balance,updated_at
  std::string ledger_csv;
};

struct RunOptions {
  /// Receives the trace log when set.
  std::ostream* trace_out = nullptr;
};

/// Throws InvariantViolation when a runtime invariant fails.
RunReport run_scenario(const ScenarioConfig& config, const RunOptions& options = {});

/// peer_id,role,startup_ms,mean_lag_ms,p95_lag_ms,continuity,chunks_uploaded,chunks_downloaded
std::string metrics_csv(const swarm::SwarmMetrics& metrics);
nlohmann::json report_to_json(const RunReport& report);

/// Columns of metrics.csv that plotdata accepts.
const std::vector<std::string>& plot_metrics();

}  // namespace livecast
