#pragma once

// Scenario configuration: JSON in, every default materialised on the way
// out. Unknown keys and out-of-range values are rejected with the dotted
// path of the offending field.

#include <cstdint>
#include <stdexcept>
#include <string>

#include "json.hpp"
#include "livecast/coords.hpp"
#include "livecast/doat.hpp"
#include "livecast/netsim.hpp"
#include "livecast/swarm.hpp"
#include "livecast/tracker.hpp"
#include "livecast/trust.hpp"

namespace livecast {

class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string field, const std::string& message)
      : std::runtime_error(field.empty() ? message : field + ": " + message), field_(std::move(field)) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

enum class CoordMode { kGroundTruth, kEmbedded };
enum class NcpOrder { kDelay, kRandom };

struct ScenarioConfig {
  std::uint64_t seed = 1;
  SimTime duration_ms = 60000.0;

  TopologyParams topology;

  struct Network {
    double per_hop_processing_ms = 5.0;
    double max_jitter_ms = 1.0;
  } network;

  struct Coords {
    CoordMode mode = CoordMode::kGroundTruth;
    EmbeddingParams embedding;
  } coords;

  struct Stream {
    std::uint64_t id = 1;
  } stream;

  swarm::SwarmParams swarm;

  struct Schedule {
    NcpOrder ncp_order = NcpOrder::kDelay;
    SimTime ncp_join_start_ms = 0.0;
    SimTime ncp_stagger_ms = 100.0;
    SimTime consumer_join_start_ms = 1000.0;
    SimTime consumer_join_window_ms = 10000.0;
    /// Retry delay after a failed lookup or an empty neighbour set.
    SimTime retry_ms = 1000.0;
  } schedule;

  struct Doat {
    int curve_order = 8;
    int node_count = 64;
    doat::DoatParams params;
  } doat;

  tracker::TrackerParams tracker;

  struct Trust {
    bool enforce = false;
    int walk_length = 6;
    SimTime advertisement_period_ms = 30000.0;
    SimTime staleness_horizon_ms = 120000.0;
    trust::AltruismParams altruism;
    trust::SignatureScheme signature = trust::SignatureScheme::kKeyedHash;
    /// Units a denied requester tries to shift to the provider at once.
    trust::Units shift_amount = 4;
  } trust;

  struct Churn {
    bool enabled = false;
    ChurnProcess process;
  } churn;

  struct Output {
    bool trace = true;
  } output;

  /// Throws ConfigError naming the field.
  void validate() const;
};

ScenarioConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const ScenarioConfig& c);

/// Parses text; syntax errors carry line and column.
ScenarioConfig parse_config(const std::string& text);
ScenarioConfig load_config(const std::string& path);

/// Sets a dotted key ("topology.ncps") from its textual value, typed by the
/// key's current value. Throws ConfigError for unknown keys or bad values.
void apply_override(nlohmann::json& j, const std::string& dotted_key, const std::string& value);

}  // namespace livecast
