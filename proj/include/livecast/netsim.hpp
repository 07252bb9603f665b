#pragma once

// Deterministic discrete-event engine and the synthetic network it runs on.

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <queue>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "livecast/coords.hpp"
#include "livecast/rng.hpp"
#include "livecast/sfc.hpp"
#include "livecast/types.hpp"

namespace livecast {

/// FNV-1a, used for trace payload digests.
std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t state = 0xcbf29ce484222325ULL);
std::string hex64(std::uint64_t value);

/// One line per dispatched message: time_ms,src,dst,msg_type,payload_digest.
/// Lines go to an optional stream; a running digest and count are always kept
/// so runs can be compared without storing the log.
class TraceLog {
 public:
  void attach(std::ostream* out) { out_ = out; }
  void record(SimTime time, PeerId src, PeerId dst, std::string_view type, std::string_view payload);

  std::uint64_t line_count() const { return lines_; }
  std::uint64_t digest() const { return digest_; }
  std::uint64_t count_of(std::string_view type) const;

 private:
  std::ostream* out_ = nullptr;
  std::uint64_t lines_ = 0;
  std::uint64_t digest_ = 0xcbf29ce484222325ULL;
  std::vector<std::pair<std::string, std::uint64_t>> per_type_;
};

struct Ticket {
  std::uint64_t seq = 0;
};

class Simulator {
 public:
  using Handler = std::function<void()>;

  SimTime now() const { return now_; }

  /// Throws std::invalid_argument when fire_time lies in the past.
  Ticket schedule(SimTime fire_time, Handler handler, PeerId target = kNoPeer);
  Ticket schedule_in(SimTime delay, Handler handler, PeerId target = kNoPeer);
  void cancel(Ticket ticket);

  /// Dispatches every event with fire_time <= t_end in (fire_time, seq)
  /// order; returns the number dispatched. The clock ends at t_end.
  std::size_t run_until(SimTime t_end);
  /// Runs until the queue drains.
  std::size_t run();

  std::size_t pending() const { return queue_.size() - cancelled_.size(); }
  TraceLog& trace() { return trace_; }
  const TraceLog& trace() const { return trace_; }

 private:
  struct SimEvent {
    SimTime fire_time;
    std::uint64_t seq_within_time;
    PeerId target;
    Handler payload;
  };
  struct Later {
    bool operator()(const SimEvent& a, const SimEvent& b) const {
      if (a.fire_time != b.fire_time) return a.fire_time > b.fire_time;
      return a.seq_within_time > b.seq_within_time;
    }
  };

  bool dispatch_next(SimTime t_end);

  SimTime now_ = 0.0;
  std::uint64_t next_seq_ = 0;
  std::priority_queue<SimEvent, std::vector<SimEvent>, Later> queue_;
  std::unordered_set<std::uint64_t> cancelled_;
  TraceLog trace_;
};

/// distance + sender processing + size / rate + jitter. Rates in kbit/s and
/// sizes in bits, so size/rate is milliseconds. A non-positive rate means the
/// message has no transmission term (control traffic).
double message_latency(DelayCoord src, DelayCoord dst, double size_bits, double per_hop_processing_ms,
                       double allocated_rate_kbps, double jitter_ms);

class LatencyModel {
 public:
  LatencyModel(double max_jitter_ms, std::uint64_t seed) : max_jitter_ms_(max_jitter_ms), rng_(seed) {}
  double jitter() { return max_jitter_ms_ > 0.0 ? rng_.uniform(0.0, max_jitter_ms_) : 0.0; }
  double max_jitter() const { return max_jitter_ms_; }

 private:
  double max_jitter_ms_;
  Rng rng_;
};

enum class TopologyKind { kUniformRectangle, kClustered };

std::string_view to_string(TopologyKind kind);
TopologyKind topology_kind_from_string(std::string_view text);

struct TopologyParams {
  TopologyKind kind = TopologyKind::kUniformRectangle;
  int consumers = 50;
  int ncps = 0;
  /// Largest distance from the peercaster (uniform_rectangle).
  double max_delay_ms = 140.0;
  /// Rectangle width / height.
  double aspect = 1.0;
  int clusters = 4;
  double cluster_spread_ms = 5.0;
  /// Minimum delay between peers of different clusters.
  double inter_cluster_floor_ms = 80.0;
  double consumer_upload_kbps = 700.0;
  double ncp_upload_kbps = 1400.0;
  double peercaster_upload_kbps = 3500.0;
  /// Lognormal sigma of the per-pair multiplicative noise; 0 = pure Euclidean.
  double noise_sigma = 0.05;

  void validate() const;
};

struct TopoPeer {
  PeerId id;
  DelayCoord coord;
  double upload_kbps = 0.0;
  Role role = Role::kConsumer;
  int cluster = 0;
};

/// Peer 0 is the peercaster; NCPs follow, then consumers.
struct Topology {
  std::vector<TopoPeer> peers;
  Bounds bounds;
  double noise_sigma = 0.0;
  double inter_cluster_floor_ms = 0.0;
  bool clustered = false;
  std::uint64_t seed = 0;

  /// Ground-truth one-way delay; symmetric, zero on the diagonal.
  double delay(std::size_t a, std::size_t b) const;
};

Topology generate_topology(const TopologyParams& params, std::uint64_t seed);

enum class LifetimeKind { kExponential, kPareto };

struct ChurnProcess {
  double arrival_rate_per_s = 0.0;
  LifetimeKind lifetime = LifetimeKind::kExponential;
  double mean_lifetime_s = 300.0;
  double pareto_shape = 1.5;
  std::uint64_t seed = 1;
};

struct ChurnEvent {
  enum class Kind { kJoin, kLeave };
  SimTime time;
  Kind kind;
  std::uint32_t arrival;  // index of the arriving peer
  friend bool operator==(const ChurnEvent&, const ChurnEvent&) = default;
};

/// Poisson arrivals over [0, horizon_ms); each arrival leaves after a drawn
/// lifetime if that falls inside the horizon. Sorted by time.
std::vector<ChurnEvent> churn_stream(const ChurnProcess& process, SimTime horizon_ms);

}  // namespace livecast
