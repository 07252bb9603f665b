#pragma once

// Distributed Overlay Anycast Table: a Chord-style ring over curve keys.
// Local trackers register with the DOAT node closest to them; stream
// reachability spreads as Bloom-filter routing updates; queries walk the
// routing table in increasing ring distance toward a node holding an LT.
//
// Every node is an actor driven by the simulator: messages are scheduled with
// the configured latency and each handler only touches its own node's state.

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <vector>

#include "livecast/bloom.hpp"
#include "livecast/coords.hpp"
#include "livecast/netsim.hpp"
#include "livecast/sfc.hpp"
#include "livecast/types.hpp"

namespace livecast::doat {

struct LtRecord {
  PeerId lt_address;
  StreamId stream_id;
  CurveKey lt_key;
  DelayCoord lt_coord;
  SimTime registered_at = 0.0;
  friend bool operator==(const LtRecord&, const LtRecord&) = default;
};

enum class Direction : std::uint8_t { kClockwise, kCounterClockwise };

struct Finger {
  Direction direction;
  std::uint32_t target_distance;
  PeerId neighbor;
};

struct DoatRoutingEntry {
  PeerId neighbor_id;
  CurveKey neighbor_key;
  Direction direction;
  std::uint32_t target_distance;
  BloomFilter filter;
  std::uint64_t epoch_seen;
};

struct RoutingUpdate {
  PeerId origin_neighbor;
  BloomFilter filter;
  std::uint64_t epoch = 0;
};

struct DoatParams {
  BloomParams bloom;
  SimTime aggregation_interval_ms = 500.0;
  SimTime rebuild_period_ms = 60000.0;
  /// LT records not refreshed for this long are dropped at the next rebuild.
  SimTime lt_record_timeout_ms = 90000.0;
  /// 0 selects the default of 4 * ceil(log2 K).
  std::uint32_t query_ttl = 0;
  /// Extra anycast probes launched around the querier, and their distance.
  int probe_count = 4;
  double probe_radius_ms = 20.0;

  void validate() const;
};

/// Per-message transport delay between two DOAT members.
using LatencyFn = std::function<SimTime(PeerId from, PeerId to)>;

struct NeighborState {
  CurveKey key;
  BloomFilter filter;
  std::uint64_t epoch_seen = 0;
  bool heard = false;  // has ever sent us an update
};

class DoatNode {
 public:
  DoatNode(PeerId id, CurveKey key, DelayCoord coord, const BloomParams& bloom);

  PeerId id() const { return id_; }
  CurveKey key() const { return key_; }
  DelayCoord coord() const { return coord_; }
  std::uint64_t epoch() const { return epoch_; }

  const std::map<StreamId, std::vector<LtRecord>>& local_entry() const { return local_entry_; }
  const BloomFilter& local_filter() const { return local_filter_; }
  const std::vector<Finger>& fingers() const { return fingers_; }
  const std::map<PeerId, NeighborState>& neighbors() const { return neighbors_; }

  /// Finger entries with their neighbour's current filter.
  std::vector<DoatRoutingEntry> routing_table() const;

  /// False for entries not refreshed during the last two epochs.
  bool entry_live(const NeighborState& n) const { return n.epoch_seen + 2 > epoch_; }

 private:
  friend class DoatOverlay;

  PeerId id_;
  CurveKey key_;
  DelayCoord coord_;
  std::map<StreamId, std::vector<LtRecord>> local_entry_;
  std::map<std::pair<PeerId, StreamId>, SimTime> last_refresh_;
  BloomFilter local_filter_;
  std::vector<Finger> fingers_;
  std::map<PeerId, NeighborState> neighbors_;
  std::uint64_t epoch_ = 0;

  std::set<PeerId> dirty_;
  std::map<PeerId, std::pair<std::uint64_t, BloomFilter>> last_sent_;
  bool flush_pending_ = false;
};

struct QueryResult {
  std::optional<LtRecord> record;
  PeerId answered_by = kNoPeer;
  /// Message hops spent by the search, forwards and backtracks alike.
  int hops = 0;
  /// Hops spent routing probes to their start node (anycast only).
  int probe_hops = 0;
};

struct OverlayStats {
  std::uint64_t routing_updates = 0;
  std::uint64_t query_messages = 0;
  std::uint64_t find_messages = 0;
  std::uint64_t in_flight_updates = 0;
};

class DoatOverlay {
 public:
  DoatOverlay(Simulator& sim, CurveSpec curve, DoatParams params, LatencyFn latency);

  const CurveSpec& curve() const { return curve_; }
  const DoatParams& params() const { return params_; }
  std::uint32_t ttl() const;

  /// Adds a node. `bootstrap` must be a member unless the ring is empty;
  /// otherwise throws std::runtime_error (the caller may retry). Routing
  /// tables of the new node and of every node whose fingers now resolve to it
  /// are rebuilt against current membership.
  void join(PeerId id, DelayCoord coord, std::optional<PeerId> bootstrap);

  bool contains(PeerId id) const { return nodes_.count(id) != 0; }
  const DoatNode& node(PeerId id) const;
  std::vector<PeerId> members() const;
  std::size_t size() const { return nodes_.size(); }

  /// Greedy routing to the member whose key is ring-closest to the query
  /// coordinate's key (ties to the smaller id). Asynchronous: FIND_NODE
  /// messages travel hop by hop, the answer is reported via `done`.
  void find_closest(DelayCoord query, PeerId entry, PeerId querier, std::function<void(PeerId, int)> done);
  /// Same decision procedure evaluated instantly, for analysis and tests.
  PeerId find_closest_now(DelayCoord query, PeerId entry, int* hops = nullptr) const;

  /// Local registration at `node`. Floods an update when the node had no
  /// local route for the stream before. Re-registration only refreshes.
  void register_lt(PeerId node, const LtRecord& record);
  void deregister_lt(PeerId node, PeerId lt_address, StreamId stream);

  /// Receive path for ROUTING_UPDATE; public so tests can inject messages.
  void handle_routing_update(PeerId node, PeerId from, const RoutingUpdate& update);

  /// Single search entering at `entry`.
  void query(PeerId entry, StreamId stream, PeerId querier, DelayCoord querier_coord,
             std::function<void(QueryResult)> done);
  /// Primary search plus offset probes; returns the candidate nearest the
  /// querier.
  void anycast(PeerId entry, StreamId stream, PeerId querier, DelayCoord querier_coord,
               std::function<void(QueryResult)> done);

  void rebuild_epoch(PeerId node);
  /// Rebuilds every member at the current instant (global epoch clock).
  void rebuild_all();
  /// Schedules rebuild_all every rebuild_period until `until`.
  void start_epoch_clock(SimTime until);

  /// Summary `node` currently advertises to `neighbor`.
  BloomFilter summary_for(PeerId node, PeerId neighbor) const;

  const OverlayStats& stats() const { return stats_; }

 private:
  struct QueryState;

  DoatNode& mutable_node(PeerId id);
  std::vector<Finger> compute_fingers(const DoatNode& n) const;
  void refresh_fingers(DoatNode& n);
  void add_neighbor(DoatNode& n, PeerId other);
  void mark_dirty(DoatNode& n, PeerId neighbor);
  void mark_all_dirty(DoatNode& n);
  void mark_farther_dirty(DoatNode& n, PeerId from);
  void flush(PeerId node);
  void send_update(PeerId from, PeerId to, const RoutingUpdate& update);
  PeerId greedy_step(const DoatNode& n, CurveKey target) const;
  void forward_find(PeerId at, CurveKey target, PeerId querier, int hops, std::shared_ptr<std::function<void(PeerId, int)>> done);
  void query_step(PeerId at, std::shared_ptr<QueryState> state);
  void finish_query(PeerId at, std::shared_ptr<QueryState> state, std::optional<LtRecord> record);

  Simulator& sim_;
  CurveSpec curve_;
  DoatParams params_;
  LatencyFn latency_;
  std::map<PeerId, DoatNode> nodes_;
  std::vector<std::pair<CurveKey, PeerId>> ring_;  // sorted
  OverlayStats stats_;
  std::uint64_t next_query_id_ = 1;
};

std::string_view to_string(Direction d);

}  // namespace livecast::doat
