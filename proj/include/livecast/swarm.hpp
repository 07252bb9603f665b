#pragma once

// Mesh/pull swarming building blocks: chunks, the playout buffer, neighbour
// selection toward the peercaster, request scheduling, NCP policies and QoE
// metrics. The event-driven composition lives in the scenario runner.

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "livecast/coords.hpp"
#include "livecast/rng.hpp"
#include "livecast/tracker.hpp"
#include "livecast/trust.hpp"
#include "livecast/types.hpp"

namespace livecast::swarm {

using Seq = std::uint64_t;

struct SwarmParams {
  double stream_rate_kbps = 350.0;
  SimTime chunk_duration_ms = 250.0;
  int window = 40;
  int startup_threshold = 8;
  int k_short = 4;
  int k_jump = 2;
  trust::Units chunk_price = 1;
  /// Requests a provider accepts in flight from one requester.
  int max_outstanding_per_neighbor = 4;
  /// Subscriber slots per stream rate of upload capacity.
  double admission_factor = 6.0;
  SimTime request_timeout_ms = 2000.0;
  /// Concurrent uploads per peer; each gets capacity / upload_slots.
  int upload_slots = 1;
  double ncp_fraction = 0.25;

  double chunk_size_bits() const { return stream_rate_kbps * chunk_duration_ms; }
  void validate() const;
};

struct Chunk {
  StreamId stream_id;
  Seq seq = 0;
  SimTime created_at = 0.0;
  double size_bits = 0.0;
  friend bool operator==(const Chunk&, const Chunk&) = default;
};

/// Chunk `seq` as produced by a peercaster that started at `stream_start`.
Chunk make_chunk(StreamId stream, Seq seq, SimTime stream_start, const SwarmParams& params);

enum class SlotState : std::uint8_t { kPending, kRequested, kReceived, kSkipped };

class PlayoutBuffer {
 public:
  PlayoutBuffer(int window, int startup_threshold);

  Seq playout_point() const { return playout_point_; }
  bool started() const { return started_; }
  int window() const { return window_; }
  int startup_threshold() const { return startup_threshold_; }

  /// Anchors the playout point before playback starts. Throws
  /// std::logic_error once started.
  void set_start_point(Seq seq);

  SlotState state(Seq seq) const;
  bool in_window(Seq seq) const { return seq >= playout_point_ && seq < playout_point_ + static_cast<Seq>(window_); }

  void mark_requested(Seq seq);
  /// Returns a requested slot to pending (timeout or refusal).
  void mark_pending(Seq seq);
  void mark_skipped(Seq seq);
  /// False for duplicates and for seqs already behind the playout point.
  bool mark_received(Seq seq);

  /// Received chunks in a row starting at the playout point.
  int consecutive_from_playout() const;
  /// Starts playback when the startup run is complete. Returns true on the
  /// transition.
  bool try_start();

  struct Tick {
    Seq seq;
    bool played;
  };
  /// Plays or skips the chunk at the playout point and advances by one.
  Tick tick();

  std::uint64_t played() const { return played_; }
  std::uint64_t missed() const { return missed_; }

 private:
  int window_;
  int startup_threshold_;
  Seq playout_point_ = 0;
  bool started_ = false;
  std::map<Seq, SlotState> slots_;  // only seqs >= playout_point_
  std::uint64_t played_ = 0;
  std::uint64_t missed_ = 0;
};

/// Chunks a peer holds, as a bitmap over the 128 seqs below `end`.
struct HaveSummary {
  static constexpr Seq kSpan = 128;
  Seq end = 0;  // one past the newest seq held
  std::array<std::uint64_t, 2> bits{};

  bool contains(Seq seq) const;
  void insert(Seq seq);
  bool empty() const { return end == 0; }
  std::string to_string() const;
};

enum class LinkKind : std::uint8_t { kShort, kJump };
std::string_view to_string(LinkKind kind);

struct NeighborLink {
  PeerId neighbor_id;
  LinkKind link_kind = LinkKind::kShort;
  double predicted_delay_ms = 0.0;
  HaveSummary neighbor_have_summary;
  double measured_throughput_kbps = 0.0;
  double upload_capacity_kbps = 0.0;
  /// Uplink queue length the neighbour last advertised.
  int advertised_queue = 0;
  /// Our requests in flight at that neighbour.
  int outstanding = 0;
  /// Requests the neighbour accepts in flight from us; 0 means the
  /// configured maximum.
  int advertised_concurrency = 0;
};

/// Per-requester concurrency a provider advertises: its fair share of
/// uploads per chunk duration across subscribers, at least 1 and at most the
/// configured maximum.
int advertised_concurrency(double upload_kbps, std::size_t subscribers, const SwarmParams& params);

/// A candidate peercaster first, then nearest candidates strictly closer to the peercaster than
/// self (topped up with the nearest others when too few are closer), then up
/// to k_jump of the remaining closer candidates, drawn without replacement
/// with probability proportional to their distance from self.
std::vector<NeighborLink> select_neighbors(PeerId self, DelayCoord self_coord,
                                           const std::vector<tracker::PeerRecord>& candidates,
                                           DelayCoord peercaster_coord, int k_short, int k_jump, Rng& rng);

/// All candidates in connection preference order: closer-to-peercaster ones
/// by distance from self, then the rest by distance. Used after refusals.
std::vector<tracker::PeerRecord> rank_candidates(PeerId self, DelayCoord self_coord,
                                                 const std::vector<tracker::PeerRecord>& candidates,
                                                 DelayCoord peercaster_coord);

/// Which seqs an NCP downloads: seq mod period == offset.
struct NcpFilter {
  Seq period = 1;
  Seq offset = 0;
  bool wants(Seq seq) const { return seq % period == offset; }
};
/// period = round(1 / fraction). Throws std::invalid_argument unless
/// 0 < fraction <= 1.
NcpFilter ncp_chunk_policy(double fraction, Seq offset);

struct ScheduledJoin {
  tracker::PeerRecord peer;
  SimTime at = 0.0;
};
/// Ascending distance from the peercaster (ties by id), spaced by `stagger`.
std::vector<ScheduledJoin> ncp_bootstrap_order(const std::vector<tracker::PeerRecord>& ncps,
                                               DelayCoord peercaster_coord, SimTime start, SimTime stagger);
/// Same spacing, uniformly shuffled order.
std::vector<ScheduledJoin> ncp_random_order(const std::vector<tracker::PeerRecord>& ncps, SimTime start,
                                            SimTime stagger, Rng& rng);

/// Newest s with s .. s+threshold-1 each held by at least `min_holders`
/// neighbours.
std::optional<Seq> choose_start_point(const std::vector<NeighborLink>& links, int threshold, int min_holders = 1);

struct Request {
  PeerId neighbor;
  Seq seq;
  friend bool operator==(const Request&, const Request&) = default;
};

/// Request-side state the scheduler reads and updates.
struct SchedulerInput {
  std::vector<NeighborLink>* links;
  /// Consumer buffer, or null for an NCP.
  PlayoutBuffer* buffer = nullptr;
  /// Playback start wall-clock and the seq played then (consumers).
  SimTime playback_start = 0.0;
  Seq start_seq = 0;
  /// NCP download filter and the chunks it already holds or has requested.
  const NcpFilter* ncp = nullptr;
  const HaveSummary* held = nullptr;
  const std::map<Seq, PeerId>* in_flight = nullptr;
};

/// Earliest-deadline-first assignment of wanted seqs to neighbours holding
/// them. Cost per candidate is predicted delay plus the transmission time of
/// the queue ahead. Consumer slots whose deadline has passed are skipped;
/// sources whose cost overruns a slot's deadline are not used for it.
/// Updates slot states and per-link outstanding counts.
std::vector<Request> schedule_requests(SchedulerInput in, SimTime now, const SwarmParams& params);

struct CreditEvent {
  PeerId receiver;
  PeerId sender;
  trust::Units price = 0;
};

struct ReceiveOutcome {
  bool duplicate = false;
  bool unsolicited = false;
  bool started_now = false;
  std::optional<CreditEvent> credit;
};

/// Consumer receive path: buffer update, start check and credit event.
ReceiveOutcome on_chunk_received(PlayoutBuffer& buffer, HaveSummary& have, PeerId self, const Chunk& chunk,
                                 PeerId from, bool was_requested, const SwarmParams& params);

struct PeerHistory {
  PeerId peer_id;
  Role role = Role::kConsumer;
  SimTime join_time = 0.0;
  std::optional<SimTime> start_time;
  std::vector<double> lag_samples;
  std::uint64_t played = 0;
  std::uint64_t due = 0;
  std::uint64_t chunks_uploaded = 0;
  std::uint64_t chunks_downloaded = 0;
};

struct PeerMetrics {
  PeerId peer_id;
  Role role = Role::kConsumer;
  std::optional<double> startup_ms;  // nullopt = censored
  double startup_bound_ms = 0.0;     // observation bound when censored
  std::optional<double> mean_lag_ms;
  std::optional<double> p95_lag_ms;
  std::optional<double> continuity;
  std::uint64_t chunks_uploaded = 0;
  std::uint64_t chunks_downloaded = 0;
};

struct Summary {
  std::size_t count = 0;
  double mean = 0.0;
  double median = 0.0;
  double p95 = 0.0;
};

struct SwarmMetrics {
  std::vector<PeerMetrics> peers;
  Summary startup_ms;
  Summary mean_lag_ms;
  Summary continuity;
  std::size_t censored_startups = 0;
};

/// Nearest-rank percentile, q in (0, 1]. Throws on empty input.
double percentile(std::vector<double> values, double q);
Summary summarize(const std::vector<double>& values);

/// Aggregates cover consumers only. `observed_until` bounds censored
/// startups.
SwarmMetrics compute_metrics(const std::vector<PeerHistory>& histories, SimTime observed_until);

}  // namespace livecast::swarm
