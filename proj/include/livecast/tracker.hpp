#pragma once

// Local trackers: per-stream registries over a contiguous interval of curve
// keys. An overloaded tracker splits its interval at the median registered
// key; an underloaded one merges with an adjacent sibling.

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "livecast/coords.hpp"
#include "livecast/sfc.hpp"
#include "livecast/types.hpp"

namespace livecast::tracker {

/// Half-open interval [begin, begin + length) on the key ring, wrapping.
/// length == key_count covers the whole ring.
struct KeyInterval {
  CurveKey begin;
  std::uint32_t length = 0;

  static KeyInterval full(const CurveSpec& curve) { return {CurveKey{0}, curve.key_count()}; }
  std::uint32_t offset(CurveKey key, const CurveSpec& curve) const;
  bool contains(CurveKey key, const CurveSpec& curve) const { return offset(key, curve) < length; }
  CurveKey end(const CurveSpec& curve) const;
  bool is_full(const CurveSpec& curve) const { return length == curve.key_count(); }
  friend bool operator==(const KeyInterval&, const KeyInterval&) = default;
};

/// True when `a` ends exactly where `b` begins.
bool precedes(const KeyInterval& a, const KeyInterval& b, const CurveSpec& curve);

struct PeerRecord {
  PeerId peer_id;
  DelayCoord coord;
  double upload_capacity_kbps = 0.0;
  Role role = Role::kConsumer;
  SimTime last_refresh = 0.0;
  friend bool operator==(const PeerRecord&, const PeerRecord&) = default;
};

struct TrackerParams {
  int load_high = 100;
  int load_low = 25;
  SimTime refresh_interval_ms = 30000.0;
  SimTime peer_timeout_ms = 90000.0;

  void validate() const;
};

/// Registration for a key outside the tracker's area. `redirect` is the
/// adjacent tracker on the side nearer the key.
class WrongArea : public std::runtime_error {
 public:
  WrongArea(PeerId redirect, CurveKey key)
      : std::runtime_error("key " + std::to_string(key.value) + " outside tracker area"), redirect_(redirect) {}
  PeerId redirect() const { return redirect_; }

 private:
  PeerId redirect_;
};

struct SplitResult;
class LocalTracker;
std::optional<SplitResult> split_area(const LocalTracker& lt);
LocalTracker absorb_area(const LocalTracker& lt, const LocalTracker& sibling);

class LocalTracker {
 public:
  LocalTracker(PeerId lt_id, StreamId stream, KeyInterval area, const TrackerParams& params, const CurveSpec& curve);

  PeerId lt_id() const { return lt_id_; }
  StreamId stream_id() const { return stream_; }
  const KeyInterval& area() const { return area_; }
  const std::map<PeerId, PeerRecord>& registry() const { return registry_; }
  std::size_t size() const { return registry_.size(); }
  int load_high() const { return params_.load_high; }
  int load_low() const { return params_.load_low; }
  const CurveSpec& curve() const { return curve_; }

  /// Adjacent trackers; kNoPeer while the area covers the whole ring.
  PeerId predecessor() const { return pred_; }
  PeerId successor() const { return succ_; }
  void set_neighbors(PeerId pred, PeerId succ) {
    pred_ = pred;
    succ_ = succ;
  }

  CurveKey key_of(const PeerRecord& rec) const { return coord_to_key(rec.coord, curve_); }

  /// Stores or refreshes `rec` and returns every current record.
  /// Throws WrongArea when rec's key lies outside the area.
  std::vector<PeerRecord> register_peer(const PeerRecord& rec);
  bool remove_peer(PeerId peer);
  /// Drops records whose last refresh is older than now - timeout.
  std::size_t expire_peers(SimTime now, SimTime timeout);

  bool overloaded() const { return registry_.size() > static_cast<std::size_t>(params_.load_high); }
  bool underloaded() const { return registry_.size() < static_cast<std::size_t>(params_.load_low); }

 private:
  friend std::optional<SplitResult> split_area(const LocalTracker& lt);
  friend LocalTracker absorb_area(const LocalTracker& lt, const LocalTracker& sibling);

  PeerId lt_id_;
  StreamId stream_;
  KeyInterval area_;
  TrackerParams params_;
  CurveSpec curve_;
  std::map<PeerId, PeerRecord> registry_;
  PeerId pred_ = kNoPeer;
  PeerId succ_ = kNoPeer;
};

struct SplitResult {
  LocalTracker kept;
  LocalTracker created;
};

/// Partitions at the median registered key. The original tracker keeps the
/// half holding its own registered key (or, if unregistered, the half whose
/// registry is larger); the other half is led by its peer with the highest
/// upload capacity (ties to the smaller id). Returns nullopt when fewer than
/// two distinct keys are registered. Throws std::invalid_argument unless the
/// tracker is overloaded. Neighbour links inside the pair are set; links to
/// trackers outside it are left to the caller.
std::optional<SplitResult> split_area(const LocalTracker& lt);

/// `lt` absorbs `sibling`. Throws std::invalid_argument when the areas are
/// not adjacent or the combined registry exceeds load_high.
LocalTracker merge_areas(const LocalTracker& lt, const LocalTracker& sibling);

/// merge_areas without the load bound, for departures.
LocalTracker absorb_area(const LocalTracker& lt, const LocalTracker& sibling);

/// All trackers of one stream, kept as a partition of the ring.
class StreamDirectory {
 public:
  StreamDirectory(StreamId stream, const CurveSpec& curve, const TrackerParams& params);

  /// First tracker of a stream; it covers the whole ring.
  void create_root(PeerId lt);

  bool contains(PeerId lt) const { return trackers_.count(lt) != 0; }
  const LocalTracker& at(PeerId lt) const;
  std::vector<PeerId> trackers() const;
  std::size_t tracker_count() const { return trackers_.size(); }

  /// Tracker whose area contains `key` (oracle over the whole directory).
  PeerId responsible(CurveKey key) const;

  struct Registration {
    PeerId lt = kNoPeer;
    std::vector<PeerRecord> peers;
    std::vector<PeerId> redirects;  // trackers that answered WrongArea
  };
  /// Registers at `first`, following redirects until an area accepts.
  Registration register_peer(PeerId first, const PeerRecord& rec);

  struct Attempt {
    bool accepted = false;
    PeerId redirect = kNoPeer;
    std::vector<PeerRecord> peers;
  };
  /// One registration hop at `lt`: accepted, or the redirect target.
  Attempt register_at(PeerId lt, const PeerRecord& rec);

  struct SplitOutcome {
    PeerId kept;
    PeerId created;
    std::vector<PeerId> moved;  // peers now registered at `created`
  };
  std::optional<SplitOutcome> split(PeerId lt);

  struct MergeOutcome {
    PeerId survivor;
    PeerId retired;
    std::vector<PeerId> moved;  // peers now registered at `survivor`
  };
  /// Merges an underloaded tracker with the adjacent sibling of smaller
  /// registry, if the union fits under load_high.
  std::optional<MergeOutcome> try_merge(PeerId lt);

  /// A departing tracker hands its area and registry to the adjacent
  /// sibling with the smaller registry, regardless of load. Returns nullopt
  /// for the last tracker of the stream.
  std::optional<MergeOutcome> hand_over(PeerId lt);

  bool remove_peer(PeerId lt, PeerId peer);
  std::size_t expire(PeerId lt, SimTime now);

  /// Tracker currently holding `peer`, or kNoPeer.
  PeerId tracker_of(PeerId peer) const;

  /// Checks the partition, link and exactly-once invariants; fills `why`.
  bool check_invariants(std::string* why = nullptr) const;

 private:
  LocalTracker& mutable_at(PeerId lt);
  MergeOutcome merge_into(PeerId survivor, PeerId retired);

  StreamId stream_;
  CurveSpec curve_;
  TrackerParams params_;
  std::map<PeerId, LocalTracker> trackers_;
};

}  // namespace livecast::tracker
