#include "livecast/doat.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <stdexcept>
#include <string>

namespace livecast::doat {

std::string_view to_string(Direction d) { return d == Direction::kClockwise ? "cw" : "ccw"; }

void DoatParams::validate() const {
  bloom.validate();
  if (!(aggregation_interval_ms >= 0.0)) throw std::invalid_argument("doat.aggregation_interval_ms must be >= 0");
  if (!(rebuild_period_ms > 0.0)) throw std::invalid_argument("doat.rebuild_period_ms must be > 0");
  if (!(lt_record_timeout_ms > 0.0)) throw std::invalid_argument("doat.lt_record_timeout_ms must be > 0");
  if (probe_count < 0) throw std::invalid_argument("doat.probe_count must be >= 0");
  if (!(probe_radius_ms >= 0.0)) throw std::invalid_argument("doat.probe_radius_ms must be >= 0");
}

DoatNode::DoatNode(PeerId id, CurveKey key, DelayCoord coord, const BloomParams& bloom)
    : id_(id), key_(key), coord_(coord), local_filter_(bloom) {}

std::vector<DoatRoutingEntry> DoatNode::routing_table() const {
  std::vector<DoatRoutingEntry> out;
  out.reserve(fingers_.size());
  for (const Finger& f : fingers_) {
    const NeighborState& n = neighbors_.at(f.neighbor);
    out.push_back({f.neighbor, n.key, f.direction, f.target_distance, n.filter, n.epoch_seen});
  }
  return out;
}

struct DoatOverlay::QueryState {
  std::uint64_t id;
  StreamId stream;
  PeerId querier;
  DelayCoord querier_coord;
  std::vector<PeerId> path;
  std::vector<PeerId> visited;
  std::uint32_t ttl;
  int hops = 0;
  std::function<void(QueryResult)> done;
};

DoatOverlay::DoatOverlay(Simulator& sim, CurveSpec curve, DoatParams params, LatencyFn latency)
    : sim_(sim), curve_(curve), params_(std::move(params)), latency_(std::move(latency)) {
  params_.validate();
}

std::uint32_t DoatOverlay::ttl() const {
  if (params_.query_ttl != 0) return params_.query_ttl;
  const auto log2k = static_cast<std::uint32_t>(std::bit_width(curve_.key_count() - 1));
  return 4 * log2k;
}

const DoatNode& DoatOverlay::node(PeerId id) const {
  auto it = nodes_.find(id);
  if (it == nodes_.end()) throw std::out_of_range("not a DOAT member: " + std::to_string(id.value));
  return it->second;
}

DoatNode& DoatOverlay::mutable_node(PeerId id) { return const_cast<DoatNode&>(node(id)); }

std::vector<PeerId> DoatOverlay::members() const {
  std::vector<PeerId> out;
  out.reserve(nodes_.size());
  for (const auto& [id, n] : nodes_) out.push_back(id);
  return out;
}

std::vector<Finger> DoatOverlay::compute_fingers(const DoatNode& n) const {
  std::vector<Finger> out;
  const std::size_t count = ring_.size();
  if (count < 2) return out;
  const auto self = std::make_pair(n.key(), n.id());
  const auto pos = static_cast<std::size_t>(std::lower_bound(ring_.begin(), ring_.end(), self) - ring_.begin());
  const std::uint32_t K = curve_.key_count();

  for (const Direction dir : {Direction::kClockwise, Direction::kCounterClockwise}) {
    for (std::uint64_t t = 1; t <= K / 2; t *= 2) {
      std::pair<CurveKey, PeerId> cand;
      if (t == 1) {
        // Immediate neighbour in (key, id) order, co-located nodes included.
        cand = dir == Direction::kClockwise ? ring_[(pos + 1) % count] : ring_[(pos + count - 1) % count];
      } else if (dir == Direction::kClockwise) {
        const CurveKey target{static_cast<std::uint32_t>((n.key().value + t) % K)};
        auto it = std::lower_bound(ring_.begin(), ring_.end(), std::make_pair(target, PeerId{0}));
        if (it == ring_.end()) it = ring_.begin();
        cand = *it;
        if (cand.second == n.id() || clockwise_distance(n.key(), cand.first, curve_) < t) continue;
      } else {
        const CurveKey target{static_cast<std::uint32_t>((n.key().value + K - t) % K)};
        auto it = std::upper_bound(ring_.begin(), ring_.end(), std::make_pair(target, PeerId{0xffffffffu}));
        cand = it == ring_.begin() ? ring_.back() : *std::prev(it);
        if (cand.second == n.id() || clockwise_distance(cand.first, n.key(), curve_) < t) continue;
      }
      out.push_back({dir, static_cast<std::uint32_t>(t), cand.second});
    }
  }
  return out;
}

void DoatOverlay::add_neighbor(DoatNode& n, PeerId other) {
  if (other == n.id()) return;
  if (n.neighbors_.count(other) != 0) return;
  const DoatNode& o = node(other);
  n.neighbors_.emplace(other, NeighborState{o.key(), BloomFilter(params_.bloom), n.epoch_, false});
  mark_dirty(n, other);
}

void DoatOverlay::refresh_fingers(DoatNode& n) {
  n.fingers_ = compute_fingers(n);
  for (const Finger& f : n.fingers_) add_neighbor(n, f.neighbor);
}

void DoatOverlay::join(PeerId id, DelayCoord coord, std::optional<PeerId> bootstrap) {
  if (contains(id)) throw std::invalid_argument("node already joined: " + std::to_string(id.value));
  const CurveKey key = coord_to_key(coord, curve_);
  std::uint64_t epoch = 0;
  if (!nodes_.empty()) {
    if (!bootstrap || !contains(*bootstrap)) throw std::runtime_error("DOAT join: bootstrap node unreachable");
    epoch = node(*bootstrap).epoch();
    sim_.trace().record(sim_.now(), id, *bootstrap, "JOIN", std::to_string(key.value));
  }
  auto [it, inserted] = nodes_.emplace(id, DoatNode(id, key, coord, params_.bloom));
  it->second.epoch_ = epoch;
  ring_.insert(std::upper_bound(ring_.begin(), ring_.end(), std::make_pair(key, id)), std::make_pair(key, id));

  refresh_fingers(it->second);
  for (auto& [other_id, other] : nodes_) {
    if (other_id == id) continue;
    std::vector<Finger> updated = compute_fingers(other);
    const bool same = updated.size() == other.fingers_.size() &&
                      std::equal(updated.begin(), updated.end(), other.fingers_.begin(), [](const Finger& a, const Finger& b) {
                        return a.direction == b.direction && a.target_distance == b.target_distance && a.neighbor == b.neighbor;
                      });
    if (same) continue;
    other.fingers_ = std::move(updated);
    for (const Finger& f : other.fingers_) add_neighbor(other, f.neighbor);
  }
}

void DoatOverlay::mark_dirty(DoatNode& n, PeerId neighbor) {
  n.dirty_.insert(neighbor);
  if (n.flush_pending_) return;
  n.flush_pending_ = true;
  const PeerId id = n.id();
  sim_.schedule_in(params_.aggregation_interval_ms, [this, id] { flush(id); }, id);
}

void DoatOverlay::mark_all_dirty(DoatNode& n) {
  for (const auto& [id, st] : n.neighbors_) mark_dirty(n, id);
}

void DoatOverlay::mark_farther_dirty(DoatNode& n, PeerId from) {
  const std::uint32_t d0 = ring_distance(n.key(), n.neighbors_.at(from).key, curve_);
  for (const auto& [id, st] : n.neighbors_) {
    if (id != from && ring_distance(n.key(), st.key, curve_) > d0) mark_dirty(n, id);
  }
}

BloomFilter DoatOverlay::summary_for(PeerId node_id, PeerId neighbor) const {
  const DoatNode& n = node(node_id);
  BloomFilter out = n.local_filter_;
  const auto nb = n.neighbors_.find(neighbor);
  const std::uint32_t limit = nb == n.neighbors_.end() ? 0 : ring_distance(n.key(), nb->second.key, curve_);
  for (const auto& [id, st] : n.neighbors_) {
    if (id == neighbor || st.epoch_seen < n.epoch_) continue;
    if (ring_distance(n.key(), st.key, curve_) < limit) out.merge(st.filter);
  }
  return out;
}

void DoatOverlay::flush(PeerId node_id) {
  if (!contains(node_id)) return;
  DoatNode& n = mutable_node(node_id);
  n.flush_pending_ = false;
  const std::set<PeerId> dirty = std::move(n.dirty_);
  n.dirty_.clear();
  for (const PeerId nb : dirty) {
    if (!contains(nb)) continue;
    BloomFilter summary = summary_for(node_id, nb);
    auto last = n.last_sent_.find(nb);
    if (last != n.last_sent_.end() && last->second.first == n.epoch_ && last->second.second == summary) continue;
    n.last_sent_.insert_or_assign(nb, std::make_pair(n.epoch_, summary));
    send_update(node_id, nb, RoutingUpdate{node_id, std::move(summary), n.epoch_});
  }
}

void DoatOverlay::send_update(PeerId from, PeerId to, const RoutingUpdate& update) {
  ++stats_.routing_updates;
  ++stats_.in_flight_updates;
  sim_.schedule_in(
      latency_(from, to),
      [this, from, to, update] {
        --stats_.in_flight_updates;
        sim_.trace().record(sim_.now(), from, to, "ROUTING_UPDATE",
                            update.filter.to_wire() + " " + std::to_string(update.epoch));
        if (contains(to)) handle_routing_update(to, from, update);
      },
      to);
}

void DoatOverlay::handle_routing_update(PeerId node_id, PeerId from, const RoutingUpdate& update) {
  DoatNode& n = mutable_node(node_id);
  if (from == node_id) return;
  if (n.neighbors_.count(from) == 0) {
    if (!contains(from)) return;
    add_neighbor(n, from);
  }
  NeighborState& st = n.neighbors_.at(from);
  if (update.epoch < st.epoch_seen) return;
  BloomFilter next = update.epoch > st.epoch_seen ? update.filter : bloom_union(st.filter, update.filter);
  const bool changed = !(next == st.filter) || update.epoch != st.epoch_seen;
  st.filter = std::move(next);
  st.epoch_seen = update.epoch;
  st.heard = true;
  if (changed) mark_farther_dirty(n, from);
}

void DoatOverlay::register_lt(PeerId node_id, const LtRecord& record) {
  DoatNode& n = mutable_node(node_id);
  auto& records = n.local_entry_[record.stream_id];
  const auto key = std::make_pair(record.lt_address, record.stream_id);
  if (std::any_of(records.begin(), records.end(), [&](const LtRecord& r) { return r.lt_address == record.lt_address; })) {
    n.last_refresh_[key] = sim_.now();
    return;
  }
  const bool had_route = !records.empty();
  records.push_back(record);
  n.last_refresh_[key] = sim_.now();
  if (!had_route) {
    n.local_filter_.insert(record.stream_id);
    mark_all_dirty(n);
  }
}

void DoatOverlay::deregister_lt(PeerId node_id, PeerId lt_address, StreamId stream) {
  DoatNode& n = mutable_node(node_id);
  auto it = n.local_entry_.find(stream);
  if (it == n.local_entry_.end()) return;
  std::erase_if(it->second, [&](const LtRecord& r) { return r.lt_address == lt_address; });
  n.last_refresh_.erase({lt_address, stream});
  if (it->second.empty()) n.local_entry_.erase(it);
}

void DoatOverlay::rebuild_epoch(PeerId node_id) {
  DoatNode& n = mutable_node(node_id);
  ++n.epoch_;
  const SimTime cutoff = sim_.now() - params_.lt_record_timeout_ms;
  for (auto it = n.local_entry_.begin(); it != n.local_entry_.end();) {
    std::erase_if(it->second, [&](const LtRecord& r) {
      const auto key = std::make_pair(r.lt_address, r.stream_id);
      if (n.last_refresh_.at(key) >= cutoff) return false;
      n.last_refresh_.erase(key);
      return true;
    });
    it = it->second.empty() ? n.local_entry_.erase(it) : std::next(it);
  }
  n.local_filter_ = BloomFilter(params_.bloom);
  for (const auto& [stream, records] : n.local_entry_) n.local_filter_.insert(stream);
  n.last_sent_.clear();
  mark_all_dirty(n);
}

void DoatOverlay::rebuild_all() {
  for (auto& [id, n] : nodes_) rebuild_epoch(id);
}

void DoatOverlay::start_epoch_clock(SimTime until) {
  for (SimTime t = sim_.now() + params_.rebuild_period_ms; t <= until; t += params_.rebuild_period_ms) {
    sim_.schedule(t, [this] { rebuild_all(); });
  }
}

PeerId DoatOverlay::greedy_step(const DoatNode& n, CurveKey target) const {
  PeerId best = n.id();
  std::uint32_t best_d = ring_distance(n.key(), target, curve_);
  for (const auto& [id, st] : n.neighbors_) {
    const std::uint32_t d = ring_distance(st.key, target, curve_);
    if (d < best_d || (d == best_d && id < best)) {
      best = id;
      best_d = d;
    }
  }
  return best;
}

PeerId DoatOverlay::find_closest_now(DelayCoord query, PeerId entry, int* hops) const {
  const CurveKey target = coord_to_key(query, curve_);
  PeerId at = entry;
  int count = 0;
  while (true) {
    const PeerId next = greedy_step(node(at), target);
    if (next == at) break;
    at = next;
    ++count;
  }
  if (hops != nullptr) *hops = count;
  return at;
}

void DoatOverlay::find_closest(DelayCoord query, PeerId entry, PeerId querier, std::function<void(PeerId, int)> done) {
  auto cb = std::make_shared<std::function<void(PeerId, int)>>(std::move(done));
  forward_find(entry, coord_to_key(query, curve_), querier, 0, std::move(cb));
}

void DoatOverlay::forward_find(PeerId at, CurveKey target, PeerId querier, int hops,
                               std::shared_ptr<std::function<void(PeerId, int)>> done) {
  const PeerId next = greedy_step(node(at), target);
  if (next == at) {
    (*done)(at, hops);
    return;
  }
  ++stats_.find_messages;
  sim_.schedule_in(
      latency_(at, next),
      [this, at, next, target, querier, hops, done] {
        sim_.trace().record(sim_.now(), at, next, "FIND_NODE",
                            std::to_string(target.value) + " " + std::to_string(querier.value));
        forward_find(next, target, querier, hops + 1, done);
      },
      next);
}

void DoatOverlay::query(PeerId entry, StreamId stream, PeerId querier, DelayCoord querier_coord,
                        std::function<void(QueryResult)> done) {
  auto state = std::make_shared<QueryState>();
  state->id = next_query_id_++;
  state->stream = stream;
  state->querier = querier;
  state->querier_coord = querier_coord;
  state->path = {entry};
  state->visited = {entry};
  state->ttl = ttl();
  state->done = std::move(done);
  query_step(entry, std::move(state));
}

void DoatOverlay::finish_query(PeerId at, std::shared_ptr<QueryState> state, std::optional<LtRecord> record) {
  QueryResult result;
  result.record = std::move(record);
  result.answered_by = at;
  result.hops = state->hops;
  state->done(std::move(result));
}

void DoatOverlay::query_step(PeerId at, std::shared_ptr<QueryState> state) {
  const DoatNode& n = node(at);
  if (auto it = n.local_entry_.find(state->stream); it != n.local_entry_.end() && !it->second.empty()) {
    const LtRecord* best = nullptr;
    double best_d = 0.0;
    for (const LtRecord& r : it->second) {
      const double d = distance(r.lt_coord, state->querier_coord);
      if (best == nullptr || d < best_d || (d == best_d && r.lt_address < best->lt_address)) {
        best = &r;
        best_d = d;
      }
    }
    finish_query(at, std::move(state), *best);
    return;
  }
  if (state->ttl == 0) {
    finish_query(at, std::move(state), std::nullopt);
    return;
  }

  const PeerId* next = nullptr;
  std::uint32_t next_d = 0;
  for (const auto& [id, st] : n.neighbors_) {
    if (!n.entry_live(st) || !st.filter.contains(state->stream)) continue;
    if (std::find(state->visited.begin(), state->visited.end(), id) != state->visited.end()) continue;
    const std::uint32_t d = ring_distance(n.key(), st.key, curve_);
    if (next == nullptr || d < next_d) {  // map order already breaks ties by id
      next = &id;
      next_d = d;
    }
  }

  PeerId target;
  std::string_view type;
  if (next != nullptr) {
    target = *next;
    type = "QUERY_LT";
    state->visited.push_back(target);
    state->path.push_back(target);
  } else {
    // Dead end (false positive or exhausted subtree): hand back to the
    // previous hop, which continues with its next candidate.
    state->path.pop_back();
    if (state->path.empty()) {
      finish_query(at, std::move(state), std::nullopt);
      return;
    }
    target = state->path.back();
    type = "QUERY_RESULT";
  }
  --state->ttl;
  ++state->hops;
  ++stats_.query_messages;
  sim_.schedule_in(
      latency_(at, target),
      [this, at, target, type, state] {
        sim_.trace().record(sim_.now(), at, target, type,
                            std::to_string(state->id) + " " + std::to_string(state->stream.value) +
                                (type == "QUERY_RESULT" ? " NOT_FOUND" : ""));
        query_step(target, state);
      },
      target);
}

void DoatOverlay::anycast(PeerId entry, StreamId stream, PeerId querier, DelayCoord querier_coord,
                          std::function<void(QueryResult)> done) {
  struct Gather {
    int remaining = 0;
    QueryResult best;
    int primary_hops = 0;
    int probe_hops = 0;
    DelayCoord querier_coord;
    std::function<void(QueryResult)> done;
    std::vector<PeerId> started;
  };
  auto gather = std::make_shared<Gather>();
  gather->querier_coord = querier_coord;
  gather->done = std::move(done);
  gather->remaining = 1 + params_.probe_count;
  gather->started.push_back(entry);

  auto offer = [gather](const QueryResult& r, bool primary, int extra_hops) {
    if (primary) {
      gather->primary_hops = r.hops;
    } else {
      gather->probe_hops = std::max(gather->probe_hops, r.hops + extra_hops);
    }
    if (r.record) {
      const auto& cur = gather->best.record;
      const double d = distance(r.record->lt_coord, gather->querier_coord);
      if (!cur || d < distance(cur->lt_coord, gather->querier_coord) ||
          (d == distance(cur->lt_coord, gather->querier_coord) && r.record->lt_address < cur->lt_address)) {
        gather->best.record = r.record;
        gather->best.answered_by = r.answered_by;
      }
    }
    if (--gather->remaining == 0) {
      QueryResult out = gather->best;
      out.hops = gather->primary_hops;
      out.probe_hops = gather->probe_hops;
      gather->done(std::move(out));
    }
  };

  query(entry, stream, querier, querier_coord, [offer](QueryResult r) { offer(r, true, 0); });

  const Bounds& b = curve_.bounds();
  for (int i = 0; i < params_.probe_count; ++i) {
    const double angle = 6.283185307179586 * i / params_.probe_count;
    const DelayCoord probe{std::clamp(querier_coord.x + params_.probe_radius_ms * std::cos(angle), b.min_x, b.max_x),
                           std::clamp(querier_coord.y + params_.probe_radius_ms * std::sin(angle), b.min_y, b.max_y)};
    find_closest(probe, entry, querier, [this, gather, offer, stream, querier, querier_coord](PeerId start, int find_hops) {
      if (std::find(gather->started.begin(), gather->started.end(), start) != gather->started.end()) {
        offer(QueryResult{}, false, find_hops);
        return;
      }
      gather->started.push_back(start);
      query(start, stream, querier, querier_coord, [offer, find_hops](QueryResult r) { offer(r, false, find_hops); });
    });
  }
}

}  // namespace livecast::doat
