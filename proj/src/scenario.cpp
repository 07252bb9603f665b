#include "livecast/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <deque>
#include <limits>
#include <map>
#include <memory>
#include <numeric>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "livecast/coords.hpp"
#include "livecast/doat.hpp"
#include "livecast/netsim.hpp"
#include "livecast/sfc.hpp"
#include "livecast/swarm.hpp"
#include "livecast/tracker.hpp"
#include "livecast/trust.hpp"

namespace livecast {
namespace {

using swarm::Seq;

// Seed streams, one per independent source of randomness.
constexpr std::uint64_t kSeedTopology = 1;
constexpr std::uint64_t kSeedJitter = 2;
constexpr std::uint64_t kSeedDoatMembers = 3;
constexpr std::uint64_t kSeedNcpOrder = 4;
constexpr std::uint64_t kSeedConsumerJoins = 5;
constexpr std::uint64_t kSeedChurn = 6;
constexpr std::uint64_t kSeedWalks = 7;
constexpr std::uint64_t kSeedEmbedding = 8;
constexpr std::uint64_t kSeedPeer = 1000;
constexpr std::uint64_t kSeedKeys = 100000;

constexpr std::size_t kRefuseSuggestions = 4;
constexpr SimTime kShiftTimeoutMs = 10000.0;

struct RequestInfo {
  PeerId neighbor;
  SimTime sent_at;
};

struct Upload {
  std::size_t to;
  Seq seq;
  SimTime due;
};

struct SimPeer {
  explicit SimPeer(std::uint64_t seed) : rng(seed) {}

  PeerId id;
  Role role = Role::kConsumer;
  DelayCoord coord;
  double upload = 0.0;
  bool doat_member = false;
  bool joined = false;
  bool active = false;
  bool left = false;
  PeerId contact = kNoPeer;
  PeerId lt = kNoPeer;
  bool phase_a = false;
  bool phase_b = false;
  bool relookup_pending = false;
  unsigned relookups = 0;

  std::vector<swarm::NeighborLink> links;
  std::set<PeerId> pending;
  std::deque<tracker::PeerRecord> pool;
  std::set<PeerId> tried;
  std::map<PeerId, swarm::LinkKind> desired_kind;
  std::vector<PeerId> subscribers;
  std::size_t admission_cap = 0;
  bool have_timer = false;

  swarm::HaveSummary have;
  std::optional<swarm::PlayoutBuffer> buffer;
  bool start_point_set = false;
  SimTime playback_start = 0.0;
  Seq start_seq = 0;
  std::optional<swarm::NcpFilter> ncp;
  std::map<Seq, RequestInfo> requests;
  std::map<Seq, PeerId> in_flight;

  std::deque<Upload> queue;
  std::map<Seq, int> served;
  int busy = 0;
  double active_rate = 0.0;

  trust::KeyPair key;
  trust::TrustView view;
  trust::AltruismBudget budget;
  bool shift_in_flight = false;

  swarm::PeerHistory hist;
  Rng rng;
};

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

class Engine {
 public:
  Engine(const ScenarioConfig& cfg, const RunOptions& options);
  RunReport run();

 private:
  SimPeer& peer(PeerId id) { return peers_[id.value]; }
  SimTime control_latency(PeerId a, PeerId b);
  void send(PeerId from, PeerId to, const char* type, std::string payload, SimTime latency, std::function<void()> fn);
  void every(SimTime first, SimTime period, std::function<bool()> fn);
  tracker::PeerRecord record_of(const SimPeer& p) const;

  void setup();
  void start_join(PeerId p);
  void lookup_contact(PeerId p, std::function<void()> then);
  void lt_lookup(PeerId p);
  void on_lookup_result(PeerId p, const doat::QueryResult& r);
  void forward_register(PeerId from, PeerId lt, PeerId p);
  void handle_register(PeerId lt, PeerId p);
  void on_peer_list(PeerId p, PeerId lt, const std::vector<tracker::PeerRecord>& list);
  void maybe_split(PeerId lt);
  void register_lt_record(PeerId lt);
  void announce_merge(const tracker::StreamDirectory::MergeOutcome& m);
  PeerId resolve_lt(PeerId lt) const;
  void tracker_maintenance();

  bool compatible(const SimPeer& p, const SimPeer& supplier) const;
  void begin_connections(PeerId p, const std::vector<tracker::PeerRecord>& list);
  void try_connect_more(PeerId p);
  void schedule_relookup(PeerId p);
  void handle_connect(PeerId n, PeerId p);
  void on_accept(PeerId p, PeerId n);
  void on_refuse(PeerId p, PeerId n, const std::vector<tracker::PeerRecord>& suggestions);
  void start_have_timer(PeerId n);

  swarm::NeighborLink* link_of(SimPeer& p, PeerId n);
  void release_request(SimPeer& p, Seq seq);
  void on_have(PeerId s, PeerId n, const swarm::HaveSummary& have, int queue, int concurrency);
  void expire_requests(PeerId s);
  void cancel_at(PeerId s, PeerId n, Seq seq);
  void schedule(PeerId s);
  void handle_request(PeerId n, PeerId s, Seq seq, SimTime due);
  void on_cancel(PeerId s, PeerId n, Seq seq, bool denied);
  void pump(PeerId n);
  void on_chunk(PeerId p, PeerId n, const swarm::Chunk& chunk);
  void send_receipt(PeerId p, PeerId n, Seq seq);
  void start_playback(PeerId p);

  void leave(PeerId p);
  void on_upstream_left(PeerId s, PeerId gone);

  void advertise_all();
  void walk_hop(PeerId holder, trust::TrustAdvertisement ad);
  void try_shift(PeerId s, PeerId n);
  void relay(std::vector<PeerId> hops, std::size_t i, const char* type, std::function<void()> done);

  void final_checks();

  const ScenarioConfig& cfg_;
  const swarm::SwarmParams& sp_;
  Simulator sim_;
  Topology topo_;
  std::vector<DelayCoord> coords_;
  std::vector<SimPeer> peers_;
  std::optional<CurveSpec> curve_;
  std::unique_ptr<doat::DoatOverlay> overlay_;
  std::vector<PeerId> doat_members_;
  std::optional<tracker::StreamDirectory> dir_;
  std::map<PeerId, PeerId> retired_to_;
  trust::SignatureSuite suite_;
  trust::TrustLedger ledger_;
  LatencyModel jitter_;
  Rng walk_rng_;
  StreamId stream_;
  PeerId pc_{0};

  DoatRunStats doat_;
  TrustRunStats trust_;
  FlowRunStats flow_;
  std::uint64_t hop_sum_ = 0;
};

Engine::Engine(const ScenarioConfig& cfg, const RunOptions& options)
    : cfg_(cfg),
      sp_(cfg.swarm),
      suite_(cfg.trust.signature),
      jitter_(cfg.network.max_jitter_ms, derive_seed(cfg.seed, kSeedJitter)),
      walk_rng_(derive_seed(cfg.seed, kSeedWalks)),
      stream_{cfg.stream.id} {
  cfg.validate();
  sim_.trace().attach(options.trace_out);
}

SimTime Engine::control_latency(PeerId a, PeerId b) {
  return topo_.delay(a.value, b.value) + cfg_.network.per_hop_processing_ms + jitter_.jitter();
}

void Engine::send(PeerId from, PeerId to, const char* type, std::string payload, SimTime latency,
                  std::function<void()> fn) {
  sim_.schedule_in(
      latency,
      [this, from, to, type, payload = std::move(payload), fn = std::move(fn)] {
        sim_.trace().record(sim_.now(), from, to, type, payload);
        fn();
      },
      to);
}

void Engine::every(SimTime first, SimTime period, std::function<bool()> fn) {
  if (first > cfg_.duration_ms) return;
  sim_.schedule(first, [this, first, period, fn] {
    if (fn()) every(first + period, period, fn);
  });
}

tracker::PeerRecord Engine::record_of(const SimPeer& p) const {
  return {p.id, p.coord, p.upload, p.role, sim_.now()};
}

// ------------------------------------------------------------------- setup

void Engine::setup() {
  topo_ = generate_topology(cfg_.topology, derive_seed(cfg_.seed, kSeedTopology));
  const std::size_t n = topo_.peers.size();

  Bounds bounds = topo_.bounds;
  if (cfg_.coords.mode == CoordMode::kEmbedded) {
    coords_ = embed_population(
        n, [this](std::size_t a, std::size_t b) { return topo_.delay(a, b); }, cfg_.coords.embedding,
        derive_seed(cfg_.seed, kSeedEmbedding));
    bounds = {coords_[0].x, coords_[0].y, coords_[0].x, coords_[0].y};
    for (const DelayCoord& c : coords_) {
      bounds.min_x = std::min(bounds.min_x, c.x);
      bounds.min_y = std::min(bounds.min_y, c.y);
      bounds.max_x = std::max(bounds.max_x, c.x);
      bounds.max_y = std::max(bounds.max_y, c.y);
    }
    bounds.max_x = std::max(bounds.max_x, bounds.min_x + 1.0);
    bounds.max_y = std::max(bounds.max_y, bounds.min_y + 1.0);
  } else {
    for (const TopoPeer& tp : topo_.peers) coords_.push_back(tp.coord);
  }
  curve_.emplace(cfg_.doat.curve_order, bounds);
  dir_.emplace(stream_, *curve_, cfg_.tracker);
  overlay_ = std::make_unique<doat::DoatOverlay>(sim_, *curve_, cfg_.doat.params,
                                                 [this](PeerId a, PeerId b) { return control_latency(a, b); });

  peers_.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const TopoPeer& tp = topo_.peers[i];
    SimPeer p(derive_seed(cfg_.seed, kSeedPeer + i));
    p.id = tp.id;
    p.role = tp.role;
    p.coord = coords_[i];
    p.upload = tp.upload_kbps;
    p.admission_cap = static_cast<std::size_t>(std::lround(
        p.upload / sp_.stream_rate_kbps * (p.role == Role::kPeercaster ? 1.0 : sp_.admission_factor)));
    p.key = suite_.generate(derive_seed(cfg_.seed, kSeedKeys + i));
    p.budget = trust::AltruismBudget(cfg_.trust.altruism);
    p.hist.peer_id = p.id;
    p.hist.role = p.role;
    peers_.push_back(std::move(p));
  }

  // DOAT membership: the peercaster plus a seeded sample of the rest.
  std::vector<std::uint32_t> others(n - 1);
  std::iota(others.begin(), others.end(), 1u);
  Rng member_rng(derive_seed(cfg_.seed, kSeedDoatMembers));
  member_rng.shuffle(others.begin(), others.end());
  const std::size_t want = std::min<std::size_t>(static_cast<std::size_t>(cfg_.doat.node_count), n);
  std::vector<std::uint32_t> members{0};
  members.insert(members.end(), others.begin(), others.begin() + static_cast<std::ptrdiff_t>(want - 1));
  std::sort(members.begin(), members.end());
  for (std::uint32_t m : members) {
    const PeerId id{m};
    overlay_->join(id, peers_[m].coord, doat_members_.empty() ? std::nullopt : std::optional<PeerId>(doat_members_[0]));
    peers_[m].doat_member = true;
    doat_members_.push_back(id);
  }
  overlay_->start_epoch_clock(cfg_.duration_ms);

  // The peercaster produces one chunk per chunk duration.
  every(0.0, sp_.chunk_duration_ms, [this] {
    const auto seq = static_cast<Seq>(std::llround(sim_.now() / sp_.chunk_duration_ms));
    peer(pc_).have.insert(seq);
    return true;
  });

  SimPeer& pc = peer(pc_);
  pc.joined = pc.active = true;
  dir_->create_root(pc_);
  dir_->register_at(pc_, record_of(pc));
  pc.lt = pc_;
  lookup_contact(pc_, [this] {
    peer(pc_).phase_b = true;
    register_lt_record(pc_);
  });

  // NCP bootstrap schedule; offsets are handed out round-robin in join order.
  std::vector<tracker::PeerRecord> ncps;
  for (const SimPeer& p : peers_)
    if (p.role == Role::kNcp) ncps.push_back({p.id, p.coord, p.upload, p.role, 0.0});
  std::vector<swarm::ScheduledJoin> order;
  if (cfg_.schedule.ncp_order == NcpOrder::kDelay) {
    order = swarm::ncp_bootstrap_order(ncps, pc.coord, cfg_.schedule.ncp_join_start_ms, cfg_.schedule.ncp_stagger_ms);
  } else {
    Rng ncp_rng(derive_seed(cfg_.seed, kSeedNcpOrder));
    order = swarm::ncp_random_order(ncps, cfg_.schedule.ncp_join_start_ms, cfg_.schedule.ncp_stagger_ms, ncp_rng);
  }
  const auto period = swarm::ncp_chunk_policy(sp_.ncp_fraction, 0).period;
  for (std::size_t i = 0; i < order.size(); ++i) {
    SimPeer& p = peer(order[i].peer.peer_id);
    p.ncp = swarm::ncp_chunk_policy(sp_.ncp_fraction, static_cast<Seq>(i) % period);
    const PeerId id = p.id;
    sim_.schedule(order[i].at, [this, id] { start_join(id); });
  }

  // Consumers: a join window, or arrivals and departures from the churn
  // process.
  std::vector<PeerId> consumers;
  for (const SimPeer& p : peers_)
    if (p.role == Role::kConsumer) consumers.push_back(p.id);
  if (cfg_.churn.enabled) {
    ChurnProcess proc = cfg_.churn.process;
    proc.seed = derive_seed(cfg_.seed, kSeedChurn);
    for (const ChurnEvent& ev : churn_stream(proc, cfg_.duration_ms)) {
      if (ev.arrival >= consumers.size()) continue;
      const PeerId id = consumers[ev.arrival];
      const SimTime at = cfg_.schedule.consumer_join_start_ms + ev.time;
      if (at > cfg_.duration_ms) continue;
      if (ev.kind == ChurnEvent::Kind::kJoin) {
        sim_.schedule(at, [this, id] { start_join(id); });
      } else {
        sim_.schedule(at, [this, id] { leave(id); });
      }
    }
  } else {
    Rng join_rng(derive_seed(cfg_.seed, kSeedConsumerJoins));
    for (PeerId id : consumers) {
      const SimTime at = cfg_.schedule.consumer_join_start_ms + join_rng.uniform(0.0, cfg_.schedule.consumer_join_window_ms);
      if (at > cfg_.duration_ms) continue;
      sim_.schedule(at, [this, id] { start_join(id); });
    }
  }

  every(cfg_.trust.advertisement_period_ms, cfg_.trust.advertisement_period_ms, [this] {
    advertise_all();
    return true;
  });
  every(cfg_.tracker.refresh_interval_ms, cfg_.tracker.refresh_interval_ms, [this] {
    tracker_maintenance();
    return true;
  });
}

// ------------------------------------------------------ join and tracker flow

void Engine::start_join(PeerId id) {
  SimPeer& p = peer(id);
  if (p.joined || p.left) return;
  p.joined = true;
  p.hist.join_time = sim_.now();
  if (p.role == Role::kConsumer) p.buffer.emplace(sp_.window, sp_.startup_threshold);
  lookup_contact(id, [this, id] { lt_lookup(id); });
}

void Engine::lookup_contact(PeerId id, std::function<void()> then) {
  SimPeer& p = peer(id);
  const PeerId entry = doat_members_[p.rng.below(doat_members_.size())];
  std::ostringstream payload;
  payload << fmt(p.coord.x) << ',' << fmt(p.coord.y);
  send(id, entry, "DOAT_LOOKUP", payload.str(), control_latency(id, entry), [this, id, entry, then] {
    overlay_->find_closest(peer(id).coord, entry, id, [this, id, then](PeerId closest, int) {
      send(closest, id, "DOAT_CONTACT", std::to_string(closest.value), control_latency(closest, id),
           [this, id, closest, then] {
             SimPeer& p = peer(id);
             if (p.left) return;
             p.contact = closest;
             p.phase_a = true;
             then();
           });
    });
  });
}

void Engine::lt_lookup(PeerId id) {
  SimPeer& p = peer(id);
  if (p.left) return;
  send(id, p.contact, "LT_LOOKUP", std::to_string(stream_.value), control_latency(id, p.contact), [this, id] {
    const SimPeer& q = peer(id);
    ++doat_.lookups;
    overlay_->anycast(q.contact, stream_, id, q.coord, [this, id](doat::QueryResult r) { on_lookup_result(id, r); });
  });
}

void Engine::on_lookup_result(PeerId id, const doat::QueryResult& r) {
  SimPeer& p = peer(id);
  const PeerId at = r.answered_by == kNoPeer ? p.contact : r.answered_by;
  if (!r.record) {
    send(at, id, "LT_NOT_FOUND", std::to_string(stream_.value), control_latency(at, id), [this, id] {
      sim_.schedule_in(cfg_.schedule.retry_ms, [this, id] { lt_lookup(id); }, id);
    });
    return;
  }
  ++doat_.answered;
  const int hops = std::max(r.hops, r.probe_hops);
  hop_sum_ += static_cast<std::uint64_t>(hops);
  doat_.max_hops = std::max(doat_.max_hops, hops);
  double nearest = std::numeric_limits<double>::infinity();
  for (PeerId lt : dir_->trackers()) nearest = std::min(nearest, distance(peer(lt).coord, p.coord));
  if (distance(r.record->lt_coord, p.coord) <= 1.5 * nearest + 1e-9) ++doat_.within_1_5;
  forward_register(at, r.record->lt_address, id);
}

void Engine::forward_register(PeerId from, PeerId lt, PeerId id) {
  send(from, lt, "REGISTER_PEER", std::to_string(id.value), control_latency(from, lt),
       [this, lt, id] { handle_register(lt, id); });
}

PeerId Engine::resolve_lt(PeerId lt) const {
  for (int guard = 0; guard < 1 << 20 && !dir_->contains(lt); ++guard) {
    auto it = retired_to_.find(lt);
    if (it == retired_to_.end()) return kNoPeer;
    lt = it->second;
  }
  return dir_->contains(lt) ? lt : kNoPeer;
}

void Engine::handle_register(PeerId lt, PeerId id) {
  if (peer(id).left) return;
  if (!dir_->contains(lt)) {
    auto it = retired_to_.find(lt);
    if (it != retired_to_.end()) {
      forward_register(lt, it->second, id);
    } else {
      send(lt, id, "LT_NOT_FOUND", std::to_string(stream_.value), control_latency(lt, id),
           [this, id] { sim_.schedule_in(cfg_.schedule.retry_ms, [this, id] { lt_lookup(id); }, id); });
    }
    return;
  }
  const auto attempt = dir_->register_at(lt, record_of(peer(id)));
  if (!attempt.accepted) {
    forward_register(lt, attempt.redirect, id);
    return;
  }
  send(lt, id, "PEER_LIST", std::to_string(attempt.peers.size()), control_latency(lt, id),
       [this, id, lt, peers = attempt.peers] { on_peer_list(id, lt, peers); });
  maybe_split(lt);
}

void Engine::on_peer_list(PeerId id, PeerId lt, const std::vector<tracker::PeerRecord>& list) {
  SimPeer& p = peer(id);
  if (p.left) return;
  p.lt = lt;
  if (!p.phase_b) {
    p.phase_b = true;
    p.active = true;
    every(sim_.now() + cfg_.tracker.refresh_interval_ms, cfg_.tracker.refresh_interval_ms, [this, id] {
      SimPeer& q = peer(id);
      if (q.left) return false;
      forward_register(id, q.lt, id);
      return true;
    });
    begin_connections(id, list);
    return;
  }
  const auto target = static_cast<std::size_t>(sp_.k_short + sp_.k_jump);
  if (p.links.size() + p.pending.size() < target && p.pool.empty()) begin_connections(id, list);
}

void Engine::maybe_split(PeerId lt) {
  if (!dir_->at(lt).overloaded()) return;
  const auto out = dir_->split(lt);
  if (!out) return;
  ++flow_.splits;
  const PeerId created = out->created;
  send(lt, created, "SPLIT_NOTIFY", std::to_string(created.value), control_latency(lt, created),
       [this, created] { register_lt_record(created); });
  for (PeerId m : out->moved) {
    send(lt, m, "SPLIT_NOTIFY", std::to_string(created.value), control_latency(lt, m), [this, m, created] {
      if (dir_->tracker_of(m) == created) peer(m).lt = created;
    });
  }
}

void Engine::register_lt_record(PeerId lt) {
  const SimPeer& l = peer(lt);
  if (l.left || l.contact == kNoPeer || !dir_->contains(lt)) return;
  const PeerId contact = l.contact;
  send(lt, contact, "LT_REGISTER", std::to_string(stream_.value), control_latency(lt, contact), [this, lt, contact] {
    const SimPeer& q = peer(lt);
    if (!dir_->contains(lt)) return;
    overlay_->register_lt(contact, {lt, stream_, coord_to_key(q.coord, *curve_), q.coord, sim_.now()});
  });
}

void Engine::announce_merge(const tracker::StreamDirectory::MergeOutcome& m) {
  ++flow_.merges;
  retired_to_[m.retired] = m.survivor;
  const PeerId survivor = m.survivor;
  send(m.retired, survivor, "MERGE_NOTIFY", std::to_string(survivor.value), control_latency(m.retired, survivor),
       [] {});
  for (PeerId moved : m.moved) {
    send(m.retired, moved, "MERGE_NOTIFY", std::to_string(survivor.value), control_latency(m.retired, moved),
         [this, moved, survivor] {
           if (dir_->tracker_of(moved) == survivor) peer(moved).lt = survivor;
         });
  }
  const SimPeer& r = peer(m.retired);
  if (r.contact != kNoPeer) {
    const PeerId contact = r.contact;
    const PeerId retired = m.retired;
    send(retired, contact, "LT_DEREGISTER", std::to_string(stream_.value), control_latency(retired, contact),
         [this, contact, retired] { overlay_->deregister_lt(contact, retired, stream_); });
  }
}

void Engine::tracker_maintenance() {
  for (PeerId lt : dir_->trackers()) {
    if (!dir_->contains(lt)) continue;
    dir_->expire(lt, sim_.now());
    if (dir_->at(lt).underloaded()) {
      if (auto m = dir_->try_merge(lt)) {
        announce_merge(*m);
        continue;
      }
    }
    register_lt_record(lt);
  }
}

// ------------------------------------------------------------- connections

bool Engine::compatible(const SimPeer& p, const SimPeer& supplier) const {
  if (supplier.id == p.id) return false;
  if (p.role != Role::kNcp || supplier.role != Role::kNcp) return true;
  return supplier.ncp && p.ncp && supplier.ncp->offset == p.ncp->offset;
}

void Engine::begin_connections(PeerId id, const std::vector<tracker::PeerRecord>& list) {
  SimPeer& p = peer(id);
  std::vector<tracker::PeerRecord> cands;
  std::set<PeerId> seen;
  for (const tracker::PeerRecord& rec : list) {
    if (!compatible(p, peer(rec.peer_id)) || !seen.insert(rec.peer_id).second) continue;
    cands.push_back(rec);
  }
  if (id != pc_ && !seen.count(pc_)) cands.push_back(record_of(peer(pc_)));

  const DelayCoord pc_coord = peer(pc_).coord;
  const auto desired = swarm::select_neighbors(id, p.coord, cands, pc_coord, sp_.k_short, sp_.k_jump, p.rng);
  const auto ranked = swarm::rank_candidates(id, p.coord, cands, pc_coord);
  std::map<PeerId, tracker::PeerRecord> by_id;
  for (const auto& rec : cands) by_id.emplace(rec.peer_id, rec);

  p.pool.clear();
  p.tried.clear();
  for (const auto& link : p.links) p.tried.insert(link.neighbor_id);
  for (PeerId pend : p.pending) p.tried.insert(pend);
  std::set<PeerId> in_pool;
  for (const auto& d : desired) {
    p.desired_kind[d.neighbor_id] = d.link_kind;
    p.pool.push_back(by_id.at(d.neighbor_id));
    in_pool.insert(d.neighbor_id);
  }
  for (const auto& rec : ranked)
    if (!in_pool.count(rec.peer_id)) p.pool.push_back(rec);
  try_connect_more(id);
}

void Engine::try_connect_more(PeerId id) {
  SimPeer& p = peer(id);
  if (p.left) return;
  const auto target = static_cast<std::size_t>(sp_.k_short + sp_.k_jump);
  while (p.links.size() + p.pending.size() < target && !p.pool.empty()) {
    const tracker::PeerRecord rec = p.pool.front();
    p.pool.pop_front();
    const PeerId n = rec.peer_id;
    if (n == id || p.tried.count(n) || peer(n).left) continue;
    p.tried.insert(n);
    p.pending.insert(n);
    send(id, n, "CONNECT", std::to_string(id.value), control_latency(id, n), [this, n, id] { handle_connect(n, id); });
  }
  if (p.pending.empty() && p.pool.empty() && p.links.size() < target) schedule_relookup(id);
}

void Engine::schedule_relookup(PeerId id) {
  SimPeer& p = peer(id);
  if (p.relookup_pending) return;
  p.relookup_pending = true;
  const SimTime wait = std::min(cfg_.schedule.retry_ms * static_cast<double>(1u << std::min(p.relookups, 5u)),
                                cfg_.tracker.refresh_interval_ms);
  ++p.relookups;
  sim_.schedule_in(wait, [this, id] {
    SimPeer& q = peer(id);
    q.relookup_pending = false;
    if (q.left) return;
    const auto target = static_cast<std::size_t>(sp_.k_short + sp_.k_jump);
    if (q.links.size() + q.pending.size() >= target) return;
    if (q.lt != kNoPeer) forward_register(id, q.lt, id);
    else lt_lookup(id);
  }, id);
}

void Engine::handle_connect(PeerId n, PeerId id) {
  SimPeer& s = peer(n);
  if (s.left) return;
  const bool already = std::find(s.subscribers.begin(), s.subscribers.end(), id) != s.subscribers.end();
  if (already || (s.active && s.subscribers.size() < s.admission_cap)) {
    if (!already) s.subscribers.push_back(id);
    send(n, id, "ACCEPT", std::to_string(n.value), control_latency(n, id), [this, id, n] { on_accept(id, n); });
    start_have_timer(n);
    return;
  }
  // Refusal names the refuser's subscribers nearest the requester.
  const SimPeer& p = peer(id);
  std::vector<PeerId> subs;
  for (PeerId sub : s.subscribers)
    if (compatible(p, peer(sub)) && !peer(sub).left) subs.push_back(sub);
  std::sort(subs.begin(), subs.end(), [&](PeerId a, PeerId b) {
    const double da = distance(peer(a).coord, p.coord), db = distance(peer(b).coord, p.coord);
    return da != db ? da < db : a < b;
  });
  if (subs.size() > kRefuseSuggestions) subs.resize(kRefuseSuggestions);
  std::vector<tracker::PeerRecord> suggestions;
  std::string payload;
  for (PeerId sub : subs) {
    suggestions.push_back(record_of(peer(sub)));
    payload += std::to_string(sub.value) + ';';
  }
  send(n, id, "REFUSE", payload, control_latency(n, id),
       [this, id, n, suggestions] { on_refuse(id, n, suggestions); });
}

void Engine::on_accept(PeerId id, PeerId n) {
  SimPeer& p = peer(id);
  p.pending.erase(n);
  if (p.left) {
    send(id, n, "LEAVE", "", control_latency(id, n), [this, n, id] {
      auto& subs = peer(n).subscribers;
      subs.erase(std::remove(subs.begin(), subs.end(), id), subs.end());
    });
    return;
  }
  if (link_of(p, n)) return;
  swarm::NeighborLink link;
  link.neighbor_id = n;
  auto kind = p.desired_kind.find(n);
  link.link_kind = kind == p.desired_kind.end() ? swarm::LinkKind::kShort : kind->second;
  link.predicted_delay_ms = distance(p.coord, peer(n).coord);
  link.upload_capacity_kbps = peer(n).upload;
  p.links.push_back(link);
  try_connect_more(id);
}

void Engine::on_refuse(PeerId id, PeerId n, const std::vector<tracker::PeerRecord>& suggestions) {
  SimPeer& p = peer(id);
  p.pending.erase(n);
  if (p.left) return;
  for (auto it = suggestions.rbegin(); it != suggestions.rend(); ++it)
    if (!p.tried.count(it->peer_id) && !link_of(p, it->peer_id)) p.pool.push_front(*it);
  try_connect_more(id);
}

void Engine::start_have_timer(PeerId n) {
  SimPeer& s = peer(n);
  if (s.have_timer) return;
  s.have_timer = true;
  every(sim_.now(), sp_.chunk_duration_ms, [this, n] {
    SimPeer& src = peer(n);
    if (src.left || src.subscribers.empty()) {
      src.have_timer = false;
      return false;
    }
    const swarm::HaveSummary have = src.have;
    const int queue = static_cast<int>(src.queue.size()) + src.busy;
    const int concurrency = swarm::advertised_concurrency(src.upload, src.subscribers.size(), sp_);
    const std::string payload = have.to_string() + "|q" + std::to_string(queue) + "|c" + std::to_string(concurrency);
    for (PeerId sub : src.subscribers) {
      send(n, sub, "HAVE_MAP", payload, control_latency(n, sub),
           [this, sub, n, have, queue, concurrency] { on_have(sub, n, have, queue, concurrency); });
    }
    return true;
  });
}

// ------------------------------------------------------------------ swarming

swarm::NeighborLink* Engine::link_of(SimPeer& p, PeerId n) {
  for (auto& l : p.links)
    if (l.neighbor_id == n) return &l;
  return nullptr;
}

void Engine::release_request(SimPeer& p, Seq seq) {
  auto it = p.requests.find(seq);
  if (it == p.requests.end()) return;
  if (auto* link = link_of(p, it->second.neighbor); link && link->outstanding > 0) --link->outstanding;
  if (p.buffer && p.buffer->in_window(seq) && p.buffer->state(seq) == swarm::SlotState::kRequested)
    p.buffer->mark_pending(seq);
  p.in_flight.erase(seq);
  p.requests.erase(it);
}

void Engine::on_have(PeerId s, PeerId n, const swarm::HaveSummary& have, int queue, int concurrency) {
  SimPeer& p = peer(s);
  if (p.left) return;
  auto* link = link_of(p, n);
  if (!link) return;
  link->neighbor_have_summary = have;
  link->advertised_queue = queue;
  link->advertised_concurrency = concurrency;
  expire_requests(s);
  if (p.buffer && !p.start_point_set && p.pending.empty()) {
    if (auto start = swarm::choose_start_point(p.links, sp_.startup_threshold)) {
      p.buffer->set_start_point(*start);
      p.start_seq = *start;
      p.start_point_set = true;
    }
  }
  schedule(s);
}

void Engine::expire_requests(PeerId s) {
  SimPeer& p = peer(s);
  std::vector<std::pair<Seq, PeerId>> stale;
  for (const auto& [seq, info] : p.requests)
    if (sim_.now() - info.sent_at > sp_.request_timeout_ms) stale.emplace_back(seq, info.neighbor);
  for (const auto& [seq, n] : stale) {
    release_request(p, seq);
    cancel_at(s, n, seq);
  }
}

void Engine::cancel_at(PeerId s, PeerId n, Seq seq) {
  send(s, n, "CANCEL", std::to_string(seq), control_latency(s, n), [this, n, s, seq] {
    auto& q = peer(n).queue;
    q.erase(std::remove_if(q.begin(), q.end(), [&](const Upload& u) { return u.to == s.value && u.seq == seq; }),
            q.end());
  });
}

void Engine::schedule(PeerId s) {
  SimPeer& p = peer(s);
  if (p.left || p.links.empty()) return;
  swarm::SchedulerInput in;
  in.links = &p.links;
  if (p.buffer) {
    if (!p.start_point_set) return;
    in.buffer = &*p.buffer;
    in.start_seq = p.start_seq;
    in.playback_start = p.buffer->started() ? p.playback_start : std::numeric_limits<double>::infinity();
  } else if (p.ncp) {
    in.ncp = &*p.ncp;
    in.held = &p.have;
    in.in_flight = &p.in_flight;
  } else {
    return;
  }
  for (const swarm::Request& r : swarm::schedule_requests(in, sim_.now(), sp_)) {
    p.requests[r.seq] = {r.neighbor, sim_.now()};
    if (p.ncp) p.in_flight[r.seq] = r.neighbor;
    const PeerId n = r.neighbor;
    const Seq seq = r.seq;
    const SimTime due = p.buffer && p.buffer->started()
                            ? p.playback_start + static_cast<double>(seq - p.start_seq) * sp_.chunk_duration_ms
                            : sim_.now() + sp_.startup_threshold * sp_.chunk_duration_ms;
    send(s, n, "CHUNK_REQUEST", std::to_string(seq) + "@" + fmt(due), control_latency(s, n),
         [this, n, s, seq, due] { handle_request(n, s, seq, due); });
  }
}

void Engine::handle_request(PeerId n, PeerId s, Seq seq, SimTime due) {
  SimPeer& src = peer(n);
  if (src.left) return;
  if (!src.have.contains(seq)) {
    send(n, s, "CANCEL", std::to_string(seq), control_latency(n, s), [this, s, n, seq] { on_cancel(s, n, seq, false); });
    return;
  }
  if (cfg_.trust.enforce && src.role == Role::kConsumer) {
    if (!trust::authorize_service(ledger_, n, s, sp_.chunk_price, src.budget, sim_.now())) {
      ++trust_.denials;
      send(n, s, "CANCEL", std::to_string(seq) + ":denied", control_latency(n, s),
           [this, s, n, seq] { on_cancel(s, n, seq, true); });
      return;
    }
  }
  // Refuse at once when the uploads ranked ahead would make this one late.
  const double rate = src.upload / static_cast<double>(sp_.upload_slots);
  if (rate > 0.0) {
    const auto sent = [&](Seq q) {
      const auto f = src.served.find(q);
      return f == src.served.end() ? 0 : f->second;
    };
    const int mine = sent(seq);
    std::size_t ahead = 0;
    for (const Upload& u : src.queue) {
      const int c = sent(u.seq);
      if (c < mine || (c == mine && u.due <= due)) ++ahead;
    }
    const double tx = sp_.chunk_size_bits() / rate;
    const double wait = static_cast<double>(ahead / static_cast<std::size_t>(sp_.upload_slots) + 1) * tx;
    if (sim_.now() + wait + topo_.delay(n.value, s.value) > due) {
      send(n, s, "CANCEL", std::to_string(seq) + ":busy", control_latency(n, s),
           [this, s, n, seq] { on_cancel(s, n, seq, false); });
      return;
    }
  }
  const auto at = std::upper_bound(src.queue.begin(), src.queue.end(), due,
                                   [](SimTime d, const Upload& u) { return d < u.due; });
  src.queue.insert(at, {s.value, seq, due});
  pump(n);
}

void Engine::on_cancel(PeerId s, PeerId n, Seq seq, bool denied) {
  SimPeer& p = peer(s);
  if (p.left) return;
  auto it = p.requests.find(seq);
  if (it != p.requests.end() && it->second.neighbor == n) release_request(p, seq);
  if (denied) try_shift(s, n);
}

void Engine::pump(PeerId n) {
  SimPeer& src = peer(n);
  const double rate = src.upload / static_cast<double>(sp_.upload_slots);
  if (!(rate > 0.0)) return;
  while (src.busy < sp_.upload_slots && !src.queue.empty()) {
    const double tx = sp_.chunk_size_bits() / rate;
    // Uploads within one chunk duration of their latest start go first;
    // otherwise chunks this uplink has sent least often, then earliest due.
    // Uploads that can no longer arrive in time are cancelled.
    auto pick = src.queue.end();
    int fewest = std::numeric_limits<int>::max();
    for (auto it = src.queue.begin(); it != src.queue.end(); ++it) {
      if (sim_.now() + tx + sp_.chunk_duration_ms + topo_.delay(n.value, it->to) > it->due) {
        pick = it;
        break;
      }
      const auto f = src.served.find(it->seq);
      const int count = f == src.served.end() ? 0 : f->second;
      if (count < fewest) {
        fewest = count;
        pick = it;
      }
    }
    const Upload up = *pick;
    src.queue.erase(pick);
    const PeerId to{static_cast<std::uint32_t>(up.to)};
    if (sim_.now() + tx + topo_.delay(n.value, up.to) > up.due) {
      send(n, to, "CANCEL", std::to_string(up.seq) + ":late", control_latency(n, to),
           [this, to, n, seq = up.seq] { on_cancel(to, n, seq, false); });
      continue;
    }
    ++src.served[up.seq];
    while (!src.served.empty() && src.served.begin()->first + static_cast<Seq>(sp_.window) < up.seq)
      src.served.erase(src.served.begin());
    if (peers_[up.to].left) continue;
    if (src.active_rate + rate > src.upload * (1.0 + 1e-9))
      throw InvariantViolation("upload-capacity", "peer " + std::to_string(n.value) + " allocates beyond capacity");
    ++src.busy;
    src.active_rate += rate;
    ++src.hist.chunks_uploaded;
    ++flow_.chunks_sent;
    sim_.schedule_in(tx, [this, n, rate] {
      SimPeer& q = peer(n);
      --q.busy;
      q.active_rate -= rate;
      pump(n);
    }, n);
    const swarm::Chunk chunk = swarm::make_chunk(stream_, up.seq, 0.0, sp_);
    const SimTime latency = topo_.delay(n.value, up.to) + cfg_.network.per_hop_processing_ms + tx + jitter_.jitter();
    send(n, to, "CHUNK_DATA", std::to_string(up.seq), latency, [this, to, n, chunk] { on_chunk(to, n, chunk); });
  }
}

void Engine::on_chunk(PeerId id, PeerId n, const swarm::Chunk& chunk) {
  SimPeer& p = peer(id);
  if (p.left) return;
  if (!(chunk == swarm::make_chunk(stream_, chunk.seq, 0.0, sp_)))
    throw InvariantViolation("chunk-integrity", "seq " + std::to_string(chunk.seq));
  ++flow_.chunks_delivered;
  bool requested = false;
  auto it = p.requests.find(chunk.seq);
  if (it != p.requests.end() && it->second.neighbor == n) {
    requested = true;
    if (auto* link = link_of(p, n)) {
      if (link->outstanding > 0) --link->outstanding;
      const double elapsed = sim_.now() - it->second.sent_at;
      if (elapsed > 0.0)
        link->measured_throughput_kbps = 0.8 * link->measured_throughput_kbps + 0.2 * chunk.size_bits / elapsed;
    }
    p.requests.erase(it);
    p.in_flight.erase(chunk.seq);
  }
  if (p.buffer) {
    const auto out = swarm::on_chunk_received(*p.buffer, p.have, id, chunk, n, requested, sp_);
    if (out.duplicate) return;
    ++p.hist.chunks_downloaded;
    if (out.credit) send_receipt(id, n, chunk.seq);
    if (out.started_now) start_playback(id);
  } else {
    if (p.have.contains(chunk.seq)) return;
    p.have.insert(chunk.seq);
    ++p.hist.chunks_downloaded;
    send_receipt(id, n, chunk.seq);
  }
  schedule(id);
}

void Engine::send_receipt(PeerId id, PeerId n, Seq seq) {
  const SimPeer& p = peer(id);
  const std::string payload = "receipt:" + std::to_string(id.value) + ':' + std::to_string(n.value) + ':' +
                              std::to_string(seq) + ':' + std::to_string(sp_.chunk_price);
  const trust::Signature sig = suite_.sign(p.key, payload);
  send(id, n, "DELIVERY_RECEIPT", payload, control_latency(id, n), [this, id, n, payload, sig] {
    if (!suite_.verify(peer(id).key.pseudonym, payload, sig)) {
      ++trust_.rejected_receipts;
      return;
    }
    ledger_.set_clock(sim_.now());
    ledger_.credit(id, n, sp_.chunk_price);
    ++trust_.receipts;
  });
}

void Engine::start_playback(PeerId id) {
  SimPeer& p = peer(id);
  p.playback_start = sim_.now();
  p.hist.start_time = sim_.now();
  ++flow_.started_playback;
  every(sim_.now(), sp_.chunk_duration_ms, [this, id] {
    SimPeer& q = peer(id);
    if (q.left) return false;
    const auto tick = q.buffer->tick();
    ++q.hist.due;
    if (tick.played) {
      ++q.hist.played;
      q.hist.lag_samples.push_back(sim_.now() - swarm::make_chunk(stream_, tick.seq, 0.0, sp_).created_at);
    }
    std::vector<std::pair<Seq, PeerId>> late;
    for (const auto& [seq, info] : q.requests)
      if (seq < q.buffer->playout_point()) late.emplace_back(seq, info.neighbor);
    for (const auto& [seq, n] : late) {
      release_request(q, seq);
      cancel_at(id, n, seq);
    }
    expire_requests(id);
    schedule(id);
    return true;
  });
}

// ------------------------------------------------------------------- churn

void Engine::leave(PeerId id) {
  SimPeer& p = peer(id);
  if (!p.joined || p.left) return;
  p.left = true;
  p.active = false;
  for (const auto& link : p.links) {
    const PeerId n = link.neighbor_id;
    send(id, n, "LEAVE", "", control_latency(id, n), [this, n, id] {
      SimPeer& s = peer(n);
      s.subscribers.erase(std::remove(s.subscribers.begin(), s.subscribers.end(), id), s.subscribers.end());
      s.queue.erase(std::remove_if(s.queue.begin(), s.queue.end(), [&](const Upload& u) { return u.to == id.value; }),
                    s.queue.end());
    });
  }
  for (PeerId sub : p.subscribers)
    send(id, sub, "LEAVE", "", control_latency(id, sub), [this, sub, id] { on_upstream_left(sub, id); });
  p.subscribers.clear();
  p.queue.clear();
  if (p.lt != kNoPeer && p.lt != id) {
    const PeerId lt = p.lt;
    send(id, lt, "LEAVE", "", control_latency(id, lt), [this, lt, id] {
      const PeerId at = resolve_lt(lt);
      if (at != kNoPeer) dir_->remove_peer(at, id);
    });
  }
  if (dir_->contains(id)) {
    dir_->remove_peer(id, id);
    if (auto m = dir_->hand_over(id)) announce_merge(*m);
  }
}

void Engine::on_upstream_left(PeerId s, PeerId gone) {
  SimPeer& p = peer(s);
  if (p.left) return;
  std::vector<Seq> orphaned;
  for (const auto& [seq, info] : p.requests)
    if (info.neighbor == gone) orphaned.push_back(seq);
  for (Seq seq : orphaned) release_request(p, seq);
  p.links.erase(std::remove_if(p.links.begin(), p.links.end(), [&](const auto& l) { return l.neighbor_id == gone; }),
                p.links.end());
  try_connect_more(s);
}

// ------------------------------------------------------------------- trust

void Engine::advertise_all() {
  const SimTime now = sim_.now();
  ledger_.expire_reservations(now);
  for (SimPeer& p : peers_) {
    p.view.prune(now, cfg_.trust.staleness_horizon_ms);
    if (!p.active || p.left || ledger_.accounts_of(p.id).empty()) continue;
    auto ad = trust::make_advertisement(ledger_, p.id, p.key, suite_, now, cfg_.trust.walk_length);
    ++trust_.advertisements;
    walk_hop(p.id, std::move(ad));
  }
}

void Engine::walk_hop(PeerId holder, trust::TrustAdvertisement ad) {
  const auto next = trust::choose_walk_hop(ledger_, holder, ad.visited, walk_rng_);
  if (!next) return;
  const PeerId to = *next;
  const std::string payload = std::to_string(ad.advertiser.value) + ':' + fmt(ad.issued_at) + ':' + std::to_string(ad.ttl);
  send(holder, to, "TRUST_AD", payload, control_latency(holder, to), [this, to, ad = std::move(ad)]() mutable {
    SimPeer& r = peer(to);
    if (r.left) return;
    if (!r.view.accept(ad, peer(ad.advertiser).key.pseudonym, suite_)) return;
    ad.visited.push_back(to);
    if (--ad.ttl > 0) walk_hop(to, std::move(ad));
  });
}

void Engine::relay(std::vector<PeerId> hops, std::size_t i, const char* type, std::function<void()> done) {
  if (i + 1 >= hops.size()) {
    done();
    return;
  }
  const PeerId from = hops[i], to = hops[i + 1];
  send(from, to, type, std::to_string(hops.front().value) + '>' + std::to_string(hops.back().value),
       control_latency(from, to), [this, hops = std::move(hops), i, type, done = std::move(done)]() mutable {
         relay(std::move(hops), i + 1, type, std::move(done));
       });
}

void Engine::try_shift(PeerId s, PeerId n) {
  SimPeer& p = peer(s);
  if (p.shift_in_flight) return;
  const auto plan = trust::shift_plan(p.view, s, n);
  if (plan.empty()) return;
  const trust::FlowPath& path = plan.front();
  const trust::Units amount = std::min(path.amount, cfg_.trust.shift_amount);
  if (amount <= 0) return;
  p.shift_in_flight = true;
  ++trust_.shift_attempts;
  const std::vector<PeerId> route = path.route;
  std::vector<PeerId> back(route.rbegin(), route.rend());
  relay(back, 0, "SHIFT_RESERVE", [this, s, route, back, amount] {
    std::size_t refusing = 0;
    const auto id = ledger_.reserve(route, amount, sim_.now() + kShiftTimeoutMs, &refusing);
    auto finish = [this, s] { peer(s).shift_in_flight = false; };
    if (!id) {
      relay(route, 0, "SHIFT_ABORT", [this, finish] {
        ++trust_.shift_aborts;
        finish();
      });
      return;
    }
    relay(route, 0, "SHIFT_COMMIT", [this, id, amount, finish] {
      try {
        ledger_.set_clock(sim_.now());
        ledger_.commit(*id);
        trust_.total_shifted += amount;
      } catch (const std::invalid_argument&) {
        ++trust_.shift_aborts;
      }
      finish();
    });
  });
}

// ------------------------------------------------------------------ results

void Engine::final_checks() {
  std::string why;
  if (!dir_->check_invariants(&why)) throw InvariantViolation("tracker-partition", why);
  if (flow_.chunks_delivered > flow_.chunks_sent)
    throw InvariantViolation("chunk-conservation", "delivered " + std::to_string(flow_.chunks_delivered) +
                                                       " > sent " + std::to_string(flow_.chunks_sent));
  if (trust_.receipts > flow_.chunks_delivered)
    throw InvariantViolation("receipt-conservation", "receipts exceed deliveries");
  if (!ledger_.mirrors_consistent()) throw InvariantViolation("trust-mirrors", "debtor and creditor books differ");
  if (ledger_.min_balance_observed() < 0) throw InvariantViolation("trust-nonnegative", "negative balance written");
}

RunReport Engine::run() {
  setup();
  const std::size_t events = sim_.run_until(cfg_.duration_ms);
  final_checks();

  RunReport report;
  report.config = cfg_;
  report.events = events;

  std::vector<swarm::PeerHistory> histories;
  for (const SimPeer& p : peers_) {
    if (!p.joined) continue;
    histories.push_back(p.hist);
    if (p.role != Role::kConsumer) continue;
    ++flow_.consumers;
    if (p.phase_a) ++flow_.completed_doat_lookup;
    if (p.phase_b) ++flow_.completed_registration;
  }
  report.metrics = swarm::compute_metrics(histories, cfg_.duration_ms);
  report.metrics_csv = metrics_csv(report.metrics);

  doat_.mean_hops = doat_.answered ? static_cast<double>(hop_sum_) / static_cast<double>(doat_.answered) : 0.0;
  doat_.routing_updates = overlay_->stats().routing_updates;
  report.doat = doat_;

  trust_.min_balance = ledger_.min_balance_observed();
  report.trust = trust_;

  flow_.trackers = dir_->tracker_count();
  double sum = 0.0;
  std::uint64_t pairs = 0;
  for (std::size_t a = 0; a < peers_.size(); ++a)
    for (std::size_t b = a + 1; b < peers_.size(); ++b, ++pairs) sum += topo_.delay(a, b);
  flow_.mean_one_hop_latency_ms =
      (pairs ? sum / static_cast<double>(pairs) : 0.0) + cfg_.network.per_hop_processing_ms + 0.5 * jitter_.max_jitter();
  report.flow = flow_;

  report.ledger_csv = ledger_.dump_csv();
  report.trace_lines = sim_.trace().line_count();
  report.trace_digest = hex64(sim_.trace().digest());
  return report;
}

std::string optional_field(const std::optional<double>& v) { return v ? fmt(*v) : "NA"; }

}  // namespace

RunReport run_scenario(const ScenarioConfig& config, const RunOptions& options) {
  Engine engine(config, options);
  return engine.run();
}

std::string metrics_csv(const swarm::SwarmMetrics& metrics) {
  std::vector<const swarm::PeerMetrics*> rows;
  for (const auto& m : metrics.peers) rows.push_back(&m);
  std::sort(rows.begin(), rows.end(), [](const auto* a, const auto* b) { return a->peer_id < b->peer_id; });
  std::string out = "peer_id,role,startup_ms,mean_lag_ms,p95_lag_ms,continuity,chunks_uploaded,chunks_downloaded\n";
  for (const auto* m : rows) {
    out += std::to_string(m->peer_id.value);
    out += ',';
    out += to_string(m->role);
    out += ',';
    if (m->role != Role::kConsumer) out += "NA";
    else if (m->startup_ms) out += fmt(*m->startup_ms);
    else out += "censored:" + fmt(m->startup_bound_ms);
    out += ',' + optional_field(m->mean_lag_ms);
    out += ',' + optional_field(m->p95_lag_ms);
    out += ',' + optional_field(m->continuity);
    out += ',' + std::to_string(m->chunks_uploaded);
    out += ',' + std::to_string(m->chunks_downloaded);
    out += '\n';
  }
  return out;
}

const std::vector<std::string>& plot_metrics() {
  static const std::vector<std::string> names{"startup_ms",  "mean_lag_ms",     "p95_lag_ms",
                                              "continuity", "chunks_uploaded", "chunks_downloaded"};
  return names;
}

nlohmann::json report_to_json(const RunReport& r) {
  auto summary = [](const swarm::Summary& s) {
    return nlohmann::json{{"count", s.count}, {"mean", s.mean}, {"median", s.median}, {"p95", s.p95}};
  };
  nlohmann::json j;
  j["seed"] = r.config.seed;
  j["duration_ms"] = r.config.duration_ms;
  j["swarm"] = {{"startup_ms", summary(r.metrics.startup_ms)},
                {"mean_lag_ms", summary(r.metrics.mean_lag_ms)},
                {"continuity", summary(r.metrics.continuity)},
                {"censored_startups", r.metrics.censored_startups}};
  j["doat"] = {{"lookups", r.doat.lookups},
               {"answered", r.doat.answered},
               {"within_1_5", r.doat.within_1_5},
               {"mean_hops", r.doat.mean_hops},
               {"max_hops", r.doat.max_hops},
               {"routing_updates", r.doat.routing_updates}};
  j["trust"] = {{"receipts", r.trust.receipts},
                {"rejected_receipts", r.trust.rejected_receipts},
                {"denials", r.trust.denials},
                {"advertisements", r.trust.advertisements},
                {"shift_attempts", r.trust.shift_attempts},
                {"shift_aborts", r.trust.shift_aborts},
                {"total_shifted", r.trust.total_shifted},
                {"min_balance", r.trust.min_balance}};
  j["flow"] = {{"consumers", r.flow.consumers},
               {"completed_doat_lookup", r.flow.completed_doat_lookup},
               {"completed_registration", r.flow.completed_registration},
               {"started_playback", r.flow.started_playback},
               {"chunks_sent", r.flow.chunks_sent},
               {"chunks_delivered", r.flow.chunks_delivered},
               {"trackers", r.flow.trackers},
               {"splits", r.flow.splits},
               {"merges", r.flow.merges},
               {"mean_one_hop_latency_ms", r.flow.mean_one_hop_latency_ms}};
  j["events"] = r.events;
  j["trace_lines"] = r.trace_lines;
  j["trace_digest"] = r.trace_digest;
  j["files"] = {{"metrics", "metrics.csv"}, {"trace", r.config.output.trace ? "trace.log" : ""},
                {"config", "config.json"}, {"ledger", "ledger.csv"}};
  return j;
}

}  // namespace livecast
