#include "livecast/swarm.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace livecast::swarm {

void SwarmParams::validate() const {
  if (!(stream_rate_kbps > 0.0)) throw std::invalid_argument("stream.rate_kbps must be > 0");
  if (!(chunk_duration_ms > 0.0)) throw std::invalid_argument("stream.chunk_duration_ms must be > 0");
  if (window < 1) throw std::invalid_argument("swarm.window must be >= 1");
  if (startup_threshold < 1 || startup_threshold > window) {
    throw std::invalid_argument("swarm.startup_threshold must be in [1, swarm.window]");
  }
  if (k_short < 1) throw std::invalid_argument("swarm.k_short must be >= 1");
  if (k_jump < 0) throw std::invalid_argument("swarm.k_jump must be >= 0");
  if (chunk_price < 0) throw std::invalid_argument("trust.chunk_price must be >= 0");
  if (max_outstanding_per_neighbor < 1) throw std::invalid_argument("swarm.max_outstanding_per_neighbor must be >= 1");
  if (!(admission_factor > 0.0)) throw std::invalid_argument("swarm.admission_factor must be > 0");
  if (!(request_timeout_ms > 0.0)) throw std::invalid_argument("swarm.request_timeout_ms must be > 0");
  if (upload_slots < 1) throw std::invalid_argument("swarm.upload_slots must be >= 1");
  if (!(ncp_fraction > 0.0 && ncp_fraction <= 1.0)) throw std::invalid_argument("swarm.ncp_fraction must be in (0, 1]");
}

Chunk make_chunk(StreamId stream, Seq seq, SimTime stream_start, const SwarmParams& params) {
  return Chunk{stream, seq, stream_start + static_cast<double>(seq) * params.chunk_duration_ms, params.chunk_size_bits()};
}

// ------------------------------------------------------------ playout buffer

PlayoutBuffer::PlayoutBuffer(int window, int startup_threshold) : window_(window), startup_threshold_(startup_threshold) {
  if (window < 1 || startup_threshold < 1 || startup_threshold > window) {
    throw std::invalid_argument("buffer needs 1 <= startup_threshold <= window");
  }
}

void PlayoutBuffer::set_start_point(Seq seq) {
  if (started_) throw std::logic_error("playout point is fixed once playback starts");
  playout_point_ = seq;
  slots_.erase(slots_.begin(), slots_.lower_bound(seq));
}

SlotState PlayoutBuffer::state(Seq seq) const {
  if (seq < playout_point_) throw std::out_of_range("seq behind the playout point");
  auto it = slots_.find(seq);
  return it == slots_.end() ? SlotState::kPending : it->second;
}

void PlayoutBuffer::mark_requested(Seq seq) {
  if (seq < playout_point_) return;
  SlotState& s = slots_[seq];
  if (s == SlotState::kPending) s = SlotState::kRequested;
}

void PlayoutBuffer::mark_pending(Seq seq) {
  auto it = slots_.find(seq);
  if (it != slots_.end() && it->second == SlotState::kRequested) slots_.erase(it);
}

void PlayoutBuffer::mark_skipped(Seq seq) {
  if (seq < playout_point_) return;
  SlotState& s = slots_[seq];
  if (s != SlotState::kReceived) s = SlotState::kSkipped;
}

bool PlayoutBuffer::mark_received(Seq seq) {
  if (seq < playout_point_) return false;
  SlotState& s = slots_[seq];
  if (s == SlotState::kReceived || s == SlotState::kSkipped) return false;
  s = SlotState::kReceived;
  return true;
}

int PlayoutBuffer::consecutive_from_playout() const {
  int n = 0;
  for (auto it = slots_.find(playout_point_); it != slots_.end(); ++it) {
    if (it->first != playout_point_ + static_cast<Seq>(n) || it->second != SlotState::kReceived) break;
    ++n;
  }
  return n;
}

bool PlayoutBuffer::try_start() {
  if (started_ || consecutive_from_playout() < startup_threshold_) return false;
  started_ = true;
  return true;
}

PlayoutBuffer::Tick PlayoutBuffer::tick() {
  if (!started_) throw std::logic_error("playout tick before playback start");
  const Seq seq = playout_point_;
  const bool played = state(seq) == SlotState::kReceived;
  if (played) {
    ++played_;
  } else {
    ++missed_;
  }
  slots_.erase(seq);
  ++playout_point_;
  return {seq, played};
}

// -------------------------------------------------------------- have summary

bool HaveSummary::contains(Seq seq) const {
  if (seq >= end || end - 1 - seq >= kSpan) return false;
  const Seq bit = end - 1 - seq;
  return (bits[bit / 64] >> (bit % 64)) & 1u;
}

void HaveSummary::insert(Seq seq) {
  if (seq >= end) {
    const Seq shift = seq + 1 - end;
    if (shift >= kSpan) {
      bits = {0, 0};
    } else if (shift >= 64) {
      bits[1] = bits[0] << (shift - 64);
      bits[0] = 0;
    } else if (shift > 0) {
      bits[1] = (bits[1] << shift) | (bits[0] >> (64 - shift));
      bits[0] <<= shift;
    }
    end = seq + 1;
  }
  const Seq bit = end - 1 - seq;
  if (bit < kSpan) bits[bit / 64] |= std::uint64_t{1} << (bit % 64);
}

std::string HaveSummary::to_string() const {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%llu:%016llx%016llx", static_cast<unsigned long long>(end),
                static_cast<unsigned long long>(bits[1]), static_cast<unsigned long long>(bits[0]));
  return buf;
}

std::string_view to_string(LinkKind kind) { return kind == LinkKind::kShort ? "short" : "jump"; }

// ------------------------------------------------------ neighbour selection

namespace {

NeighborLink link_to(const tracker::PeerRecord& rec, DelayCoord self_coord, LinkKind kind) {
  NeighborLink l;
  l.neighbor_id = rec.peer_id;
  l.link_kind = kind;
  l.predicted_delay_ms = distance(self_coord, rec.coord);
  l.upload_capacity_kbps = rec.upload_capacity_kbps;
  return l;
}

}  // namespace

std::vector<tracker::PeerRecord> rank_candidates(PeerId self, DelayCoord self_coord,
                                                 const std::vector<tracker::PeerRecord>& candidates,
                                                 DelayCoord peercaster_coord) {
  const double own = distance(self_coord, peercaster_coord);
  std::vector<tracker::PeerRecord> closer;
  std::vector<tracker::PeerRecord> rest;
  for (const auto& c : candidates) {
    if (c.peer_id == self) continue;
    (distance(c.coord, peercaster_coord) < own ? closer : rest).push_back(c);
  }
  auto by_distance = [&](const tracker::PeerRecord& a, const tracker::PeerRecord& b) {
    const double da = distance(self_coord, a.coord);
    const double db = distance(self_coord, b.coord);
    return da != db ? da < db : a.peer_id < b.peer_id;
  };
  std::sort(closer.begin(), closer.end(), by_distance);
  std::sort(rest.begin(), rest.end(), by_distance);
  closer.insert(closer.end(), rest.begin(), rest.end());
  return closer;
}

std::vector<NeighborLink> select_neighbors(PeerId self, DelayCoord self_coord,
                                           const std::vector<tracker::PeerRecord>& candidates,
                                           DelayCoord peercaster_coord, int k_short, int k_jump, Rng& rng) {
  if (k_short < 1) throw std::invalid_argument("k_short must be >= 1");
  const double own = distance(self_coord, peercaster_coord);
  const auto ranked = rank_candidates(self, self_coord, candidates, peercaster_coord);
  const auto closer_count = static_cast<std::size_t>(std::count_if(
      ranked.begin(), ranked.end(), [&](const auto& c) { return distance(c.coord, peercaster_coord) < own; }));

  std::vector<NeighborLink> out;
  std::vector<bool> used(ranked.size(), false);
  // A candidate peercaster always takes a short slot.
  for (std::size_t i = 0; i < ranked.size(); ++i) {
    if (ranked[i].role != Role::kPeercaster) continue;
    out.push_back(link_to(ranked[i], self_coord, LinkKind::kShort));
    used[i] = true;
    break;
  }
  // Nearest closer candidates next; the ranking then continues with the
  // nearest others, which is the fallback when too few are closer.
  for (std::size_t i = 0; i < ranked.size() && out.size() < static_cast<std::size_t>(k_short); ++i) {
    if (used[i]) continue;
    out.push_back(link_to(ranked[i], self_coord, LinkKind::kShort));
    used[i] = true;
  }

  for (int j = 0; j < k_jump; ++j) {
    double total = 0.0;
    for (std::size_t i = 0; i < closer_count; ++i) {
      if (!used[i]) total += distance(self_coord, ranked[i].coord);
    }
    std::size_t pick = ranked.size();
    if (total > 0.0) {
      double r = rng.uniform() * total;
      for (std::size_t i = 0; i < closer_count; ++i) {
        if (used[i]) continue;
        pick = i;
        r -= distance(self_coord, ranked[i].coord);
        if (r < 0.0) break;
      }
    } else {
      std::vector<std::size_t> free;
      for (std::size_t i = 0; i < closer_count; ++i) {
        if (!used[i]) free.push_back(i);
      }
      if (!free.empty()) pick = free[rng.below(free.size())];
    }
    if (pick == ranked.size()) break;
    used[pick] = true;
    out.push_back(link_to(ranked[pick], self_coord, LinkKind::kJump));
  }
  return out;
}

// --------------------------------------------------------------------- NCPs

NcpFilter ncp_chunk_policy(double fraction, Seq offset) {
  if (!(fraction > 0.0 && fraction <= 1.0)) throw std::invalid_argument("NCP fraction must be in (0, 1]");
  const auto period = static_cast<Seq>(std::llround(1.0 / fraction));
  return NcpFilter{period, offset % period};
}

std::vector<ScheduledJoin> ncp_bootstrap_order(const std::vector<tracker::PeerRecord>& ncps,
                                               DelayCoord peercaster_coord, SimTime start, SimTime stagger) {
  std::vector<tracker::PeerRecord> sorted = ncps;
  std::sort(sorted.begin(), sorted.end(), [&](const auto& a, const auto& b) {
    const double da = distance(a.coord, peercaster_coord);
    const double db = distance(b.coord, peercaster_coord);
    return da != db ? da < db : a.peer_id < b.peer_id;
  });
  std::vector<ScheduledJoin> out;
  for (std::size_t i = 0; i < sorted.size(); ++i) out.push_back({sorted[i], start + static_cast<double>(i) * stagger});
  return out;
}

std::vector<ScheduledJoin> ncp_random_order(const std::vector<tracker::PeerRecord>& ncps, SimTime start,
                                            SimTime stagger, Rng& rng) {
  std::vector<tracker::PeerRecord> order = ncps;
  std::sort(order.begin(), order.end(), [](const auto& a, const auto& b) { return a.peer_id < b.peer_id; });
  rng.shuffle(order.begin(), order.end());
  std::vector<ScheduledJoin> out;
  for (std::size_t i = 0; i < order.size(); ++i) out.push_back({order[i], start + static_cast<double>(i) * stagger});
  return out;
}

// ---------------------------------------------------------------- scheduling

std::optional<Seq> choose_start_point(const std::vector<NeighborLink>& links, int threshold, int min_holders) {
  if (threshold < 1) throw std::invalid_argument("threshold must be >= 1");
  if (min_holders < 1) throw std::invalid_argument("min_holders must be >= 1");
  Seq newest_end = 0;
  for (const auto& l : links) newest_end = std::max(newest_end, l.neighbor_have_summary.end);
  auto available = [&](Seq s) {
    const auto holders = std::count_if(links.begin(), links.end(),
                                       [&](const NeighborLink& l) { return l.neighbor_have_summary.contains(s); });
    return holders >= min_holders;
  };
  const auto t = static_cast<Seq>(threshold);
  if (newest_end < t) return std::nullopt;
  const Seq lowest = newest_end > HaveSummary::kSpan ? newest_end - HaveSummary::kSpan : 0;
  for (Seq s = newest_end - t + 1; s-- > lowest;) {
    Seq run = 0;
    while (run < t && available(s + run)) ++run;
    if (run == t) return s;
  }
  return std::nullopt;
}

int advertised_concurrency(double upload_kbps, std::size_t subscribers, const SwarmParams& params) {
  const double per_period = upload_kbps / params.stream_rate_kbps;
  const double share = subscribers == 0 ? per_period : per_period / static_cast<double>(subscribers);
  const auto c = static_cast<int>(std::floor(share));
  return std::clamp(c, 1, params.max_outstanding_per_neighbor);
}

std::vector<Request> schedule_requests(SchedulerInput in, SimTime now, const SwarmParams& params) {
  std::vector<NeighborLink>& links = *in.links;
  std::vector<Seq> wanted;
  std::vector<double> deadlines;
  if (in.buffer != nullptr) {
    PlayoutBuffer& buf = *in.buffer;
    const Seq pp = buf.playout_point();
    for (Seq s = pp; s < pp + static_cast<Seq>(buf.window()); ++s) {
      if (buf.state(s) != SlotState::kPending) continue;
      double deadline = std::numeric_limits<double>::infinity();
      if (buf.started()) {
        deadline = in.playback_start + static_cast<double>(s - in.start_seq) * params.chunk_duration_ms;
        if (deadline <= now) {
          buf.mark_skipped(s);
          continue;
        }
      }
      wanted.push_back(s);
      deadlines.push_back(deadline);
    }
  } else if (in.ncp != nullptr) {
    Seq newest_end = 0;
    for (const auto& l : links) newest_end = std::max(newest_end, l.neighbor_have_summary.end);
    const auto w = static_cast<Seq>(params.window);
    for (Seq s = newest_end > w ? newest_end - w : 0; s < newest_end; ++s) {
      if (!in.ncp->wants(s) || (in.held != nullptr && in.held->contains(s))) continue;
      if (in.in_flight != nullptr && in.in_flight->count(s) != 0) continue;
      wanted.push_back(s);
      deadlines.push_back(std::numeric_limits<double>::infinity());
    }
  }

  std::vector<Request> out;
  const double size = params.chunk_size_bits();
  for (std::size_t w = 0; w < wanted.size(); ++w) {
    const Seq s = wanted[w];
    std::size_t best = links.size();
    double best_cost = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < links.size(); ++i) {
      const NeighborLink& l = links[i];
      const int limit = l.advertised_concurrency > 0
                            ? std::min(l.advertised_concurrency, params.max_outstanding_per_neighbor)
                            : params.max_outstanding_per_neighbor;
      if (!l.neighbor_have_summary.contains(s) || l.outstanding >= limit) continue;
      if (!(l.upload_capacity_kbps > 0.0)) continue;
      const double tx = size / l.upload_capacity_kbps;
      const double cost = l.predicted_delay_ms + static_cast<double>(l.advertised_queue + l.outstanding + 1) * tx;
      // A source that cannot deliver before the deadline would only spend a
      // request slot.
      if (now + cost > deadlines[w]) continue;
      if (cost < best_cost || (cost == best_cost && l.neighbor_id < links[best].neighbor_id)) {
        best = i;
        best_cost = cost;
      }
    }
    if (best == links.size()) continue;
    ++links[best].outstanding;
    if (in.buffer != nullptr) in.buffer->mark_requested(s);
    out.push_back({links[best].neighbor_id, s});
  }
  return out;
}

ReceiveOutcome on_chunk_received(PlayoutBuffer& buffer, HaveSummary& have, PeerId self, const Chunk& chunk,
                                 PeerId from, bool was_requested, const SwarmParams& params) {
  ReceiveOutcome out;
  if (have.contains(chunk.seq)) {
    out.duplicate = true;
    return out;
  }
  have.insert(chunk.seq);
  buffer.mark_received(chunk.seq);
  out.unsolicited = !was_requested;
  out.credit = CreditEvent{self, from, params.chunk_price};
  out.started_now = buffer.try_start();
  return out;
}

// ------------------------------------------------------------------ metrics

double percentile(std::vector<double> values, double q) {
  if (values.empty()) throw std::invalid_argument("percentile of an empty set");
  if (!(q > 0.0 && q <= 1.0)) throw std::invalid_argument("percentile rank must be in (0, 1]");
  std::sort(values.begin(), values.end());
  const auto rank = static_cast<std::size_t>(std::ceil(q * static_cast<double>(values.size())));
  return values[std::max<std::size_t>(rank, 1) - 1];
}

Summary summarize(const std::vector<double>& values) {
  Summary s;
  s.count = values.size();
  if (values.empty()) return s;
  s.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
  s.median = percentile(values, 0.5);
  s.p95 = percentile(values, 0.95);
  return s;
}

SwarmMetrics compute_metrics(const std::vector<PeerHistory>& histories, SimTime observed_until) {
  SwarmMetrics out;
  std::vector<double> startups;
  std::vector<double> lags;
  std::vector<double> continuities;
  for (const PeerHistory& h : histories) {
    PeerMetrics m;
    m.peer_id = h.peer_id;
    m.role = h.role;
    m.chunks_uploaded = h.chunks_uploaded;
    m.chunks_downloaded = h.chunks_downloaded;
    if (h.role == Role::kConsumer) {
      if (h.start_time) {
        m.startup_ms = *h.start_time - h.join_time;
      } else {
        m.startup_bound_ms = observed_until - h.join_time;
        ++out.censored_startups;
      }
      if (!h.lag_samples.empty()) {
        m.mean_lag_ms = std::accumulate(h.lag_samples.begin(), h.lag_samples.end(), 0.0) /
                        static_cast<double>(h.lag_samples.size());
        m.p95_lag_ms = percentile(h.lag_samples, 0.95);
      }
      if (h.due > 0) m.continuity = static_cast<double>(h.played) / static_cast<double>(h.due);
      if (m.startup_ms) startups.push_back(*m.startup_ms);
      if (m.mean_lag_ms) lags.push_back(*m.mean_lag_ms);
      if (m.continuity) continuities.push_back(*m.continuity);
    }
    out.peers.push_back(m);
  }
  out.startup_ms = summarize(startups);
  out.mean_lag_ms = summarize(lags);
  out.continuity = summarize(continuities);
  return out;
}

}  // namespace livecast::swarm
