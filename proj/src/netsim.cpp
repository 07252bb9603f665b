#include "livecast/netsim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <cstdio>
#include <ostream>
#include <stdexcept>

namespace livecast {

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t state) {
  for (const char c : bytes) {
    state ^= static_cast<unsigned char>(c);
    state *= 0x100000001b3ULL;
  }
  return state;
}

std::string hex64(std::uint64_t value) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(value));
  return buf;
}

void TraceLog::record(SimTime time, PeerId src, PeerId dst, std::string_view type, std::string_view payload) {
  char head[64];
  std::snprintf(head, sizeof head, "%.3f,%u,%u,", time, src.value, dst.value);
  std::string line = head;
  line += type;
  line += ',';
  line += hex64(fnv1a64(payload));
  line += '\n';
  digest_ = fnv1a64(line, digest_);
  ++lines_;
  auto it = std::find_if(per_type_.begin(), per_type_.end(), [&](const auto& p) { return p.first == type; });
  if (it == per_type_.end()) {
    per_type_.emplace_back(std::string(type), 1);
  } else {
    ++it->second;
  }
  if (out_ != nullptr) *out_ << line;
}

std::uint64_t TraceLog::count_of(std::string_view type) const {
  for (const auto& [name, count] : per_type_) {
    if (name == type) return count;
  }
  return 0;
}

Ticket Simulator::schedule(SimTime fire_time, Handler handler, PeerId target) {
  if (!(fire_time >= now_)) throw std::invalid_argument("cannot schedule an event in the past");
  const std::uint64_t seq = next_seq_++;
  queue_.push(SimEvent{fire_time, seq, target, std::move(handler)});
  return Ticket{seq};
}

Ticket Simulator::schedule_in(SimTime delay, Handler handler, PeerId target) {
  return schedule(now_ + delay, std::move(handler), target);
}

void Simulator::cancel(Ticket ticket) { cancelled_.insert(ticket.seq); }

bool Simulator::dispatch_next(SimTime t_end) {
  while (!queue_.empty()) {
    if (queue_.top().fire_time > t_end) return false;
    SimEvent ev = std::move(const_cast<SimEvent&>(queue_.top()));
    queue_.pop();
    if (auto it = cancelled_.find(ev.seq_within_time); it != cancelled_.end()) {
      cancelled_.erase(it);
      continue;
    }
    now_ = ev.fire_time;
    ev.payload();
    return true;
  }
  return false;
}

std::size_t Simulator::run_until(SimTime t_end) {
  std::size_t count = 0;
  while (dispatch_next(t_end)) ++count;
  if (t_end > now_) now_ = t_end;
  return count;
}

std::size_t Simulator::run() {
  std::size_t count = 0;
  while (dispatch_next(std::numeric_limits<double>::infinity())) ++count;
  return count;
}

double message_latency(DelayCoord src, DelayCoord dst, double size_bits, double per_hop_processing_ms,
                       double allocated_rate_kbps, double jitter_ms) {
  const double transmission = allocated_rate_kbps > 0.0 ? size_bits / allocated_rate_kbps : 0.0;
  return distance(src, dst) + per_hop_processing_ms + transmission + jitter_ms;
}

std::string_view to_string(TopologyKind kind) {
  return kind == TopologyKind::kClustered ? "clustered" : "uniform_rectangle";
}

TopologyKind topology_kind_from_string(std::string_view text) {
  if (text == "uniform_rectangle") return TopologyKind::kUniformRectangle;
  if (text == "clustered") return TopologyKind::kClustered;
  throw std::invalid_argument("unknown topology kind: " + std::string(text));
}

void TopologyParams::validate() const {
  if (consumers < 0) throw std::invalid_argument("topology.consumers must be >= 0");
  if (ncps < 0) throw std::invalid_argument("topology.ncps must be >= 0");
  if (!(max_delay_ms > 0.0)) throw std::invalid_argument("topology.max_delay_ms must be > 0");
  if (!(aspect > 0.0)) throw std::invalid_argument("topology.aspect must be > 0");
  if (kind == TopologyKind::kClustered) {
    if (clusters < 1) throw std::invalid_argument("topology.clusters must be >= 1");
    if (!(cluster_spread_ms > 0.0)) throw std::invalid_argument("topology.cluster_spread_ms must be > 0");
    if (inter_cluster_floor_ms < 0.0) throw std::invalid_argument("topology.inter_cluster_floor_ms must be >= 0");
  }
  if (consumer_upload_kbps < 0.0) throw std::invalid_argument("topology.consumer_upload_kbps must be >= 0");
  if (ncp_upload_kbps < 0.0) throw std::invalid_argument("topology.ncp_upload_kbps must be >= 0");
  if (peercaster_upload_kbps < 0.0) throw std::invalid_argument("topology.peercaster_upload_kbps must be >= 0");
  if (noise_sigma < 0.0) throw std::invalid_argument("topology.noise_sigma must be >= 0");
}

double Topology::delay(std::size_t a, std::size_t b) const {
  if (a == b) return 0.0;
  double d = distance(peers[a].coord, peers[b].coord);
  if (clustered && peers[a].cluster != peers[b].cluster) d = std::max(d, inter_cluster_floor_ms);
  if (noise_sigma > 0.0) {
    const auto lo = static_cast<std::uint64_t>(std::min(a, b));
    const auto hi = static_cast<std::uint64_t>(std::max(a, b));
    // Per-pair standard normal from a hashed seed keeps delay() symmetric and
    // free of hidden state.
    Rng pair_rng(derive_seed(seed, lo << 32 | hi));
    d *= std::exp(noise_sigma * pair_rng.normal());
  }
  return d;
}

Topology generate_topology(const TopologyParams& params, std::uint64_t seed) {
  params.validate();
  Rng rng(seed);
  Topology topo;
  topo.seed = seed;
  topo.noise_sigma = params.noise_sigma;
  topo.clustered = params.kind == TopologyKind::kClustered;
  topo.inter_cluster_floor_ms = params.inter_cluster_floor_ms;

  // Half extents of the rectangle whose corners sit exactly max_delay away.
  const double half_diag = params.max_delay_ms;
  const double half_h = half_diag / std::sqrt(1.0 + params.aspect * params.aspect);
  const double half_w = half_h * params.aspect;
  const DelayCoord center{half_w, half_h};
  topo.bounds = Bounds{0.0, 0.0, 2.0 * half_w, 2.0 * half_h};

  const int total = params.ncps + params.consumers;
  std::vector<DelayCoord> points(static_cast<std::size_t>(total));
  std::vector<int> cluster_of(static_cast<std::size_t>(total), 0);

  if (params.kind == TopologyKind::kUniformRectangle) {
    double farthest = 0.0;
    for (auto& p : points) {
      p = {rng.uniform(-half_w, half_w), rng.uniform(-half_h, half_h)};
      farthest = std::max(farthest, std::hypot(p.x, p.y));
    }
    // Stretch about the peercaster so the farthest peer sits on the bound.
    const double scale = farthest > 0.0 ? params.max_delay_ms / farthest : 1.0;
    for (auto& p : points) p = {center.x + p.x * scale, center.y + p.y * scale};
  } else {
    std::vector<DelayCoord> centers(static_cast<std::size_t>(params.clusters));
    for (auto& c : centers) c = {rng.uniform(0.0, 2.0 * half_w), rng.uniform(0.0, 2.0 * half_h)};
    const double radius = 2.0 * params.cluster_spread_ms;
    for (std::size_t i = 0; i < points.size(); ++i) {
      const auto c = static_cast<int>(rng.below(static_cast<std::uint64_t>(params.clusters)));
      double dx;
      double dy;
      do {
        dx = rng.normal() * params.cluster_spread_ms;
        dy = rng.normal() * params.cluster_spread_ms;
      } while (std::hypot(dx, dy) >= radius);
      points[i] = {centers[static_cast<std::size_t>(c)].x + dx, centers[static_cast<std::size_t>(c)].y + dy};
      cluster_of[i] = c;
    }
  }

  topo.peers.reserve(points.size() + 1);
  topo.peers.push_back({PeerId{0}, center, params.peercaster_upload_kbps, Role::kPeercaster, -1});
  for (std::size_t i = 0; i < points.size(); ++i) {
    const bool ncp = static_cast<int>(i) < params.ncps;
    topo.peers.push_back({PeerId{static_cast<std::uint32_t>(i + 1)}, points[i],
                          ncp ? params.ncp_upload_kbps : params.consumer_upload_kbps,
                          ncp ? Role::kNcp : Role::kConsumer, cluster_of[i]});
  }
  return topo;
}

std::vector<ChurnEvent> churn_stream(const ChurnProcess& process, SimTime horizon_ms) {
  if (!(horizon_ms > 0.0)) throw std::invalid_argument("churn horizon must be > 0");
  std::vector<ChurnEvent> events;
  if (process.arrival_rate_per_s <= 0.0) return events;
  Rng rng(process.seed);
  const double mean_gap_ms = 1000.0 / process.arrival_rate_per_s;
  SimTime t = 0.0;
  std::uint32_t arrival = 0;
  while (true) {
    t += rng.exponential(mean_gap_ms);
    if (t >= horizon_ms) break;
    events.push_back({t, ChurnEvent::Kind::kJoin, arrival});
    double lifetime_s;
    if (process.lifetime == LifetimeKind::kExponential) {
      lifetime_s = rng.exponential(process.mean_lifetime_s);
    } else {
      const double shape = process.pareto_shape;
      const double scale = process.mean_lifetime_s * (shape - 1.0) / shape;
      lifetime_s = rng.pareto(scale, shape);
    }
    const SimTime leave = t + lifetime_s * 1000.0;
    if (leave < horizon_ms) events.push_back({leave, ChurnEvent::Kind::kLeave, arrival});
    ++arrival;
  }
  std::stable_sort(events.begin(), events.end(), [](const ChurnEvent& a, const ChurnEvent& b) { return a.time < b.time; });
  return events;
}

}  // namespace livecast
