#include <algorithm>
#include <set>
#include <stdexcept>
#include <vector>

#include "doctest.h"
#include "livecast/netsim.hpp"
#include "livecast/swarm.hpp"

using namespace livecast;
using namespace livecast::swarm;
using tracker::PeerRecord;

namespace {

PeerRecord at(std::uint32_t id, double x, double y = 0.0, double up = 700.0) {
  return {PeerId{id}, {x, y}, up, Role::kConsumer, 0.0};
}

HaveSummary holding(Seq from, Seq to, Seq step = 1, Seq offset = 0) {
  HaveSummary h;
  for (Seq s = from; s < to; ++s)
    if (s % step == offset) h.insert(s);
  return h;
}

NeighborLink source(std::uint32_t id, HaveSummary have, double delay = 10.0, double up = 1e6) {
  NeighborLink l;
  l.neighbor_id = PeerId{id};
  l.predicted_delay_ms = delay;
  l.neighbor_have_summary = have;
  l.upload_capacity_kbps = up;
  return l;
}

}  // namespace

TEST_CASE("collinear candidates: the two nearest closer peers") {
  Rng rng(1);
  const std::vector<PeerRecord> cands{at(1, 10), at(2, 20), at(3, 30), at(4, 40)};
  const auto links = select_neighbors(PeerId{4}, {40, 0}, cands, {0, 0}, 2, 0, rng);
  REQUIRE(links.size() == 2);
  CHECK(links[0].neighbor_id == PeerId{3});
  CHECK(links[1].neighbor_id == PeerId{2});
  CHECK(links[0].predicted_delay_ms == doctest::Approx(10.0));
  CHECK(links[0].link_kind == LinkKind::kShort);
}

TEST_CASE("a candidate peercaster is always selected") {
  Rng rng(2);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<PeerRecord> cands;
    for (std::uint32_t i = 1; i <= 30; ++i) cands.push_back(at(i, rng.uniform(-100, 100), rng.uniform(-100, 100)));
    PeerRecord pc = at(0, 0, 0, 3500);
    pc.role = Role::kPeercaster;
    cands.push_back(pc);
    const DelayCoord self{rng.uniform(-100, 100), rng.uniform(-100, 100)};
    const auto links = select_neighbors(PeerId{99}, self, cands, {0, 0}, 4, 2, rng);
    CHECK(std::any_of(links.begin(), links.end(), [](const NeighborLink& l) { return l.neighbor_id == PeerId{0}; }));
  }
}

TEST_CASE("with no closer candidates the nearest are used") {
  Rng rng(3);
  const std::vector<PeerRecord> cands{at(1, 50), at(2, 20), at(3, 80), at(4, 5, 0)};
  const auto links = select_neighbors(PeerId{9}, {1, 0}, cands, {0, 0}, 2, 3, rng);
  REQUIRE(links.size() == 2);
  CHECK(links[0].neighbor_id == PeerId{4});
  CHECK(links[1].neighbor_id == PeerId{2});
  CHECK(select_neighbors(PeerId{9}, {1, 0}, {}, {0, 0}, 2, 2, rng).empty());
  CHECK_THROWS(select_neighbors(PeerId{9}, {1, 0}, cands, {0, 0}, 0, 2, rng));
}

TEST_CASE("short links point toward the peercaster and jumps are distinct") {
  Rng rng(4);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<PeerRecord> cands;
    for (std::uint32_t i = 1; i <= 60; ++i) cands.push_back(at(i, rng.uniform(-140, 140), rng.uniform(-140, 140)));
    const DelayCoord self{rng.uniform(-140, 140), rng.uniform(-140, 140)};
    const double own = distance(self, {0, 0});
    const auto links = select_neighbors(PeerId{999}, self, cands, {0, 0}, 4, 2, rng);
    std::set<PeerId> ids;
    std::size_t closer = 0;
    for (const auto& c : cands) closer += distance(c.coord, {0, 0}) < own;
    for (const auto& l : links) {
      ids.insert(l.neighbor_id);
      const auto& rec = cands[l.neighbor_id.value - 1];
      if (closer >= 4 || l.link_kind == LinkKind::kJump) CHECK(distance(rec.coord, {0, 0}) < own);
    }
    CHECK(ids.size() == links.size());
    CHECK(links.size() <= 6);
  }
}

TEST_CASE("jumps favour distant closer candidates") {
  // Closer candidates at 10 and 100 ms from self; with k_short = 1 the near
  // one is short and the only jump is the far one. With two jump candidates
  // weighted 20 and 80, the far one wins about 80% of the time.
  Rng rng(5);
  const std::vector<PeerRecord> cands{at(1, 190), at(2, 180), at(3, 120)};
  int far = 0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const auto links = select_neighbors(PeerId{9}, {200, 0}, cands, {0, 0}, 1, 1, rng);
    REQUIRE(links.size() == 2);
    CHECK(links[0].neighbor_id == PeerId{1});
    far += links[1].neighbor_id == PeerId{3};
  }
  CHECK(static_cast<double>(far) / n == doctest::Approx(0.8).epsilon(0.02));
}

TEST_CASE("single source receives the whole window in seq order") {
  PlayoutBuffer buf(10, 3);
  std::vector<NeighborLink> links{source(1, holding(0, 64))};
  SwarmParams p;
  p.max_outstanding_per_neighbor = 100;
  const auto reqs = schedule_requests({.links = &links, .buffer = &buf}, 0.0, p);
  REQUIRE(reqs.size() == 10);
  for (Seq s = 0; s < 10; ++s) {
    CHECK(reqs[s] == Request{PeerId{1}, s});
    CHECK(buf.state(s) == SlotState::kRequested);
  }
  CHECK(links[0].outstanding == 10);
  CHECK(schedule_requests({.links = &links, .buffer = &buf}, 0.0, p).empty());
}

TEST_CASE("availability forces a parity split") {
  PlayoutBuffer buf(20, 3);
  std::vector<NeighborLink> links{source(1, holding(0, 64, 2, 0)), source(2, holding(0, 64, 2, 1))};
  SwarmParams p;
  p.max_outstanding_per_neighbor = 100;
  const auto reqs = schedule_requests({.links = &links, .buffer = &buf}, 0.0, p);
  REQUIRE(reqs.size() == 20);
  for (const auto& r : reqs) CHECK(r.neighbor == PeerId{1 + static_cast<std::uint32_t>(r.seq % 2)});
}

TEST_CASE("slots past their deadline are skipped, not requested") {
  SwarmParams p;
  PlayoutBuffer buf(10, 2);
  buf.mark_received(0);
  buf.mark_received(1);
  REQUIRE(buf.try_start());
  std::vector<NeighborLink> links{source(1, holding(0, 64), 1.0)};
  // Playback started at t = 0 with seq 0; at t = 760 seqs 2 and 3 are due.
  const auto reqs = schedule_requests({.links = &links, .buffer = &buf, .playback_start = 0.0, .start_seq = 0}, 760.0, p);
  CHECK(buf.state(2) == SlotState::kSkipped);
  CHECK(buf.state(3) == SlotState::kSkipped);
  for (const auto& r : reqs) CHECK(r.seq >= 4);
  CHECK_FALSE(reqs.empty());
}

TEST_CASE("per-neighbour concurrency is never exceeded") {
  SwarmParams p;
  p.max_outstanding_per_neighbor = 4;
  PlayoutBuffer buf(40, 8);
  std::vector<NeighborLink> links{source(1, holding(0, 64)), source(2, holding(0, 64), 30.0)};
  links[0].advertised_concurrency = 2;
  const auto reqs = schedule_requests({.links = &links, .buffer = &buf}, 0.0, p);
  CHECK(links[0].outstanding == 2);
  CHECK(links[1].outstanding == 4);
  CHECK(reqs.size() == 6);
  CHECK(advertised_concurrency(3500, 0, p) == 4);
  CHECK(advertised_concurrency(3500, 5, p) == 2);
  CHECK(advertised_concurrency(1050, 1, p) == 3);
  CHECK(advertised_concurrency(0, 1, p) == 1);
  CHECK(advertised_concurrency(3500, 49, p) == 1);
}

TEST_CASE("NCP scheduling asks only for its residue class") {
  SwarmParams p;
  p.max_outstanding_per_neighbor = 100;
  std::vector<NeighborLink> links{source(1, holding(0, 40))};
  const NcpFilter f = ncp_chunk_policy(0.25, 1);
  HaveSummary held;
  held.insert(5);
  std::map<Seq, PeerId> in_flight{{9, PeerId{1}}};
  const auto reqs = schedule_requests({.links = &links, .ncp = &f, .held = &held, .in_flight = &in_flight}, 0.0, p);
  std::vector<Seq> seqs;
  for (const auto& r : reqs) seqs.push_back(r.seq);
  CHECK(seqs == std::vector<Seq>{1, 13, 17, 21, 25, 29, 33, 37});
}

TEST_CASE("playback starts exactly on the eighth consecutive chunk") {
  SwarmParams p;
  PlayoutBuffer buf(40, 8);
  HaveSummary have;
  for (Seq s = 0; s < 8; ++s) {
    const auto out = on_chunk_received(buf, have, PeerId{1}, make_chunk(StreamId{1}, s, 0, p), PeerId{0}, true, p);
    CHECK(out.started_now == (s == 7));
  }
  CHECK(buf.started());
}

TEST_CASE("out-of-order arrivals complete the startup run") {
  SwarmParams p;
  PlayoutBuffer buf(10, 3);
  buf.set_start_point(1);
  HaveSummary have;
  CHECK_FALSE(on_chunk_received(buf, have, PeerId{1}, make_chunk(StreamId{1}, 3, 0, p), PeerId{0}, true, p).started_now);
  CHECK_FALSE(on_chunk_received(buf, have, PeerId{1}, make_chunk(StreamId{1}, 1, 0, p), PeerId{0}, true, p).started_now);
  CHECK(on_chunk_received(buf, have, PeerId{1}, make_chunk(StreamId{1}, 2, 0, p), PeerId{0}, true, p).started_now);
  CHECK_THROWS_AS(buf.set_start_point(0), std::logic_error);
}

TEST_CASE("duplicates earn a single credit") {
  SwarmParams p;
  p.chunk_price = 3;
  PlayoutBuffer buf(10, 3);
  HaveSummary have;
  const auto c = make_chunk(StreamId{1}, 4, 0, p);
  const auto first = on_chunk_received(buf, have, PeerId{1}, c, PeerId{2}, true, p);
  REQUIRE(first.credit);
  CHECK(first.credit->receiver == PeerId{1});
  CHECK(first.credit->sender == PeerId{2});
  CHECK(first.credit->price == 3);
  const auto again = on_chunk_received(buf, have, PeerId{1}, c, PeerId{3}, true, p);
  CHECK(again.duplicate);
  CHECK_FALSE(again.credit);
  const auto extra = on_chunk_received(buf, have, PeerId{1}, make_chunk(StreamId{1}, 5, 0, p), PeerId{3}, false, p);
  CHECK(extra.unsolicited);
}

TEST_CASE("continuity follows played over due") {
  PlayoutBuffer buf(200, 1);
  for (Seq s = 0; s < 100; ++s)
    if (s != 37) buf.mark_received(s);
  REQUIRE(buf.try_start());
  Seq last = 0;
  for (int i = 0; i < 100; ++i) {
    const auto t = buf.tick();
    CHECK(t.played == (t.seq != 37));
    CHECK(buf.playout_point() > last);
    last = buf.playout_point();
  }
  CHECK(buf.played() == 99);
  CHECK(buf.missed() == 1);
  PeerHistory h{.peer_id = PeerId{1}, .played = buf.played(), .due = buf.played() + buf.missed()};
  const auto m = compute_metrics({h}, 0.0);
  REQUIRE(m.peers[0].continuity);
  CHECK(*m.peers[0].continuity == doctest::Approx(0.99));
}

TEST_CASE("a slot is never both played and skipped") {
  PlayoutBuffer buf(10, 1);
  buf.mark_skipped(0);
  CHECK_FALSE(buf.mark_received(0));
  buf.mark_received(1);
  buf.mark_skipped(1);
  CHECK(buf.state(1) == SlotState::kReceived);
  buf.mark_received(2);
  buf.set_start_point(1);
  REQUIRE(buf.try_start());
  CHECK(buf.tick().played);
  CHECK(buf.tick().played);
  CHECK_FALSE(buf.tick().played);
  CHECK_FALSE(buf.mark_received(0));
  CHECK_THROWS_AS(buf.state(0), std::out_of_range);
}

TEST_CASE("have summary keeps the newest 128 seqs") {
  HaveSummary h;
  CHECK(h.empty());
  h.insert(3);
  h.insert(70);
  CHECK(h.contains(3));
  CHECK(h.contains(70));
  CHECK_FALSE(h.contains(4));
  h.insert(190);
  CHECK_FALSE(h.contains(3));
  CHECK(h.contains(70));
  CHECK(h.contains(190));
  h.insert(100);
  CHECK(h.contains(100));
  CHECK(h.end == 191);
  h.insert(400);
  CHECK_FALSE(h.contains(190));
}

TEST_CASE("NCP download policy") {
  const auto all = ncp_chunk_policy(1.0, 5);
  for (Seq s = 0; s < 50; ++s) CHECK(all.wants(s));
  const auto quarter = ncp_chunk_policy(0.25, 0);
  std::vector<Seq> got;
  for (Seq s = 0; s < 13; ++s)
    if (quarter.wants(s)) got.push_back(s);
  CHECK(got == std::vector<Seq>{0, 4, 8, 12});
  std::vector<NcpFilter> ten;
  for (Seq i = 0; i < 10; ++i) ten.push_back(ncp_chunk_policy(0.25, i));
  for (Seq s = 0; s < 1000; ++s)
    CHECK(std::any_of(ten.begin(), ten.end(), [s](const NcpFilter& f) { return f.wants(s); }));
  CHECK_THROWS(ncp_chunk_policy(0.0, 0));
  CHECK_THROWS(ncp_chunk_policy(1.5, 0));
}

TEST_CASE("NCP bootstrap order") {
  std::vector<PeerRecord> ring{at(7, 10, 0), at(3, 0, 10), at(5, -10, 0)};
  const auto tie = ncp_bootstrap_order(ring, {0, 0}, 100.0, 50.0);
  CHECK(tie[0].peer.peer_id == PeerId{3});
  CHECK(tie[1].peer.peer_id == PeerId{5});
  CHECK(tie[2].peer.peer_id == PeerId{7});
  CHECK(tie[2].at == 200.0);

  const auto sorted = ncp_bootstrap_order({at(1, 30), at(2, 10), at(3, 20)}, {0, 0}, 0.0, 100.0);
  CHECK(sorted[0].peer.peer_id == PeerId{2});
  CHECK(sorted[1].peer.peer_id == PeerId{3});
  CHECK(sorted[2].peer.peer_id == PeerId{1});

  TopologyParams tp;
  tp.consumers = 0;
  tp.ncps = 100;
  const auto topo = generate_topology(tp, 7);
  std::vector<PeerRecord> ncps;
  for (const auto& peer : topo.peers)
    if (peer.role == Role::kNcp) ncps.push_back({peer.id, peer.coord, peer.upload_kbps, peer.role, 0.0});
  const DelayCoord pc = topo.peers[0].coord;
  const auto order = ncp_bootstrap_order(ncps, pc, 0.0, 100.0);
  const auto nearest = std::min_element(ncps.begin(), ncps.end(), [&](const auto& a, const auto& b) {
    return distance(a.coord, pc) < distance(b.coord, pc);
  });
  CHECK(order[0].peer.peer_id == nearest->peer_id);
  for (std::size_t i = 1; i < order.size(); ++i)
    CHECK(distance(order[i - 1].peer.coord, pc) <= distance(order[i].peer.coord, pc));

  Rng rng(8);
  const auto shuffled = ncp_random_order(ncps, 0.0, 100.0, rng);
  CHECK(shuffled.size() == ncps.size());
}

TEST_CASE("start point is the newest fully available run") {
  std::vector<NeighborLink> links{source(1, holding(0, 20)), source(2, holding(10, 30))};
  CHECK(choose_start_point(links, 8) == Seq{22});
  CHECK(choose_start_point(links, 8, 2) == Seq{12});
  CHECK(choose_start_point(links, 11, 2) == std::nullopt);
  CHECK(choose_start_point({}, 8) == std::nullopt);
  std::vector<NeighborLink> gap{source(1, holding(0, 10)), source(2, holding(11, 15))};
  CHECK(choose_start_point(gap, 5) == Seq{5});
}

TEST_CASE("metrics definitions") {
  PeerHistory a{.peer_id = PeerId{1}, .join_time = 0.0, .start_time = 4000.0};
  a.lag_samples = {13000.0 - 10000.0};
  a.played = 10;
  a.due = 10;
  PeerHistory censored{.peer_id = PeerId{2}, .join_time = 1000.0};
  PeerHistory ncp{.peer_id = PeerId{3}, .role = Role::kNcp, .join_time = 0.0};
  const auto m = compute_metrics({a, censored, ncp}, 60000.0);
  REQUIRE(m.peers.size() == 3);
  CHECK(m.peers[0].startup_ms == 4000.0);
  CHECK(m.peers[0].mean_lag_ms == 3000.0);
  CHECK_FALSE(m.peers[1].startup_ms);
  CHECK(m.peers[1].startup_bound_ms == 59000.0);
  CHECK(m.censored_startups == 1);
  CHECK(m.startup_ms.count == 1);
  CHECK(m.continuity.mean == 1.0);
  CHECK(percentile({5, 1, 4, 2, 3}, 0.5) == 3.0);
  CHECK(percentile({5, 1, 4, 2, 3}, 0.95) == 5.0);
  CHECK_THROWS(percentile({}, 0.5));
}

TEST_CASE("swarm parameters are validated") {
  CHECK_NOTHROW(SwarmParams{}.validate());
  CHECK_THROWS(SwarmParams{.startup_threshold = 50}.validate());
  CHECK_THROWS(SwarmParams{.k_short = 0}.validate());
  CHECK_THROWS(SwarmParams{.ncp_fraction = 0.0}.validate());
  CHECK(SwarmParams{}.chunk_size_bits() == 87500.0);
}
