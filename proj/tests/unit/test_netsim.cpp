#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <sstream>
#include <stdexcept>
#include <vector>

#include "doctest.h"
#include "livecast/netsim.hpp"

using namespace livecast;

TEST_CASE("events at the same time dispatch in scheduling order") {
  Simulator sim;
  std::vector<int> order;
  for (int i = 0; i < 5; ++i) sim.schedule(10.0, [&order, i] { order.push_back(i); });
  sim.schedule(5.0, [&order] { order.push_back(-1); });
  CHECK(sim.run_until(100.0) == 6);
  CHECK(order == std::vector<int>{-1, 0, 1, 2, 3, 4});
  CHECK(sim.now() == 100.0);
}

TEST_CASE("empty queue dispatches nothing") {
  Simulator sim;
  CHECK(sim.run_until(50.0) == 0);
  CHECK(sim.run() == 0);
}

TEST_CASE("past-dated events are rejected") {
  Simulator sim;
  sim.schedule(10.0, [] {});
  sim.run_until(20.0);
  CHECK_THROWS_AS(sim.schedule(5.0, [] {}), std::invalid_argument);
  CHECK_THROWS_AS(sim.schedule_in(-1.0, [] {}), std::invalid_argument);
}

TEST_CASE("events beyond the horizon stay queued") {
  Simulator sim;
  int fired = 0;
  sim.schedule(10.0, [&] { ++fired; });
  sim.schedule(30.0, [&] { ++fired; });
  CHECK(sim.run_until(20.0) == 1);
  CHECK(sim.pending() == 1);
  CHECK(sim.run_until(30.0) == 1);
  CHECK(fired == 2);
}

TEST_CASE("cancelled events never fire") {
  Simulator sim;
  int fired = 0;
  const auto t = sim.schedule(10.0, [&] { ++fired; });
  sim.schedule(11.0, [&] { ++fired; });
  sim.cancel(t);
  CHECK(sim.run() == 1);
  CHECK(fired == 1);
}

TEST_CASE("handlers may schedule further events") {
  Simulator sim;
  std::vector<double> times;
  std::function<void()> tick = [&] {
    times.push_back(sim.now());
    if (times.size() < 4) sim.schedule_in(2.5, tick);
  };
  sim.schedule(0.0, tick);
  sim.run();
  CHECK(times == std::vector<double>{0.0, 2.5, 5.0, 7.5});
}

TEST_CASE("trace lines are stable and digested") {
  std::ostringstream a, b;
  for (auto* out : {&a, &b}) {
    TraceLog log;
    log.attach(out);
    log.record(1.5, PeerId{1}, PeerId{2}, "PING", "hello");
    log.record(2.0, PeerId{2}, PeerId{1}, "PONG", "");
    CHECK(log.line_count() == 2);
    CHECK(log.count_of("PING") == 1);
    CHECK(log.count_of("NOPE") == 0);
  }
  CHECK(a.str() == b.str());
  CHECK(a.str().rfind("1.500,1,2,PING,", 0) == 0);
  CHECK(fnv1a64("") == 0xcbf29ce484222325ULL);
  CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cULL);
  CHECK(hex64(0xabcULL) == "0000000000000abc");
}

TEST_CASE("message latency terms") {
  CHECK(message_latency({0, 0}, {0, 0}, 0.0, 0.0, 0.0, 0.0) == 0.0);
  // A 350 kbit chunk at 3500 kbit/s.
  CHECK(message_latency({0, 0}, {0, 0}, 350000.0, 0.0, 3500.0, 0.0) == doctest::Approx(100.0));
  CHECK(message_latency({0, 0}, {3, 4}, 0.0, 5.0, 0.0, 0.5) == doctest::Approx(10.5));
}

TEST_CASE("three-hop path lag is the sum of its hops within one jitter bound") {
  Simulator sim;
  LatencyModel jitter(2.0, 9);
  const std::vector<DelayCoord> path{{0, 0}, {30, 0}, {30, 40}, {60, 80}};
  const double size = 87500.0, rate = 1750.0, proc = 5.0;
  double nominal = 0.0;
  for (std::size_t i = 0; i + 1 < path.size(); ++i) nominal += distance(path[i], path[i + 1]) + proc + size / rate;
  double arrived = -1.0;
  std::function<void(std::size_t)> hop = [&](std::size_t i) {
    if (i + 1 == path.size()) {
      arrived = sim.now();
      return;
    }
    sim.schedule_in(message_latency(path[i], path[i + 1], size, proc, rate, jitter.jitter()), [&, i] { hop(i + 1); });
  };
  sim.schedule(0.0, [&] { hop(0); });
  sim.run();
  CHECK(arrived >= nominal);
  CHECK(arrived <= nominal + 3 * jitter.max_jitter());
}

TEST_CASE("uniform rectangle puts the farthest peer on the bound") {
  TopologyParams p;
  p.consumers = 1000;
  p.ncps = 100;
  p.max_delay_ms = 140.0;
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const auto topo = generate_topology(p, seed);
    REQUIRE(topo.peers.size() == 1101);
    const auto pc = topo.peers[0].coord;
    double farthest = 0.0;
    for (const auto& peer : topo.peers) farthest = std::max(farthest, distance(peer.coord, pc));
    CHECK(farthest <= 140.0 + 1e-9);
    CHECK(farthest >= 139.0);
    CHECK(pc.x == doctest::Approx((topo.bounds.min_x + topo.bounds.max_x) / 2));
    CHECK(pc.y == doctest::Approx((topo.bounds.min_y + topo.bounds.max_y) / 2));
    int ncps = 0;
    for (const auto& peer : topo.peers) ncps += peer.role == Role::kNcp;
    CHECK(ncps == 100);
    CHECK(topo.peers[0].role == Role::kPeercaster);
  }
}

TEST_CASE("empty population leaves only the peercaster") {
  TopologyParams p;
  p.consumers = 0;
  const auto topo = generate_topology(p, 1);
  REQUIRE(topo.peers.size() == 1);
  CHECK(topo.peers[0].role == Role::kPeercaster);
}

TEST_CASE("clustered topology honours spread and inter-cluster floor") {
  TopologyParams p;
  p.kind = TopologyKind::kClustered;
  p.clusters = 2;
  p.cluster_spread_ms = 5.0;
  p.inter_cluster_floor_ms = 80.0;
  p.consumers = 200;
  p.noise_sigma = 0.0;
  const auto topo = generate_topology(p, 4);
  for (std::size_t a = 1; a < topo.peers.size(); ++a)
    for (std::size_t b = a + 1; b < topo.peers.size(); ++b) {
      if (topo.peers[a].cluster == topo.peers[b].cluster)
        CHECK(topo.delay(a, b) < 20.0);
      else
        CHECK(topo.delay(a, b) >= 80.0);
    }
}

TEST_CASE("ground-truth delays are symmetric and non-negative") {
  TopologyParams p;
  p.consumers = 60;
  p.noise_sigma = 0.05;
  const auto topo = generate_topology(p, 5);
  for (std::size_t a = 0; a < topo.peers.size(); ++a) {
    CHECK(topo.delay(a, a) == 0.0);
    for (std::size_t b = a + 1; b < topo.peers.size(); ++b) {
      CHECK(topo.delay(a, b) == topo.delay(b, a));
      CHECK(topo.delay(a, b) >= 0.0);
    }
  }
}

TEST_CASE("invalid topology parameters are rejected") {
  TopologyParams p;
  p.consumers = -1;
  CHECK_THROWS(generate_topology(p, 1));
  p = {};
  p.max_delay_ms = 0.0;
  CHECK_THROWS(generate_topology(p, 1));
  p = {};
  p.consumer_upload_kbps = -5.0;
  CHECK_THROWS(generate_topology(p, 1));
}

TEST_CASE("churn arrivals follow the configured Poisson rate") {
  CHECK(churn_stream(ChurnProcess{.arrival_rate_per_s = 0.0}, 1000.0).empty());
  const ChurnProcess proc{.arrival_rate_per_s = 1.0, .seed = 21};
  const auto events = churn_stream(proc, 1000.0 * 1000.0);
  int joins = 0;
  for (const auto& e : events) joins += e.kind == ChurnEvent::Kind::kJoin;
  MESSAGE("arrivals " << joins);
  CHECK(joins >= 1000 - 95);
  CHECK(joins <= 1000 + 95);
  CHECK(std::is_sorted(events.begin(), events.end(),
                       [](const ChurnEvent& a, const ChurnEvent& b) { return a.time < b.time; }));
  CHECK(churn_stream(proc, 1e6) == events);
}

TEST_CASE("leaves follow their joins") {
  const ChurnProcess proc{.arrival_rate_per_s = 2.0, .lifetime = LifetimeKind::kPareto, .mean_lifetime_s = 20.0,
                          .seed = 3};
  const auto events = churn_stream(proc, 200000.0);
  std::map<std::uint32_t, double> joined;
  for (const auto& e : events) {
    if (e.kind == ChurnEvent::Kind::kJoin) {
      joined[e.arrival] = e.time;
    } else {
      REQUIRE(joined.count(e.arrival));
      CHECK(e.time >= joined[e.arrival]);
    }
  }
}
