#include <string>

#include "doctest.h"
#include "livecast/config.hpp"

using namespace livecast;
using nlohmann::json;

namespace {

std::string field_of(const std::string& text) {
  try {
    parse_config(text);
  } catch (const ConfigError& e) {
    return e.field();
  }
  return "<accepted>";
}

}  // namespace

TEST_CASE("empty object yields the defaults") {
  const auto c = parse_config("{}");
  const ScenarioConfig d;
  CHECK(c.seed == d.seed);
  CHECK(c.duration_ms == d.duration_ms);
  CHECK(c.swarm.window == 40);
  CHECK(c.swarm.startup_threshold == 8);
  CHECK(c.swarm.chunk_size_bits() == 87500.0);
  CHECK(c.network.per_hop_processing_ms == 5.0);
  CHECK(c.schedule.ncp_order == NcpOrder::kDelay);
  CHECK(c.trust.enforce == false);
}

TEST_CASE("every default is materialised on output") {
  const json j = config_to_json(ScenarioConfig{});
  for (const char* section : {"topology", "network", "coords", "stream", "swarm", "schedule", "doat", "tracker",
                              "trust", "churn", "output"}) {
    REQUIRE(j.contains(section));
    CHECK(j[section].is_object());
    CHECK_FALSE(j[section].empty());
  }
  CHECK(j["stream"]["rate_kbps"] == 350.0);
  CHECK(j["stream"]["chunk_duration_ms"] == 250.0);
  CHECK(j["swarm"]["window"] == 40);
  CHECK(j["doat"]["bloom_m"].is_number_unsigned());
}

TEST_CASE("json round trip is lossless") {
  ScenarioConfig c;
  c.seed = 99;
  c.duration_ms = 1234.5;
  c.topology.consumers = 17;
  c.topology.ncps = 3;
  c.topology.kind = TopologyKind::kClustered;
  c.coords.mode = CoordMode::kEmbedded;
  c.swarm.window = 64;
  c.swarm.k_jump = 1;
  c.schedule.ncp_order = NcpOrder::kRandom;
  c.doat.curve_order = 6;
  c.trust.enforce = true;
  c.trust.signature = trust::SignatureScheme::kEd25519;
  c.churn.enabled = true;
  c.churn.process.lifetime = LifetimeKind::kPareto;
  c.output.trace = false;
  const json once = config_to_json(c);
  const ScenarioConfig back = config_from_json(once);
  CHECK(config_to_json(back) == once);
  CHECK(back.seed == 99);
  CHECK(back.topology.kind == TopologyKind::kClustered);
  CHECK(back.trust.signature == trust::SignatureScheme::kEd25519);
  CHECK(config_to_json(parse_config(once.dump())) == once);
}

TEST_CASE("unknown keys are rejected with their path") {
  CHECK(field_of(R"({"bogus": 1})") == "bogus");
  CHECK(field_of(R"({"swarm": {"windw": 10}})") == "swarm.windw");
  CHECK(field_of(R"({"topology": {"consumers": 5, "extra": true}})") == "topology.extra");
}

TEST_CASE("out-of-range values name the field") {
  CHECK(field_of(R"({"topology": {"consumer_upload_kbps": -1}})") == "topology.consumer_upload_kbps");
  CHECK(field_of(R"({"topology": {"consumers": -3}})") == "topology.consumers");
  CHECK(field_of(R"({"duration_ms": 0})") == "duration_ms");
  CHECK(field_of(R"({"network": {"max_jitter_ms": -0.5}})") == "network.max_jitter_ms");
  CHECK(field_of(R"({"coords": {"step_gain": 1.5}})") == "coords.step_gain");
  CHECK(field_of(R"({"doat": {"curve_order": 11}})") == "doat.curve_order");
  CHECK(field_of(R"({"trust": {"walk_length": 0}})") == "trust.walk_length");
  CHECK(field_of(R"({"churn": {"pareto_shape": 1.0}})") == "churn.pareto_shape");
  CHECK(field_of(R"({"swarm": {"window": 0}})").rfind("swarm.", 0) == 0);
}

TEST_CASE("wrong types name the field") {
  CHECK(field_of(R"({"seed": "one"})") == "seed");
  CHECK(field_of(R"({"seed": -1})") == "seed");
  CHECK(field_of(R"({"swarm": {"window": 2.5}})") == "swarm.window");
  CHECK(field_of(R"({"trust": {"enforce": 1}})") == "trust.enforce");
  CHECK(field_of(R"({"schedule": {"ncp_order": "sideways"}})") == "schedule.ncp_order");
  CHECK(field_of(R"({"topology": 4})") == "topology");
}

TEST_CASE("syntax errors report line and column") {
  try {
    parse_config("{\n  \"seed\": 1,\n  oops\n}");
    FAIL("accepted malformed text");
  } catch (const ConfigError& e) {
    const std::string what = e.what();
    CHECK(what.find("line 3") != std::string::npos);
    CHECK(e.field().empty());
  }
  CHECK_THROWS_AS(load_config("/nonexistent/config.json"), ConfigError);
}

TEST_CASE("overrides follow the type of the current value") {
  json j = config_to_json(ScenarioConfig{});
  apply_override(j, "topology.ncps", "12");
  apply_override(j, "network.max_jitter_ms", "2.5");
  apply_override(j, "trust.enforce", "true");
  apply_override(j, "schedule.ncp_order", "random");
  apply_override(j, "seed", "7");
  const auto c = config_from_json(j);
  CHECK(c.topology.ncps == 12);
  CHECK(c.network.max_jitter_ms == 2.5);
  CHECK(c.trust.enforce);
  CHECK(c.schedule.ncp_order == NcpOrder::kRandom);
  CHECK(c.seed == 7);
}

TEST_CASE("bad overrides are rejected") {
  json j = config_to_json(ScenarioConfig{});
  const json before = j;
  const auto field = [&](const std::string& key, const std::string& value) {
    try {
      apply_override(j, key, value);
    } catch (const ConfigError& e) {
      return e.field();
    }
    return std::string("<accepted>");
  };
  CHECK(field("topology.nope", "1") == "topology.nope");
  CHECK(field("nope.ncps", "1") == "nope.ncps");
  CHECK(field("topology", "1") == "topology");
  CHECK(field("topology.ncps", "many") == "topology.ncps");
  CHECK(field("topology.ncps", "3x") == "topology.ncps");
  CHECK(field("seed", "-4") == "seed");
  CHECK(field("trust.enforce", "yes") == "trust.enforce");
  CHECK(field("network.max_jitter_ms", "") == "network.max_jitter_ms");
  CHECK(j == before);
}
