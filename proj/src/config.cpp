#include "livecast/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

namespace livecast {

using nlohmann::json;

namespace {

class Reader {
 public:
  Reader(const json& obj, std::string path) : obj_(obj), path_(std::move(path)) {
    if (!obj_.is_object()) throw ConfigError(path_, "expected an object");
  }

  std::string field(const char* key) const { return path_.empty() ? key : path_ + "." + key; }

  const json* find(const char* key) {
    seen_.insert(key);
    auto it = obj_.find(key);
    return it == obj_.end() ? nullptr : &*it;
  }

  void read(const char* key, double& out) {
    if (const json* v = find(key)) {
      if (!v->is_number()) throw ConfigError(field(key), "expected a number");
      out = v->get<double>();
    }
  }
  void read(const char* key, int& out) {
    if (const json* v = find(key)) {
      if (!v->is_number_integer()) throw ConfigError(field(key), "expected an integer");
      const auto x = v->get<std::int64_t>();
      if (x < INT32_MIN || x > INT32_MAX) throw ConfigError(field(key), "integer out of range");
      out = static_cast<int>(x);
    }
  }
  void read(const char* key, std::int64_t& out) {
    if (const json* v = find(key)) {
      if (!v->is_number_integer()) throw ConfigError(field(key), "expected an integer");
      out = v->get<std::int64_t>();
    }
  }
  void read(const char* key, std::uint64_t& out) {
    if (const json* v = find(key)) {
      if (!v->is_number_integer() || (v->is_number_integer() && !v->is_number_unsigned() && v->get<std::int64_t>() < 0)) {
        throw ConfigError(field(key), "expected a non-negative integer");
      }
      out = v->get<std::uint64_t>();
    }
  }
  void read(const char* key, std::uint32_t& out) {
    std::uint64_t x = out;
    read(key, x);
    if (x > UINT32_MAX) throw ConfigError(field(key), "integer out of range");
    out = static_cast<std::uint32_t>(x);
  }
  void read(const char* key, bool& out) {
    if (const json* v = find(key)) {
      if (!v->is_boolean()) throw ConfigError(field(key), "expected true or false");
      out = v->get<bool>();
    }
  }
  template <class E, class Parse>
  void read_enum(const char* key, E& out, Parse parse) {
    if (const json* v = find(key)) {
      if (!v->is_string()) throw ConfigError(field(key), "expected a string");
      try {
        out = parse(v->get<std::string>());
      } catch (const std::invalid_argument& e) {
        throw ConfigError(field(key), e.what());
      }
    }
  }

  Reader child(const char* key) {
    static const json kEmpty = json::object();
    const json* v = find(key);
    return Reader(v == nullptr ? kEmpty : *v, field(key));
  }

  void finish() const {
    for (auto it = obj_.begin(); it != obj_.end(); ++it) {
      if (seen_.count(it.key()) == 0) throw ConfigError(path_.empty() ? it.key() : path_ + "." + it.key(), "unknown key");
    }
  }

 private:
  const json& obj_;
  std::string path_;
  std::set<std::string> seen_;
};

CoordMode coord_mode_from_string(const std::string& s) {
  if (s == "ground_truth") return CoordMode::kGroundTruth;
  if (s == "embedded") return CoordMode::kEmbedded;
  throw std::invalid_argument("expected ground_truth or embedded");
}
std::string to_string(CoordMode m) { return m == CoordMode::kGroundTruth ? "ground_truth" : "embedded"; }

NcpOrder ncp_order_from_string(const std::string& s) {
  if (s == "delay") return NcpOrder::kDelay;
  if (s == "random") return NcpOrder::kRandom;
  throw std::invalid_argument("expected delay or random");
}
std::string to_string(NcpOrder o) { return o == NcpOrder::kDelay ? "delay" : "random"; }

LifetimeKind lifetime_from_string(const std::string& s) {
  if (s == "exponential") return LifetimeKind::kExponential;
  if (s == "pareto") return LifetimeKind::kPareto;
  throw std::invalid_argument("expected exponential or pareto");
}
std::string to_string(LifetimeKind k) { return k == LifetimeKind::kExponential ? "exponential" : "pareto"; }

[[noreturn]] void rethrow_as_config(const std::string& section, const std::invalid_argument& e) {
  const std::string msg = e.what();
  if (msg.rfind(section + ".", 0) == 0) {
    const auto space = msg.find(' ');
    throw ConfigError(msg.substr(0, space), msg.substr(space + 1));
  }
  throw ConfigError(section, msg);
}

}  // namespace

ScenarioConfig config_from_json(const json& j) {
  ScenarioConfig c;
  Reader root(j, "");
  root.read("seed", c.seed);
  root.read("duration_ms", c.duration_ms);

  {
    Reader r = root.child("topology");
    r.read_enum("kind", c.topology.kind, [](const std::string& s) { return topology_kind_from_string(s); });
    r.read("consumers", c.topology.consumers);
    r.read("ncps", c.topology.ncps);
    r.read("max_delay_ms", c.topology.max_delay_ms);
    r.read("aspect", c.topology.aspect);
    r.read("clusters", c.topology.clusters);
    r.read("cluster_spread_ms", c.topology.cluster_spread_ms);
    r.read("inter_cluster_floor_ms", c.topology.inter_cluster_floor_ms);
    r.read("consumer_upload_kbps", c.topology.consumer_upload_kbps);
    r.read("ncp_upload_kbps", c.topology.ncp_upload_kbps);
    r.read("peercaster_upload_kbps", c.topology.peercaster_upload_kbps);
    r.read("noise_sigma", c.topology.noise_sigma);
    r.finish();
  }
  {
    Reader r = root.child("network");
    r.read("per_hop_processing_ms", c.network.per_hop_processing_ms);
    r.read("max_jitter_ms", c.network.max_jitter_ms);
    r.finish();
  }
  {
    Reader r = root.child("coords");
    r.read_enum("mode", c.coords.mode, coord_mode_from_string);
    r.read("step_gain", c.coords.embedding.step_gain);
    r.read("rounds", c.coords.embedding.rounds);
    r.read("neighbor_sample_size", c.coords.embedding.neighbor_sample_size);
    r.finish();
  }
  {
    Reader r = root.child("stream");
    r.read("id", c.stream.id);
    r.read("rate_kbps", c.swarm.stream_rate_kbps);
    r.read("chunk_duration_ms", c.swarm.chunk_duration_ms);
    r.finish();
  }
  {
    Reader r = root.child("swarm");
    r.read("window", c.swarm.window);
    r.read("startup_threshold", c.swarm.startup_threshold);
    r.read("k_short", c.swarm.k_short);
    r.read("k_jump", c.swarm.k_jump);
    r.read("max_outstanding_per_neighbor", c.swarm.max_outstanding_per_neighbor);
    r.read("admission_factor", c.swarm.admission_factor);
    r.read("request_timeout_ms", c.swarm.request_timeout_ms);
    r.read("upload_slots", c.swarm.upload_slots);
    r.read("ncp_fraction", c.swarm.ncp_fraction);
    r.finish();
  }
  {
    Reader r = root.child("schedule");
    r.read_enum("ncp_order", c.schedule.ncp_order, ncp_order_from_string);
    r.read("ncp_join_start_ms", c.schedule.ncp_join_start_ms);
    r.read("ncp_stagger_ms", c.schedule.ncp_stagger_ms);
    r.read("consumer_join_start_ms", c.schedule.consumer_join_start_ms);
    r.read("consumer_join_window_ms", c.schedule.consumer_join_window_ms);
    r.read("retry_ms", c.schedule.retry_ms);
    r.finish();
  }
  {
    Reader r = root.child("doat");
    r.read("curve_order", c.doat.curve_order);
    r.read("node_count", c.doat.node_count);
    r.read("bloom_m", c.doat.params.bloom.m);
    r.read("bloom_k", c.doat.params.bloom.k);
    r.read("aggregation_interval_ms", c.doat.params.aggregation_interval_ms);
    r.read("rebuild_period_ms", c.doat.params.rebuild_period_ms);
    r.read("lt_record_timeout_ms", c.doat.params.lt_record_timeout_ms);
    r.read("query_ttl", c.doat.params.query_ttl);
    r.read("probe_count", c.doat.params.probe_count);
    r.read("probe_radius_ms", c.doat.params.probe_radius_ms);
    r.finish();
  }
  {
    Reader r = root.child("tracker");
    r.read("load_high", c.tracker.load_high);
    r.read("load_low", c.tracker.load_low);
    r.read("refresh_interval_ms", c.tracker.refresh_interval_ms);
    r.read("peer_timeout_ms", c.tracker.peer_timeout_ms);
    r.finish();
  }
  {
    Reader r = root.child("trust");
    r.read("enforce", c.trust.enforce);
    r.read("chunk_price", c.swarm.chunk_price);
    r.read("walk_length", c.trust.walk_length);
    r.read("advertisement_period_ms", c.trust.advertisement_period_ms);
    r.read("staleness_horizon_ms", c.trust.staleness_horizon_ms);
    r.read("altruism_budget", c.trust.altruism.budget);
    r.read("altruism_interval_ms", c.trust.altruism.interval_ms);
    r.read_enum("signature", c.trust.signature, [](const std::string& s) { return trust::signature_scheme_from_string(s); });
    r.read("shift_amount", c.trust.shift_amount);
    r.finish();
  }
  {
    Reader r = root.child("churn");
    r.read("enabled", c.churn.enabled);
    r.read("arrival_rate_per_s", c.churn.process.arrival_rate_per_s);
    r.read_enum("lifetime", c.churn.process.lifetime, lifetime_from_string);
    r.read("mean_lifetime_s", c.churn.process.mean_lifetime_s);
    r.read("pareto_shape", c.churn.process.pareto_shape);
    r.finish();
  }
  {
    Reader r = root.child("output");
    r.read("trace", c.output.trace);
    r.finish();
  }
  root.finish();
  c.validate();
  return c;
}

json config_to_json(const ScenarioConfig& c) {
  json j;
  j["seed"] = c.seed;
  j["duration_ms"] = c.duration_ms;
  j["topology"] = {
      {"kind", std::string(to_string(c.topology.kind))},
      {"consumers", c.topology.consumers},
      {"ncps", c.topology.ncps},
      {"max_delay_ms", c.topology.max_delay_ms},
      {"aspect", c.topology.aspect},
      {"clusters", c.topology.clusters},
      {"cluster_spread_ms", c.topology.cluster_spread_ms},
      {"inter_cluster_floor_ms", c.topology.inter_cluster_floor_ms},
      {"consumer_upload_kbps", c.topology.consumer_upload_kbps},
      {"ncp_upload_kbps", c.topology.ncp_upload_kbps},
      {"peercaster_upload_kbps", c.topology.peercaster_upload_kbps},
      {"noise_sigma", c.topology.noise_sigma},
  };
  j["network"] = {{"per_hop_processing_ms", c.network.per_hop_processing_ms}, {"max_jitter_ms", c.network.max_jitter_ms}};
  j["coords"] = {{"mode", to_string(c.coords.mode)},
                 {"step_gain", c.coords.embedding.step_gain},
                 {"rounds", c.coords.embedding.rounds},
                 {"neighbor_sample_size", c.coords.embedding.neighbor_sample_size}};
  j["stream"] = {{"id", c.stream.id}, {"rate_kbps", c.swarm.stream_rate_kbps}, {"chunk_duration_ms", c.swarm.chunk_duration_ms}};
  j["swarm"] = {{"window", c.swarm.window},
                {"startup_threshold", c.swarm.startup_threshold},
                {"k_short", c.swarm.k_short},
                {"k_jump", c.swarm.k_jump},
                {"max_outstanding_per_neighbor", c.swarm.max_outstanding_per_neighbor},
                {"admission_factor", c.swarm.admission_factor},
                {"request_timeout_ms", c.swarm.request_timeout_ms},
                {"upload_slots", c.swarm.upload_slots},
                {"ncp_fraction", c.swarm.ncp_fraction}};
  j["schedule"] = {{"ncp_order", to_string(c.schedule.ncp_order)},
                   {"ncp_join_start_ms", c.schedule.ncp_join_start_ms},
                   {"ncp_stagger_ms", c.schedule.ncp_stagger_ms},
                   {"consumer_join_start_ms", c.schedule.consumer_join_start_ms},
                   {"consumer_join_window_ms", c.schedule.consumer_join_window_ms},
                   {"retry_ms", c.schedule.retry_ms}};
  j["doat"] = {{"curve_order", c.doat.curve_order},
               {"node_count", c.doat.node_count},
               {"bloom_m", c.doat.params.bloom.m},
               {"bloom_k", c.doat.params.bloom.k},
               {"aggregation_interval_ms", c.doat.params.aggregation_interval_ms},
               {"rebuild_period_ms", c.doat.params.rebuild_period_ms},
               {"lt_record_timeout_ms", c.doat.params.lt_record_timeout_ms},
               {"query_ttl", c.doat.params.query_ttl},
               {"probe_count", c.doat.params.probe_count},
               {"probe_radius_ms", c.doat.params.probe_radius_ms}};
  j["tracker"] = {{"load_high", c.tracker.load_high},
                  {"load_low", c.tracker.load_low},
                  {"refresh_interval_ms", c.tracker.refresh_interval_ms},
                  {"peer_timeout_ms", c.tracker.peer_timeout_ms}};
  j["trust"] = {{"enforce", c.trust.enforce},
                {"chunk_price", c.swarm.chunk_price},
                {"walk_length", c.trust.walk_length},
                {"advertisement_period_ms", c.trust.advertisement_period_ms},
                {"staleness_horizon_ms", c.trust.staleness_horizon_ms},
                {"altruism_budget", c.trust.altruism.budget},
                {"altruism_interval_ms", c.trust.altruism.interval_ms},
                {"signature", std::string(trust::to_string(c.trust.signature))},
                {"shift_amount", c.trust.shift_amount}};
  j["churn"] = {{"enabled", c.churn.enabled},
                {"arrival_rate_per_s", c.churn.process.arrival_rate_per_s},
                {"lifetime", to_string(c.churn.process.lifetime)},
                {"mean_lifetime_s", c.churn.process.mean_lifetime_s},
                {"pareto_shape", c.churn.process.pareto_shape}};
  j["output"] = {{"trace", c.output.trace}};
  return j;
}

void ScenarioConfig::validate() const {
  if (!(duration_ms > 0.0)) throw ConfigError("duration_ms", "must be > 0");
  try {
    topology.validate();
  } catch (const std::invalid_argument& e) {
    rethrow_as_config("topology", e);
  }
  if (network.per_hop_processing_ms < 0.0) throw ConfigError("network.per_hop_processing_ms", "must be >= 0");
  if (network.max_jitter_ms < 0.0) throw ConfigError("network.max_jitter_ms", "must be >= 0");
  if (!(coords.embedding.step_gain > 0.0 && coords.embedding.step_gain <= 1.0)) throw ConfigError("coords.step_gain", "must be in (0, 1]");
  if (coords.embedding.rounds < 1) throw ConfigError("coords.rounds", "must be >= 1");
  if (coords.embedding.neighbor_sample_size < 1) throw ConfigError("coords.neighbor_sample_size", "must be >= 1");
  try {
    swarm.validate();
  } catch (const std::invalid_argument& e) {
    const std::string msg = e.what();
    const auto space = msg.find(' ');
    throw ConfigError(msg.substr(0, space), msg.substr(space + 1));
  }
  if (schedule.ncp_join_start_ms < 0.0) throw ConfigError("schedule.ncp_join_start_ms", "must be >= 0");
  if (schedule.ncp_stagger_ms < 0.0) throw ConfigError("schedule.ncp_stagger_ms", "must be >= 0");
  if (schedule.consumer_join_start_ms < 0.0) throw ConfigError("schedule.consumer_join_start_ms", "must be >= 0");
  if (schedule.consumer_join_window_ms < 0.0) throw ConfigError("schedule.consumer_join_window_ms", "must be >= 0");
  if (!(schedule.retry_ms > 0.0)) throw ConfigError("schedule.retry_ms", "must be > 0");
  if (doat.curve_order < 1 || doat.curve_order > CurveSpec::kMaxOrder) throw ConfigError("doat.curve_order", "must be in [1, 10]");
  if (doat.node_count < 1) throw ConfigError("doat.node_count", "must be >= 1");
  if (doat.params.bloom.m == 0) throw ConfigError("doat.bloom_m", "must be > 0");
  if (doat.params.bloom.k == 0) throw ConfigError("doat.bloom_k", "must be > 0");
  try {
    doat.params.validate();
  } catch (const std::invalid_argument& e) {
    rethrow_as_config("doat", e);
  }
  try {
    tracker.validate();
  } catch (const std::invalid_argument& e) {
    rethrow_as_config("tracker", e);
  }
  if (trust.walk_length < 1) throw ConfigError("trust.walk_length", "must be >= 1");
  if (!(trust.advertisement_period_ms > 0.0)) throw ConfigError("trust.advertisement_period_ms", "must be > 0");
  if (!(trust.staleness_horizon_ms > 0.0)) throw ConfigError("trust.staleness_horizon_ms", "must be > 0");
  if (trust.altruism.budget < 0) throw ConfigError("trust.altruism_budget", "must be >= 0");
  if (!(trust.altruism.interval_ms > 0.0)) throw ConfigError("trust.altruism_interval_ms", "must be > 0");
  if (trust.shift_amount < 0) throw ConfigError("trust.shift_amount", "must be >= 0");
  if (churn.process.arrival_rate_per_s < 0.0) throw ConfigError("churn.arrival_rate_per_s", "must be >= 0");
  if (!(churn.process.mean_lifetime_s > 0.0)) throw ConfigError("churn.mean_lifetime_s", "must be > 0");
  if (!(churn.process.pareto_shape > 1.0)) throw ConfigError("churn.pareto_shape", "must be > 1");
}

ScenarioConfig parse_config(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    std::size_t line = 1;
    std::size_t col = 1;
    for (std::size_t i = 0; i + 1 < e.byte && i < text.size(); ++i) {
      if (text[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    throw ConfigError("", "syntax error at line " + std::to_string(line) + ", column " + std::to_string(col) + ": " + e.what());
  }
  return config_from_json(j);
}

ScenarioConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("", "cannot read config file " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

void apply_override(json& j, const std::string& dotted_key, const std::string& value) {
  json* node = &j;
  std::size_t start = 0;
  while (true) {
    const auto dot = dotted_key.find('.', start);
    const std::string part = dotted_key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (!node->is_object() || !node->contains(part)) throw ConfigError(dotted_key, "unknown key");
    node = &(*node)[part];
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  try {
    if (node->is_boolean()) {
      if (value != "true" && value != "false") throw ConfigError(dotted_key, "expected true or false");
      *node = value == "true";
    } else if (node->is_number_unsigned()) {
      if (value.empty() || value[0] == '-') throw ConfigError(dotted_key, "expected a non-negative integer");
      std::size_t used = 0;
      const auto v = std::stoull(value, &used);
      if (used != value.size()) throw ConfigError(dotted_key, "expected a non-negative integer");
      *node = v;
    } else if (node->is_number_integer()) {
      std::size_t used = 0;
      const auto v = std::stoll(value, &used);
      if (used != value.size()) throw ConfigError(dotted_key, "expected an integer");
      *node = v;
    } else if (node->is_number()) {
      std::size_t used = 0;
      const double v = std::stod(value, &used);
      if (used != value.size()) throw ConfigError(dotted_key, "expected a number");
      *node = v;
    } else if (node->is_string()) {
      *node = value;
    } else {
      throw ConfigError(dotted_key, "not a scalar setting");
    }
  } catch (const std::logic_error&) {
    throw ConfigError(dotted_key, "cannot parse value '" + value + "'");
  }
}

}  // namespace livecast
