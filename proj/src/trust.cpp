#include "livecast/trust.hpp"

#include <sodium.h>

#include <algorithm>
#include <cstdio>
#include <cstring>
#include <deque>
#include <limits>
#include <set>
#include <stdexcept>

namespace livecast::trust {

std::string_view to_string(SignatureScheme s) { return s == SignatureScheme::kEd25519 ? "ed25519" : "keyed_hash"; }

SignatureScheme signature_scheme_from_string(std::string_view text) {
  if (text == "ed25519") return SignatureScheme::kEd25519;
  if (text == "keyed_hash") return SignatureScheme::kKeyedHash;
  throw std::invalid_argument("unknown signature scheme: " + std::string(text));
}

SignatureSuite::SignatureSuite(SignatureScheme scheme) : scheme_(scheme) {
  if (sodium_init() < 0) throw std::runtime_error("libsodium initialisation failed");
}

KeyPair SignatureSuite::generate(std::uint64_t seed) {
  std::array<std::uint8_t, 32> seed_bytes{};
  Rng rng(seed);
  for (std::size_t i = 0; i < 4; ++i) {
    const std::uint64_t w = rng.next();
    for (std::size_t b = 0; b < 8; ++b) seed_bytes[8 * i + b] = static_cast<std::uint8_t>(w >> (8 * b));
  }
  KeyPair kp;
  if (scheme_ == SignatureScheme::kEd25519) {
    kp.secret.resize(crypto_sign_SECRETKEYBYTES);
    crypto_sign_seed_keypair(kp.pseudonym.public_key.data(), kp.secret.data(), seed_bytes.data());
  } else {
    kp.secret.assign(seed_bytes.begin(), seed_bytes.end());
    crypto_generichash(kp.pseudonym.public_key.data(), kp.pseudonym.public_key.size(), kp.secret.data(),
                       kp.secret.size(), nullptr, 0);
    mac_keys_[kp.pseudonym] = kp.secret;
  }
  return kp;
}

Signature SignatureSuite::sign(const KeyPair& key, std::span<const std::uint8_t> payload) const {
  Signature sig{};
  if (scheme_ == SignatureScheme::kEd25519) {
    if (key.secret.size() != crypto_sign_SECRETKEYBYTES) throw std::invalid_argument("not an Ed25519 secret key");
    crypto_sign_detached(sig.data(), nullptr, payload.data(), payload.size(), key.secret.data());
  } else {
    crypto_generichash(sig.data(), sig.size(), payload.data(), payload.size(), key.secret.data(), key.secret.size());
  }
  return sig;
}

bool SignatureSuite::verify(const Pseudonym& who, std::span<const std::uint8_t> payload, const Signature& sig) const {
  if (scheme_ == SignatureScheme::kEd25519) {
    return crypto_sign_verify_detached(sig.data(), payload.data(), payload.size(), who.public_key.data()) == 0;
  }
  auto it = mac_keys_.find(who);
  if (it == mac_keys_.end()) return false;
  Signature expect{};
  crypto_generichash(expect.data(), expect.size(), payload.data(), payload.size(), it->second.data(), it->second.size());
  return sodium_memcmp(expect.data(), sig.data(), sig.size()) == 0;
}

namespace {
std::span<const std::uint8_t> bytes_of(std::string_view s) {
  return {reinterpret_cast<const std::uint8_t*>(s.data()), s.size()};
}
}  // namespace

Signature SignatureSuite::sign(const KeyPair& key, std::string_view payload) const { return sign(key, bytes_of(payload)); }

bool SignatureSuite::verify(const Pseudonym& who, std::string_view payload, const Signature& sig) const {
  return verify(who, bytes_of(payload), sig);
}

// ------------------------------------------------------------------- ledger

Units TrustLedger::balance(PeerId owner, PeerId counterparty) const {
  auto it = owed_by_.find({owner, counterparty});
  return it == owed_by_.end() ? 0 : it->second.balance;
}

Units TrustLedger::available(PeerId owner, PeerId counterparty) const {
  auto it = owed_by_.find({owner, counterparty});
  return it == owed_by_.end() ? 0 : it->second.balance - it->second.reserved;
}

void TrustLedger::write(PeerId owner, PeerId counterparty, Units value) {
  min_seen_ = std::min(min_seen_, value);
  if (value < 0) throw std::logic_error("trust balance would become negative");
  Account& acc = owed_by_[{owner, counterparty}];
  acc.balance = value;
  acc.updated_at = now_;
  owed_to_[{counterparty, owner}] = value;
  if (value == 0 && acc.reserved == 0) {
    owed_by_.erase({owner, counterparty});
    owed_to_.erase({counterparty, owner});
  }
}

void TrustLedger::credit(PeerId receiver, PeerId sender, Units price) {
  if (price < 0) throw std::invalid_argument("price must be >= 0");
  if (price == 0 || receiver == sender) return;
  if (available(sender, receiver) >= price) {
    write(sender, receiver, balance(sender, receiver) - price);
  } else {
    write(receiver, sender, balance(receiver, sender) + price);
  }
}

std::optional<TrustLedger::ReservationId> TrustLedger::reserve(const std::vector<PeerId>& route, Units amount,
                                                               SimTime expires_at, std::size_t* refusing_hop) {
  if (amount < 0) throw std::invalid_argument("shift amount must be >= 0");
  if (route.size() < 2) throw std::invalid_argument("shift route needs at least two peers");
  std::set<PeerId> seen(route.begin(), route.end());
  if (seen.size() != route.size()) throw std::invalid_argument("shift route is not a simple path");
  for (std::size_t i = 0; i + 1 < route.size(); ++i) {
    if (available(route[i], route[i + 1]) < amount) {
      for (std::size_t j = 0; j < i; ++j) owed_by_.at({route[j], route[j + 1]}).reserved -= amount;
      if (refusing_hop != nullptr) *refusing_hop = i;
      return std::nullopt;
    }
    if (amount > 0) owed_by_.at({route[i], route[i + 1]}).reserved += amount;
  }
  const ReservationId id{next_reservation_++};
  reservations_.emplace(id.value, Reservation{route, amount, expires_at});
  return id;
}

void TrustLedger::commit(ReservationId id) {
  auto it = reservations_.find(id.value);
  if (it == reservations_.end()) throw std::invalid_argument("unknown or expired reservation");
  const Reservation r = std::move(it->second);
  reservations_.erase(it);
  if (r.amount == 0) return;
  for (std::size_t i = 0; i + 1 < r.route.size(); ++i) {
    Account& acc = owed_by_.at({r.route[i], r.route[i + 1]});
    acc.reserved -= r.amount;
    write(r.route[i], r.route[i + 1], acc.balance - r.amount);
  }
  write(r.route.front(), r.route.back(), balance(r.route.front(), r.route.back()) + r.amount);
}

void TrustLedger::abort(ReservationId id) {
  auto it = reservations_.find(id.value);
  if (it == reservations_.end()) return;
  const Reservation& r = it->second;
  if (r.amount > 0) {
    for (std::size_t i = 0; i + 1 < r.route.size(); ++i) {
      Account& acc = owed_by_.at({r.route[i], r.route[i + 1]});
      acc.reserved -= r.amount;
      if (acc.balance == 0 && acc.reserved == 0) write(r.route[i], r.route[i + 1], 0);
    }
  }
  reservations_.erase(it);
}

std::size_t TrustLedger::expire_reservations(SimTime now) {
  std::vector<std::uint64_t> stale;
  for (const auto& [id, r] : reservations_) {
    if (r.expires_at < now) stale.push_back(id);
  }
  for (const auto id : stale) abort(ReservationId{id});
  return stale.size();
}

ShiftOutcome TrustLedger::shift_trust(const std::vector<PeerId>& route, Units amount) {
  ShiftOutcome out;
  std::size_t hop = 0;
  auto id = reserve(route, amount, std::numeric_limits<SimTime>::infinity(), &hop);
  if (!id) {
    out.refusing_hop = hop;
    return out;
  }
  commit(*id);
  out.committed = true;
  return out;
}

Units TrustLedger::net_position(PeerId peer) const {
  Units owed_to_peer = 0;
  Units owed_by_peer = 0;
  for (auto it = owed_to_.lower_bound({peer, PeerId{0}}); it != owed_to_.end() && it->first.first == peer; ++it) {
    owed_to_peer += it->second;
  }
  for (auto it = owed_by_.lower_bound({peer, PeerId{0}}); it != owed_by_.end() && it->first.first == peer; ++it) {
    owed_by_peer += it->second.balance;
  }
  return owed_to_peer - owed_by_peer;
}

std::map<PeerId, Units> TrustLedger::accounts_of(PeerId owner) const {
  std::map<PeerId, Units> out;
  for (auto it = owed_by_.lower_bound({owner, PeerId{0}}); it != owed_by_.end() && it->first.first == owner; ++it) {
    if (it->second.balance > 0) out.emplace(it->first.second, it->second.balance);
  }
  return out;
}

std::vector<PeerId> TrustLedger::peers() const {
  std::set<PeerId> s;
  for (const auto& [k, acc] : owed_by_) {
    s.insert(k.first);
    s.insert(k.second);
  }
  return {s.begin(), s.end()};
}

bool TrustLedger::mirrors_consistent() const {
  if (owed_by_.size() != owed_to_.size()) return false;
  for (const auto& [k, acc] : owed_by_) {
    auto it = owed_to_.find({k.second, k.first});
    if (it == owed_to_.end() || it->second != acc.balance) return false;
  }
  return true;
}

std::string TrustLedger::dump_csv() const {
  std::string out = "owner,counterparty,balance,updated_at\n";
  char buf[96];
  for (const auto& [k, acc] : owed_by_) {
    std::snprintf(buf, sizeof buf, "%u,%u,%lld,%.3f\n", k.first.value, k.second.value,
                  static_cast<long long>(acc.balance), acc.updated_at);
    out += buf;
  }
  return out;
}

// ---------------------------------------------------------- authorization

bool AltruismBudget::try_spend(Units price, SimTime now) {
  const auto index = static_cast<std::int64_t>(now / params_.interval_ms);
  if (index != interval_index_) {
    interval_index_ = index;
    remaining_ = params_.budget;
  }
  if (remaining_ < price) return false;
  remaining_ -= price;
  return true;
}

bool authorize_service(const TrustLedger& ledger, PeerId provider, PeerId requester, Units price,
                       AltruismBudget& budget, SimTime now) {
  if (ledger.available(provider, requester) >= price) return true;
  return budget.try_spend(price, now);
}

// ----------------------------------------------------------- advertisement

std::string advertisement_payload(const TrustAdvertisement& ad) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "ad|%u|%.3f|", ad.advertiser.value, ad.issued_at);
  std::string out = buf;
  for (const auto& [cp, bal] : ad.entries) {
    std::snprintf(buf, sizeof buf, "%u:%lld;", cp.value, static_cast<long long>(bal));
    out += buf;
  }
  return out;
}

TrustAdvertisement make_advertisement(const TrustLedger& ledger, PeerId advertiser, const KeyPair& key,
                                      const SignatureSuite& suite, SimTime now, int ttl) {
  TrustAdvertisement ad;
  ad.advertiser = advertiser;
  for (const auto& [cp, bal] : ledger.accounts_of(advertiser)) ad.entries.emplace_back(cp, bal);
  ad.issued_at = now;
  ad.visited = {advertiser};
  ad.ttl = ttl;
  ad.signature = suite.sign(key, advertisement_payload(ad));
  return ad;
}

std::optional<PeerId> choose_walk_hop(const TrustLedger& ledger, PeerId holder, const std::vector<PeerId>& visited,
                                      Rng& rng) {
  std::vector<std::pair<PeerId, Units>> eligible;
  Units total = 0;
  for (const auto& [cp, bal] : ledger.accounts_of(holder)) {
    if (std::find(visited.begin(), visited.end(), cp) != visited.end()) continue;
    eligible.emplace_back(cp, bal);
    total += bal;
  }
  if (total == 0) return std::nullopt;
  auto pick = static_cast<Units>(rng.below(static_cast<std::uint64_t>(total)));
  for (const auto& [cp, bal] : eligible) {
    if (pick < bal) return cp;
    pick -= bal;
  }
  return eligible.back().first;
}

std::vector<PeerId> advertisement_walk(const TrustLedger& ledger, PeerId origin, int ttl, Rng& rng) {
  if (ttl < 1) throw std::invalid_argument("advertisement ttl must be >= 1");
  std::vector<PeerId> visited{origin};
  std::vector<PeerId> recipients;
  PeerId holder = origin;
  for (int hop = 0; hop < ttl; ++hop) {
    const auto next = choose_walk_hop(ledger, holder, visited, rng);
    if (!next) break;
    recipients.push_back(*next);
    visited.push_back(*next);
    holder = *next;
  }
  return recipients;
}

// -------------------------------------------------------------------- view

bool TrustView::accept(const TrustAdvertisement& ad, const Pseudonym& advertiser_key, const SignatureSuite& suite) {
  std::set<PeerId> seen(ad.visited.begin(), ad.visited.end());
  if (seen.size() != ad.visited.size() || ad.ttl < 0 || !suite.verify(advertiser_key, advertisement_payload(ad), ad.signature)) {
    ++rejected_;
    return false;
  }
  auto known = advertiser_time_.find(ad.advertiser);
  if (known != advertiser_time_.end() && known->second > ad.issued_at) return false;
  advertiser_time_[ad.advertiser] = ad.issued_at;
  std::erase_if(edges_, [&](const auto& kv) { return kv.first.first == ad.advertiser; });
  for (const auto& [cp, bal] : ad.entries) {
    if (bal > 0) edges_[{ad.advertiser, cp}] = ViewEdge{bal, ad.issued_at};
  }
  return true;
}

void TrustView::set_edge(PeerId from, PeerId to, Units capacity, SimTime fresh_at) {
  if (capacity < 0) throw std::invalid_argument("edge capacity must be >= 0");
  if (capacity == 0) {
    edges_.erase({from, to});
    return;
  }
  edges_[{from, to}] = ViewEdge{capacity, fresh_at};
}

void TrustView::prune(SimTime now, SimTime horizon) {
  std::erase_if(edges_, [&](const auto& kv) { return kv.second.fresh_at < now - horizon; });
}

bool TrustView::has_node(PeerId p) const {
  return std::any_of(edges_.begin(), edges_.end(),
                     [&](const auto& kv) { return kv.first.first == p || kv.first.second == p; });
}

TrustView build_trust_view(const std::vector<TrustAdvertisement>& ads, const std::map<PeerId, Pseudonym>& keys,
                           const SignatureSuite& suite, SimTime now, SimTime horizon) {
  std::vector<const TrustAdvertisement*> order;
  for (const auto& ad : ads) {
    if (ad.issued_at >= now - horizon) order.push_back(&ad);
  }
  std::stable_sort(order.begin(), order.end(),
                   [](const auto* a, const auto* b) { return a->issued_at < b->issued_at; });
  TrustView view;
  for (const auto* ad : order) {
    auto key = keys.find(ad->advertiser);
    if (key == keys.end()) continue;
    view.accept(*ad, key->second, suite);
  }
  view.prune(now, horizon);
  return view;
}

// -------------------------------------------------------------------- flow

MaxFlow::MaxFlow(std::size_t nodes) : n_(nodes), adj_(nodes) {}

std::size_t MaxFlow::add_edge(std::size_t from, std::size_t to, Units capacity) {
  if (from >= n_ || to >= n_) throw std::out_of_range("flow node index");
  if (capacity < 0) throw std::invalid_argument("flow capacity must be >= 0");
  const std::size_t idx = edges_.size() / 2;
  adj_[from].push_back(edges_.size());
  edges_.push_back({to, capacity});
  adj_[to].push_back(edges_.size());
  edges_.push_back({from, 0});
  original_.push_back(capacity);
  return idx;
}

Units MaxFlow::run(std::size_t source, std::size_t sink) {
  if (source >= n_ || sink >= n_) throw std::out_of_range("flow node index");
  if (source == sink) return 0;
  std::vector<std::size_t> height(n_, 0);
  std::vector<Units> excess(n_, 0);
  std::vector<std::size_t> current(n_, 0);
  std::deque<std::size_t> active;
  height[source] = n_;

  auto push = [&](std::size_t u, std::size_t arc, Units amount) {
    const std::size_t v = edges_[arc].to;
    edges_[arc].cap -= amount;
    edges_[arc ^ 1].cap += amount;
    excess[u] -= amount;
    if (excess[v] == 0 && v != source && v != sink) active.push_back(v);
    excess[v] += amount;
  };

  for (const std::size_t arc : adj_[source]) {
    if (edges_[arc].cap > 0) {
      excess[source] += edges_[arc].cap;
      push(source, arc, edges_[arc].cap);
    }
  }
  while (!active.empty()) {
    const std::size_t u = active.front();
    active.pop_front();
    while (excess[u] > 0) {
      if (current[u] == adj_[u].size()) {
        std::size_t lowest = 2 * n_;
        for (const std::size_t arc : adj_[u]) {
          if (edges_[arc].cap > 0) lowest = std::min(lowest, height[edges_[arc].to]);
        }
        height[u] = lowest + 1;
        current[u] = 0;
        continue;
      }
      const std::size_t arc = adj_[u][current[u]];
      const Arc& a = edges_[arc];
      if (a.cap > 0 && height[u] == height[a.to] + 1) {
        push(u, arc, std::min(excess[u], a.cap));
      } else {
        ++current[u];
      }
    }
  }
  return excess[sink];
}

Units MaxFlow::flow_on(std::size_t edge) const { return original_[edge] - edges_[2 * edge].cap; }

namespace {

struct IndexedGraph {
  std::map<PeerId, std::size_t> index;
  std::vector<PeerId> peers;
  std::size_t id(PeerId p) {
    auto [it, inserted] = index.emplace(p, peers.size());
    if (inserted) peers.push_back(p);
    return it->second;
  }
};

}  // namespace

Units max_shiftable(const TrustView& view, PeerId beneficiary, PeerId provider_target) {
  if (!view.has_node(beneficiary) || !view.has_node(provider_target) || beneficiary == provider_target) return 0;
  IndexedGraph g;
  g.id(provider_target);
  g.id(beneficiary);
  for (const auto& [k, e] : view.edges()) {
    g.id(k.first);
    g.id(k.second);
  }
  MaxFlow flow(g.peers.size());
  for (const auto& [k, e] : view.edges()) flow.add_edge(g.id(k.first), g.id(k.second), e.capacity);
  return flow.run(0, 1);
}

std::vector<FlowPath> shift_plan(const TrustView& view, PeerId beneficiary, PeerId provider_target) {
  std::vector<FlowPath> out;
  if (!view.has_node(beneficiary) || !view.has_node(provider_target) || beneficiary == provider_target) return out;
  IndexedGraph g;
  g.id(provider_target);
  g.id(beneficiary);
  for (const auto& [k, e] : view.edges()) {
    g.id(k.first);
    g.id(k.second);
  }
  MaxFlow flow(g.peers.size());
  for (const auto& [k, e] : view.edges()) flow.add_edge(g.id(k.first), g.id(k.second), e.capacity);
  flow.run(0, 1);

  // Residual flow per edge, walked as simple source-to-sink paths.
  std::vector<std::vector<std::pair<std::size_t, std::size_t>>> out_edges(g.peers.size());
  std::vector<Units> remaining(flow.edge_count());
  for (std::size_t e = 0; e < flow.edge_count(); ++e) {
    remaining[e] = flow.flow_on(e);
    if (remaining[e] > 0) out_edges[flow.from_of(e)].emplace_back(flow.to_of(e), e);
  }
  while (true) {
    std::vector<std::size_t> via(g.peers.size(), SIZE_MAX);
    std::vector<bool> seen(g.peers.size(), false);
    std::vector<std::size_t> stack{0};
    seen[0] = true;
    while (!stack.empty() && !seen[1]) {
      const std::size_t u = stack.back();
      stack.pop_back();
      for (const auto& [v, e] : out_edges[u]) {
        if (remaining[e] > 0 && !seen[v]) {
          seen[v] = true;
          via[v] = e;
          stack.push_back(v);
        }
      }
    }
    if (!seen[1]) break;
    std::vector<std::size_t> path_edges;
    for (std::size_t v = 1; v != 0; v = flow.from_of(via[v])) path_edges.push_back(via[v]);
    std::reverse(path_edges.begin(), path_edges.end());
    Units amount = std::numeric_limits<Units>::max();
    for (const std::size_t e : path_edges) amount = std::min(amount, remaining[e]);
    FlowPath p;
    p.route.push_back(provider_target);
    for (const std::size_t e : path_edges) {
      remaining[e] -= amount;
      p.route.push_back(g.peers[flow.to_of(e)]);
    }
    p.amount = amount;
    out.push_back(std::move(p));
  }
  return out;
}

Units execute_plan(TrustLedger& ledger, const std::vector<FlowPath>& plan, Units wanted) {
  Units done = 0;
  for (const FlowPath& p : plan) {
    if (done >= wanted) break;
    const Units amount = std::min(p.amount, wanted - done);
    if (ledger.shift_trust(p.route, amount).committed) done += amount;
  }
  return done;
}

}  // namespace livecast::trust
