#pragma once

// Trust-based incentives: signed pseudonyms, mirrored trust accounts,
// random-walk account advertisements, max-flow over a local trust view and
// two-phase hop-by-hop trust shifting.
//
// Account (A about B) holds the contribution A received from B and still
// owes back. In a view it is the directed edge A -> B with that capacity.

#include <array>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "livecast/rng.hpp"
#include "livecast/types.hpp"

namespace livecast::trust {

using Units = std::int64_t;

// ---------------------------------------------------------------- identities

struct Pseudonym {
  std::array<std::uint8_t, 32> public_key{};
  friend auto operator<=>(const Pseudonym&, const Pseudonym&) = default;
};

using Signature = std::array<std::uint8_t, 64>;

enum class SignatureScheme { kEd25519, kKeyedHash };

std::string_view to_string(SignatureScheme s);
SignatureScheme signature_scheme_from_string(std::string_view text);

struct KeyPair {
  Pseudonym pseudonym;
  std::vector<std::uint8_t> secret;
};

/// Signing and verification behind one interface. kEd25519 uses libsodium's
/// Ed25519. kKeyedHash is the simulation stand-in: a BLAKE2b MAC whose keys
/// the suite keeps in a registry so any holder of the suite can verify.
class SignatureSuite {
 public:
  explicit SignatureSuite(SignatureScheme scheme);

  SignatureScheme scheme() const { return scheme_; }
  /// Deterministic key generation from a 64-bit seed.
  KeyPair generate(std::uint64_t seed);
  Signature sign(const KeyPair& key, std::span<const std::uint8_t> payload) const;
  bool verify(const Pseudonym& who, std::span<const std::uint8_t> payload, const Signature& sig) const;

  Signature sign(const KeyPair& key, std::string_view payload) const;
  bool verify(const Pseudonym& who, std::string_view payload, const Signature& sig) const;

 private:
  SignatureScheme scheme_;
  std::map<Pseudonym, std::vector<std::uint8_t>> mac_keys_;
};

// ------------------------------------------------------------------- ledger

struct ShiftOutcome {
  bool committed = false;
  /// Index i of the refusing hop (route[i] -> route[i+1]) when aborted.
  std::optional<std::size_t> refusing_hop;
};

/// Mirrored trust accounts for a population. Each account is recorded in the
/// books of both parties from the same receipt; the two copies are kept
/// identical and can be cross-checked.
class TrustLedger {
 public:
  Units balance(PeerId owner, PeerId counterparty) const;
  /// Balance minus amounts locked by pending shift reservations.
  Units available(PeerId owner, PeerId counterparty) const;

  /// Delivery of `price` worth of service from `sender` to `receiver`:
  /// redeems the sender's account about the receiver when it covers the
  /// price, otherwise records new debt of the receiver toward the sender.
  void credit(PeerId receiver, PeerId sender, Units price);

  struct ReservationId {
    std::uint64_t value = 0;
  };
  /// Reserve pass of a shift along route (route[0] = provider target,
  /// route.back() = beneficiary). Locks `amount` on each hop in turn; on a
  /// refusing hop every lock taken so far is released.
  std::optional<ReservationId> reserve(const std::vector<PeerId>& route, Units amount, SimTime expires_at,
                                       std::size_t* refusing_hop = nullptr);
  /// Commit pass: every hop balance drops by the amount and the provider
  /// target's account about the beneficiary grows by it.
  void commit(ReservationId id);
  void abort(ReservationId id);
  /// Releases reservations whose expiry is before `now`.
  std::size_t expire_reservations(SimTime now);
  std::size_t pending_reservations() const { return reservations_.size(); }

  /// reserve + commit in one step.
  ShiftOutcome shift_trust(const std::vector<PeerId>& route, Units amount);

  /// Sum owed to `peer` by others minus the sum `peer` owes others.
  Units net_position(PeerId peer) const;
  /// Accounts held by `owner` about others (non-zero only).
  std::map<PeerId, Units> accounts_of(PeerId owner) const;
  std::vector<PeerId> peers() const;
  std::size_t account_count() const { return owed_by_.size(); }

  /// Smallest balance ever written (0 for an untouched ledger).
  Units min_balance_observed() const { return min_seen_; }
  bool mirrors_consistent() const;

  /// CSV lines: owner,counterparty,balance,updated_at.
  std::string dump_csv() const;
  void set_clock(SimTime now) { now_ = now; }

 private:
  struct Account {
    Units balance = 0;
    Units reserved = 0;
    SimTime updated_at = 0.0;
  };
  struct Reservation {
    std::vector<PeerId> route;
    Units amount;
    SimTime expires_at;
  };

  void write(PeerId owner, PeerId counterparty, Units value);

  // Debtor's book and creditor's book of the same accounts.
  std::map<std::pair<PeerId, PeerId>, Account> owed_by_;   // (owner, counterparty)
  std::map<std::pair<PeerId, PeerId>, Units> owed_to_;     // (counterparty, owner)
  std::map<std::uint64_t, Reservation> reservations_;
  std::uint64_t next_reservation_ = 1;
  Units min_seen_ = 0;
  SimTime now_ = 0.0;
};

// ---------------------------------------------------------- authorization

struct AltruismParams {
  /// Units a provider grants to strangers per interval.
  Units budget = 4;
  SimTime interval_ms = 10000.0;
};

class AltruismBudget {
 public:
  explicit AltruismBudget(AltruismParams params = {}) : params_(params), remaining_(params.budget) {}
  /// Spends `price` from the current interval's budget if it covers it.
  bool try_spend(Units price, SimTime now);

 private:
  AltruismParams params_;
  Units remaining_;
  std::int64_t interval_index_ = 0;
};

/// Allow when the provider owes the requester at least `price`, otherwise
/// fall back to the provider's stranger budget.
bool authorize_service(const TrustLedger& ledger, PeerId provider, PeerId requester, Units price,
                       AltruismBudget& budget, SimTime now);

// ----------------------------------------------------------- advertisement

struct TrustAdvertisement {
  PeerId advertiser;
  std::vector<std::pair<PeerId, Units>> entries;
  SimTime issued_at = 0.0;
  std::vector<PeerId> visited;
  int ttl = 0;
  Signature signature{};
};

/// Bytes covered by the advertiser's signature.
std::string advertisement_payload(const TrustAdvertisement& ad);

TrustAdvertisement make_advertisement(const TrustLedger& ledger, PeerId advertiser, const KeyPair& key,
                                      const SignatureSuite& suite, SimTime now, int ttl);

/// Truncated self-avoiding walk. The current holder forwards to a non-visited
/// peer it owes, with probability proportional to that balance. Returns the
/// recipients in order; stops at ttl 0 or when no peer is eligible.
std::vector<PeerId> advertisement_walk(const TrustLedger& ledger, PeerId origin, int ttl, Rng& rng);

/// One hop choice of the walk, exposed for distribution tests.
std::optional<PeerId> choose_walk_hop(const TrustLedger& ledger, PeerId holder, const std::vector<PeerId>& visited,
                                      Rng& rng);

// -------------------------------------------------------------------- view

struct ViewEdge {
  Units capacity = 0;
  SimTime fresh_at = 0.0;
};

class TrustView {
 public:
  /// Accepts an advertisement after signature and loop checks. Entries from
  /// an older advertisement of the same advertiser never replace newer ones.
  bool accept(const TrustAdvertisement& ad, const Pseudonym& advertiser_key, const SignatureSuite& suite);
  /// Unsigned insertion, for ground-truth views in analysis and tests.
  void set_edge(PeerId from, PeerId to, Units capacity, SimTime fresh_at = 0.0);
  /// Drops edges older than now - horizon.
  void prune(SimTime now, SimTime horizon);

  const std::map<std::pair<PeerId, PeerId>, ViewEdge>& edges() const { return edges_; }
  bool has_node(PeerId p) const;
  std::uint64_t rejected() const { return rejected_; }

 private:
  std::map<std::pair<PeerId, PeerId>, ViewEdge> edges_;
  std::map<PeerId, SimTime> advertiser_time_;
  std::uint64_t rejected_ = 0;
};

/// Freshest advertisement per advertiser within the horizon.
TrustView build_trust_view(const std::vector<TrustAdvertisement>& ads,
                           const std::map<PeerId, Pseudonym>& keys, const SignatureSuite& suite, SimTime now,
                           SimTime horizon);

// -------------------------------------------------------------------- flow

/// Exact integer max-flow by FIFO push-relabel.
class MaxFlow {
 public:
  explicit MaxFlow(std::size_t nodes);
  /// Returns the edge index.
  std::size_t add_edge(std::size_t from, std::size_t to, Units capacity);
  Units run(std::size_t source, std::size_t sink);
  Units flow_on(std::size_t edge) const;
  std::size_t edge_count() const { return edges_.size() / 2; }
  std::size_t from_of(std::size_t edge) const { return edges_[2 * edge + 1].to; }
  std::size_t to_of(std::size_t edge) const { return edges_[2 * edge].to; }

 private:
  struct Arc {
    std::size_t to;
    Units cap;  // residual
  };
  std::size_t n_;
  std::vector<Arc> edges_;  // arc 2i is forward, 2i+1 its reverse
  std::vector<std::vector<std::size_t>> adj_;
  std::vector<Units> original_;
};

/// Max flow from provider target `r` to beneficiary `p` over the view.
Units max_shiftable(const TrustView& view, PeerId beneficiary, PeerId provider_target);

struct FlowPath {
  std::vector<PeerId> route;  // provider target first
  Units amount = 0;
};
/// Maximum flow decomposed into at most |edges| simple paths.
std::vector<FlowPath> shift_plan(const TrustView& view, PeerId beneficiary, PeerId provider_target);

/// Executes up to `wanted` units of the plan on the ledger, path by path,
/// each two-phase. Returns the units committed.
Units execute_plan(TrustLedger& ledger, const std::vector<FlowPath>& plan, Units wanted);

}  // namespace livecast::trust
