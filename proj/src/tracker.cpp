#include "livecast/tracker.hpp"

#include <algorithm>

namespace livecast::tracker {

std::uint32_t KeyInterval::offset(CurveKey key, const CurveSpec& curve) const {
  const std::uint64_t k = curve.key_count();
  return static_cast<std::uint32_t>((key.value + k - begin.value) % k);
}

CurveKey KeyInterval::end(const CurveSpec& curve) const {
  return CurveKey{static_cast<std::uint32_t>((static_cast<std::uint64_t>(begin.value) + length) % curve.key_count())};
}

bool precedes(const KeyInterval& a, const KeyInterval& b, const CurveSpec& curve) {
  return a.end(curve) == b.begin && static_cast<std::uint64_t>(a.length) + b.length <= curve.key_count();
}

void TrackerParams::validate() const {
  if (load_low < 0) throw std::invalid_argument("tracker.load_low must be >= 0");
  if (load_low >= load_high) throw std::invalid_argument("tracker.load_low must be < tracker.load_high");
  if (!(refresh_interval_ms > 0.0)) throw std::invalid_argument("tracker.refresh_interval_ms must be > 0");
  if (!(peer_timeout_ms > 0.0)) throw std::invalid_argument("tracker.peer_timeout_ms must be > 0");
}

LocalTracker::LocalTracker(PeerId lt_id, StreamId stream, KeyInterval area, const TrackerParams& params,
                           const CurveSpec& curve)
    : lt_id_(lt_id), stream_(stream), area_(area), params_(params), curve_(curve) {
  params_.validate();
  if (area.length > curve.key_count()) throw std::invalid_argument("tracker area longer than the ring");
}

std::vector<PeerRecord> LocalTracker::register_peer(const PeerRecord& rec) {
  if (rec.upload_capacity_kbps < 0.0) throw std::invalid_argument("upload capacity must be >= 0");
  const CurveKey key = key_of(rec);
  if (!area_.contains(key, curve_)) {
    const std::uint64_t k = curve_.key_count();
    const std::uint64_t past_end = (key.value + k - area_.end(curve_).value) % k;
    const std::uint64_t before_begin = (area_.begin.value + k - key.value) % k;
    throw WrongArea(past_end < before_begin ? succ_ : pred_, key);
  }
  registry_.insert_or_assign(rec.peer_id, rec);
  std::vector<PeerRecord> out;
  out.reserve(registry_.size());
  for (const auto& [id, r] : registry_) out.push_back(r);
  return out;
}

bool LocalTracker::remove_peer(PeerId peer) { return registry_.erase(peer) != 0; }

std::size_t LocalTracker::expire_peers(SimTime now, SimTime timeout) {
  if (!(timeout > 0.0)) throw std::invalid_argument("expiry timeout must be > 0");
  return std::erase_if(registry_, [&](const auto& kv) { return kv.second.last_refresh < now - timeout; });
}

std::optional<SplitResult> split_area(const LocalTracker& lt) {
  if (!lt.overloaded()) throw std::invalid_argument("split requires registry size > load_high");
  const CurveSpec& curve = lt.curve();
  std::vector<std::uint32_t> offsets;
  offsets.reserve(lt.size());
  for (const auto& [id, rec] : lt.registry()) offsets.push_back(lt.area().offset(lt.key_of(rec), curve));
  std::sort(offsets.begin(), offsets.end());
  if (offsets.front() == offsets.back()) return std::nullopt;

  std::uint32_t cut = offsets[offsets.size() / 2];
  if (cut == offsets.front()) cut = *std::upper_bound(offsets.begin(), offsets.end(), offsets.front());

  const KeyInterval lower{lt.area().begin, cut};
  const KeyInterval upper{lower.end(curve), lt.area().length - cut};
  std::map<PeerId, PeerRecord> low_reg;
  std::map<PeerId, PeerRecord> up_reg;
  for (const auto& [id, rec] : lt.registry()) {
    (lt.area().offset(lt.key_of(rec), curve) < cut ? low_reg : up_reg).emplace(id, rec);
  }

  bool keep_lower;
  if (auto self = lt.registry().find(lt.lt_id()); self != lt.registry().end()) {
    keep_lower = low_reg.count(lt.lt_id()) != 0;
  } else {
    keep_lower = low_reg.size() >= up_reg.size();
  }
  const auto& other_reg = keep_lower ? up_reg : low_reg;
  const PeerRecord* leader = nullptr;
  for (const auto& [id, rec] : other_reg) {
    if (leader == nullptr || rec.upload_capacity_kbps > leader->upload_capacity_kbps) leader = &rec;
  }

  SplitResult out{LocalTracker(lt.lt_id(), lt.stream_id(), keep_lower ? lower : upper, lt.params_, curve),
                  LocalTracker(leader->peer_id, lt.stream_id(), keep_lower ? upper : lower, lt.params_, curve)};
  out.kept.registry_ = keep_lower ? std::move(low_reg) : std::move(up_reg);
  out.created.registry_ = other_reg;

  const bool was_full = lt.area().is_full(curve);
  LocalTracker& low = keep_lower ? out.kept : out.created;
  LocalTracker& up = keep_lower ? out.created : out.kept;
  low.pred_ = was_full ? up.lt_id() : lt.predecessor();
  low.succ_ = up.lt_id();
  up.pred_ = low.lt_id();
  up.succ_ = was_full ? low.lt_id() : lt.successor();
  return out;
}

LocalTracker absorb_area(const LocalTracker& lt, const LocalTracker& sibling) {
  const CurveSpec& curve = lt.curve();
  if (lt.stream_id() != sibling.stream_id()) throw std::invalid_argument("merge across streams");
  const bool lt_first = precedes(lt.area(), sibling.area(), curve);
  if (!lt_first && !precedes(sibling.area(), lt.area(), curve)) throw std::invalid_argument("merge of non-adjacent areas");
  const KeyInterval area{lt_first ? lt.area().begin : sibling.area().begin, lt.area().length + sibling.area().length};
  LocalTracker out(lt.lt_id(), lt.stream_id(), area, lt.params_, curve);
  out.registry_ = lt.registry_;
  for (const auto& [id, rec] : sibling.registry_) out.registry_.insert_or_assign(id, rec);
  if (!area.is_full(curve)) {
    out.pred_ = lt_first ? lt.pred_ : sibling.pred_;
    out.succ_ = lt_first ? sibling.succ_ : lt.succ_;
  }
  return out;
}

LocalTracker merge_areas(const LocalTracker& lt, const LocalTracker& sibling) {
  if (lt.size() + sibling.size() > static_cast<std::size_t>(lt.load_high())) {
    if (!precedes(lt.area(), sibling.area(), lt.curve()) && !precedes(sibling.area(), lt.area(), lt.curve())) {
      throw std::invalid_argument("merge of non-adjacent areas");
    }
    throw std::invalid_argument("merged registry would exceed load_high");
  }
  return absorb_area(lt, sibling);
}

StreamDirectory::StreamDirectory(StreamId stream, const CurveSpec& curve, const TrackerParams& params)
    : stream_(stream), curve_(curve), params_(params) {
  params_.validate();
}

void StreamDirectory::create_root(PeerId lt) {
  if (!trackers_.empty()) throw std::logic_error("stream already has trackers");
  trackers_.emplace(lt, LocalTracker(lt, stream_, KeyInterval::full(curve_), params_, curve_));
}

const LocalTracker& StreamDirectory::at(PeerId lt) const {
  auto it = trackers_.find(lt);
  if (it == trackers_.end()) throw std::out_of_range("unknown tracker " + std::to_string(lt.value));
  return it->second;
}

LocalTracker& StreamDirectory::mutable_at(PeerId lt) { return const_cast<LocalTracker&>(at(lt)); }

std::vector<PeerId> StreamDirectory::trackers() const {
  std::vector<PeerId> out;
  for (const auto& [id, t] : trackers_) out.push_back(id);
  return out;
}

PeerId StreamDirectory::responsible(CurveKey key) const {
  for (const auto& [id, t] : trackers_) {
    if (t.area().contains(key, curve_)) return id;
  }
  return kNoPeer;
}

StreamDirectory::Registration StreamDirectory::register_peer(PeerId first, const PeerRecord& rec) {
  Registration out;
  PeerId at_lt = first;
  for (std::size_t guard = 0; guard <= trackers_.size(); ++guard) {
    try {
      out.peers = mutable_at(at_lt).register_peer(rec);
      out.lt = at_lt;
      return out;
    } catch (const WrongArea& w) {
      out.redirects.push_back(at_lt);
      at_lt = w.redirect();
    }
  }
  throw std::logic_error("tracker redirect loop");
}

std::optional<StreamDirectory::SplitOutcome> StreamDirectory::split(PeerId lt) {
  const LocalTracker& orig = at(lt);
  if (!orig.overloaded()) return std::nullopt;
  auto result = split_area(orig);
  if (!result) return std::nullopt;

  SplitOutcome out{result->kept.lt_id(), result->created.lt_id(), {}};
  for (const auto& [id, rec] : result->created.registry()) out.moved.push_back(id);
  // Outside neighbours now border the created tracker.
  if (!orig.area().is_full(curve_)) {
    const bool created_after = result->created.predecessor() == out.kept;
    const PeerId outer = created_after ? result->created.successor() : result->created.predecessor();
    LocalTracker& o = mutable_at(outer);
    if (created_after) {
      o.set_neighbors(out.created, o.successor());
    } else {
      o.set_neighbors(o.predecessor(), out.created);
    }
  }
  trackers_.erase(lt);
  trackers_.emplace(out.kept, std::move(result->kept));
  trackers_.emplace(out.created, std::move(result->created));
  return out;
}

std::optional<StreamDirectory::MergeOutcome> StreamDirectory::try_merge(PeerId lt) {
  const LocalTracker& self = at(lt);
  if (!self.underloaded() || self.area().is_full(curve_)) return std::nullopt;
  const PeerId candidates[] = {self.predecessor(), self.successor()};
  PeerId sibling = kNoPeer;
  for (const PeerId c : candidates) {
    if (c == kNoPeer || c == lt) continue;
    const LocalTracker& s = at(c);
    if (self.size() + s.size() > static_cast<std::size_t>(params_.load_high)) continue;
    if (sibling == kNoPeer || s.size() < at(sibling).size() || (s.size() == at(sibling).size() && c < sibling)) {
      sibling = c;
    }
  }
  if (sibling == kNoPeer) return std::nullopt;

  const LocalTracker& sib = at(sibling);
  const bool self_survives = self.size() > sib.size() || (self.size() == sib.size() && lt < sibling);
  return merge_into(self_survives ? lt : sibling, self_survives ? sibling : lt);
}

StreamDirectory::MergeOutcome StreamDirectory::merge_into(PeerId survivor, PeerId retired) {
  LocalTracker merged = absorb_area(at(survivor), at(retired));
  MergeOutcome out{survivor, retired, {}};
  for (const auto& [id, rec] : at(retired).registry()) out.moved.push_back(id);
  trackers_.erase(retired);
  trackers_.erase(survivor);
  if (!merged.area().is_full(curve_)) {
    for (const PeerId outer : {merged.predecessor(), merged.successor()}) {
      LocalTracker& o = mutable_at(outer);
      o.set_neighbors(o.predecessor() == retired ? survivor : o.predecessor(),
                      o.successor() == retired ? survivor : o.successor());
    }
  }
  trackers_.emplace(survivor, std::move(merged));
  return out;
}

std::optional<StreamDirectory::MergeOutcome> StreamDirectory::hand_over(PeerId lt) {
  const LocalTracker& self = at(lt);
  if (trackers_.size() < 2) return std::nullopt;
  PeerId sibling = kNoPeer;
  for (const PeerId c : {self.predecessor(), self.successor()}) {
    if (sibling == kNoPeer || at(c).size() < at(sibling).size() || (at(c).size() == at(sibling).size() && c < sibling)) {
      sibling = c;
    }
  }
  return merge_into(sibling, lt);
}

StreamDirectory::Attempt StreamDirectory::register_at(PeerId lt, const PeerRecord& rec) {
  Attempt out;
  try {
    out.peers = mutable_at(lt).register_peer(rec);
    out.accepted = true;
  } catch (const WrongArea& w) {
    out.redirect = w.redirect();
  }
  return out;
}

bool StreamDirectory::remove_peer(PeerId lt, PeerId peer) { return mutable_at(lt).remove_peer(peer); }

std::size_t StreamDirectory::expire(PeerId lt, SimTime now) {
  return mutable_at(lt).expire_peers(now, params_.peer_timeout_ms);
}

PeerId StreamDirectory::tracker_of(PeerId peer) const {
  for (const auto& [id, t] : trackers_) {
    if (t.registry().count(peer) != 0) return id;
  }
  return kNoPeer;
}

bool StreamDirectory::check_invariants(std::string* why) const {
  auto fail = [&](const std::string& msg) {
    if (why != nullptr) *why = msg;
    return false;
  };
  if (trackers_.empty()) return true;
  std::uint64_t total = 0;
  std::map<PeerId, PeerId> owner;
  for (const auto& [id, t] : trackers_) {
    total += t.area().length;
    if (t.area().length == 0) return fail("empty area at tracker " + std::to_string(id.value));
    for (const auto& [pid, rec] : t.registry()) {
      if (!t.area().contains(t.key_of(rec), curve_)) return fail("peer outside its tracker's area");
      if (!owner.emplace(pid, id).second) return fail("peer " + std::to_string(pid.value) + " registered twice");
    }
    if (trackers_.size() == 1) {
      if (!t.area().is_full(curve_)) return fail("single tracker does not cover the ring");
      continue;
    }
    if (!contains(t.successor()) || !contains(t.predecessor())) return fail("dangling tracker link");
    if (!precedes(t.area(), at(t.successor()).area(), curve_)) return fail("gap or overlap after tracker " + std::to_string(id.value));
    if (at(t.successor()).predecessor() != id) return fail("asymmetric tracker links");
  }
  if (total != curve_.key_count()) return fail("areas do not sum to the ring");
  return true;
}

}  // namespace livecast::tracker
