#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "hswarm/geometry.hpp"
#include "hswarm/rng.hpp"

namespace hswarm {

// Stigmergy key registry.
namespace keys {
inline constexpr std::string_view rho = "w.rho";
inline constexpr std::string_view fov = "w.fov";
inline constexpr std::string_view rfov = "w.rfov";
inline constexpr std::string_view mode = "w.mode";

inline std::string barrier(std::string_view state_tag, std::uint32_t guide_id) {
  std::string k = "b.";
  k += state_tag;
  k += '.';
  k += std::to_string(guide_id);
  return k;
}

inline bool is_worker_param(std::string_view key) { return key.starts_with("w."); }
}  // namespace keys

/// One replicated tuple. `stamp` is the tick at which the writer produced it.
struct StigmergyEntry {
  double value = 0.0;
  std::int64_t version = 0;
  std::uint32_t writer = 0;
  std::int64_t stamp = 0;

  friend bool operator==(const StigmergyEntry &, const StigmergyEntry &) = default;
};

/// True when `a` wins the merge against `b`: higher version, then higher writer.
inline bool supersedes(const StigmergyEntry &a, const StigmergyEntry &b) {
  if (a.version != b.version) return a.version > b.version;
  return a.writer > b.writer;
}

/// Per-robot replica of the virtual stigmergy. Merge is a join: per key the
/// entry with the larger (version, writer) survives, so merging is
/// commutative, associative and idempotent.
class StigmergyStore {
 public:
  using Map = std::map<std::string, StigmergyEntry, std::less<>>;

  const Map &entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  std::uint64_t fingerprint() const { return fingerprint_; }
  std::uint64_t revision() const { return revision_; }

  const StigmergyEntry *find(std::string_view key) const {
    auto it = entries_.find(key);
    return it == entries_.end() ? nullptr : &it->second;
  }

  std::optional<double> get(std::string_view key) const {
    if (const auto *e = find(key)) return e->value;
    return std::nullopt;
  }

  /// Local write; the new version is one past the version held locally.
  const StigmergyEntry &put(std::string_view key, double value, std::uint32_t self_id,
                            std::int64_t tick = 0) {
    auto it = entries_.find(key);
    StigmergyEntry e{value, 1, self_id, tick};
    if (it == entries_.end()) {
      it = entries_.emplace(std::string(key), e).first;
    } else {
      fingerprint_ ^= entry_hash(it->first, it->second);
      e.version = it->second.version + 1;
      it->second = e;
    }
    fingerprint_ ^= entry_hash(it->first, it->second);
    ++revision_;
    return it->second;
  }

  /// Merges one remote entry. Returns true if the local replica changed.
  bool merge_entry(std::string_view key, const StigmergyEntry &remote) {
    auto it = entries_.find(key);
    if (it == entries_.end()) {
      it = entries_.emplace(std::string(key), remote).first;
    } else {
      if (!supersedes(remote, it->second)) return false;
      fingerprint_ ^= entry_hash(it->first, it->second);
      it->second = remote;
    }
    fingerprint_ ^= entry_hash(it->first, it->second);
    ++revision_;
    return true;
  }

  /// Merges a whole remote replica. Replicas with equal fingerprints are
  /// treated as identical and skipped.
  bool merge(const StigmergyStore &remote) {
    if (remote.fingerprint_ == fingerprint_ && remote.size() == size()) return false;
    bool changed = false;
    auto it = entries_.begin();
    for (const auto &[key, entry] : remote.entries_) {
      while (it != entries_.end() && it->first < key) ++it;
      if (it != entries_.end() && it->first == key) {
        if (supersedes(entry, it->second)) {
          fingerprint_ ^= entry_hash(it->first, it->second);
          it->second = entry;
          fingerprint_ ^= entry_hash(it->first, it->second);
          changed = true;
        }
      } else {
        it = entries_.emplace_hint(it, key, entry);
        fingerprint_ ^= entry_hash(it->first, it->second);
        changed = true;
      }
    }
    if (changed) ++revision_;
    return changed;
  }

  friend bool operator==(const StigmergyStore &a, const StigmergyStore &b) {
    return a.entries_ == b.entries_;
  }

 private:
  static std::uint64_t mix(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  static std::uint64_t entry_hash(std::string_view key, const StigmergyEntry &e) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (char c : key) h = (h ^ static_cast<unsigned char>(c)) * 0x100000001b3ULL;
    h = mix(h ^ std::bit_cast<std::uint64_t>(e.value));
    h = mix(h ^ static_cast<std::uint64_t>(e.version));
    h = mix(h ^ e.writer);
    return mix(h ^ static_cast<std::uint64_t>(e.stamp));
  }

  Map entries_;
  std::uint64_t fingerprint_ = 0;
  std::uint64_t revision_ = 0;
};

inline void stigmergy_put(StigmergyStore &store, std::string_view key, double value,
                          std::uint32_t self_id, std::int64_t tick = 0) {
  store.put(key, value, self_id, tick);
}

inline bool stigmergy_merge(StigmergyStore &store, const StigmergyStore &remote) {
  return store.merge(remote);
}

inline void barrier_post(StigmergyStore &store, std::string_view state_tag,
                         std::uint32_t self_id, std::int64_t tick = 0) {
  if (store.find(keys::barrier(state_tag, self_id)) == nullptr)
    store.put(keys::barrier(state_tag, self_id), 1.0, self_id, tick);
}

inline bool barrier_check(const StigmergyStore &store, std::string_view state_tag,
                          std::span<const std::uint32_t> roster) {
  return std::all_of(roster.begin(), roster.end(), [&](std::uint32_t id) {
    return store.find(keys::barrier(state_tag, id)) != nullptr;
  });
}

/// Tick at which a released barrier takes effect: the latest post stamp plus
/// a settle allowance, so every guide that learns of the release in time
/// switches on the same tick. nullopt while not released.
inline std::optional<std::int64_t> barrier_effective_tick(const StigmergyStore &store,
                                                          std::string_view state_tag,
                                                          std::span<const std::uint32_t> roster,
                                                          std::int64_t settle_ticks) {
  std::int64_t latest = 0;
  for (std::uint32_t id : roster) {
    const auto *e = store.find(keys::barrier(state_tag, id));
    if (e == nullptr) return std::nullopt;
    latest = std::max(latest, e->stamp);
  }
  return latest + settle_ticks;
}

/// Local view of a barrier.
struct BarrierState {
  std::string state_tag;
  std::vector<std::uint32_t> ready;
  bool released = false;

  void refresh(const StigmergyStore &store, std::span<const std::uint32_t> roster) {
    ready.clear();
    for (std::uint32_t id : roster)
      if (store.find(keys::barrier(state_tag, id)) != nullptr) ready.push_back(id);
    released = released || ready.size() == roster.size();
  }
};

/// A received broadcast, expressed relative to the receiver.
struct Reception {
  std::uint32_t sender = 0;  // index into the outbox array
  Vec2 relative_position;    // sender minus receiver
  double bearing = 0.0;
};

/// Situated broadcast: each sender's message reaches every other robot within
/// d_com, each copy independently dropped with probability loss_rate.
/// `has_message[i]` selects which robots broadcast this round. Receivers are
/// handed relative geometry only.
inline std::vector<std::vector<Reception>> deliver(std::span<const bool> has_message,
                                                   std::span<const Vec2> positions, double d_com,
                                                   double loss_rate, Rng &rng) {
  const std::size_t n = positions.size();
  std::vector<std::vector<Reception>> inbox(n);
  const double r2 = d_com * d_com;
  for (std::size_t s = 0; s < n; ++s) {
    if (!has_message[s]) continue;
    for (std::size_t r = 0; r < n; ++r) {
      if (r == s) continue;
      const Vec2 rel = positions[s] - positions[r];
      if (norm_sq(rel) > r2) continue;
      if (loss_rate > 0.0 && rng.bernoulli(loss_rate)) continue;
      inbox[r].push_back({static_cast<std::uint32_t>(s), rel,
                          norm_sq(rel) > 0.0 ? angle_of(rel) : 0.0});
    }
  }
  return inbox;
}

}  // namespace hswarm
