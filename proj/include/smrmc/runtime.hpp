#pragma once

#include <deque>
#include <mutex>
#include <unordered_map>
#include <vector>

#include "smrmc/observer.hpp"

namespace smrmc {

using ConfigId = uint32_t;
using EventId = uint32_t;

// Observer configurations over a fixed universe: the set of (valuation,
// location) pairs reachable on a history.  Configurations and events are
// interned and stepping is memoized, so program states can carry a config id.
// All members are safe to call from several threads.
class ObserverRuntime {
public:
    ObserverRuntime(Observer o, Universe u);

    const Observer& observer() const { return obs_; }
    const Universe& universe() const { return uni_; }

    size_t valuation_count() const { return vals_.size(); }
    const std::vector<Value>& valuation(size_t i) const { return vals_[i]; }

    ConfigId initial() const { return initial_; }
    EventId event_id(const Event& e);
    Event event(EventId e) const;

    ConfigId step(ConfigId c, EventId e);
    ConfigId step(ConfigId c, const Event& e) { return step(c, event_id(e)); }
    ConfigId run(ConfigId c, const History& h);
    bool accepting(ConfigId c) const;

    // packed (valuation << 8 | location), sorted
    std::vector<uint32_t> states(ConfigId c) const;
    ConfigId intern(std::vector<uint32_t> states);

    // Applies a permutation of address values (perm[i] is the image of
    // universe().addresses[i]) to every valuation in the configuration.
    ConfigId rename(ConfigId c, const std::vector<Value>& perm);
    // Swap of two address values (either may be kFresh).
    ConfigId swap(ConfigId c, Value a, Value b);

    // Representative continuation events whose frees only target a.
    const std::vector<EventId>& alphabet(Value a);

    // Drops states that cannot reach an accepting location on continuations
    // from alphabet(a); preserves the freeable set for a.
    ConfigId live(ConfigId c, Value a);

    struct Inclusion {
        bool included = true;
        History counterexample;  // in F(c1, a1) but not in F(c2, a2)
    };
    // Decides F(c1, a1) ⊆ F(c2, a2) exactly over the representative alphabet.
    Inclusion freeable_inclusion(ConfigId c1, Value a1, ConfigId c2, Value a2);
    bool freeable_included(ConfigId c1, ConfigId c2, Value a);

    size_t config_count() const;

private:
    struct Hash {
        size_t operator()(const std::vector<uint32_t>& v) const;
    };

    int kind_id(const std::string& k) const;
    size_t val_index(const std::vector<Value>& v) const;
    std::vector<uint32_t> live_locations(uint32_t val, Value a);
    std::vector<int> step_locations(uint32_t val, const std::vector<int>& locs, EventId e);
    bool location_included(uint32_t val, int l1, int l2, Value a);
    bool config_below(ConfigId c1, ConfigId c2, Value a);
    ConfigId difference(ConfigId x, ConfigId d);
    ConfigId intern_locked(std::vector<uint32_t>&& s);
    ConfigId remap(ConfigId c, const std::vector<std::pair<Value, Value>>& m);

    Observer obs_;
    Universe uni_;
    std::vector<std::vector<Value>> vals_;
    std::vector<std::vector<Value>> sort_values_;  // with fresh, per var
    std::vector<std::string> kinds_;
    // per location and kind: (guard, dst)
    std::vector<std::vector<std::vector<std::pair<const Guard*, int>>>> trans_;

    mutable std::recursive_mutex mu_;
    std::deque<std::vector<uint32_t>> configs_;
    std::deque<uint8_t> config_acc_;
    std::unordered_map<std::vector<uint32_t>, ConfigId, Hash> config_ids_;
    std::deque<Event> events_;
    std::unordered_map<std::string, EventId> event_ids_;
    std::unordered_map<uint64_t, ConfigId> step_memo_;
    std::unordered_map<uint64_t, ConfigId> live_memo_;
    std::unordered_map<uint64_t, std::vector<uint32_t>> live_locs_;
    std::unordered_map<Value, std::vector<EventId>> alphabets_;
    std::unordered_map<std::string, ConfigId> rename_memo_;
    std::unordered_map<std::string, bool> incl_memo_;
    std::unordered_map<uint64_t, bool> loc_incl_memo_;
    ConfigId initial_ = 0;
};

}  // namespace smrmc
